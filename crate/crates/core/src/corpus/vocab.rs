use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use super::{CorpusError, Sentence};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

/// Ids of the reserved pieces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: usize,
    pub unk: usize,
    pub cls: usize,
    pub sep: usize,
    pub mask: usize,
}

/// Subword inventory with dense ids; the five specials come first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
    max_piece_chars: usize,
}

impl Vocabulary {
    fn from_pieces(pieces: Vec<String>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if index.insert(p.clone(), i).is_some() {
                return Err(CorpusError::Vocabulary(format!("duplicate piece '{p}'")));
            }
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if index.get(*s) != Some(&i) {
                return Err(CorpusError::Vocabulary(format!("special {s} must have id {i}")));
            }
        }
        let max_piece_chars = pieces
            .iter()
            .skip(SPECIALS.len())
            .map(|p| p.chars().count())
            .max()
            .unwrap_or(1);
        Ok(Self {
            pieces,
            index,
            max_piece_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: usize) -> Option<&str> {
        self.pieces.get(id).map(String::as_str)
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.index.contains_key(piece)
    }

    pub fn specials(&self) -> SpecialIds {
        SpecialIds {
            pad: 0,
            unk: 1,
            cls: 2,
            sep: 3,
            mask: 4,
        }
    }

    /// One piece per line, in id order.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.pieces {
            writeln!(out, "{p}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut pieces = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| CorpusError::Io { line: i + 1, source })?;
            pieces.push(line);
        }
        Self::from_pieces(pieces)
    }
}

/// Learns a subword vocabulary by greedy pair merging over the words of
/// `corpus`, starting from its character inventory.
///
/// The most frequent adjacent pair is merged first; ties go to the
/// lexicographically smallest pair. Merging stops at `target_size` or when
/// no pair occurs at least twice.
pub fn learn_vocab(corpus: &[Sentence], target_size: usize) -> Result<Vocabulary, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Vocabulary("empty corpus".into()));
    }
    let mut word_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for s in corpus {
        for t in &s.tokens {
            *word_freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let chars: BTreeSet<char> = word_freq.keys().flat_map(|w| w.chars()).collect();
    let minimum = SPECIALS.len() + chars.len();
    if target_size < minimum {
        return Err(CorpusError::Config(format!(
            "vocabulary size {target_size} is below the {minimum} specials and characters"
        )));
    }

    let mut pieces: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    pieces.extend(chars.iter().map(|c| c.to_string()));
    let mut known: BTreeSet<String> = pieces.iter().cloned().collect();

    let mut words: Vec<(Vec<String>, usize)> = word_freq
        .iter()
        .map(|(w, &f)| (w.chars().map(|c| c.to_string()).collect(), f))
        .collect();

    while pieces.len() < target_size {
        let mut pair_freq: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (symbols, freq) in &words {
            for pair in symbols.windows(2) {
                *pair_freq.entry((&pair[0], &pair[1])).or_default() += freq;
            }
        }
        // BTreeMap iteration is ascending, so keeping the first strict maximum
        // breaks ties toward the smallest pair.
        let mut best: Option<((&str, &str), usize)> = None;
        for (pair, &f) in &pair_freq {
            if best.is_none_or(|(_, bf)| f > bf) {
                best = Some((*pair, f));
            }
        }
        let Some(((left, right), freq)) = best else { break };
        if freq < 2 {
            break;
        }
        let (left, right) = (left.to_string(), right.to_string());
        let merged = format!("{left}{right}");
        for (symbols, _) in &mut words {
            let mut i = 0;
            while i + 1 < symbols.len() {
                if symbols[i] == left && symbols[i + 1] == right {
                    symbols[i] = merged.clone();
                    symbols.remove(i + 1);
                }
                i += 1;
            }
        }
        if known.insert(merged.clone()) {
            pieces.push(merged);
        }
    }
    Vocabulary::from_pieces(pieces)
}

/// A sentence as model input: `[CLS] pieces... [SEP]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubwordSequence {
    pub piece_ids: Vec<usize>,
    pub first_piece: Vec<bool>,
    /// Source word of each position; `None` on specials.
    pub word_index: Vec<Option<usize>>,
}

impl SubwordSequence {
    pub fn len(&self) -> usize {
        self.piece_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.piece_ids.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.first_piece.iter().filter(|&&f| f).count()
    }
}

/// Greedy longest-match decomposition of one word.
pub fn split_word(word: &str, vocab: &Vocabulary) -> Vec<usize> {
    let chars: Vec<char> = word.chars().collect();
    let unk = vocab.specials().unk;
    let mut out = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let longest = vocab.max_piece_chars.min(chars.len() - start);
        let mut matched = None;
        for len in (1..=longest).rev() {
            let candidate: String = chars[start..start + len].iter().collect();
            if let Some(id) = vocab.id(&candidate) {
                matched = Some((id, len));
                break;
            }
        }
        match matched {
            Some((id, len)) => {
                out.push(id);
                start += len;
            }
            None => {
                out.push(unk);
                start += 1;
            }
        }
    }
    if out.is_empty() {
        out.push(unk);
    }
    out
}

pub fn tokenize(sentence: &Sentence, vocab: &Vocabulary) -> SubwordSequence {
    tokenize_words(&sentence.tokens, vocab)
}

pub fn tokenize_words<S: AsRef<str>>(words: &[S], vocab: &Vocabulary) -> SubwordSequence {
    let sp = vocab.specials();
    let mut piece_ids = vec![sp.cls];
    let mut first_piece = vec![false];
    let mut word_index = vec![None];
    for (w, word) in words.iter().enumerate() {
        for (k, id) in split_word(word.as_ref(), vocab).into_iter().enumerate() {
            piece_ids.push(id);
            first_piece.push(k == 0);
            word_index.push(Some(w));
        }
    }
    piece_ids.push(sp.sep);
    first_piece.push(false);
    word_index.push(None);
    SubwordSequence {
        piece_ids,
        first_piece,
        word_index,
    }
}
