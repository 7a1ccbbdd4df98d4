//! Paired synthetic "languages" for desk-scale cross-lingual experiments.
//!
//! Both languages render the same sentence templates. Context is a fixed
//! function-word lexicon plus an open class of lowercase filler words built
//! from the same syllables as entity names, so an unfamiliar word is not by
//! itself evidence of an entity. Each lexical item of the target language is
//! either shared verbatim with the source or rewritten. Context words are
//! shared with probability `overlap`; the rest gain a suffix, so they still
//! share their leading subwords with the source form.
//! Entity stems are shared with probability `overlap²`; the rest pass
//! through a letter permutation plus the suffix, giving language-specific
//! surface forms whose type must be read from context.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{write_conll, Sentence};
use crate::error::{Error, Result};
use crate::rng::{mix, purpose, stream_rng, StreamRng};

pub const SOURCE_FILE: &str = "source.conll";
pub const TARGET_TEST_FILE: &str = "target_test.conll";
pub const TARGET_TRAIN_FILE: &str = "target_train.conll";

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub entity_types: Vec<String>,
    pub stems_per_type: usize,
    pub source_size: usize,
    pub target_test_size: usize,
    pub target_train_size: usize,
    pub overlap: f64,
    /// Size of the open class of lowercase filler words.
    pub fillers: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            entity_types: vec!["PER".into(), "LOC".into(), "ORG".into()],
            stems_per_type: 60,
            source_size: 2000,
            target_test_size: 500,
            target_train_size: 100,
            overlap: 0.5,
            fillers: 300,
            seed: 0,
        }
    }
}

const TEMPLATES: &[&str] = &[
    "{PER} was selected to replace {PER} at the head of {ORG} .",
    "{LOC} {NUM} {MONTH} ( {ORG} ) - shares of the {W} rose on {DAY} .",
    "{LOC} {NUM} {MONTH} - the {W} ended without a {W} .",
    "\" we will not {W} now \" , said {PER} of {ORG} .",
    "\" the {W} is calm \" , {PER} told reporters .",
    "{PER} arrived in {LOC} on {DAY} .",
    "{ORG} {W} fell in {LOC} trading .",
    "the {W} of {LOC} met {PER} on {DAY} .",
    "{PER} , the {W} of {ORG} , spoke in {LOC} .",
    "{ORG} signed a {W} with {ORG} last {MONTH} .",
    "police in {LOC} said {PER} was {W} .",
    "{PER} scored twice as {ORG} beat {ORG} {NUM} - {NUM} .",
    "the {W} in {LOC} ended , {PER} said .",
    "{ORG} will open a new {W} in {LOC} next {MONTH} .",
    "{PER} and {PER} will visit {LOC} .",
    "a {W} for {ORG} declined to comment .",
    "the {W} in {LOC} was cold on {DAY} .",
    "{W} were steady on {DAY} .",
    "{PER} joined {ORG} in {NUM} .",
    "troops left {LOC} after {NUM} {W} .",
];

const PREFIXES: &[&str] = &["meanwhile ,", "on {DAY} ,", "earlier ,", "in {MONTH} ,"];

const MONTHS: &[&str] = &[
    "january", "february", "march", "april", "may", "june", "july", "august", "september",
    "october", "november", "december",
];
const DAYS: &[&str] = &["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const TARGET_SUFFIX: &str = "ek";

/// Surface rendering rules of the target language.
#[derive(Clone, Debug)]
struct TargetLanguage {
    permutation: [u8; 26],
    shared_words: HashMap<String, bool>,
    shared_stems: Vec<Vec<bool>>,
}

impl TargetLanguage {
    fn transform(&self, word: &str) -> String {
        let mut out: String = word
            .chars()
            .map(|c| {
                if c.is_ascii_lowercase() {
                    self.permutation[(c as u8 - b'a') as usize] as char
                } else if c.is_ascii_uppercase() {
                    (self.permutation[(c as u8 - b'A') as usize] as char).to_ascii_uppercase()
                } else {
                    c
                }
            })
            .collect();
        out.push_str(TARGET_SUFFIX);
        out
    }

    /// Context words keep their letters and gain the suffix.
    fn inflect(&self, word: &str) -> String {
        format!("{word}{TARGET_SUFFIX}")
    }

    fn word(&self, word: &str) -> String {
        if self.shared_words.get(word).copied().unwrap_or(true) {
            word.to_string()
        } else {
            self.inflect(word)
        }
    }

    fn stem(&self, ty: usize, idx: usize, stem: &str) -> String {
        if self.shared_stems[ty][idx] {
            stem.to_string()
        } else {
            self.transform(stem)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Language {
    Source,
    Target,
}

/// Generated corpora plus the inventories needed to invert entity forms.
#[derive(Clone, Debug)]
pub struct SynthBench {
    pub source: Vec<Sentence>,
    pub target_test: Vec<Sentence>,
    pub target_train: Vec<Sentence>,
    types: Vec<String>,
    stems: Vec<Vec<String>>,
    fillers: Vec<String>,
    target: TargetLanguage,
}

fn is_alphabetic_word(w: &str) -> bool {
    w.chars().all(|c| c.is_ascii_alphabetic())
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

fn syllable_word(rng: &mut StreamRng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut s = String::new();
    for _ in 0..syllables {
        s.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
        s.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
    }
    if rng.random_bool(0.3) {
        s.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
    }
    s
}

/// Distinct lowercase words: `pools` groups of `count`, none in `taken`.
fn make_words(pools: usize, count: usize, taken: &mut BTreeSet<String>, rng: &mut StreamRng) -> Vec<Vec<String>> {
    let mut out = vec![Vec::with_capacity(count); pools];
    for pool in &mut out {
        while pool.len() < count {
            let w = syllable_word(rng);
            if taken.insert(w.clone()) {
                pool.push(w);
            }
        }
    }
    out
}

/// Letter substitution that maps vowels to vowels, stem consonants to stem
/// consonants and the remaining letters among themselves.
fn letter_permutation(rng: &mut StreamRng) -> [u8; 26] {
    let mut permutation: [u8; 26] = std::array::from_fn(|i| b'a' + i as u8);
    let others: Vec<u8> = (b'a'..=b'z')
        .filter(|c| !VOWELS.contains(c) && !CONSONANTS.contains(c))
        .collect();
    for class in [VOWELS, CONSONANTS, others.as_slice()] {
        let mut image = class.to_vec();
        image.shuffle(rng);
        for (&from, &to) in class.iter().zip(&image) {
            permutation[(from - b'a') as usize] = to;
        }
    }
    permutation
}

fn lexicon() -> BTreeSet<String> {
    TEMPLATES
        .iter()
        .chain(PREFIXES)
        .flat_map(|t| t.split_whitespace())
        .chain(MONTHS.iter().copied())
        .chain(DAYS.iter().copied())
        .filter(|w| !w.starts_with('{') && is_alphabetic_word(w))
        .map(str::to_string)
        .collect()
}

fn key_of(word: &str) -> u64 {
    mix(&word.bytes().map(u64::from).collect::<Vec<_>>())
}

impl SynthBench {
    pub fn generate(cfg: &SynthConfig) -> Result<Self> {
        if cfg.source_size == 0 || cfg.target_test_size == 0 {
            return Err(Error::Config("synthetic corpus sizes must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&cfg.overlap) {
            return Err(Error::Config(format!("overlap must lie in [0, 1], got {}", cfg.overlap)));
        }
        if cfg.stems_per_type < 4 {
            return Err(Error::Config(format!(
                "stem inventory of {} per type is too small (need at least 4)",
                cfg.stems_per_type
            )));
        }
        if cfg.stems_per_type * cfg.entity_types.len() + cfg.fillers > 50_000 {
            return Err(Error::Config("stem inventory exceeds the syllable space".into()));
        }
        let types: Vec<String> = cfg.entity_types.clone();
        let type_set: BTreeSet<&str> = types.iter().map(String::as_str).collect();
        if type_set.len() != types.len() || types.is_empty() {
            return Err(Error::Config("entity types must be distinct and non-empty".into()));
        }
        let templates: Vec<&str> = TEMPLATES
            .iter()
            .copied()
            .filter(|t| {
                t.split_whitespace()
                    .filter_map(|w| w.strip_prefix('{').and_then(|w| w.strip_suffix('}')))
                    .all(|slot| {
                        matches!(slot, "NUM" | "MONTH" | "DAY") || (slot == "W" && cfg.fillers > 0) || type_set.contains(slot)
                    })
            })
            .collect();
        if templates.is_empty() {
            return Err(Error::Config("no template fits the requested entity types".into()));
        }

        let mut taken = lexicon();
        let stems: Vec<Vec<String>> = make_words(
            types.len(),
            cfg.stems_per_type,
            &mut taken,
            &mut stream_rng(&[purpose::SYNTH, cfg.seed, 1]),
        )
        .into_iter()
        .map(|pool| pool.iter().map(|w| capitalize(w)).collect())
        .collect();
        let fillers = make_words(1, cfg.fillers, &mut taken, &mut stream_rng(&[purpose::SYNTH, cfg.seed, 6]))
            .pop()
            .expect("one pool");
        let permutation = letter_permutation(&mut stream_rng(&[purpose::SYNTH, cfg.seed, 2]));
        let shared_words = lexicon()
            .into_iter()
            .chain(fillers.iter().cloned())
            .map(|w| {
                let u: f64 = stream_rng(&[purpose::SYNTH, cfg.seed, 3, key_of(&w)]).random();
                (w, u < cfg.overlap)
            })
            .collect();
        let stem_overlap = cfg.overlap * cfg.overlap;
        let shared_stems = (0..types.len())
            .map(|t| {
                (0..cfg.stems_per_type)
                    .map(|i| {
                        let u: f64 =
                            stream_rng(&[purpose::SYNTH, cfg.seed, 4, t as u64, i as u64]).random();
                        u < stem_overlap
                    })
                    .collect()
            })
            .collect();
        let target = TargetLanguage {
            permutation,
            shared_words,
            shared_stems,
        };
        let mut bench = SynthBench {
            source: Vec::new(),
            target_test: Vec::new(),
            target_train: Vec::new(),
            types,
            stems,
            fillers,
            target,
        };
        let zipf = |n: usize| WeightedIndex::new((0..n.max(1)).map(|r| 1.0 / (r as f64 + 1.0))).expect("positive weights");
        let (stem_zipf, filler_zipf) = (zipf(cfg.stems_per_type), zipf(cfg.fillers));
        let render = |lang: Language, n: usize, tag: u64| -> Vec<Sentence> {
            let mut rng = stream_rng(&[purpose::SYNTH, cfg.seed, 5, tag]);
            (0..n)
                .map(|id| bench.sentence(id, lang, &templates, (&stem_zipf, &filler_zipf), &mut rng))
                .collect()
        };
        let source = render(Language::Source, cfg.source_size, 0);
        let target_test = render(Language::Target, cfg.target_test_size, 1);
        let target_train = render(Language::Target, cfg.target_train_size, 2);
        bench.source = source;
        bench.target_test = target_test;
        bench.target_train = target_train;
        Ok(bench)
    }

    fn sentence(
        &self,
        id: usize,
        lang: Language,
        templates: &[&str],
        (stem_zipf, filler_zipf): (&WeightedIndex<f64>, &WeightedIndex<f64>),
        rng: &mut StreamRng,
    ) -> Sentence {
        let mut tokens = Vec::new();
        let mut labels = Vec::new();
        let mut pattern = String::new();
        if rng.random_bool(0.25) {
            pattern.push_str(PREFIXES[rng.random_range(0..PREFIXES.len())]);
            pattern.push(' ');
        }
        pattern.push_str(templates[rng.random_range(0..templates.len())]);
        for piece in pattern.split_whitespace() {
            match piece.strip_prefix('{').and_then(|p| p.strip_suffix('}')) {
                Some("NUM") => {
                    tokens.push(rng.random_range(1..=31).to_string());
                    labels.push("O".to_string());
                }
                Some("MONTH") => {
                    tokens.push(self.render_word(lang, MONTHS[rng.random_range(0..MONTHS.len())]));
                    labels.push("O".to_string());
                }
                Some("DAY") => {
                    tokens.push(self.render_word(lang, DAYS[rng.random_range(0..DAYS.len())]));
                    labels.push("O".to_string());
                }
                Some("W") => {
                    tokens.push(self.render_word(lang, &self.fillers[filler_zipf.sample(rng)]));
                    labels.push("O".to_string());
                }
                Some(slot) => {
                    let ty = self.types.iter().position(|t| t == slot).expect("filtered");
                    let words = if rng.random_bool(0.4) { 2 } else { 1 };
                    for w in 0..words {
                        let idx = stem_zipf.sample(rng);
                        tokens.push(self.render_stem(lang, ty, idx));
                        let prefix = if w == 0 { "B" } else { "I" };
                        labels.push(format!("{prefix}-{slot}"));
                    }
                }
                None => {
                    tokens.push(self.render_word(lang, piece));
                    labels.push("O".to_string());
                }
            }
        }
        Sentence::new(id, tokens, labels)
    }

    fn render_word(&self, lang: Language, word: &str) -> String {
        match lang {
            Language::Source => word.to_string(),
            Language::Target => self.target.word(word),
        }
    }

    fn render_stem(&self, lang: Language, ty: usize, idx: usize) -> String {
        let stem = &self.stems[ty][idx];
        match lang {
            Language::Source => stem.clone(),
            Language::Target => self.target.stem(ty, idx, stem),
        }
    }

    pub fn entity_types(&self) -> &[String] {
        &self.types
    }

    pub fn stems(&self, entity_type: &str) -> Option<&[String]> {
        let t = self.types.iter().position(|x| x == entity_type)?;
        Some(&self.stems[t])
    }

    /// Maps an entity surface form back to its type and stem.
    pub fn invert(&self, lang: Language, surface: &str) -> Option<(&str, &str)> {
        for (t, pool) in self.stems.iter().enumerate() {
            for (i, stem) in pool.iter().enumerate() {
                let form = match lang {
                    Language::Source => stem.clone(),
                    Language::Target => self.target.stem(t, i, stem),
                };
                if form == surface {
                    return Some((&self.types[t], stem));
                }
            }
        }
        None
    }

    /// Fraction of context-word types rendered verbatim in the target.
    pub fn shared_word_fraction(&self) -> f64 {
        let n = self.target.shared_words.len();
        self.target.shared_words.values().filter(|&&s| s).count() as f64 / n as f64
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, set) in [
            (SOURCE_FILE, &self.source),
            (TARGET_TEST_FILE, &self.target_test),
            (TARGET_TRAIN_FILE, &self.target_train),
        ] {
            let mut buf = Vec::new();
            write_conll(&mut buf, set)?;
            fs::write(dir.join(name), buf)?;
        }
        Ok(())
    }
}

/// Entity count per type over a corpus.
pub fn type_histogram(sentences: &[Sentence]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for s in sentences {
        for span in crate::evaluation::extract_spans(&s.labels) {
            *out.entry(span.entity_type).or_insert(0) += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::extract_spans;

    fn small(overlap: f64) -> SynthConfig {
        SynthConfig {
            source_size: 500,
            target_test_size: 200,
            target_train_size: 25,
            overlap,
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn sizes_are_exact() {
        let b = SynthBench::generate(&small(0.5)).unwrap();
        assert_eq!((b.source.len(), b.target_test.len(), b.target_train.len()), (500, 200, 25));
    }

    #[test]
    fn labels_are_valid_bio_and_forms_invert() {
        let b = SynthBench::generate(&small(0.5)).unwrap();
        for (lang, set) in [(Language::Source, &b.source), (Language::Target, &b.target_test)] {
            for s in set.iter() {
                for (i, l) in s.labels.iter().enumerate() {
                    if let Some(t) = l.strip_prefix("I-") {
                        let prev = &s.labels[i - 1];
                        assert!(prev == &format!("B-{t}") || prev == l, "orphan {l}");
                    }
                }
                for span in extract_spans(&s.labels) {
                    for w in &s.tokens[span.start..=span.end] {
                        let (ty, _) = b.invert(lang, w).expect("known stem");
                        assert_eq!(ty, span.entity_type);
                    }
                }
            }
        }
    }

    #[test]
    fn full_overlap_reproduces_source_distribution() {
        let b = SynthBench::generate(&small(1.0)).unwrap();
        let source_words: BTreeSet<&String> = b.source.iter().flat_map(|s| &s.tokens).collect();
        let foreign = b
            .target_test
            .iter()
            .flat_map(|s| &s.tokens)
            .filter(|w| !source_words.contains(w) && w.parse::<u32>().is_err())
            .count();
        let total: usize = b.target_test.iter().map(|s| s.len()).sum();
        assert!((foreign as f64) < 0.02 * total as f64, "{foreign} of {total}");
        assert_eq!(b.shared_word_fraction(), 1.0);
    }

    #[test]
    fn overlap_controls_sharing_monotonically() {
        let fractions: Vec<f64> = [0.0, 0.3, 0.6, 1.0]
            .iter()
            .map(|&o| SynthBench::generate(&small(o)).unwrap().shared_word_fraction())
            .collect();
        assert_eq!(fractions[0], 0.0);
        assert!(fractions.windows(2).all(|w| w[0] <= w[1]), "{fractions:?}");
    }

    #[test]
    fn deterministic_under_seed() {
        let a = SynthBench::generate(&small(0.5)).unwrap();
        let b = SynthBench::generate(&small(0.5)).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.target_test, b.target_test);
    }

    #[test]
    fn configuration_errors() {
        assert!(SynthBench::generate(&SynthConfig { stems_per_type: 2, ..small(0.5) }).is_err());
        assert!(SynthBench::generate(&SynthConfig { source_size: 0, ..small(0.5) }).is_err());
        assert!(SynthBench::generate(&SynthConfig { overlap: 1.5, ..small(0.5) }).is_err());
        let only_per = SynthConfig { entity_types: vec!["PER".into()], ..small(0.5) };
        let b = SynthBench::generate(&only_per).unwrap();
        assert_eq!(type_histogram(&b.source).keys().collect::<Vec<_>>(), vec!["PER"]);
    }
}
