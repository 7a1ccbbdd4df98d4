//! CoNLL column data, subword vocabulary, tokenization and windowing.

mod conll;
mod labels;
mod vocab;
mod window;

use thiserror::Error;

pub use conll::{
    count_entities, is_bio_tag, parse_conll, parse_conll_str, relabel_misc, write_conll,
    write_predictions, ColumnSpec, Sentence,
};
pub use labels::LabelSet;
pub use vocab::{
    learn_vocab, split_word, tokenize, tokenize_words, SpecialIds, SubwordSequence, Vocabulary,
    CLS, MASK, PAD, SEP, UNK,
};
pub use window::{make_windows, Window, DEFAULT_CONTEXT_LEN, DEFAULT_MAX_LEN};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: expected at least {needed} columns, found {found}")]
    MissingColumn {
        line: usize,
        needed: usize,
        found: usize,
    },
    #[error("line {line}: invalid BIO tag '{tag}'")]
    InvalidTag { line: usize, tag: String },
    #[error("line {line}: {source}")]
    Io {
        line: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown label '{0}'")]
    UnknownLabel(String),
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("configuration: {0}")]
    Config(String),
}

/// A sentence prepared for the model: subwords, windows and label ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSentence {
    pub id: usize,
    pub seq: SubwordSequence,
    pub windows: Vec<Window>,
    /// Label id per word.
    pub word_labels: Vec<usize>,
}

impl EncodedSentence {
    pub fn new(
        sentence: &Sentence,
        vocab: &Vocabulary,
        labels: &LabelSet,
        max_len: usize,
        context_len: usize,
    ) -> Result<Self, CorpusError> {
        let seq = tokenize(sentence, vocab);
        let windows = make_windows(seq.len(), max_len, context_len);
        let word_labels = sentence
            .labels
            .iter()
            .map(|l| labels.id(l).ok_or_else(|| CorpusError::UnknownLabel(l.clone())))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            id: sentence.id,
            seq,
            windows,
            word_labels,
        })
    }

    pub fn word_count(&self) -> usize {
        self.word_labels.len()
    }
}

pub fn encode_corpus(
    sentences: &[Sentence],
    vocab: &Vocabulary,
    labels: &LabelSet,
    max_len: usize,
    context_len: usize,
) -> Result<Vec<EncodedSentence>, CorpusError> {
    sentences
        .iter()
        .map(|s| EncodedSentence::new(s, vocab, labels, max_len, context_len))
        .collect()
}
