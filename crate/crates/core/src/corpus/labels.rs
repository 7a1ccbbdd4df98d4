use std::collections::BTreeSet;

use super::{CorpusError, Sentence};

/// Label inventory read from data: `O`, then `B-T`, `I-T` per type in
/// ascending type order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn from_types<S: AsRef<str>>(types: &[S]) -> Self {
        let types: BTreeSet<&str> = types.iter().map(AsRef::as_ref).collect();
        let mut labels = vec!["O".to_string()];
        for t in types {
            labels.push(format!("B-{t}"));
            labels.push(format!("I-{t}"));
        }
        Self { labels }
    }

    pub fn from_corpus(sentences: &[Sentence]) -> Self {
        let types: Vec<&str> = sentences
            .iter()
            .flat_map(|s| &s.labels)
            .filter_map(|l| l.get(2..).filter(|_| l != "O"))
            .collect();
        Self::from_types(&types)
    }

    /// Parses the comma-separated form written by [`LabelSet::to_line`].
    pub fn from_line(line: &str) -> Result<Self, CorpusError> {
        let labels: Vec<String> = line.split(',').map(str::to_string).collect();
        if labels.first().map(String::as_str) != Some("O") {
            return Err(CorpusError::Config(format!("label list must start with O: {line}")));
        }
        if let Some(bad) = labels.iter().find(|l| !super::is_bio_tag(l)) {
            return Err(CorpusError::UnknownLabel(bad.clone()));
        }
        Ok(Self { labels })
    }

    pub fn to_line(&self) -> String {
        self.labels.join(",")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn name(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn outside(&self) -> usize {
        0
    }

    /// True for `B-*`/`I-*` label ids.
    pub fn is_entity(&self, id: usize) -> bool {
        id != 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }
}
