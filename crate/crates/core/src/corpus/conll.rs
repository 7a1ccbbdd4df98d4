use std::io::{BufRead, Write};

use super::CorpusError;

/// One labeled sentence in BIO format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub id: usize,
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
}

impl Sentence {
    pub fn new(id: usize, tokens: Vec<String>, labels: Vec<String>) -> Self {
        assert_eq!(tokens.len(), labels.len(), "tokens and labels must align");
        Self { id, tokens, labels }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Which columns carry the token and the tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColumnSpec {
    pub token: usize,
    /// `None` selects the last column of each line.
    pub label: Option<usize>,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            token: 0,
            label: None,
        }
    }
}

/// `O`, `B-T` or `I-T` with a non-empty type.
pub fn is_bio_tag(tag: &str) -> bool {
    tag == "O"
        || tag
            .strip_prefix("B-")
            .or_else(|| tag.strip_prefix("I-"))
            .is_some_and(|t| !t.is_empty())
}

/// Reads CoNLL column data. Blank lines end sentences; `-DOCSTART-` lines
/// are skipped. Sentence ids are assigned in file order from zero.
pub fn parse_conll<R: BufRead>(reader: R, columns: ColumnSpec) -> Result<Vec<Sentence>, CorpusError> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut labels = Vec::new();

    let flush = |tokens: &mut Vec<String>, labels: &mut Vec<String>, out: &mut Vec<Sentence>| {
        if !tokens.is_empty() {
            let id = out.len();
            out.push(Sentence::new(id, std::mem::take(tokens), std::mem::take(labels)));
        }
    };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            line: line_no,
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut tokens, &mut labels, &mut sentences);
            continue;
        }
        if trimmed.starts_with("-DOCSTART-") {
            flush(&mut tokens, &mut labels, &mut sentences);
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let label_col = columns.label.unwrap_or(fields.len() - 1);
        let needed = columns.token.max(label_col) + 1;
        if fields.len() < needed || (columns.label.is_none() && fields.len() < 2) {
            return Err(CorpusError::MissingColumn {
                line: line_no,
                needed: needed.max(2),
                found: fields.len(),
            });
        }
        let tag = fields[label_col];
        if !is_bio_tag(tag) {
            return Err(CorpusError::InvalidTag {
                line: line_no,
                tag: tag.to_string(),
            });
        }
        tokens.push(fields[columns.token].to_string());
        labels.push(tag.to_string());
    }
    flush(&mut tokens, &mut labels, &mut sentences);
    Ok(sentences)
}

pub fn parse_conll_str(text: &str, columns: ColumnSpec) -> Result<Vec<Sentence>, CorpusError> {
    parse_conll(text.as_bytes(), columns)
}

/// Two-column `token tag` output, one blank line after each sentence.
pub fn write_conll<W: Write>(mut out: W, sentences: &[Sentence]) -> std::io::Result<()> {
    for s in sentences {
        for (tok, tag) in s.tokens.iter().zip(&s.labels) {
            writeln!(out, "{tok} {tag}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Three-column `token gold predicted` output for external scorers.
pub fn write_predictions<W: Write>(
    mut out: W,
    sentences: &[Sentence],
    predictions: &[Vec<String>],
) -> std::io::Result<()> {
    assert_eq!(sentences.len(), predictions.len());
    for (s, pred) in sentences.iter().zip(predictions) {
        assert_eq!(s.len(), pred.len());
        for ((tok, gold), p) in s.tokens.iter().zip(&s.labels).zip(pred) {
            writeln!(out, "{tok} {gold} {p}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Turns every `B-MISC`/`I-MISC` tag into `O`.
pub fn relabel_misc(sentences: &mut [Sentence]) {
    for s in sentences {
        for tag in &mut s.labels {
            if tag == "B-MISC" || tag == "I-MISC" {
                *tag = "O".to_string();
            }
        }
    }
}

/// Number of entity spans in BIO tags (a `B-` tag, or an `I-` tag that does
/// not continue a span of its type).
pub fn count_entities(sentences: &[Sentence]) -> usize {
    sentences
        .iter()
        .map(|s| crate::evaluation::extract_spans(&s.labels).len())
        .sum()
}
