//! Phrase-level precision, recall and F1 over BIO sequences, following the
//! CoNLL shared-task scorer's chunking rules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold has {gold} sentences but prediction has {predicted}")]
    SentenceCount { gold: usize, predicted: usize },
    #[error("sentence {sentence}: gold has {gold} tokens but prediction has {predicted}")]
    Length {
        sentence: usize,
        gold: usize,
        predicted: usize,
    },
    #[error("sentence {sentence}: token '{gold}' in gold does not match '{predicted}' in prediction")]
    TokenMismatch {
        sentence: usize,
        gold: String,
        predicted: String,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Entity span over token positions, `end` inclusive.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub entity_type: String,
}

impl Span {
    pub fn new(start: usize, end: usize, entity_type: impl Into<String>) -> Self {
        Self {
            start,
            end,
            entity_type: entity_type.into(),
        }
    }
}

fn split_tag(tag: &str) -> (char, &str) {
    match tag.split_once('-') {
        Some((prefix, ty)) if prefix == "B" || prefix == "I" => (prefix.chars().next().unwrap(), ty),
        _ => ('O', ""),
    }
}

/// Maximal entity chunks of a BIO sequence.
///
/// An `I-T` tag that follows `O`, the start of the sequence or a chunk of
/// another type opens a new chunk, as the CoNLL scorer does.
pub fn extract_spans<S: AsRef<str>>(labels: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, label) in labels.iter().enumerate() {
        let (tag, ty) = split_tag(label.as_ref());
        let continues = matches!((tag, open), ('I', Some((_, t))) if t == ty);
        if continues {
            continue;
        }
        if let Some((start, t)) = open.take() {
            spans.push(Span::new(start, i - 1, t));
        }
        if tag != 'O' {
            open = Some((i, ty));
        }
    }
    if let Some((start, t)) = open {
        spans.push(Span::new(start, labels.len() - 1, t));
    }
    spans
}

/// Precision, recall and F1 from span counts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Prf {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(gold: usize, predicted: usize, correct: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            gold,
            predicted,
            correct,
            precision,
            recall,
            f1,
        }
    }
}

/// Micro-averaged overall score plus one score per entity type.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreReport {
    pub overall: Prf,
    pub per_type: BTreeMap<String, Prf>,
}

impl ScoreReport {
    /// Line-oriented `key=value` records.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        let mut line = |scope: &str, s: &Prf| {
            let _ = writeln!(
                out,
                "scope={scope} gold={} predicted={} correct={} precision={:.6} recall={:.6} f1={:.6}",
                s.gold, s.predicted, s.correct, s.precision, s.recall, s.f1
            );
        };
        line("overall", &self.overall);
        for (ty, s) in &self.per_type {
            line(ty, s);
        }
        out
    }

    /// Human-readable table in percentages.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>7} {:>7} {:>9} {:>7} {:>7}",
            "type", "gold", "pred", "correct", "precision", "recall", "f1"
        );
        let mut row = |name: &str, s: &Prf| {
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>7} {:>7} {:>9.2} {:>7.2} {:>7.2}",
                name,
                s.gold,
                s.predicted,
                s.correct,
                100.0 * s.precision,
                100.0 * s.recall,
                100.0 * s.f1
            );
        };
        for (ty, s) in &self.per_type {
            row(ty, s);
        }
        row("overall", &self.overall);
        out
    }
}

/// Exact-match phrase scoring: a predicted span counts only if a gold span
/// with the same boundaries and type exists in the same sentence.
pub fn phrase_f1<S: AsRef<str>, T: AsRef<str>>(
    gold: &[Vec<S>],
    predicted: &[Vec<T>],
) -> Result<ScoreReport, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::SentenceCount {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::Length {
                sentence: i,
                gold: g.len(),
                predicted: p.len(),
            });
        }
        let gold_spans: BTreeSet<Span> = extract_spans(g).into_iter().collect();
        let pred_spans = extract_spans(p);
        for s in &gold_spans {
            counts.entry(s.entity_type.clone()).or_default().0 += 1;
        }
        for s in &pred_spans {
            let entry = counts.entry(s.entity_type.clone()).or_default();
            entry.1 += 1;
            if gold_spans.contains(s) {
                entry.2 += 1;
            }
        }
    }
    let per_type: BTreeMap<String, Prf> = counts
        .iter()
        .map(|(ty, &(g, p, c))| (ty.clone(), Prf::from_counts(g, p, c)))
        .collect();
    let (g, p, c) = counts
        .values()
        .fold((0, 0, 0), |acc, v| (acc.0 + v.0, acc.1 + v.1, acc.2 + v.2));
    Ok(ScoreReport {
        overall: Prf::from_counts(g, p, c),
        per_type,
    })
}

/// Whitespace-separated rows grouped into sentences by blank lines.
pub type ColumnSentences = Vec<Vec<Vec<String>>>;

pub fn read_columns<R: BufRead>(reader: R) -> Result<ColumnSentences, EvalError> {
    let mut sentences = Vec::new();
    let mut current: Vec<Vec<String>> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("-DOCSTART-") {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        current.push(trimmed.split_whitespace().map(str::to_string).collect());
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// Picks the column `from_end` positions before the last (0 = last column).
pub fn column_from_end(
    sentences: &ColumnSentences,
    from_end: usize,
) -> Result<Vec<Vec<String>>, EvalError> {
    let mut line = 0;
    let mut out = Vec::with_capacity(sentences.len());
    for s in sentences {
        let mut tags = Vec::with_capacity(s.len());
        for row in s {
            line += 1;
            if row.len() <= from_end {
                return Err(EvalError::Format {
                    line,
                    message: format!("row has {} columns, need {}", row.len(), from_end + 1),
                });
            }
            tags.push(row[row.len() - 1 - from_end].clone());
        }
        line += 1;
        out.push(tags);
    }
    Ok(out)
}

/// Scores a single file whose last two columns are gold and predicted tags.
pub fn score_prediction_file<R: BufRead>(reader: R) -> Result<ScoreReport, EvalError> {
    let cols = read_columns(reader)?;
    let gold = column_from_end(&cols, 1)?;
    let pred = column_from_end(&cols, 0)?;
    phrase_f1(&gold, &pred)
}

/// Scores the last column of `pred` against the last column of `gold`,
/// checking that sentences and first-column tokens line up.
pub fn score_file_pair<R1: BufRead, R2: BufRead>(gold: R1, pred: R2) -> Result<ScoreReport, EvalError> {
    let g = read_columns(gold)?;
    let p = read_columns(pred)?;
    if g.len() != p.len() {
        return Err(EvalError::SentenceCount {
            gold: g.len(),
            predicted: p.len(),
        });
    }
    for (i, (gs, ps)) in g.iter().zip(&p).enumerate() {
        if gs.len() != ps.len() {
            return Err(EvalError::Length {
                sentence: i,
                gold: gs.len(),
                predicted: ps.len(),
            });
        }
        if let Some((gr, pr)) = gs.iter().zip(ps).find(|(gr, pr)| gr[0] != pr[0]) {
            return Err(EvalError::TokenMismatch {
                sentence: i,
                gold: gr[0].clone(),
                predicted: pr[0].clone(),
            });
        }
    }
    phrase_f1(&column_from_end(&g, 0)?, &column_from_end(&p, 0)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn extracts_basic_spans() {
        assert_eq!(
            extract_spans(&tags("B-PER I-PER O B-LOC")),
            vec![Span::new(0, 1, "PER"), Span::new(3, 3, "LOC")]
        );
        assert!(extract_spans(&tags("O O")).is_empty());
    }

    #[test]
    fn orphan_inside_tags_open_spans() {
        assert_eq!(extract_spans(&tags("I-PER I-PER")), vec![Span::new(0, 1, "PER")]);
        assert_eq!(
            extract_spans(&tags("B-PER I-LOC I-LOC O I-ORG")),
            vec![
                Span::new(0, 0, "PER"),
                Span::new(1, 2, "LOC"),
                Span::new(4, 4, "ORG")
            ]
        );
        assert_eq!(
            extract_spans(&tags("B-PER B-PER I-PER")),
            vec![Span::new(0, 0, "PER"), Span::new(1, 2, "PER")]
        );
    }

    #[test]
    fn precision_recall_example() {
        let gold = vec![tags("B-PER I-PER O O")];
        let pred = vec![tags("B-PER I-PER O B-LOC")];
        let r = phrase_f1(&gold, &pred).unwrap();
        assert_eq!(r.overall.precision, 0.5);
        assert_eq!(r.overall.recall, 1.0);
        assert!((r.overall.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.per_type["LOC"].gold, 0);
        assert_eq!(r.per_type["PER"].correct, 1);
    }

    #[test]
    fn identical_and_shifted() {
        let gold = vec![tags("O B-ORG I-ORG O")];
        let r = phrase_f1(&gold, &gold).unwrap();
        assert_eq!((r.overall.precision, r.overall.recall, r.overall.f1), (1.0, 1.0, 1.0));

        let shifted = vec![tags("O B-ORG I-ORG I-ORG")];
        assert_eq!(phrase_f1(&gold, &shifted).unwrap().overall.f1, 0.0);
    }

    #[test]
    fn length_mismatch_names_sentence() {
        let gold = vec![tags("O"), tags("O O")];
        let pred = vec![tags("O"), tags("O")];
        match phrase_f1(&gold, &pred) {
            Err(EvalError::Length { sentence, .. }) => assert_eq!(sentence, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scores_prediction_columns() {
        let text = "a B-PER B-PER\nb I-PER O\n\nc B-LOC B-LOC\n";
        let r = score_prediction_file(text.as_bytes()).unwrap();
        assert_eq!(r.overall.gold, 2);
        assert_eq!(r.overall.predicted, 2);
        assert_eq!(r.overall.correct, 1);
        assert!(r.to_records().starts_with("scope=overall gold=2"));
    }

    #[test]
    fn file_pair_checks_alignment() {
        let gold = "a B-PER\nb O\n\nc O\n";
        let pred = "a B-PER\nb O\n\nd O\n";
        match score_file_pair(gold.as_bytes(), pred.as_bytes()) {
            Err(EvalError::TokenMismatch { sentence, .. }) => assert_eq!(sentence, 1),
            other => panic!("{other:?}"),
        }
        let r = score_file_pair(gold.as_bytes(), gold.as_bytes()).unwrap();
        assert_eq!(r.overall.f1, 1.0);
    }
}
