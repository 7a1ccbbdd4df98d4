//! Reference span extraction written from the CoNLL scorer's start-of-chunk
//! and end-of-chunk predicates, plus hand-scored fixtures.

use std::collections::BTreeSet;

use metaner::evaluation::{extract_spans, phrase_f1, Span};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TAGS: [&str; 5] = ["O", "B-A", "I-A", "B-B", "I-B"];

fn parts(tag: &str) -> (&str, &str) {
    tag.split_once('-').unwrap_or(("O", ""))
}

fn end_of_chunk(prev: &str, cur: &str) -> bool {
    let ((pt, pty), (ct, cty)) = (parts(prev), parts(cur));
    (pt == "B" || pt == "I") && (ct == "B" || ct == "O" || pty != cty)
}

fn start_of_chunk(prev: &str, cur: &str) -> bool {
    let ((pt, pty), (ct, cty)) = (parts(prev), parts(cur));
    ct == "B" || (pt == "O" && ct == "I") || (ct != "O" && pty != cty)
}

pub fn reference_spans(labels: &[&str]) -> Vec<Span> {
    let mut out = Vec::new();
    let mut start = None;
    let mut prev = "O";
    for (i, &cur) in labels.iter().enumerate() {
        if end_of_chunk(prev, cur) {
            out.push(Span::new(start.take().unwrap(), i - 1, parts(prev).1));
        }
        if start_of_chunk(prev, cur) {
            start = Some(i);
        }
        prev = cur;
    }
    if let Some(s) = start {
        out.push(Span::new(s, labels.len() - 1, parts(prev).1));
    }
    out
}

pub fn all_sequences(max_len: usize) -> Vec<Vec<&'static str>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<&str>> = vec![Vec::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s| {
                TAGS.iter().map(move |t| {
                    let mut n = s.clone();
                    n.push(*t);
                    n
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

/// Compares span extraction on every sequence up to `max_len`; returns the
/// number of sequences checked.
pub fn exhaustive_spans(max_len: usize) -> usize {
    let seqs = all_sequences(max_len);
    for s in &seqs {
        assert_eq!(extract_spans(s), reference_spans(s), "{s:?}");
    }
    seqs.len()
}

pub fn reference_counts(gold: &[&str], pred: &[&str]) -> (usize, usize, usize) {
    let g: BTreeSet<Span> = reference_spans(gold).into_iter().collect();
    let p: BTreeSet<Span> = reference_spans(pred).into_iter().collect();
    (g.len(), p.len(), g.intersection(&p).count())
}

fn overall(r: &metaner::evaluation::ScoreReport) -> (usize, usize, usize) {
    (r.overall.gold, r.overall.predicted, r.overall.correct)
}

/// Phrase counts for every gold/predicted pair of equal length up to `max_len`.
pub fn exhaustive_pairs(max_len: usize) -> usize {
    let mut n = 0;
    for len in 0..=max_len {
        let seqs: Vec<_> = all_sequences(len).into_iter().filter(|s| s.len() == len).collect();
        for g in &seqs {
            for p in &seqs {
                let r = phrase_f1(&[g.clone()], &[p.clone()]).unwrap();
                assert_eq!(overall(&r), reference_counts(g, p), "{g:?} {p:?}");
                n += 1;
            }
        }
    }
    n
}

/// Phrase counts on random multi-sentence corpora of sentences up to length 8.
pub fn random_corpora(count: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..count {
        let n = rng.random_range(1..=6);
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        let (mut gc, mut pc, mut cc) = (0, 0, 0);
        for _ in 0..n {
            let len = rng.random_range(0..=8);
            let g: Vec<&str> = (0..len).map(|_| TAGS[rng.random_range(0..5)]).collect();
            let p: Vec<&str> = (0..len).map(|_| TAGS[rng.random_range(0..5)]).collect();
            let (a, b, c) = reference_counts(&g, &p);
            (gc, pc, cc) = (gc + a, pc + b, cc + c);
            gold.push(g);
            pred.push(p);
        }
        let r = phrase_f1(&gold, &pred).unwrap();
        assert_eq!(overall(&r), (gc, pc, cc));
        let type_sum: usize = r.per_type.values().map(|s| s.correct).sum();
        assert_eq!(type_sum, cc);
    }
    count
}

/// (gold, predicted, expected gold/predicted/correct spans, expected F1).
const FIXTURES: &[(&str, &str, (usize, usize, usize), f64)] = &[
    // Identical sequences.
    ("B-A I-A O B-B", "B-A I-A O B-B", (2, 2, 2), 1.0),
    // Orphan I- opens a span of its own.
    ("O I-A I-A O", "O B-A I-A O", (1, 1, 1), 1.0),
    // Orphan I- after a different type splits the chunk.
    ("B-A I-B", "B-A B-B", (2, 2, 2), 1.0),
    // Boundary mismatch scores nothing.
    ("B-A I-A I-A", "B-A I-A O", (1, 1, 0), 0.0),
    // Type mismatch scores nothing.
    ("B-A O", "B-B O", (1, 1, 0), 0.0),
    // B- after B- of the same type starts a second span.
    ("B-A B-A", "B-A I-A", (2, 1, 0), 0.0),
    // All-O prediction has zero recall.
    ("B-A O B-B", "O O O", (2, 0, 0), 0.0),
    // One of two right: P = 1/2, R = 1/2.
    ("B-A O B-B", "B-A O B-A", (2, 2, 1), 0.5),
    // One predicted and correct out of three gold: P = 1, R = 1/3, F1 = 1/2.
    ("B-A B-B B-A", "B-A O O", (3, 1, 1), 0.5),
];

pub fn hand_scored_fixtures() -> usize {
    for &(gold, pred, counts, f1) in FIXTURES {
        let g: Vec<&str> = gold.split_whitespace().collect();
        let p: Vec<&str> = pred.split_whitespace().collect();
        let r = phrase_f1(&[g], &[p]).unwrap();
        assert_eq!(overall(&r), counts, "{gold} / {pred}");
        assert!((r.overall.f1 - f1).abs() < 1e-12, "{gold} / {pred}: {}", r.overall.f1);
    }
    assert_eq!(
        extract_spans(&["I-A", "I-A", "O", "I-B", "B-B", "I-A"]),
        vec![
            Span::new(0, 1, "A"),
            Span::new(3, 3, "B"),
            Span::new(4, 4, "B"),
            Span::new(5, 5, "A"),
        ]
    );
    FIXTURES.len() + 1
}
