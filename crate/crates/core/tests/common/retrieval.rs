//! Brute-force ranking that compares cosines exactly.
//!
//! Corpora hold small integer vectors, so the oracle can order cosines with
//! integer arithmetic: cos(a,q) > cos(b,q) iff dot_a·|b| > dot_b·|a|, decided
//! by signs and squared magnitudes. Duplicates, scaled copies and zero
//! vectors produce exact ties, which must resolve to ascending id.

use std::cmp::Ordering;

use metaner::retrieval::{RetrievalIndex, SimilaritySearch};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dot(a: &[i64], b: &[i64]) -> i128 {
    a.iter().zip(b).map(|(x, y)| (*x as i128) * (*y as i128)).sum()
}

/// Exact comparison of cos(a, q) and cos(b, q); zero vectors score 0.
pub fn compare_cosine(q: &[i64], a: &[i64], b: &[i64]) -> Ordering {
    let (qq, aa, bb) = (dot(q, q), dot(a, a), dot(b, b));
    let score = |v: &[i64], vv: i128| if qq == 0 || vv == 0 { 0 } else { dot(v, q) };
    let (da, db) = (score(a, aa), score(b, bb));
    // Signed comparison of da/sqrt(aa) and db/sqrt(bb) without roots.
    let sa = da.signum();
    let sb = db.signum();
    if sa != sb {
        return sa.cmp(&sb);
    }
    if sa == 0 {
        return Ordering::Equal;
    }
    let lhs = da * da * if bb == 0 { 1 } else { bb };
    let rhs = db * db * if aa == 0 { 1 } else { aa };
    let magnitude = lhs.cmp(&rhs);
    if sa > 0 {
        magnitude
    } else {
        magnitude.reverse()
    }
}

pub fn oracle(ids: &[usize], reps: &[Vec<i64>], q: &[i64], k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).filter(|&i| Some(ids[i]) != exclude).collect();
    order.sort_by(|&i, &j| compare_cosine(q, &reps[j], &reps[i]).then(ids[i].cmp(&ids[j])));
    order.into_iter().take(k).map(|i| ids[i]).collect()
}

fn random_corpus(rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<Vec<i64>>, usize) {
    let n = rng.random_range(1..=50);
    let dim = rng.random_range(1..=6);
    let mut reps: Vec<Vec<i64>> = Vec::with_capacity(n);
    while reps.len() < n {
        let roll: f64 = rng.random();
        let v = if !reps.is_empty() && roll < 0.2 {
            reps[rng.random_range(0..reps.len())].clone()
        } else if !reps.is_empty() && roll < 0.35 {
            let f = [2, 4, 8][rng.random_range(0..3)];
            reps[rng.random_range(0..reps.len())].iter().map(|x| x * f).collect()
        } else if roll < 0.4 {
            vec![0; dim]
        } else {
            (0..dim).map(|_| rng.random_range(-3..=3)).collect()
        };
        reps.push(v);
    }
    let mut ids: Vec<usize> = (0..n).map(|i| i * 3 + rng.random_range(0..3)).collect();
    ids.shuffle(rng);
    (ids, reps, dim)
}

fn to_f64(v: &[i64]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Checks `topk` on `corpora` random corpora for every k, with and without an
/// excluded id; returns the number of exact ties met along the way.
pub fn check_corpora(corpora: u64) -> usize {
    let mut ties_seen = 0;
    for corpus in 0..corpora {
        let mut rng = ChaCha8Rng::seed_from_u64(corpus);
        let (ids, reps, dim) = random_corpus(&mut rng);
        let index = RetrievalIndex::new(ids.clone(), reps.iter().map(|r| to_f64(r)).collect(), 0).unwrap();
        for _ in 0..5 {
            let q: Vec<i64> = if rng.random_bool(0.3) {
                reps[rng.random_range(0..reps.len())].clone()
            } else {
                (0..dim).map(|_| rng.random_range(-3..=3)).collect()
            };
            let exclude = rng.random_bool(0.5).then(|| ids[rng.random_range(0..ids.len())]);
            let available = ids.len() - usize::from(exclude.is_some());
            for k in 0..=available {
                let expected = oracle(&ids, &reps, &q, k, exclude);
                let got = index.topk(&to_f64(&q), k, exclude).unwrap();
                assert_eq!(got, expected, "corpus {corpus} k {k} query {q:?} exclude {exclude:?}");
            }
            let full = oracle(&ids, &reps, &q, available, exclude);
            ties_seen += full
                .windows(2)
                .filter(|w| {
                    let p = |id: usize| ids.iter().position(|&x| x == id).unwrap();
                    compare_cosine(&q, &reps[p(w[0])], &reps[p(w[1])]) == Ordering::Equal
                })
                .count();
            assert!(index.topk(&to_f64(&q), available + 1, exclude).is_err());
        }
    }
    ties_seen
}

