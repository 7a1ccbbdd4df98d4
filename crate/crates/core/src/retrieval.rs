//! Sentence-representation index with exhaustive cosine top-K search, and
//! pseudo-task construction over a source corpus.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::autodiff::{ParamStore, Tensor};
use crate::corpus::EncodedSentence;
use crate::encoder::{read_manifest, tensor_from_blob, write_manifest_and_blob, ModelError};
use crate::error::{Error, Result};
use crate::tagger::Tagger;

pub const INDEX_MANIFEST: &str = "index.manifest";
pub const INDEX_BLOB: &str = "index.bin";
pub const INDEX_IDS: &str = "index.ids";

/// `a·b / (|a||b|)`, or 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine over vectors of different dimension");
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Monotone transform of cosine used for ranking: sign(dot)·dot²/(|a|²|b|²).
/// It needs a single rounding, so mathematically tied cosines (duplicates,
/// scaled copies, symmetric configurations of exactly representable vectors)
/// get identical keys and fall back to the id order.
pub fn ranking_key(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine over vectors of different dimension");
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot.signum() * (dot * dot) / (na * nb)
}

/// Nearest-neighbour lookup by sentence id.
pub trait SimilaritySearch: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ids of the `k` most similar entries, most similar first, ties by
    /// ascending id, `exclude` omitted.
    fn topk(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Result<Vec<usize>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalIndex {
    ids: Vec<usize>,
    reps: Vec<Vec<f64>>,
    rep_source: u64,
}

impl RetrievalIndex {
    pub fn new(ids: Vec<usize>, reps: Vec<Vec<f64>>, rep_source: u64) -> Result<Self> {
        if reps.is_empty() {
            return Err(Error::Config("retrieval index over an empty corpus".into()));
        }
        if ids.len() != reps.len() {
            return Err(Error::Contract(format!(
                "{} ids for {} representations",
                ids.len(),
                reps.len()
            )));
        }
        let dim = reps[0].len();
        if reps.iter().any(|r| r.len() != dim) {
            return Err(Error::Contract("representations differ in dimension".into()));
        }
        Ok(Self {
            ids,
            reps,
            rep_source,
        })
    }

    /// Computes one representation per sentence under `params`.
    pub fn build(tagger: &Tagger, params: &ParamStore, corpus: &[EncodedSentence]) -> Result<Self> {
        let reps = corpus
            .par_iter()
            .map(|s| tagger.sentence_rep(params, s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(corpus.iter().map(|s| s.id).collect(), reps, params.fingerprint())
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn reps(&self) -> &[Vec<f64>] {
        &self.reps
    }

    /// Fingerprint of the parameters the representations came from.
    pub fn rep_source(&self) -> u64 {
        self.rep_source
    }

    pub fn dim(&self) -> usize {
        self.reps[0].len()
    }

    pub fn rep(&self, id: usize) -> Option<&[f64]> {
        self.ids.iter().position(|&i| i == id).map(|p| self.reps[p].as_slice())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let flat = Tensor::matrix(
            self.reps.len(),
            self.dim(),
            self.reps.iter().flatten().copied().collect(),
        );
        let header = format!("# metaner index v1 source={:016x}", self.rep_source);
        let mut manifest = Vec::new();
        let mut blob = Vec::new();
        write_manifest_and_blob(&mut manifest, &mut blob, &header, &[("reps", &flat, false)])?;
        fs::write(dir.join(INDEX_MANIFEST), manifest)?;
        fs::write(dir.join(INDEX_BLOB), blob)?;
        let ids: String = self.ids.iter().map(|i| format!("{i}\n")).collect();
        fs::write(dir.join(INDEX_IDS), ids)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let bad = |m: &str| Error::Model(ModelError::Checkpoint(format!("index: {m}")));
        let (header, records) = read_manifest(&fs::read_to_string(dir.join(INDEX_MANIFEST))?)?;
        let source = header
            .strip_prefix("# metaner index v1 source=")
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .ok_or_else(|| bad("unexpected header"))?;
        let [record] = records.as_slice() else {
            return Err(bad("expected one tensor"));
        };
        let flat = tensor_from_blob(record, &fs::read(dir.join(INDEX_BLOB))?)?;
        if flat.shape().len() != 2 {
            return Err(bad("representations must be a matrix"));
        }
        let ids = fs::read_to_string(dir.join(INDEX_IDS))?
            .lines()
            .map(|l| l.trim().parse::<usize>().map_err(|_| bad("bad id line")))
            .collect::<Result<Vec<_>>>()?;
        let reps = (0..flat.rows()).map(|r| flat.row(r).to_vec()).collect();
        Self::new(ids, reps, source)
    }
}

impl SimilaritySearch for RetrievalIndex {
    fn len(&self) -> usize {
        self.ids.len()
    }

    fn topk(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Result<Vec<usize>> {
        if query.len() != self.dim() {
            return Err(Error::Contract(format!(
                "query dimension {} against index dimension {}",
                query.len(),
                self.dim()
            )));
        }
        let excluded = exclude.is_some_and(|e| self.ids.contains(&e));
        let available = self.len() - usize::from(excluded);
        if k > available {
            return Err(Error::Contract(format!(
                "requested {k} neighbours but only {available} candidates exist"
            )));
        }
        let mut scored: Vec<(f64, usize)> = self
            .ids
            .iter()
            .zip(&self.reps)
            .filter(|(&id, _)| Some(id) != exclude)
            .map(|(&id, r)| (ranking_key(query, r), id))
            .collect();
        scored.sort_by(|a, b| match b.0.total_cmp(&a.0) {
            Ordering::Equal => a.1.cmp(&b.1),
            o => o,
        });
        Ok(scored.into_iter().take(k).map(|(_, id)| id).collect())
    }
}

/// One episode: a test sentence and the ids of its retrieved neighbours.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudoTask {
    pub test: usize,
    pub train: Vec<usize>,
}

/// One task per indexed sentence, its `k` neighbours forming the train set.
pub fn build_tasks<S: SimilaritySearch + ?Sized>(
    index: &S,
    queries: &[(usize, &[f64])],
    k: usize,
) -> Result<Vec<PseudoTask>> {
    if index.len() < k + 1 {
        return Err(Error::Config(format!(
            "{} sentences cannot supply {k} neighbours per task",
            index.len()
        )));
    }
    queries
        .par_iter()
        .map(|&(id, rep)| {
            Ok(PseudoTask {
                test: id,
                train: index.topk(rep, k, Some(id))?,
            })
        })
        .collect()
}

/// Tasks for every sentence of `index`, queried with its own representations.
pub fn tasks_for_index(index: &RetrievalIndex, k: usize) -> Result<Vec<PseudoTask>> {
    let queries: Vec<(usize, &[f64])> = index
        .ids()
        .iter()
        .zip(index.reps())
        .map(|(&id, r)| (id, r.as_slice()))
        .collect();
    build_tasks(index, &queries, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> RetrievalIndex {
        RetrievalIndex::new(
            vec![1, 2, 3],
            vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0]],
            0,
        )
        .unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-12);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]) - 0.70711).abs() < 1e-5);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn topk_examples() {
        let idx = three();
        assert_eq!(idx.topk(&[1.0, 0.0], 2, Some(1)).unwrap(), vec![2, 3]);
        assert_eq!(idx.topk(&[1.0, 0.0], 3, None).unwrap(), vec![1, 2, 3]);
        assert!(matches!(idx.topk(&[1.0, 0.0], 3, Some(1)), Err(Error::Contract(_))));
        let dup = RetrievalIndex::new(vec![5, 4], vec![vec![1.0, 1.0], vec![1.0, 1.0]], 0).unwrap();
        assert_eq!(dup.topk(&[1.0, 0.0], 2, None).unwrap(), vec![4, 5]);
    }

    #[test]
    fn tasks_exclude_their_test_sentence() {
        let tasks = tasks_for_index(&three(), 2).unwrap();
        assert_eq!(tasks.len(), 3);
        assert_eq!(tasks[0], PseudoTask { test: 1, train: vec![2, 3] });
        for t in &tasks {
            assert!(!t.train.contains(&t.test));
        }
        assert!(matches!(tasks_for_index(&three(), 3), Err(Error::Config(_))));
    }

    #[test]
    fn empty_index_is_a_config_error() {
        assert!(matches!(RetrievalIndex::new(vec![], vec![], 0), Err(Error::Config(_))));
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let idx = three();
        idx.save(dir.path()).unwrap();
        let back = RetrievalIndex::load(dir.path()).unwrap();
        assert_eq!(back.ids(), idx.ids());
        assert_eq!(back.rep_source(), idx.rep_source());
        assert_eq!(back.rep(2).unwrap(), &[0.9f32 as f64, 0.1f32 as f64]);
    }
}
