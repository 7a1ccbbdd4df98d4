//! Per-sentence adaptation (retrieve neighbours, one gradient step from the
//! meta-trained parameters, predict, discard), direct transfer, and
//! whole-subset fine-tuning.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::autodiff::{Optimizer, OptimizerKind, ParamStore};
use crate::corpus::EncodedSentence;
use crate::error::{Error, Result};
use crate::objectives::DEFAULT_LAMBDA;
use crate::retrieval::SimilaritySearch;
use crate::rng::{mix, purpose};
use crate::supervised::{train_supervised, TrainConfig};
use crate::tagger::{Draw, Learner, Objective, Reduction, Tagger};

/// Adaptation rate with a pretrained encoder.
pub const PAPER_ADAPT_LR: f64 = 1e-5;
/// Adaptation rate for an encoder trained from scratch.
pub const TOY_ADAPT_LR: f64 = 3e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptConfig {
    pub k: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Adds the max term to the adaptation loss.
    pub max_loss: bool,
    pub lambda: f64,
    pub dropout: bool,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            k: 2,
            lr: TOY_ADAPT_LR,
            optimizer: OptimizerKind::Sgd,
            max_loss: false,
            lambda: DEFAULT_LAMBDA,
            dropout: true,
            seed: 0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) {
            return Err(Error::Config(format!("adaptation rate must be >= 0, got {}", self.lr)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// True when adaptation cannot change any parameter.
    pub fn is_degenerate(&self) -> bool {
        self.k == 0 || self.lr == 0.0
    }

    fn objective(&self) -> Objective {
        Objective {
            lambda: if self.max_loss { self.lambda } else { 0.0 },
            ..Objective::plain(self.dropout, Reduction::PooledTokens)
        }
    }
}

/// Word-level argmax labels with unchanged parameters.
pub fn direct_predict(tagger: &Tagger, params: &ParamStore, sentence: &EncodedSentence) -> Result<Vec<usize>> {
    tagger.predict(params, sentence)
}

/// Source sentences addressable by id.
pub struct SourcePool<'s> {
    by_id: HashMap<usize, &'s EncodedSentence>,
}

impl<'s> SourcePool<'s> {
    pub fn new(sentences: &'s [EncodedSentence]) -> Self {
        Self {
            by_id: sentences.iter().map(|s| (s.id, s)).collect(),
        }
    }

    pub fn get(&self, id: usize) -> Option<&'s EncodedSentence> {
        self.by_id.get(&id).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adapted {
    pub labels: Vec<usize>,
    pub neighbours: Vec<usize>,
    /// Set when retrieval or the update failed and direct prediction was used.
    pub fallback: Option<String>,
}

/// Retrieves `cfg.k` neighbours of `test`, takes one step on them from
/// `params`, and predicts `test` with the stepped copy.
pub fn adapt_and_predict<S: SimilaritySearch + ?Sized>(
    tagger: &Tagger,
    params: &ParamStore,
    test: &EncodedSentence,
    source: &SourcePool<'_>,
    index: &S,
    cfg: &AdaptConfig,
) -> Result<Adapted> {
    if cfg.is_degenerate() {
        return Ok(Adapted {
            labels: direct_predict(tagger, params, test)?,
            neighbours: Vec::new(),
            fallback: None,
        });
    }
    let fall_back = |reason: String| -> Result<Adapted> {
        Ok(Adapted {
            labels: direct_predict(tagger, params, test)?,
            neighbours: Vec::new(),
            fallback: Some(reason),
        })
    };
    let query = tagger.sentence_rep(params, test)?;
    let neighbours = match index.topk(&query, cfg.k, None) {
        Ok(n) => n,
        Err(e) => return fall_back(format!("retrieval failed: {e}")),
    };
    let Some(batch) = neighbours.iter().map(|&id| source.get(id)).collect::<Option<Vec<_>>>() else {
        return fall_back("retrieved id missing from the source pool".into());
    };
    let draw = Draw {
        seed: mix(&[purpose::ADAPT, cfg.seed]),
        epoch: 0,
        stream: test.id as u64,
    };
    let (loss, grads) = tagger.loss_and_grad(params, &batch, &cfg.objective(), draw)?;
    if !loss.is_finite() || !grads.all_finite() {
        return fall_back(format!("non-finite adaptation loss {loss}"));
    }
    let mut scratch = params.clone();
    Optimizer::new(cfg.optimizer).step(&mut scratch, &grads, cfg.lr)?;
    Ok(Adapted {
        labels: tagger.predict(&scratch, test)?,
        neighbours,
        fallback: None,
    })
}

/// Adapts every test sentence independently, in parallel over `workers`
/// threads; results are in input order.
pub fn adapt_corpus<S: SimilaritySearch + ?Sized>(
    tagger: &Tagger,
    params: &ParamStore,
    tests: &[EncodedSentence],
    source: &SourcePool<'_>,
    index: &S,
    cfg: &AdaptConfig,
    workers: usize,
) -> Result<Vec<Adapted>> {
    cfg.validate()?;
    run_with_workers(workers, || {
        tests
            .par_iter()
            .map(|t| adapt_and_predict(tagger, params, t, source, index, cfg))
            .collect()
    })
}

/// Direct prediction for every sentence, in input order.
pub fn direct_corpus(
    tagger: &Tagger,
    params: &ParamStore,
    tests: &[EncodedSentence],
    workers: usize,
) -> Result<Vec<Vec<usize>>> {
    run_with_workers(workers, || {
        tests.par_iter().map(|t| direct_predict(tagger, params, t)).collect()
    })
}

fn run_with_workers<T: Send>(workers: usize, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers == 0 {
        return job();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(job)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub dropout: bool,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 1e-3,
            batch_size: 8,
            optimizer: OptimizerKind::Adam,
            dropout: true,
            seed: 0,
        }
    }
}

/// Plain mean-loss training on a labeled target subset.
pub fn low_resource_finetune(
    tagger: &Tagger,
    params: &ParamStore,
    subset: &[EncodedSentence],
    cfg: &FinetuneConfig,
) -> Result<ParamStore> {
    if cfg.epochs > 0 && subset.is_empty() {
        return Err(Error::Config("fine-tuning subset is empty".into()));
    }
    let refs: Vec<&EncodedSentence> = subset.iter().collect();
    let train = TrainConfig {
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        max_updates: TrainConfig::updates_for_epochs(subset.len(), cfg.batch_size, cfg.epochs),
        optimizer: cfg.optimizer,
        dropout: cfg.dropout,
        seed: cfg.seed,
        purpose: purpose::FINETUNE,
    };
    Ok(train_supervised(tagger, params, &refs, &train, |_, _| Ok(()))?.params)
}
