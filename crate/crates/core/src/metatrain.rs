//! First-order meta-training over pseudo tasks: per-task inner updates from
//! a shared snapshot, meta-gradients at the adapted parameters, and one
//! meta-optimizer step on their sum.

use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::autodiff::{GradientMap, Optimizer, OptimizerKind, ParamStore};
use crate::error::{Error, Result};
use crate::objectives::{DEFAULT_LAMBDA, DEFAULT_MASK_PROBABILITY};
use crate::rng::{mix, purpose, stream_rng};
use crate::tagger::{Draw, Learner, Objective, Reduction};

/// Learning rates used with a pretrained encoder.
pub const PAPER_INNER_LR: f64 = 3e-5;
pub const PAPER_META_LR: f64 = 3e-5;
/// Learning rates for an encoder trained from scratch.
pub const TOY_INNER_LR: f64 = 1e-3;
pub const TOY_META_LR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct MetaConfig {
    pub inner_lr: f64,
    pub meta_lr: f64,
    pub inner_steps: usize,
    pub tasks_per_meta_update: usize,
    pub max_meta_updates: usize,
    pub lambda: f64,
    pub mask_probability: f64,
    pub seed: u64,
    pub inner_optimizer: OptimizerKind,
    pub meta_optimizer: OptimizerKind,
    pub dropout: bool,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            inner_lr: TOY_INNER_LR,
            meta_lr: TOY_META_LR,
            inner_steps: 2,
            tasks_per_meta_update: 32,
            max_meta_updates: 3000,
            lambda: DEFAULT_LAMBDA,
            mask_probability: DEFAULT_MASK_PROBABILITY,
            seed: 0,
            inner_optimizer: OptimizerKind::Adam,
            meta_optimizer: OptimizerKind::Adam,
            dropout: true,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.inner_steps == 0 {
            return fail("inner_steps must be at least 1".into());
        }
        if self.tasks_per_meta_update == 0 {
            return fail("tasks_per_meta_update must be at least 1".into());
        }
        if !(self.inner_lr >= 0.0 && self.meta_lr >= 0.0) {
            return fail(format!(
                "learning rates must be nonnegative (inner {}, meta {})",
                self.inner_lr, self.meta_lr
            ));
        }
        if !(self.lambda >= 0.0) {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.mask_probability) {
            return fail(format!("mask probability must lie in [0, 1], got {}", self.mask_probability));
        }
        Ok(())
    }

    /// Loss minimized in both loops.
    pub fn objective(&self) -> Objective {
        Objective {
            lambda: self.lambda,
            mask_probability: self.mask_probability,
            dropout: self.dropout,
            reduction: Reduction::SumExamples,
        }
    }
}

/// A task as seen by the trainer: borrowed train and test examples.
#[derive(Debug)]
pub struct MetaTask<'e, E> {
    pub id: usize,
    pub train: Vec<&'e E>,
    pub test: Vec<&'e E>,
}

impl<E> Clone for MetaTask<'_, E> {
    fn clone(&self) -> Self {
        Self {
            id: self.id,
            train: self.train.clone(),
            test: self.test.clone(),
        }
    }
}

/// Inner-loop copy of `params` after `cfg.inner_steps` optimizer steps on
/// `train`, with fresh optimizer state. `params` itself is untouched.
pub fn inner_update<L: Learner>(
    learner: &L,
    params: &ParamStore,
    train: &[&L::Example],
    cfg: &MetaConfig,
    draw: Draw,
) -> Result<ParamStore> {
    if train.is_empty() {
        return Err(Error::Contract("inner update on an empty train set".into()));
    }
    let objective = cfg.objective();
    let mut adapted = params.clone();
    let mut optimizer = Optimizer::new(cfg.inner_optimizer);
    for step in 0..cfg.inner_steps {
        let d = Draw {
            stream: mix(&[draw.stream, step as u64]),
            ..draw
        };
        let (loss, grads) = learner.loss_and_grad(&adapted, train, &objective, d)?;
        if !loss.is_finite() || !grads.all_finite() {
            return Err(Error::Numerical(format!("inner loss {loss} at step {step}")));
        }
        optimizer.step(&mut adapted, &grads, cfg.inner_lr)?;
    }
    Ok(adapted)
}

/// Gradient of the test loss at the adapted parameters.
pub fn meta_gradient<L: Learner>(
    learner: &L,
    adapted: &ParamStore,
    test: &[&L::Example],
    cfg: &MetaConfig,
    draw: Draw,
) -> Result<(f64, GradientMap)> {
    let (loss, grads) = learner.loss_and_grad(adapted, test, &cfg.objective(), draw)?;
    if !loss.is_finite() || !grads.all_finite() {
        return Err(Error::Numerical(format!("test loss {loss}")));
    }
    Ok((loss, grads))
}

/// Outcome of one meta-step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: u64,
    /// Sum of test losses over the tasks that contributed.
    pub summed_loss: f64,
    pub tasks: usize,
    pub skipped: usize,
    /// False when every task was skipped and no update happened.
    pub applied: bool,
}

impl fmt::Display for StepRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} epoch={} loss={:.6} tasks={} skipped={} applied={}",
            self.step,
            self.epoch,
            self.summed_loss,
            self.tasks,
            self.skipped,
            u8::from(self.applied)
        )
    }
}

/// One meta-update of `params` from the summed first-order meta-gradients
/// of `tasks`. Tasks whose losses turn non-finite are skipped.
pub fn meta_step<L: Learner>(
    learner: &L,
    params: &mut ParamStore,
    meta_optimizer: &mut Optimizer,
    tasks: &[MetaTask<'_, L::Example>],
    cfg: &MetaConfig,
    step: usize,
    epoch: u64,
) -> Result<StepRecord> {
    if tasks.is_empty() {
        return Err(Error::Contract("meta-step over an empty task batch".into()));
    }
    let snapshot: &ParamStore = params;
    let results: Vec<Result<Option<(f64, GradientMap)>>> = tasks
        .par_iter()
        .map(|task| {
            let base = Draw {
                seed: cfg.seed,
                epoch,
                stream: mix(&[step as u64, task.id as u64]),
            };
            let run = || -> Result<(f64, GradientMap)> {
                let adapted = inner_update(learner, snapshot, &task.train, cfg, base)?;
                let test_draw = Draw {
                    stream: mix(&[base.stream, u64::MAX]),
                    ..base
                };
                meta_gradient(learner, &adapted, &task.test, cfg, test_draw)
            };
            match run() {
                Ok(r) => Ok(Some(r)),
                Err(e) if e.is_non_finite() => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.sort_by_key(|&i| tasks[i].id);
    let mut total = GradientMap::zeros_like(params);
    let mut summed_loss = 0.0;
    let mut skipped = 0;
    let mut results: Vec<Option<Result<Option<(f64, GradientMap)>>>> =
        results.into_iter().map(Some).collect();
    for i in order {
        match results[i].take().expect("each result taken once")? {
            Some((loss, g)) => {
                summed_loss += loss;
                total.accumulate(&g)?;
            }
            None => skipped += 1,
        }
    }
    let applied = skipped < tasks.len();
    if applied {
        meta_optimizer.step(params, &total, cfg.meta_lr)?;
    }
    Ok(StepRecord {
        step,
        epoch,
        summed_loss,
        tasks: tasks.len(),
        skipped,
        applied,
    })
}

#[derive(Clone, Debug)]
pub struct MetaOutcome {
    pub params: ParamStore,
    pub optimizer: Optimizer,
    pub log: Vec<StepRecord>,
}

/// Runs up to `cfg.max_meta_updates` meta-steps. Each epoch visits every
/// task once in a seeded shuffled order, in consecutive batches.
/// `on_step` sees each record with the parameters after that step.
pub fn meta_train<L: Learner>(
    learner: &L,
    init: &ParamStore,
    tasks: &[MetaTask<'_, L::Example>],
    cfg: &MetaConfig,
    mut on_step: impl FnMut(&StepRecord, &ParamStore) -> Result<()>,
) -> Result<MetaOutcome> {
    cfg.validate()?;
    let mut params = init.clone();
    let mut optimizer = Optimizer::new(cfg.meta_optimizer);
    let mut log = Vec::new();
    if cfg.max_meta_updates > 0 && tasks.is_empty() {
        return Err(Error::Config("meta-training needs at least one task".into()));
    }
    let mut step = 0;
    let mut epoch = 0u64;
    'outer: while step < cfg.max_meta_updates {
        let mut order: Vec<usize> = (0..tasks.len()).collect();
        order.shuffle(&mut stream_rng(&[purpose::SHUFFLE, cfg.seed, epoch]));
        for chunk in order.chunks(cfg.tasks_per_meta_update) {
            if step >= cfg.max_meta_updates {
                break 'outer;
            }
            let batch: Vec<MetaTask<'_, L::Example>> = chunk.iter().map(|&i| tasks[i].clone()).collect();
            let record = meta_step(learner, &mut params, &mut optimizer, &batch, cfg, step, epoch)?;
            on_step(&record, &params)?;
            log.push(record);
            step += 1;
        }
        epoch += 1;
    }
    Ok(MetaOutcome {
        params,
        optimizer,
        log,
    })
}

#[cfg(test)]
pub(crate) mod probe {
    use super::*;
    use crate::autodiff::{Tape, Tensor};

    /// Loss `½(θ − c)²` per example `c`, summed over the batch.
    pub struct QuadraticProbe;

    impl Learner for QuadraticProbe {
        type Example = f64;

        fn loss_and_grad(
            &self,
            params: &ParamStore,
            batch: &[&f64],
            _objective: &Objective,
            _draw: Draw,
        ) -> Result<(f64, GradientMap)> {
            let mut tape = Tape::new();
            let theta = tape.param(params, "theta")?;
            let mut terms = Vec::new();
            for &&c in batch {
                let shift = tape.constant(Tensor::vector(vec![-c]));
                let d = tape.add(theta, shift);
                let sq = tape.mul(d, d);
                terms.push(tape.scale(sq, 0.5));
            }
            let joined = tape.concat(&terms);
            let loss = tape.sum(joined);
            let value = tape.value(loss).item();
            Ok((value, tape.backward(loss)?))
        }
    }

    pub fn theta(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("theta", Tensor::vector(vec![value]));
        s
    }

    pub fn sgd(alpha: f64, beta: f64, n: usize) -> MetaConfig {
        MetaConfig {
            inner_lr: alpha,
            meta_lr: beta,
            inner_steps: n,
            inner_optimizer: OptimizerKind::Sgd,
            meta_optimizer: OptimizerKind::Sgd,
            ..MetaConfig::default()
        }
    }
}
