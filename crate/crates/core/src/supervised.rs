//! Ordinary mini-batch training on labeled examples.

use rand::seq::SliceRandom;

use crate::autodiff::{Optimizer, OptimizerKind, ParamStore};
use crate::error::{Error, Result};
use crate::rng::{mix, stream_rng};
use crate::tagger::{Draw, Learner, Objective, Reduction};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_updates: usize,
    pub optimizer: OptimizerKind,
    pub dropout: bool,
    pub seed: u64,
    /// Separates the random streams of different training purposes.
    pub purpose: u64,
}

impl TrainConfig {
    /// Updates needed for `epochs` passes over `n` examples.
    pub fn updates_for_epochs(n: usize, batch_size: usize, epochs: usize) -> usize {
        epochs * n.div_ceil(batch_size.max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub epoch: u64,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub optimizer: Optimizer,
    pub log: Vec<TrainRecord>,
}

/// Minimizes the batch-mean of per-example mean token losses, shuffling the
/// examples every epoch, for `cfg.max_updates` steps.
pub fn train_supervised<L: Learner>(
    learner: &L,
    init: &ParamStore,
    examples: &[&L::Example],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&TrainRecord, &ParamStore) -> Result<()>,
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut params = init.clone();
    let mut log = Vec::new();
    let mut optimizer = Optimizer::new(cfg.optimizer);
    if cfg.max_updates == 0 {
        return Ok(TrainOutcome { params, optimizer, log });
    }
    if examples.is_empty() {
        return Err(Error::Config("training needs at least one example".into()));
    }
    let objective = Objective::plain(cfg.dropout, Reduction::MeanExamples);
    let mut step = 0;
    let mut epoch = 0u64;
    'outer: loop {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut stream_rng(&[cfg.purpose, cfg.seed, epoch]));
        for chunk in order.chunks(cfg.batch_size) {
            if step >= cfg.max_updates {
                break 'outer;
            }
            let batch: Vec<&L::Example> = chunk.iter().map(|&i| examples[i]).collect();
            let draw = Draw {
                seed: mix(&[cfg.purpose, cfg.seed]),
                epoch,
                stream: step as u64,
            };
            let (loss, grads) = learner.loss_and_grad(&params, &batch, &objective, draw)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Numerical(format!("training loss {loss} at step {step}")));
            }
            optimizer.step(&mut params, &grads, cfg.lr)?;
            let record = TrainRecord { step, epoch, loss };
            on_step(&record, &params)?;
            log.push(record);
            step += 1;
        }
        epoch += 1;
    }
    Ok(TrainOutcome { params, optimizer, log })
}
