//! Token-level cross-entropy with first-subword selection, the
//! max-augmented variant, and random masking of entity subwords.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var, LOG_FLOOR};
use crate::corpus::SubwordSequence;
use crate::error::{Error, Result};

/// Default weight of the max term.
pub const DEFAULT_LAMBDA: f64 = 2.0;
/// Default probability of masking an entity subword.
pub const DEFAULT_MASK_PROBABILITY: f64 = 0.2;

/// Per-position losses; inactive positions carry zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenLossVector {
    pub losses: Vec<f64>,
    pub active: Vec<bool>,
    /// Gold probabilities that were clamped to [`LOG_FLOOR`].
    pub floor_hits: usize,
}

impl TokenLossVector {
    pub fn active_losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.losses
            .iter()
            .zip(&self.active)
            .filter(|(_, &a)| a)
            .map(|(&l, _)| l)
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// `-ln p[gold]` at each active row of `probs`.
pub fn token_losses(probs: &Tensor, gold: &[usize], active: &[bool]) -> TokenLossVector {
    assert_eq!(probs.rows(), gold.len());
    assert_eq!(gold.len(), active.len());
    let mut floor_hits = 0;
    let losses = (0..gold.len())
        .map(|r| {
            if !active[r] {
                return 0.0;
            }
            let p = probs.row(r)[gold[r]];
            if p < LOG_FLOOR {
                floor_hits += 1;
            }
            -p.max(LOG_FLOOR).ln()
        })
        .collect();
    TokenLossVector {
        losses,
        active: active.to_vec(),
        floor_hits,
    }
}

/// Mean over active positions.
pub fn mean_loss(tlv: &TokenLossVector) -> Result<f64> {
    let n = tlv.active_count();
    if n == 0 {
        return Err(Error::Contract("loss over zero active positions".into()));
    }
    Ok(tlv.active_losses().sum::<f64>() / n as f64)
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("lambda must be >= 0, got {lambda}")))
    }
}

/// Mean plus `lambda` times the largest active loss.
pub fn max_augmented_loss(tlv: &TokenLossVector, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let mean = mean_loss(tlv)?;
    let max = tlv.active_losses().fold(f64::NEG_INFINITY, f64::max);
    Ok(mean + lambda * max)
}

/// Records the per-example loss on `tape` from the vector of gold-label
/// probabilities: mean of `-ln p`, plus `lambda * max(-ln p)` when
/// `lambda > 0`.
pub fn record_example_loss(tape: &mut Tape<'_>, gold_probs: Var, lambda: f64) -> Var {
    let logs = tape.log(gold_probs);
    let nll = tape.scale(logs, -1.0);
    let mean = tape.mean(nll);
    if lambda == 0.0 {
        return mean;
    }
    let max = tape.max(nll);
    let weighted = tape.scale(max, lambda);
    tape.add(mean, weighted)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskingConfig {
    pub mask_probability: f64,
    pub seed: u64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            mask_probability: DEFAULT_MASK_PROBABILITY,
            seed: 0,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.mask_probability) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "mask probability must lie in [0, 1], got {}",
                self.mask_probability
            )))
        }
    }
}

/// Replaces each subword of an entity word by `mask_id` independently with
/// probability `p`. Specials and non-entity words are never touched.
/// `word_is_entity[w]` says whether word `w` carries a `B-`/`I-` tag.
pub fn mask_entities<R: Rng + ?Sized>(
    seq: &SubwordSequence,
    word_is_entity: &[bool],
    p: f64,
    mask_id: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut ids = seq.piece_ids.clone();
    if p <= 0.0 {
        return ids;
    }
    for (pos, word) in seq.word_index.iter().enumerate() {
        if let Some(w) = *word {
            if word_is_entity[w] && rng.random::<f64>() < p {
                ids[pos] = mask_id;
            }
        }
    }
    ids
}
