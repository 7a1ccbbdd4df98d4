//! The sequence tagger as a trainable learner: loss and gradient over a
//! batch of encoded sentences, and word-level argmax prediction.

use crate::autodiff::{GradientMap, ParamStore, Tape, Var};
use crate::corpus::EncodedSentence;
use crate::encoder::{self, EncoderConfig};
use crate::error::{Error, Result};
use crate::objectives::{check_lambda, mask_entities, record_example_loss};
use crate::rng::{purpose, stream_rng};

/// How per-example losses combine into the loss of a set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    /// Sum of per-example losses.
    SumExamples,
    /// Average of per-example losses.
    MeanExamples,
    /// One loss over the pooled active positions of all examples.
    PooledTokens,
}

/// Which loss is minimized and which augmentations are active.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub lambda: f64,
    pub mask_probability: f64,
    pub dropout: bool,
    pub reduction: Reduction,
}

impl Objective {
    /// Mean token cross-entropy, no masking.
    pub fn plain(dropout: bool, reduction: Reduction) -> Self {
        Self {
            lambda: 0.0,
            mask_probability: 0.0,
            dropout,
            reduction,
        }
    }
}

/// Key material for the random streams of one loss evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Draw {
    pub seed: u64,
    pub epoch: u64,
    pub stream: u64,
}

/// Anything that can report a differentiable loss over a batch of examples.
pub trait Learner: Sync {
    type Example: Sync;

    fn loss_and_grad(
        &self,
        params: &ParamStore,
        batch: &[&Self::Example],
        objective: &Objective,
        draw: Draw,
    ) -> Result<(f64, GradientMap)>;
}

/// Encoder plus softmax head over subword sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct Tagger {
    pub config: EncoderConfig,
    pub mask_id: usize,
}

impl Tagger {
    pub fn new(config: EncoderConfig, mask_id: usize) -> Self {
        Self { config, mask_id }
    }

    /// Gold-label probabilities at the supervised positions of `example`,
    /// one entry per word, gathered across windows.
    fn gold_probabilities<'a>(
        &self,
        tape: &mut Tape<'a>,
        params: &'a ParamStore,
        example: &EncodedSentence,
        objective: &Objective,
        draw: Draw,
    ) -> Result<Option<Var>> {
        let ids = if objective.mask_probability > 0.0 {
            let entity: Vec<bool> = example.word_labels.iter().map(|&l| l != 0).collect();
            let mut rng = stream_rng(&[purpose::MASK, draw.seed, draw.epoch, example.id as u64]);
            mask_entities(&example.seq, &entity, objective.mask_probability, self.mask_id, &mut rng)
        } else {
            example.seq.piece_ids.clone()
        };
        let mut dropout_rng = objective.dropout.then(|| {
            stream_rng(&[
                purpose::DROPOUT,
                draw.seed,
                draw.epoch,
                draw.stream,
                example.id as u64,
            ])
        });
        let mut parts = Vec::with_capacity(example.windows.len());
        for w in &example.windows {
            let out = encoder::forward(
                tape,
                params,
                &self.config,
                &ids[w.start..w.end],
                dropout_rng.as_mut(),
            )?;
            let at: Vec<(usize, usize)> = (w.owned_start()..w.end)
                .filter(|&pos| example.seq.first_piece[pos])
                .map(|pos| {
                    let word = example.seq.word_index[pos].expect("first piece has a word");
                    (pos - w.start, example.word_labels[word])
                })
                .collect();
            if at.is_empty() {
                continue;
            }
            let probs = tape.softmax(out.logits);
            parts.push(tape.pick(probs, &at));
        }
        Ok(match parts.len() {
            0 => None,
            1 => Some(parts[0]),
            _ => Some(tape.concat(&parts)),
        })
    }

    /// Word-level label ids by per-position argmax at first pieces.
    pub fn predict(&self, params: &ParamStore, example: &EncodedSentence) -> Result<Vec<usize>> {
        let mut labels = vec![0; example.word_count()];
        for w in &example.windows {
            let probs =
                encoder::predict_distributions(params, &self.config, &example.seq.piece_ids[w.start..w.end])?;
            for pos in w.owned_start()..w.end {
                if !example.seq.first_piece[pos] {
                    continue;
                }
                let word = example.seq.word_index[pos].expect("first piece has a word");
                labels[word] = argmax(probs.row(pos - w.start));
            }
        }
        Ok(labels)
    }

    /// Retrieval representation of `example` under `params`.
    pub fn sentence_rep(&self, params: &ParamStore, example: &EncodedSentence) -> Result<Vec<f64>> {
        Ok(encoder::sentence_rep(params, &self.config, &example.seq.piece_ids)?)
    }
}

/// Index of the first maximal element.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl Learner for Tagger {
    type Example = EncodedSentence;

    fn loss_and_grad(
        &self,
        params: &ParamStore,
        batch: &[&EncodedSentence],
        objective: &Objective,
        draw: Draw,
    ) -> Result<(f64, GradientMap)> {
        check_lambda(objective.lambda)?;
        let mut tape = Tape::new();
        let mut gold = Vec::with_capacity(batch.len());
        for example in batch {
            if let Some(v) = self.gold_probabilities(&mut tape, params, example, objective, draw)? {
                gold.push(v);
            }
        }
        if gold.is_empty() {
            return Err(Error::Contract("loss over a batch without supervised positions".into()));
        }
        let total = match objective.reduction {
            Reduction::PooledTokens => {
                let pooled = if gold.len() == 1 { gold[0] } else { tape.concat(&gold) };
                record_example_loss(&mut tape, pooled, objective.lambda)
            }
            Reduction::SumExamples | Reduction::MeanExamples => {
                let losses: Vec<Var> = gold
                    .iter()
                    .map(|&g| record_example_loss(&mut tape, g, objective.lambda))
                    .collect();
                let joined = if losses.len() == 1 { losses[0] } else { tape.concat(&losses) };
                if objective.reduction == Reduction::SumExamples {
                    tape.sum(joined)
                } else {
                    tape.mean(joined)
                }
            }
        };
        let value = tape.value(total).item();
        let grads = tape.backward(total)?;
        Ok((value, grads))
    }
}
