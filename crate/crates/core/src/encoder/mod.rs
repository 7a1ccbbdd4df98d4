//! Small transformer token encoder with a linear softmax classification head.
//!
//! Post-norm blocks (attention, then a GELU feed-forward), learned
//! positional embeddings and a per-position classifier
//! `softmax(W h + b)` with `W: [labels, hidden]`.

mod checkpoint;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::autodiff::{softmax_rows, AutodiffError, ParamStore, Tape, Tensor, Var};
use crate::rng::{purpose, stream_rng, StreamRng};

pub use checkpoint::{
    load_checkpoint, read_manifest, save_checkpoint, tensor_from_blob, write_manifest_and_blob,
    Checkpoint, ManifestRecord,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("input of {len} positions exceeds max_positions {max}")]
    TooLong { len: usize, max: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub layers: usize,
    pub attention_heads: usize,
    pub feedforward_size: usize,
    pub max_positions: usize,
    pub dropout_rate: f64,
    pub label_count: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            hidden_size: 64,
            layers: 2,
            attention_heads: 2,
            feedforward_size: 256,
            max_positions: 128,
            dropout_rate: 0.1,
            label_count: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.vocab_size == 0 {
            return fail("vocab_size must be positive");
        }
        if self.label_count == 0 {
            return fail("label_count must be positive");
        }
        if self.hidden_size == 0 || self.attention_heads == 0 {
            return fail("hidden_size and attention_heads must be positive");
        }
        if self.hidden_size % self.attention_heads != 0 {
            return fail("hidden_size must be divisible by attention_heads");
        }
        if self.max_positions == 0 || self.feedforward_size == 0 {
            return fail("max_positions and feedforward_size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn head_size(&self) -> usize {
        self.hidden_size / self.attention_heads
    }

    /// Names and shapes of every parameter, in checkpoint order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (h, f) = (self.hidden_size, self.feedforward_size);
        let mut out = vec![
            ("embeddings.token".to_string(), vec![self.vocab_size, h]),
            ("embeddings.position".to_string(), vec![self.max_positions, h]),
            ("embeddings.norm.gamma".to_string(), vec![h]),
            ("embeddings.norm.beta".to_string(), vec![h]),
        ];
        for l in 0..self.layers {
            for proj in ["query", "key", "value", "output"] {
                out.push((format!("layer{l}.attention.{proj}.weight"), vec![h, h]));
                out.push((format!("layer{l}.attention.{proj}.bias"), vec![h]));
            }
            out.push((format!("layer{l}.attention.norm.gamma"), vec![h]));
            out.push((format!("layer{l}.attention.norm.beta"), vec![h]));
            out.push((format!("layer{l}.ffn.inner.weight"), vec![h, f]));
            out.push((format!("layer{l}.ffn.inner.bias"), vec![f]));
            out.push((format!("layer{l}.ffn.outer.weight"), vec![f, h]));
            out.push((format!("layer{l}.ffn.outer.bias"), vec![h]));
            out.push((format!("layer{l}.ffn.norm.gamma"), vec![h]));
            out.push((format!("layer{l}.ffn.norm.beta"), vec![h]));
        }
        out.push(("classifier.weight".to_string(), vec![self.label_count, h]));
        out.push(("classifier.bias".to_string(), vec![self.label_count]));
        out
    }
}

/// Standard deviation of the Gaussian used for weights and embeddings.
pub const INIT_STD: f64 = 0.02;

/// Random initialization: N(0, 0.02) weights and embeddings, zero biases,
/// unit layer-norm gains.
pub fn init_params(config: &EncoderConfig, seed: u64) -> Result<ParamStore, ModelError> {
    config.validate()?;
    let mut rng = stream_rng(&[purpose::INIT, seed]);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut store = ParamStore::new();
    for (name, shape) in config.parameter_shapes() {
        let n: usize = shape.iter().product();
        let data = if name.ends_with(".gamma") {
            vec![1.0; n]
        } else if name.ends_with(".bias") || name.ends_with(".beta") {
            vec![0.0; n]
        } else {
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        };
        store.insert(name, Tensor::new(shape, data));
    }
    Ok(store)
}

/// Named parameter groups accepted by [`freeze`].
pub fn group_members(config: &EncoderConfig, group: &str) -> Result<Vec<String>, ModelError> {
    let prefix = match group {
        "embeddings" => "embeddings.".to_string(),
        "classifier" => "classifier.".to_string(),
        g => match g.strip_prefix("layer").and_then(|i| i.parse::<usize>().ok()) {
            Some(i) if i < config.layers => format!("layer{i}."),
            _ => return Err(ModelError::Config(format!("unknown parameter group '{group}'"))),
        },
    };
    Ok(config
        .parameter_shapes()
        .into_iter()
        .map(|(n, _)| n)
        .filter(|n| n.starts_with(&prefix))
        .collect())
}

/// Parses a comma-separated group list such as `embeddings,layer0`.
pub fn parse_freeze_spec(spec: &str) -> Vec<String> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty() && *s != "none")
        .map(str::to_string)
        .collect()
}

/// Replaces the frozen set of `store` with the members of `groups`.
pub fn freeze<S: AsRef<str>>(
    store: &mut ParamStore,
    config: &EncoderConfig,
    groups: &[S],
) -> Result<(), ModelError> {
    let mut names = Vec::new();
    for g in groups {
        names.extend(group_members(config, g.as_ref())?);
    }
    store.unfreeze_all();
    for n in names {
        store.set_frozen(&n, true)?;
    }
    Ok(())
}

/// Output nodes of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    pub hidden: Var,
    pub logits: Var,
}

fn dropout(tape: &mut Tape<'_>, x: Var, rate: f64, rng: Option<&mut StreamRng>) -> Var {
    let Some(rng) = rng else { return x };
    if rate <= 0.0 {
        return x;
    }
    let keep = 1.0 / (1.0 - rate);
    let shape = tape.value(x).shape().to_vec();
    let n = tape.value(x).len();
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let m = tape.constant(Tensor::new(shape, mask));
    tape.mul(x, m)
}

/// Records the encoder and classifier on `tape`. Passing an rng enables
/// dropout (training mode); `None` is evaluation mode.
pub fn forward<'a>(
    tape: &mut Tape<'a>,
    store: &'a ParamStore,
    config: &EncoderConfig,
    piece_ids: &[usize],
    mut rng: Option<&mut StreamRng>,
) -> Result<ForwardOutput, ModelError> {
    let n = piece_ids.len();
    if n > config.max_positions {
        return Err(ModelError::TooLong {
            len: n,
            max: config.max_positions,
        });
    }
    if let Some(&bad) = piece_ids.iter().find(|&&id| id >= config.vocab_size) {
        return Err(ModelError::Config(format!("piece id {bad} outside vocabulary")));
    }
    let rate = config.dropout_rate;
    let p = |tape: &mut Tape<'a>, name: &str| tape.param(store, name);

    let tok = p(tape, "embeddings.token")?;
    let pos = p(tape, "embeddings.position")?;
    let positions: Vec<usize> = (0..n).collect();
    let te = tape.gather(tok, piece_ids);
    let pe = tape.gather(pos, &positions);
    let e = tape.add(te, pe);
    let (g, b) = (p(tape, "embeddings.norm.gamma")?, p(tape, "embeddings.norm.beta")?);
    let mut x = tape.layer_norm(e, g, b);
    x = dropout(tape, x, rate, rng.as_deref_mut());

    let head = config.head_size();
    let inv_sqrt = 1.0 / (head as f64).sqrt();
    for l in 0..config.layers {
        let proj = |tape: &mut Tape<'a>, input: Var, name: &str| -> Result<Var, ModelError> {
            let w = p(tape, &format!("layer{l}.{name}.weight"))?;
            let bias = p(tape, &format!("layer{l}.{name}.bias"))?;
            let y = tape.matmul(input, w);
            Ok(tape.add_row(y, bias))
        };
        let q = proj(tape, x, "attention.query")?;
        let k = proj(tape, x, "attention.key")?;
        let v = proj(tape, x, "attention.value")?;
        let mut heads = Vec::with_capacity(config.attention_heads);
        for h in 0..config.attention_heads {
            let (qh, kh, vh) = if config.attention_heads == 1 {
                (q, k, v)
            } else {
                (
                    tape.slice_cols(q, h * head, head),
                    tape.slice_cols(k, h * head, head),
                    tape.slice_cols(v, h * head, head),
                )
            };
            let scores = tape.matmul_nt(qh, kh);
            let scores = tape.scale(scores, inv_sqrt);
            let probs = tape.softmax(scores);
            heads.push(tape.matmul(probs, vh));
        }
        let ctx = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)
        };
        let attn = proj(tape, ctx, "attention.output")?;
        let attn = dropout(tape, attn, rate, rng.as_deref_mut());
        let res = tape.add(x, attn);
        let (g, b) = (
            p(tape, &format!("layer{l}.attention.norm.gamma"))?,
            p(tape, &format!("layer{l}.attention.norm.beta"))?,
        );
        x = tape.layer_norm(res, g, b);

        let inner = proj(tape, x, "ffn.inner")?;
        let act = tape.gelu(inner);
        let outer = proj(tape, act, "ffn.outer")?;
        let outer = dropout(tape, outer, rate, rng.as_deref_mut());
        let res = tape.add(x, outer);
        let (g, b) = (
            p(tape, &format!("layer{l}.ffn.norm.gamma"))?,
            p(tape, &format!("layer{l}.ffn.norm.beta"))?,
        );
        x = tape.layer_norm(res, g, b);
    }

    let w = p(tape, "classifier.weight")?;
    let bias = p(tape, "classifier.bias")?;
    let logits = tape.matmul_nt(x, w);
    let logits = tape.add_row(logits, bias);
    Ok(ForwardOutput { hidden: x, logits })
}

/// Hidden states for one window in evaluation mode: `[len, hidden]`.
pub fn encode(store: &ParamStore, config: &EncoderConfig, piece_ids: &[usize]) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let out = forward(&mut tape, store, config, piece_ids, None)?;
    Ok(tape.value(out.hidden).clone())
}

/// Per-position label distributions `softmax(W h + b)`.
pub fn classify(store: &ParamStore, hidden: &Tensor) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let h = tape.constant(hidden.clone());
    let w = tape.param(store, "classifier.weight")?;
    let b = tape.param(store, "classifier.bias")?;
    let logits = tape.matmul_nt(h, w);
    let logits = tape.add_row(logits, b);
    Ok(softmax_rows(tape.value(logits)))
}

/// Label distributions for one window in evaluation mode.
pub fn predict_distributions(
    store: &ParamStore,
    config: &EncoderConfig,
    piece_ids: &[usize],
) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let out = forward(&mut tape, store, config, piece_ids, None)?;
    Ok(softmax_rows(tape.value(out.logits)))
}

/// Sentence representation: the final hidden vector at position 0 (`[CLS]`),
/// computed on the first window only.
pub fn sentence_rep(
    store: &ParamStore,
    config: &EncoderConfig,
    piece_ids: &[usize],
) -> Result<Vec<f64>, ModelError> {
    let end = piece_ids.len().min(config.max_positions);
    let h = encode(store, config, &piece_ids[..end])?;
    Ok(h.row(0).to_vec())
}
