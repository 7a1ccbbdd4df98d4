//! Run configuration: every knob of a run, serialized as `key=value` lines.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::adapt::{AdaptConfig, FinetuneConfig, PAPER_ADAPT_LR};
use crate::autodiff::OptimizerKind;
use crate::corpus::{DEFAULT_CONTEXT_LEN, DEFAULT_MAX_LEN};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::metatrain::{MetaConfig, PAPER_INNER_LR, PAPER_META_LR};
use crate::synth::SynthConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    pub workers: usize,

    pub vocab_size: usize,
    pub max_len: usize,
    pub context_len: usize,
    pub hidden_size: usize,
    pub layers: usize,
    pub attention_heads: usize,
    pub feedforward_size: usize,
    pub max_positions: usize,
    pub dropout: f64,
    /// Comma-separated freeze groups (`embeddings`, `layer<i>`, `classifier`).
    pub freeze: String,

    pub meta: MetaConfig,
    pub adapt: AdaptConfig,
    pub finetune: FinetuneConfig,
    pub checkpoint_every: usize,

    pub synth: SynthConfig,

    pub source: Option<PathBuf>,
    pub target_test: Option<PathBuf>,
    pub target_train: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            seed: 0,
            workers: 0,
            vocab_size: 600,
            max_len: DEFAULT_MAX_LEN,
            context_len: DEFAULT_CONTEXT_LEN,
            hidden_size: 64,
            layers: 2,
            attention_heads: 2,
            feedforward_size: 256,
            max_positions: 128,
            dropout: 0.1,
            freeze: "embeddings".into(),
            meta: MetaConfig::default(),
            adapt: AdaptConfig::default(),
            finetune: FinetuneConfig::default(),
            checkpoint_every: 0,
            synth: SynthConfig::default(),
            source: None,
            target_test: None,
            target_train: None,
            output: None,
        }
    }
}

/// Named starting points for a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Small encoder trained from scratch.
    Default,
    /// Reduced model and budget for the synthetic benchmark on one core.
    Benchmark,
    /// Learning rates and freezing for a pretrained 12-layer encoder.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Preset::Default),
            "benchmark" => Ok(Preset::Benchmark),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected default, benchmark or paper)"
            ))),
        }
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self::default();
        match preset {
            Preset::Default => {}
            Preset::Benchmark => {
                cfg.hidden_size = 32;
                cfg.layers = 1;
                cfg.feedforward_size = 64;
                cfg.meta.max_meta_updates = 1000;
                // A randomly initialized encoder has nothing worth freezing.
                cfg.freeze = String::new();
            }
            Preset::Paper => {
                cfg.hidden_size = 768;
                cfg.layers = 12;
                cfg.attention_heads = 12;
                cfg.feedforward_size = 3072;
                cfg.max_positions = 512;
                cfg.freeze = "embeddings,layer0,layer1,layer2".into();
                cfg.meta.inner_lr = PAPER_INNER_LR;
                cfg.meta.meta_lr = PAPER_META_LR;
                cfg.adapt.lr = PAPER_ADAPT_LR;
                cfg.adapt.optimizer = OptimizerKind::Adam;
            }
        }
        cfg
    }

    pub fn encoder_config(&self, vocab_size: usize, label_count: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            hidden_size: self.hidden_size,
            layers: self.layers,
            attention_heads: self.attention_heads,
            feedforward_size: self.feedforward_size,
            max_positions: self.max_positions,
            dropout_rate: self.dropout,
            label_count,
        }
    }

    /// Copies of the nested configs carrying the run seed.
    pub fn seeded(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg.meta.seed = seed;
        cfg.adapt.seed = seed;
        cfg.finetune.seed = seed;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len > self.max_positions {
            return Err(Error::Config(format!(
                "max_len {} exceeds max_positions {}",
                self.max_len, self.max_positions
            )));
        }
        if self.context_len >= self.max_len {
            return Err(Error::Config("context_len must be below max_len".into()));
        }
        self.meta.validate()?;
        self.adapt.validate()?;
        if self.finetune.batch_size == 0 {
            return Err(Error::Config("finetune_batch must be at least 1".into()));
        }
        self.encoder_config(self.vocab_size, 3).validate()?;
        Ok(())
    }

    /// Every key in serialization order.
    pub fn keys() -> Vec<&'static str> {
        Self::default().pairs().into_iter().map(|(k, _)| k).collect()
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        vec![
            ("run_id", self.run_id.clone()),
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("max_len", self.max_len.to_string()),
            ("context_len", self.context_len.to_string()),
            ("hidden_size", self.hidden_size.to_string()),
            ("layers", self.layers.to_string()),
            ("attention_heads", self.attention_heads.to_string()),
            ("feedforward_size", self.feedforward_size.to_string()),
            ("max_positions", self.max_positions.to_string()),
            ("dropout", self.dropout.to_string()),
            ("freeze", self.freeze.clone()),
            ("inner_lr", self.meta.inner_lr.to_string()),
            ("meta_lr", self.meta.meta_lr.to_string()),
            ("inner_steps", self.meta.inner_steps.to_string()),
            ("tasks_per_meta_update", self.meta.tasks_per_meta_update.to_string()),
            ("max_meta_updates", self.meta.max_meta_updates.to_string()),
            ("lambda", self.meta.lambda.to_string()),
            ("mask_probability", self.meta.mask_probability.to_string()),
            ("inner_optimizer", self.meta.inner_optimizer.to_string()),
            ("meta_optimizer", self.meta.meta_optimizer.to_string()),
            ("train_dropout", self.meta.dropout.to_string()),
            ("k", self.adapt.k.to_string()),
            ("gamma", self.adapt.lr.to_string()),
            ("adapt_optimizer", self.adapt.optimizer.to_string()),
            ("adapt_max_loss", self.adapt.max_loss.to_string()),
            ("adapt_dropout", self.adapt.dropout.to_string()),
            ("finetune_epochs", self.finetune.epochs.to_string()),
            ("finetune_lr", self.finetune.lr.to_string()),
            ("finetune_batch", self.finetune.batch_size.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("synth_types", self.synth.entity_types.join(",")),
            ("synth_stems", self.synth.stems_per_type.to_string()),
            ("synth_source_size", self.synth.source_size.to_string()),
            ("synth_target_test_size", self.synth.target_test_size.to_string()),
            ("synth_target_train_size", self.synth.target_train_size.to_string()),
            ("synth_overlap", self.synth.overlap.to_string()),
            ("synth_fillers", self.synth.fillers.to_string()),
            ("synth_seed", self.synth.seed.to_string()),
            ("source", path(&self.source)),
            ("target_test", path(&self.target_test)),
            ("target_train", path(&self.target_train)),
            ("output", path(&self.output)),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" | "1" => Ok(true),
                "false" | "0" => Ok(false),
                _ => Err(Error::Config(format!("invalid value '{value}' for {key} (expected true or false)"))),
            }
        }
        fn opt(key: &str, value: &str) -> Result<OptimizerKind> {
            value.parse().map_err(|e: String| Error::Config(format!("{key}: {e}")))
        }
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "run_id" => self.run_id = value.to_string(),
            "seed" => self.seed = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "vocab_size" => self.vocab_size = num(key, value)?,
            "max_len" => self.max_len = num(key, value)?,
            "context_len" => self.context_len = num(key, value)?,
            "hidden_size" => self.hidden_size = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "attention_heads" => self.attention_heads = num(key, value)?,
            "feedforward_size" => self.feedforward_size = num(key, value)?,
            "max_positions" => self.max_positions = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "freeze" => self.freeze = value.to_string(),
            "inner_lr" => self.meta.inner_lr = num(key, value)?,
            "meta_lr" => self.meta.meta_lr = num(key, value)?,
            "inner_steps" => self.meta.inner_steps = num(key, value)?,
            "tasks_per_meta_update" => self.meta.tasks_per_meta_update = num(key, value)?,
            "max_meta_updates" => self.meta.max_meta_updates = num(key, value)?,
            "lambda" => self.meta.lambda = num(key, value)?,
            "mask_probability" => self.meta.mask_probability = num(key, value)?,
            "inner_optimizer" => self.meta.inner_optimizer = opt(key, value)?,
            "meta_optimizer" => self.meta.meta_optimizer = opt(key, value)?,
            "train_dropout" => self.meta.dropout = flag(key, value)?,
            "k" => self.adapt.k = num(key, value)?,
            "gamma" => self.adapt.lr = num(key, value)?,
            "adapt_optimizer" => self.adapt.optimizer = opt(key, value)?,
            "adapt_max_loss" => self.adapt.max_loss = flag(key, value)?,
            "adapt_dropout" => self.adapt.dropout = flag(key, value)?,
            "finetune_epochs" => self.finetune.epochs = num(key, value)?,
            "finetune_lr" => self.finetune.lr = num(key, value)?,
            "finetune_batch" => self.finetune.batch_size = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "synth_types" => {
                self.synth.entity_types = value.split(',').filter(|t| !t.is_empty()).map(str::to_string).collect()
            }
            "synth_stems" => self.synth.stems_per_type = num(key, value)?,
            "synth_source_size" => self.synth.source_size = num(key, value)?,
            "synth_target_test_size" => self.synth.target_test_size = num(key, value)?,
            "synth_target_train_size" => self.synth.target_train_size = num(key, value)?,
            "synth_overlap" => self.synth.overlap = num(key, value)?,
            "synth_fillers" => self.synth.fillers = num(key, value)?,
            "synth_seed" => self.synth.seed = num(key, value)?,
            "source" => self.source = path(value),
            "target_test" => self.target_test = path(value),
            "target_train" => self.target_train = path(value),
            "output" => self.output = path(value),
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        // Lambda is also the optional adaptation max weight.
        if key == "lambda" {
            self.adapt.lambda = self.meta.lambda;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Applies `key=value` lines on top of `self`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key=value", i + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_reference_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.adapt.k, 2);
        assert_eq!(c.meta.mask_probability, 0.2);
        assert_eq!(c.meta.lambda, 2.0);
        assert_eq!(c.meta.inner_steps, 2);
        assert_eq!(c.meta.tasks_per_meta_update, 32);
        assert_eq!(c.meta.max_meta_updates, 3000);
        assert_eq!((c.max_len, c.context_len), (128, 64));
        assert_eq!((c.meta.inner_lr, c.meta.meta_lr, c.adapt.lr), (1e-3, 1e-3, 3e-4));
        let p = RunConfig::preset(Preset::Paper);
        assert_eq!((p.meta.inner_lr, p.meta.meta_lr, p.adapt.lr), (3e-5, 3e-5, 1e-5));
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::preset(Preset::Benchmark);
        c.source = Some("/tmp/a b.conll".into());
        c.meta.inner_optimizer = OptimizerKind::Sgd;
        c.adapt.max_loss = true;
        c.meta.inner_lr = 1.0 / 3.0;
        let back = RunConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::keys().len(), c.pairs().len());
    }

    #[test]
    fn bad_lines_are_config_errors() {
        assert!(matches!(RunConfig::from_text("nope=1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_text("seed"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_text("seed=x"), Err(Error::Config(_))));
        assert!(RunConfig::from_text("# comment\n\nseed=4").unwrap().seed == 4);
    }
}
