//! End-to-end runs shared by the command line and the acceptance suite:
//! data preparation, training of each ablation variant, prediction and
//! scoring.

use std::fmt;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::str::FromStr;

use crate::adapt::{adapt_corpus, direct_corpus, low_resource_finetune, SourcePool};
use crate::autodiff::{Optimizer, OptimizerKind, ParamStore};
use crate::config::RunConfig;
use crate::corpus::{
    encode_corpus, learn_vocab, parse_conll, ColumnSpec, EncodedSentence, LabelSet, Sentence, Vocabulary,
};
use crate::encoder::{freeze, init_params, load_checkpoint, parse_freeze_spec, EncoderConfig};
use crate::error::{Error, Result};
use crate::evaluation::{phrase_f1, ScoreReport};
use crate::metatrain::{meta_train, MetaConfig, MetaTask, StepRecord};
use crate::retrieval::{tasks_for_index, RetrievalIndex};
use crate::rng::purpose;
use crate::supervised::{train_supervised, TrainConfig};
use crate::tagger::Tagger;

/// Vocabulary, labels and encoded source corpus for one configuration.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub config: RunConfig,
    pub vocab: Vocabulary,
    pub labels: LabelSet,
    pub source: Vec<EncodedSentence>,
    pub tagger: Tagger,
}

impl Workspace {
    /// Learns the vocabulary and label set from `source`.
    pub fn prepare(config: &RunConfig, source: &[Sentence]) -> Result<Self> {
        let vocab = learn_vocab(source, config.vocab_size)?;
        let labels = LabelSet::from_corpus(source);
        Self::with_vocab(config, vocab, labels, source)
    }

    pub fn with_vocab(config: &RunConfig, vocab: Vocabulary, labels: LabelSet, source: &[Sentence]) -> Result<Self> {
        config.validate()?;
        if source.is_empty() {
            return Err(Error::Config("source corpus is empty".into()));
        }
        let encoder = config.encoder_config(vocab.len(), labels.len());
        encoder.validate()?;
        let tagger = Tagger::new(encoder, vocab.specials().mask);
        let source = encode_corpus(source, &vocab, &labels, config.max_len, config.context_len)?;
        Ok(Self {
            config: config.clone(),
            vocab,
            labels,
            source,
            tagger,
        })
    }

    pub fn encoder(&self) -> &EncoderConfig {
        &self.tagger.config
    }

    pub fn encode(&self, sentences: &[Sentence]) -> Result<Vec<EncodedSentence>> {
        Ok(encode_corpus(
            sentences,
            &self.vocab,
            &self.labels,
            self.config.max_len,
            self.config.context_len,
        )?)
    }

    /// Fresh parameters with the configured groups frozen.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        let mut params = init_params(self.encoder(), seed)?;
        freeze(&mut params, self.encoder(), &parse_freeze_spec(&self.config.freeze))?;
        Ok(params)
    }

    pub fn label_names(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.labels.name(i).to_string())
            .collect()
    }

    pub fn score(&self, gold: &[Sentence], predictions: &[Vec<usize>]) -> Result<ScoreReport> {
        let gold_labels: Vec<Vec<String>> = gold.iter().map(|s| s.labels.clone()).collect();
        let pred: Vec<Vec<String>> = predictions.iter().map(|p| self.label_names(p)).collect();
        Ok(phrase_f1(&gold_labels, &pred)?)
    }
}

/// Files of a run directory.
pub mod run_files {
    pub const CONFIG: &str = "config.txt";
    pub const VOCAB: &str = "vocab.txt";
    pub const LABELS: &str = "labels.txt";
    pub const CHECKPOINT: &str = "checkpoint";
    pub const LOG: &str = "train.log";
}

/// Reads a CoNLL corpus; a missing file is a configuration error.
pub fn read_corpus(path: &Path) -> Result<Vec<Sentence>> {
    if !path.exists() {
        return Err(Error::Config(format!("corpus {} does not exist", path.display())));
    }
    Ok(parse_conll(BufReader::new(File::open(path)?), ColumnSpec::default())?)
}

/// Writes the resolved config, vocabulary and label set next to a checkpoint.
pub fn write_run_metadata(ws: &Workspace, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(run_files::CONFIG), ws.config.to_text())?;
    let mut vocab = Vec::new();
    ws.vocab.write(&mut vocab)?;
    fs::write(dir.join(run_files::VOCAB), vocab)?;
    fs::write(dir.join(run_files::LABELS), format!("{}\n", ws.labels.to_line()))?;
    Ok(())
}

/// The config saved in a run directory.
pub fn read_run_config(dir: &Path) -> Result<RunConfig> {
    let path = dir.join(run_files::CONFIG);
    if !path.exists() {
        return Err(Error::Config(format!("{} does not exist", path.display())));
    }
    RunConfig::from_text(&fs::read_to_string(path)?)
}

/// Workspace and trained parameters of a run directory under `config`,
/// which normally starts from [`read_run_config`].
pub fn load_run(dir: &Path, config: &RunConfig) -> Result<(Workspace, ParamStore)> {
    let vocab = Vocabulary::read(BufReader::new(File::open(dir.join(run_files::VOCAB))?))?;
    let labels = LabelSet::from_line(fs::read_to_string(dir.join(run_files::LABELS))?.trim())?;
    let source_path = config
        .source
        .as_deref()
        .ok_or_else(|| Error::Config("run config names no source corpus".into()))?;
    let ws = Workspace::with_vocab(config, vocab, labels, &read_corpus(source_path)?)?;
    let params = load_checkpoint(&dir.join(run_files::CHECKPOINT), ws.encoder())?.params;
    Ok((ws, params))
}

/// Rows of the ablation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Full,
    NoMax,
    NoMask,
    NoMaxMask,
    Base,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoMax,
        Variant::NoMask,
        Variant::NoMaxMask,
        Variant::Base,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMax => "no-max",
            Variant::NoMask => "no-mask",
            Variant::NoMaxMask => "no-max-mask",
            Variant::Base => "base",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Variant::Full => "meta-training with masking and max loss",
            Variant::NoMax => "w/o max loss",
            Variant::NoMask => "w/o masking",
            Variant::NoMaxMask => "w/o max loss and masking",
            Variant::Base => "base model (no meta-training)",
        }
    }

    pub fn is_meta(self) -> bool {
        self != Variant::Base
    }

    /// Meta-training settings of this variant; `None` for the base model.
    pub fn meta_config(self, base: &MetaConfig) -> Option<MetaConfig> {
        let mut cfg = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoMax => cfg.lambda = 0.0,
            Variant::NoMask => cfg.mask_probability = 0.0,
            Variant::NoMaxMask => {
                cfg.lambda = 0.0;
                cfg.mask_probability = 0.0;
            }
            Variant::Base => return None,
        }
        Some(cfg)
    }

    pub fn parse_list(text: &str) -> Result<Vec<Variant>> {
        text.split(',')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant '{s}' (expected full, no-max, no-mask, no-max-mask or base)"
                ))
            })
    }
}

/// Training progress line handed to callers.
#[derive(Clone, Copy, Debug)]
pub enum Progress<'a> {
    Meta(&'a StepRecord),
    Supervised { step: usize, loss: f64 },
}

impl fmt::Display for Progress<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Progress::Meta(r) => r.fmt(f),
            Progress::Supervised { step, loss } => write!(f, "step={step} loss={loss:.6}"),
        }
    }
}

/// Supervised training budget matched to meta-training: one update per
/// meta-step, one sentence per task.
pub fn base_train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        lr: cfg.meta.meta_lr,
        batch_size: cfg.meta.tasks_per_meta_update,
        max_updates: cfg.meta.max_meta_updates,
        optimizer: OptimizerKind::Adam,
        dropout: cfg.meta.dropout,
        seed: cfg.seed,
        purpose: purpose::BASE,
    }
}

/// Pseudo tasks over the source corpus, retrieved with `params`.
pub fn build_meta_tasks<'w>(ws: &'w Workspace, params: &ParamStore) -> Result<Vec<MetaTask<'w, EncodedSentence>>> {
    let index = RetrievalIndex::build(&ws.tagger, params, &ws.source)?;
    let tasks = tasks_for_index(&index, ws.config.adapt.k)?;
    let pos: std::collections::HashMap<usize, &EncodedSentence> = ws.source.iter().map(|s| (s.id, s)).collect();
    Ok(tasks
        .into_iter()
        .enumerate()
        .map(|(i, t)| MetaTask {
            id: i,
            train: t.train.iter().map(|id| pos[id]).collect(),
            test: vec![pos[&t.test]],
        })
        .collect())
}

/// Parameters after training plus the optimizer state that produced them.
#[derive(Clone, Debug)]
pub struct Trained {
    pub params: ParamStore,
    pub optimizer: Optimizer,
}

/// Trains `variant` from the initialization of `seed`.
pub fn train_variant(
    ws: &Workspace,
    variant: Variant,
    seed: u64,
    mut progress: impl FnMut(Progress<'_>, &ParamStore) -> Result<()>,
) -> Result<Trained> {
    let cfg = ws.config.seeded(seed);
    let init = ws.init_params(seed)?;
    match variant.meta_config(&cfg.meta) {
        Some(meta) => {
            let tasks = build_meta_tasks(ws, &init)?;
            let out = meta_train(&ws.tagger, &init, &tasks, &meta, |r, p| progress(Progress::Meta(r), p))?;
            Ok(Trained {
                params: out.params,
                optimizer: out.optimizer,
            })
        }
        None => {
            let refs: Vec<&EncodedSentence> = ws.source.iter().collect();
            let out = train_supervised(&ws.tagger, &init, &refs, &base_train_config(&cfg), |r, p| {
                progress(
                    Progress::Supervised {
                        step: r.step,
                        loss: r.loss,
                    },
                    p,
                )
            })?;
            Ok(Trained {
                params: out.params,
                optimizer: out.optimizer,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    Direct,
    Adapt,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(EvalMode::Direct),
            "adapt" => Ok(EvalMode::Adapt),
            other => Err(Error::Config(format!("unknown mode '{other}' (expected direct or adapt)"))),
        }
    }
}

/// Label ids for every test sentence under `mode`. Adaptation retrieves from
/// the source corpus re-encoded with `params`.
pub fn predict(ws: &Workspace, params: &ParamStore, tests: &[EncodedSentence], mode: EvalMode, seed: u64) -> Result<Vec<Vec<usize>>> {
    let cfg = ws.config.seeded(seed);
    match mode {
        EvalMode::Direct => direct_corpus(&ws.tagger, params, tests, cfg.workers),
        EvalMode::Adapt if cfg.adapt.is_degenerate() => direct_corpus(&ws.tagger, params, tests, cfg.workers),
        EvalMode::Adapt => {
            let index = RetrievalIndex::build(&ws.tagger, params, &ws.source)?;
            let pool = SourcePool::new(&ws.source);
            let out = adapt_corpus(&ws.tagger, params, tests, &pool, &index, &cfg.adapt, cfg.workers)?;
            Ok(out.into_iter().map(|a| a.labels).collect())
        }
    }
}

/// Evaluation mode each variant is reported under.
pub fn variant_mode(variant: Variant) -> EvalMode {
    if variant.is_meta() {
        EvalMode::Adapt
    } else {
        EvalMode::Direct
    }
}

/// F1 per seed for one variant.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantScores {
    pub variant: Variant,
    pub f1: Vec<f64>,
}

impl VariantScores {
    pub fn mean(&self) -> f64 {
        mean(&self.f1)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Ablation table: every variant trained and scored under every seed.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<VariantScores>,
}

impl AblationTable {
    pub fn row(&self, variant: Variant) -> Option<&VariantScores> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// One `key=value` record per variant and seed, then one per mean.
    pub fn to_records(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut out = format!("# seeds={}\n", seeds.join(","));
        for row in &self.rows {
            for (seed, f1) in self.seeds.iter().zip(&row.f1) {
                out.push_str(&format!("variant={} seed={seed} f1={:.4}\n", row.variant, f1 * 100.0));
            }
            out.push_str(&format!("variant={} seed=mean f1={:.4}\n", row.variant, row.mean() * 100.0));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12} {:<40} {:>8}", "variant", "description", "mean F1");
        for s in &self.seeds {
            out.push_str(&format!(" {:>8}", format!("seed {s}")));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{:<12} {:<40} {:>8.2}",
                row.variant.name(),
                row.variant.description(),
                row.mean() * 100.0
            ));
            for f in &row.f1 {
                out.push_str(&format!(" {:>8.2}", f * 100.0));
            }
            out.push('\n');
        }
        out
    }
}

/// Trains and scores `variants` under each seed on `test`.
pub fn run_ablation(
    ws: &Workspace,
    variants: &[Variant],
    seeds: &[u64],
    test: &[Sentence],
    mut progress: impl FnMut(Variant, u64, Progress<'_>),
) -> Result<AblationTable> {
    let encoded = ws.encode(test)?;
    let mut rows: Vec<VariantScores> = variants
        .iter()
        .map(|&v| VariantScores { variant: v, f1: Vec::new() })
        .collect();
    for &seed in seeds {
        for row in &mut rows {
            let v = row.variant;
            let params = train_variant(ws, v, seed, |p, _| {
                progress(v, seed, p);
                Ok(())
            })?
            .params;
            let pred = predict(ws, &params, &encoded, variant_mode(v), seed)?;
            row.f1.push(ws.score(test, &pred)?.overall.f1);
        }
    }
    Ok(AblationTable {
        seeds: seeds.to_vec(),
        rows,
    })
}

/// Direct-transfer F1 before and after fine-tuning on a labeled target subset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowResourceScore {
    pub seed: u64,
    pub direct_f1: f64,
    pub finetuned_f1: f64,
}

pub fn low_resource_eval(
    ws: &Workspace,
    params: &ParamStore,
    subset: &[Sentence],
    test: &[Sentence],
    seed: u64,
) -> Result<LowResourceScore> {
    let cfg = ws.config.seeded(seed);
    let tests = ws.encode(test)?;
    let direct = direct_corpus(&ws.tagger, params, &tests, cfg.workers)?;
    let tuned = low_resource_finetune(&ws.tagger, params, &ws.encode(subset)?, &cfg.finetune)?;
    let after = direct_corpus(&ws.tagger, &tuned, &tests, cfg.workers)?;
    Ok(LowResourceScore {
        seed,
        direct_f1: ws.score(test, &direct)?.overall.f1,
        finetuned_f1: ws.score(test, &after)?.overall.f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{SynthBench, SynthConfig};

    fn tiny() -> (Workspace, SynthBench) {
        let bench = SynthBench::generate(&SynthConfig {
            source_size: 60,
            target_test_size: 20,
            target_train_size: 5,
            seed: 2,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut cfg = RunConfig::preset(crate::config::Preset::Benchmark);
        cfg.hidden_size = 8;
        cfg.feedforward_size = 16;
        cfg.vocab_size = 120;
        cfg.meta.max_meta_updates = 2;
        cfg.meta.tasks_per_meta_update = 4;
        (Workspace::prepare(&cfg, &bench.source).unwrap(), bench)
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!(Variant::parse_list("full,base").unwrap(), vec![Variant::Full, Variant::Base]);
        assert!(Variant::parse_list("full,nope").is_err());
    }

    #[test]
    fn variant_settings() {
        let m = MetaConfig::default();
        assert_eq!(Variant::NoMax.meta_config(&m).unwrap().lambda, 0.0);
        assert_eq!(Variant::NoMask.meta_config(&m).unwrap().mask_probability, 0.0);
        assert_eq!(Variant::Full.meta_config(&m).unwrap(), m);
        assert!(Variant::Base.meta_config(&m).is_none());
    }

    #[test]
    fn tasks_cover_the_source_corpus() {
        let (ws, _) = tiny();
        let init = ws.init_params(0).unwrap();
        let tasks = build_meta_tasks(&ws, &init).unwrap();
        assert_eq!(tasks.len(), ws.source.len());
        for t in &tasks {
            assert_eq!(t.train.len(), 2);
            assert!(t.train.iter().all(|s| s.id != t.test[0].id));
        }
    }

    #[test]
    fn small_ablation_is_deterministic() {
        let (ws, bench) = tiny();
        let variants = [Variant::Full, Variant::Base];
        let a = run_ablation(&ws, &variants, &[1], &bench.target_test, |_, _, _| {}).unwrap();
        let b = run_ablation(&ws, &variants, &[1], &bench.target_test, |_, _, _| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 2);
        assert!(a.to_records().starts_with("# seeds=1\n"));
    }
}
