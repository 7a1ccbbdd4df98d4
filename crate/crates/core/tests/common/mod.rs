#![allow(dead_code)]

pub mod fomaml;
pub mod gradcheck;
pub mod retrieval;
pub mod scorer;

use metaner::config::{Preset, RunConfig};
use metaner::pipeline::Workspace;
use metaner::synth::{SynthBench, SynthConfig};

/// A small synthetic benchmark and a workspace sized to train in seconds.
pub fn tiny() -> (Workspace, SynthBench) {
    let bench = SynthBench::generate(&SynthConfig {
        source_size: 80,
        target_test_size: 24,
        target_train_size: 8,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    (Workspace::prepare(&tiny_config(), &bench.source).unwrap(), bench)
}

pub fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::preset(Preset::Benchmark);
    cfg.hidden_size = 8;
    cfg.feedforward_size = 16;
    cfg.vocab_size = 150;
    cfg.meta.max_meta_updates = 4;
    cfg.meta.tasks_per_meta_update = 4;
    cfg.finetune.epochs = 1;
    cfg
}

pub fn with_config(ws: &Workspace, edit: impl FnOnce(&mut RunConfig)) -> Workspace {
    let mut ws = ws.clone();
    edit(&mut ws.config);
    ws
}

/// Every file of a saved checkpoint, by name, for byte comparison.
pub fn checkpoint_bytes(
    params: &metaner::autodiff::ParamStore,
    adam: Option<&metaner::autodiff::AdamState>,
) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt");
    metaner::encoder::save_checkpoint(&path, params, adam).unwrap();
    dir_bytes(&path)
}

pub fn dir_bytes(path: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(path)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Prediction file contents for `predictions` over `gold`.
pub fn prediction_bytes(ws: &Workspace, gold: &[metaner::corpus::Sentence], predictions: &[Vec<usize>]) -> Vec<u8> {
    let names: Vec<Vec<String>> = predictions.iter().map(|p| ws.label_names(p)).collect();
    let mut out = Vec::new();
    metaner::corpus::write_predictions(&mut out, gold, &names).unwrap();
    out
}
