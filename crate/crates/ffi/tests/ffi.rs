use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use metaner::config::{Preset, RunConfig};
use metaner::corpus::write_conll;
use metaner::encoder::save_checkpoint;
use metaner::pipeline::{predict, run_files, train_variant, write_run_metadata, EvalMode, Variant, Workspace};
use metaner::synth::{SynthBench, SynthConfig};
use metaner_ffi::*;

fn make_run(dir: &Path) -> (Workspace, SynthBench) {
    let bench = SynthBench::generate(&SynthConfig {
        source_size: 40,
        target_test_size: 6,
        target_train_size: 3,
        seed: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let src = dir.join("source.conll");
    let mut buf = Vec::new();
    write_conll(&mut buf, &bench.source).unwrap();
    std::fs::write(&src, buf).unwrap();
    let mut cfg = RunConfig::preset(Preset::Benchmark);
    cfg.hidden_size = 8;
    cfg.feedforward_size = 16;
    cfg.vocab_size = 100;
    cfg.meta.max_meta_updates = 2;
    cfg.meta.tasks_per_meta_update = 4;
    cfg.source = Some(src);
    let ws = Workspace::prepare(&cfg, &bench.source).unwrap();
    let trained = train_variant(&ws, Variant::Full, 0, |_, _| Ok(())).unwrap();
    write_run_metadata(&ws, dir).unwrap();
    save_checkpoint(&dir.join(run_files::CHECKPOINT), &trained.params, None).unwrap();
    (ws, bench)
}

fn last_error() -> String {
    let p = metaner_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn predictions_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, bench) = make_run(dir.path());
    let params = metaner::encoder::load_checkpoint(&dir.path().join(run_files::CHECKPOINT), ws.encoder())
        .unwrap()
        .params;
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { metaner_model_load(path.as_ptr(), &mut model) }, MetanerStatus::Ok);

    let mut count = 0;
    assert_eq!(unsafe { metaner_model_label_count(model, &mut count) }, MetanerStatus::Ok);
    assert_eq!(count, ws.labels.len());
    let mut buf = [0 as c_char; 16];
    let mut needed = 0;
    assert_eq!(
        unsafe { metaner_model_label_name(model, 0, buf.as_mut_ptr(), buf.len(), &mut needed) },
        MetanerStatus::Ok
    );
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), ws.labels.name(0));
    assert_eq!(needed, ws.labels.name(0).len() + 1);
    assert_eq!(
        unsafe { metaner_model_label_name(model, 0, buf.as_mut_ptr(), 1, &mut needed) },
        MetanerStatus::BufferTooSmall
    );

    for (mode, ffi_mode) in [(EvalMode::Direct, MetanerMode::Direct), (EvalMode::Adapt, MetanerMode::Adapt)] {
        for s in &bench.target_test {
            // Sentence ids key the adaptation dropout; the handle tags id 0.
            let mut alone = s.clone();
            alone.id = 0;
            let expected = predict(&ws, &params, &ws.encode(&[alone]).unwrap(), mode, 0).unwrap();
            let toks: Vec<CString> = s.tokens.iter().map(|t| CString::new(t.as_str()).unwrap()).collect();
            let ptrs: Vec<*const c_char> = toks.iter().map(|t| t.as_ptr()).collect();
            let mut out = vec![usize::MAX; ptrs.len()];
            let status =
                unsafe { metaner_model_predict(model, ptrs.as_ptr(), ptrs.len(), ffi_mode, 0, out.as_mut_ptr()) };
            assert_eq!(status, MetanerStatus::Ok);
            assert_eq!(out, expected[0]);
        }
    }
    unsafe { metaner_model_free(model) };
}

#[test]
fn errors_carry_status_and_message() {
    let mut model = ptr::null_mut();
    let missing = CString::new("/nonexistent/run").unwrap();
    assert_eq!(unsafe { metaner_model_load(missing.as_ptr(), &mut model) }, MetanerStatus::Config);
    assert!(model.is_null());
    assert!(last_error().contains("does not exist"));

    assert_eq!(unsafe { metaner_model_load(ptr::null(), &mut model) }, MetanerStatus::NullPointer);
    assert_eq!(unsafe { metaner_model_load(missing.as_ptr(), ptr::null_mut()) }, MetanerStatus::NullPointer);

    let bad = [0xffu8, 0];
    assert_eq!(
        unsafe { metaner_model_load(bad.as_ptr().cast(), &mut model) },
        MetanerStatus::InvalidUtf8
    );
    unsafe { metaner_model_free(ptr::null_mut()) };
}

#[test]
fn scores_prediction_files() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("pred.txt");
    std::fs::write(&file, "a B-PER B-PER\nb I-PER O\n\nc B-LOC B-LOC\n").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let mut score = MetanerScore::default();
    assert_eq!(unsafe { metaner_score_prediction_file(path.as_ptr(), &mut score) }, MetanerStatus::Ok);
    assert_eq!((score.gold, score.predicted, score.correct), (2, 2, 1));
    assert!((score.f1 - 0.5).abs() < 1e-12);

    std::fs::write(&file, "B-PER\n").unwrap();
    assert_eq!(
        unsafe { metaner_score_prediction_file(path.as_ptr(), &mut score) },
        MetanerStatus::Data
    );
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"metaner.h\"\nint main(void) { MetanerModel *m = 0; return metaner_model_load(\"x\", &m) == METANER_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header)
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler; skipping header check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
