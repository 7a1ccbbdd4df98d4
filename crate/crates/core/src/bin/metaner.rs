//! Command-line entry point: meta-train, adapt-eval, ablate, score,
//! gen-synth and low-resource.
//!
//! Every configuration key is also a long flag (`inner_lr` -> `--inner-lr`).
//! Values are applied in order: preset, `--config` file, the run directory's
//! saved config (where a subcommand reads one), then explicit flags.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use metaner::autodiff::{Optimizer, ParamStore};
use metaner::config::{Preset, RunConfig};
use metaner::corpus::{write_predictions, Sentence};
use metaner::encoder::save_checkpoint;
use metaner::evaluation::{score_file_pair, score_prediction_file, ScoreReport};
use metaner::pipeline::{
    load_run, low_resource_eval, mean, predict, read_corpus, run_ablation, run_files, train_variant,
    variant_mode, write_run_metadata, EvalMode, Progress, Variant, Workspace,
};
use metaner::synth::SynthBench;
use metaner::{Error, Result};

const DATA_DIR: &str = "data";

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn config_args() -> Vec<Arg> {
    let mut args = vec![
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("key=value configuration file"),
        Arg::new("preset")
            .long("preset")
            .value_name("NAME")
            .help("default, benchmark or paper"),
    ];
    for key in RunConfig::keys() {
        let name = flag_name(key);
        args.push(
            Arg::new(key)
                .long(name)
                .value_name("VALUE")
                .help(format!("sets configuration key {key}")),
        );
    }
    args
}

fn seeds_arg() -> Arg {
    Arg::new("seeds")
        .long("seeds")
        .value_name("LIST")
        .help("comma-separated seeds; results are reported per seed and averaged")
}

fn run_arg() -> Arg {
    Arg::new("run")
        .long("run")
        .value_name("DIR")
        .required(true)
        .help("run directory written by meta-train")
}

fn cli() -> Command {
    let with_config = |c: Command| c.args(config_args());
    Command::new("metaner")
        .about("Meta-learning for minimal-resource cross-lingual named entity recognition")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            with_config(Command::new("meta-train"))
                .about("Train a model; --output names the run directory")
                .arg(
                    Arg::new("variant")
                        .long("variant")
                        .value_name("NAME")
                        .default_value("full")
                        .help("full, no-max, no-mask, no-max-mask or base"),
                )
                .arg(
                    Arg::new("synthetic")
                        .long("synthetic")
                        .action(ArgAction::SetTrue)
                        .help("generate the synthetic benchmark into the run directory and train on it"),
                ),
        )
        .subcommand(
            with_config(Command::new("adapt-eval"))
                .about("Predict and score a target test corpus with a trained run")
                .arg(run_arg())
                .arg(
                    Arg::new("mode")
                        .long("mode")
                        .value_name("MODE")
                        .default_value("adapt")
                        .help("adapt or direct"),
                )
                .arg(seeds_arg())
                .arg(
                    Arg::new("table")
                        .long("table")
                        .action(ArgAction::SetTrue)
                        .help("print a human-readable table instead of records"),
                ),
        )
        .subcommand(
            with_config(Command::new("ablate"))
                .about("Train and score ablation variants; uses the synthetic benchmark when no --source is given")
                .arg(
                    Arg::new("variants")
                        .long("variants")
                        .value_name("LIST")
                        .default_value("full,no-max,no-mask,no-max-mask,base"),
                )
                .arg(seeds_arg())
                .arg(
                    Arg::new("table")
                        .long("table")
                        .action(ArgAction::SetTrue)
                        .help("print a human-readable table instead of records"),
                ),
        )
        .subcommand(
            Command::new("score")
                .about("Phrase-level scoring of a prediction file or a gold/prediction pair")
                .arg(Arg::new("gold").long("gold").value_name("FILE").requires("pred"))
                .arg(Arg::new("pred").long("pred").value_name("FILE").requires("gold"))
                .arg(
                    Arg::new("predictions")
                        .long("predictions")
                        .value_name("FILE")
                        .conflicts_with_all(["gold", "pred"])
                        .help("file whose last two columns are gold and predicted tags"),
                )
                .arg(
                    Arg::new("table")
                        .long("table")
                        .action(ArgAction::SetTrue)
                        .help("print a human-readable table instead of records"),
                ),
        )
        .subcommand(
            with_config(Command::new("gen-synth"))
                .about("Write the synthetic benchmark as CoNLL files into --output"),
        )
        .subcommand(
            with_config(Command::new("low-resource"))
                .about("Fine-tune a trained run on the labeled --target-train subset and compare with direct transfer")
                .arg(run_arg())
                .arg(seeds_arg()),
        )
}

fn resolve_config(m: &ArgMatches, saved: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match m.get_one::<String>("preset") {
        Some(p) => RunConfig::preset(p.parse::<Preset>()?),
        None => RunConfig::default(),
    };
    if let Some(path) = m.get_one::<String>("config") {
        cfg.apply_text(&read_text(Path::new(path))?)?;
    }
    if let Some(dir) = saved {
        cfg.apply_text(&read_text(&dir.join(run_files::CONFIG))?)?;
        // The saved output is the run directory itself, not this command's.
        cfg.output = None;
    }
    for key in RunConfig::keys() {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::Config(format!("{} does not exist", path.display())));
    }
    Ok(fs::read_to_string(path)?)
}

fn required<'p>(path: &'p Option<PathBuf>, flag: &str) -> Result<&'p Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn parse_seeds(m: &ArgMatches, cfg: &RunConfig) -> Result<Vec<u64>> {
    match m.get_one::<String>("seeds") {
        None => Ok(vec![cfg.seed]),
        Some(list) => {
            let seeds: Vec<u64> = list
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("invalid seed '{s}'"))))
                .collect::<Result<_>>()?;
            if seeds.is_empty() {
                return Err(Error::Config("--seeds is empty".into()));
            }
            Ok(seeds)
        }
    }
}

fn absolute(path: &Path) -> Result<PathBuf> {
    Ok(fs::canonicalize(path)?)
}

fn cmd_meta_train(m: &ArgMatches) -> Result<()> {
    let mut cfg = resolve_config(m, None)?;
    let variant: Variant = m.get_one::<String>("variant").expect("default").parse()?;
    let run_dir = required(&cfg.output, "output")?.to_path_buf();
    fs::create_dir_all(&run_dir)?;

    if m.get_flag("synthetic") {
        let data = run_dir.join(DATA_DIR);
        let bench = SynthBench::generate(&cfg.synth)?;
        bench.write(&data)?;
        cfg.source = Some(absolute(&data.join("source.conll"))?);
        cfg.target_test = Some(absolute(&data.join("target_test.conll"))?);
        cfg.target_train = Some(absolute(&data.join("target_train.conll"))?);
    }
    let source_path = required(&cfg.source, "source")?;
    let source = read_corpus(source_path)?;
    cfg.source = Some(absolute(source_path)?);
    cfg.output = Some(absolute(&run_dir)?);

    let ws = Workspace::prepare(&cfg, &source)?;
    write_run_metadata(&ws, &run_dir)?;

    let mut log = BufWriter::new(File::create(run_dir.join(run_files::LOG))?);
    writeln!(log, "# variant={variant} seed={}", cfg.seed)?;
    let every = cfg.checkpoint_every;
    let trained = train_variant(&ws, variant, cfg.seed, |p, params| {
        writeln!(log, "{p}")?;
        let step = progress_step(p);
        if every > 0 && (step + 1) % every == 0 {
            save_checkpoint(&run_dir.join(format!("checkpoint-{}", step + 1)), params, None)?;
        }
        Ok(())
    })?;
    log.flush()?;
    let adam = match &trained.optimizer {
        Optimizer::Adam(state) => Some(state),
        Optimizer::Sgd => None,
    };
    save_checkpoint(&run_dir.join(run_files::CHECKPOINT), &trained.params, adam)?;
    eprintln!("wrote {}", run_dir.join(run_files::CHECKPOINT).display());
    Ok(())
}

fn progress_step(p: Progress<'_>) -> usize {
    match p {
        Progress::Meta(r) => r.step,
        Progress::Supervised { step, .. } => step,
    }
}

/// Workspace and trained parameters of a run directory.
fn open_run(m: &ArgMatches) -> Result<(Workspace, ParamStore)> {
    let run = PathBuf::from(m.get_one::<String>("run").expect("required"));
    let cfg = resolve_config(m, Some(&run))?;
    load_run(&run, &cfg)
}

fn report(report: &ScoreReport, table: bool, prefix: &str) -> String {
    if table {
        report.to_table()
    } else {
        report
            .to_records()
            .lines()
            .map(|l| format!("{prefix}{l}\n"))
            .collect()
    }
}

fn prediction_path(base: &Path, seed: u64, many: bool) -> PathBuf {
    if !many {
        return base.to_path_buf();
    }
    let mut name = base.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".seed{seed}"));
    base.with_file_name(name)
}

fn cmd_adapt_eval(m: &ArgMatches) -> Result<()> {
    let (ws, params) = open_run(m)?;
    let mode: EvalMode = m.get_one::<String>("mode").expect("default").parse()?;
    let seeds = parse_seeds(m, &ws.config)?;
    let test = read_corpus(required(&ws.config.target_test, "target-test")?)?;
    let encoded = ws.encode(&test)?;
    let table = m.get_flag("table");
    let mut out = String::new();
    let mut f1s = Vec::new();
    for &seed in &seeds {
        let pred = predict(&ws, &params, &encoded, mode, seed)?;
        let names: Vec<Vec<String>> = pred.iter().map(|p| ws.label_names(p)).collect();
        if let Some(base) = &ws.config.output {
            let path = prediction_path(base, seed, seeds.len() > 1);
            let mut w = BufWriter::new(File::create(&path)?);
            write_predictions(&mut w, &test, &names)?;
            w.flush()?;
        }
        let r = ws.score(&test, &pred)?;
        f1s.push(r.overall.f1);
        if table {
            out.push_str(&format!("seed {seed}\n"));
        }
        out.push_str(&report(&r, table, &format!("seed={seed} mode={} ", mode_name(mode))));
    }
    if seeds.len() > 1 {
        out.push_str(&format!("seed=mean f1={:.6}\n", mean(&f1s)));
    }
    print!("{out}");
    Ok(())
}

fn mode_name(mode: EvalMode) -> &'static str {
    match mode {
        EvalMode::Direct => "direct",
        EvalMode::Adapt => "adapt",
    }
}

/// Source and target test corpora from the config, or the synthetic
/// benchmark when no source is given.
fn corpora(cfg: &RunConfig) -> Result<(Vec<Sentence>, Vec<Sentence>, Vec<Sentence>)> {
    match &cfg.source {
        Some(src) => {
            let test = read_corpus(required(&cfg.target_test, "target-test")?)?;
            let train = match &cfg.target_train {
                Some(p) => read_corpus(p)?,
                None => Vec::new(),
            };
            Ok((read_corpus(src)?, test, train))
        }
        None => {
            let bench = SynthBench::generate(&cfg.synth)?;
            Ok((bench.source, bench.target_test, bench.target_train))
        }
    }
}

fn cmd_ablate(m: &ArgMatches) -> Result<()> {
    let cfg = resolve_config(m, None)?;
    let variants = Variant::parse_list(m.get_one::<String>("variants").expect("default"))?;
    if variants.is_empty() {
        return Err(Error::Config("--variants is empty".into()));
    }
    let seeds = parse_seeds(m, &cfg)?;
    let (source, test, _) = corpora(&cfg)?;
    let ws = Workspace::prepare(&cfg, &source)?;
    let table = run_ablation(&ws, &variants, &seeds, &test, |v, seed, p| {
        if (progress_step(p) + 1) % 100 == 0 {
            eprintln!("variant={v} seed={seed} {p}");
        }
    })?;
    let mut records = table.to_records();
    for v in &variants {
        records = records.replace(
            &format!("variant={v} seed=mean"),
            &format!("variant={v} mode={} seed=mean", mode_name(variant_mode(*v))),
        );
    }
    if let Some(path) = &cfg.output {
        fs::write(path, &records)?;
    }
    if m.get_flag("table") {
        print!("{}", table.to_table());
    } else {
        print!("{records}");
    }
    Ok(())
}

fn cmd_score(m: &ArgMatches) -> Result<()> {
    let open = |key: &str| -> Result<BufReader<File>> {
        let path = Path::new(m.get_one::<String>(key).expect("checked"));
        if !path.exists() {
            return Err(Error::Config(format!("{} does not exist", path.display())));
        }
        Ok(BufReader::new(File::open(path)?))
    };
    let r = if m.contains_id("predictions") {
        score_prediction_file(open("predictions")?)?
    } else if m.contains_id("gold") {
        score_file_pair(open("gold")?, open("pred")?)?
    } else {
        return Err(Error::Config("give --predictions FILE or --gold FILE --pred FILE".into()));
    };
    print!("{}", report(&r, m.get_flag("table"), ""));
    Ok(())
}

fn cmd_gen_synth(m: &ArgMatches) -> Result<()> {
    let cfg = resolve_config(m, None)?;
    let dir = required(&cfg.output, "output")?;
    let bench = SynthBench::generate(&cfg.synth)?;
    bench.write(dir)?;
    let mut saved = cfg.clone();
    saved.source = Some(absolute(&dir.join("source.conll"))?);
    saved.target_test = Some(absolute(&dir.join("target_test.conll"))?);
    saved.target_train = Some(absolute(&dir.join("target_train.conll"))?);
    saved.output = None;
    fs::write(dir.join(run_files::CONFIG), saved.to_text())?;
    println!(
        "source={} target_test={} target_train={} shared_word_fraction={:.4}",
        bench.source.len(),
        bench.target_test.len(),
        bench.target_train.len(),
        bench.shared_word_fraction()
    );
    Ok(())
}

fn cmd_low_resource(m: &ArgMatches) -> Result<()> {
    let (ws, params) = open_run(m)?;
    let seeds = parse_seeds(m, &ws.config)?;
    let subset = read_corpus(required(&ws.config.target_train, "target-train")?)?;
    let test = read_corpus(required(&ws.config.target_test, "target-test")?)?;
    let mut direct = Vec::new();
    let mut tuned = Vec::new();
    for &seed in &seeds {
        let s = low_resource_eval(&ws, &params, &subset, &test, seed)?;
        println!(
            "seed={seed} subset={} direct_f1={:.6} finetuned_f1={:.6}",
            subset.len(),
            s.direct_f1,
            s.finetuned_f1
        );
        direct.push(s.direct_f1);
        tuned.push(s.finetuned_f1);
    }
    println!(
        "seed=mean subset={} direct_f1={:.6} finetuned_f1={:.6}",
        subset.len(),
        mean(&direct),
        mean(&tuned)
    );
    Ok(())
}

fn run(m: &ArgMatches) -> Result<()> {
    match m.subcommand() {
        Some(("meta-train", sub)) => cmd_meta_train(sub),
        Some(("adapt-eval", sub)) => cmd_adapt_eval(sub),
        Some(("ablate", sub)) => cmd_ablate(sub),
        Some(("score", sub)) => cmd_score(sub),
        Some(("gen-synth", sub)) => cmd_gen_synth(sub),
        Some(("low-resource", sub)) => cmd_low_resource(sub),
        _ => unreachable!("subcommand required"),
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
