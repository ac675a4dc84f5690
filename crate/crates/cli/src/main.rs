//! `cpes` command-line front end.
//!
//! Exit codes: 0 on success, 2 on validation errors, 3 on I/O or file-format
//! errors.

mod args;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use cpes::harness::selection_recall;
use cpes::{
    evaluate, export_masks, generate_synthetic, read_head, sweep_distance, sweep_m, train,
    write_head, EmbeddingStore, MlpHead, RunConfig,
};

use args::{Cli, Command, EvalArgs, GenArgs, MaskArgs, RunArgs, SweepDistanceArgs, SweepMArgs, TrainArgs};

const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;

/// A bad argument or configuration detected by the CLI itself.
#[derive(Debug)]
struct Invalid(String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<cpes::Error>() {
            return if e.is_io_or_format() { EXIT_IO } else { EXIT_VALIDATION };
        }
        if cause.is::<Invalid>() {
            return EXIT_VALIDATION;
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| invalid(e.to_string()))
            .and_then(|pool| pool.install(|| run(cli.command))),
        None => run(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::SweepM(a) => run_sweep_m(a),
        Command::SweepDistance(a) => run_sweep_distance(a),
        Command::ExportMasks(a) => run_export_masks(a),
        Command::InspectStore { store, json } => inspect_store(&store, json),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_store(path: &Path) -> Result<EmbeddingStore> {
    EmbeddingStore::load(path).with_context(|| format!("reading store {}", path.display()))
}

fn gen_synthetic(args: GenArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let store = generate_synthetic(&cfg)?;
    let bytes = store
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} records ({} classes, D={}, M={}) to {} ({bytes} bytes)",
        store.records().len(),
        store.class_count(),
        store.dim(),
        store.patches_m(),
        args.out.display()
    );
    Ok(())
}

fn resolve_run(args: &RunArgs) -> Result<RunConfig> {
    let cfg = args.resolve()?;
    if cfg.store.as_os_str().is_empty() {
        return Err(invalid("no store given (use --store or a config file)"));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_train(args: TrainArgs) -> Result<()> {
    let cfg = resolve_run(&args.run)?;
    let store = load_store(&cfg.store)?;
    let outcome = train(&store, &cfg)?;

    let mut bytes = Vec::new();
    write_head(&outcome.head, &mut bytes)?;
    fs::write(&args.out, &bytes).with_context(|| format!("writing {}", args.out.display()))?;
    let log_path = args.log.unwrap_or_else(|| with_suffix(&args.out, ".log.json"));
    write_json(&log_path, &outcome.log)?;

    println!("{:>6}  {:>10}  {:>9}", "epoch", "loss", "acc (%)");
    for e in &outcome.log.epochs {
        println!("{:>6}  {:>10.5}  {:>9.2}", e.epoch, e.mean_loss, 100.0 * e.mean_accuracy);
    }
    println!("checkpoint: {}\nlog: {}", args.out.display(), log_path.display());
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let cfg = resolve_run(&args.run)?;
    let bytes = fs::read(&args.checkpoint)
        .with_context(|| format!("reading {}", args.checkpoint.display()))?;
    let head: MlpHead = read_head(&bytes[..])
        .with_context(|| format!("parsing checkpoint {}", args.checkpoint.display()))?;
    let store = cfg
        .load_eval_store()
        .context("reading evaluation store")?;
    let report = evaluate(&head, &store, &cfg)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    println!(
        "{}-way {}-shot, m={}, {}: {} ({:.2}s)",
        cfg.n_way,
        cfg.k_shot,
        report.config.m.unwrap_or_default(),
        cfg.distance,
        report.summary(),
        report.wall_time_secs
    );
    Ok(())
}

fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| invalid(format!("bad list item {s:?}: {e}"))))
        .collect()
}

fn run_sweep_m(args: SweepMArgs) -> Result<()> {
    let cfg = resolve_run(&args.run)?;
    let values: Vec<usize> = parse_list(&args.values)?;
    let train_store = load_store(&cfg.store)?;
    let eval_store = cfg.load_eval_store().context("reading evaluation store")?;
    let report = sweep_m(&train_store, &eval_store, &cfg, &values)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn run_sweep_distance(args: SweepDistanceArgs) -> Result<()> {
    let cfg = resolve_run(&args.run)?;
    let kinds: Vec<cpes::DistanceKind> = parse_list(&args.kinds)?;
    let train_store = load_store(&cfg.store)?;
    let eval_store = cfg.load_eval_store().context("reading evaluation store")?;
    let report = sweep_distance(&train_store, &eval_store, &cfg, &kinds)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn run_export_masks(args: MaskArgs) -> Result<()> {
    let cfg = resolve_run(&args.run)?;
    let ids: Vec<u64> = parse_list(&args.records)?;
    let store = load_store(&cfg.store)?;
    let exports = export_masks(&store, &cfg, &ids, &args.out)?;
    for e in &exports {
        let recall = e
            .recall
            .map(|r| format!("  recall {r:.3}"))
            .unwrap_or_default();
        println!("record {}: {}{recall}", e.record_id, e.json_path.display());
    }
    Ok(())
}

fn inspect_store(path: &Path, json: bool) -> Result<()> {
    let store = load_store(path)?;
    let counts: Vec<usize> = store.records_by_class().iter().map(Vec::len).collect();
    let signal = store
        .ground_truth()
        .and_then(|gt| gt.first())
        .map(Vec::len);
    let recall = match signal {
        Some(s) => selection_recall(&store, cpes::DistanceKind::Cos, s)?,
        None => None,
    };
    if json {
        let summary = serde_json::json!({
            "dim": store.dim(),
            "patches": store.patches_m(),
            "classes": store.class_count(),
            "records": store.records().len(),
            "records_per_class": counts,
            "ground_truth": store.ground_truth().is_some(),
            "signal_patches": signal,
            "cos_recall_at_signal": recall,
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    }
    println!("store:    {}", path.display());
    println!("dim:      {}", store.dim());
    println!("patches:  {}", store.patches_m());
    println!("classes:  {}", store.class_count());
    println!("records:  {}", store.records().len());
    if let (Some(min), Some(max)) = (counts.iter().min(), counts.iter().max()) {
        println!("per class: {min}..={max}");
    }
    match (signal, recall) {
        (Some(s), Some(r)) => println!("ground truth: {s} signal patches, cos recall at m={s}: {r:.4}"),
        _ => println!("ground truth: none"),
    }
    Ok(())
}
