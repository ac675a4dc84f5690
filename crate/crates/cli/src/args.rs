use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cpes::{DistanceKind, RunConfig, SyntheticConfig};

#[derive(Debug, Parser)]
#[command(name = "cpes", version, about = "Class-relevant patch selection few-shot head")]
pub struct Cli {
    /// Worker threads for parallel evaluation (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic embedding store with planted signal patches.
    GenSynthetic(GenArgs),
    /// Train a head and write its checkpoint plus a per-epoch log.
    Train(TrainArgs),
    /// Evaluate a checkpoint over sampled episodes.
    Eval(EvalArgs),
    /// Train and evaluate once per number of selected patches.
    SweepM(SweepMArgs),
    /// Train and evaluate once per selection distance function.
    SweepDistance(SweepDistanceArgs),
    /// Write selection masks (JSON + PGM) for chosen records.
    ExportMasks(MaskArgs),
    /// Print a summary of a store file.
    InspectStore {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON file with any generator field; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub records_per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub patches: Option<usize>,
    #[arg(long)]
    pub signal_patches: Option<usize>,
    #[arg(long)]
    pub signal_noise: Option<f64>,
    #[arg(long)]
    pub distractors: Option<usize>,
    #[arg(long)]
    pub distractor_noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

impl GenArgs {
    pub fn resolve(&self) -> Result<SyntheticConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => SyntheticConfig::default(),
        };
        macro_rules! apply {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        apply!(
            classes => class_count,
            records_per_class => records_per_class,
            dim => dim,
            patches => patches,
            signal_patches => signal_patches,
            signal_noise => signal_noise,
            distractors => distractor_pool_size,
            distractor_noise => distractor_noise,
            seed => seed
        );
        Ok(cfg)
    }
}

/// Flags mirroring [`RunConfig`]. Explicit flags override `--config`.
#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub eval_store: Option<PathBuf>,
    #[arg(long)]
    pub n_way: Option<usize>,
    #[arg(long)]
    pub k_shot: Option<usize>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_parser = parse_distance)]
    pub distance: Option<DistanceKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub episodes_per_epoch: Option<usize>,
    #[arg(long)]
    pub tasks: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
}

fn parse_distance(s: &str) -> Result<DistanceKind, String> {
    s.parse().map_err(|e: cpes::Error| e.to_string())
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.store {
            cfg.store = p.clone();
        }
        if let Some(p) = &self.eval_store {
            cfg.eval_store = Some(p.clone());
        }
        if self.m.is_some() {
            cfg.m = self.m;
        }
        macro_rules! apply {
            ($($flag:ident => $($field:ident).+),*) => {
                $(if let Some(v) = self.$flag { cfg.$($field).+ = v; })*
            };
        }
        apply!(
            n_way => n_way,
            k_shot => k_shot,
            queries => queries_per_class,
            distance => distance,
            epochs => epochs,
            episodes_per_epoch => episodes_per_epoch,
            tasks => eval_tasks,
            seed => base_seed,
            lr => optimizer.learning_rate,
            weight_decay => optimizer.weight_decay,
            hidden => hidden_dim
        );
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Checkpoint destination.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log destination (default: `<out>.log.json`).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Report destination (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepMArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated values of m, e.g. `0,2,4,8,16`.
    #[arg(long)]
    pub values: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepDistanceArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated kinds from cos, dot, abs, sqr.
    #[arg(long, default_value = "cos,dot,abs,sqr")]
    pub kinds: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated record ids.
    #[arg(long)]
    pub records: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
