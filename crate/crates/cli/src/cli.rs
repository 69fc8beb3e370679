use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "tailext", version = crate::output::VERSION, about = "Long-tail classification with neighbor category extrapolation")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,

    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Values given here win over the
/// config file, which wins over built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file with optional `run`, `benchmark_run`, `pilot`, `benchmark`,
    /// `curation` and `eval` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for data-parallel work and concurrent LLM queries.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Drop auxiliary classes from the classifier at evaluation (default).
    #[arg(long, global = true, overrides_with = "no_mask_aux")]
    pub mask_aux: bool,

    /// Evaluate over every trained class (diagnostic).
    #[arg(long, global = true, overrides_with = "mask_aux")]
    pub no_mask_aux: bool,

    #[arg(long = "lambda-s", global = true)]
    pub lambda_s: Option<f64>,

    #[arg(long, global = true)]
    pub gamma1: Option<f64>,

    #[arg(long, global = true)]
    pub gamma2: Option<f64>,

    /// Per-class sample cap for auxiliary classes per epoch.
    #[arg(long, global = true)]
    pub cap: Option<usize>,

    /// Auxiliary category ratio `head:medium:tail`, or `formula`.
    #[arg(long, global = true)]
    pub ratio: Option<String>,

    /// Directory with recorded LLM responses (`responses.json`).
    #[arg(long = "llm-fixture", global = true)]
    pub llm_fixture: Option<PathBuf>,
}

impl Overrides {
    pub fn mask_aux(&self) -> Option<bool> {
        if self.no_mask_aux {
            Some(false)
        } else if self.mask_aux {
            Some(true)
        } else {
            None
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic long-tail benchmark with its neighbor pool.
    Synth,
    /// Granularity pilot: head-tail gap over superclass counts and imbalance ratios.
    Pilot,
    /// Query neighbor names, retrieve candidates and filter them.
    Curate(CurateArgs),
    /// Train a classifier on target (and optional auxiliary) manifests.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a test manifest.
    Eval(EvalArgs),
    /// Ablation sweep on the synthetic benchmark.
    Sweep(SweepArgs),
    /// Tabulate evaluation reports.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Target training manifest (prototype source).
    #[arg(long)]
    pub train: PathBuf,
    /// JSON object mapping target class id to class name.
    #[arg(long)]
    pub names: PathBuf,
    /// JSONL candidate corpus for the fixture retriever.
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Auxiliary manifest; requires `--space`.
    #[arg(long, requires = "space")]
    pub aux: Option<PathBuf>,
    /// Label space JSON describing the auxiliary classes.
    #[arg(long)]
    pub space: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Training class counts used for the many/medium/few split; defaults
    /// to `target_counts.json` next to the checkpoint.
    #[arg(long)]
    pub counts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// One of aux_count, per_class_cap, ratio, lambda_s.
    #[arg(long)]
    pub axis: String,
    /// Comma-separated values; defaults to the standard grid of the axis.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json` files or directories containing one.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}
