//! Command-line surface.
//!
//! Every tunable is an `Option` here; [`crate::config`] resolves each one as
//! flag value > config-file value > built-in default, so that flags always
//! override the file. Config-file keys mirror the long flag names with
//! dashes written as underscores (`--max-token-values` ↔ `max_token_values`),
//! global keys at the top level and per-command keys in a table named after
//! the command (`[generate]`, `[fit]`, …).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "energylens",
    version,
    about = "Fit, evaluate, and deploy interpretable energy models for LLM serving configurations"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice in the run (noise, sampling, optimizer
    /// starts, search). Defaults to the ENERGYLENS_SEED environment
    /// variable, then the config file, then 42.
    #[arg(long, global = true, env = "ENERGYLENS_SEED", value_name = "SEED")]
    pub seed: Option<u64>,

    /// Directory receiving artifacts and the run manifest [default: .]
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// TOML config file supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Print extra progress detail to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic profiling dataset (CSV plus provenance sidecar)
    Generate(GenerateArgs),
    /// Fit an energy model or a baseline on a profiling CSV
    Fit(FitArgs),
    /// Fit several methods on one seeded train split and score them on the
    /// held-out remainder
    Evaluate(EvaluateArgs),
    /// Rank serving configurations by predicted energy under fitted
    /// parameters
    Select(SelectArgs),
    /// Search profiling data for closed-form energy structure by symbolic
    /// regression
    Symreg(SymregArgs),
    /// Run the pinned synthetic benchmark end to end: generate, fit every
    /// method at each training size, and evaluate
    Bench(BenchArgs),
}

impl Command {
    /// The manifest/config-section name of the subcommand.
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Fit(_) => "fit",
            Command::Evaluate(_) => "evaluate",
            Command::Select(_) => "select",
            Command::Symreg(_) => "symreg",
            Command::Bench(_) => "bench",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Grid preset: `default` (3 tensor x 3 pipeline degrees, 7 batch
    /// sizes, 4 token budgets, 3 prompt sizes) or `small` (2x2 layouts, 3
    /// batch sizes, 2 token budgets, 1 prompt size).
    #[arg(long, value_name = "PRESET")]
    pub grid: Option<String>,

    /// Override the tensor-parallel axis, e.g. `1,2,4`.
    #[arg(long, value_name = "LIST")]
    pub tp_values: Option<String>,

    /// Override the pipeline-parallel axis.
    #[arg(long, value_name = "LIST")]
    pub pp_values: Option<String>,

    /// Override the batch-size axis.
    #[arg(long, value_name = "LIST")]
    pub batch_values: Option<String>,

    /// Override the output-token-budget axis.
    #[arg(long, value_name = "LIST")]
    pub max_token_values: Option<String>,

    /// Override the prompt-size axis.
    #[arg(long, value_name = "LIST")]
    pub input_token_values: Option<String>,

    /// Multiplicative log-normal noise level sigma; 0 emits exact energies
    /// [default: 0]
    #[arg(long, allow_negative_numbers = true, value_name = "SIGMA")]
    pub noise: Option<f64>,

    /// Params JSON supplying the ground-truth energy surface [default: the
    /// pinned benchmark surface]
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,

    /// Model label stamped on every record.
    #[arg(long, value_name = "ID")]
    pub model_id: Option<String>,

    /// Hardware label stamped on every record.
    #[arg(long, value_name = "ID")]
    pub hardware_id: Option<String>,

    /// Base watts of the synthetic power surface
    /// (watts = base * gpus^exponent) [default: 250]
    #[arg(long, allow_negative_numbers = true, value_name = "W")]
    pub power_base: Option<f64>,

    /// Exponent of the synthetic power surface [default: 0.8]
    #[arg(long, allow_negative_numbers = true, value_name = "EXP")]
    pub power_exp: Option<f64>,

    /// Output CSV path [default: <out-dir>/data.csv]
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

/// Fitting knobs shared by `fit`, `evaluate`, and `bench`.
#[derive(Debug, Args)]
pub struct FitKnobFlags {
    /// Independent optimizer starts for the energy-model and proxy fits
    /// [default: 16]
    #[arg(long, value_name = "N")]
    pub starts: Option<usize>,

    /// Iteration cap per optimizer start [default: 500]
    #[arg(long, value_name = "N")]
    pub max_iters: Option<usize>,

    /// Loss for the energy-model fit: `sq-abs-log` or `sq-rel`
    /// [default: sq-abs-log]
    #[arg(long, value_name = "LOSS")]
    pub loss: Option<String>,

    /// Trees in the forest/boosting baselines [default: 100]
    #[arg(long, value_name = "N")]
    pub trees: Option<usize>,

    /// Learning rate of the boosting baseline [default: 0.1]
    #[arg(long, allow_negative_numbers = true, value_name = "RATE")]
    pub learning_rate: Option<f64>,

    /// Ridge penalty of the linear baseline [default: 0]
    #[arg(long, allow_negative_numbers = true, value_name = "LAMBDA")]
    pub ridge: Option<f64>,

    /// Power estimate used by the latency-times-power proxy: `per-config`
    /// (per-layout table) or `mean` (one global average) [default:
    /// per-config]
    #[arg(long, value_name = "MODE")]
    pub power_mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Profiling CSV to fit on.
    pub data: PathBuf,

    /// Method to fit: `energylens`, `linear`, `rf`, `gbm`, or `proxy`
    /// [default: energylens]
    #[arg(long, value_name = "METHOD")]
    pub method: Option<String>,

    /// Training records sampled (seeded, without replacement) from the CSV
    /// [default: 50]
    #[arg(long, value_name = "N")]
    pub n: Option<usize>,

    #[command(flatten)]
    pub knobs: FitKnobFlags,

    /// Output artifact path [default: <out-dir>/params.json for
    /// `energylens`, <out-dir>/baseline.json otherwise]
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Profiling CSV to split and score on.
    pub data: PathBuf,

    /// Comma-separated methods to compare
    /// [default: energylens,linear,rf,gbm,proxy]
    #[arg(long, value_name = "LIST")]
    pub methods: Option<String>,

    /// Training records sampled from the CSV; the remainder is the test
    /// split [default: 50]
    #[arg(long, value_name = "N")]
    pub n: Option<usize>,

    #[command(flatten)]
    pub knobs: FitKnobFlags,

    /// Reports JSON path [default: <out-dir>/reports.json]
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,

    /// Leaderboard CSV path [default: <out-dir>/leaderboard.csv]
    #[arg(long, value_name = "FILE")]
    pub leaderboard: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Fitted params JSON (from `fit --method energylens`).
    pub params: PathBuf,

    /// Prompt tokens per request batch (required; may come from the config
    /// file).
    #[arg(long, value_name = "TOKENS")]
    pub input_tokens: Option<u32>,

    /// Output-token budget; omit to rank across the grid's whole
    /// token-budget axis.
    #[arg(long, value_name = "TOKENS")]
    pub max_tokens: Option<u32>,

    /// Batch size the ranking is computed at [default: 1]
    #[arg(long, value_name = "N")]
    pub batch: Option<u32>,

    /// Grid preset for the candidate axes: `default` or `small`.
    #[arg(long, value_name = "PRESET")]
    pub grid: Option<String>,

    /// Override the tensor-parallel axis, e.g. `1,2,4`.
    #[arg(long, value_name = "LIST")]
    pub tp_values: Option<String>,

    /// Override the pipeline-parallel axis.
    #[arg(long, value_name = "LIST")]
    pub pp_values: Option<String>,

    /// Override the output-token-budget axis (used when --max-tokens is
    /// omitted).
    #[arg(long, value_name = "LIST")]
    pub max_token_values: Option<String>,

    /// Deployment constraint, e.g. `gpus<=4` (admits only tp*pp <= 4).
    #[arg(long, value_name = "EXPR")]
    pub constraint: Option<String>,

    /// Ranking JSON path; a CSV twin is written next to it
    /// [default: <out-dir>/ranking.json]
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SymregArgs {
    /// Profiling CSV to search.
    pub data: PathBuf,

    /// Population size [default: 500]
    #[arg(long, value_name = "N")]
    pub pop: Option<usize>,

    /// Generations to evolve [default: 40]
    #[arg(long, value_name = "N")]
    pub generations: Option<usize>,

    /// Tournament size for parent selection [default: 5]
    #[arg(long, value_name = "N")]
    pub tournament: Option<usize>,

    /// Crossover probability [default: 0.9]
    #[arg(long, allow_negative_numbers = true, value_name = "P")]
    pub crossover: Option<f64>,

    /// Mutation probability [default: 0.1]
    #[arg(long, allow_negative_numbers = true, value_name = "P")]
    pub mutation: Option<f64>,

    /// Complexity penalty per expression node [default: 1e-3 times the
    /// target variance]
    #[arg(long, allow_negative_numbers = true, value_name = "COEF")]
    pub parsimony: Option<f64>,

    /// Maximum expression-tree depth [default: 8]
    #[arg(long, value_name = "N")]
    pub depth: Option<usize>,

    /// Comma-separated feature names the search may use [default: all]
    #[arg(long, value_name = "LIST")]
    pub features: Option<String>,

    /// Front JSON path; a CSV twin is written next to it
    /// [default: <out-dir>/front.json]
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Noise level of the benchmark dataset [default: 0.05]
    #[arg(long, allow_negative_numbers = true, value_name = "SIGMA")]
    pub sigma: Option<f64>,

    /// Comma-separated training sizes to fit every method at
    /// [default: 50,500]
    #[arg(long, value_name = "LIST")]
    pub train_sizes: Option<String>,

    /// Comma-separated methods to compare
    /// [default: energylens,linear,rf,gbm,proxy]
    #[arg(long, value_name = "LIST")]
    pub methods: Option<String>,

    #[command(flatten)]
    pub knobs: FitKnobFlags,
}
