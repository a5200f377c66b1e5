//! Subcommand implementations.
//!
//! Each command resolves its settings (flag > config file > default),
//! performs the work through the library, writes its artifacts, and returns
//! the resolved settings plus input/output paths for the run manifest that
//! [`run`] writes at the end of every successful invocation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use energylens::baselines::{
    fit_boosting, fit_forest, fit_latency_proxy, fit_linear, save_baseline, BaselineModel,
    PowerMode, ProxyOptions,
};
use energylens::benchmark::{benchmark_dataset, benchmark_input_tokens, benchmark_space, benchmark_truth};
use energylens::dataset::{
    generate_synthetic_with, load_csv, sample_random, sample_random_complement, sidecar_path,
    write_csv, write_sidecar, ConfigSpace, Dataset, GroundTruthSpec, NoiseModel, PowerModel,
    Sidecar, SyntheticOptions,
};
use energylens::evaluation::{
    evaluate, format_leaderboard, save_reports, write_leaderboard, EnergyPredictor, EvalReport,
    LabeledReport,
};
use energylens::model::{fit, load_params, save_params, FitOptions, FitResult, LossKind};
use energylens::selector::{
    save_ranking, select, write_ranking_csv, Constraints, SelectionRequest, Workload,
};
use energylens::symreg::{detect_motifs, run_sr, simplify, ExprNode, SRConfig};

use crate::args::{
    BenchArgs, Cli, Command, EvaluateArgs, FitArgs, FitKnobFlags, GenerateArgs, SelectArgs,
    SymregArgs,
};
use crate::config::{parse_u32_list, parse_usize_list, value_as_u64, FileConfig, Resolver};
use crate::errors::{CliError, CliResult};
use crate::manifest::{unix_time_s, write_manifest, Manifest, MANIFEST_SCHEMA};

/// Globals every command receives.
struct Ctx {
    seed: u64,
    out_dir: PathBuf,
    verbose: bool,
}

impl Ctx {
    fn progress(&self, message: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", message.as_ref());
        }
    }
}

/// What a command hands back for the manifest.
struct CmdOutcome {
    settings: BTreeMap<String, String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

/// Parses globals, dispatches the subcommand, and writes the run manifest.
pub fn run(cli: Cli) -> CliResult<()> {
    let start = Instant::now();
    let file = FileConfig::load(cli.global.config.as_deref())?;

    let seed = match cli.global.seed {
        Some(s) => s,
        None => match file.global("seed") {
            Some(v) => value_as_u64(v, "", "seed")?,
            None => 42,
        },
    };
    let out_dir = match cli.global.out_dir {
        Some(d) => d,
        None => match file.global("out_dir") {
            Some(v) => PathBuf::from(v.as_str().ok_or_else(|| {
                CliError::usage("config key `out_dir` must be a string")
            })?),
            None => PathBuf::from("."),
        },
    };
    let verbose = cli.global.verbose
        || file
            .global("verbose")
            .and_then(toml::Value::as_bool)
            .unwrap_or(false);

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("creating --out-dir {}: {e}", out_dir.display())))?;

    let ctx = Ctx {
        seed,
        out_dir,
        verbose,
    };
    let command = cli.command.name().to_string();
    let mut outcome = match cli.command {
        Command::Generate(a) => cmd_generate(&ctx, &file, a)?,
        Command::Fit(a) => cmd_fit(&ctx, &file, a)?,
        Command::Evaluate(a) => cmd_evaluate(&ctx, &file, a)?,
        Command::Select(a) => cmd_select(&ctx, &file, a)?,
        Command::Symreg(a) => cmd_symreg(&ctx, &file, a)?,
        Command::Bench(a) => cmd_bench(&ctx, &file, a)?,
    };
    outcome
        .settings
        .insert("out_dir".to_string(), ctx.out_dir.display().to_string());

    write_manifest(
        &Manifest {
            schema: MANIFEST_SCHEMA,
            command,
            seed: ctx.seed,
            settings: outcome.settings,
            inputs: outcome.inputs,
            outputs: outcome.outputs,
            unix_time_s: unix_time_s(),
            wall_time_ms: start.elapsed().as_millis(),
        },
        &ctx.out_dir,
    )
}

// ---------------------------------------------------------------------------
// Shared flag parsing and validation
// ---------------------------------------------------------------------------

fn require_at_least(value: usize, min: usize, flag: &str) -> CliResult<usize> {
    if value < min {
        return Err(CliError::usage(format!(
            "invalid value for {flag}: must be >= {min}, got {value}"
        )));
    }
    Ok(value)
}

fn require_nonneg_finite(value: f64, flag: &str) -> CliResult<f64> {
    if !value.is_finite() || value < 0.0 {
        return Err(CliError::usage(format!(
            "invalid value for {flag}: must be finite and >= 0, got {value}"
        )));
    }
    Ok(value)
}

fn require_positive_finite(value: f64, flag: &str) -> CliResult<f64> {
    if !value.is_finite() || value <= 0.0 {
        return Err(CliError::usage(format!(
            "invalid value for {flag}: must be finite and > 0, got {value}"
        )));
    }
    Ok(value)
}

fn require_finite(value: f64, flag: &str) -> CliResult<f64> {
    if !value.is_finite() {
        return Err(CliError::usage(format!(
            "invalid value for {flag}: must be finite, got {value}"
        )));
    }
    Ok(value)
}

fn require_probability(value: f64, flag: &str) -> CliResult<f64> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(CliError::usage(format!(
            "invalid value for {flag}: must be in [0, 1], got {value}"
        )));
    }
    Ok(value)
}

/// The grid presets: candidate axes plus prompt sizes.
fn preset_space(name: &str, flag: &str) -> CliResult<(ConfigSpace, Vec<u32>)> {
    match name {
        "default" => Ok((benchmark_space(), benchmark_input_tokens())),
        "small" => Ok((
            ConfigSpace {
                tp_values: vec![1, 2],
                pp_values: vec![1, 2],
                batch_values: vec![1, 4, 16],
                max_token_values: vec![64, 256],
            },
            vec![128],
        )),
        other => Err(CliError::usage(format!(
            "invalid value for {flag}: unknown preset `{other}` (expected `default` or `small`)"
        ))),
    }
}

/// Applies a comma-list axis override when one was given.
fn override_axis(
    r: &mut Resolver,
    key: &str,
    flag_name: &str,
    flag: Option<String>,
    axis: &mut Vec<u32>,
) -> CliResult<()> {
    if let Some(raw) = r.opt_string(key, flag)? {
        *axis = parse_u32_list(&raw, flag_name)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    EnergyLens,
    Linear,
    Forest,
    Boosting,
    Proxy,
}

const ALL_METHODS: &str = "energylens,linear,rf,gbm,proxy";

impl Method {
    fn parse(raw: &str, flag: &str) -> CliResult<Self> {
        match raw {
            "energylens" => Ok(Method::EnergyLens),
            "linear" => Ok(Method::Linear),
            "rf" => Ok(Method::Forest),
            "gbm" => Ok(Method::Boosting),
            "proxy" => Ok(Method::Proxy),
            other => Err(CliError::usage(format!(
                "invalid value for {flag}: unknown method `{other}` (expected one of {ALL_METHODS})"
            ))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Method::EnergyLens => "energylens",
            Method::Linear => "linear",
            Method::Forest => "rf",
            Method::Boosting => "gbm",
            Method::Proxy => "proxy",
        }
    }
}

fn parse_methods(raw: &str, flag: &str) -> CliResult<Vec<Method>> {
    let mut methods = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let m = Method::parse(part, flag)?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(CliError::usage(format!(
            "{flag} must list at least one method"
        )));
    }
    Ok(methods)
}

fn parse_loss(raw: &str, flag: &str) -> CliResult<LossKind> {
    match raw {
        "sq-abs-log" => Ok(LossKind::SqAbsLog),
        "sq-rel" => Ok(LossKind::SqRel),
        other => Err(CliError::usage(format!(
            "invalid value for {flag}: unknown loss `{other}` (expected `sq-abs-log` or `sq-rel`)"
        ))),
    }
}

fn parse_power_mode(raw: &str, flag: &str) -> CliResult<PowerMode> {
    match raw {
        "per-config" => Ok(PowerMode::PerConfigTable),
        "mean" => Ok(PowerMode::GlobalMean),
        other => Err(CliError::usage(format!(
            "invalid value for {flag}: unknown power mode `{other}` (expected `per-config` or `mean`)"
        ))),
    }
}

/// Resolved fitting knobs shared by `fit`, `evaluate`, and `bench`.
struct FitKnobs {
    fit: FitOptions,
    trees: usize,
    learning_rate: f64,
    ridge: f64,
    power_mode: PowerMode,
}

fn resolve_knobs(r: &mut Resolver, flags: FitKnobFlags, seed: u64) -> CliResult<FitKnobs> {
    let starts = require_at_least(r.usize("starts", flags.starts, 16)?, 1, "--starts")?;
    let max_iters = require_at_least(r.usize("max_iters", flags.max_iters, 500)?, 1, "--max-iters")?;
    let loss = parse_loss(&r.string("loss", flags.loss, "sq-abs-log")?, "--loss")?;
    let trees = require_at_least(r.usize("trees", flags.trees, 100)?, 1, "--trees")?;
    let learning_rate = require_positive_finite(
        r.f64("learning_rate", flags.learning_rate, 0.1)?,
        "--learning-rate",
    )?;
    let ridge = require_nonneg_finite(r.f64("ridge", flags.ridge, 0.0)?, "--ridge")?;
    let power_mode = parse_power_mode(
        &r.string("power_mode", flags.power_mode, "per-config")?,
        "--power-mode",
    )?;
    Ok(FitKnobs {
        fit: FitOptions {
            n_starts: starts,
            seed,
            max_iters,
            loss,
        },
        trees,
        learning_rate,
        ridge,
        power_mode,
    })
}

/// Any fitted predictor, kept concrete so `fit` can serialize it.
enum Fitted {
    Energy(FitResult),
    Baseline(BaselineModel),
}

impl Fitted {
    fn predictor(&self) -> &dyn EnergyPredictor {
        match self {
            Fitted::Energy(f) => f,
            Fitted::Baseline(b) => b,
        }
    }
}

fn fit_one(
    method: Method,
    train: &Dataset,
    knobs: &FitKnobs,
) -> Result<Fitted, energylens::Error> {
    match method {
        Method::EnergyLens => fit(train, &knobs.fit).map(Fitted::Energy),
        Method::Linear => fit_linear(train, knobs.ridge)
            .map(|m| Fitted::Baseline(BaselineModel::Linear(m))),
        Method::Forest => fit_forest(train, knobs.trees, knobs.fit.seed)
            .map(|m| Fitted::Baseline(BaselineModel::RandomForest(m))),
        Method::Boosting => fit_boosting(train, knobs.trees, knobs.learning_rate)
            .map(|m| Fitted::Baseline(BaselineModel::GradientBoosting(m))),
        Method::Proxy => fit_latency_proxy(
            train,
            &ProxyOptions {
                power_mode: knobs.power_mode,
                fit: knobs.fit.clone(),
            },
        )
        .map(|m| Fitted::Baseline(BaselineModel::LatencyProxy(m))),
    }
}

fn fit_and_score(
    method: Method,
    train: &Dataset,
    test: &Dataset,
    knobs: &FitKnobs,
) -> Result<EvalReport, energylens::Error> {
    let fitted = fit_one(method, train, knobs)?;
    evaluate(fitted.predictor(), train, test)
}

/// Draws the seeded training subsample, blaming `--n` for size problems.
fn train_sample(data: &Dataset, n: usize, seed: u64) -> CliResult<Dataset> {
    sample_random(data, n, seed).map_err(|e| CliError::runtime(format!("--n {n}: {e}")))
}

/// The held-out complement of [`train_sample`] with the same arguments.
fn test_complement(data: &Dataset, n: usize, seed: u64) -> CliResult<Dataset> {
    sample_random_complement(data, n, seed).map_err(|e| {
        CliError::runtime(format!(
            "--n {n}: need at least one held-out record beyond the training sample ({e})"
        ))
    })
}

fn path_string(path: &Path) -> String {
    path.display().to_string()
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".to_string())
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

fn cmd_generate(ctx: &Ctx, file: &FileConfig, a: GenerateArgs) -> CliResult<CmdOutcome> {
    let mut r = Resolver::new(file, "generate");

    let grid = r.string("grid", a.grid, "default")?;
    let (mut space, mut input_tokens) = preset_space(&grid, "--grid")?;
    override_axis(&mut r, "tp_values", "--tp-values", a.tp_values, &mut space.tp_values)?;
    override_axis(&mut r, "pp_values", "--pp-values", a.pp_values, &mut space.pp_values)?;
    override_axis(&mut r, "batch_values", "--batch-values", a.batch_values, &mut space.batch_values)?;
    override_axis(
        &mut r,
        "max_token_values",
        "--max-token-values",
        a.max_token_values,
        &mut space.max_token_values,
    )?;
    override_axis(
        &mut r,
        "input_token_values",
        "--input-token-values",
        a.input_token_values,
        &mut input_tokens,
    )?;
    space
        .validate()
        .map_err(|e| CliError::usage(format!("invalid axis values: {e}")))?;
    if input_tokens.contains(&0) {
        return Err(CliError::usage(
            "invalid value for --input-token-values: all values must be >= 1",
        ));
    }

    let noise = require_nonneg_finite(r.f64("noise", a.noise, 0.0)?, "--noise")?;
    let power_base =
        require_positive_finite(r.f64("power_base", a.power_base, 250.0)?, "--power-base")?;
    let power_exp = require_finite(r.f64("power_exp", a.power_exp, 0.8)?, "--power-exp")?;

    let defaults = SyntheticOptions::default();
    let model_id = r.string("model_id", a.model_id, &defaults.model_id)?;
    let hardware_id = r.string("hardware_id", a.hardware_id, &defaults.hardware_id)?;

    let mut inputs = Vec::new();
    let truth = match r.opt_path("truth", a.truth)? {
        Some(path) => {
            inputs.push(path_string(&path));
            load_params(&path)?.params
        }
        None => {
            r.note("truth", "pinned-benchmark");
            benchmark_truth()
        }
    };

    let output = r.out_path("output", a.output, &ctx.out_dir, "data.csv")?;

    let noise_model = if noise == 0.0 {
        NoiseModel::None
    } else {
        NoiseModel::LogNormal { sigma: noise }
    };
    ctx.progress(format!(
        "generating {} grid points x {} prompt sizes (noise sigma {noise})",
        space.grid_size(),
        input_tokens.len()
    ));
    let data = generate_synthetic_with(
        &space,
        &input_tokens,
        &GroundTruthSpec {
            params: truth,
            noise: noise_model,
            seed: ctx.seed,
        },
        &SyntheticOptions {
            model_id,
            hardware_id,
            modality: defaults.modality,
            power: PowerModel {
                base_watts: power_base,
                exponent: power_exp,
            },
        },
    )?;

    write_csv(&data, &output)?;
    let sidecar = sidecar_path(&output);
    write_sidecar(
        &output,
        &Sidecar {
            source: data.source.clone(),
            seed: ctx.seed,
            generator_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    )?;

    println!("wrote {} rows to {}", data.len(), output.display());
    println!("sidecar: {}", sidecar.display());
    Ok(CmdOutcome {
        settings: r.settings,
        inputs,
        outputs: vec![path_string(&output), path_string(&sidecar)],
    })
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

fn cmd_fit(ctx: &Ctx, file: &FileConfig, a: FitArgs) -> CliResult<CmdOutcome> {
    let mut r = Resolver::new(file, "fit");
    r.note("data", a.data.display());

    let method = Method::parse(&r.string("method", a.method, "energylens")?, "--method")?;
    let n = require_at_least(r.usize("n", a.n, 50)?, 1, "--n")?;
    let knobs = resolve_knobs(&mut r, a.knobs, ctx.seed)?;
    let default_name = match method {
        Method::EnergyLens => "params.json",
        _ => "baseline.json",
    };
    let output = r.out_path("output", a.output, &ctx.out_dir, default_name)?;

    let data = load_csv(&a.data)?;
    let train = train_sample(&data, n, ctx.seed)?;

    ctx.progress(format!("fitting {} on {n} records", method.name()));
    let started = Instant::now();
    let fitted = fit_one(method, &train, &knobs).map_err(|e| match e {
        energylens::Error::InsufficientData { .. } => {
            CliError::runtime(format!("--n {n}: {e}"))
        }
        other => other.into(),
    })?;
    let elapsed = started.elapsed().as_secs_f64();

    match &fitted {
        Fitted::Energy(result) => {
            save_params(result, &output)?;
            println!(
                "fit energylens on {n} records: {} loss {:.6e}, {}/{} starts converged, {elapsed:.2}s",
                result.loss, result.train_loss, result.converged_starts, result.n_starts
            );
        }
        Fitted::Baseline(model) => {
            save_baseline(model, &output)?;
            println!(
                "fit {} on {n} records in {elapsed:.2}s",
                model.kind_name()
            );
        }
    }
    println!("wrote {}", output.display());

    Ok(CmdOutcome {
        settings: r.settings,
        inputs: vec![path_string(&a.data)],
        outputs: vec![path_string(&output)],
    })
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

fn cmd_evaluate(ctx: &Ctx, file: &FileConfig, a: EvaluateArgs) -> CliResult<CmdOutcome> {
    let mut r = Resolver::new(file, "evaluate");
    r.note("data", a.data.display());

    let methods = parse_methods(&r.string("methods", a.methods, ALL_METHODS)?, "--methods")?;
    let n = require_at_least(r.usize("n", a.n, 50)?, 1, "--n")?;
    let knobs = resolve_knobs(&mut r, a.knobs, ctx.seed)?;
    let output = r.out_path("output", a.output, &ctx.out_dir, "reports.json")?;
    let leaderboard = r.out_path("leaderboard", a.leaderboard, &ctx.out_dir, "leaderboard.csv")?;

    let data = load_csv(&a.data)?;
    let train = train_sample(&data, n, ctx.seed)?;
    let test = test_complement(&data, n, ctx.seed)?;
    let label = format!("{}-n{n}", file_label(&a.data));

    let mut reports = Vec::new();
    let mut first_failure: Option<String> = None;
    for method in methods {
        ctx.progress(format!(
            "fitting {} on {n} records, scoring on {}",
            method.name(),
            test.len()
        ));
        match fit_and_score(method, &train, &test, &knobs) {
            Ok(report) => reports.push(LabeledReport {
                method: method.name().to_string(),
                dataset: label.clone(),
                report,
            }),
            Err(e) => {
                eprintln!("warning: method `{}` failed: {e}", method.name());
                first_failure.get_or_insert_with(|| format!("{}: {e}", method.name()));
            }
        }
    }
    if reports.is_empty() {
        return Err(CliError::runtime(format!(
            "every requested method failed; first error: {}",
            first_failure.unwrap_or_default()
        )));
    }

    save_reports(&reports, &output)?;
    write_leaderboard(&reports, &leaderboard)?;
    print!("{}", format_leaderboard(&reports));
    println!("wrote {} and {}", output.display(), leaderboard.display());

    Ok(CmdOutcome {
        settings: r.settings,
        inputs: vec![path_string(&a.data)],
        outputs: vec![path_string(&output), path_string(&leaderboard)],
    })
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

fn parse_constraint(raw: &str, flag: &str) -> CliResult<Constraints> {
    let compact: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
    if let Some(rest) = compact.strip_prefix("gpus<=") {
        let budget: u32 = rest.parse().map_err(|_| {
            CliError::usage(format!(
                "invalid value for {flag}: `{rest}` is not a positive integer"
            ))
        })?;
        if budget == 0 {
            return Err(CliError::usage(format!(
                "invalid value for {flag}: the GPU budget must be >= 1"
            )));
        }
        return Ok(Constraints {
            max_gpus: Some(budget),
            feasibility: None,
        });
    }
    Err(CliError::usage(format!(
        "invalid value for {flag}: expected `gpus<=N`, got `{raw}`"
    )))
}

fn cmd_select(ctx: &Ctx, file: &FileConfig, a: SelectArgs) -> CliResult<CmdOutcome> {
    let mut r = Resolver::new(file, "select");
    r.note("params", a.params.display());

    let input_tokens = r.opt_u32("input_tokens", a.input_tokens)?.ok_or_else(|| {
        CliError::usage(
            "missing required flag --input-tokens (or config key `select.input_tokens`)",
        )
    })?;
    if input_tokens == 0 {
        return Err(CliError::usage(
            "invalid value for --input-tokens: must be >= 1",
        ));
    }
    let max_tokens = r.opt_u32("max_tokens", a.max_tokens)?;
    if max_tokens == Some(0) {
        return Err(CliError::usage(
            "invalid value for --max-tokens: must be >= 1",
        ));
    }
    let batch = r.u32("batch", a.batch, 1)?;
    if batch == 0 {
        return Err(CliError::usage("invalid value for --batch: must be >= 1"));
    }

    let grid = r.string("grid", a.grid, "default")?;
    let (mut space, _) = preset_space(&grid, "--grid")?;
    override_axis(&mut r, "tp_values", "--tp-values", a.tp_values, &mut space.tp_values)?;
    override_axis(&mut r, "pp_values", "--pp-values", a.pp_values, &mut space.pp_values)?;
    override_axis(
        &mut r,
        "max_token_values",
        "--max-token-values",
        a.max_token_values,
        &mut space.max_token_values,
    )?;
    space.batch_values = vec![batch];
    space
        .validate()
        .map_err(|e| CliError::usage(format!("invalid axis values: {e}")))?;

    let constraints = match r.opt_string("constraint", a.constraint)? {
        Some(raw) => parse_constraint(&raw, "--constraint")?,
        None => Constraints::default(),
    };

    let output = r.out_path("output", a.output, &ctx.out_dir, "ranking.json")?;
    let csv_out = output.with_extension("csv");
    r.note("output_csv", csv_out.display());

    let params = load_params(&a.params)?.params;
    let ranking = select(&SelectionRequest {
        params,
        space,
        workload: Workload {
            total_input_tokens: input_tokens,
            max_tokens,
        },
        constraints,
    })?;

    save_ranking(&ranking, &output)?;
    write_ranking_csv(&ranking, &csv_out)?;

    let best = ranking.best();
    println!(
        "ranked {} configurations for input_tokens={input_tokens}; best: tp={} pp={} batch={} max_tokens={} at {:.3} J{}",
        ranking.entries.len(),
        best.point.tp,
        best.point.pp,
        best.point.batch_size,
        best.point.max_tokens,
        best.energy_j,
        if best.tied { " (tied)" } else { "" },
    );
    println!("wrote {} and {}", output.display(), csv_out.display());

    Ok(CmdOutcome {
        settings: r.settings,
        inputs: vec![path_string(&a.params)],
        outputs: vec![path_string(&output), path_string(&csv_out)],
    })
}

// ---------------------------------------------------------------------------
// symreg
// ---------------------------------------------------------------------------

const FRONT_SCHEMA: &str = "energylens-front-v1";

#[derive(Serialize)]
struct FrontMember {
    expression: String,
    node_count: usize,
    test_mse: f64,
    ratio_of_token_load: bool,
    log_compression: bool,
}

#[derive(Serialize)]
struct FrontFile {
    schema: &'static str,
    seed: u64,
    best: FrontMember,
    best_fitness: f64,
    pareto_front: Vec<FrontMember>,
    fitness_history: Vec<f64>,
}

fn front_member(expr: &ExprNode, test_mse: f64) -> FrontMember {
    let simplified = simplify(expr);
    let motifs = detect_motifs(&simplified);
    FrontMember {
        expression: simplified.to_prefix(),
        node_count: simplified.node_count(),
        test_mse,
        ratio_of_token_load: motifs.ratio_of_token_load,
        log_compression: motifs.log_compression,
    }
}

fn cmd_symreg(ctx: &Ctx, file: &FileConfig, a: SymregArgs) -> CliResult<CmdOutcome> {
    let mut r = Resolver::new(file, "symreg");
    r.note("data", a.data.display());
    let defaults = SRConfig::default();

    let population_size =
        require_at_least(r.usize("pop", a.pop, defaults.population_size)?, 1, "--pop")?;
    let generations = require_at_least(
        r.usize("generations", a.generations, defaults.generations)?,
        1,
        "--generations",
    )?;
    let tournament_size = require_at_least(
        r.usize("tournament", a.tournament, defaults.tournament_size)?,
        1,
        "--tournament",
    )?;
    let crossover_rate =
        require_probability(r.f64("crossover", a.crossover, defaults.crossover_rate)?, "--crossover")?;
    let mutation_rate =
        require_probability(r.f64("mutation", a.mutation, defaults.mutation_rate)?, "--mutation")?;
    if crossover_rate + mutation_rate > 1.0 {
        return Err(CliError::usage(format!(
            "invalid values for --crossover/--mutation: probabilities sum to {} > 1",
            crossover_rate + mutation_rate
        )));
    }
    let parsimony_coefficient = match r.opt_f64("parsimony", a.parsimony)? {
        Some(v) => Some(require_nonneg_finite(v, "--parsimony")?),
        None => None,
    };
    let max_depth = require_at_least(r.usize("depth", a.depth, defaults.max_depth)?, 1, "--depth")?;
    let feature_set = match r.opt_string("features", a.features)? {
        Some(raw) => {
            let names: Vec<String> = raw
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if names.is_empty() {
                return Err(CliError::usage(
                    "--features must list at least one feature name",
                ));
            }
            names
        }
        None => defaults.feature_set,
    };
    let output = r.out_path("output", a.output, &ctx.out_dir, "front.json")?;
    let csv_out = output.with_extension("csv");
    r.note("output_csv", csv_out.display());

    let config = SRConfig {
        population_size,
        generations,
        tournament_size,
        crossover_rate,
        mutation_rate,
        parsimony_coefficient,
        max_depth,
        seed: ctx.seed,
        feature_set,
    };

    let data = load_csv(&a.data)?;
    ctx.progress(format!(
        "searching {} records: population {population_size}, {generations} generations",
        data.len()
    ));
    let result = run_sr(&data, &config)?;

    let front: Vec<FrontMember> = result
        .pareto_front
        .iter()
        .map(|m| front_member(&m.expression, m.test_mse))
        .collect();
    let best = front_member(&result.best, result.best_test_mse);

    let front_file = FrontFile {
        schema: FRONT_SCHEMA,
        seed: ctx.seed,
        best,
        best_fitness: result.best_fitness,
        pareto_front: front,
        fitness_history: result.fitness_history.clone(),
    };
    let body = serde_json::to_string_pretty(&front_file)
        .map_err(|e| CliError::runtime(format!("front serialization failed: {e}")))?;
    std::fs::write(&output, body + "\n")
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", output.display())))?;

    let mut csv = String::from(
        "node_count,test_mse,ratio_of_token_load,log_compression,expression\n",
    );
    for m in &front_file.pareto_front {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            m.node_count, m.test_mse, m.ratio_of_token_load, m.log_compression, m.expression
        ));
    }
    std::fs::write(&csv_out, csv)
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", csv_out.display())))?;

    println!("pareto front ({} members):", front_file.pareto_front.len());
    for m in &front_file.pareto_front {
        let mut motifs = Vec::new();
        if m.ratio_of_token_load {
            motifs.push("ratio-of-token-load");
        }
        if m.log_compression {
            motifs.push("log-compression");
        }
        let motifs = if motifs.is_empty() {
            "-".to_string()
        } else {
            motifs.join("+")
        };
        println!(
            "  {:>3} nodes  mse {:>12.6e}  motifs {:<32} {}",
            m.node_count, m.test_mse, motifs, m.expression
        );
    }
    println!(
        "best (fitness {:.6e}, test mse {:.6e}): {}",
        front_file.best_fitness, front_file.best.test_mse, front_file.best.expression
    );
    println!("wrote {} and {}", output.display(), csv_out.display());

    Ok(CmdOutcome {
        settings: r.settings,
        inputs: vec![path_string(&a.data)],
        outputs: vec![path_string(&output), path_string(&csv_out)],
    })
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

fn cmd_bench(ctx: &Ctx, file: &FileConfig, a: BenchArgs) -> CliResult<CmdOutcome> {
    let mut r = Resolver::new(file, "bench");

    let sigma = require_nonneg_finite(r.f64("sigma", a.sigma, 0.05)?, "--sigma")?;
    let sizes_raw = r.string("train_sizes", a.train_sizes, "50,500")?;
    let sizes = parse_usize_list(&sizes_raw, "--train-sizes")?;
    for &n in &sizes {
        require_at_least(n, 1, "--train-sizes")?;
    }
    let methods = parse_methods(&r.string("methods", a.methods, ALL_METHODS)?, "--methods")?;
    let knobs = resolve_knobs(&mut r, a.knobs, ctx.seed)?;

    let data_path = ctx.out_dir.join("bench_data.csv");
    let reports_path = ctx.out_dir.join("bench_reports.json");
    let leaderboard_path = ctx.out_dir.join("bench_leaderboard.csv");

    ctx.progress(format!("generating pinned benchmark (sigma {sigma})"));
    let data = benchmark_dataset(sigma, ctx.seed)?;
    write_csv(&data, &data_path)?;
    let sidecar = sidecar_path(&data_path);
    write_sidecar(
        &data_path,
        &Sidecar {
            source: data.source.clone(),
            seed: ctx.seed,
            generator_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    )?;

    let mut reports = Vec::new();
    let mut first_failure: Option<String> = None;
    for &n in &sizes {
        let train = train_sample(&data, n, ctx.seed)?;
        let test = test_complement(&data, n, ctx.seed)?;
        let label = format!("benchmark-sigma{sigma}-seed{}-n{n}", ctx.seed);
        for &method in &methods {
            ctx.progress(format!("fitting {} at n={n}", method.name()));
            match fit_and_score(method, &train, &test, &knobs) {
                Ok(report) => reports.push(LabeledReport {
                    method: method.name().to_string(),
                    dataset: label.clone(),
                    report,
                }),
                Err(e) => {
                    eprintln!(
                        "warning: method `{}` at n={n} failed: {e}",
                        method.name()
                    );
                    first_failure
                        .get_or_insert_with(|| format!("{} at n={n}: {e}", method.name()));
                }
            }
        }
    }
    if reports.is_empty() {
        return Err(CliError::runtime(format!(
            "every requested method failed; first error: {}",
            first_failure.unwrap_or_default()
        )));
    }

    save_reports(&reports, &reports_path)?;
    write_leaderboard(&reports, &leaderboard_path)?;
    print!("{}", format_leaderboard(&reports));
    println!(
        "wrote {}, {}, and {}",
        data_path.display(),
        reports_path.display(),
        leaderboard_path.display()
    );

    Ok(CmdOutcome {
        settings: r.settings,
        inputs: Vec::new(),
        outputs: vec![
            path_string(&data_path),
            path_string(&sidecar),
            path_string(&reports_path),
            path_string(&leaderboard_path),
        ],
    })
}
