//! The closed-form energy model: evaluation, analytic gradient, and fitting.
//!
//! Energy for one configuration decomposes into a prefill term driven by
//! input tokens, a decode term driven by output tokens, and a linear parallel
//! overhead term:
//!
//! ```text
//! E = alpha_p * T_in  / (B^beta_p + eps_p) * tp^gamma1_p * pp^gamma2_p
//!   + alpha_d * T_out / (B^beta_d + eps_d) * tp^gamma1_d * pp^gamma2_d
//!   + delta1 * tp + delta2 * pp
//! ```
//!
//! with `T_in = total_input_tokens`, `T_out = max_tokens`, `B = batch_size`.
//! The batch denominators capture amortization of per-token cost across a
//! batch; the signed exponents on tp/pp capture how parallelism helps one
//! phase and taxes the other; the delta terms capture static per-GPU overhead.
//!
//! Parameters live in boxes: the scale parameters (`alpha_*`, `eps_*`,
//! `delta*`) are non-negative, the batch exponents `beta_*` lie in [0, 3],
//! and the parallelism exponents `gamma*` lie in [-3, 3]. Fitting minimizes a
//! robust log-space loss with a multi-start projected L-BFGS so that a single
//! bad basin cannot capture the fit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{ConfigPoint, Dataset, ProfilingRecord};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::optim;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Number of free parameters in the model.
pub const N_PARAMS: usize = 12;

/// Canonical parameter order used by [`EnergyParams::to_array`],
/// [`grad_energy`], and every serialized artifact.
pub const PARAM_NAMES: [&str; N_PARAMS] = [
    "alpha_p", "alpha_d", "beta_p", "beta_d", "eps_p", "eps_d", "gamma1_p", "gamma2_p",
    "gamma1_d", "gamma2_d", "delta1", "delta2",
];

/// Inclusive range for the batch exponents `beta_p`, `beta_d`.
pub const BETA_RANGE: (f64, f64) = (0.0, 3.0);

/// Inclusive range for the parallelism exponents `gamma*`.
pub const GAMMA_RANGE: (f64, f64) = (-3.0, 3.0);

/// Floor applied to batch denominators. For valid configurations
/// (`batch_size >= 1`, `beta >= 0`, `eps >= 0`) the denominator is already
/// at least 1, so the floor only matters as a safety net against corrupted
/// parameter vectors.
const DENOM_FLOOR: f64 = 1e-12;

/// Floor inside `ln` when computing the log-space loss, so that a model
/// predicting (numerically) zero energy yields a huge but finite loss instead
/// of `-inf`.
const LOG_FLOOR: f64 = 1e-300;

/// The twelve parameters of the closed-form energy model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyParams {
    /// Prefill scale (joules per input token at unit denominator), >= 0.
    pub alpha_p: f64,
    /// Decode scale (joules per output token at unit denominator), >= 0.
    pub alpha_d: f64,
    /// Prefill batch-amortization exponent, in [0, 3].
    pub beta_p: f64,
    /// Decode batch-amortization exponent, in [0, 3].
    pub beta_d: f64,
    /// Prefill batch-denominator offset, >= 0.
    pub eps_p: f64,
    /// Decode batch-denominator offset, >= 0.
    pub eps_d: f64,
    /// Prefill tensor-parallel exponent, in [-3, 3].
    pub gamma1_p: f64,
    /// Prefill pipeline-parallel exponent, in [-3, 3].
    pub gamma2_p: f64,
    /// Decode tensor-parallel exponent, in [-3, 3].
    pub gamma1_d: f64,
    /// Decode pipeline-parallel exponent, in [-3, 3].
    pub gamma2_d: f64,
    /// Static overhead per tensor-parallel rank (joules), >= 0.
    pub delta1: f64,
    /// Static overhead per pipeline stage (joules), >= 0.
    pub delta2: f64,
}

impl EnergyParams {
    /// Parameters in the canonical [`PARAM_NAMES`] order.
    pub fn to_array(&self) -> [f64; N_PARAMS] {
        [
            self.alpha_p, self.alpha_d, self.beta_p, self.beta_d, self.eps_p, self.eps_d,
            self.gamma1_p, self.gamma2_p, self.gamma1_d, self.gamma2_d, self.delta1, self.delta2,
        ]
    }

    /// Inverse of [`EnergyParams::to_array`].
    pub fn from_array(a: &[f64; N_PARAMS]) -> Self {
        EnergyParams {
            alpha_p: a[0],
            alpha_d: a[1],
            beta_p: a[2],
            beta_d: a[3],
            eps_p: a[4],
            eps_d: a[5],
            gamma1_p: a[6],
            gamma2_p: a[7],
            gamma1_d: a[8],
            gamma2_d: a[9],
            delta1: a[10],
            delta2: a[11],
        }
    }

    /// The box constraints for each parameter, in canonical order.
    pub fn bounds() -> optim::Bounds {
        let inf = f64::INFINITY;
        optim::Bounds::new(
            vec![
                0.0, 0.0, // alpha
                BETA_RANGE.0, BETA_RANGE.0, // beta
                0.0, 0.0, // eps
                GAMMA_RANGE.0, GAMMA_RANGE.0, GAMMA_RANGE.0, GAMMA_RANGE.0, // gamma
                0.0, 0.0, // delta
            ],
            vec![
                inf, inf,
                BETA_RANGE.1, BETA_RANGE.1,
                inf, inf,
                GAMMA_RANGE.1, GAMMA_RANGE.1, GAMMA_RANGE.1, GAMMA_RANGE.1,
                inf, inf,
            ],
        )
        .expect("static bounds are well-formed")
    }

    /// Checks that every parameter is finite and inside its box.
    pub fn validate(&self) -> Result<()> {
        let bounds = Self::bounds();
        let values = self.to_array();
        for i in 0..N_PARAMS {
            let v = values[i];
            if !v.is_finite() || v < bounds.lower[i] || v > bounds.upper[i] {
                return Err(Error::BoundsViolation {
                    name: PARAM_NAMES[i].to_string(),
                    value: v,
                    lower: bounds.lower[i],
                    upper: bounds.upper[i],
                });
            }
        }
        Ok(())
    }

    /// Predicted energy for a profiling record's configuration.
    pub fn predict(&self, record: &ProfilingRecord) -> Result<f64> {
        eval_energy(
            self,
            record.tp,
            record.pp,
            record.batch_size,
            record.max_tokens,
            record.total_input_tokens,
        )
    }

    /// Predicted energy for a configuration point and an input-token load.
    pub fn predict_point(&self, point: &ConfigPoint, total_input_tokens: u32) -> Result<f64> {
        eval_energy(
            self,
            point.tp,
            point.pp,
            point.batch_size,
            point.max_tokens,
            total_input_tokens,
        )
    }
}

fn check_config(tp: u32, pp: u32, batch_size: u32, max_tokens: u32, total_input_tokens: u32) -> Result<()> {
    for (name, v) in [
        ("tp", tp),
        ("pp", pp),
        ("batch_size", batch_size),
        ("max_tokens", max_tokens),
        ("total_input_tokens", total_input_tokens),
    ] {
        if v == 0 {
            return Err(Error::InvalidSpace(format!(
                "configuration value `{name}` must be >= 1, got 0"
            )));
        }
    }
    Ok(())
}

/// Evaluates the closed-form energy model at one configuration.
///
/// Errors if any configuration value is zero or the result is non-finite
/// (which cannot happen for in-box parameters and valid configurations).
pub fn eval_energy(
    params: &EnergyParams,
    tp: u32,
    pp: u32,
    batch_size: u32,
    max_tokens: u32,
    total_input_tokens: u32,
) -> Result<f64> {
    check_config(tp, pp, batch_size, max_tokens, total_input_tokens)?;
    let x = params.to_array();
    let row = EvalInputs::new(
        tp,
        pp,
        batch_size,
        max_tokens,
        total_input_tokens,
    );
    let e = eval_raw(&x, &row);
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::NonFinitePrediction(format!(
            "energy model produced {e} at tp={tp} pp={pp} batch_size={batch_size} \
             max_tokens={max_tokens} total_input_tokens={total_input_tokens}"
        )))
    }
}

/// Analytic gradient of [`eval_energy`] with respect to the twelve parameters,
/// in canonical order.
pub fn grad_energy(
    params: &EnergyParams,
    tp: u32,
    pp: u32,
    batch_size: u32,
    max_tokens: u32,
    total_input_tokens: u32,
) -> Result<[f64; N_PARAMS]> {
    check_config(tp, pp, batch_size, max_tokens, total_input_tokens)?;
    let x = params.to_array();
    let row = EvalInputs::new(tp, pp, batch_size, max_tokens, total_input_tokens);
    let (_, grad) = eval_with_grad(&x, &row);
    if grad.iter().all(|g| g.is_finite()) {
        Ok(grad)
    } else {
        Err(Error::NonFinitePrediction(format!(
            "energy gradient non-finite at tp={tp} pp={pp} batch_size={batch_size}"
        )))
    }
}

/// Precomputed per-configuration quantities shared by evaluation, gradient,
/// and fitting.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EvalInputs {
    tp: f64,
    pp: f64,
    b: f64,
    t_out: f64,
    t_in: f64,
    ln_tp: f64,
    ln_pp: f64,
    ln_b: f64,
}

impl EvalInputs {
    pub(crate) fn new(tp: u32, pp: u32, batch_size: u32, max_tokens: u32, total_input_tokens: u32) -> Self {
        let tp = f64::from(tp);
        let pp = f64::from(pp);
        let b = f64::from(batch_size);
        EvalInputs {
            tp,
            pp,
            b,
            t_out: f64::from(max_tokens),
            t_in: f64::from(total_input_tokens),
            ln_tp: tp.ln(),
            ln_pp: pp.ln(),
            ln_b: b.ln(),
        }
    }
}

/// Core evaluation on a raw parameter vector (canonical order).
fn eval_raw(x: &[f64], r: &EvalInputs) -> f64 {
    let denom_p = (r.b.powf(x[2]) + x[4]).max(DENOM_FLOOR);
    let denom_d = (r.b.powf(x[3]) + x[5]).max(DENOM_FLOOR);
    let par_p = r.tp.powf(x[6]) * r.pp.powf(x[7]);
    let par_d = r.tp.powf(x[8]) * r.pp.powf(x[9]);
    let prefill = x[0] * r.t_in / denom_p * par_p;
    let decode = x[1] * r.t_out / denom_d * par_d;
    prefill + decode + x[10] * r.tp + x[11] * r.pp
}

/// Evaluation plus analytic gradient on a raw parameter vector.
///
/// Derivatives follow from the chain rule on each term; for example the
/// prefill term `P = alpha_p * T_in / (B^beta_p + eps_p) * tp^g1p * pp^g2p`
/// gives `dP/dbeta_p = -P * B^beta_p * ln(B) / (B^beta_p + eps_p)` and
/// `dP/dg1p = P * ln(tp)`.
fn eval_with_grad(x: &[f64], r: &EvalInputs) -> (f64, [f64; N_PARAMS]) {
    let b_pow_p = r.b.powf(x[2]);
    let b_pow_d = r.b.powf(x[3]);
    let denom_p = (b_pow_p + x[4]).max(DENOM_FLOOR);
    let denom_d = (b_pow_d + x[5]).max(DENOM_FLOOR);
    let par_p = r.tp.powf(x[6]) * r.pp.powf(x[7]);
    let par_d = r.tp.powf(x[8]) * r.pp.powf(x[9]);
    let prefill_per_alpha = r.t_in / denom_p * par_p;
    let decode_per_alpha = r.t_out / denom_d * par_d;
    let prefill = x[0] * prefill_per_alpha;
    let decode = x[1] * decode_per_alpha;
    let e = prefill + decode + x[10] * r.tp + x[11] * r.pp;
    let grad = [
        prefill_per_alpha,
        decode_per_alpha,
        -prefill * b_pow_p * r.ln_b / denom_p,
        -decode * b_pow_d * r.ln_b / denom_d,
        -prefill / denom_p,
        -decode / denom_d,
        prefill * r.ln_tp,
        prefill * r.ln_pp,
        decode * r.ln_tp,
        decode * r.ln_pp,
        r.tp,
        r.pp,
    ];
    (e, grad)
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// Loss minimized by [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Mean squared log-space error `mean((ln(pred) - ln(actual))^2)`.
    ///
    /// Scale-free and robust to the orders-of-magnitude spread in energy
    /// across configurations; the default.
    SqAbsLog,
    /// Mean squared relative error `mean(((pred - actual) / actual)^2)`.
    SqRel,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossKind::SqAbsLog => write!(f, "sq-abs-log"),
            LossKind::SqRel => write!(f, "sq-rel"),
        }
    }
}

/// Knobs for [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Independent optimizer starts (one heuristic + the rest randomized).
    pub n_starts: usize,
    /// Seed driving the randomized starts.
    pub seed: u64,
    /// Iteration cap per start.
    pub max_iters: usize,
    /// Loss to minimize.
    pub loss: LossKind,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_starts: 16,
            seed: 42,
            max_iters: 500,
            loss: LossKind::SqAbsLog,
        }
    }
}

/// Outcome of [`fit`]: the parameters plus enough provenance to reproduce and
/// audit the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: EnergyParams,
    /// Loss kind that was minimized.
    pub loss: LossKind,
    /// Final training loss of the winning start.
    pub train_loss: f64,
    /// Number of training records.
    pub n_train: usize,
    /// Total optimizer starts attempted.
    pub n_starts: usize,
    /// Starts that terminated via a convergence criterion.
    pub converged_starts: usize,
    /// Seed the randomized starts were derived from.
    pub seed: u64,
}

/// One training observation: a configuration plus a positive target value.
pub(crate) struct FitRow {
    pub(crate) inputs: EvalInputs,
    pub(crate) target: f64,
    pub(crate) ln_target: f64,
}

impl FitRow {
    pub(crate) fn new(record: &ProfilingRecord, target: f64) -> Self {
        FitRow {
            inputs: EvalInputs::new(
                record.tp,
                record.pp,
                record.batch_size,
                record.max_tokens,
                record.total_input_tokens,
            ),
            target,
            ln_target: target.ln(),
        }
    }
}

/// Training loss and gradient over a set of rows for a raw parameter vector.
fn loss_and_grad(x: &[f64], rows: &[FitRow], kind: LossKind) -> (f64, Vec<f64>) {
    let n = rows.len() as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; N_PARAMS];
    for row in rows {
        let (e, de) = eval_with_grad(x, &row.inputs);
        match kind {
            LossKind::SqAbsLog => {
                let guarded = e.max(LOG_FLOOR);
                let residual = guarded.ln() - row.ln_target;
                total += residual * residual;
                // d/de ln(max(e, floor)) is 1/e above the floor and 0 below it.
                if e > LOG_FLOOR {
                    let coeff = 2.0 * residual / guarded;
                    for i in 0..N_PARAMS {
                        grad[i] += coeff * de[i];
                    }
                }
            }
            LossKind::SqRel => {
                let residual = (e - row.target) / row.target;
                total += residual * residual;
                let coeff = 2.0 * residual / row.target;
                for i in 0..N_PARAMS {
                    grad[i] += coeff * de[i];
                }
            }
        }
    }
    for g in grad.iter_mut() {
        *g /= n;
    }
    (total / n, grad)
}

/// Data-driven heuristic start: unit batch exponents and offsets, flat
/// parallelism exponents, scales sized so prefill and decode each explain
/// about half the mean target and the overhead explains about half the
/// smallest target.
fn heuristic_start(rows: &[FitRow]) -> [f64; N_PARAMS] {
    let n = rows.len() as f64;
    let mean_target = rows.iter().map(|r| r.target).sum::<f64>() / n;
    let mean_b = rows.iter().map(|r| r.inputs.b).sum::<f64>() / n;
    let mean_t_in = rows.iter().map(|r| r.inputs.t_in).sum::<f64>() / n;
    let mean_t_out = rows.iter().map(|r| r.inputs.t_out).sum::<f64>() / n;
    let min_row = rows
        .iter()
        .min_by(|a, b| a.target.total_cmp(&b.target))
        .expect("rows is non-empty");
    let overhead = 0.5 * min_row.target / (min_row.inputs.tp + min_row.inputs.pp);
    [
        0.5 * mean_target * (mean_b + 1.0) / mean_t_in,
        0.5 * mean_target * (mean_b + 1.0) / mean_t_out,
        1.0,
        1.0,
        1.0,
        1.0,
        0.0,
        0.0,
        0.0,
        0.0,
        overhead,
        overhead,
    ]
}

/// Indices of the scale-like parameters (drawn log-uniformly around the
/// heuristic); the remaining exponents are drawn uniformly within their boxes.
const SCALE_PARAM_INDICES: [usize; 6] = [0, 1, 4, 5, 10, 11];

fn random_start(heuristic: &[f64; N_PARAMS], rng: &mut ChaCha8Rng) -> [f64; N_PARAMS] {
    let mut x = *heuristic;
    // Draw in canonical parameter order so the stream layout is stable.
    for i in 0..N_PARAMS {
        if SCALE_PARAM_INDICES.contains(&i) {
            let magnitude: f64 = rng.random_range(-2.0..2.0);
            let base = heuristic[i].max(1e-12);
            x[i] = base * 10f64.powf(magnitude);
        } else if i == 2 || i == 3 {
            x[i] = rng.random_range(BETA_RANGE.0..BETA_RANGE.1);
        } else {
            x[i] = rng.random_range(GAMMA_RANGE.0..GAMMA_RANGE.1);
        }
    }
    x
}

/// Fits the energy model to a dataset's energies.
///
/// Requires at least 13 records (one more than the parameter count) from a
/// single (model, hardware, modality) context. Runs `n_starts` independent
/// projected L-BFGS starts — one heuristic, the rest randomized around it —
/// and returns the lowest-loss start, breaking exact ties toward the lowest
/// start index. Deterministic for fixed data, options, and seed.
pub fn fit(data: &Dataset, options: &FitOptions) -> Result<FitResult> {
    if data.len() < N_PARAMS + 1 {
        return Err(Error::InsufficientData {
            needed: N_PARAMS + 1,
            got: data.len(),
        });
    }
    let contexts = data.contexts();
    if contexts.len() > 1 {
        let labels: Vec<String> = contexts
            .iter()
            .map(|(m, h, d)| format!("({m}, {h}, {d})"))
            .collect();
        return Err(Error::MixedContext(labels.join(", ")));
    }
    let rows: Vec<FitRow> = data
        .records
        .iter()
        .map(|r| FitRow::new(r, r.energy_j))
        .collect();
    fit_rows(&rows, &EnergyParams::bounds(), options)
}

/// Shared multi-start driver over prepared rows and bounds. The latency-proxy
/// baseline reuses this with the overhead parameters pinned to zero.
pub(crate) fn fit_rows(
    rows: &[FitRow],
    bounds: &optim::Bounds,
    options: &FitOptions,
) -> Result<FitResult> {
    if options.n_starts == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let optim_options = optim::Options {
        max_iters: options.max_iters,
        ..optim::Options::default()
    };
    let heuristic = heuristic_start(rows);
    let objective = |x: &[f64]| loss_and_grad(x, rows, options.loss);

    let mut best: Option<optim::Outcome> = None;
    let mut converged_starts = 0usize;
    for start_index in 0..options.n_starts {
        let mut x0 = if start_index == 0 {
            heuristic
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(options.seed, start_index as u64));
            random_start(&heuristic, &mut rng)
        };
        bounds.project(&mut x0);
        let outcome = optim::minimize(objective, &x0, bounds, &optim_options);
        if outcome.converged() {
            converged_starts += 1;
        }
        // Strict comparison keeps the earliest start on exact ties.
        let better = match &best {
            None => outcome.loss.is_finite(),
            Some(current) => outcome.loss.is_finite() && outcome.loss < current.loss,
        };
        if better {
            best = Some(outcome);
        }
    }

    let best = best.ok_or(Error::NoConvergence {
        best_loss: f64::INFINITY,
        n_starts: options.n_starts,
    })?;
    if converged_starts == 0 {
        return Err(Error::NoConvergence {
            best_loss: best.loss,
            n_starts: options.n_starts,
        });
    }
    let mut array = [0.0; N_PARAMS];
    array.copy_from_slice(&best.x);
    Ok(FitResult {
        params: EnergyParams::from_array(&array),
        loss: options.loss,
        train_loss: best.loss,
        n_train: rows.len(),
        n_starts: options.n_starts,
        converged_starts,
        seed: options.seed,
    })
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Schema tag for parameter files.
pub const PARAMS_SCHEMA: &str = "energylens-params-v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    schema: String,
    params: EnergyParams,
    fit: FitProvenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitProvenance {
    loss: LossKind,
    train_loss: f64,
    n_train: usize,
    n_starts: usize,
    converged_starts: usize,
    seed: u64,
}

/// Writes a fit result as pretty-printed JSON with a schema tag.
///
/// Output is deterministic: key order is fixed and floats use shortest
/// round-trip formatting.
pub fn save_params(result: &FitResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = ParamsFile {
        schema: PARAMS_SCHEMA.to_string(),
        params: result.params,
        fit: FitProvenance {
            loss: result.loss,
            train_loss: result.train_loss,
            n_train: result.n_train,
            n_starts: result.n_starts,
            converged_starts: result.converged_starts,
            seed: result.seed,
        },
    };
    let body = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::SchemaMismatch(format!("parameter serialization failed: {e}")))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

/// Loads a parameter file, checking the schema tag and the parameter boxes.
pub fn load_params(path: impl AsRef<Path>) -> Result<FitResult> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ParamsFile = serde_json::from_str(&body)
        .map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))?;
    if file.schema != PARAMS_SCHEMA {
        return Err(Error::SchemaMismatch(format!(
            "expected schema `{PARAMS_SCHEMA}`, found `{}`",
            file.schema
        )));
    }
    file.params.validate()?;
    Ok(FitResult {
        params: file.params,
        loss: file.fit.loss,
        train_loss: file.fit.train_loss,
        n_train: file.fit.n_train,
        n_starts: file.fit.n_starts,
        converged_starts: file.fit.converged_starts,
        seed: file.fit.seed,
    })
}
