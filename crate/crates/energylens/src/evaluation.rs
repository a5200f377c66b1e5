//! Prediction metrics (MAPE, R², RMSE) and the scenario-level ranking suite
//! (pairwise accuracy, Spearman rho, Top-1 accuracy, mean regret).
//!
//! Ranking metrics answer the deployment question — does the model order
//! configurations correctly? — so they group records into *scenarios*:
//! measurements identical in everything except the parallelism layout
//! `(tp, pp)`. Within each scenario the ranking of measured energy is
//! compared against the ranking of predicted energy.
//!
//! Tie policy, chosen to never reward degenerate constant predictors:
//! measured ties are excluded from the pairwise denominator, predicted ties
//! count as incorrect.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineModel;
use crate::dataset::{Dataset, ProfilingRecord};
use crate::error::{Error, Result};
use crate::model::{EnergyParams, FitResult};

/// Anything that maps a profiling record to predicted joules.
pub trait EnergyPredictor {
    fn predict_energy(&self, record: &ProfilingRecord) -> Result<f64>;
}

impl EnergyPredictor for EnergyParams {
    fn predict_energy(&self, record: &ProfilingRecord) -> Result<f64> {
        self.predict(record)
    }
}

impl EnergyPredictor for FitResult {
    fn predict_energy(&self, record: &ProfilingRecord) -> Result<f64> {
        self.params.predict(record)
    }
}

impl EnergyPredictor for BaselineModel {
    fn predict_energy(&self, record: &ProfilingRecord) -> Result<f64> {
        self.predict(record)
    }
}

// ---------------------------------------------------------------------------
// Point metrics
// ---------------------------------------------------------------------------

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: actual.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if let Some(v) = pred.iter().chain(actual).find(|v| !v.is_finite()) {
        return Err(Error::NonFinitePrediction(format!(
            "metric input contains non-finite value {v}"
        )));
    }
    Ok(())
}

/// Mean absolute percentage error: `100 * mean(|pred - actual| / actual)`.
///
/// Requires strictly positive measured values.
pub fn mape(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    if let Some((i, a)) = actual.iter().enumerate().find(|(_, a)| **a <= 0.0) {
        return Err(Error::DegenerateTargets(format!(
            "mape requires positive measurements, found {a} at index {i}"
        )));
    }
    let total: f64 = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs() / a)
        .sum();
    Ok(100.0 * total / actual.len() as f64)
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
///
/// Undefined (an error, not 0) when the measurements are constant.
pub fn r_squared(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::DegenerateTargets(
            "r-squared is undefined for constant measurements".to_string(),
        ));
    }
    let ss_res: f64 = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (a - p) * (a - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Root mean squared error, in the units of the measurements.
pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    let total: f64 = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok((total / actual.len() as f64).sqrt())
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// Everything a scenario shares: the serving context and the workload axes.
/// Only the parallelism layout `(tp, pp)` varies inside a scenario.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub model_id: String,
    pub hardware_id: String,
    pub modality: String,
    pub batch_size: u32,
    pub max_tokens: u32,
    pub total_input_tokens: u32,
}

/// One `(tp, pp)` layout inside a scenario, with measured and predicted
/// energy (averaged over repeats).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEntry {
    pub tp: u32,
    pub pp: u32,
    pub actual: f64,
    pub predicted: f64,
}

/// A rankable group of at least two distinct `(tp, pp)` layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub key: ScenarioKey,
    /// Sorted by `(tp, pp)`; layouts are distinct.
    pub entries: Vec<ScenarioEntry>,
}

impl Scenario {
    /// Unordered layout pairs in this scenario: `k * (k - 1) / 2`.
    pub fn n_pairs(&self) -> usize {
        self.entries.len() * (self.entries.len() - 1) / 2
    }
}

/// Groups records and their aligned predictions into scenarios.
///
/// Repeated measurements of one `(tp, pp)` layout are averaged (both sides);
/// groups left with fewer than two distinct layouts are dropped. Output is
/// sorted by key, entries by `(tp, pp)`, so downstream aggregation is
/// deterministic.
pub fn group_scenarios(data: &Dataset, predictions: &[f64]) -> Result<Vec<Scenario>> {
    if predictions.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: data.len(),
            right: predictions.len(),
        });
    }
    if let Some(p) = predictions.iter().find(|p| !p.is_finite()) {
        return Err(Error::NonFinitePrediction(format!(
            "cannot rank non-finite prediction {p}"
        )));
    }

    type LayoutStats = (f64, f64, usize);
    let mut groups: BTreeMap<ScenarioKey, BTreeMap<(u32, u32), LayoutStats>> = BTreeMap::new();
    for (record, &prediction) in data.records.iter().zip(predictions) {
        let key = ScenarioKey {
            model_id: record.model_id.clone(),
            hardware_id: record.hardware_id.clone(),
            modality: record.modality.clone(),
            batch_size: record.batch_size,
            max_tokens: record.max_tokens,
            total_input_tokens: record.total_input_tokens,
        };
        let slot = groups
            .entry(key)
            .or_default()
            .entry((record.tp, record.pp))
            .or_insert((0.0, 0.0, 0));
        slot.0 += record.energy_j;
        slot.1 += prediction;
        slot.2 += 1;
    }

    Ok(groups
        .into_iter()
        .filter(|(_, layouts)| layouts.len() >= 2)
        .map(|(key, layouts)| Scenario {
            key,
            entries: layouts
                .into_iter()
                .map(|((tp, pp), (actual_sum, pred_sum, count))| ScenarioEntry {
                    tp,
                    pp,
                    actual: actual_sum / count as f64,
                    predicted: pred_sum / count as f64,
                })
                .collect(),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Ranking metrics
// ---------------------------------------------------------------------------

/// Fraction of layout pairs whose predicted energy ordering matches the
/// measured ordering, with the default tie tolerance of zero.
pub fn pairwise_accuracy(scenarios: &[Scenario]) -> Result<f64> {
    pairwise_accuracy_with_tolerance(scenarios, 0.0)
}

/// [`pairwise_accuracy`] with an explicit measured-tie tolerance: pairs with
/// `|actual_i - actual_j| <= tie_tolerance` are excluded from the
/// denominator. Predicted ties always count as incorrect.
pub fn pairwise_accuracy_with_tolerance(
    scenarios: &[Scenario],
    tie_tolerance: f64,
) -> Result<f64> {
    let mut comparable = 0usize;
    let mut correct = 0usize;
    for scenario in scenarios {
        for i in 0..scenario.entries.len() {
            for j in (i + 1)..scenario.entries.len() {
                let a = &scenario.entries[i];
                let b = &scenario.entries[j];
                if (a.actual - b.actual).abs() <= tie_tolerance {
                    continue;
                }
                comparable += 1;
                let dp = a.predicted - b.predicted;
                let da = a.actual - b.actual;
                if dp != 0.0 && (dp > 0.0) == (da > 0.0) {
                    correct += 1;
                }
            }
        }
    }
    if comparable == 0 {
        return Err(Error::NoScenarios(
            "no comparable pairs (every pair is a measured tie or no scenario has two layouts)"
                .to_string(),
        ));
    }
    Ok(correct as f64 / comparable as f64)
}

/// Average ranks (1-based, ties receive the mean of their positions).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len()
            && values[order[j + 1]].total_cmp(&values[order[i]]).is_eq()
        {
            j += 1;
        }
        // Positions i..=j (0-based) share the average rank.
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &index in &order[i..=j] {
            ranks[index] = shared;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return None;
    }
    Some(cov / (var_a * var_b).sqrt())
}

/// Mean Spearman rank correlation and the count of scenarios excluded as
/// degenerate (zero rank variance on either side).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpearmanOutcome {
    /// Unweighted mean of per-scenario rank correlations.
    pub mean_rho: f64,
    /// Scenarios whose rho is undefined (e.g. all predictions identical).
    pub n_excluded: usize,
}

/// Per-scenario Spearman rank correlation with average-rank tie handling,
/// averaged (unweighted) over scenarios. Degenerate scenarios are excluded
/// and counted; if every scenario is degenerate this is an error.
pub fn spearman_rho(scenarios: &[Scenario]) -> Result<SpearmanOutcome> {
    let mut total = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for scenario in scenarios {
        let predicted: Vec<f64> = scenario.entries.iter().map(|e| e.predicted).collect();
        let actual: Vec<f64> = scenario.entries.iter().map(|e| e.actual).collect();
        match pearson(&average_ranks(&predicted), &average_ranks(&actual)) {
            Some(rho) => {
                total += rho;
                used += 1;
            }
            None => excluded += 1,
        }
    }
    if used == 0 {
        return Err(Error::NoScenarios(
            "every scenario has degenerate ranks; spearman rho is undefined".to_string(),
        ));
    }
    Ok(SpearmanOutcome {
        mean_rho: total / used as f64,
        n_excluded: excluded,
    })
}

/// Index of the minimizing entry, breaking value ties toward the lowest
/// `(tp, pp)` in lexicographic order.
fn argmin_entry(entries: &[ScenarioEntry], value: impl Fn(&ScenarioEntry) -> f64) -> usize {
    let mut best = 0;
    for i in 1..entries.len() {
        let candidate = (value(&entries[i]), entries[i].tp, entries[i].pp);
        let incumbent = (value(&entries[best]), entries[best].tp, entries[best].pp);
        if candidate.0.total_cmp(&incumbent.0).then(
            (candidate.1, candidate.2).cmp(&(incumbent.1, incumbent.2)),
        ) == std::cmp::Ordering::Less
        {
            best = i;
        }
    }
    best
}

/// Top-1 accuracy and mean regret over scenarios.
///
/// Top-1: fraction of scenarios where the predicted argmin layout equals the
/// measured argmin layout (ties on both sides broken toward the lowest
/// `(tp, pp)`). Regret per scenario: the percentage extra measured energy
/// incurred by deploying the predicted pick instead of the measured best.
pub fn top1_and_regret(scenarios: &[Scenario]) -> Result<(f64, f64)> {
    if scenarios.is_empty() {
        return Err(Error::NoScenarios(
            "top-1 and regret need at least one scenario".to_string(),
        ));
    }
    let mut hits = 0usize;
    let mut regret_total = 0.0;
    for scenario in scenarios {
        if scenario.entries.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: scenario.entries.len(),
            });
        }
        let picked = argmin_entry(&scenario.entries, |e| e.predicted);
        let best = argmin_entry(&scenario.entries, |e| e.actual);
        if picked == best {
            hits += 1;
        }
        let best_energy = scenario.entries[best].actual;
        regret_total += 100.0 * (scenario.entries[picked].actual - best_energy) / best_energy;
    }
    Ok((
        hits as f64 / scenarios.len() as f64,
        regret_total / scenarios.len() as f64,
    ))
}

// ---------------------------------------------------------------------------
// Full evaluation
// ---------------------------------------------------------------------------

/// Every metric for one (predictor, split) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Training records the predictor saw (provenance, not recomputed here).
    pub n_train: usize,
    /// Test records all metrics are computed on.
    pub n_test: usize,
    pub mape: f64,
    pub r2: f64,
    pub rmse: f64,
    pub pairwise_accuracy: f64,
    pub spearman_rho: f64,
    pub top1_accuracy: f64,
    pub mean_regret_pct: f64,
    /// Rankable scenarios in the test split.
    pub n_scenarios: usize,
    /// Unordered layout pairs across scenarios: sum of k*(k-1)/2.
    pub n_pairs: usize,
    /// Scenarios excluded from the Spearman mean as rank-degenerate.
    pub n_rho_excluded: usize,
}

/// Evaluates a fitted predictor on a held-out test split.
///
/// The training split contributes only its size (for reporting); every
/// metric comes from the test split. Errors from prediction or from
/// degenerate metric inputs propagate.
pub fn evaluate(
    predictor: &dyn EnergyPredictor,
    train: &Dataset,
    test: &Dataset,
) -> Result<EvalReport> {
    let predictions = test
        .records
        .iter()
        .map(|r| predictor.predict_energy(r))
        .collect::<Result<Vec<f64>>>()?;
    let actual = test.energies();

    let scenarios = group_scenarios(test, &predictions)?;
    let spearman = spearman_rho(&scenarios)?;
    let (top1, regret) = top1_and_regret(&scenarios)?;

    Ok(EvalReport {
        n_train: train.len(),
        n_test: test.len(),
        mape: mape(&predictions, &actual)?,
        r2: r_squared(&predictions, &actual)?,
        rmse: rmse(&predictions, &actual)?,
        pairwise_accuracy: pairwise_accuracy(&scenarios)?,
        spearman_rho: spearman.mean_rho,
        top1_accuracy: top1,
        mean_regret_pct: regret,
        n_scenarios: scenarios.len(),
        n_pairs: scenarios.iter().map(Scenario::n_pairs).sum(),
        n_rho_excluded: spearman.n_excluded,
    })
}

// ---------------------------------------------------------------------------
// Reporting artifacts
// ---------------------------------------------------------------------------

/// Schema tag for report files.
pub const REPORT_SCHEMA: &str = "energylens-report-v1";

/// An [`EvalReport`] labeled with the method and dataset it describes — one
/// leaderboard row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReport {
    pub method: String,
    pub dataset: String,
    #[serde(flatten)]
    pub report: EvalReport,
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    schema: String,
    reports: Vec<LabeledReport>,
}

/// Writes labeled reports as pretty-printed JSON with a schema tag.
pub fn save_reports(reports: &[LabeledReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = ReportFile {
        schema: REPORT_SCHEMA.to_string(),
        reports: reports.to_vec(),
    };
    let body = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::SchemaMismatch(format!("report serialization failed: {e}")))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

/// Loads labeled reports, checking the schema tag.
pub fn load_reports(path: impl AsRef<Path>) -> Result<Vec<LabeledReport>> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ReportFile = serde_json::from_str(&body)
        .map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))?;
    if file.schema != REPORT_SCHEMA {
        return Err(Error::SchemaMismatch(format!(
            "expected schema `{REPORT_SCHEMA}`, found `{}`",
            file.schema
        )));
    }
    Ok(file.reports)
}

/// Leaderboard CSV header.
pub const LEADERBOARD_COLUMNS: &str =
    "method,dataset,n_train,mape,r2,rmse,pairwise,spearman,top1,regret";

/// Writes the leaderboard CSV (full float precision, deterministic).
pub fn write_leaderboard(reports: &[LabeledReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut body = String::from(LEADERBOARD_COLUMNS);
    body.push('\n');
    for row in reports {
        let r = &row.report;
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.method,
            row.dataset,
            r.n_train,
            r.mape,
            r.r2,
            r.rmse,
            r.pairwise_accuracy,
            r.spearman_rho,
            r.top1_accuracy,
            r.mean_regret_pct,
        ));
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Renders labeled reports as an aligned human-readable table.
pub fn format_leaderboard(reports: &[LabeledReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:<24} {:>7} {:>8} {:>7} {:>10} {:>8} {:>8} {:>6} {:>8}\n",
        "method", "dataset", "n_train", "mape%", "r2", "rmse", "pairwise", "spearman", "top1",
        "regret%"
    ));
    for row in reports {
        let r = &row.report;
        let dataset: String = if row.dataset.chars().count() > 24 {
            let head: String = row.dataset.chars().take(23).collect();
            format!("{head}…")
        } else {
            row.dataset.clone()
        };
        out.push_str(&format!(
            "{:<12} {:<24} {:>7} {:>8.2} {:>7.4} {:>10.2} {:>8.4} {:>8.4} {:>6.3} {:>8.3}\n",
            row.method,
            dataset,
            r.n_train,
            r.mape,
            r.r2,
            r.rmse,
            r.pairwise_accuracy,
            r.spearman_rho,
            r.top1_accuracy,
            r.mean_regret_pct,
        ));
    }
    out
}
