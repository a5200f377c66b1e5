//! Baseline energy predictors the closed-form model is compared against.
//!
//! Four families, all consuming the same five raw configuration columns
//! (no engineered features, so the comparison stays honest):
//!
//! * [`fit_linear`] — ridge-regularized linear regression solved by centered
//!   normal equations.
//! * [`fit_forest`] — a bagged ensemble of variance-reduction regression
//!   trees (bootstrap rows, random feature subset per split).
//! * [`fit_boosting`] — squared-loss gradient boosting with shallow trees.
//! * [`fit_latency_proxy`] — a latency surrogate of the same two-phase ratio
//!   family as the energy model (overhead terms pinned to zero), multiplied
//!   by a per-configuration or global-mean power estimate, with one global
//!   scale factor refined to minimize training energy MAPE.
//!
//! Every fitter is deterministic for a fixed seed; randomized ensembles draw
//! per-tree sub-seeds so results do not depend on fitting order.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ProfilingRecord};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::model::{self, EnergyParams, FitOptions};
use crate::optim;

/// Number of baseline input features.
pub const N_FEATURES: usize = 5;

/// The baseline feature columns, in order.
pub const FEATURE_NAMES: [&str; N_FEATURES] =
    ["tp", "pp", "batch_size", "max_tokens", "total_input_tokens"];

/// Features examined per split in a bagged forest: ceil(sqrt(5)).
pub const FOREST_SPLIT_FEATURES: usize = 3;

/// Default tree count for both ensembles.
pub const DEFAULT_N_TREES: usize = 100;

/// Default shrinkage for gradient boosting.
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

/// Depth cap for bagged forest trees.
pub const FOREST_MAX_DEPTH: usize = 12;

/// Depth cap for boosted trees.
pub const BOOSTING_MAX_DEPTH: usize = 3;

/// Minimum records in any leaf.
pub const MIN_LEAF: usize = 2;

/// Ridge coefficient used when the unregularized normal equations are
/// singular.
pub const RIDGE_FALLBACK_LAMBDA: f64 = 1e-8;

/// Extracts the raw feature vector for one record.
pub fn baseline_features(record: &ProfilingRecord) -> [f64; N_FEATURES] {
    [
        f64::from(record.tp),
        f64::from(record.pp),
        f64::from(record.batch_size),
        f64::from(record.max_tokens),
        f64::from(record.total_input_tokens),
    ]
}

// ---------------------------------------------------------------------------
// Linear regression
// ---------------------------------------------------------------------------

/// A fitted ridge regression over the raw configuration columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// One weight per entry of [`FEATURE_NAMES`].
    pub weights: Vec<f64>,
    /// Unpenalized intercept.
    pub intercept: f64,
    /// Ridge coefficient that was requested.
    pub lambda: f64,
    /// Set when the requested system was singular and the fit fell back to
    /// [`RIDGE_FALLBACK_LAMBDA`].
    pub fallback_lambda: Option<f64>,
}

/// Weights and intercept of a ridge regression on an arbitrary design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Set when the requested system was singular and the solve fell back to
    /// [`RIDGE_FALLBACK_LAMBDA`].
    pub fallback_lambda: Option<f64>,
}

/// Solves a ridge regression with an unpenalized intercept via centered
/// normal equations.
///
/// Columns and targets are centered, `(XᵀX + λI) w = Xᵀy` is solved by
/// Cholesky factorization, and the intercept is recovered from the means. A
/// singular system (possible only at λ=0, e.g. a constant feature column) is
/// reported through [`RidgeSolution::fallback_lambda`] and re-solved with
/// [`RIDGE_FALLBACK_LAMBDA`].
pub fn ridge_fit(rows: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<RidgeSolution> {
    if rows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: targets.len(),
        });
    }
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::SchemaMismatch(
            "design matrix rows must be non-empty and equally sized".to_string(),
        ));
    }
    if n <= d {
        return Err(Error::InsufficientData { needed: d + 1, got: n });
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::BoundsViolation {
            name: "lambda".to_string(),
            value: lambda,
            lower: 0.0,
            upper: f64::INFINITY,
        });
    }
    if rows.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinitePrediction(
            "ridge regression requires finite features and targets".to_string(),
        ));
    }

    let nf = n as f64;
    let mut col_means = vec![0.0; d];
    for row in rows {
        for (m, v) in col_means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in col_means.iter_mut() {
        *m /= nf;
    }
    let y_mean = targets.iter().sum::<f64>() / nf;

    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - col_means[j]);
    let rhs = centered.transpose() * DVector::from_fn(n, |i, _| targets[i] - y_mean);
    let gram = centered.transpose() * &centered;

    let solve = |lam: f64| -> Option<DVector<f64>> {
        let mut a = gram.clone();
        for j in 0..d {
            a[(j, j)] += lam;
        }
        Cholesky::new(a).map(|chol| chol.solve(&rhs))
    };

    let (weights, fallback_lambda) = match solve(lambda) {
        Some(w) => (w, None),
        None => {
            let w = solve(RIDGE_FALLBACK_LAMBDA).ok_or_else(|| {
                Error::NonFinitePrediction(
                    "ridge normal equations failed even with fallback regularization"
                        .to_string(),
                )
            })?;
            (w, Some(RIDGE_FALLBACK_LAMBDA))
        }
    };
    let intercept = y_mean
        - weights
            .iter()
            .zip(&col_means)
            .map(|(w, m)| w * m)
            .sum::<f64>();
    if !intercept.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinitePrediction(
            "ridge regression produced non-finite coefficients".to_string(),
        ));
    }
    Ok(RidgeSolution {
        weights: weights.iter().copied().collect(),
        intercept,
        fallback_lambda,
    })
}

/// Fits the linear baseline over the raw configuration columns.
///
/// Requires strictly more records than features. The feature set is fixed to
/// [`FEATURE_NAMES`]; use [`ridge_fit`] directly for arbitrary designs.
pub fn fit_linear(data: &Dataset, lambda: f64) -> Result<LinearModel> {
    if data.len() <= N_FEATURES {
        return Err(Error::InsufficientData {
            needed: N_FEATURES + 1,
            got: data.len(),
        });
    }
    let rows: Vec<Vec<f64>> = data
        .records
        .iter()
        .map(|r| baseline_features(r).to_vec())
        .collect();
    let solution = ridge_fit(&rows, &data.energies(), lambda)?;
    Ok(LinearModel {
        weights: solution.weights,
        intercept: solution.intercept,
        lambda,
        fallback_lambda: solution.fallback_lambda,
    })
}

/// Predicted energy of the linear baseline for one record.
pub fn predict_linear(model: &LinearModel, record: &ProfilingRecord) -> f64 {
    let features = baseline_features(record);
    model
        .weights
        .iter()
        .zip(features.iter())
        .map(|(w, x)| w * x)
        .sum::<f64>()
        + model.intercept
}

// ---------------------------------------------------------------------------
// Regression trees and ensembles
// ---------------------------------------------------------------------------

/// One node of a regression tree, stored in an arena ([`RegressionTree::nodes`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "kebab-case")]
pub enum TreeNode {
    /// Terminal node predicting a constant.
    Leaf { value: f64 },
    /// Axis-aligned split: `feature <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A regression tree over the baseline features; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    /// Walks the tree to a leaf for one feature vector.
    pub fn predict(&self, features: &[f64; N_FEATURES]) -> f64 {
        let mut index = 0;
        loop {
            match &self.nodes[index] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    index = if features[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

/// How an ensemble combines its trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EnsembleKind {
    /// Bagged: prediction is the arithmetic mean of the trees.
    Bagged,
    /// Boosted: prediction is `initial + learning_rate * sum(trees)`.
    Boosted { learning_rate: f64, initial: f64 },
}

/// A fitted tree ensemble (random forest or gradient boosting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    /// Flattened in JSON (key `mode`), so the artifact-level `kind` tag stays
    /// unambiguous.
    #[serde(flatten)]
    pub kind: EnsembleKind,
    pub trees: Vec<RegressionTree>,
}

/// Predicted energy of a tree ensemble for one record.
pub fn predict_ensemble(model: &TreeEnsemble, record: &ProfilingRecord) -> f64 {
    let features = baseline_features(record);
    match &model.kind {
        EnsembleKind::Bagged => {
            let total: f64 = model.trees.iter().map(|t| t.predict(&features)).sum();
            total / model.trees.len() as f64
        }
        EnsembleKind::Boosted {
            learning_rate,
            initial,
        } => {
            let total: f64 = model.trees.iter().map(|t| t.predict(&features)).sum();
            initial + learning_rate * total
        }
    }
}

/// Candidate split chosen for one node.
struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Recursive CART builder shared by the forest and boosting fitters.
struct TreeBuilder<'a> {
    x: &'a [[f64; N_FEATURES]],
    y: &'a [f64],
    max_depth: usize,
    /// Features examined per split; `N_FEATURES` disables subsetting.
    n_split_features: usize,
}

impl TreeBuilder<'_> {
    fn build(&self, indices: &[usize], rng: &mut Option<&mut ChaCha8Rng>) -> RegressionTree {
        let mut nodes = Vec::new();
        self.grow(&mut nodes, indices, 0, rng);
        RegressionTree { nodes }
    }

    /// Appends the subtree for `indices` and returns its root node index.
    fn grow(
        &self,
        nodes: &mut Vec<TreeNode>,
        indices: &[usize],
        depth: usize,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> usize {
        let mean = indices.iter().map(|&i| self.y[i]).sum::<f64>() / indices.len() as f64;
        let constant = indices
            .iter()
            .all(|&i| self.y[i].total_cmp(&self.y[indices[0]]).is_eq());
        let slot = nodes.len();
        nodes.push(TreeNode::Leaf { value: mean });
        if depth >= self.max_depth || indices.len() < 2 * MIN_LEAF || constant {
            return slot;
        }
        let Some(split) = self.best_split(indices, rng) else {
            return slot;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.grow(nodes, &left_idx, depth + 1, rng);
        let right = self.grow(nodes, &right_idx, depth + 1, rng);
        nodes[slot] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        slot
    }

    /// Finds the variance-reduction-optimal split over the candidate
    /// features, requiring `MIN_LEAF` records per side and strictly positive
    /// gain. Ties break toward the lowest feature index, then the lowest
    /// threshold, which the ascending scan order yields for free.
    fn best_split(
        &self,
        indices: &[usize],
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> Option<BestSplit> {
        let features: Vec<usize> = match rng {
            Some(rng) if self.n_split_features < N_FEATURES => {
                let mut picked =
                    rand::seq::index::sample(*rng, N_FEATURES, self.n_split_features).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..N_FEATURES).collect(),
        };

        let n = indices.len();
        let total_sum: f64 = indices.iter().map(|&i| self.y[i]).sum();
        let total_sq: f64 = indices.iter().map(|&i| self.y[i] * self.y[i]).sum();
        let parent_sse = total_sq - total_sum * total_sum / n as f64;

        let mut best: Option<BestSplit> = None;
        let mut column: Vec<(f64, f64)> = Vec::with_capacity(n);
        for feature in features {
            column.clear();
            column.extend(indices.iter().map(|&i| (self.x[i][feature], self.y[i])));
            column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            for (pos, &(value, target)) in column.iter().enumerate().take(n - MIN_LEAF) {
                left_sum += target;
                left_sq += target * target;
                let left_n = pos + 1;
                if left_n < MIN_LEAF || value.total_cmp(&column[pos + 1].0).is_eq() {
                    continue;
                }
                let right_n = n - left_n;
                let right_sum = total_sum - left_sum;
                let right_sq = total_sq - left_sq;
                let sse = (left_sq - left_sum * left_sum / left_n as f64)
                    + (right_sq - right_sum * right_sum / right_n as f64);
                let gain = parent_sse - sse;
                if gain <= 0.0 || best.as_ref().map_or(false, |b| gain <= b.gain) {
                    continue;
                }
                // Midpoint threshold, snapped down to the left value whenever
                // rounding would let the right neighbor leak across.
                let next = column[pos + 1].0;
                let mut threshold = value + (next - value) / 2.0;
                if !(threshold >= value && threshold < next) {
                    threshold = value;
                }
                best = Some(BestSplit {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
        best
    }
}

fn check_ensemble_data(data: &Dataset) -> Result<(Vec<[f64; N_FEATURES]>, Vec<f64>)> {
    if data.len() < 5 {
        return Err(Error::InsufficientData {
            needed: 5,
            got: data.len(),
        });
    }
    let x: Vec<[f64; N_FEATURES]> = data.records.iter().map(baseline_features).collect();
    Ok((x, data.energies()))
}

/// Fits a bagged random forest: `n_trees` trees, each on a bootstrap resample
/// with [`FOREST_SPLIT_FEATURES`] random candidate features per split.
///
/// Deterministic per seed: every tree draws from its own derived sub-seed, so
/// the result is independent of fitting order.
pub fn fit_forest(data: &Dataset, n_trees: usize, seed: u64) -> Result<TreeEnsemble> {
    if n_trees == 0 {
        return Err(Error::BoundsViolation {
            name: "n_trees".to_string(),
            value: 0.0,
            lower: 1.0,
            upper: f64::INFINITY,
        });
    }
    let (x, y) = check_ensemble_data(data)?;
    let builder = TreeBuilder {
        x: &x,
        y: &y,
        max_depth: FOREST_MAX_DEPTH,
        n_split_features: FOREST_SPLIT_FEATURES,
    };
    let n = x.len();
    let trees = (0..n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            builder.build(&indices, &mut Some(&mut rng))
        })
        .collect();
    Ok(TreeEnsemble {
        kind: EnsembleKind::Bagged,
        trees,
    })
}

/// Fits squared-loss gradient boosting: depth-[`BOOSTING_MAX_DEPTH`] trees on
/// residuals, shrunk by `learning_rate`, starting from the training mean.
///
/// The procedure uses every row and every feature per tree, so it consumes no
/// randomness; the result depends only on the data and hyperparameters.
pub fn fit_boosting(data: &Dataset, n_trees: usize, learning_rate: f64) -> Result<TreeEnsemble> {
    if !learning_rate.is_finite() || learning_rate < 0.0 {
        return Err(Error::BoundsViolation {
            name: "learning_rate".to_string(),
            value: learning_rate,
            lower: 0.0,
            upper: f64::INFINITY,
        });
    }
    let (x, y) = check_ensemble_data(data)?;
    let initial = y.iter().sum::<f64>() / y.len() as f64;
    let mut residuals: Vec<f64> = y.iter().map(|v| v - initial).collect();
    let builder_indices: Vec<usize> = (0..x.len()).collect();
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let builder = TreeBuilder {
            x: &x,
            y: &residuals,
            max_depth: BOOSTING_MAX_DEPTH,
            n_split_features: N_FEATURES,
        };
        let tree = builder.build(&builder_indices, &mut None);
        for (i, r) in residuals.iter_mut().enumerate() {
            *r -= learning_rate * tree.predict(&x[i]);
        }
        trees.push(tree);
    }
    Ok(TreeEnsemble {
        kind: EnsembleKind::Boosted {
            learning_rate,
            initial,
        },
        trees,
    })
}

// ---------------------------------------------------------------------------
// Latency-times-power proxy
// ---------------------------------------------------------------------------

/// Where the proxy's power estimate comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerMode {
    /// Per-(tp, pp) mean of the measured `avg_power_w`.
    PerConfigTable,
    /// One global mean across all measured `avg_power_w`.
    GlobalMean,
}

/// Mean measured power for one parallelism layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEntry {
    pub tp: u32,
    pub pp: u32,
    pub watts: f64,
}

/// The fitted power estimate: a per-layout table or a single scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum PowerLookup {
    /// Entries sorted by `(tp, pp)`.
    PerConfigTable { entries: Vec<PowerEntry> },
    GlobalMean { watts: f64 },
}

impl PowerLookup {
    /// Watts for a layout; errors when a table has no entry for it.
    pub fn watts(&self, tp: u32, pp: u32) -> Result<f64> {
        match self {
            PowerLookup::PerConfigTable { entries } => entries
                .binary_search_by(|e| (e.tp, e.pp).cmp(&(tp, pp)))
                .map(|i| entries[i].watts)
                .map_err(|_| Error::MissingPowerEntry { tp, pp }),
            PowerLookup::GlobalMean { watts } => Ok(*watts),
        }
    }
}

/// Latency-surrogate baseline: predicted energy is predicted latency times
/// estimated power, times a refined global scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyProxyModel {
    /// Two-phase ratio-family surrogate fitted to `latency_s`; the overhead
    /// parameters are pinned to zero.
    pub latency_params: EnergyParams,
    pub power: PowerLookup,
    /// Global factor minimizing training energy MAPE.
    pub scale: f64,
}

/// Knobs for [`fit_latency_proxy`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyOptions {
    pub power_mode: PowerMode,
    /// Options forwarded to the multi-start latency fit.
    pub fit: FitOptions,
}

impl Default for ProxyOptions {
    fn default() -> Self {
        ProxyOptions {
            power_mode: PowerMode::PerConfigTable,
            fit: FitOptions::default(),
        }
    }
}

/// Box constraints of the latency surrogate: the energy-model boxes with both
/// overhead parameters pinned to zero.
fn latency_bounds() -> optim::Bounds {
    let energy = EnergyParams::bounds();
    let mut lower = energy.lower.clone();
    let mut upper = energy.upper.clone();
    lower[10] = 0.0;
    lower[11] = 0.0;
    upper[10] = 0.0;
    upper[11] = 0.0;
    optim::Bounds::new(lower, upper).expect("pinned bounds are well-formed")
}

/// Fits the latency-times-power proxy.
///
/// Every record must carry `latency_s`. Power: in per-config mode every
/// record must carry `avg_power_w` and the table holds per-(tp, pp) means; in
/// global-mean mode the scalar is the mean over the records that carry it
/// (at least one required). After the latency fit, a single global scale is
/// set to the exact minimizer of training energy MAPE (a weighted median).
pub fn fit_latency_proxy(data: &Dataset, options: &ProxyOptions) -> Result<LatencyProxyModel> {
    if data.len() < model::N_PARAMS + 1 {
        return Err(Error::InsufficientData {
            needed: model::N_PARAMS + 1,
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

    let mut rows = Vec::with_capacity(data.len());
    for (i, record) in data.records.iter().enumerate() {
        let Some(latency) = record.latency_s else {
            return Err(Error::MissingField {
                row: i + 1,
                field: "latency_s".to_string(),
            });
        };
        rows.push(model::FitRow::new(record, latency));
    }
    let latency_fit = model::fit_rows(&rows, &latency_bounds(), &options.fit)?;

    let power = match options.power_mode {
        PowerMode::PerConfigTable => {
            let mut groups: BTreeMap<(u32, u32), (f64, usize)> = BTreeMap::new();
            for (i, record) in data.records.iter().enumerate() {
                let Some(watts) = record.avg_power_w else {
                    return Err(Error::MissingField {
                        row: i + 1,
                        field: "avg_power_w".to_string(),
                    });
                };
                let slot = groups.entry((record.tp, record.pp)).or_insert((0.0, 0));
                slot.0 += watts;
                slot.1 += 1;
            }
            PowerLookup::PerConfigTable {
                entries: groups
                    .into_iter()
                    .map(|((tp, pp), (sum, count))| PowerEntry {
                        tp,
                        pp,
                        watts: sum / count as f64,
                    })
                    .collect(),
            }
        }
        PowerMode::GlobalMean => {
            let measured: Vec<f64> = data.records.iter().filter_map(|r| r.avg_power_w).collect();
            if measured.is_empty() {
                return Err(Error::MissingField {
                    row: 1,
                    field: "avg_power_w".to_string(),
                });
            }
            PowerLookup::GlobalMean {
                watts: measured.iter().sum::<f64>() / measured.len() as f64,
            }
        }
    };

    let mut unscaled = LatencyProxyModel {
        latency_params: latency_fit.params,
        power,
        scale: 1.0,
    };
    unscaled.scale = refine_scale(&unscaled, data)?;
    Ok(unscaled)
}

/// The exact global scale minimizing training energy MAPE.
///
/// With unscaled predictions `u_i` and measured energies `e_i`, the MAPE of
/// `s * u_i` is `mean((u_i / e_i) * |s - e_i / u_i|)` — a weighted absolute
/// deviation whose minimizer is the weighted median of the ratios `e_i / u_i`
/// (lowest such ratio on ties, for determinism).
fn refine_scale(model: &LatencyProxyModel, data: &Dataset) -> Result<f64> {
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(data.len());
    for record in &data.records {
        let unscaled = predict_proxy(model, record)?;
        if unscaled <= 0.0 {
            return Err(Error::NonFinitePrediction(format!(
                "latency proxy produced non-positive unscaled energy {unscaled} during \
                 scale refinement"
            )));
        }
        points.push((record.energy_j / unscaled, unscaled / record.energy_j));
    }
    points.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let half = points.iter().map(|p| p.1).sum::<f64>() / 2.0;
    let mut cumulative = 0.0;
    for (ratio, weight) in &points {
        cumulative += weight;
        if cumulative >= half {
            return Ok(*ratio);
        }
    }
    // Unreachable short of float pathology: the cumulative sum ends at twice
    // `half`. Return the largest ratio rather than panicking.
    Ok(points.last().expect("dataset is non-empty").0)
}

/// Predicted energy of the proxy for one record: latency surrogate times
/// power estimate times the refined scale.
pub fn predict_proxy(model: &LatencyProxyModel, record: &ProfilingRecord) -> Result<f64> {
    let latency = model.latency_params.predict(record)?;
    let watts = model.power.watts(record.tp, record.pp)?;
    Ok(model.scale * latency * watts)
}

// ---------------------------------------------------------------------------
// Unified predictor and serialization
// ---------------------------------------------------------------------------

/// Schema tag for baseline artifacts.
pub const BASELINE_SCHEMA: &str = "energylens-baseline-v1";

/// Any fitted baseline, tagged by kind for dispatch and serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaselineModel {
    Linear(LinearModel),
    RandomForest(TreeEnsemble),
    GradientBoosting(TreeEnsemble),
    LatencyProxy(LatencyProxyModel),
}

impl BaselineModel {
    /// Predicted energy for one record, dispatched by kind.
    pub fn predict(&self, record: &ProfilingRecord) -> Result<f64> {
        match self {
            BaselineModel::Linear(m) => Ok(predict_linear(m, record)),
            BaselineModel::RandomForest(m) | BaselineModel::GradientBoosting(m) => {
                Ok(predict_ensemble(m, record))
            }
            BaselineModel::LatencyProxy(m) => predict_proxy(m, record),
        }
    }

    /// Short lowercase label matching the serialized kind tag.
    pub fn kind_name(&self) -> &'static str {
        match self {
            BaselineModel::Linear(_) => "linear",
            BaselineModel::RandomForest(_) => "random-forest",
            BaselineModel::GradientBoosting(_) => "gradient-boosting",
            BaselineModel::LatencyProxy(_) => "latency-proxy",
        }
    }

    /// Checks cross-field consistency (ensemble mode must match the kind tag,
    /// proxy parameters must sit inside their boxes).
    fn validate(&self) -> Result<()> {
        match self {
            BaselineModel::RandomForest(m) if m.kind != EnsembleKind::Bagged => {
                Err(Error::SchemaMismatch(
                    "kind `random-forest` requires a bagged ensemble".to_string(),
                ))
            }
            BaselineModel::GradientBoosting(m)
                if matches!(m.kind, EnsembleKind::Bagged) =>
            {
                Err(Error::SchemaMismatch(
                    "kind `gradient-boosting` requires a boosted ensemble".to_string(),
                ))
            }
            BaselineModel::LatencyProxy(m) => m.latency_params.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BaselineFile {
    schema: String,
    #[serde(flatten)]
    model: BaselineModel,
}

/// Writes a baseline as pretty-printed JSON with schema and kind tags.
pub fn save_baseline(model: &BaselineModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = BaselineFile {
        schema: BASELINE_SCHEMA.to_string(),
        model: model.clone(),
    };
    let body = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::SchemaMismatch(format!("baseline serialization failed: {e}")))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

/// Loads any baseline artifact, checking the schema tag and kind consistency.
pub fn load_baseline(path: impl AsRef<Path>) -> Result<BaselineModel> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: BaselineFile = serde_json::from_str(&body)
        .map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))?;
    if file.schema != BASELINE_SCHEMA {
        return Err(Error::SchemaMismatch(format!(
            "expected schema `{BASELINE_SCHEMA}`, found `{}`",
            file.schema
        )));
    }
    file.model.validate()?;
    Ok(file.model)
}
