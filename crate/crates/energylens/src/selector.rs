//! Configuration selection: enumerate the configuration space under
//! constraints, rank every point by predicted energy, and answer one-axis
//! what-if sweeps (including extrapolation beyond the fitted grid).
//!
//! Selection is energy-only argmin; latency is carried in datasets for
//! reporting but is not an objective here.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{ConfigPoint, ConfigSpace};
use crate::error::{Error, Result};
use crate::model::{eval_energy, EnergyParams};

/// The serving workload a selection is made for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    /// Prompt tokens per request batch.
    pub total_input_tokens: u32,
    /// Output-token budget. `None` sweeps the space's max-token axis;
    /// `Some(m)` pins every candidate to `m` (which need not be on the
    /// fitted grid).
    pub max_tokens: Option<u32>,
}

/// A pluggable memory/runnability test for a candidate point.
pub type FeasibilityFn = Arc<dyn Fn(&ConfigPoint) -> bool + Send + Sync>;

/// Deployment constraints applied while enumerating candidates.
#[derive(Clone, Default)]
pub struct Constraints {
    /// GPU budget: admit only points with `tp * pp <= max_gpus`.
    pub max_gpus: Option<u32>,
    /// Memory-feasibility predicate; `None` admits every point.
    pub feasibility: Option<FeasibilityFn>,
}

impl Constraints {
    /// Whether a candidate passes both the GPU budget and the feasibility
    /// predicate.
    pub fn admits(&self, point: &ConfigPoint) -> bool {
        if let Some(budget) = self.max_gpus {
            if point.tp * point.pp > budget {
                return false;
            }
        }
        match &self.feasibility {
            Some(f) => f(point),
            None => true,
        }
    }
}

impl fmt::Debug for Constraints {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constraints")
            .field("max_gpus", &self.max_gpus)
            .field(
                "feasibility",
                &self.feasibility.as_ref().map(|_| "<predicate>"),
            )
            .finish()
    }
}

/// Everything needed to rank a configuration space.
#[derive(Debug, Clone)]
pub struct SelectionRequest {
    pub params: EnergyParams,
    pub space: ConfigSpace,
    pub workload: Workload,
    pub constraints: Constraints,
}

/// One ranked candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    #[serde(flatten)]
    pub point: ConfigPoint,
    /// Predicted energy for the workload at this point.
    pub energy_j: f64,
    /// True when this entry's predicted energy exactly equals an adjacent
    /// entry's — the order between tied entries is the lexicographic
    /// tie-break, not a model preference.
    pub tied: bool,
}

/// The full ranking for one request: non-decreasing predicted energy, ties
/// broken by lexicographic `(tp, pp, batch_size, max_tokens)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedConfigs {
    pub workload: Workload,
    pub entries: Vec<RankedEntry>,
}

impl RankedConfigs {
    /// The energy-optimal candidate (head of the ranking).
    pub fn best(&self) -> &RankedEntry {
        &self.entries[0]
    }
}

/// Enumerates the Cartesian product of the space's axes minus
/// constraint-violating points, in stable `tp -> pp -> batch -> max_tokens`
/// order.
pub fn enumerate(space: &ConfigSpace, constraints: &Constraints) -> Result<Vec<ConfigPoint>> {
    space.validate()?;
    let mut points = Vec::new();
    for &tp in &space.tp_values {
        for &pp in &space.pp_values {
            for &batch_size in &space.batch_values {
                for &max_tokens in &space.max_token_values {
                    let point = ConfigPoint {
                        tp,
                        pp,
                        batch_size,
                        max_tokens,
                    };
                    if constraints.admits(&point) {
                        points.push(point);
                    }
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::InvalidSpace(
            "no configuration satisfies the constraints (empty space after filtering)"
                .to_string(),
        ));
    }
    Ok(points)
}

/// Ranks every admitted configuration by predicted energy.
///
/// The head of the returned list is the energy argmin. Exact-energy ties are
/// flagged and ordered by the lexicographic tie-break. A non-finite
/// prediction aborts with an error naming the offending point.
pub fn select(request: &SelectionRequest) -> Result<RankedConfigs> {
    request.params.validate()?;
    let mut space = request.space.clone();
    if let Some(max_tokens) = request.workload.max_tokens {
        space.max_token_values = vec![max_tokens];
    }
    let points = enumerate(&space, &request.constraints)?;

    let mut entries = Vec::with_capacity(points.len());
    for point in points {
        let energy_j = eval_energy(
            &request.params,
            point.tp,
            point.pp,
            point.batch_size,
            point.max_tokens,
            request.workload.total_input_tokens,
        )?;
        entries.push(RankedEntry {
            point,
            energy_j,
            tied: false,
        });
    }
    entries.sort_by(|a, b| a.energy_j.total_cmp(&b.energy_j).then(a.point.cmp(&b.point)));
    for i in 0..entries.len() {
        let tied_prev = i > 0 && entries[i - 1].energy_j == entries[i].energy_j;
        let tied_next = i + 1 < entries.len() && entries[i + 1].energy_j == entries[i].energy_j;
        entries[i].tied = tied_prev || tied_next;
    }
    Ok(RankedConfigs {
        workload: request.workload,
        entries,
    })
}

// ---------------------------------------------------------------------------
// What-if sweeps
// ---------------------------------------------------------------------------

/// The configuration axis a what-if sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Tp,
    Pp,
    BatchSize,
    MaxTokens,
}

impl SweepAxis {
    /// Flag/column name of the axis.
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Tp => "tp",
            SweepAxis::Pp => "pp",
            SweepAxis::BatchSize => "batch_size",
            SweepAxis::MaxTokens => "max_tokens",
        }
    }

    fn apply(self, base: &ConfigPoint, value: u32) -> ConfigPoint {
        let mut point = *base;
        match self {
            SweepAxis::Tp => point.tp = value,
            SweepAxis::Pp => point.pp = value,
            SweepAxis::BatchSize => point.batch_size = value,
            SweepAxis::MaxTokens => point.max_tokens = value,
        }
        point
    }

    fn grid_values(self, space: &ConfigSpace) -> &[u32] {
        match self {
            SweepAxis::Tp => &space.tp_values,
            SweepAxis::Pp => &space.pp_values,
            SweepAxis::BatchSize => &space.batch_values,
            SweepAxis::MaxTokens => &space.max_token_values,
        }
    }
}

/// One row of a what-if sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRow {
    /// The swept axis value.
    pub value: u32,
    /// The full configuration evaluated.
    pub point: ConfigPoint,
    pub energy_j: f64,
    /// True when `value` is not one of the fitted grid's values for the
    /// swept axis, i.e. the model is predicting beyond its training support.
    pub extrapolated: bool,
}

/// Sweeps one axis of `base` over `values`, holding the other axes (and the
/// prompt size) fixed.
///
/// Values outside the fitted grid are allowed and flagged
/// [`WhatIfRow::extrapolated`].
pub fn whatif(
    params: &EnergyParams,
    base: &ConfigPoint,
    total_input_tokens: u32,
    axis: SweepAxis,
    values: &[u32],
    fitted_grid: &ConfigSpace,
) -> Result<Vec<WhatIfRow>> {
    params.validate()?;
    if values.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if values.contains(&0) {
        return Err(Error::InvalidSpace(format!(
            "what-if sweep over `{}` contains 0; all values must be >= 1",
            axis.name()
        )));
    }
    let grid = axis.grid_values(fitted_grid);
    values
        .iter()
        .map(|&value| {
            let point = axis.apply(base, value);
            let energy_j = eval_energy(
                params,
                point.tp,
                point.pp,
                point.batch_size,
                point.max_tokens,
                total_input_tokens,
            )?;
            Ok(WhatIfRow {
                value,
                point,
                energy_j,
                extrapolated: !grid.contains(&value),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Ranking artifacts
// ---------------------------------------------------------------------------

/// Schema tag for ranking files.
pub const RANKING_SCHEMA: &str = "energylens-ranking-v1";

#[derive(Serialize, Deserialize)]
struct RankingFile {
    schema: String,
    #[serde(flatten)]
    ranking: RankedConfigs,
}

/// Writes a ranking as pretty-printed JSON with a schema tag.
pub fn save_ranking(ranking: &RankedConfigs, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = RankingFile {
        schema: RANKING_SCHEMA.to_string(),
        ranking: ranking.clone(),
    };
    let body = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::SchemaMismatch(format!("ranking serialization failed: {e}")))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

/// Loads a ranking, checking the schema tag.
pub fn load_ranking(path: impl AsRef<Path>) -> Result<RankedConfigs> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: RankingFile = serde_json::from_str(&body)
        .map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))?;
    if file.schema != RANKING_SCHEMA {
        return Err(Error::SchemaMismatch(format!(
            "expected schema `{RANKING_SCHEMA}`, found `{}`",
            file.schema
        )));
    }
    Ok(file.ranking)
}

/// Writes a ranking as CSV with one `rank_i` row per candidate.
pub fn write_ranking_csv(ranking: &RankedConfigs, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut body =
        String::from("rank,tp,pp,batch_size,max_tokens,total_input_tokens,predicted_energy_j,tied\n");
    for (i, entry) in ranking.entries.iter().enumerate() {
        body.push_str(&format!(
            "rank_{},{},{},{},{},{},{},{}\n",
            i + 1,
            entry.point.tp,
            entry.point.pp,
            entry.point.batch_size,
            entry.point.max_tokens,
            ranking.workload.total_input_tokens,
            entry.energy_j,
            entry.tied,
        ));
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}
