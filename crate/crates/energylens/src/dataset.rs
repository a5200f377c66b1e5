//! Profiling records, datasets, CSV I/O, samplers, and a synthetic generator.
//!
//! A [`ProfilingRecord`] is one measured (or synthesized) inference run:
//! the serving context (model, hardware, modality), the configuration
//! (tensor-parallel and pipeline-parallel degree, batch size, token budgets)
//! and the measured energy in joules, optionally with latency, average power,
//! and a repeat index. A [`Dataset`] is a validated collection of records:
//! construction rejects empty inputs, invalid rows, and duplicate keys, and
//! records soft consistency flags for rows whose energy disagrees with
//! `latency x power` by more than a configurable factor.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eval_energy, EnergyParams};

/// Columns every CSV file must provide, in canonical order.
pub const MANDATORY_COLUMNS: [&str; 9] = [
    "model_id",
    "hardware_id",
    "modality",
    "tp",
    "pp",
    "batch_size",
    "max_tokens",
    "total_input_tokens",
    "energy_j",
];

/// Optional columns recognized by the loader, in canonical order.
pub const OPTIONAL_COLUMNS: [&str; 3] = ["latency_s", "avg_power_w", "repeat_index"];

/// Factor beyond which `energy_j` vs `latency_s * avg_power_w` is flagged.
pub const DEFAULT_CONSISTENCY_FACTOR: f64 = 2.0;

/// One profiled inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingRecord {
    /// Served model identifier (free-form label).
    pub model_id: String,
    /// Hardware platform identifier (free-form label).
    pub hardware_id: String,
    /// Workload modality label (for example `text` or `vision`).
    pub modality: String,
    /// Tensor-parallel degree (>= 1).
    pub tp: u32,
    /// Pipeline-parallel degree (>= 1).
    pub pp: u32,
    /// Maximum batch size the server was configured with (>= 1).
    pub batch_size: u32,
    /// Maximum output tokens per request (>= 1).
    pub max_tokens: u32,
    /// Total input tokens across the workload (>= 1).
    pub total_input_tokens: u32,
    /// Measured energy in joules (> 0, finite).
    pub energy_j: f64,
    /// Wall-clock latency in seconds, when measured (> 0, finite).
    pub latency_s: Option<f64>,
    /// Average power draw in watts, when measured (> 0, finite).
    pub avg_power_w: Option<f64>,
    /// Repeat index distinguishing repeated measurements of one setup.
    pub repeat_index: Option<u32>,
}

impl ProfilingRecord {
    /// Checks all domain invariants, returning a human-readable reason on failure.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, value) in [
            ("tp", self.tp),
            ("pp", self.pp),
            ("batch_size", self.batch_size),
            ("max_tokens", self.max_tokens),
            ("total_input_tokens", self.total_input_tokens),
        ] {
            if value == 0 {
                return Err(format!("`{name}` must be >= 1, got 0"));
            }
        }
        if !self.energy_j.is_finite() || self.energy_j <= 0.0 {
            return Err(format!(
                "`energy_j` must be finite and > 0, got {}",
                self.energy_j
            ));
        }
        for (name, value) in [("latency_s", self.latency_s), ("avg_power_w", self.avg_power_w)] {
            if let Some(v) = value {
                if !v.is_finite() || v <= 0.0 {
                    return Err(format!("`{name}` must be finite and > 0, got {v}"));
                }
            }
        }
        Ok(())
    }

    /// The full identifying key; two records sharing it are duplicates.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}|tp={}|pp={}|batch={}|max_tokens={}|input={}|repeat={}",
            self.model_id,
            self.hardware_id,
            self.modality,
            self.tp,
            self.pp,
            self.batch_size,
            self.max_tokens,
            self.total_input_tokens,
            self.repeat_index.map_or(String::from("-"), |r| r.to_string()),
        )
    }

    /// The serving context this record was measured under.
    pub fn context(&self) -> (String, String, String) {
        (
            self.model_id.clone(),
            self.hardware_id.clone(),
            self.modality.clone(),
        )
    }

    /// The configuration axes of this record as a [`ConfigPoint`].
    pub fn config(&self) -> ConfigPoint {
        ConfigPoint {
            tp: self.tp,
            pp: self.pp,
            batch_size: self.batch_size,
            max_tokens: self.max_tokens,
        }
    }

    /// `energy_j / (latency_s * avg_power_w)` when both optionals are present.
    ///
    /// A perfectly consistent measurement yields 1.0.
    pub fn consistency_ratio(&self) -> Option<f64> {
        match (self.latency_s, self.avg_power_w) {
            (Some(lat), Some(pow)) => Some(self.energy_j / (lat * pow)),
            _ => None,
        }
    }
}

/// A soft warning that one record's energy disagrees with latency x power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyFlag {
    /// Zero-based index into [`Dataset::records`].
    pub record_index: usize,
    /// `energy_j / (latency_s * avg_power_w)` for the flagged record.
    pub ratio: f64,
}

/// A validated, immutable collection of profiling records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Records in load (or generation) order.
    pub records: Vec<ProfilingRecord>,
    /// Provenance label, e.g. a file path or `synthetic(seed=7)`.
    pub source: String,
    /// Records whose energy disagrees with `latency x power`; never fatal.
    pub consistency_flags: Vec<ConsistencyFlag>,
}

impl Dataset {
    /// Builds a dataset with the default consistency factor.
    ///
    /// Fails on empty input, on any record violating
    /// [`ProfilingRecord::validate`], and on duplicate full keys. Consistency
    /// disagreements are recorded as flags, not errors.
    pub fn new(records: Vec<ProfilingRecord>, source: impl Into<String>) -> Result<Self> {
        Self::with_consistency_factor(records, source, DEFAULT_CONSISTENCY_FACTOR)
    }

    /// Like [`Dataset::new`] but with a custom consistency factor (> 1).
    pub fn with_consistency_factor(
        records: Vec<ProfilingRecord>,
        source: impl Into<String>,
        factor: f64,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut seen: std::collections::BTreeMap<String, usize> = std::collections::BTreeMap::new();
        for (i, record) in records.iter().enumerate() {
            record
                .validate()
                .map_err(|reason| Error::InvalidRecord { row: i + 1, reason })?;
            let key = record.key();
            if let Some(&first) = seen.get(&key) {
                return Err(Error::DuplicateKey {
                    first_row: first + 1,
                    second_row: i + 1,
                    key,
                });
            }
            seen.insert(key, i);
        }
        let mut consistency_flags = Vec::new();
        for (i, record) in records.iter().enumerate() {
            if let Some(ratio) = record.consistency_ratio() {
                if ratio > factor || ratio < 1.0 / factor {
                    consistency_flags.push(ConsistencyFlag {
                        record_index: i,
                        ratio,
                    });
                }
            }
        }
        Ok(Dataset {
            records,
            source: source.into(),
            consistency_flags,
        })
    }

    /// Number of records.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// True when the dataset holds no records (never, post-construction).
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct (model, hardware, modality) contexts present.
    pub fn contexts(&self) -> BTreeSet<(String, String, String)> {
        self.records.iter().map(|r| r.context()).collect()
    }

    /// Measured energies, in record order.
    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy_j).collect()
    }
}

/// One point in the configuration space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConfigPoint {
    pub tp: u32,
    pub pp: u32,
    pub batch_size: u32,
    pub max_tokens: u32,
}

/// The candidate values along each configuration axis.
///
/// Every axis must be non-empty and strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub tp_values: Vec<u32>,
    pub pp_values: Vec<u32>,
    pub batch_values: Vec<u32>,
    pub max_token_values: Vec<u32>,
}

impl Default for ConfigSpace {
    /// The default serving grid: tensor/pipeline degrees up to 4, batch sizes
    /// up to 64, and output-token budgets from 64 to 512.
    fn default() -> Self {
        ConfigSpace {
            tp_values: vec![1, 2, 4],
            pp_values: vec![1, 2, 4],
            batch_values: vec![1, 2, 4, 8, 16, 32, 64],
            max_token_values: vec![64, 128, 256, 512],
        }
    }
}

impl ConfigSpace {
    /// Validates that every axis is non-empty, positive, and strictly increasing.
    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("tp_values", &self.tp_values),
            ("pp_values", &self.pp_values),
            ("batch_values", &self.batch_values),
            ("max_token_values", &self.max_token_values),
        ] {
            if axis.is_empty() {
                return Err(Error::InvalidSpace(format!("axis `{name}` is empty")));
            }
            if axis[0] == 0 {
                return Err(Error::InvalidSpace(format!(
                    "axis `{name}` contains 0; all values must be >= 1"
                )));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidSpace(format!(
                    "axis `{name}` must be strictly increasing, got {axis:?}"
                )));
            }
        }
        Ok(())
    }

    /// Total number of grid points.
    pub fn grid_size(&self) -> usize {
        self.tp_values.len()
            * self.pp_values.len()
            * self.batch_values.len()
            * self.max_token_values.len()
    }
}

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

fn parse_cell<T: std::str::FromStr>(
    cell: &str,
    row: usize,
    column: &str,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    cell.trim().parse::<T>().map_err(|e| Error::ParseFailure {
        row,
        column: column.to_string(),
        message: format!("cannot parse `{cell}`: {e}"),
    })
}

fn parse_optional_cell<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: Option<usize>,
    row: usize,
    column: &str,
) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match index.and_then(|i| record.get(i)) {
        None => Ok(None),
        Some(cell) if cell.trim().is_empty() => Ok(None),
        Some(cell) => parse_cell(cell, row, column).map(Some),
    }
}

/// Loads a profiling CSV, validating schema and every row.
///
/// The header must contain all of [`MANDATORY_COLUMNS`] (any order; extra
/// columns are ignored). Parse failures report the 1-based data row and the
/// column name. The returned dataset carries consistency flags for rows whose
/// energy disagrees with `latency_s * avg_power_w` by more than the default
/// factor of 2.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                let io_err = match e.into_kind() {
                    csv::ErrorKind::Io(io) => io,
                    _ => unreachable!("kind checked above"),
                };
                Error::io(path, io_err)
            }
            _ => Error::ParseFailure {
                row: 0,
                column: String::from("<header>"),
                message: e.to_string(),
            },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::ParseFailure {
            row: 0,
            column: String::from("<header>"),
            message: e.to_string(),
        })?
        .clone();

    let index_of = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<String> = MANDATORY_COLUMNS
        .iter()
        .filter(|c| index_of(c).is_none())
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing));
    }
    let col = |name: &str| index_of(name).expect("mandatory column checked above");
    let idx_model = col("model_id");
    let idx_hw = col("hardware_id");
    let idx_mod = col("modality");
    let idx_tp = col("tp");
    let idx_pp = col("pp");
    let idx_batch = col("batch_size");
    let idx_max_tokens = col("max_tokens");
    let idx_input = col("total_input_tokens");
    let idx_energy = col("energy_j");
    let idx_latency = index_of("latency_s");
    let idx_power = index_of("avg_power_w");
    let idx_repeat = index_of("repeat_index");

    let required = |record: &csv::StringRecord, index: usize, row: usize, column: &str| {
        record
            .get(index)
            .map(str::to_string)
            .ok_or_else(|| Error::ParseFailure {
                row,
                column: column.to_string(),
                message: String::from("cell missing"),
            })
    };

    let mut records = Vec::new();
    for (i, row_result) in reader.records().enumerate() {
        let row = i + 1;
        let raw = row_result.map_err(|e| Error::ParseFailure {
            row,
            column: String::from("<row>"),
            message: e.to_string(),
        })?;
        let get_str = |idx: usize, column: &str| required(&raw, idx, row, column);
        let record = ProfilingRecord {
            model_id: get_str(idx_model, "model_id")?,
            hardware_id: get_str(idx_hw, "hardware_id")?,
            modality: get_str(idx_mod, "modality")?,
            tp: parse_cell(&get_str(idx_tp, "tp")?, row, "tp")?,
            pp: parse_cell(&get_str(idx_pp, "pp")?, row, "pp")?,
            batch_size: parse_cell(&get_str(idx_batch, "batch_size")?, row, "batch_size")?,
            max_tokens: parse_cell(&get_str(idx_max_tokens, "max_tokens")?, row, "max_tokens")?,
            total_input_tokens: parse_cell(
                &get_str(idx_input, "total_input_tokens")?,
                row,
                "total_input_tokens",
            )?,
            energy_j: parse_cell(&get_str(idx_energy, "energy_j")?, row, "energy_j")?,
            latency_s: parse_optional_cell(&raw, idx_latency, row, "latency_s")?,
            avg_power_w: parse_optional_cell(&raw, idx_power, row, "avg_power_w")?,
            repeat_index: parse_optional_cell(&raw, idx_repeat, row, "repeat_index")?,
        };
        records.push(record);
    }

    Dataset::new(records, path.display().to_string())
}

/// Writes a dataset as CSV with the canonical column order.
///
/// Floats use Rust's shortest-round-trip formatting, so a file produced by
/// this writer reloads to bit-identical values and re-writes byte-identically.
/// Optional columns are always present in the header; absent values are
/// written as empty cells.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let header: Vec<&str> = MANDATORY_COLUMNS
        .iter()
        .chain(OPTIONAL_COLUMNS.iter())
        .copied()
        .collect();
    let _ = writeln!(out, "{}", header.join(","));
    for r in &data.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.model_id,
            r.hardware_id,
            r.modality,
            r.tp,
            r.pp,
            r.batch_size,
            r.max_tokens,
            r.total_input_tokens,
            r.energy_j,
            r.latency_s.map_or(String::new(), |v| v.to_string()),
            r.avg_power_w.map_or(String::new(), |v| v.to_string()),
            r.repeat_index.map_or(String::new(), |v| v.to_string()),
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Provenance sidecar written next to generated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    /// How the dataset was produced (e.g. `synthetic(seed=7)`).
    pub source: String,
    /// Seed that reproduces the dataset exactly.
    pub seed: u64,
    /// Version of the generator that produced the file.
    pub generator_version: String,
}

/// The sidecar path for a dataset path: `<path>.sidecar.json`.
pub fn sidecar_path(dataset_path: impl AsRef<Path>) -> std::path::PathBuf {
    let p = dataset_path.as_ref();
    let mut name = p.file_name().map_or(String::new(), |n| {
        n.to_string_lossy().into_owned()
    });
    name.push_str(".sidecar.json");
    p.with_file_name(name)
}

/// Writes the provenance sidecar for a generated dataset.
pub fn write_sidecar(dataset_path: impl AsRef<Path>, sidecar: &Sidecar) -> Result<()> {
    let path = sidecar_path(&dataset_path);
    let body = serde_json::to_string_pretty(sidecar)
        .map_err(|e| Error::SchemaMismatch(format!("sidecar serialization failed: {e}")))?;
    std::fs::write(&path, body + "\n").map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Samplers and splits
// ---------------------------------------------------------------------------

/// Draws `n` records uniformly without replacement.
///
/// Deterministic for a fixed seed. Records keep their original relative order.
pub fn sample_random(data: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if n > data.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: data.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, data.len(), n).into_vec();
    chosen.sort_unstable();
    let records = chosen.iter().map(|&i| data.records[i].clone()).collect();
    Dataset::new(
        records,
        format!("{}#random(n={n},seed={seed})", data.source),
    )
}

/// The complement of [`sample_random`] with identical arguments: every record
/// *not* chosen by the sample, in original order.
pub fn sample_random_complement(data: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n >= data.len() {
        return Err(Error::SampleTooLarge {
            requested: n + 1,
            available: data.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: BTreeSet<usize> =
        rand::seq::index::sample(&mut rng, data.len(), n).into_iter().collect();
    let records = data
        .records
        .iter()
        .enumerate()
        .filter(|(i, _)| !chosen.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    Dataset::new(
        records,
        format!("{}#complement(n={n},seed={seed})", data.source),
    )
}

/// One column of stratified unit-interval samples: exactly one value per
/// stratum `[j/n, (j+1)/n)`, in shuffled stratum order.
fn lhs_unit_column(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut strata: Vec<usize> = (0..n).collect();
    strata.shuffle(rng);
    strata
        .into_iter()
        .map(|s| (s as f64 + rng.random::<f64>()) / n as f64)
        .collect()
}

/// Snaps a unit-interval coordinate onto one of `k` grid values.
///
/// The unit interval is divided into `k` equal cells whose centers represent
/// the grid values; the nearest center wins and exact midpoints resolve to the
/// lower value.
fn snap_to_axis(u: f64, axis: &[u32]) -> u32 {
    let k = axis.len();
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for (i, _) in axis.iter().enumerate() {
        let center = (i as f64 + 0.5) / k as f64;
        let dist = (u - center).abs();
        if dist < best_dist {
            best_dist = dist;
            best = i;
        }
    }
    axis[best]
}

/// Latin hypercube sample of `n` configuration points from a discrete space.
///
/// Each axis independently receives one sample per stratum of the unit
/// interval (shuffled stratum order, uniform jitter within the stratum), which
/// is then snapped to the nearest grid value with ties resolved to the lower
/// value. Because the grid is discrete, distinct strata can snap to the same
/// value, so the returned points may contain repeats; when `n` is a multiple
/// of an axis's cardinality, every value on that axis appears exactly
/// `n / k` times.
pub fn sample_lhs(space: &ConfigSpace, n: usize, seed: u64) -> Result<Vec<ConfigPoint>> {
    space.validate()?;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axes: [&[u32]; 4] = [
        &space.tp_values,
        &space.pp_values,
        &space.batch_values,
        &space.max_token_values,
    ];
    let mut columns: Vec<Vec<u32>> = Vec::with_capacity(4);
    for axis in axes {
        let units = lhs_unit_column(&mut rng, n);
        columns.push(units.into_iter().map(|u| snap_to_axis(u, axis)).collect());
    }
    Ok((0..n)
        .map(|j| ConfigPoint {
            tp: columns[0][j],
            pp: columns[1][j],
            batch_size: columns[2][j],
            max_tokens: columns[3][j],
        })
        .collect())
}

/// Selects the records of `data` matching a list of configuration points.
///
/// For each point, takes the first record (in dataset order) whose
/// configuration matches, optionally also requiring `total_input_tokens`
/// to equal `fixed_input_tokens`. Matches are deduplicated, so the result can
/// be smaller than `points.len()` when points repeat or collide on the same
/// record. Errors if any point has no matching record.
pub fn match_config_points(
    data: &Dataset,
    points: &[ConfigPoint],
    fixed_input_tokens: Option<u32>,
) -> Result<Dataset> {
    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    for point in points {
        let found = data.records.iter().position(|r| {
            r.config() == *point
                && fixed_input_tokens.map_or(true, |t| r.total_input_tokens == t)
        });
        match found {
            Some(i) => {
                chosen.insert(i);
            }
            None => {
                return Err(Error::NoScenarios(format!(
                    "no record matches sampled configuration tp={} pp={} batch_size={} max_tokens={}{}",
                    point.tp,
                    point.pp,
                    point.batch_size,
                    point.max_tokens,
                    fixed_input_tokens
                        .map_or(String::new(), |t| format!(" with total_input_tokens={t}")),
                )))
            }
        }
    }
    let records = chosen.iter().map(|&i| data.records[i].clone()).collect();
    Dataset::new(records, format!("{}#lhs-matched", data.source))
}

/// Splits a dataset into disjoint train/test parts.
///
/// `train_fraction` must lie strictly in (0, 1) and the dataset must hold at
/// least two records. The train side receives
/// `clamp(floor(train_fraction * n), 1, n - 1)` records so both sides are
/// always non-empty. Assignment is a seeded shuffle; each side keeps original
/// record order.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::DegenerateSplit(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::DegenerateSplit(format!(
            "need at least 2 records to split, got {n}"
        )));
    }
    let train_size = ((train_fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut train_idx: Vec<usize> = indices[..train_size].to_vec();
    let mut test_idx: Vec<usize> = indices[train_size..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |idx: &[usize]| -> Vec<ProfilingRecord> {
        idx.iter().map(|&i| data.records[i].clone()).collect()
    };
    let train = Dataset::new(
        pick(&train_idx),
        format!("{}#train(f={train_fraction},seed={seed})", data.source),
    )?;
    let test = Dataset::new(
        pick(&test_idx),
        format!("{}#test(f={train_fraction},seed={seed})", data.source),
    )?;
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

/// Multiplicative measurement-noise model for the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Energies are exact.
    None,
    /// Energies are multiplied by `exp(sigma * z)`, `z ~ N(0, 1)`.
    LogNormal { sigma: f64 },
}

/// Ground truth driving the synthetic generator: the energy surface to sample
/// from, the noise applied to it, and the seed for that noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub params: EnergyParams,
    pub noise: NoiseModel,
    pub seed: u64,
}

/// Average power surface used to derive synthetic latency/power columns:
/// `watts(tp, pp) = base_watts * (tp * pp) ^ exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub base_watts: f64,
    pub exponent: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            base_watts: 250.0,
            exponent: 0.8,
        }
    }
}

impl PowerModel {
    /// Average power draw for a (tp, pp) configuration.
    pub fn watts(&self, tp: u32, pp: u32) -> f64 {
        self.base_watts * f64::from(tp * pp).powf(self.exponent)
    }
}

/// Context labels and power surface for the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOptions {
    pub model_id: String,
    pub hardware_id: String,
    pub modality: String,
    pub power: PowerModel,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            model_id: String::from("synthetic-llm-7b"),
            hardware_id: String::from("synthetic-gpu"),
            modality: String::from("text"),
            power: PowerModel::default(),
        }
    }
}

/// Generates the full Cartesian grid of synthetic measurements with default
/// context labels and power surface. See [`generate_synthetic_with`].
pub fn generate_synthetic(
    space: &ConfigSpace,
    input_token_values: &[u32],
    truth: &GroundTruthSpec,
) -> Result<Dataset> {
    generate_synthetic_with(space, input_token_values, truth, &SyntheticOptions::default())
}

/// Generates one record per grid point of `space x input_token_values`.
///
/// Noiseless energy comes from evaluating `truth.params`; the stored
/// `energy_j` applies the noise model on top. `latency_s` and `avg_power_w`
/// are derived from the *noiseless* energy and the power surface
/// (`latency = energy / watts`), so `latency x power` always reproduces the
/// noiseless energy and consistency flags fire only when noise exceeds the
/// flagging factor. Iteration order is tp, then pp, then batch size, then max
/// tokens, then input tokens (innermost), and is part of the output contract:
/// a fixed seed yields a byte-identical dataset.
pub fn generate_synthetic_with(
    space: &ConfigSpace,
    input_token_values: &[u32],
    truth: &GroundTruthSpec,
    options: &SyntheticOptions,
) -> Result<Dataset> {
    space.validate()?;
    if input_token_values.is_empty() {
        return Err(Error::InvalidSpace(String::from(
            "input_token_values must be non-empty",
        )));
    }
    if input_token_values.iter().any(|&v| v == 0) {
        return Err(Error::InvalidSpace(String::from(
            "input_token_values must all be >= 1",
        )));
    }
    if let NoiseModel::LogNormal { sigma } = truth.noise {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidSpace(format!(
                "noise sigma must be finite and >= 0, got {sigma}"
            )));
        }
    }
    truth.params.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
    let mut records = Vec::with_capacity(space.grid_size() * input_token_values.len());
    for &tp in &space.tp_values {
        for &pp in &space.pp_values {
            for &batch_size in &space.batch_values {
                for &max_tokens in &space.max_token_values {
                    for &total_input_tokens in input_token_values {
                        let exact = eval_energy(
                            &truth.params,
                            tp,
                            pp,
                            batch_size,
                            max_tokens,
                            total_input_tokens,
                        )?;
                        let noise_factor = match truth.noise {
                            NoiseModel::None => 1.0,
                            NoiseModel::LogNormal { sigma } => {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                (sigma * z).exp()
                            }
                        };
                        let watts = options.power.watts(tp, pp);
                        records.push(ProfilingRecord {
                            model_id: options.model_id.clone(),
                            hardware_id: options.hardware_id.clone(),
                            modality: options.modality.clone(),
                            tp,
                            pp,
                            batch_size,
                            max_tokens,
                            total_input_tokens,
                            energy_j: exact * noise_factor,
                            latency_s: Some(exact / watts),
                            avg_power_w: Some(watts),
                            repeat_index: None,
                        });
                    }
                }
            }
        }
    }
    Dataset::new(records, format!("synthetic(seed={})", truth.seed))
}
