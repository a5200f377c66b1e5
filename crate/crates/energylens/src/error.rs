//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants carry enough context
//! (row numbers, column names, offending values) that a CLI can print an
//! actionable message without re-deriving state.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All error conditions surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Filesystem-level failure, annotated with the path involved.
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A CSV header is missing one or more mandatory columns.
    #[error("missing mandatory column(s): {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    /// A CSV cell failed to parse. Rows are 1-based data rows (header excluded).
    #[error("row {row}, column `{column}`: {message}")]
    ParseFailure {
        row: usize,
        column: String,
        message: String,
    },

    /// A record violates a domain invariant (non-positive axis value,
    /// non-finite or non-positive energy, and so on).
    #[error("row {row}: {reason}")]
    InvalidRecord { row: usize, reason: String },

    /// Two records share the full identifying key, which the dataset forbids.
    #[error("duplicate record key at rows {first_row} and {second_row}: {key}")]
    DuplicateKey {
        first_row: usize,
        second_row: usize,
        key: String,
    },

    /// An operation that needs at least one record received none.
    #[error("dataset is empty")]
    EmptyDataset,

    /// A sampler was asked for more records than the dataset holds.
    #[error("requested sample of {requested} records but only {available} available")]
    SampleTooLarge { requested: usize, available: usize },

    /// A train/test split cannot produce two non-empty sides.
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    /// A fitting routine received fewer observations than it has parameters
    /// (or than its documented minimum).
    #[error("insufficient data: need at least {needed} records, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// A single-context operation received records from multiple
    /// (model, hardware, modality) contexts.
    #[error("records span multiple contexts: {0}")]
    MixedContext(String),

    /// Records lack an optional column that the requested operation needs.
    #[error("record at row {row} is missing required field `{field}` for this operation")]
    MissingField { row: usize, field: String },

    /// A model produced a non-finite or otherwise unusable prediction.
    #[error("non-finite prediction: {0}")]
    NonFinitePrediction(String),

    /// A per-configuration power table has no entry for the requested
    /// parallelism layout.
    #[error("no power-table entry for configuration (tp={tp}, pp={pp})")]
    MissingPowerEntry { tp: u32, pp: u32 },

    /// Loaded parameters fall outside their permitted boxes.
    #[error("parameter `{name}` = {value} violates bounds [{lower}, {upper}]")]
    BoundsViolation {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    /// A JSON artifact has the wrong schema tag or shape.
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// No optimizer start converged; the best non-converged candidate is
    /// attached so callers can still inspect it.
    #[error("no optimizer start converged (best loss {best_loss:.6e} after {n_starts} starts)")]
    NoConvergence { best_loss: f64, n_starts: usize },

    /// Metric inputs have inconsistent lengths.
    #[error("length mismatch: {left} values vs {right} values")]
    LengthMismatch { left: usize, right: usize },

    /// A metric that divides by target variance received constant targets.
    #[error("degenerate targets: {0}")]
    DegenerateTargets(String),

    /// No scenario survived grouping (all had fewer than two entries).
    #[error("no rankable scenarios: {0}")]
    NoScenarios(String),

    /// A configuration space axis is empty or not strictly increasing.
    #[error("invalid config space: {0}")]
    InvalidSpace(String),

    /// A symbolic-regression feature name is not recognized.
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    /// An expression string could not be parsed.
    #[error("expression parse error: {0}")]
    ExprParse(String),
}

impl Error {
    /// Helper for wrapping I/O errors with their path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
