//! Energy modeling toolkit for LLM inference configuration planning.
//!
//! The crate fits interpretable closed-form energy models to profiling
//! measurements of LLM serving configurations (tensor/pipeline parallelism,
//! batch size, token budgets) and uses them to predict, rank, and select
//! configurations by energy cost. It also ships reference baselines
//! (linear regression, random forest, gradient boosting, a latency-times-power
//! proxy), a genetic-programming symbolic regression engine for discovering
//! model structure from data, and an evaluation suite with both accuracy and
//! ranking metrics.
//!
//! Modules:
//! - [`dataset`]: profiling records, CSV I/O, samplers, and a synthetic generator
//! - [`model`]: the closed-form energy model, its gradient, and bounded fitting
//! - [`optim`]: projected L-BFGS minimizer for box-constrained smooth problems
//! - [`baselines`]: linear/forest/boosting regressors and the latency proxy
//! - [`evaluation`]: accuracy and ranking metrics over grouped scenarios
//! - [`selector`]: config-space enumeration, ranking, and what-if sweeps
//! - [`symreg`]: symbolic regression over protected expression trees
//! - [`benchmark`]: the pinned synthetic benchmark used by tests and the CLI
//!
//! All randomized routines take explicit `u64` seeds and are deterministic
//! across runs and platforms for a fixed seed.

pub mod baselines;
pub mod benchmark;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod optim;
pub mod selector;
pub mod symreg;

pub use error::{Error, Result};

/// Derives an independent child seed from a base seed and a stream index.
///
/// Used wherever one user-facing seed must drive several independent random
/// streams (multi-start fitting, per-tree bootstraps, per-slot breeding) so
/// that streams do not overlap and adding a stream never perturbs the others.
/// The mixer is the splitmix64 finalizer, which maps distinct
/// `(seed, stream)` pairs to well-separated outputs.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
