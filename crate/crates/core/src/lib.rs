//! Universal sampling rate distortion solvers.
//!
//! A source is a finite family of joint pmfs over a product alphabet. A sampler
//! observes `k` of the `m` components per instant; the encoder must describe a
//! recovery subset of the components within a distortion budget without knowing
//! which family member is active. The modules compute the minimal rates for
//! fixed-set, independent random and memoryless random samplers, in the
//! Bayesian (expected) and nonBayesian (worst-case) settings.

pub mod cell;
pub mod fixed;
pub mod info;
pub mod instances;
pub mod irs;
pub mod lp;
pub mod model;
pub mod mrs;
pub mod partition;
pub mod rd;
pub mod report;
pub mod sim;

use serde::{Deserialize, Serialize};

use thiserror::Error;

pub use model::{validate_model, ModelError, RawModel, SourceModel, Subset};
pub use partition::{AmbiguityPartition, DistortionTable};

/// Distortion feasibility tolerance (distortion units).
pub const TOL_FEAS: f64 = 1e-7;
/// Optimality gap tolerance (bits).
pub const TOL_GAP: f64 = 1e-6;
/// Midpoint-convexity tolerance (bits).
pub const TOL_CONVEX: f64 = 1e-6;

/// Whether distortion is averaged over the prior or bounded for every member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Bayes,
    NonBayes,
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setting::Bayes => "bayes",
            Setting::NonBayes => "nonbayes",
        })
    }
}

/// Errors from the sampler-level solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("DeltaOutOfRange: {delta} is below the minimum distortion {min} (zero rate from {max})")]
    DeltaOutOfRange { delta: f64, min: f64, max: f64 },
    #[error("NoFeasibleSet: no sampling set reaches distortion {delta}")]
    NoFeasibleSet { delta: f64 },
    #[error("TooManySamplers: {count} maps exceed the cap {cap}; reduce alphabet sizes or raise the cap")]
    TooManySamplers { count: f64, cap: usize },
    #[error(transparent)]
    Rd(#[from] rd::RdError),
}
