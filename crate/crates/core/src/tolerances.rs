//! Numerical tolerances and resource limits.
//!
//! Every containment, equality and positivity test is a Frobenius-norm (or
//! eigenvalue-floor) comparison against one of these thresholds.

use serde::{Deserialize, Serialize};

/// Largest joint Hilbert-space dimension that may be materialized densely.
pub const DEFAULT_MAX_DIM: usize = 4096;

/// Relative tolerance of the rank-one test that splits operators into
/// tensor factors.
pub const FACTOR_SPLIT_TOL: f64 = 1e-12;

/// Compatibility target of the isometry repair iteration.
pub const REPAIR_TARGET: f64 = 1e-12;

pub const REPAIR_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `‖ρ - ρ†‖_F` for densities.
    pub hermitian: f64,
    /// `|tr ρ - 1|` for densities.
    pub trace: f64,
    /// Eigenvalue floor `-psd` for positivity (densities and Choi matrices).
    pub psd: f64,
    /// Localization residual and Markov containment.
    pub localization: f64,
    /// Unitality residual of transition expectations.
    pub unital: f64,
    /// Compatibility of a transition expectation with the reference state.
    pub compatibility: f64,
    /// Stabilization of the state sequence.
    pub stabilization: f64,
    /// Oracle equivalence and projectivity residuals.
    pub equivalence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermitian: 1e-10,
            trace: 1e-10,
            psd: 1e-10,
            localization: 1e-10,
            unital: 1e-10,
            compatibility: 1e-12,
            stabilization: 1e-10,
            equivalence: 1e-10,
        }
    }
}
