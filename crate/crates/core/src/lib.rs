//! Solver and verification toolkit for the silicosis kinetic model: a
//! countable coagulation–fragmentation–death system for free quartz `x` and
//! macrophage cohorts `M_i` (macrophages carrying `i` particles), handled
//! through its finite truncations.
//!
//! Modules, bottom-up:
//!
//! - [`model`]: parameters, coefficient families, states, weighted norms.
//! - [`truncation`]: the `(n + 2)`-dimensional vector field and Jacobian.
//! - [`integrator`]: adaptive stepping with co-integrated balance integrals.
//! - [`moments`]: physical moments and integrated balance residuals.
//! - [`analysis`]: truncation convergence, uniqueness, semigroup, continuity,
//!   invariance and equilibria.

// `!(v > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod integrator;
pub mod model;
pub mod moments;
pub mod truncation;

pub use error::{Error, Result};
pub use analysis::{
    continuity_study, convergence_study, differential_form_check, find_equilibrium,
    invariance_check, semigroup_residual, uniqueness_probe, ConvergenceReport, EquilibriumResult,
    InvarianceReport,
};
pub use integrator::{integrate, IntegratorConfig, Method, Trajectory};
pub use model::{
    norm_mu, norm_mu_diff, realize_coefficients, validate_weights, CoefficientFamilies,
    CoefficientFamily, InitialData, InitialProfile, ModelParams, MomentWeights, RateTable, State,
    TailRule,
};
pub use moments::{compute_moments, gronwall_check, GronwallReport, MomentSnapshot};
pub use truncation::{BorderedJacobian, TruncatedSystem};
