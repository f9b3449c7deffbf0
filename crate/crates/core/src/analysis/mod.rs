//! Numerical experiments on the solution map: truncation convergence,
//! uniqueness, the semigroup law, continuity in the data, invariance of
//! weighted balls, equilibria and the pointwise differential form.

pub mod convergence;
pub mod differential;
pub mod equilibrium;
pub mod flow;
pub mod invariance;

pub use convergence::{convergence_study, uniform_grid, ConvergenceReport, DEFAULT_GRID_POINTS};
pub use differential::differential_form_check;
pub use equilibrium::{find_equilibrium, steady_profile, EquilibriumResult};
pub use flow::{
    continuity_study, max_norm, perturb, semigroup_residual, sup_gap, uniqueness_probe, ContinuityRow,
};
pub use invariance::{invariance_check, InvarianceReport};
