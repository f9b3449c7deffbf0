use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig, Trajectory};
use crate::model::{norm_mu_diff, CoefficientFamilies, InitialData, ModelParams};
use crate::truncation::TruncatedSystem;

/// Gaps between consecutive truncations on a shared time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n_ladder: Vec<usize>,
    /// `sup_t ‖y^{n_{j+1}}(t) - y^{n_j}(t)‖`, one per consecutive pair.
    pub gaps: Vec<f64>,
    /// `sup_t |x^{n_{j+1}}(t) - x^{n_j}(t)|`.
    pub x_gaps: Vec<f64>,
    /// Whether the gaps strictly decrease along the ladder.
    pub decreasing: bool,
    pub grid: Vec<f64>,
}

/// Number of grid points used when none is requested.
pub const DEFAULT_GRID_POINTS: usize = 201;

pub fn uniform_grid(t_end: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points)
        .map(|j| if j + 1 == points { t_end } else { t_end * j as f64 / (points - 1) as f64 })
        .collect()
}

/// Integrates every truncation order in `n_ladder` from the projection of
/// `initial` and compares consecutive rungs in the X-norm on a uniform grid
/// of `grid_points` times in `[0, t_end]`. Rungs run concurrently.
pub fn convergence_study(
    params: &ModelParams,
    families: &CoefficientFamilies,
    initial: &InitialData,
    n_ladder: &[usize],
    t_end: f64,
    cfg: &IntegratorConfig,
    grid_points: usize,
) -> Result<ConvergenceReport> {
    if n_ladder.len() < 2 {
        return Err(Error::InvalidConfig("ladder needs at least two truncation orders".into()));
    }
    if n_ladder[0] < 2 {
        return Err(Error::InvalidTruncationOrder(n_ladder[0]));
    }
    if n_ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("ladder must be strictly increasing".into()));
    }
    initial.validate()?;
    // Per-cohort integrals are not needed for gaps.
    let cfg = cfg.clone().with_cohort_integrals(false);

    let runs: Vec<Trajectory> = n_ladder
        .par_iter()
        .map(|&n| {
            let tag = |e: Error| Error::Rung { n, source: Box::new(e) };
            let rates = families.realize(n).map_err(tag)?;
            let sys = TruncatedSystem::new(*params, rates).map_err(tag)?;
            integrate(&sys, &initial.state(n), t_end, &cfg).map_err(tag)
        })
        .collect::<Result<_>>()?;

    let grid = uniform_grid(t_end, grid_points);
    let mut gaps = Vec::with_capacity(runs.len() - 1);
    let mut x_gaps = Vec::with_capacity(runs.len() - 1);
    for pair in runs.windows(2) {
        let mut gap: f64 = 0.0;
        let mut x_gap: f64 = 0.0;
        for &t in &grid {
            let lo = pair[0].dense_eval(t)?;
            let hi = pair[1].dense_eval(t)?;
            gap = gap.max(norm_mu_diff(&hi, &lo, 1.0));
            x_gap = x_gap.max((hi.x - lo.x).abs());
        }
        gaps.push(gap);
        x_gaps.push(x_gap);
    }
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    Ok(ConvergenceReport { n_ladder: n_ladder.to_vec(), gaps, x_gaps, decreasing, grid })
}
