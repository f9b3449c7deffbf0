//! Properties of the solution map `y0 ↦ y(t)`: independence from the
//! stepping scheme, the semigroup law and continuity in the initial data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig, Trajectory};
use crate::model::{norm_mu, norm_mu_diff, State};
use crate::truncation::TruncatedSystem;

/// `sup_t ‖a(t) - b(t)‖_mu` over the union of both sample grids.
pub fn sup_gap(a: &Trajectory, b: &Trajectory, mu: f64) -> Result<f64> {
    let end = a.t_end().min(b.t_end());
    let mut times: Vec<f64> = a.times().iter().chain(b.times()).copied().filter(|&t| t <= end).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut gap: f64 = 0.0;
    for t in times {
        gap = gap.max(norm_mu_diff(&a.dense_eval(t)?, &b.dense_eval(t)?, mu));
    }
    Ok(gap)
}

/// Integrates the same problem under two stepping configurations and
/// returns the sup-in-time gap between them in the X-norm.
pub fn uniqueness_probe(
    sys: &TruncatedSystem,
    y0: &State,
    t_end: f64,
    cfg_a: &IntegratorConfig,
    cfg_b: &IntegratorConfig,
) -> Result<f64> {
    if cfg_a == cfg_b {
        return Err(Error::InvalidConfig("uniqueness probe needs two distinct configurations".into()));
    }
    let (a, b) = rayon::join(
        || integrate(sys, y0, t_end, &cfg_a.clone().with_cohort_integrals(false)),
        || integrate(sys, y0, t_end, &cfg_b.clone().with_cohort_integrals(false)),
    );
    sup_gap(&a?, &b?, 1.0)
}

fn flow(sys: &TruncatedSystem, y0: &State, span: f64, cfg: &IntegratorConfig) -> Result<State> {
    if span == 0.0 {
        return Ok(y0.clone());
    }
    Ok(integrate(sys, y0, y0.t + span, cfg)?.final_state())
}

/// `‖T(t+s) y0 - T(t) T(s) y0‖_{1+γ}` with `γ` the uptake growth exponent.
/// The restart uses the endpoint state of the first leg.
pub fn semigroup_residual(
    sys: &TruncatedSystem,
    y0: &State,
    t: f64,
    s: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    if !(t >= 0.0 && s >= 0.0 && t.is_finite() && s.is_finite()) {
        return Err(Error::InvalidConfig(format!("semigroup times must be >= 0, got t={t}, s={s}")));
    }
    let cfg = cfg.clone().with_cohort_integrals(false);
    let mu = 1.0 + sys.rates.uniqueness_gamma();
    let direct = flow(sys, y0, t + s, &cfg)?;
    let middle = flow(sys, y0, s, &cfg)?;
    let composed = flow(sys, &middle, t, &cfg)?;
    Ok(norm_mu_diff(&direct, &composed, mu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    /// `‖y0' - y0‖_{1+γ}`
    pub input_gap: f64,
    /// `sup_t ‖y'(t) - y(t)‖_{1+γ}`
    pub output_gap: f64,
}

impl ContinuityRow {
    pub fn ratio(&self) -> f64 {
        if self.input_gap > 0.0 {
            self.output_gap / self.input_gap
        } else {
            0.0
        }
    }
}

/// Integrates the base problem and each perturbed initial state, reporting
/// input and output gaps in the `1+γ` norm. Perturbed runs are concurrent.
pub fn continuity_study(
    sys: &TruncatedSystem,
    y0: &State,
    perturbed: &[State],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<ContinuityRow>> {
    let cfg = cfg.clone().with_cohort_integrals(false);
    let mu = 1.0 + sys.rates.uniqueness_gamma();
    let base = integrate(sys, y0, t_end, &cfg)?;
    perturbed
        .par_iter()
        .map(|p| {
            if !p.in_cone() {
                return Err(Error::InvalidState("perturbed initial data leaves the cone".into()));
            }
            let input_gap = norm_mu_diff(p, y0, mu);
            if input_gap == 0.0 {
                return Ok(ContinuityRow { input_gap, output_gap: 0.0 });
            }
            let run = integrate(sys, p, t_end, &cfg)?;
            Ok(ContinuityRow { input_gap, output_gap: sup_gap(&base, &run, mu)? })
        })
        .collect()
}

/// `y0 + scale * direction`, for building perturbation ladders.
pub fn perturb(y0: &State, direction: &State, scale: f64) -> State {
    State {
        t: y0.t,
        x: y0.x + scale * direction.x,
        m: y0.m.iter().zip(&direction.m).map(|(a, b)| a + scale * b).collect(),
    }
}

/// Largest `‖y(t)‖_mu` along a trajectory.
pub fn max_norm(traj: &Trajectory, mu: f64) -> f64 {
    traj.states().map(|s| norm_mu(&s, mu)).fold(0.0, f64::max)
}
