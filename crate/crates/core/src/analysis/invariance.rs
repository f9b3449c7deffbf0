use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::{norm_mu, MomentWeights};
use crate::moments::gronwall_envelope;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub ok: bool,
    /// Largest `‖y(t)‖_{1+γ}` over the samples.
    pub max_norm: f64,
    /// `min (envelope - norm) / envelope` over the samples after the start.
    /// At the start the `γ = 0` envelope equals the norm by construction.
    pub margin: f64,
}

const SLACK_REL: f64 = 1e-9;
const SLACK_ABS: f64 = 1e-9;

/// Checks that `‖y(t)‖_{1+γ}` stays under an a-priori envelope at every sample.
///
/// For `γ = 0` the envelope is the linear bound `‖y0‖ + (α + r) t`. For
/// `γ > 0` the cohorts `i >= 1` are bounded by the Gronwall envelope for
/// `g_i = (i + 1)^{1+γ}` and `x + M_0` by the linear bound. A relative and
/// absolute slack of `1e-9` absorbs rounding and clamping.
///
/// ```
/// use silicosis_core::analysis::invariance_check;
/// use silicosis_core::{integrate, IntegratorConfig, ModelParams, RateTable, State, TruncatedSystem};
///
/// let rates = RateTable::from_sequences(vec![1.0; 5], vec![1.0; 5], vec![0.5; 5]).unwrap();
/// let sys = TruncatedSystem::new(ModelParams::new(1.0, 1.0).unwrap(), rates).unwrap();
/// let y0 = State::new(0.0, 1.0, vec![1.0, 0.5, 0.25, 0.0, 0.0]);
/// let traj = integrate(&sys, &y0, 2.0, &IntegratorConfig::default()).unwrap();
/// assert!(invariance_check(&traj, 0.0).unwrap().ok);
/// ```
pub fn invariance_check(traj: &Trajectory, gamma: f64) -> Result<InvarianceReport> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!("gamma = {gamma} must lie in [0, 1]")));
    }
    let mu = 1.0 + gamma;
    let y0 = traj.initial_state();
    let t0 = traj.t_start();
    let base = norm_mu(&y0, 1.0);
    let supply = traj.sys.params.supply();
    let envelope: Box<dyn Fn(f64) -> f64> = if gamma == 0.0 {
        Box::new(move |tau| base + supply * tau)
    } else {
        let w = MomentWeights::power(&traj.sys.rates, mu);
        let env = gronwall_envelope(traj, &w)?;
        Box::new(move |tau| base + supply * tau + env.bound(tau))
    };

    let mut ok = true;
    let mut max_norm: f64 = 0.0;
    let mut margin = f64::INFINITY;
    for s in traj.states() {
        let value = norm_mu(&s, mu);
        let bound = envelope(s.t - t0);
        if value > bound * (1.0 + SLACK_REL) + SLACK_ABS {
            ok = false;
        }
        if bound > 0.0 && s.t > t0 {
            margin = margin.min((bound - value) / bound);
        }
        max_norm = max_norm.max(value);
    }
    if !margin.is_finite() {
        margin = 1.0;
    }
    Ok(InvarianceReport { ok, max_norm, margin })
}
