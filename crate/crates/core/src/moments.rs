//! Physical moments of a state and the integrated balance identities of the
//! truncated flow, evaluated as residuals on a [`Trajectory`].
//!
//! All residuals read integrals from the co-integrated accumulators, never
//! from a quadrature, so a nonzero residual points at the model or the
//! bookkeeping rather than at a quadrature rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::{norm_mu, validate_weights, MomentWeights, RateTable, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSnapshot {
    pub t: f64,
    /// `Σ M_i`
    pub total_macrophages: f64,
    /// `x + Σ i M_i`
    pub total_quartz: f64,
    /// `total_quartz + total_macrophages`
    pub total_matter: f64,
    /// `Σ i q_i M_i`
    pub release_rate: f64,
    /// `Σ i p_i M_i`
    pub removal_rate: f64,
}

pub fn compute_moments(s: &State, rates: &RateTable) -> Result<MomentSnapshot> {
    if s.m.len() != rates.n + 1 {
        return Err(Error::DimensionMismatch { expected: rates.n + 1, got: s.m.len() });
    }
    let mut macrophages = 0.0;
    let mut loaded = 0.0;
    let mut release = 0.0;
    let mut removal = 0.0;
    for (i, &mi) in s.m.iter().enumerate() {
        let fi = i as f64;
        macrophages += mi;
        loaded += fi * mi;
        release += fi * rates.q[i] * mi;
        removal += fi * rates.p[i] * mi;
    }
    let quartz = s.x + loaded;
    Ok(MomentSnapshot {
        t: s.t,
        total_macrophages: macrophages,
        total_quartz: quartz,
        total_matter: quartz + macrophages,
        release_rate: release,
        removal_rate: removal,
    })
}

fn moments_at(traj: &Trajectory, t: f64) -> Result<(MomentSnapshot, crate::integrator::Accumulators)> {
    let s = traj.dense_eval(t)?;
    Ok((compute_moments(&s, &traj.sys.rates)?, traj.accumulators_at(t)?))
}

/// `U(t) - U(0) - (r + α) t + ∫Σ(p_i+q_i)M_i + ∫Σ i p_i M_i`.
pub fn mass_balance_residual(traj: &Trajectory, t: f64) -> Result<f64> {
    let t0 = traj.t_start();
    let (m0, _) = moments_at(traj, t0)?;
    let (mt, acc) = moments_at(traj, t)?;
    let supply = traj.sys.params.supply();
    Ok(mt.total_matter - m0.total_matter - supply * (t - t0) + acc.loss + acc.removed_load)
}

/// `𝓜(t) - 𝓜(0) - r t + ∫Σ(p_i+q_i)M_i`.
pub fn macrophage_balance_residual(traj: &Trajectory, t: f64) -> Result<f64> {
    let t0 = traj.t_start();
    let (m0, _) = moments_at(traj, t0)?;
    let (mt, acc) = moments_at(traj, t)?;
    Ok(mt.total_macrophages - m0.total_macrophages - traj.sys.params.r * (t - t0) + acc.loss)
}

/// `𝓧(t) - 𝓧(0) - α t + ∫Σ i p_i M_i`.
pub fn quartz_balance_residual(traj: &Trajectory, t: f64) -> Result<f64> {
    let t0 = traj.t_start();
    let (m0, _) = moments_at(traj, t0)?;
    let (mt, acc) = moments_at(traj, t)?;
    Ok(mt.total_quartz - m0.total_quartz - traj.sys.params.alpha * (t - t0) + acc.removed_load)
}

/// Free-quartz equation in integrated form:
/// `x(t) - x(0) - α t + ∫ x Σ k_i M_i - ∫ Σ i q_i M_i`.
pub fn free_quartz_residual(traj: &Trajectory, t: f64) -> Result<f64> {
    let t0 = traj.t_start();
    let x0 = traj.dense_eval(t0)?.x;
    let y = traj.dense_eval_augmented(t)?;
    let acc = traj.accumulators_at(t)?;
    Ok(y[0] - x0 - traj.sys.params.alpha * (t - t0) + acc.uptake - acc.released_load)
}

fn cohort_integrals(traj: &Trajectory, aug: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let l = traj.layout();
    let missing = || Error::MissingAccumulator("per-cohort integrals (cohort_integrals = false)".into());
    let base_m = l.time_integral(0).ok_or_else(missing)?;
    let base_x = l.exposure_integral(0).ok_or_else(missing)?;
    let len = l.n + 1;
    Ok((aug[base_m..base_m + len].to_vec(), aug[base_x..base_x + len].to_vec()))
}

/// Influx into cohort `m` integrated from the start: `∫ x k_{m-1} M_{m-1}`.
fn influx(traj: &Trajectory, aug: &[f64], m: usize) -> Result<f64> {
    let l = traj.layout();
    if let Some(idx) = l.flux_index(m) {
        return Ok(aug[idx]);
    }
    if let Some(idx) = l.exposure_integral(m - 1) {
        return Ok(traj.sys.rates.k_eff(m - 1) * aug[idx]);
    }
    Err(Error::MissingAccumulator(format!("influx F_{m} was not requested")))
}

/// Left minus right side of the integrated weighted-moment identity over
/// `[t1, t2]` for cohorts `m..=n`:
///
/// `Σ g_i ΔM_i + ∫Σ g_i (p_i+q_i) M_i - g_m ∫ x k_{m-1} M_{m-1} - ∫Σ_{i<n} (g_{i+1}-g_i) x k_i M_i`.
pub fn moment_identity_residual(
    traj: &Trajectory,
    w: &MomentWeights,
    m: usize,
    t1: f64,
    t2: f64,
) -> Result<f64> {
    let rates = &traj.sys.rates;
    let n = rates.n;
    if w.g.len() != n + 1 {
        return Err(Error::DimensionMismatch { expected: n + 1, got: w.g.len() });
    }
    if m < 1 || m > n {
        return Err(Error::InvalidWeights(format!("cohort index m = {m} must lie in 1..={n}")));
    }
    if !(t1 < t2) {
        return Err(Error::InvalidConfig(format!("need t1 < t2, got {t1} and {t2}")));
    }
    let a1 = traj.dense_eval_augmented(t1)?;
    let a2 = traj.dense_eval_augmented(t2)?;
    let (int_m1, int_x1) = cohort_integrals(traj, &a1)?;
    let (int_m2, int_x2) = cohort_integrals(traj, &a2)?;
    let g = &w.g;

    let mut lhs = 0.0;
    for i in m..=n {
        let dm = a2[1 + i] - a1[1 + i];
        let loss = (rates.p[i] + rates.q[i]) * (int_m2[i] - int_m1[i]);
        lhs += g[i] * (dm + loss);
    }
    let mut rhs = g[m] * (influx(traj, &a2, m)? - influx(traj, &a1, m)?);
    for i in m..n {
        rhs += (g[i + 1] - g[i]) * rates.k[i] * (int_x2[i] - int_x1[i]);
    }
    Ok(lhs - rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub ok: bool,
    /// `min (bound - lhs) / bound` over samples with a positive bound.
    pub margin: f64,
    /// Envelope prefactor from the existence proof.
    pub c1: f64,
    /// `‖y_0‖ + (α + r) T`.
    pub c2: f64,
    /// Exponential rate of the envelope.
    pub rate: f64,
    /// Smallest prefactor making `c1_fitted e^{rate t}` dominate the samples.
    pub c1_fitted: f64,
    pub max_lhs: f64,
}

/// Exponential envelope `c1 e^{rate t}` for the weighted moment of a run.
///
/// With `C2 = ‖y_0‖ + (α+r)T` and `C` from the weights, the prefactor is
/// `C1 = k_0 g_1 (C2/C)^2 T + Σ_{i≥1} g_i M_i(0)` with rate `C2` when
/// `C ≤ 1`. For `C > 1` the differential inequality only supports rate
/// `C·C2`, used together with `C1 = k_0 g_1 C2^2 T + Σ g_i M_i(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallEnvelope {
    pub c1: f64,
    pub c2: f64,
    pub rate: f64,
}

impl GronwallEnvelope {
    /// Envelope value `tau` time units after the start.
    pub fn bound(&self, tau: f64) -> f64 {
        self.c1 * (self.rate * tau).exp()
    }
}

/// Validates `w` against the run's rates and builds its envelope.
pub fn gronwall_envelope(traj: &Trajectory, w: &MomentWeights) -> Result<GronwallEnvelope> {
    let rates = &traj.sys.rates;
    let chk = validate_weights(w, rates).map_err(|e| Error::InvalidWeights(e.to_string()))?;
    if !chk.delta_ok {
        return Err(Error::InvalidWeights(format!(
            "increments of g fall below delta = {}",
            w.delta
        )));
    }
    if w.c < chk.c_min * (1.0 - 1e-12) {
        return Err(Error::InvalidWeights(format!(
            "C = {} is below the smallest admissible constant {}",
            w.c, chk.c_min
        )));
    }
    let y0 = traj.initial_state();
    let horizon = traj.t_end() - traj.t_start();
    let c2 = norm_mu(&y0, 1.0) + traj.sys.params.supply() * horizon;
    let c_eff = if w.c > 0.0 { w.c } else { 1.0 };
    let shrink = c_eff.min(1.0);
    let g0_sum: f64 = (1..=rates.n).map(|i| w.g[i] * y0.m[i]).sum();
    Ok(GronwallEnvelope {
        c1: rates.k[0] * w.g[1] * (c2 / shrink).powi(2) * horizon + g0_sum,
        c2,
        rate: c2 * c_eff.max(1.0),
    })
}

/// Checks `Σ_{i≥1} g_i M_i(t) + ∫Σ_{i≥1} g_i (p_i+q_i) M_i ≤ C1 e^{rate t}`
/// at every sample; see [`GronwallEnvelope`] for the constants.
pub fn gronwall_check(traj: &Trajectory, w: &MomentWeights) -> Result<GronwallReport> {
    let env = gronwall_envelope(traj, w)?;
    let rates = &traj.sys.rates;
    let n = rates.n;
    let t0 = traj.t_start();

    let mut ok = true;
    let mut margin = f64::INFINITY;
    let mut c1_fitted: f64 = 0.0;
    let mut max_lhs: f64 = 0.0;
    for j in 0..traj.len() {
        let aug = traj.sample(j);
        let (int_m, _) = cohort_integrals(traj, aug)?;
        let lhs: f64 = (1..=n)
            .map(|i| w.g[i] * (aug[1 + i] + (rates.p[i] + rates.q[i]) * int_m[i]))
            .sum();
        let tau = traj.times()[j] - t0;
        let growth = (env.rate * tau).exp();
        let bound = env.c1 * growth;
        if lhs > bound * (1.0 + 1e-12) {
            ok = false;
        }
        if bound > 0.0 {
            margin = margin.min((bound - lhs) / bound);
        }
        c1_fitted = c1_fitted.max(lhs / growth);
        max_lhs = max_lhs.max(lhs);
    }
    if !margin.is_finite() {
        margin = 1.0;
    }
    Ok(GronwallReport { ok, margin, c1: env.c1, c2: env.c2, rate: env.rate, c1_fitted, max_lhs })
}
