//! Steady states of the truncated system.
//!
//! For a fixed free-quartz level `x` the cohort equations are a lower
//! triangular linear system, so `M*(x)` follows from a forward recursion and
//! the remaining unknown is a root of the scalar free-quartz residual
//! `phi(x) = α - x Σ k_i M_i*(x) + Σ i q_i M_i*(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{norm_mu, State};
use crate::truncation::TruncatedSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub x_star: f64,
    pub m_star: Vec<f64>,
    /// X-norm of the vector field at `(x_star, m_star)`.
    pub residual: f64,
    /// `M_n*`, the mass parked in the last cohort. A large value means the
    /// truncation order is too small for this equilibrium.
    pub tail_mass: f64,
    pub iterations: usize,
}

impl EquilibriumResult {
    pub fn state(&self) -> State {
        State::new(0.0, self.x_star, self.m_star.clone())
    }
}

const MAX_DOUBLINGS: usize = 100;
const MAX_ITERATIONS: usize = 200;

/// Cohort profile `M*(x)` solving the cohort equations at free quartz `x`.
pub fn steady_profile(sys: &TruncatedSystem, x: f64) -> Result<Vec<f64>> {
    let rates = &sys.rates;
    let mut m = Vec::with_capacity(rates.n + 1);
    let mut inflow = sys.params.r;
    for i in 0..=rates.n {
        let den = rates.k_eff(i) * x + rates.p[i] + rates.q[i];
        let mi = if den > 0.0 {
            inflow / den
        } else if inflow == 0.0 {
            0.0
        } else {
            return Err(Error::DegenerateDenominator { index: i, x });
        };
        m.push(mi);
        inflow = rates.k_eff(i) * x * mi;
    }
    Ok(m)
}

fn phi(sys: &TruncatedSystem, x: f64, m: &[f64]) -> f64 {
    let rates = &sys.rates;
    let mut uptake = 0.0;
    let mut release = 0.0;
    for (i, &mi) in m.iter().enumerate() {
        uptake += rates.k_eff(i) * mi;
        release += i as f64 * rates.q[i] * mi;
    }
    sys.params.alpha - x * uptake + release
}

/// `d phi / dx` along the profile, from the Jacobian: the profile
/// sensitivity solves `J_MM dM = -J_Mx` by forward substitution.
fn phi_slope(sys: &TruncatedSystem, x: f64, m: &[f64]) -> Result<f64> {
    let jac = sys.eval_jacobian(&State::new(0.0, x, m.to_vec()))?;
    let mut slope = jac.corner;
    let mut prev = 0.0;
    for i in 0..m.len() {
        let mut rhs = -jac.col[i];
        if i > 0 {
            rhs -= jac.sub[i - 1] * prev;
        }
        let dm = if jac.diag[i] != 0.0 { rhs / jac.diag[i] } else { 0.0 };
        slope += jac.row[i] * dm;
        prev = dm;
    }
    Ok(slope)
}

fn result(sys: &TruncatedSystem, x: f64, m: Vec<f64>, iterations: usize) -> Result<EquilibriumResult> {
    let s = State::new(0.0, x, m);
    let f = sys.eval_rhs(&s)?;
    let residual = norm_mu(&State::from_slice(0.0, &f), 1.0);
    let tail_mass = *s.m.last().unwrap_or(&0.0);
    Ok(EquilibriumResult { x_star: x, m_star: s.m, residual, tail_mass, iterations })
}

/// Default upper end of the search interval: `α / (k_min M_0*(0))` with
/// `k_min` the smallest positive uptake rate, at least 1.
fn initial_upper(sys: &TruncatedSystem) -> f64 {
    let rates = &sys.rates;
    let k_min = (0..rates.n).map(|i| rates.k[i]).filter(|&k| k > 0.0).fold(f64::INFINITY, f64::min);
    let d0 = rates.p[0] + rates.q[0];
    let m0 = if d0 > 0.0 { sys.params.r / d0 } else { 0.0 };
    let guess = sys.params.alpha / (k_min * m0);
    if guess.is_finite() {
        guess.max(1.0)
    } else {
        1.0
    }
}

/// Locates a steady state `(x*, M*(x*))` of the truncated system.
///
/// Without `bracket` the search starts on `[0, initial_upper]` and doubles
/// the upper end until the residual changes sign. The root is refined by
/// Newton steps on `phi` that fall back to bisection whenever a step leaves
/// the current bracket or fails to halve it, stopping once `|phi| <= tol / 10`
/// or the bracket collapses to rounding level.
pub fn find_equilibrium(
    sys: &TruncatedSystem,
    bracket: Option<(f64, f64)>,
    tol: f64,
) -> Result<EquilibriumResult> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    if sys.params.r == 0.0 && sys.params.alpha == 0.0 {
        return result(sys, 0.0, vec![0.0; sys.n() + 1], 0);
    }

    let (lo, hi) = match bracket {
        Some((lo, hi)) => {
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::InvalidConfig(format!("invalid bracket [{lo}, {hi}]")));
            }
            (lo, hi)
        }
        None => (0.0, initial_upper(sys)),
    };
    let m_lo = steady_profile(sys, lo)?;
    let f_lo = phi(sys, lo, &m_lo);
    if f_lo == 0.0 {
        return result(sys, lo, m_lo, 0);
    }
    let mut hi = hi;
    let mut m_hi = steady_profile(sys, hi)?;
    let mut f_hi = phi(sys, hi, &m_hi);
    if bracket.is_none() {
        let mut doublings = 0;
        while f_hi.signum() == f_lo.signum() && f_hi != 0.0 && doublings < MAX_DOUBLINGS {
            hi *= 2.0;
            m_hi = steady_profile(sys, hi)?;
            f_hi = phi(sys, hi, &m_hi);
            doublings += 1;
        }
    }
    if f_hi == 0.0 {
        return result(sys, hi, m_hi, 0);
    }
    if f_hi.signum() == f_lo.signum() {
        return Err(Error::NoBracket { lo, hi });
    }

    // Orient so that phi(a) < 0 < phi(b).
    let (mut a, mut b) = if f_lo < 0.0 { (lo, hi) } else { (hi, lo) };
    let mut x = 0.5 * (lo + hi);
    let mut width_old = (hi - lo).abs();
    let mut width = width_old;
    let mut m = steady_profile(sys, x)?;
    let mut f = phi(sys, x, &m);
    let mut slope = phi_slope(sys, x, &m)?;
    for it in 1..=MAX_ITERATIONS {
        let newton_leaves = ((x - b) * slope - f) * ((x - a) * slope - f) > 0.0;
        let newton_slow = (2.0 * f).abs() > (width_old * slope).abs();
        width_old = width;
        if slope == 0.0 || newton_leaves || newton_slow {
            width = 0.5 * (b - a);
            x = a + width;
        } else {
            width = f / slope;
            x -= width;
        }
        m = steady_profile(sys, x)?;
        f = phi(sys, x, &m);
        if f.abs() <= 0.1 * tol || width.abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return result(sys, x, m, it);
        }
        slope = phi_slope(sys, x, &m)?;
        if f < 0.0 {
            a = x;
        } else {
            b = x;
        }
    }
    result(sys, x, m, MAX_ITERATIONS)
}
