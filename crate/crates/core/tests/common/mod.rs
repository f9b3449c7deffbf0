#![allow(dead_code)]

use silicosis_core::{
    CoefficientFamilies, CoefficientFamily, ModelParams, RateTable, State, TruncatedSystem,
};

/// Closed-form solution of the decoupled (`k ≡ 0`) system.
///
/// Each cohort decays at `d_i = p_i + q_i`, cohort 0 also receives `r`, and
/// free quartz integrates `α + Σ i q_i M_i`.
pub fn decoupled_exact(params: &ModelParams, rates: &RateTable, y0: &State, t: f64) -> State {
    let mut x = y0.x + params.alpha * t;
    let mut m = Vec::with_capacity(y0.m.len());
    for (i, &m0) in y0.m.iter().enumerate() {
        let d = rates.p[i] + rates.q[i];
        let decay = (-d * t).exp();
        // ∫_0^t e^{-d s} ds
        let kernel = if d > 0.0 { -(-d * t).exp_m1() / d } else { t };
        let mut mi = m0 * decay;
        let mut load = m0 * kernel;
        if i == 0 {
            let src = if d > 0.0 { params.r * kernel } else { params.r * t };
            mi += src;
            // ∫_0^t r ∫_0^s e^{-d u} du ds
            load += if d > 0.0 { params.r * (t - kernel) / d } else { 0.5 * params.r * t * t };
        }
        x += i as f64 * rates.q[i] * load;
        m.push(mi);
    }
    State::new(y0.t + t, x, m)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn system(params: ModelParams, fam: &CoefficientFamilies, n: usize) -> TruncatedSystem {
    TruncatedSystem::new(params, fam.realize(n).unwrap()).unwrap()
}

pub fn families(k: CoefficientFamily, p: CoefficientFamily, q: CoefficientFamily) -> CoefficientFamilies {
    CoefficientFamilies::new(k, p, q)
}

pub fn geometric(n: usize, x0: f64, b: f64, rho: f64) -> State {
    State::new(0.0, x0, (0..=n).map(|i| b * rho.powi(i as i32)).collect())
}
