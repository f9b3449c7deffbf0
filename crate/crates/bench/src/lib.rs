//! Benchmark fixtures shared by the criterion benches.

use silicosis_core::{CoefficientFamilies, CoefficientFamily, ModelParams, State, TruncatedSystem};

/// Coupled system with power-law uptake of exponent `gamma` at order `n`.
pub fn coupled_system(n: usize, gamma: f64) -> TruncatedSystem {
    let fam = CoefficientFamilies::new(
        CoefficientFamily::power_law(1.0, gamma),
        CoefficientFamily::constant(0.5),
        CoefficientFamily::constant(0.3),
    );
    TruncatedSystem::new(ModelParams::new(1.0, 1.0).unwrap(), fam.realize(n).unwrap()).unwrap()
}

/// Geometric initial state `x = 1`, `M_i = 2^{-i}`.
pub fn geometric_state(n: usize) -> State {
    State::new(0.0, 1.0, (0..=n).map(|i| 0.5f64.powi(i as i32)).collect())
}
