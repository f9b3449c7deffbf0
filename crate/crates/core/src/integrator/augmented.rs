//! Phase variables extended with balance accumulators, all advanced by the
//! same stepper.
//!
//! Layout: `x, M_0..M_n | A1 A2 A3 A4 | F_m (requested m) | ∫M_i | ∫x M_i`.

use serde::{Deserialize, Serialize};

use crate::truncation::TruncatedSystem;

/// Which integrals ride along with the phase variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccumulatorRequest {
    /// Cohorts `m >= 1` whose influx `∫ x k_{m-1} M_{m-1}` is recorded.
    #[serde(default)]
    pub flux_cohorts: Vec<usize>,
    /// Record `∫ M_i` and `∫ x M_i` for every cohort. Needed for moment
    /// identities with arbitrary weights; roughly triples the state size.
    #[serde(default = "default_true")]
    pub cohort_integrals: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AccumulatorRequest {
    fn default() -> Self {
        Self { flux_cohorts: Vec::new(), cohort_integrals: true }
    }
}

/// Offsets into the augmented state vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n: usize,
    pub flux_cohorts: Vec<usize>,
    pub cohort_integrals: bool,
}

pub const A_LOSS: usize = 0;
pub const A_REMOVED_LOAD: usize = 1;
pub const A_RELEASED_LOAD: usize = 2;
pub const A_UPTAKE: usize = 3;

impl Layout {
    pub fn new(n: usize, req: &AccumulatorRequest) -> Self {
        let mut flux: Vec<usize> = req.flux_cohorts.iter().copied().filter(|&m| m >= 1 && m <= n).collect();
        flux.sort_unstable();
        flux.dedup();
        Self { n, flux_cohorts: flux, cohort_integrals: req.cohort_integrals }
    }

    /// Number of phase variables.
    pub fn core(&self) -> usize {
        self.n + 2
    }

    /// Index of balance accumulator `which` (0..4).
    pub fn acc(&self, which: usize) -> usize {
        self.core() + which
    }

    pub fn flux_index(&self, m: usize) -> Option<usize> {
        self.flux_cohorts.iter().position(|&c| c == m).map(|p| self.core() + 4 + p)
    }

    fn cohort_base(&self) -> usize {
        self.core() + 4 + self.flux_cohorts.len()
    }

    /// Index of `∫ M_i`.
    pub fn time_integral(&self, i: usize) -> Option<usize> {
        self.cohort_integrals.then(|| self.cohort_base() + i)
    }

    /// Index of `∫ x M_i`.
    pub fn exposure_integral(&self, i: usize) -> Option<usize> {
        self.cohort_integrals.then(|| self.cohort_base() + self.n + 1 + i)
    }

    pub fn dimension(&self) -> usize {
        self.cohort_base() + if self.cohort_integrals { 2 * (self.n + 1) } else { 0 }
    }
}

/// Vector field of the augmented system.
pub(crate) struct Augmented<'a> {
    pub sys: &'a TruncatedSystem,
    pub layout: &'a Layout,
}

impl Augmented<'_> {
    pub fn rhs(&self, y: &[f64], out: &mut [f64]) {
        let core = self.layout.core();
        let n = self.layout.n;
        self.sys.rhs_into(&y[..core], &mut out[..core]);
        let rates = &self.sys.rates;
        let x = y[0];
        let m = &y[1..core];
        let (mut loss, mut removed, mut released, mut uptake) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..=n {
            let fi = i as f64;
            loss += (rates.p[i] + rates.q[i]) * m[i];
            removed += fi * rates.p[i] * m[i];
            released += fi * rates.q[i] * m[i];
            uptake += rates.k_eff(i) * m[i];
        }
        out[core + A_LOSS] = loss;
        out[core + A_REMOVED_LOAD] = removed;
        out[core + A_RELEASED_LOAD] = released;
        out[core + A_UPTAKE] = x * uptake;
        for (p, &c) in self.layout.flux_cohorts.iter().enumerate() {
            out[core + 4 + p] = x * rates.k_eff(c - 1) * m[c - 1];
        }
        if self.layout.cohort_integrals {
            let base = self.layout.cohort_base();
            for i in 0..=n {
                out[base + i] = m[i];
                out[base + n + 1 + i] = x * m[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets() {
        let req = AccumulatorRequest { flux_cohorts: vec![3, 1, 3, 9], cohort_integrals: true };
        let l = Layout::new(4, &req);
        assert_eq!(l.flux_cohorts, vec![1, 3]);
        assert_eq!(l.core(), 6);
        assert_eq!(l.acc(A_UPTAKE), 9);
        assert_eq!(l.flux_index(3), Some(11));
        assert_eq!(l.flux_index(2), None);
        assert_eq!(l.time_integral(0), Some(12));
        assert_eq!(l.exposure_integral(4), Some(21));
        assert_eq!(l.dimension(), 22);

        let l = Layout::new(4, &AccumulatorRequest { flux_cohorts: vec![], cohort_integrals: false });
        assert_eq!(l.dimension(), 10);
        assert_eq!(l.time_integral(0), None);
    }
}
