//! Adaptive integration of the truncated system.
//!
//! Balance accumulators are appended to the phase variables and advanced by
//! the same stepper under the same error control, so every linear balance
//! law of the truncated flow holds for the discrete trajectory up to
//! rounding. See [`augmented`] for the layout.

pub mod augmented;
mod bdf;
mod dopri;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::State;
use crate::truncation::TruncatedSystem;

pub use augmented::{AccumulatorRequest, Layout};
use augmented::{Augmented, A_LOSS, A_RELEASED_LOAD, A_REMOVED_LOAD, A_UPTAKE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Explicit Dormand–Prince 5(4).
    #[default]
    DormandPrince,
    /// Variable-order backward differentiation, for stiff truncations.
    Bdf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Components in `[floor, 0)` are clamped to zero after each step; below
    /// it the run aborts. `None` means `-100 * abs_tol`.
    pub negativity_floor: Option<f64>,
    pub method: Method,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    pub accumulators: AccumulatorRequest,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            negativity_floor: None,
            method: Method::DormandPrince,
            max_steps: 1_000_000,
            initial_step: None,
            accumulators: AccumulatorRequest::default(),
        }
    }
}

impl IntegratorConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }

    pub fn with_flux_cohorts(mut self, cohorts: Vec<usize>) -> Self {
        self.accumulators.flux_cohorts = cohorts;
        self
    }

    pub fn with_cohort_integrals(mut self, on: bool) -> Self {
        self.accumulators.cohort_integrals = on;
        self
    }

    pub fn floor(&self) -> f64 {
        self.negativity_floor.unwrap_or(-100.0 * self.abs_tol)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad(format!("abs_tol must be positive, got {}", self.abs_tol));
        }
        if !(self.max_step > 0.0) {
            return bad(format!("max_step must be positive, got {}", self.max_step));
        }
        if !(self.floor() <= 0.0) {
            return bad(format!("negativity_floor must be <= 0, got {}", self.floor()));
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("initial_step must be positive, got {h}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
    /// Components clamped from `[floor, 0)` to zero.
    pub clamped: usize,
    /// X-norm of everything the clamps added. Balance and moment residuals
    /// can reach this size (times the weight growth) even when the stepping
    /// itself conserves exactly.
    pub clamped_mass: f64,
}

/// Balance integrals from the initial time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accumulators {
    /// `∫ Σ (p_i + q_i) M_i`
    pub loss: f64,
    /// `∫ Σ i p_i M_i`
    pub removed_load: f64,
    /// `∫ Σ i q_i M_i`
    pub released_load: f64,
    /// `∫ x Σ k_i M_i`
    pub uptake: f64,
}

/// Accepted steps with their continuous extension.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub sys: TruncatedSystem,
    layout: Layout,
    method: Method,
    times: Vec<f64>,
    /// Augmented states, `dimension` values per sample.
    values: Vec<f64>,
    /// Three coefficient vectors per step.
    dense: Vec<f64>,
    pub stats: IntegrationStats,
}

pub(crate) struct Recorder {
    dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    dense: Vec<f64>,
    pub stats: IntegrationStats,
}

impl Recorder {
    fn new(dim: usize, t0: f64, y0: &[f64]) -> Self {
        Self { dim, times: vec![t0], values: y0.to_vec(), dense: Vec::new(), stats: Default::default() }
    }

    pub(crate) fn push(&mut self, t: f64, y: &[f64], dense: Vec<f64>) {
        debug_assert_eq!(dense.len(), 3 * self.dim);
        self.times.push(t);
        self.values.extend_from_slice(y);
        self.dense.extend_from_slice(&dense);
    }
}

/// Weighted max norm. Unlike a mean-square norm it ignores components that
/// stay identically zero, so padding a state with empty cohorts leaves the
/// step sequence unchanged.
pub(crate) fn scaled_norm(v: &[f64], scale: &[f64]) -> f64 {
    v.iter().zip(scale).fold(0.0, |m, (a, s)| m.max((a / s).abs()))
}

/// Starting step estimate from the size of the solution and of its first
/// two derivatives.
pub(crate) fn initial_step(
    f: impl Fn(&[f64], &mut [f64]),
    y: &[f64],
    f0: &[f64],
    order: usize,
    max_step: f64,
    cfg: &IntegratorConfig,
) -> f64 {
    let scale: Vec<f64> = y.iter().map(|v| cfg.abs_tol + cfg.rel_tol * v.abs()).collect();
    let d0 = scaled_norm(y, &scale);
    let d1 = scaled_norm(f0, &scale);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    f(&y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_norm(&diff, &scale) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (order as f64 + 1.0))
    };
    (100.0 * h0).min(h1).min(max_step)
}

/// Clamps phase variables in `[floor, 0)` to zero. Returns how many were
/// clamped and the X-norm of the mass added.
pub(crate) fn apply_negativity_policy(y: &mut [f64], floor: f64, t: f64) -> Result<(usize, f64)> {
    let mut clamped = 0;
    let mut added = 0.0;
    for (index, v) in y.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < floor {
                return Err(Error::NegativityViolation { t, index, value: *v, floor });
            }
            // x has weight 1 and M_i, stored at i + 1, has weight i + 1.
            added -= index.max(1) as f64 * *v;
            *v = 0.0;
            clamped += 1;
        }
    }
    Ok((clamped, added))
}

/// Integrates `sys` from `y0` to `t_end`.
pub fn integrate(
    sys: &TruncatedSystem,
    y0: &State,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = sys.n();
    if y0.m.len() != n + 1 {
        return Err(Error::DimensionMismatch { expected: n + 1, got: y0.m.len() });
    }
    if !y0.is_finite() {
        return Err(Error::InvalidState("initial state has non-finite components".into()));
    }
    if !y0.in_cone() {
        return Err(Error::InvalidState("initial state leaves the nonnegative cone".into()));
    }
    if !(t_end > y0.t) || !t_end.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "t_end = {t_end} must be finite and exceed the initial time {}",
            y0.t
        )));
    }

    let layout = Layout::new(n, &cfg.accumulators);
    let mut y = vec![0.0; layout.dimension()];
    y[..layout.core()].copy_from_slice(&y0.to_vec());
    let mut rec = Recorder::new(layout.dimension(), y0.t, &y);
    let field = Augmented { sys, layout: &layout };
    match cfg.method {
        Method::DormandPrince => dopri::run(&field, y0.t, y, t_end, cfg, &mut rec)?,
        Method::Bdf => bdf::run(&field, y0.t, y, t_end, cfg, &mut rec)?,
    }
    Ok(Trajectory {
        sys: sys.clone(),
        layout,
        method: cfg.method,
        times: rec.times,
        values: rec.values,
        dense: rec.dense,
        stats: rec.stats,
    })
}

impl Trajectory {
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has an initial sample")
    }

    fn dim(&self) -> usize {
        self.layout.dimension()
    }

    /// Augmented vector at sample `i`.
    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    /// Phase point at sample `i`.
    pub fn state(&self, i: usize) -> State {
        State::from_slice(self.times[i], &self.sample(i)[..self.layout.core()])
    }

    pub fn initial_state(&self) -> State {
        self.state(0)
    }

    pub fn final_state(&self) -> State {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }

    fn accumulators_of(&self, y: &[f64]) -> Accumulators {
        let l = &self.layout;
        Accumulators {
            loss: y[l.acc(A_LOSS)],
            removed_load: y[l.acc(A_REMOVED_LOAD)],
            released_load: y[l.acc(A_RELEASED_LOAD)],
            uptake: y[l.acc(A_UPTAKE)],
        }
    }

    pub fn accumulators(&self, i: usize) -> Accumulators {
        self.accumulators_of(self.sample(i))
    }

    pub fn accumulators_at(&self, t: f64) -> Result<Accumulators> {
        Ok(self.accumulators_of(&self.dense_eval_augmented(t)?))
    }

    fn check_range(&self, t: f64) -> Result<()> {
        let (start, end) = (self.t_start(), self.t_end());
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { t, start, end });
        }
        Ok(())
    }

    /// Full augmented vector at `t`: exact at sample times, otherwise the
    /// stepper's continuous extension.
    pub fn dense_eval_augmented(&self, t: f64) -> Result<Vec<f64>> {
        self.check_range(t)?;
        let idx = self.times.partition_point(|&s| s < t);
        if idx < self.len() && self.times[idx] == t {
            return Ok(self.sample(idx).to_vec());
        }
        // t lies strictly inside step idx-1 -> idx.
        let seg = idx - 1;
        let (t0, t1) = (self.times[seg], self.times[idx]);
        let theta = (t - t0) / (t1 - t0);
        let theta1 = 1.0 - theta;
        let d = self.dim();
        let y0 = self.sample(seg);
        let y1 = self.sample(idx);
        let coeffs = &self.dense[seg * 3 * d..(seg + 1) * 3 * d];
        let (r3, rest) = coeffs.split_at(d);
        let (r4, r5) = rest.split_at(d);
        Ok((0..d)
            .map(|i| {
                let delta = y1[i] - y0[i];
                y0[i] + theta * (delta + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])))
            })
            .collect())
    }

    /// Phase point at `t`, clamped to the cone.
    pub fn dense_eval(&self, t: f64) -> Result<State> {
        let y = self.dense_eval_augmented(t)?;
        let core = self.layout.core();
        let mut s = State::from_slice(t, &y[..core]);
        if s.x < 0.0 {
            s.x = 0.0;
        }
        for v in s.m.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(s)
    }
}
