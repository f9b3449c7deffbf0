//! Domain types shared by every other module: supply rates, coefficient
//! families and their realization, truncated states, weighted norms and
//! moment weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// External supply rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Supply rate of new, empty macrophages.
    pub r: f64,
    /// Quartz inhalation rate.
    pub alpha: f64,
}

impl ModelParams {
    pub fn new(r: f64, alpha: f64) -> Result<Self> {
        let params = Self { r, alpha };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::InvalidParams { field: "r", value: self.r });
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidParams { field: "alpha", value: self.alpha });
        }
        Ok(())
    }

    /// Total external supply `r + alpha`.
    pub fn supply(&self) -> f64 {
        self.r + self.alpha
    }
}

/// How a table family continues past its explicit entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    #[default]
    ConstantExtend,
    ZeroExtend,
}

/// A rule producing one coefficient sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientFamily {
    /// `amplitude * (i + 1)^exponent`.
    PowerLaw { amplitude: f64, exponent: f64 },
    Constant { value: f64 },
    Table {
        values: Vec<f64>,
        #[serde(default)]
        tail: TailRule,
    },
}

/// Which sequence a family is realized for; the admissible exponents differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientRole {
    /// Phagocytosis rates `k_i`.
    Uptake,
    /// Escalator removal rates `p_i`.
    Removal,
    /// Death/release rates `q_i`.
    Death,
}

impl CoefficientRole {
    fn field(self) -> &'static str {
        match self {
            CoefficientRole::Uptake => "k",
            CoefficientRole::Removal => "p",
            CoefficientRole::Death => "q",
        }
    }
}

impl CoefficientFamily {
    pub fn power_law(amplitude: f64, exponent: f64) -> Self {
        CoefficientFamily::PowerLaw { amplitude, exponent }
    }

    pub fn constant(value: f64) -> Self {
        CoefficientFamily::Constant { value }
    }

    pub fn table(values: Vec<f64>, tail: TailRule) -> Self {
        CoefficientFamily::Table { values, tail }
    }

    /// Checks the family invariants for the given role.
    pub fn validate(&self, role: CoefficientRole) -> Result<()> {
        let field = role.field();
        match self {
            CoefficientFamily::PowerLaw { amplitude, exponent } => {
                if !amplitude.is_finite() {
                    return Err(Error::InvalidFamily {
                        field,
                        reason: format!("amplitude {amplitude} is not finite"),
                    });
                }
                if *amplitude < 0.0 {
                    return Err(Error::NegativeAmplitude { field, value: *amplitude });
                }
                let ok = match role {
                    CoefficientRole::Uptake => (0.0..=1.0).contains(exponent),
                    CoefficientRole::Removal => *exponent == 0.0,
                    CoefficientRole::Death => exponent.is_finite() && *exponent >= 0.0,
                };
                if !ok {
                    let expected = match role {
                        CoefficientRole::Uptake => "in [0, 1]",
                        CoefficientRole::Removal => "0 (bounded removal)",
                        CoefficientRole::Death => "finite and >= 0",
                    };
                    return Err(Error::InvalidFamily {
                        field,
                        reason: format!("exponent {exponent} must be {expected}"),
                    });
                }
            }
            CoefficientFamily::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidFamily {
                        field,
                        reason: format!("value {value} is not finite"),
                    });
                }
                if *value < 0.0 {
                    return Err(Error::NegativeAmplitude { field, value: *value });
                }
            }
            CoefficientFamily::Table { values, .. } => {
                if values.is_empty() {
                    return Err(Error::InvalidFamily {
                        field,
                        reason: "table has no entries".into(),
                    });
                }
                for v in values {
                    if !v.is_finite() {
                        return Err(Error::InvalidFamily {
                            field,
                            reason: format!("table entry {v} is not finite"),
                        });
                    }
                    if *v < 0.0 {
                        return Err(Error::NegativeAmplitude { field, value: *v });
                    }
                }
            }
        }
        Ok(())
    }

    /// Coefficient for cohort `i`.
    pub fn value_at(&self, i: usize) -> f64 {
        match self {
            CoefficientFamily::PowerLaw { amplitude, exponent } => {
                if *exponent == 0.0 {
                    *amplitude
                } else {
                    amplitude * ((i + 1) as f64).powf(*exponent)
                }
            }
            CoefficientFamily::Constant { value } => *value,
            CoefficientFamily::Table { values, tail } => match values.get(i) {
                Some(v) => *v,
                None => match tail {
                    TailRule::ConstantExtend => *values.last().unwrap_or(&0.0),
                    TailRule::ZeroExtend => 0.0,
                },
            },
        }
    }

    /// Growth exponent of the family.
    pub fn growth_exponent(&self) -> f64 {
        match self {
            CoefficientFamily::PowerLaw { exponent, .. } => *exponent,
            CoefficientFamily::Constant { .. } => 0.0,
            // Finite table plus a constant or zero tail: bounded.
            CoefficientFamily::Table { .. } => 0.0,
        }
    }
}

/// Realized coefficient sequences `k_0..k_n`, `p_0..p_n`, `q_0..q_n`.
///
/// `k_n` is stored but the truncated vector field treats it as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub n: usize,
    pub k: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Growth exponent of `k`, if known.
    pub k_growth: Option<f64>,
}

impl RateTable {
    /// Builds a table from explicit sequences of length `n + 1`.
    pub fn from_sequences(k: Vec<f64>, p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let len = k.len();
        if len < 3 {
            return Err(Error::InvalidTruncationOrder(len.saturating_sub(1)));
        }
        for (field, seq) in [("p", &p), ("q", &q)] {
            if seq.len() != len {
                return Err(Error::InvalidFamily {
                    field,
                    reason: format!("length {} differs from k length {len}", seq.len()),
                });
            }
        }
        for (field, seq) in [("k", &k), ("p", &p), ("q", &q)] {
            for v in seq.iter() {
                if !v.is_finite() {
                    return Err(Error::InvalidFamily {
                        field,
                        reason: format!("entry {v} is not finite"),
                    });
                }
                if *v < 0.0 {
                    return Err(Error::NegativeAmplitude { field, value: *v });
                }
            }
        }
        Ok(Self { n: len - 1, k, p, q, k_growth: None })
    }

    /// `k_i` as seen by the truncated flow (zero for `i >= n`).
    #[inline]
    pub fn k_eff(&self, i: usize) -> f64 {
        if i < self.n {
            self.k[i]
        } else {
            0.0
        }
    }

    /// Exponent used for the `1 + gamma` weighted norm: the `k` growth
    /// exponent when known, otherwise the upper end of the uniqueness range.
    pub fn uniqueness_gamma(&self) -> f64 {
        self.k_growth.unwrap_or(1.0)
    }
}

/// Instantiates the three coefficient families up to truncation order `n`.
pub fn realize_coefficients(
    family_k: &CoefficientFamily,
    family_p: &CoefficientFamily,
    family_q: &CoefficientFamily,
    n: usize,
) -> Result<RateTable> {
    if n < 2 {
        return Err(Error::InvalidTruncationOrder(n));
    }
    family_k.validate(CoefficientRole::Uptake)?;
    family_p.validate(CoefficientRole::Removal)?;
    family_q.validate(CoefficientRole::Death)?;
    let realize = |f: &CoefficientFamily| (0..=n).map(|i| f.value_at(i)).collect::<Vec<_>>();
    Ok(RateTable {
        n,
        k: realize(family_k),
        p: realize(family_p),
        q: realize(family_q),
        k_growth: Some(family_k.growth_exponent()),
    })
}

/// The three coefficient families of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFamilies {
    pub k: CoefficientFamily,
    pub p: CoefficientFamily,
    pub q: CoefficientFamily,
}

impl CoefficientFamilies {
    pub fn new(k: CoefficientFamily, p: CoefficientFamily, q: CoefficientFamily) -> Self {
        Self { k, p, q }
    }

    pub fn realize(&self, n: usize) -> Result<RateTable> {
        realize_coefficients(&self.k, &self.p, &self.q, n)
    }
}

/// Cohort profile of initial data, defined for every cohort index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialProfile {
    /// Listed values, zero beyond the list.
    Explicit { m: Vec<f64> },
    /// `M_{0i} = amplitude * ratio^i`.
    Geometric { amplitude: f64, ratio: f64 },
}

/// Initial data for the untruncated system, projected onto any truncation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub x0: f64,
    #[serde(flatten)]
    pub profile: InitialProfile,
}

impl InitialData {
    pub fn explicit(x0: f64, m: Vec<f64>) -> Self {
        Self { x0, profile: InitialProfile::Explicit { m } }
    }

    pub fn geometric(x0: f64, amplitude: f64, ratio: f64) -> Self {
        Self { x0, profile: InitialProfile::Geometric { amplitude, ratio } }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x0.is_finite() && self.x0 >= 0.0) {
            return Err(Error::InvalidState(format!("x0 = {} must be finite and >= 0", self.x0)));
        }
        match &self.profile {
            InitialProfile::Explicit { m } => {
                if let Some(v) = m.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(Error::InvalidState(format!("cohort value {v} must be finite and >= 0")));
                }
            }
            InitialProfile::Geometric { amplitude, ratio } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::InvalidState(format!("amplitude {amplitude} must be finite and >= 0")));
                }
                if !(*ratio >= 0.0 && *ratio < 1.0) {
                    return Err(Error::InvalidState(format!("ratio {ratio} must lie in [0, 1)")));
                }
            }
        }
        Ok(())
    }

    pub fn cohort(&self, i: usize) -> f64 {
        match &self.profile {
            InitialProfile::Explicit { m } => m.get(i).copied().unwrap_or(0.0),
            InitialProfile::Geometric { amplitude, ratio } => amplitude * ratio.powi(i as i32),
        }
    }

    /// Projection onto truncation order `n` at time zero.
    pub fn state(&self, n: usize) -> State {
        State { t: 0.0, x: self.x0, m: (0..=n).map(|i| self.cohort(i)).collect() }
    }
}

/// A phase point `(x, M_0, .., M_n)` of the truncated system at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    /// Free quartz concentration.
    pub x: f64,
    /// Cohort concentrations; `m[i]` carries `i` particles per macrophage.
    pub m: Vec<f64>,
}

impl State {
    pub fn new(t: f64, x: f64, m: Vec<f64>) -> Self {
        Self { t, x, m }
    }

    pub fn zeros(n: usize) -> Self {
        Self { t: 0.0, x: 0.0, m: vec![0.0; n + 1] }
    }

    /// Truncation order this state belongs to.
    pub fn order(&self) -> usize {
        self.m.len().saturating_sub(1)
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.is_finite() && self.m.iter().all(|v| v.is_finite())
    }

    /// Membership in the nonnegative cone.
    pub fn in_cone(&self) -> bool {
        self.x >= 0.0 && self.m.iter().all(|&v| v >= 0.0)
    }

    /// Flat layout `(x, M_0, .., M_n)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.m.len() + 1);
        v.push(self.x);
        v.extend_from_slice(&self.m);
        v
    }

    pub fn from_slice(t: f64, y: &[f64]) -> Self {
        Self { t, x: y[0], m: y[1..].to_vec() }
    }

    /// Projection onto truncation order `n`: drops cohorts above `n`, pads with zeros.
    pub fn project(&self, n: usize) -> State {
        let mut m = vec![0.0; n + 1];
        let len = self.m.len().min(n + 1);
        m[..len].copy_from_slice(&self.m[..len]);
        State { t: self.t, x: self.x, m }
    }
}

/// Weighted norm `|x| + sum_j (j + 1)^mu |M_j|`; `mu = 1` is the X-norm.
pub fn norm_mu(s: &State, mu: f64) -> f64 {
    s.x.abs()
        + s.m
            .iter()
            .enumerate()
            .map(|(j, v)| cohort_weight(j, mu) * v.abs())
            .sum::<f64>()
}

/// Weighted norm of `a - b`, padding the shorter cohort vector with zeros.
pub fn norm_mu_diff(a: &State, b: &State, mu: f64) -> f64 {
    let len = a.m.len().max(b.m.len());
    let mut total = (a.x - b.x).abs();
    for j in 0..len {
        let d = a.m.get(j).copied().unwrap_or(0.0) - b.m.get(j).copied().unwrap_or(0.0);
        total += cohort_weight(j, mu) * d.abs();
    }
    total
}

#[inline]
fn cohort_weight(j: usize, mu: f64) -> f64 {
    let w = (j + 1) as f64;
    if mu == 1.0 {
        w
    } else {
        w.powf(mu)
    }
}

/// Weight sequence `g_0..g_n` with the constants from the existence hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentWeights {
    pub g: Vec<f64>,
    /// Lower bound on the increments `g_{i+1} - g_i`.
    pub delta: f64,
    /// Constant with `(g_{i+1} - g_i) k_i <= c g_i`.
    pub c: f64,
}

impl MomentWeights {
    pub fn new(g: Vec<f64>, delta: f64, c: f64) -> Self {
        Self { g, delta, c }
    }

    /// `g_i = 1`.
    pub fn constant(n: usize) -> Self {
        Self { g: vec![1.0; n + 1], delta: 0.0, c: 0.0 }
    }

    /// `g_i = i`.
    pub fn linear(n: usize) -> Self {
        Self { g: (0..=n).map(|i| i as f64).collect(), delta: 1.0, c: 0.0 }
    }

    /// `g_i = (i + 1)^power` with `delta` the smallest increment and `c` the
    /// smallest admissible constant for `rates`.
    pub fn power(rates: &RateTable, power: f64) -> Self {
        let g: Vec<f64> = (0..=rates.n).map(|i| ((i + 1) as f64).powf(power)).collect();
        let delta = g.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let mut w = Self { g, delta, c: 0.0 };
        w.c = c_min(&w.g, rates);
        w
    }
}

/// Outcome of [`validate_weights`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightCheck {
    pub delta_ok: bool,
    /// Smallest `C` with `(g_{i+1} - g_i) k_i <= C g_i` for all `i < n`.
    pub c_min: f64,
}

/// Checks the increment and growth hypotheses of `w` against `rates`.
pub fn validate_weights(w: &MomentWeights, rates: &RateTable) -> Result<WeightCheck> {
    if w.g.len() != rates.n + 1 {
        return Err(Error::DimensionMismatch { expected: rates.n + 1, got: w.g.len() });
    }
    if let Some((index, &value)) = w.g.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeWeight { index, value });
    }
    let delta_ok = w.delta > 0.0 && w.g.windows(2).all(|pair| pair[1] - pair[0] >= w.delta);
    Ok(WeightCheck { delta_ok, c_min: c_min(&w.g, rates) })
}

fn c_min(g: &[f64], rates: &RateTable) -> f64 {
    (0..rates.n)
        .map(|i| {
            let num = (g[i + 1] - g[i]) * rates.k[i];
            if num == 0.0 {
                0.0
            } else {
                num / g[i]
            }
        })
        .fold(0.0, f64::max)
}
