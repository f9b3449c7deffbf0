//! The `(n + 2)`-dimensional truncated vector field and its Jacobian.
//!
//! State layout is `(x, M_0, .., M_n)`. The uptake coefficient `k_n` is
//! masked to zero, so cohort `n` only gains macrophages; removal and death
//! act on every cohort up to and including `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, RateTable, State};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSystem {
    pub params: ModelParams,
    pub rates: RateTable,
}

impl TruncatedSystem {
    pub fn new(params: ModelParams, rates: RateTable) -> Result<Self> {
        params.validate()?;
        if rates.n < 2 {
            return Err(Error::InvalidTruncationOrder(rates.n));
        }
        Ok(Self { params, rates })
    }

    /// Truncation order.
    pub fn n(&self) -> usize {
        self.rates.n
    }

    /// Number of phase variables, `n + 2`.
    pub fn dimension(&self) -> usize {
        self.rates.n + 2
    }

    fn check(&self, s: &State) -> Result<()> {
        if s.m.len() != self.rates.n + 1 {
            return Err(Error::DimensionMismatch { expected: self.rates.n + 1, got: s.m.len() });
        }
        if !s.is_finite() {
            return Err(Error::InvalidState("non-finite component".into()));
        }
        Ok(())
    }

    /// Time derivative `(dx/dt, dM_0/dt, .., dM_n/dt)` at `s`.
    pub fn eval_rhs(&self, s: &State) -> Result<Vec<f64>> {
        self.check(s)?;
        let y = s.to_vec();
        let mut out = vec![0.0; y.len()];
        self.rhs_into(&y, &mut out);
        Ok(out)
    }

    /// Allocation-free vector field on the flat layout. `y` and `out` must
    /// both have length `n + 2`.
    pub fn rhs_into(&self, y: &[f64], out: &mut [f64]) {
        let n = self.rates.n;
        debug_assert_eq!(y.len(), n + 2);
        debug_assert_eq!(out.len(), n + 2);
        let RateTable { k, p, q, .. } = &self.rates;
        let x = y[0];
        let m = &y[1..];

        let mut uptake = 0.0;
        let mut release = 0.0;
        let mut inflow = self.params.r;
        for i in 0..=n {
            let ki = if i < n { k[i] } else { 0.0 };
            let flux = ki * x * m[i];
            out[i + 1] = inflow - flux - (p[i] + q[i]) * m[i];
            inflow = flux;
            uptake += ki * m[i];
            release += i as f64 * q[i] * m[i];
        }
        out[0] = self.params.alpha - x * uptake + release;
    }

    /// Jacobian of the vector field at `s` in banded-plus-border form.
    pub fn eval_jacobian(&self, s: &State) -> Result<BorderedJacobian> {
        self.check(s)?;
        Ok(self.jacobian_of(&s.to_vec()))
    }

    pub(crate) fn jacobian_of(&self, y: &[f64]) -> BorderedJacobian {
        let n = self.rates.n;
        let RateTable { p, q, .. } = &self.rates;
        let x = y[0];
        let m = &y[1..];
        let mut jac = BorderedJacobian::zeros(n);
        let mut xx = 0.0;
        for i in 0..=n {
            let ki = self.rates.k_eff(i);
            xx -= ki * m[i];
            jac.row[i] = -ki * x + i as f64 * q[i];
            jac.diag[i] = -ki * x - p[i] - q[i];
            let gain = if i > 0 { self.rates.k_eff(i - 1) * m[i - 1] } else { 0.0 };
            jac.col[i] = gain - ki * m[i];
            if i > 0 {
                jac.sub[i - 1] = self.rates.k_eff(i - 1) * x;
            }
        }
        jac.corner = xx;
        jac
    }
}

/// A matrix over `(x, M_0, .., M_n)` whose `M` block is lower bidiagonal,
/// with a dense first row and first column.
#[derive(Debug, Clone, PartialEq)]
pub struct BorderedJacobian {
    /// Entry `(x, x)`.
    pub corner: f64,
    /// Entries `(x, M_j)`.
    pub row: Vec<f64>,
    /// Entries `(M_i, x)`.
    pub col: Vec<f64>,
    /// Entries `(M_i, M_i)`.
    pub diag: Vec<f64>,
    /// Entries `(M_i, M_{i-1})` for `i = 1..=n`, stored at `i - 1`.
    pub sub: Vec<f64>,
}

impl BorderedJacobian {
    pub fn zeros(n: usize) -> Self {
        Self {
            corner: 0.0,
            row: vec![0.0; n + 1],
            col: vec![0.0; n + 1],
            diag: vec![0.0; n + 1],
            sub: vec![0.0; n],
        }
    }

    pub fn dimension(&self) -> usize {
        self.diag.len() + 1
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let d = self.dimension();
        let mut a = vec![vec![0.0; d]; d];
        a[0][0] = self.corner;
        for j in 0..d - 1 {
            a[0][j + 1] = self.row[j];
            a[j + 1][0] = self.col[j];
            a[j + 1][j + 1] = self.diag[j];
        }
        for (i, s) in self.sub.iter().enumerate() {
            a[i + 2][i + 1] = *s;
        }
        a
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dimension();
        let mut out = vec![0.0; d];
        out[0] = self.corner * v[0] + self.row.iter().zip(&v[1..]).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..d - 1 {
            out[i + 1] = self.col[i] * v[0] + self.diag[i] * v[i + 1];
            if i > 0 {
                out[i + 1] += self.sub[i - 1] * v[i];
            }
        }
        out
    }

    /// `I - c J`, same structure.
    pub fn shifted_identity(&self, c: f64) -> BorderedJacobian {
        BorderedJacobian {
            corner: 1.0 - c * self.corner,
            row: self.row.iter().map(|v| -c * v).collect(),
            col: self.col.iter().map(|v| -c * v).collect(),
            diag: self.diag.iter().map(|v| 1.0 - c * v).collect(),
            sub: self.sub.iter().map(|v| -c * v).collect(),
        }
    }

    /// Factorization for repeated solves; `None` if a pivot vanishes.
    pub fn factor(&self) -> Option<BorderedFactor> {
        let len = self.diag.len();
        let mut spike = vec![0.0; len];
        let mut prev = 0.0;
        for i in 0..len {
            let d = self.diag[i];
            if d == 0.0 || !d.is_finite() {
                return None;
            }
            let lower = if i > 0 { self.sub[i - 1] * prev } else { 0.0 };
            prev = (self.col[i] - lower) / d;
            spike[i] = prev;
        }
        let schur = self.corner - self.row.iter().zip(&spike).map(|(a, b)| a * b).sum::<f64>();
        if schur == 0.0 || !schur.is_finite() {
            return None;
        }
        Some(BorderedFactor {
            diag: self.diag.clone(),
            sub: self.sub.clone(),
            row: self.row.clone(),
            spike,
            schur,
        })
    }
}

/// Block elimination of a [`BorderedJacobian`]: `M = u - v x` from the
/// bidiagonal block, then a scalar Schur complement for `x`. O(n) per solve.
#[derive(Debug, Clone)]
pub struct BorderedFactor {
    diag: Vec<f64>,
    sub: Vec<f64>,
    row: Vec<f64>,
    spike: Vec<f64>,
    schur: f64,
}

impl BorderedFactor {
    /// Solves in place: `b` holds the right-hand side on entry and the solution on exit.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let len = self.diag.len();
        let mut prev = 0.0;
        for i in 0..len {
            let lower = if i > 0 { self.sub[i - 1] * prev } else { 0.0 };
            prev = (b[i + 1] - lower) / self.diag[i];
            b[i + 1] = prev;
        }
        let dot: f64 = self.row.iter().zip(&b[1..]).map(|(a, u)| a * u).sum();
        let x = (b[0] - dot) / self.schur;
        b[0] = x;
        for i in 0..len {
            b[i + 1] -= self.spike[i] * x;
        }
    }
}
