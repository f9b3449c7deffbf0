//! Variable-order (1..=5) backward differentiation in quasi-constant step
//! form, stored as a table of modified divided differences.
//!
//! Newton iterations reuse one factorization of `I - c J`, where `J` is the
//! banded-plus-border Jacobian of the phase variables. Accumulators do not
//! feed back into the field, so their Jacobian block is identity and they
//! are updated alongside the phase variables.

use super::{initial_step, scaled_norm, IntegratorConfig, Recorder};
use crate::error::{Error, Result};
use crate::integrator::augmented::Augmented;
use crate::truncation::BorderedFactor;

const MAX_ORDER: usize = 5;
const NEWTON_MAXITER: usize = 4;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const KAPPA: [f64; MAX_ORDER + 1] = [0.0, -0.1850, -1.0 / 9.0, -0.0823, -0.0415, 0.0];

struct Coefficients {
    gamma: [f64; MAX_ORDER + 1],
    alpha: [f64; MAX_ORDER + 1],
    error_const: [f64; MAX_ORDER + 2],
}

impl Coefficients {
    fn new() -> Self {
        let mut gamma = [0.0; MAX_ORDER + 1];
        for k in 1..=MAX_ORDER {
            gamma[k] = gamma[k - 1] + 1.0 / k as f64;
        }
        let mut alpha = [0.0; MAX_ORDER + 1];
        let mut error_const = [0.0; MAX_ORDER + 2];
        for k in 0..=MAX_ORDER {
            alpha[k] = (1.0 - KAPPA[k]) * gamma[k];
            error_const[k] = KAPPA[k] * gamma[k] + 1.0 / (k + 1) as f64;
        }
        error_const[MAX_ORDER + 1] = 1.0 / (MAX_ORDER + 2) as f64;
        Self { gamma, alpha, error_const }
    }
}

fn compute_r(order: usize, factor: f64) -> Vec<Vec<f64>> {
    let size = order + 1;
    let mut m = vec![vec![0.0; size]; size];
    m[0].iter_mut().for_each(|v| *v = 1.0);
    for i in 1..size {
        for j in 1..size {
            m[i][j] = (i as f64 - 1.0 - factor * j as f64) / i as f64;
        }
    }
    for i in 1..size {
        for j in 0..size {
            m[i][j] *= m[i - 1][j];
        }
    }
    m
}

/// Rescales the difference table for a step-size change by `factor`.
fn change_d(d: &mut [Vec<f64>], order: usize, factor: f64) {
    let r = compute_r(order, factor);
    let u = compute_r(order, 1.0);
    let size = order + 1;
    let mut ru = vec![vec![0.0; size]; size];
    for i in 0..size {
        for j in 0..size {
            ru[i][j] = (0..size).map(|l| r[i][l] * u[l][j]).sum();
        }
    }
    let dim = d[0].len();
    let old: Vec<Vec<f64>> = d[..size].to_vec();
    for j in 0..size {
        for c in 0..dim {
            d[j][c] = (0..size).map(|i| ru[i][j] * old[i][c]).sum();
        }
    }
}

struct Newton<'a> {
    field: &'a Augmented<'a>,
    core: usize,
}

impl Newton<'_> {
    /// Simplified Newton for `y = y_pred + d`, `d = c f(y) - psi`.
    /// Returns `(converged, iterations, y, d)`.
    #[allow(clippy::too_many_arguments)]
    fn solve(
        &self,
        y_pred: &[f64],
        c: f64,
        psi: &[f64],
        factor: &BorderedFactor,
        scale: &[f64],
        tol: f64,
        rec: &mut Recorder,
    ) -> (bool, usize, Vec<f64>, Vec<f64>) {
        let dim = y_pred.len();
        let mut y = y_pred.to_vec();
        let mut d = vec![0.0; dim];
        let mut f = vec![0.0; dim];
        let mut dy = vec![0.0; dim];
        let mut dy_norm_old: Option<f64> = None;
        let mut converged = false;
        let mut iters = 0;
        for k in 0..NEWTON_MAXITER {
            iters = k + 1;
            self.field.rhs(&y, &mut f);
            rec.stats.rhs_evals += 1;
            if f.iter().any(|v| !v.is_finite()) {
                break;
            }
            for i in 0..dim {
                dy[i] = c * f[i] - psi[i] - d[i];
            }
            factor.solve_in_place(&mut dy[..self.core]);
            let dy_norm = scaled_norm(&dy, scale);
            let rate = dy_norm_old.map(|old| dy_norm / old);
            if let Some(rate) = rate {
                if rate >= 1.0
                    || rate.powi((NEWTON_MAXITER - k) as i32) / (1.0 - rate) * dy_norm > tol
                {
                    break;
                }
            }
            for i in 0..dim {
                y[i] += dy[i];
                d[i] += dy[i];
            }
            if dy_norm == 0.0 || rate.is_some_and(|rate| rate / (1.0 - rate) * dy_norm < tol) {
                converged = true;
                break;
            }
            dy_norm_old = Some(dy_norm);
        }
        (converged, iters, y, d)
    }
}

pub(crate) fn run(
    field: &Augmented<'_>,
    t0: f64,
    y0: Vec<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
    rec: &mut Recorder,
) -> Result<()> {
    let dim = y0.len();
    let core = field.layout.core();
    let floor = cfg.floor();
    let coef = Coefficients::new();
    let newton = Newton { field, core };
    let newton_tol = (10.0 * f64::EPSILON / cfg.rel_tol).max(0.03f64.min(cfg.rel_tol.sqrt()));

    let mut f_old = vec![0.0; dim];
    field.rhs(&y0, &mut f_old);
    rec.stats.rhs_evals += 1;

    let span = t_end - t0;
    let max_step = cfg.max_step.min(span);
    let mut h_abs = match cfg.initial_step {
        Some(h) => h.min(max_step),
        None => initial_step(|z, out| field.rhs(z, out), &y0, &f_old, 1, max_step, cfg),
    };
    rec.stats.rhs_evals += 1;

    let mut d: Vec<Vec<f64>> = vec![vec![0.0; dim]; MAX_ORDER + 3];
    d[0].copy_from_slice(&y0);
    for i in 0..dim {
        d[1][i] = f_old[i] * h_abs;
    }
    let mut t = t0;
    let mut y = y0;
    let mut order = 1usize;
    let mut n_equal_steps = 0usize;
    let mut jac = field.sys.jacobian_of(&y[..core]);
    rec.stats.jacobian_evals += 1;
    let mut lu: Option<BorderedFactor> = None;
    let mut steps = 0usize;

    while t < t_end {
        if steps >= cfg.max_steps {
            return Err(Error::TooManySteps(cfg.max_steps));
        }
        steps += 1;
        let min_step = 10.0 * (next_up(t) - t);
        if h_abs > max_step {
            change_d(&mut d, order, max_step / h_abs);
            h_abs = max_step;
            n_equal_steps = 0;
            lu = None;
        } else if h_abs < min_step {
            change_d(&mut d, order, min_step / h_abs);
            h_abs = min_step;
            n_equal_steps = 0;
            lu = None;
        }

        let mut current_jac = false;
        let (t_new, y_new, d_corr, error_norm, safety, scale) = loop {
            if h_abs < min_step {
                return Err(Error::StepSizeUnderflow { t, h: h_abs });
            }
            let mut t_new = t + h_abs;
            if t_new >= t_end || t + 1.01 * h_abs >= t_end {
                t_new = t_end;
                change_d(&mut d, order, (t_new - t) / h_abs);
                n_equal_steps = 0;
                lu = None;
            }
            let h = t_new - t;
            h_abs = h;

            let mut y_pred = vec![0.0; dim];
            for row in d.iter().take(order + 1) {
                for (p, v) in y_pred.iter_mut().zip(row) {
                    *p += v;
                }
            }
            let scale: Vec<f64> = y_pred.iter().map(|v| cfg.abs_tol + cfg.rel_tol * v.abs()).collect();
            let mut psi = vec![0.0; dim];
            for (j, row) in d.iter().enumerate().take(order + 1).skip(1) {
                let g = coef.gamma[j] / coef.alpha[order];
                for (p, v) in psi.iter_mut().zip(row) {
                    *p += g * v;
                }
            }
            let c = h / coef.alpha[order];

            let mut outcome = None;
            loop {
                if lu.is_none() {
                    lu = jac.shifted_identity(c).factor();
                }
                let Some(factor) = lu.as_ref() else {
                    break;
                };
                let (converged, n_iter, y_new, d_corr) =
                    newton.solve(&y_pred, c, &psi, factor, &scale, newton_tol, rec);
                if converged {
                    outcome = Some((n_iter, y_new, d_corr));
                    break;
                }
                if current_jac {
                    break;
                }
                jac = field.sys.jacobian_of(&y_pred[..core]);
                rec.stats.jacobian_evals += 1;
                lu = None;
                current_jac = true;
            }

            let Some((n_iter, y_new, d_corr)) = outcome else {
                h_abs *= 0.5;
                change_d(&mut d, order, 0.5);
                n_equal_steps = 0;
                lu = None;
                rec.stats.rejected += 1;
                continue;
            };

            let safety = 0.9 * (2 * NEWTON_MAXITER + 1) as f64 / (2 * NEWTON_MAXITER + n_iter) as f64;
            let scale: Vec<f64> = y_new.iter().map(|v| cfg.abs_tol + cfg.rel_tol * v.abs()).collect();
            let err: Vec<f64> = d_corr.iter().map(|v| coef.error_const[order] * v).collect();
            let error_norm = scaled_norm(&err, &scale);
            if error_norm > 1.0 {
                let factor = MIN_FACTOR.max(safety * error_norm.powf(-1.0 / (order as f64 + 1.0)));
                h_abs *= factor;
                change_d(&mut d, order, factor);
                n_equal_steps = 0;
                rec.stats.rejected += 1;
                continue;
            }
            break (t_new, y_new, d_corr, error_norm, safety, scale);
        };

        rec.stats.steps += 1;
        n_equal_steps += 1;
        let h = t_new - t;

        // D^{j+1} y_n = D^j y_n - D^j y_{n-1}, with d_corr = D^{order+1} y_n.
        for i in 0..dim {
            d[order + 2][i] = d_corr[i] - d[order + 1][i];
            d[order + 1][i] = d_corr[i];
        }
        for j in (0..=order).rev() {
            let (lo, hi) = d.split_at_mut(j + 1);
            for (a, b) in lo[j].iter_mut().zip(&hi[0]) {
                *a += b;
            }
        }

        let mut y_acc = y_new;
        let (clamped, added) = super::apply_negativity_policy(&mut y_acc[..core], floor, t_new)?;
        if clamped > 0 {
            rec.stats.clamped += clamped;
            rec.stats.clamped_mass += added;
            d[0][..core].copy_from_slice(&y_acc[..core]);
        }

        let mut f_new = vec![0.0; dim];
        field.rhs(&y_acc, &mut f_new);
        rec.stats.rhs_evals += 1;
        let mut dense = vec![0.0; 3 * dim];
        for i in 0..dim {
            let delta = y_acc[i] - y[i];
            let b = h * f_old[i] - delta;
            dense[i] = b;
            dense[dim + i] = delta - h * f_new[i] - b;
        }
        rec.push(t_new, &y_acc, dense);
        t = t_new;
        y = y_acc;
        f_old = f_new;

        if t >= t_end {
            break;
        }
        if n_equal_steps < order + 1 {
            continue;
        }

        let error_m_norm = if order > 1 {
            let e: Vec<f64> = d[order].iter().map(|v| coef.error_const[order - 1] * v).collect();
            scaled_norm(&e, &scale)
        } else {
            f64::INFINITY
        };
        let error_p_norm = if order < MAX_ORDER {
            let e: Vec<f64> = d[order + 2].iter().map(|v| coef.error_const[order + 1] * v).collect();
            scaled_norm(&e, &scale)
        } else {
            f64::INFINITY
        };
        let norms = [error_m_norm, error_norm, error_p_norm];
        let mut best = 0;
        let mut best_factor = f64::NEG_INFINITY;
        for (idx, e) in norms.iter().enumerate() {
            let expo = -1.0 / (order + idx) as f64;
            let f = if *e == 0.0 { f64::INFINITY } else { e.powf(expo) };
            if f > best_factor {
                best_factor = f;
                best = idx;
            }
        }
        order = order + best - 1;
        let factor = MAX_FACTOR.min(safety * best_factor);
        h_abs *= factor;
        change_d(&mut d, order, factor);
        n_equal_steps = 0;
        lu = None;
    }
    Ok(())
}

fn next_up(t: f64) -> f64 {
    if t == 0.0 {
        f64::from_bits(1)
    } else if t > 0.0 {
        f64::from_bits(t.to_bits() + 1)
    } else {
        f64::from_bits(t.to_bits() - 1)
    }
}
