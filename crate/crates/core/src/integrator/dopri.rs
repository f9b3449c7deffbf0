//! Dormand–Prince 5(4) with Hairer's step-size controller and 4th-order
//! continuous extension. The field is autonomous, so stage times are not
//! tracked.

use super::{initial_step, scaled_norm, IntegratorConfig, Recorder};
use crate::error::{Error, Result};
use crate::integrator::augmented::Augmented;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

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
    let eval = |y: &[f64], out: &mut [f64], rec: &mut Recorder| {
        field.rhs(y, out);
        rec.stats.rhs_evals += 1;
    };

    let mut y = y0;
    let mut t = t0;
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut err_vec = vec![0.0; dim];
    let mut scale = vec![0.0; dim];

    eval(&y, &mut k1, rec);
    let span = t_end - t0;
    let max_step = cfg.max_step.min(span);
    let mut h = match cfg.initial_step {
        Some(h) => h.min(max_step),
        None => initial_step(|z, out| field.rhs(z, out), &y, &k1, 5, max_step, cfg),
    };
    rec.stats.rhs_evals += 1;

    let expo1 = 0.2 - BETA * 0.75;
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;

    loop {
        if steps >= cfg.max_steps {
            return Err(Error::TooManySteps(cfg.max_steps));
        }
        if 0.1 * h.abs() <= t.abs().max(1.0) * f64::EPSILON {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let last = t + 1.01 * h >= t_end;
        if last {
            h = t_end - t;
        }
        steps += 1;

        for i in 0..dim {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        eval(&stage, &mut k2, rec);
        for i in 0..dim {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        eval(&stage, &mut k3, rec);
        for i in 0..dim {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        eval(&stage, &mut k4, rec);
        for i in 0..dim {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        eval(&stage, &mut k5, rec);
        for i in 0..dim {
            stage[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        eval(&stage, &mut k6, rec);
        for i in 0..dim {
            y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        eval(&y_new, &mut k7, rec);

        for i in 0..dim {
            err_vec[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            scale[i] = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
        }
        let err = scaled_norm(&err_vec, &scale);
        if !err.is_finite() {
            h *= FAC_MIN;
            last_rejected = true;
            rec.stats.rejected += 1;
            continue;
        }

        let fac11 = err.powf(expo1);
        let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        let mut h_new = h / fac;

        if err <= 1.0 {
            facold = err.max(1e-4);
            rec.stats.steps += 1;

            // Continuous extension coefficients, stored before any clamping.
            let mut dense = vec![0.0; 3 * dim];
            for i in 0..dim {
                let delta = y_new[i] - y[i];
                let bspl = h * k1[i] - delta;
                dense[i] = bspl;
                dense[dim + i] = delta - h * k7[i] - bspl;
                dense[2 * dim + i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }

            let t_new = if last { t_end } else { t + h };
            let (clamped, added) = super::apply_negativity_policy(&mut y_new[..core], floor, t_new)?;
            std::mem::swap(&mut y, &mut y_new);
            if clamped > 0 {
                rec.stats.clamped += clamped;
                rec.stats.clamped_mass += added;
                eval(&y, &mut k1, rec);
            } else {
                std::mem::swap(&mut k1, &mut k7);
            }
            t = t_new;
            rec.push(t, &y, dense);
            if last {
                return Ok(());
            }
            h_new = h_new.min(max_step);
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
        } else {
            h_new = h / (1.0 / FAC_MIN).min(fac11 / SAFE);
            last_rejected = true;
            rec.stats.rejected += 1;
        }
        h = h_new;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_weights_annihilate_constants() {
        // The continuous extension must reproduce linear functions exactly,
        // which keeps linear balance laws exact between steps.
        let s = D1 + D3 + D4 + D5 + D6 + D7;
        assert!(s.abs() < 1e-14, "{s}");
        let e = E1 + E3 + E4 + E5 + E6 + E7;
        assert!(e.abs() < 1e-15);
        let b = A71 + A73 + A74 + A75 + A76;
        assert!((b - 1.0).abs() < 1e-15);
    }
}
