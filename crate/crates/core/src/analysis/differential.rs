//! Checks that a computed trajectory satisfies the equations pointwise.

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::State;

/// Largest relative defect between a central difference of the dense
/// output and the vector field, over the grid.
///
/// At each `t` the defect is `max_j |D_h y_j(t) - f_j(y(t))| / ‖f(y(t))‖_∞`,
/// with `D_h y = (y(t+h) - y(t-h)) / 2h`. Points where both the difference
/// quotient and the field vanish contribute zero. Every `t ± h` must lie in
/// the trajectory's time range.
pub fn differential_form_check(traj: &Trajectory, grid: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig(format!("step h must be positive, got {h}")));
    }
    let core = traj.layout().core();
    let mut worst: f64 = 0.0;
    for &t in grid {
        let plus = traj.dense_eval_augmented(t + h)?;
        let minus = traj.dense_eval_augmented(t - h)?;
        let mid = traj.dense_eval_augmented(t)?;
        let f = traj.sys.eval_rhs(&State::from_slice(t, &mid[..core]))?;
        let scale = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut defect: f64 = 0.0;
        for j in 0..core {
            let fd = (plus[j] - minus[j]) / (2.0 * h);
            defect = defect.max((fd - f[j]).abs());
        }
        if defect == 0.0 {
            continue;
        }
        worst = worst.max(defect / scale.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}
