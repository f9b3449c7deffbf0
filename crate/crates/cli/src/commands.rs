//! One function per subcommand. Each writes its artifacts and returns the
//! checks and results that go into the summary.

use serde_json::json;
use silicosis_core::analysis::{
    convergence_study, differential_form_check, find_equilibrium, invariance_check,
    semigroup_residual, uniform_grid, uniqueness_probe,
};
use silicosis_core::moments::{
    free_quartz_residual, gronwall_check, macrophage_balance_residual, mass_balance_residual,
    moment_identity_residual, quartz_balance_residual,
};
use silicosis_core::{
    integrate, norm_mu, norm_mu_diff, Error, IntegratorConfig, Method, MomentWeights, State,
    Trajectory, TruncatedSystem,
};

use crate::config::Experiment;
use crate::output::{Check, OutDir, WriteError};

pub struct Outcome {
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
}

fn single(exp: &Experiment) -> (&TruncatedSystem, &State) {
    let (sys, y0) = exp.single.as_ref().expect("single-run command prepared without a system");
    (sys, y0)
}

fn row_times(exp: &Experiment, traj: &Trajectory) -> Vec<f64> {
    match exp.config.output.grid_points {
        Some(points) => uniform_grid(traj.t_end(), points),
        None => traj.times().to_vec(),
    }
}

fn write_trajectories(exp: &Experiment, out: &mut OutDir, traj: &Trajectory) -> Result<(), WriteError> {
    let times = row_times(exp, traj);
    out.write_trajectory("trajectory.csv", traj, &times, exp.config.output.cohort_columns)?;
    if exp.config.output.full_state {
        out.write_trajectory("trajectory_full.csv", traj, &times, usize::MAX)?;
    }
    Ok(())
}

/// Cone membership and the linear norm bound `‖y(t)‖ <= ‖y0‖ + (α + r) t`.
fn state_checks(traj: &Trajectory, slack: f64) -> Vec<Check> {
    let y0 = traj.initial_state();
    let base = norm_mu(&y0, 1.0);
    let supply = traj.sys.params.supply();
    let mut in_cone = true;
    let mut excess = f64::NEG_INFINITY;
    for s in traj.states() {
        in_cone &= s.in_cone();
        excess = excess.max(norm_mu(&s, 1.0) - base - supply * (s.t - y0.t));
    }
    vec![
        Check::holds("cone", "integrate", in_cone),
        Check::at_most("norm_bound_excess", "norm_mu", excess, slack),
    ]
}

fn stats_json(traj: &Trajectory) -> serde_json::Value {
    json!({
        "method": traj.method(),
        "samples": traj.len(),
        "stats": traj.stats,
    })
}

pub fn simulate(exp: &Experiment, out: &mut OutDir) -> Result<Outcome, WriteError> {
    let (sys, y0) = single(exp);
    let t_end = exp.t_end.expect("t_end validated");
    let traj = integrate(sys, y0, t_end, &exp.config.integrator)?;
    write_trajectories(exp, out, &traj)?;

    let mut checks = state_checks(&traj, exp.config.checks.norm_slack);
    let mass = mass_balance_residual(&traj, t_end)?;
    checks.push(Check::at_most("mass_balance", "mass_balance_residual", mass.abs(), exp.config.checks.tolerance));
    let fin = traj.final_state();
    let results = json!({
        "n": sys.n(),
        "t_end": t_end,
        "run": stats_json(&traj),
        "final": { "x": fin.x, "x_norm": norm_mu(&fin, 1.0) },
        "accumulators": traj.accumulators(traj.len() - 1),
    });
    Ok(Outcome { checks, results })
}

pub fn verify(exp: &Experiment, out: &mut OutDir) -> Result<Outcome, WriteError> {
    let (sys, y0) = single(exp);
    let t_end = exp.t_end.expect("t_end validated");
    let c = &exp.config.checks;
    let cfg = exp.config.integrator.clone().with_cohort_integrals(true);
    let traj = integrate(sys, y0, t_end, &cfg)?;
    write_trajectories(exp, out, &traj)?;

    let t0 = y0.t;
    let times: Vec<f64> =
        (1..=c.sample_times).map(|j| t0 + t_end * j as f64 / c.sample_times as f64).collect();
    let mut checks = state_checks(&traj, c.norm_slack);

    type Balance = fn(&Trajectory, f64) -> silicosis_core::Result<f64>;
    let balances: [(&str, &'static str, Balance); 4] = [
        ("mass_balance", "mass_balance_residual", mass_balance_residual),
        ("macrophage_balance", "macrophage_balance_residual", macrophage_balance_residual),
        ("quartz_balance", "quartz_balance_residual", quartz_balance_residual),
        ("free_quartz_balance", "free_quartz_residual", free_quartz_residual),
    ];
    for (name, op, f) in balances {
        let mut worst: f64 = 0.0;
        for &t in &times {
            worst = worst.max(f(&traj, t)?.abs());
        }
        checks.push(Check::at_most(name, op, worst, c.tolerance));
    }

    let gamma = sys.rates.uniqueness_gamma().clamp(0.0, 1.0);
    let n = sys.n();
    let weights = [
        ("moment_identity_g_one", MomentWeights::constant(n)),
        ("moment_identity_g_linear", MomentWeights::linear(n)),
        ("moment_identity_g_power", MomentWeights::power(&sys.rates, 1.0 + gamma)),
    ];
    for (name, w) in &weights {
        let mut worst: f64 = 0.0;
        for &t in &times {
            worst = worst.max(moment_identity_residual(&traj, w, 1, t0, t)?.abs());
        }
        checks.push(Check::at_most(*name, "moment_identity_residual", worst, c.tolerance));
    }

    let gronwall = gronwall_check(&traj, &MomentWeights::power(&sys.rates, 1.0 + gamma))?;
    checks.push(Check::holds("gronwall_envelope", "gronwall_check", gronwall.ok));
    checks.push(Check::above("gronwall_margin", "gronwall_check", gronwall.margin, 0.0));
    let inv = invariance_check(&traj, gamma)?;
    checks.push(Check::holds("invariance", "invariance_check", inv.ok));

    let interior: Vec<f64> = times.iter().copied().filter(|&t| t < t0 + t_end).collect();
    let interior = if interior.is_empty() { vec![t0 + 0.5 * t_end] } else { interior };
    let defect = differential_form_check(&traj, &interior, c.differential_step)?;
    checks.push(Check::at_most("differential_form", "differential_form_check", defect, c.differential_tolerance));

    let mut uniqueness = None;
    if c.uniqueness {
        let other = match cfg.method {
            Method::DormandPrince => Method::Bdf,
            Method::Bdf => Method::DormandPrince,
        };
        let gap = uniqueness_probe(sys, y0, t_end, &exp.config.integrator, &cfg.clone().with_method(other))?;
        checks.push(Check::at_most("uniqueness_gap", "uniqueness_probe", gap, c.uniqueness_tolerance));
        uniqueness = Some(gap);
    }

    let results = json!({
        "n": n,
        "t_end": t_end,
        "gamma": gamma,
        "sample_times": times,
        "run": stats_json(&traj),
        "gronwall": gronwall,
        "invariance": inv,
        "differential_defect": defect,
        "uniqueness_gap": uniqueness,
    });
    Ok(Outcome { checks, results })
}

pub fn converge(exp: &Experiment, out: &mut OutDir) -> Result<Outcome, WriteError> {
    let cfg = &exp.config;
    let ladder = cfg.n_ladder.as_ref().expect("ladder validated");
    let t_end = exp.t_end.expect("t_end validated");
    let rep = convergence_study(
        &cfg.model,
        &cfg.coefficients,
        &cfg.initial,
        ladder,
        t_end,
        &cfg.integrator,
        cfg.convergence.grid_points,
    )?;
    let header: Vec<String> = ["n_lo", "n_hi", "gap", "x_gap"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<f64>> = ladder
        .windows(2)
        .zip(rep.gaps.iter().zip(&rep.x_gaps))
        .map(|(w, (g, xg))| vec![w[0] as f64, w[1] as f64, *g, *xg])
        .collect();
    out.write_table("gaps.csv", &header, &rows)?;

    let mut checks = vec![Check::holds("gaps_decreasing", "convergence_study", rep.decreasing)];
    if let Some(tol) = cfg.convergence.final_gap_tolerance {
        let last = *rep.gaps.last().expect("ladder has two rungs");
        checks.push(Check::at_most("final_gap", "convergence_study", last, tol));
    }
    let results = json!({
        "n_ladder": rep.n_ladder,
        "gaps": rep.gaps,
        "x_gaps": rep.x_gaps,
        "t_end": t_end,
        "grid_points": rep.grid.len(),
    });
    Ok(Outcome { checks, results })
}

pub fn equilibrium(exp: &Experiment, out: &mut OutDir) -> Result<Outcome, WriteError> {
    let (sys, _) = single(exp);
    let ec = &exp.config.equilibrium;
    let eq = find_equilibrium(sys, ec.bracket.map(|[lo, hi]| (lo, hi)), ec.tol)?;
    let header = vec!["i".to_string(), "M_i".to_string()];
    let rows: Vec<Vec<f64>> = eq.m_star.iter().enumerate().map(|(i, m)| vec![i as f64, *m]).collect();
    out.write_table("equilibrium.csv", &header, &rows)?;

    let mut checks = vec![
        Check::at_most("equilibrium_residual", "find_equilibrium", eq.residual, ec.tol),
        Check::holds("equilibrium_nonnegative", "find_equilibrium", eq.state().in_cone()),
    ];
    let mut moved = None;
    if ec.fixed_point_span > 0.0 {
        let start = eq.state();
        let end = integrate(sys, &start, ec.fixed_point_span, &IntegratorConfig {
            accumulators: Default::default(),
            ..exp.config.integrator.clone()
        })?
        .final_state();
        let d = norm_mu_diff(&start, &end, 1.0);
        checks.push(Check::at_most("fixed_point_drift", "integrate", d, 10.0 * ec.tol));
        moved = Some(d);
    }
    let results = json!({
        "n": sys.n(),
        "x_star": eq.x_star,
        "residual": eq.residual,
        "tail_mass": eq.tail_mass,
        "iterations": eq.iterations,
        "fixed_point_drift": moved,
    });
    Ok(Outcome { checks, results })
}

pub fn semigroup(exp: &Experiment, _out: &mut OutDir) -> Result<Outcome, WriteError> {
    let (sys, y0) = single(exp);
    let sg = &exp.config.semigroup;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for [t, s] in &sg.pairs {
        let res = semigroup_residual(sys, y0, *t, *s, &exp.config.integrator)?;
        checks.push(Check::at_most(format!("semigroup_t{t}_s{s}"), "semigroup_residual", res, sg.tolerance));
        rows.push(json!({ "t": t, "s": s, "residual": res }));
    }
    let results = json!({
        "n": sys.n(),
        "mu": 1.0 + sys.rates.uniqueness_gamma(),
        "pairs": rows,
    });
    Ok(Outcome { checks, results })
}

pub fn error_exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}
