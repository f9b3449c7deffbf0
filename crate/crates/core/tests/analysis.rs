mod common;

use common::*;
use silicosis_core::analysis::{
    continuity_study, convergence_study, differential_form_check, perturb, semigroup_residual,
    uniqueness_probe, DEFAULT_GRID_POINTS,
};
use silicosis_core::{
    integrate, CoefficientFamily, InitialData, IntegratorConfig, Method, ModelParams, State,
    TruncatedSystem,
};

fn coupled_families(gamma: f64) -> silicosis_core::CoefficientFamilies {
    families(
        CoefficientFamily::power_law(1.0, gamma),
        CoefficientFamily::constant(0.5),
        CoefficientFamily::constant(0.3),
    )
}

#[test]
fn truncation_invariant_dynamics_give_zero_gaps() {
    let fam = families(
        CoefficientFamily::constant(0.0),
        CoefficientFamily::constant(1.0),
        CoefficientFamily::constant(0.5),
    );
    let init = InitialData::explicit(1.0, vec![1.0, 0.5, 0.25]);
    let rep = convergence_study(
        &ModelParams::new(1.0, 1.0).unwrap(),
        &fam,
        &init,
        &[4, 8, 16],
        2.0,
        &IntegratorConfig::default(),
        DEFAULT_GRID_POINTS,
    )
    .unwrap();
    assert!(rep.gaps.iter().all(|&g| g == 0.0), "{:?}", rep.gaps);
}

#[test]
fn unit_chain_ladder_gaps_decrease() {
    let fam = families(
        CoefficientFamily::constant(1.0),
        CoefficientFamily::constant(1.0),
        CoefficientFamily::constant(0.0),
    );
    let init = InitialData::explicit(1.0, vec![1.0]);
    let cfg = IntegratorConfig::default().with_tolerances(1e-12, 1e-16);
    let rep = convergence_study(
        &ModelParams::new(1.0, 1.0).unwrap(),
        &fam,
        &init,
        &[4, 6, 8, 10],
        1.0,
        &cfg,
        DEFAULT_GRID_POINTS,
    )
    .unwrap();
    assert!(rep.decreasing, "{:?}", rep.gaps);
    assert!(rep.gaps.iter().all(|&g| g > 0.0));
}

#[test]
fn rungs_beyond_reach_agree_to_noise() {
    let fam = families(
        CoefficientFamily::constant(1.0),
        CoefficientFamily::constant(1.0),
        CoefficientFamily::constant(0.0),
    );
    let init = InitialData::explicit(1.0, vec![1.0]);
    let rep = convergence_study(
        &ModelParams::new(1.0, 1.0).unwrap(),
        &fam,
        &init,
        &[32, 64],
        1.0,
        &IntegratorConfig::default(),
        DEFAULT_GRID_POINTS,
    )
    .unwrap();
    assert!(rep.gaps[0] < 1e-9, "{:?}", rep.gaps);
}

#[test]
fn bad_ladders_are_rejected() {
    let fam = coupled_families(0.0);
    let init = InitialData::explicit(1.0, vec![1.0]);
    let params = ModelParams::new(1.0, 1.0).unwrap();
    let cfg = IntegratorConfig::default();
    for ladder in [&[8][..], &[8, 8], &[16, 8], &[1, 4]] {
        assert!(convergence_study(&params, &fam, &init, ladder, 1.0, &cfg, 11).is_err());
    }
}

#[test]
fn failing_rung_is_tagged() {
    let fam = coupled_families(0.0);
    let init = InitialData::explicit(1.0, vec![1.0]);
    let cfg = IntegratorConfig { max_steps: 3, ..IntegratorConfig::default() };
    let err = convergence_study(&ModelParams::new(1.0, 1.0).unwrap(), &fam, &init, &[4, 8], 5.0, &cfg, 11)
        .unwrap_err();
    assert!(matches!(err, silicosis_core::Error::Rung { .. }), "{err:?}");
}

fn decoupled_system() -> (ModelParams, TruncatedSystem, State) {
    let params = ModelParams::new(0.5, 0.2).unwrap();
    let fam = families(
        CoefficientFamily::constant(0.0),
        CoefficientFamily::constant(1.0),
        CoefficientFamily::constant(0.4),
    );
    let sys = system(params, &fam, 10);
    (params, sys, geometric(10, 1.0, 1.0, 0.5))
}

#[test]
fn uniqueness_on_decoupled_case() {
    let (_, sys, y0) = decoupled_system();
    let a = IntegratorConfig::default();
    let b = IntegratorConfig::default().with_method(Method::Bdf).with_tolerances(1e-11, 1e-16);
    assert!(uniqueness_probe(&sys, &y0, 3.0, &a, &b).unwrap() < 1e-8);
}

#[test]
fn uniqueness_on_zero_dynamics() {
    let fam = coupled_families(1.0);
    let sys = system(ModelParams::new(0.0, 0.0).unwrap(), &fam, 8);
    let a = IntegratorConfig::default();
    let b = a.clone().with_method(Method::Bdf);
    assert_eq!(uniqueness_probe(&sys, &State::zeros(8), 2.0, &a, &b).unwrap(), 0.0);
    assert!(uniqueness_probe(&sys, &State::zeros(8), 2.0, &a, &a).is_err());
}

#[test]
fn uniqueness_on_coupled_case() {
    let sys = system(ModelParams::new(1.0, 1.0).unwrap(), &coupled_families(1.0), 32);
    let y0 = geometric(32, 1.0, 1.0, 0.5);
    let a = IntegratorConfig::default();
    let b = IntegratorConfig::default().with_method(Method::Bdf);
    let budget = a.rel_tol + a.abs_tol + b.rel_tol + b.abs_tol;
    let gap = uniqueness_probe(&sys, &y0, 2.0, &a, &b).unwrap();
    assert!(gap < 10.0 * budget * silicosis_core::norm_mu(&y0, 1.0).max(1.0), "gap {gap}");
}

#[test]
fn semigroup_trivial_splits_are_exact() {
    let sys = system(ModelParams::new(1.0, 1.0).unwrap(), &coupled_families(0.5), 16);
    let y0 = geometric(16, 1.0, 1.0, 0.5);
    let cfg = IntegratorConfig::default();
    assert_eq!(semigroup_residual(&sys, &y0, 1.5, 0.0, &cfg).unwrap(), 0.0);
    assert_eq!(semigroup_residual(&sys, &y0, 0.0, 1.5, &cfg).unwrap(), 0.0);
    assert!(semigroup_residual(&sys, &y0, -1.0, 1.0, &cfg).is_err());
}

#[test]
fn semigroup_on_decoupled_decay() {
    let (params, sys, y0) = decoupled_system();
    let res = semigroup_residual(&sys, &y0, 0.5, 0.5, &IntegratorConfig::default()).unwrap();
    assert!(res < 1e-9, "residual {res}");
    let end = integrate(&sys, &y0, 1.0, &IntegratorConfig::default()).unwrap().final_state();
    let exact = decoupled_exact(&params, &sys.rates, &y0, 1.0);
    assert!(rel_err(end.m[3], exact.m[3]) < 1e-8);
}

#[test]
fn continuity_on_decoupled_case_is_linear() {
    let (_, sys, y0) = decoupled_system();
    let dir = geometric(10, 0.3, 0.2, 0.7);
    let perturbed: Vec<State> = (0..4).map(|j| perturb(&y0, &dir, 0.5f64.powi(j))).collect();
    let mut with_zero = perturbed.clone();
    with_zero.push(y0.clone());
    let rows = continuity_study(&sys, &y0, &with_zero, 2.0, &IntegratorConfig::default()).unwrap();
    assert_eq!(rows[4].output_gap, 0.0);
    for w in rows[..4].windows(2) {
        let halving = w[1].output_gap / w[0].output_gap;
        assert!((halving - 0.5).abs() < 1e-6, "ratio {halving}");
    }
}

#[test]
fn continuity_on_coupled_case_is_monotone() {
    let sys = system(ModelParams::new(1.0, 1.0).unwrap(), &coupled_families(1.0), 24);
    let y0 = geometric(24, 1.0, 1.0, 0.5);
    let dir = geometric(24, 0.5, 0.5, 0.6);
    let perturbed: Vec<State> = (0..4).map(|j| perturb(&y0, &dir, 0.5f64.powi(j))).collect();
    let rows = continuity_study(&sys, &y0, &perturbed, 2.0, &IntegratorConfig::default()).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].input_gap < w[0].input_gap);
        assert!(w[1].output_gap < w[0].output_gap);
    }
    let below = State { x: -1.0, ..y0.clone() };
    assert!(continuity_study(&sys, &y0, &[below], 2.0, &IntegratorConfig::default()).is_err());
}

#[test]
fn differential_defect_is_second_order_on_a_coupled_run() {
    let sys = system(ModelParams::new(1.0, 1.0).unwrap(), &coupled_families(0.5), 16);
    let y0 = geometric(16, 1.0, 1.0, 0.5);
    let cfg = IntegratorConfig::default().with_tolerances(1e-12, 1e-15);
    let traj = integrate(&sys, &y0, 2.0, &cfg).unwrap();
    let grid: Vec<f64> = (1..10).map(|j| 0.2 * j as f64).collect();
    let coarse = differential_form_check(&traj, &grid, 0.04).unwrap();
    let fine = differential_form_check(&traj, &grid, 0.02).unwrap();
    let ratio = coarse / fine;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}
