//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use silicosis_core::analysis::{
    convergence_study, find_equilibrium, invariance_check, semigroup_residual, uniqueness_probe,
};
use silicosis_core::moments::{gronwall_check, mass_balance_residual, moment_identity_residual};
use silicosis_core::{
    integrate, norm_mu, CoefficientFamilies, CoefficientFamily, InitialData, IntegratorConfig,
    Method, ModelParams, MomentWeights, RateTable, State, TailRule, Trajectory, TruncatedSystem,
};

const SEED: u64 = 0x5111_C051;
const RUNS: usize = 200;
const ORDERS: [usize; 3] = [4, 32, 256];
const GAMMAS: [f64; 3] = [0.0, 0.5, 1.0];
const T_END: f64 = 5.0;
const SAMPLE_TIMES: usize = 10;
const CLOSED_RUNS: usize = 18;

/// Stepping used for the run matrix. The absolute tolerance is tighter than
/// the library default: clamp injections are bounded by about `abs_tol`,
/// and the `(i+1)^2` moment weights at `n = 256` magnify them by `6.6e4`.
fn matrix_config() -> IntegratorConfig {
    IntegratorConfig::default().with_tolerances(1e-9, 1e-14)
}

type Outcome = Result<String, String>;

struct Case {
    sys: TruncatedSystem,
    y0: State,
    gamma: f64,
}

/// Random cases cycling through every `(n, γ)` pair. With `closed` the
/// removal and death rates vanish.
fn random_cases(seed: u64, count: usize, closed: bool) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|j| {
            let n = ORDERS[j % 3];
            let gamma = GAMMAS[(j / 3) % 3];
            let params = ModelParams::new(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)).unwrap();
            let k = CoefficientFamily::power_law(rng.random_range(0.2..1.5), gamma);
            let (p, q) = if closed {
                (CoefficientFamily::constant(0.0), CoefficientFamily::constant(0.0))
            } else {
                (
                    CoefficientFamily::constant(rng.random_range(0.1..1.0)),
                    CoefficientFamily::constant(rng.random_range(0.0..1.0)),
                )
            };
            let rates = CoefficientFamilies::new(k, p, q).realize(n).unwrap();
            let sys = TruncatedSystem::new(params, rates).unwrap();
            let scale = rng.random_range(0.0..2.0);
            let rho: f64 = rng.random_range(0.2..0.8);
            let x0 = if rng.random_bool(0.25) { 0.0 } else { rng.random_range(0.0..2.0) };
            let m = (0..=n)
                .map(|i| if rng.random_bool(0.25) { 0.0 } else { scale * rng.random_range(0.0..1.0) * rho.powi(i as i32) })
                .collect();
            Case { sys, y0: State::new(0.0, x0, m), gamma }
        })
        .collect()
}

fn sample_times() -> Vec<f64> {
    (1..=SAMPLE_TIMES).map(|j| T_END * j as f64 / SAMPLE_TIMES as f64).collect()
}

/// Runs `f` over the cases on all available threads, keeping case order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = items.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    })
}

fn worst<'a>(it: impl Iterator<Item = Result<f64, String>> + 'a) -> Result<f64, String> {
    let mut w: f64 = 0.0;
    for v in it {
        w = w.max(v?);
    }
    Ok(w)
}

fn criterion_1(trajs: &[Trajectory], elapsed: Duration) -> Outcome {
    let mut max_excess = f64::NEG_INFINITY;
    for (j, traj) in trajs.iter().enumerate() {
        let y0 = traj.initial_state();
        let base = norm_mu(&y0, 1.0);
        let supply = traj.sys.params.supply();
        for s in traj.states() {
            if !s.in_cone() {
                return Err(format!("case {j}: negative component at t = {}", s.t));
            }
            let excess = norm_mu(&s, 1.0) - base - supply * s.t;
            max_excess = max_excess.max(excess);
            if excess > 1e-6 {
                return Err(format!("case {j}: norm exceeds bound by {excess:e} at t = {}", s.t));
            }
        }
    }
    if elapsed.as_secs_f64() >= 60.0 {
        return Err(format!("runtime {:.1} s exceeds 60 s", elapsed.as_secs_f64()));
    }
    let clamps: usize = trajs.iter().map(|t| t.stats.clamped).sum();
    let added = trajs.iter().map(|t| t.stats.clamped_mass).fold(0.0, f64::max);
    Ok(format!(
        "{} runs (rel_tol 1e-9, abs_tol 1e-14), max bound excess {max_excess:e}, {clamps} clamps adding at most {added:e} per run, runtime {:.1} s",
        trajs.len(),
        elapsed.as_secs_f64()
    ))
}

fn criterion_2(trajs: &[Trajectory], closed_cases: &[Case]) -> Outcome {
    let mut open: f64 = 0.0;
    for traj in trajs {
        for t in sample_times() {
            open = open.max(mass_balance_residual(traj, t).map_err(|e| e.to_string())?.abs());
        }
    }
    let cfg = matrix_config();
    let closed_runs = par_map(closed_cases, |c| integrate(&c.sys, &c.y0, T_END, &cfg).map_err(|e| e.to_string()));
    let mut closed: f64 = 0.0;
    for (case, traj) in closed_cases.iter().zip(closed_runs) {
        let traj = traj?;
        let scale = norm_mu(&traj.final_state(), 1.0).max(norm_mu(&case.y0, 1.0)).max(1.0);
        for t in sample_times() {
            closed = closed.max(mass_balance_residual(&traj, t).map_err(|e| e.to_string())?.abs() / scale);
        }
    }
    if open >= 1e-6 {
        return Err(format!("max residual {open:e} >= 1e-6"));
    }
    // Stepper precision: a few hundred roundings of the conserved sum.
    if closed > 1e-13 {
        return Err(format!("p = q = 0 residual {closed:e} (relative) above rounding level"));
    }
    Ok(format!("max |residual| {open:e}; {} runs with p = q = 0: {closed:e} relative", closed_cases.len()))
}

fn criterion_3(cases: &[Case], trajs: &[Trajectory]) -> Outcome {
    let per_case = par_map(&cases.iter().zip(trajs).collect::<Vec<_>>(), |(case, traj)| {
        let n = case.sys.n();
        let weights = [
            MomentWeights::constant(n),
            MomentWeights::linear(n),
            MomentWeights::power(&case.sys.rates, 1.0 + case.gamma),
        ];
        worst(weights.iter().flat_map(|w| {
            sample_times()
                .into_iter()
                .map(move |t| moment_identity_residual(traj, w, 1, 0.0, t).map(f64::abs).map_err(|e| e.to_string()))
        }))
    });
    let w = worst(per_case.into_iter())?;
    if w >= 1e-6 {
        return Err(format!("max residual {w:e} >= 1e-6"));
    }
    Ok(format!("g = 1, i, (i+1)^(1+γ): max |residual| {w:e}"))
}

fn decoupled_exact(params: &ModelParams, rates: &RateTable, y0: &State, t: f64) -> State {
    let mut x = y0.x + params.alpha * t;
    let mut m = Vec::new();
    for (i, &m0) in y0.m.iter().enumerate() {
        let d = rates.p[i] + rates.q[i];
        let kernel = -(-d * t).exp_m1() / d;
        let mut mi = m0 * (-d * t).exp();
        let mut load = m0 * kernel;
        if i == 0 {
            mi += params.r * kernel;
            load += params.r * (t - kernel) / d;
        }
        x += i as f64 * rates.q[i] * load;
        m.push(mi);
    }
    State::new(t, x, m)
}

fn criterion_4() -> Outcome {
    let params = ModelParams::new(0.8, 0.4).unwrap();
    let n = 16;
    let rates = RateTable::from_sequences(
        vec![0.0; n + 1],
        (0..=n).map(|i| 0.3 + 0.07 * i as f64).collect(),
        (0..=n).map(|i| 0.1 + 0.05 * (i % 4) as f64).collect(),
    )
    .unwrap();
    let sys = TruncatedSystem::new(params, rates).unwrap();
    let y0 = State::new(0.0, 1.2, (0..=n).map(|i| 0.6f64.powi(i as i32)).collect());
    let traj = integrate(&sys, &y0, 5.0, &IntegratorConfig::default()).map_err(|e| e.to_string())?;
    let mut oracle: f64 = 0.0;
    for t in [0.5, 1.0, 5.0] {
        let got = traj.dense_eval(t).map_err(|e| e.to_string())?;
        let exact = decoupled_exact(&params, &sys.rates, &y0, t);
        for (a, b) in std::iter::once((got.x, exact.x)).chain(got.m.iter().copied().zip(exact.m.iter().copied())) {
            oracle = oracle.max((a - b).abs() / b.abs());
        }
    }
    if oracle >= 1e-7 {
        return Err(format!("decoupled relative error {oracle:e} >= 1e-7"));
    }

    let n = 64;
    let unit = CoefficientFamilies::new(
        CoefficientFamily::constant(1.0),
        CoefficientFamily::constant(1.0),
        CoefficientFamily::constant(0.0),
    );
    let sys = TruncatedSystem::new(ModelParams::new(1.0, 1.0).unwrap(), unit.realize(n).unwrap()).unwrap();
    let eq = find_equilibrium(&sys, None, 1e-12).map_err(|e| e.to_string())?;
    let bound = 1e-8 + 0.5f64.powi(n as i32 + 1);
    let mut eq_err = (eq.x_star - 1.0).abs();
    for i in 0..n {
        eq_err = eq_err.max((eq.m_star[i] - 0.5f64.powi(i as i32 + 1)).abs());
    }
    if eq_err >= bound {
        return Err(format!("equilibrium error {eq_err:e} >= {bound:e}"));
    }
    Ok(format!("decoupled max relative error {oracle:e}; equilibrium error {eq_err:e}"))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let fam = CoefficientFamilies::new(
        CoefficientFamily::power_law(1.0, 0.5),
        CoefficientFamily::constant(0.5),
        CoefficientFamily::constant(0.3),
    );
    let rep = convergence_study(
        &ModelParams::new(1.0, 1.0).unwrap(),
        &fam,
        &InitialData::geometric(1.0, 1.0, 0.5),
        &[8, 16, 32, 64, 128],
        T_END,
        &IntegratorConfig::default(),
        silicosis_core::analysis::DEFAULT_GRID_POINTS,
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let last = *rep.gaps.last().unwrap();
    let gaps: Vec<String> = rep.gaps.iter().map(|g| format!("{g:.2e}")).collect();
    if !rep.decreasing {
        return Err(format!("gaps not strictly decreasing: {gaps:?}"));
    }
    if last >= 1e-6 {
        return Err(format!("final gap {last:e} >= 1e-6"));
    }
    if elapsed >= 120.0 {
        return Err(format!("runtime {elapsed:.1} s exceeds 120 s"));
    }
    Ok(format!("gaps {}, runtime {elapsed:.3} s", gaps.join(" > ")))
}

fn criterion_6(cases: &[Case]) -> Outcome {
    let a = matrix_config();
    let b = matrix_config().with_method(Method::Bdf);
    let gaps = par_map(cases, |c| uniqueness_probe(&c.sys, &c.y0, T_END, &a, &b).map_err(|e| e.to_string()));
    let w = worst(gaps.into_iter())?;
    if w >= 1e-6 {
        return Err(format!("max sup-gap {w:e} >= 1e-6"));
    }
    Ok(format!("Dormand–Prince vs BDF over {} runs: max sup-gap {w:e}", cases.len()))
}

fn criterion_7(cases: &[Case]) -> Outcome {
    // Two cases of every (n, γ) combination.
    let subset = &cases[..18];
    let cfg = matrix_config();
    let rows = par_map(subset, |c| {
        let mut out = Vec::new();
        for (t, s) in [(0.5, 0.5), (1.0, 2.0), (0.0, 3.0), (3.0, 0.0)] {
            out.push((t, s, semigroup_residual(&c.sys, &c.y0, t, s, &cfg).map_err(|e| e.to_string())?));
        }
        Ok::<_, String>(out)
    });
    let mut w: f64 = 0.0;
    for row in rows {
        for (t, s, r) in row? {
            if (t == 0.0 || s == 0.0) && r != 0.0 {
                return Err(format!("(t, s) = ({t}, {s}) residual {r:e} is not exactly 0"));
            }
            w = w.max(r);
        }
    }
    if w >= 1e-7 {
        return Err(format!("max residual {w:e} >= 1e-7"));
    }
    Ok(format!("{} cases: max residual {w:e}, trivial splits exactly 0", subset.len()))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x8);
    let families = [
        ("power_law γ=0", CoefficientFamily::power_law(1.3, 0.0)),
        ("power_law γ=1/2", CoefficientFamily::power_law(0.7, 0.5)),
        ("power_law γ=1", CoefficientFamily::power_law(0.9, 1.0)),
        ("constant", CoefficientFamily::constant(1.1)),
        ("table", CoefficientFamily::table(vec![0.5, 2.0, 1.0, 3.0], TailRule::ConstantExtend)),
    ];
    let n = 32;
    let mut w: f64 = 0.0;
    for (name, k) in &families {
        let fam = CoefficientFamilies::new(k.clone(), CoefficientFamily::constant(0.4), CoefficientFamily::constant(0.2));
        let sys = TruncatedSystem::new(ModelParams::new(1.0, 0.5).unwrap(), fam.realize(n).unwrap()).unwrap();
        for _ in 0..100 {
            let y = State::new(0.0, rng.random_range(0.0..3.0), (0..=n).map(|_| rng.random_range(0.0..2.0)).collect());
            let jac = sys.eval_jacobian(&y).map_err(|e| e.to_string())?.to_dense();
            let v = y.to_vec();
            let h = 1e-5;
            let mut defect: f64 = 0.0;
            let mut size: f64 = 0.0;
            for j in 0..v.len() {
                let (mut up, mut dn) = (v.clone(), v.clone());
                up[j] += h;
                dn[j] -= h;
                let fu = sys.eval_rhs(&State::from_slice(0.0, &up)).map_err(|e| e.to_string())?;
                let fd = sys.eval_rhs(&State::from_slice(0.0, &dn)).map_err(|e| e.to_string())?;
                for i in 0..v.len() {
                    defect = defect.max(((fu[i] - fd[i]) / (2.0 * h) - jac[i][j]).abs());
                    size = size.max(jac[i][j].abs());
                }
            }
            let rel = defect / size.max(f64::MIN_POSITIVE);
            if rel >= 1e-6 {
                return Err(format!("{name}: relative defect {rel:e}"));
            }
            w = w.max(rel);
        }
    }
    Ok(format!("5 families x 100 states: max relative defect {w:e}"))
}

fn criterion_9(cases: &[Case], trajs: &[Trajectory]) -> Outcome {
    let mut g_margin = f64::INFINITY;
    let mut i_margin = f64::INFINITY;
    for (j, (case, traj)) in cases.iter().zip(trajs).enumerate() {
        let w = MomentWeights::power(&case.sys.rates, 1.0 + case.gamma);
        let g = gronwall_check(traj, &w).map_err(|e| format!("case {j}: {e}"))?;
        let inv = invariance_check(traj, case.gamma).map_err(|e| format!("case {j}: {e}"))?;
        if !(g.ok && g.margin > 0.0) {
            return Err(format!("case {j}: Gronwall envelope ok={} margin={:e}", g.ok, g.margin));
        }
        if !(inv.ok && inv.margin > 0.0) {
            return Err(format!("case {j}: invariance ok={} margin={:e}", inv.ok, inv.margin));
        }
        g_margin = g_margin.min(g.margin);
        i_margin = i_margin.min(inv.margin);
    }
    Ok(format!("min Gronwall margin {g_margin:e}, min invariance margin {i_margin:e}"))
}

fn criterion_10() -> Outcome {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let root = std::env::temp_dir().join(format!("silicosis-acceptance-{}", std::process::id()));
    let run = |cmd: &str, out: &PathBuf| -> Result<(), String> {
        let status = Command::new(env!("CARGO_BIN_EXE_silicosis"))
            .args([cmd, "--config"])
            .arg(configs.join("coupled.toml"))
            .arg("--out")
            .arg(out)
            .env_remove("SILICOSIS_OUT_DIR")
            .status()
            .map_err(|e| e.to_string())?;
        if status.success() {
            Ok(())
        } else {
            Err(format!("{cmd} exited with {status}"))
        }
    };
    let mut compared = Vec::new();
    for (cmd, file) in [("simulate", "trajectory.csv"), ("converge", "gaps.csv")] {
        let a = root.join(format!("{cmd}-a"));
        let b = root.join(format!("{cmd}-b"));
        run(cmd, &a)?;
        run(cmd, &b)?;
        let read = |d: &PathBuf| std::fs::read(d.join(file)).map_err(|e| e.to_string());
        let (x, y) = (read(&a)?, read(&b)?);
        if x != y {
            return Err(format!("{cmd}: {file} differs between runs"));
        }
        compared.push(format!("{file} ({} bytes)", x.len()));
    }
    let _ = std::fs::remove_dir_all(&root);
    Ok(format!("byte-identical {}", compared.join(", ")))
}

fn main() {
    let cases = random_cases(SEED, RUNS, false);
    let closed = random_cases(SEED + 1, CLOSED_RUNS, true);
    let cfg = matrix_config();
    let start = Instant::now();
    let runs = par_map(&cases, |c| integrate(&c.sys, &c.y0, T_END, &cfg));
    let elapsed = start.elapsed();
    let trajs: Result<Vec<Trajectory>, _> = runs.into_iter().collect();

    let results: Vec<(&str, Outcome)> = match trajs {
        Ok(trajs) => vec![
            ("cone and norm bound", criterion_1(&trajs, elapsed)),
            ("mass balance", criterion_2(&trajs, &closed)),
            ("moment identities", criterion_3(&cases, &trajs)),
            ("analytic oracles", criterion_4()),
            ("truncation convergence", criterion_5()),
            ("uniqueness probe", criterion_6(&cases)),
            ("semigroup", criterion_7(&cases)),
            ("Jacobian", criterion_8()),
            ("Gronwall and invariance envelopes", criterion_9(&cases, &trajs)),
            ("determinism", criterion_10()),
        ],
        Err(e) => {
            let msg = format!("run matrix failed: {e}");
            let mut v: Vec<(&str, Outcome)> = vec![
                ("cone and norm bound", Err(msg.clone())),
                ("mass balance", Err(msg.clone())),
                ("moment identities", Err(msg.clone())),
            ];
            v.push(("analytic oracles", criterion_4()));
            v.push(("truncation convergence", criterion_5()));
            v.push(("uniqueness probe", criterion_6(&cases)));
            v.push(("semigroup", criterion_7(&cases)));
            v.push(("Jacobian", criterion_8()));
            v.push(("Gronwall and invariance envelopes", Err(msg)));
            v.push(("determinism", criterion_10()));
            v
        }
    };

    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {reason}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
