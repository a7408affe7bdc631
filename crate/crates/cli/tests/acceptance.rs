//! Desk-scale acceptance checks covering the full pipeline. Every check
//! prints exactly one "[criterion N] PASS" or "[criterion N] FAIL" line with
//! its evidence before asserting. Run with
//! `cargo test -p kwass-cli --test acceptance -- --nocapture` to see the
//! lines from passing checks too; by default the harness shows output only
//! for failing ones.

use kwass_cli::pipeline::{run_scenario, RunOptions};
use kwass_cli::scenario::Scenario;
use kwass_core::bounds::{
    bootstrap_allowance, compute_q_series, crossover_time, dobrushin_bound, loeper_improved_bound,
    max_difference_quotient, measure_distance,
};
use kwass_core::dynamics::{simulate_pair, PairedTrajectory};
use kwass_core::fields::{poisson_solve, verify_loeper_l2, TorusGrid};
use kwass_core::measures::{pair_cost, CostSpec, PhaseEnsemble};
use kwass_core::transport::{implicit_weight_solve, solve_exact, TransportError, WeightFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

/// Criterion 1: worst allowed gap between the exact solver and brute force.
const ORACLE_TOL: f64 = 1e-10;
/// Criterion 1: wall-clock budget for all fifty instances.
const ORACLE_BUDGET_S: f64 = 10.0;
/// Criterion 2: Monte-Carlo sigma multiplier for the sharpness window.
const SHARPNESS_SIGMA: f64 = 3.0;
/// Criterion 2: minimum classical-bound overshoot at t = 1.
const MIN_OVERSHOOT: f64 = 0.30;
/// Criterion 3: wall-clock budget per curvature value.
const DOMINANCE_BUDGET_S: f64 = 120.0;
/// Criterion 4: required log-log slope window.
const SLOPE_WINDOW: (f64, f64) = (-0.65, -0.35);
/// Criterion 5: implicit-solve residual ceiling.
const RESIDUAL_TOL: f64 = 1e-12;
/// Criterion 6: threshold defining the sensitive region for quotients.
const QUOTIENT_FLOOR: f64 = 1e-6;
/// Criterion 7: identity tolerance at t = 0.
const IDENTITY_TOL: f64 = 1e-12;
/// Criterion 8: sup-norm tolerance against the single-mode closed form.
const ANALYTIC_TOL: f64 = 1e-10;
/// Criterion 10: relative energy-drift ceiling.
const DRIFT_TOL: f64 = 1e-3;

fn report(criterion: usize, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[criterion {criterion}] {tag}: {detail}");
    assert!(pass, "[criterion {criterion}] {tag}: {detail}");
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

fn load_scenario(name: &str) -> Scenario {
    let scenario = Scenario::load(&scenario_path(name)).expect("bundled scenario loads");
    scenario.validate().expect("bundled scenario is valid");
    scenario
}

/// Shared Vlasov-Poisson fixture for criteria 6 and 10: the bundled
/// eps-sweep scenario at eps = 1, which carries a 1e-6 velocity-shift pair.
fn vp_trajectory() -> &'static PairedTrajectory {
    static VP_RUN: OnceLock<PairedTrajectory> = OnceLock::new();
    VP_RUN.get_or_init(|| {
        let scenario = load_scenario("vp_eps");
        let (mu, nu) = scenario.pair_ensembles(scenario.seed).unwrap();
        let pi0 = scenario.initial_coupling(&mu, &nu).unwrap();
        let cfg = scenario.sim_config(Some(1.0)).unwrap();
        simulate_pair(&cfg, &mu, &nu, &pi0, scenario.sim.snap_every).unwrap()
    })
}

fn heap_permutations(n: usize, f: &mut impl FnMut(&[usize])) {
    fn recurse(k: usize, a: &mut [usize], f: &mut impl FnMut(&[usize])) {
        if k <= 1 {
            f(a);
            return;
        }
        for i in 0..k {
            recurse(k - 1, a, f);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    recurse(n, &mut idx, f);
}

fn random_uniform_ensemble(rng: &mut ChaCha8Rng, n: usize) -> PhaseEnsemble {
    let positions: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let velocities: Vec<f64> = (0..n).map(|_| 0.6 * (rng.gen::<f64>() - 0.5)).collect();
    PhaseEnsemble::uniform(1, positions, velocities).unwrap()
}

#[test]
fn criterion_01_exact_transport_matches_brute_force() {
    let start = Instant::now();
    let specs = [
        CostSpec::plain(1.0).unwrap(),
        CostSpec::plain(2.0).unwrap(),
        CostSpec::anisotropic(2.0, 0.37).unwrap(),
        CostSpec::quadratic(2.0, 1.0, 0.4, 1.0).unwrap(),
        CostSpec::shifted(1.0, 0.7).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let spec = &specs[case % specs.len()];
        let n = 2 + case % 5;
        let mu = random_uniform_ensemble(&mut rng, n);
        let nu = random_uniform_ensemble(&mut rng, n);

        let solved = solve_exact(&mu, &nu, spec).unwrap().value;

        let mut best = f64::INFINITY;
        heap_permutations(n, &mut |perm| {
            let mut total = 0.0;
            for (i, &j) in perm.iter().enumerate() {
                total += pair_cost(
                    spec,
                    mu.position(i),
                    mu.velocity(i),
                    nu.position(j),
                    nu.velocity(j),
                );
            }
            best = best.min(total / n as f64);
        });
        let oracle = best.powf(1.0 / spec.p());
        worst = worst.max((solved - oracle).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= ORACLE_TOL && elapsed < ORACLE_BUDGET_S;
    report(
        1,
        pass,
        &format!(
            "50 instances over every cost variant: worst |solver - oracle| = {worst:.2e} \
             (tolerance {ORACLE_TOL:.0e}), elapsed {elapsed:.2} s (budget {ORACLE_BUDGET_S} s)"
        ),
    );
}

#[test]
fn criterion_02_free_flow_sharpness_and_classical_overshoot() {
    let scenario = load_scenario("free_flow");
    let (mu, nu) = scenario.pair_ensembles(scenario.seed).unwrap();
    let pi0 = scenario.initial_coupling(&mu, &nu).unwrap();
    let cfg = scenario.sim_config(None).unwrap();
    let traj = simulate_pair(&cfg, &mu, &nu, &pi0, scenario.sim.snap_every).unwrap();

    let spec = CostSpec::plain(1.0).unwrap();
    let targets = [0.0, 0.5, 1.0, 2.0];
    let mut rows = Vec::new();
    for snap in &traj.snapshots {
        if targets.iter().any(|t| (snap.t - t).abs() < 1e-9) {
            let result = measure_distance(&snap.first, &snap.second, &spec).unwrap();
            let allowance = bootstrap_allowance(
                &snap.first,
                &snap.second,
                &result.plan,
                &spec,
                200,
                SHARPNESS_SIGMA,
                1700 + rows.len() as u64,
            );
            rows.push((snap.t, result.value, allowance));
        }
    }
    assert_eq!(rows.len(), targets.len(), "snapshot grid misses a target time");

    let w10 = rows[0].1;
    let mut pass = w10 > 0.0;
    let mut notes = Vec::new();
    for &(t, value, allowance) in &rows {
        let ratio = value / ((1.0 + t) * w10);
        // The Monte-Carlo window, widened by bare float-noise slack for the
        // zero-variance degenerate plans of a pure shift pair.
        let ok = (ratio - 1.0).abs() <= allowance + 1e-9;
        notes.push(format!("t = {t}: ratio {ratio:.9} (3 sigma window {allowance:.2e})"));
        pass &= ok;
    }

    let measured_t1 = rows.iter().find(|r| (r.0 - 1.0).abs() < 1e-9).unwrap().1;
    let classical = dobrushin_bound(0.0, 1.0, w10);
    let overshoot = classical / measured_t1 - 1.0;
    pass &= overshoot >= MIN_OVERSHOOT;
    notes.push(format!(
        "classical bound at t = 1 overshoots by {:.1}% (needs >= {:.0}%)",
        100.0 * overshoot,
        100.0 * MIN_OVERSHOOT
    ));

    report(2, pass, &notes.join("; "));
}

fn dominance_scenario(b: f64) -> Scenario {
    let text = format!(
        r#"
name = "dominance_sweep"
seed = 5150

[sim]
mode = "kernel"
dt = 0.01
t_end = 1.0
snap_every = 5

[sim.kernel]
shape = "single_mode"
amplitude = {b}

[init]
n = 2000
sigma_v = 0.3

[pair]
kind = "resample"
coupling = "exact_w1"

[[distance]]
variant = "plain"
p = 1

[[bounds]]
kind = "combined"

[output]
dir = "out/dominance"
"#
    );
    Scenario::from_toml_str(&text, "inline").unwrap()
}

#[test]
fn criterion_03_combined_bound_dominates_measured_growth() {
    let mut pass = true;
    let mut notes = Vec::new();
    for b in [0.1, 1.0] {
        let start = Instant::now();
        let scenario = dominance_scenario(b);
        let tmp = tempfile::tempdir().unwrap();
        let outcome = run_scenario(
            &scenario,
            &RunOptions {
                stage: None,
                out: Some(tmp.path().join("run")),
                seed: None,
            },
        )
        .unwrap();
        let elapsed = start.elapsed().as_secs_f64();
        let verdict = outcome
            .messages
            .iter()
            .find(|m| m.contains("combined"))
            .cloned()
            .unwrap_or_default();
        let ok = outcome.pass == Some(true) && elapsed < DOMINANCE_BUDGET_S;
        notes.push(format!(
            "B = {b}: {} in {elapsed:.0} s (budget {DOMINANCE_BUDGET_S} s);{verdict}",
            if outcome.pass == Some(true) { "dominated at every snapshot" } else { "VIOLATED" },
        ));
        pass &= ok;
    }
    report(3, pass, &notes.join(" | "));
}

#[test]
fn criterion_04_crossover_slope_sits_in_the_target_window() {
    let curvatures = [0.25, 0.0625, 0.01, 0.0025];
    let mut notes = Vec::new();
    let mut log_b = Vec::new();
    let mut log_t = Vec::new();
    let mut all_crossed = true;
    for &b in &curvatures {
        match crossover_time(b) {
            Ok(t_star) => {
                notes.push(format!("t*({b}) = {t_star:.4}"));
                log_b.push(b.ln());
                log_t.push(t_star.ln());
            }
            Err(err) => {
                all_crossed = false;
                notes.push(format!("B = {b}: {err}"));
            }
        }
    }

    let slope = if log_b.len() >= 2 {
        let n = log_b.len() as f64;
        let mx = log_b.iter().sum::<f64>() / n;
        let my = log_t.iter().sum::<f64>() / n;
        let sxy: f64 = log_b.iter().zip(&log_t).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = log_b.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    let in_window = slope >= SLOPE_WINDOW.0 && slope <= SLOPE_WINDOW.1;
    let pass = all_crossed && in_window;

    notes.push(format!(
        "log-log slope over the values that do cross = {slope:.4}, target window \
         [{}, {}]",
        SLOPE_WINDOW.0, SLOPE_WINDOW.1
    ));
    notes.push(
        "the two growth forms agree to second order at t = 0 and the log-gap curvature \
         there is 4B - 1, so no crossing exists at B = 0.25; over the remaining span the \
         crossing time steepens toward the endpoint and the fitted exponent lands near \
         -0.71, outside the stated window"
            .to_string(),
    );
    report(4, pass, &notes.join("; "));
}

#[test]
fn criterion_05_implicit_solve_grid_wellposedness() {
    let log_w = WeightFunction::log_eps(1.0).unwrap();
    let cap_w = WeightFunction::capped_phi(1.0).unwrap();

    let r_grid: Vec<f64> = (0..50).map(|k| 3.0 * (k + 1) as f64 / 50.0).collect();
    let s_grid: Vec<f64> = (0..50).map(|j| (j as f64 + 0.5) / 50.0).collect();

    let mut worst_residual = 0.0f64;
    let mut s_increasing = true;
    let mut r_decreasing_as_stated = true;
    let mut counterexample = None;
    let mut grid = vec![vec![0.0f64; s_grid.len()]; r_grid.len()];
    for (ki, &r) in r_grid.iter().enumerate() {
        for (ji, &s) in s_grid.iter().enumerate() {
            let solved = implicit_weight_solve(r, s, &log_w).unwrap();
            worst_residual = worst_residual.max(solved.residual.abs());
            grid[ki][ji] = solved.q;
        }
    }
    for ki in 0..r_grid.len() {
        for ji in 1..s_grid.len() {
            if grid[ki][ji] <= grid[ki][ji - 1] {
                s_increasing = false;
            }
        }
    }
    for ji in 0..s_grid.len() {
        for ki in 1..r_grid.len() {
            if grid[ki][ji] >= grid[ki - 1][ji] {
                r_decreasing_as_stated = false;
                if counterexample.is_none() {
                    counterexample = Some((
                        r_grid[ki - 1],
                        r_grid[ki],
                        s_grid[ji],
                        grid[ki - 1][ji],
                        grid[ki][ji],
                    ));
                }
            }
        }
    }

    // No-root behavior: the log weight must refuse s >= 1 and accept s < 1.
    let mut no_root_ok = implicit_weight_solve(0.5, 0.999, &log_w).is_ok();
    for s in [1.0, 1.3] {
        no_root_ok &= matches!(
            implicit_weight_solve(0.5, s, &log_w),
            Err(TransportError::NoRoot { .. })
        );
    }

    // The capped weight solves everywhere, including s >= 1.
    let mut capped_ok = true;
    for &r in &r_grid {
        for s in s_grid.iter().copied().chain([1.0, 1.2, 1.4]) {
            match implicit_weight_solve(r, s, &cap_w) {
                Ok(solved) => capped_ok &= solved.residual.abs() <= RESIDUAL_TOL * s.max(1.0),
                Err(_) => capped_ok = false,
            }
        }
    }

    let residual_ok = worst_residual <= RESIDUAL_TOL;
    let pass = residual_ok && s_increasing && r_decreasing_as_stated && no_root_ok && capped_ok;

    let reference = implicit_weight_solve(0.01, 0.1, &log_w).unwrap().q;
    let (r_lo, r_hi, s_at, q_lo, q_hi) = counterexample.unwrap_or((0.0, 0.0, 0.0, 0.0, 0.0));
    report(
        5,
        pass,
        &format!(
            "residual worst {worst_residual:.2e} (tol {RESIDUAL_TOL:.0e}): {}; strictly \
             increasing in s: {}; no-root exactly when s >= 1 (log weight): {}; capped weight \
             solves the full grid including s >= 1: {}; stated decrease in r: {}. The solution \
             is in fact strictly increasing in r: dq/dr = Phi(q) / (1 + r/q) > 0 wherever Phi > 0; \
             at s = {s_at:.2} the grid gives q({r_lo:.2}) = {q_lo:.6} < q({r_hi:.2}) = {q_hi:.6}, \
             and the worked point r = 0.01, s = 0.1 solves to q = {reference:.6} > 0.1, which is \
             the r = 0 value",
            residual_ok, s_increasing, no_root_ok, capped_ok, r_decreasing_as_stated
        ),
    );
}

#[test]
fn criterion_06_implicit_series_dominates_velocity_moment_on_vp_pair() {
    let traj = vp_trajectory();
    let w = WeightFunction::log_eps(1.0).unwrap();
    let series = compute_q_series(traj, &w);

    let mut pass = !series.is_empty();
    let mut defined = 0usize;
    let mut sup_q = 0.0f64;
    for (point, (t, _, e)) in series.iter().zip(traj.moment_series()) {
        match point.q {
            Some(q) => {
                defined += 1;
                sup_q = sup_q.max(q);
                if q < e - 1e-15 {
                    pass = false;
                }
            }
            None => pass = false,
        }
        assert!((point.t - t).abs() < 1e-12);
    }

    // Quotients over the sensitive region {Q > 1e-6}; at this pair scale the
    // whole series sits far below the floor, which bounds them vacuously.
    let above_floor = max_difference_quotient(&series, QUOTIENT_FLOOR);
    let overall = max_difference_quotient(&series, 0.0).unwrap_or(0.0);
    pass &= above_floor.is_none_or(|q| q.is_finite());
    pass &= overall.is_finite();

    report(
        6,
        pass,
        &format!(
            "{defined}/{} snapshots defined, Q >= E at each one; sup Q = {sup_q:.3e}, so the \
             region above the {QUOTIENT_FLOOR:.0e} floor is {} and its quotients are bounded \
             {}; max quotient over the whole series = {overall:.3e}",
            series.len(),
            if above_floor.is_some() { "nonempty" } else { "empty" },
            if above_floor.is_some() { "directly" } else { "vacuously" },
        ),
    );
}

#[test]
fn criterion_07_log_scale_identity_at_time_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    while checked < 100 {
        let w20 = 10f64.powf(rng.gen_range(-6.0..-0.7));
        let eps = rng.gen_range(0.3..1.0);
        let u = 0.5 * (w20 / eps) * (w20 / eps);
        let x = 2.0 * u * u.ln().abs();
        if x >= 1.0 {
            continue;
        }
        let bound = loeper_improved_bound(w20, eps, 0.0, 1.0, 0.05).unwrap();
        worst = worst.max((bound.value * bound.value - 2.0 * x).abs());
        checked += 1;
    }
    let pass = worst < IDENTITY_TOL;
    report(
        7,
        pass,
        &format!(
            "100 random initial distances: worst |bound^2(0) - 2X| = {worst:.2e} \
             (tolerance {IDENTITY_TOL:.0e})"
        ),
    );
}

#[test]
fn criterion_08_poisson_analytic_residual_and_scaling() {
    // Single-mode closed form at n = 256.
    let amp = 0.3;
    let eps = 0.8;
    let rho = TorusGrid::from_fn(1, 256, |x| 1.0 + amp * (TAU * x[0]).cos()).unwrap();
    let sol = poisson_solve(&rho, eps).unwrap();
    let mut analytic_err = 0.0f64;
    let mut coords = [0.0];
    for flat in 0..256 {
        sol.potential.node_coords(flat, &mut coords);
        let expected = amp * (TAU * coords[0]).cos() / (TAU * TAU * eps * eps);
        analytic_err = analytic_err.max((sol.potential.values()[flat] - expected).abs());
    }
    let analytic_ok = analytic_err <= ANALYTIC_TOL;

    // Residual invariant on random band-limited densities.
    let mut rng = ChaCha8Rng::seed_from_u64(888);
    let mut residual_ok = true;
    let mut worst_residual = 0.0f64;
    for _ in 0..20 {
        let coeffs: Vec<(f64, f64)> = (0..10)
            .map(|_| (0.1 * (rng.gen::<f64>() - 0.5), 0.1 * (rng.gen::<f64>() - 0.5)))
            .collect();
        let rho = TorusGrid::from_fn(1, 128, |x| {
            let mut v = 1.0;
            for (k, (a, b)) in coeffs.iter().enumerate() {
                let wave = TAU * (k + 1) as f64 * x[0];
                v += a * wave.cos() + b * wave.sin();
            }
            v
        })
        .unwrap();
        let sol = poisson_solve(&rho, 0.9).unwrap();
        let rel = sol.residual / sol.source_sup.max(1.0);
        worst_residual = worst_residual.max(rel);
        residual_ok &= rel <= 1e-10;
    }

    // Exact inverse-square scaling in eps, bit for bit.
    let base = poisson_solve(&rho_for_scaling(), 1.0).unwrap();
    let half = poisson_solve(&rho_for_scaling(), 0.5).unwrap();
    let scaling_ok = base
        .potential
        .values()
        .iter()
        .zip(half.potential.values())
        .all(|(a, b)| 4.0 * a == *b);

    let pass = analytic_ok && residual_ok && scaling_ok;
    report(
        8,
        pass,
        &format!(
            "analytic sup error {analytic_err:.2e} at n = 256 (tol {ANALYTIC_TOL:.0e}); worst \
             relative residual {worst_residual:.2e} over 20 random densities; halving eps \
             scales the potential by exactly four: {scaling_ok}"
        ),
    );
}

fn rho_for_scaling() -> TorusGrid {
    TorusGrid::from_fn(1, 128, |x| {
        1.0 + 0.2 * (TAU * x[0]).cos() + 0.1 * (2.0 * TAU * x[0]).sin()
    })
    .unwrap()
}

#[test]
fn criterion_09_field_difference_l2_control_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(999);
    let eps_cycle = [0.5, 0.8, 1.0];
    let mut pass = true;
    let mut worst_ratio = 0.0f64;
    for case in 0..20 {
        let mut coeffs = || -> Vec<(f64, f64)> {
            (0..5)
                .map(|_| (0.12 * (rng.gen::<f64>() - 0.5), 0.12 * (rng.gen::<f64>() - 0.5)))
                .collect()
        };
        let c1 = coeffs();
        let c2 = coeffs();
        let make = |c: &[(f64, f64)]| {
            TorusGrid::from_fn(1, 256, |x| {
                let mut v = 1.0;
                for (k, (a, b)) in c.iter().enumerate() {
                    let wave = TAU * (k + 1) as f64 * x[0];
                    v += a * wave.cos() + b * wave.sin();
                }
                v
            })
            .unwrap()
        };
        let check = verify_loeper_l2(&make(&c1), &make(&c2), eps_cycle[case % 3]).unwrap();
        pass &= check.pass;
        if check.rhs > 0.0 {
            worst_ratio = worst_ratio.max(check.lhs / check.rhs);
        }
    }
    report(
        9,
        pass,
        &format!(
            "20 random trigonometric pairs at n = 256: scaled L2 field difference stayed \
             within the transport control, worst lhs/rhs = {worst_ratio:.3}"
        ),
    );
}

#[test]
fn criterion_10_energy_drift_on_the_vp_run() {
    let traj = vp_trajectory();
    let mut pass = true;
    let mut worst = 0.0f64;
    for side in 0..2 {
        let totals: Vec<f64> = traj
            .snapshots
            .iter()
            .map(|s| {
                let e = if side == 0 {
                    &s.diag.energy_first
                } else {
                    &s.diag.energy_second
                };
                e.total()
            })
            .collect();
        let e0 = totals[0];
        pass &= e0 > 0.0;
        for e in &totals {
            let drift = (e - e0).abs() / e0.abs();
            worst = worst.max(drift);
            pass &= drift <= DRIFT_TOL;
        }
    }
    report(
        10,
        pass,
        &format!("worst relative total-energy drift {worst:.2e} over both ensembles (tol {DRIFT_TOL:.0e})"),
    );
}

fn run_binary(config: &Path, out: &Path, threads: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_kwass"))
        .args([
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ])
        .status()
        .expect("binary launches")
        .success()
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        let mut entries: Vec<_> = std::fs::read_dir(&current)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_11_reruns_are_byte_identical_across_thread_counts() {
    let mut pass = true;
    let mut notes = Vec::new();
    for name in ["free_flow", "smooth_kernel", "vp_eps"] {
        let config = scenario_path(name);
        let tmp = tempfile::tempdir().unwrap();
        let first = tmp.path().join("a");
        let second = tmp.path().join("b");
        let ran = run_binary(&config, &first, "2") && run_binary(&config, &second, "4");
        let ta = tree_bytes(&first);
        let tb = tree_bytes(&second);
        let identical = ran && !ta.is_empty() && ta == tb;
        notes.push(format!(
            "{name}: {} files, threads 2 vs 4 {}",
            ta.len(),
            if identical { "byte-identical" } else { "DIFFER" }
        ));
        pass &= identical;
    }
    report(11, pass, &notes.join("; "));
}
