//! The scenario pipeline: simulate, measure, bound, verify, and the CSV,
//! manifest, and plot artifacts each stage leaves behind.
//!
//! A run writes into a staging directory next to the target and swaps it
//! into place only on success, so a failed run leaves no partial output.
//! All numeric formatting uses Rust's shortest round-trip float syntax,
//! which together with the seeded inputs makes reruns byte-identical.

use crate::scenario::{BoundSection, Scenario, ScenarioError};
use kwass_core::bounds::{
    bootstrap_allowance, combined_curve, compute_q_series, cumulative_trapezoid,
    dobrushin_curve, improved_curve, loeper_classical_curve, loeper_improved_curve,
    measure_a_series, measure_distance, r_curve, verify_bound, BoundCurve, BoundsError,
    QPoint, BOOTSTRAP_MULTIPLIER, BOOTSTRAP_RESAMPLES,
};
use kwass_core::dynamics::{simulate_pair, DynamicsError, PairedTrajectory, SimMode};
use kwass_core::measures::{pair_cost, Coupling, MeasuresError};
use kwass_core::transport::{SolverInfo, WeightFunction};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// How far the pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Simulate,
    Distance,
    Bounds,
    Verify,
    Run,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Distance => "distance",
            Stage::Bounds => "bounds",
            Stage::Verify => "verify",
            Stage::Run => "run",
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Measures(#[from] MeasuresError),
    #[error(transparent)]
    Bounds(#[from] Box<BoundsError>),
    #[error("{0}")]
    Numerical(String),
}

impl From<BoundsError> for PipelineError {
    fn from(e: BoundsError) -> Self {
        PipelineError::Bounds(Box::new(e))
    }
}

impl PipelineError {
    /// Process exit code: 2 for configuration problems, 3 for runtime and
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Scenario(_) => 2,
            _ => 3,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub stage: Option<Stage>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Outcome of a scenario run: verdict (when a verify stage ran), artifact
/// paths relative to `out_dir`, and human-readable verdict lines.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub pass: Option<bool>,
    pub artifacts: Vec<String>,
    pub messages: Vec<String>,
}

#[derive(Serialize)]
struct ManifestRun {
    eps: Option<f64>,
    dir: String,
    pass: Option<bool>,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
struct Manifest {
    name: String,
    seed: u64,
    version: &'static str,
    stage: &'static str,
    mode: String,
    n: usize,
    dim: usize,
    dt: f64,
    t_end: f64,
    snap_every: usize,
    pair: String,
    coupling: String,
    runs: Vec<ManifestRun>,
    pass: Option<bool>,
}

/// Removes a staging directory on drop unless the run completed.
struct StagingGuard {
    path: PathBuf,
    armed: bool,
}

impl Drop for StagingGuard {
    fn drop(&mut self) {
        if self.armed {
            let _ = fs::remove_dir_all(&self.path);
        }
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

fn fmt_flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn eps_dir_label(eps: f64) -> String {
    format!("eps_{eps}")
}

/// A measured distance series for one cost section.
struct MeasuredSeries {
    label: String,
    /// Per snapshot: time, value, exactness, and the realizing plan.
    points: Vec<(f64, f64, bool, Coupling)>,
}

/// A tabulated bound with its scenario section.
struct BoundArtifact {
    label: String,
    section: BoundSection,
    curve: BoundCurve,
}

struct ReportRow {
    label: String,
    target: String,
    pass: bool,
    worst_ratio: f64,
    worst_t: f64,
    max_allowance: f64,
    note: String,
}

/// Runs one scenario through the requested stage. The default stage is
/// [`Stage::Run`] (everything, plus manifest and plot script).
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutcome, PipelineError> {
    scenario.validate()?;
    let stage = opts.stage.unwrap_or(Stage::Run);
    let seed = opts.seed.unwrap_or(scenario.seed);
    let out_dir = opts.out.clone().unwrap_or_else(|| {
        scenario
            .output
            .dir
            .as_ref()
            .map(PathBuf::from)
            .unwrap_or_else(|| Path::new("out").join(&scenario.name))
    });

    let staging = staging_path(&out_dir);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
    let mut guard = StagingGuard {
        path: staging.clone(),
        armed: true,
    };

    let eps_values = scenario.eps_values();
    let multi = eps_values.len() > 1;
    let mut runs = Vec::new();
    let mut all_artifacts = Vec::new();
    let mut messages = Vec::new();
    let mut overall: Option<bool> = None;
    for &eps in &eps_values {
        let (dir_label, sub_dir) = if multi {
            let label = eps_dir_label(eps.expect("multi-run implies poisson"));
            (label.clone(), staging.join(&label))
        } else {
            (".".to_string(), staging.clone())
        };
        fs::create_dir_all(&sub_dir).map_err(|e| io_err(&sub_dir, e))?;
        if multi {
            messages.push(format!("run {dir_label}:"));
        }
        let sub = run_one(scenario, eps, seed, stage, &sub_dir, &mut messages)?;
        for a in &sub.artifacts {
            all_artifacts.push(if multi {
                format!("{dir_label}/{a}")
            } else {
                a.clone()
            });
        }
        overall = match (overall, sub.pass) {
            (acc, None) => acc,
            (None, Some(p)) => Some(p),
            (Some(acc), Some(p)) => Some(acc && p),
        };
        runs.push(ManifestRun {
            eps,
            dir: dir_label,
            pass: sub.pass,
            artifacts: sub.artifacts,
        });
    }

    let manifest = Manifest {
        name: scenario.name.clone(),
        seed,
        version: env!("CARGO_PKG_VERSION"),
        stage: stage.name(),
        mode: scenario.sim.mode.clone(),
        n: scenario.init.n,
        dim: scenario.init.dim,
        dt: scenario.sim.dt,
        t_end: scenario.sim.t_end,
        snap_every: scenario.sim.snap_every,
        pair: scenario.pair.kind.clone(),
        coupling: scenario.pair.coupling.clone(),
        runs,
        pass: overall,
    };
    let manifest_path = staging.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PipelineError::Numerical(format!("manifest serialization: {e}")))?;
    write_text(&manifest_path, &(body + "\n"))?;
    all_artifacts.push("manifest.json".to_string());

    // Swap the finished staging directory into place.
    if out_dir.exists() {
        let meta = fs::metadata(&out_dir).map_err(|e| io_err(&out_dir, e))?;
        if meta.is_dir() {
            fs::remove_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
        } else {
            fs::remove_file(&out_dir).map_err(|e| io_err(&out_dir, e))?;
        }
    } else if let Some(parent) = out_dir.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    fs::rename(&staging, &out_dir).map_err(|e| io_err(&staging, e))?;
    guard.armed = false;

    if let Some(pass) = overall {
        messages.push(format!(
            "verdict: {}",
            if pass { "PASS" } else { "FAIL" }
        ));
    }
    Ok(RunOutcome {
        out_dir,
        pass: overall,
        artifacts: all_artifacts,
        messages,
    })
}

fn staging_path(out_dir: &Path) -> PathBuf {
    let name = out_dir
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "out".to_string());
    out_dir.with_file_name(format!("{name}.staging"))
}

struct SubOutcome {
    pass: Option<bool>,
    artifacts: Vec<String>,
}

fn run_one(
    scenario: &Scenario,
    eps: Option<f64>,
    seed: u64,
    stage: Stage,
    dir: &Path,
    messages: &mut Vec<String>,
) -> Result<SubOutcome, PipelineError> {
    let cfg = scenario.sim_config(eps)?;
    let (mu, nu) = scenario.pair_ensembles(seed)?;
    let pi = scenario.initial_coupling(&mu, &nu)?;
    let traj = simulate_pair(&cfg, &mu, &nu, &pi, scenario.sim.snap_every)?;

    let mut artifacts = Vec::new();
    write_trajectory_csv(&traj, &dir.join("trajectory.csv"))?;
    artifacts.push("trajectory.csv".to_string());
    if stage < Stage::Distance {
        return Ok(SubOutcome {
            pass: None,
            artifacts,
        });
    }

    let measured = measure_all(scenario, &traj)?;
    write_distances_csv(&traj, &measured, &dir.join("distances.csv"))?;
    artifacts.push("distances.csv".to_string());
    if stage < Stage::Bounds {
        return Ok(SubOutcome {
            pass: None,
            artifacts,
        });
    }

    let (bound_artifacts, q_data) = tabulate_bounds(scenario, eps, &traj, &measured)?;
    if !bound_artifacts.is_empty() {
        write_bounds_csv(&traj, &bound_artifacts, &dir.join("bounds.csv"))?;
        artifacts.push("bounds.csv".to_string());
    }
    if let Some((qseries, r_label)) = &q_data {
        let r_curve_ref = bound_artifacts
            .iter()
            .find(|a| &a.label == r_label)
            .map(|a| &a.curve);
        write_qseries_csv(&traj, qseries, r_curve_ref, &dir.join("qseries.csv"))?;
        artifacts.push("qseries.csv".to_string());
    }
    if stage < Stage::Verify {
        return Ok(SubOutcome {
            pass: None,
            artifacts,
        });
    }

    let rows = score_bounds(scenario, seed, &traj, &measured, &bound_artifacts, &q_data)?;
    let pass = if rows.is_empty() {
        None
    } else {
        Some(rows.iter().all(|r| r.pass))
    };
    write_report_csv(&rows, &dir.join("report.csv"))?;
    artifacts.push("report.csv".to_string());
    for row in &rows {
        messages.push(format!(
            "  {}: {} (worst measured/bound {:.6} at t = {}{})",
            row.label,
            if row.pass { "PASS" } else { "FAIL" },
            row.worst_ratio,
            row.worst_t,
            if row.note.is_empty() {
                String::new()
            } else {
                format!("; {}", row.note)
            }
        ));
    }

    if stage >= Stage::Run {
        let plot = render_plot_script(scenario, &measured, &bound_artifacts, q_data.is_some());
        write_text(&dir.join("plot.gp"), &plot)?;
        artifacts.push("plot.gp".to_string());
    }
    Ok(SubOutcome { pass, artifacts })
}

fn write_trajectory_csv(traj: &PairedTrajectory, path: &Path) -> Result<(), PipelineError> {
    let mut out = String::from(
        "t,d,e,x_abs,v_abs,shifted_abs,kinetic_1,potential_1,total_1,kinetic_2,potential_2,total_2\n",
    );
    for snap in &traj.snapshots {
        let d = &snap.diag;
        let pot = |e: &kwass_core::dynamics::EnergyReport| {
            e.field.or(e.interaction).unwrap_or(0.0)
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f(snap.t),
            fmt_f(d.d),
            fmt_f(d.e),
            fmt_f(d.x_abs),
            fmt_f(d.v_abs),
            fmt_f(d.shifted_abs),
            fmt_f(d.energy_first.kinetic),
            fmt_f(pot(&d.energy_first)),
            fmt_f(d.energy_first.total()),
            fmt_f(d.energy_second.kinetic),
            fmt_f(pot(&d.energy_second)),
            fmt_f(d.energy_second.total()),
        );
    }
    write_text(path, &out)
}

fn measure_all(
    scenario: &Scenario,
    traj: &PairedTrajectory,
) -> Result<Vec<MeasuredSeries>, PipelineError> {
    let mut series = Vec::with_capacity(scenario.distance.len());
    for section in &scenario.distance {
        let mut points = Vec::with_capacity(traj.snapshots.len());
        for snap in &traj.snapshots {
            let spec = section.cost_spec(snap.t)?;
            let result = measure_distance(&snap.first, &snap.second, &spec)?;
            let exact = matches!(result.solver, SolverInfo::Exact);
            if !result.solver.converged() {
                return Err(PipelineError::Numerical(format!(
                    "distance {} at t = {} did not converge",
                    section.label(),
                    snap.t
                )));
            }
            points.push((snap.t, result.value, exact, result.plan));
        }
        series.push(MeasuredSeries {
            label: section.label(),
            points,
        });
    }
    Ok(series)
}

fn write_distances_csv(
    traj: &PairedTrajectory,
    measured: &[MeasuredSeries],
    path: &Path,
) -> Result<(), PipelineError> {
    let mut out = String::from("t");
    for s in measured {
        let _ = write!(out, ",{label},{label}_exact", label = s.label);
    }
    out.push('\n');
    for (i, snap) in traj.snapshots.iter().enumerate() {
        let _ = write!(out, "{}", fmt_f(snap.t));
        for s in measured {
            let (_, value, exact, _) = &s.points[i];
            let _ = write!(out, ",{},{}", fmt_f(*value), fmt_flag(*exact));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// The best rigorous upper anchor for the initial distance: the measured
/// value at `t = 0` when that series exists, capped by the initial
/// coupling's own cost (any admissible plan bounds the distance above).
fn anchor_w0(
    scenario: &Scenario,
    section: &BoundSection,
    traj: &PairedTrajectory,
    measured: &[MeasuredSeries],
    default_p: f64,
) -> Result<f64, PipelineError> {
    let spec = match scenario.distance.get(section.distance_index) {
        Some(d) => d.cost_spec(0.0)?,
        None => kwass_core::measures::CostSpec::plain(default_p)?,
    };
    let first = &traj.snapshots[0].first;
    let second = &traj.snapshots[0].second;
    let raw = traj.coupling.integrate(|i, j| {
        pair_cost(
            &spec,
            first.position(i),
            first.velocity(i),
            second.position(j),
            second.velocity(j),
        )
    });
    let coupling_cost = raw.max(0.0).powf(1.0 / spec.p());
    let mut anchor = coupling_cost;
    if let Some(series) = measured.get(section.distance_index) {
        anchor = anchor.min(series.points[0].1);
    }
    Ok(anchor)
}

fn unique_label(base: &str, taken: &[BoundArtifact]) -> String {
    let mut label = base.to_string();
    let mut k = 1;
    while taken.iter().any(|a| a.label == label) {
        k += 1;
        label = format!("{base}_{k}");
    }
    label
}

type QData = Option<(Vec<QPoint>, String)>;

fn tabulate_bounds(
    scenario: &Scenario,
    eps: Option<f64>,
    traj: &PairedTrajectory,
    measured: &[MeasuredSeries],
) -> Result<(Vec<BoundArtifact>, QData), PipelineError> {
    let times = traj.times();
    let mut artifacts: Vec<BoundArtifact> = Vec::new();
    let mut q_data: QData = None;
    for section in &scenario.bounds {
        let label = unique_label(&section.kind, &artifacts);
        let curve = match section.kind.as_str() {
            "dobrushin" | "improved" | "combined" => {
                let b = match section.b {
                    Some(b) => b,
                    None => match &traj.mode {
                        SimMode::Kernel(k) => k.hessian_bound(),
                        SimMode::Free => 0.0,
                        SimMode::Poisson { .. } => {
                            return Err(PipelineError::Numerical(
                                "growth bound in poisson mode needs an explicit b".into(),
                            ))
                        }
                    },
                };
                let w10 = anchor_w0(scenario, section, traj, measured, 1.0)?;
                match section.kind.as_str() {
                    "dobrushin" => dobrushin_curve(b, w10, &times),
                    "improved" => improved_curve(b, w10, &times),
                    _ => combined_curve(b, w10, &times),
                }?
            }
            "loeper_classical" => {
                let w20 = anchor_w0(scenario, section, traj, measured, 2.0)?;
                let rate = section.rate.expect("validated");
                loeper_classical_curve(w20, rate, section.c_d, &times)?
            }
            "loeper_improved" => {
                let w20 = anchor_w0(scenario, section, traj, measured, 2.0)?;
                let eps_eff = eps.expect("validated: poisson mode");
                let a_int = density_integral(scenario, section, traj)?;
                loeper_improved_curve(w20, eps_eff, section.c_d, section.c0, &a_int)?
            }
            "r_of_t" => {
                let eps_eff = eps.expect("validated: poisson mode");
                let weight = match section.weight.as_str() {
                    "capped" => WeightFunction::capped_phi(eps_eff),
                    _ => WeightFunction::log_eps(eps_eff),
                }
                .map_err(|e| PipelineError::Numerical(e.to_string()))?;
                let qseries = compute_q_series(traj, &weight);
                let q0 = qseries[0].q.ok_or_else(|| {
                    PipelineError::Numerical(
                        "initial Q is undefined; cannot anchor the comparison curve".into(),
                    )
                })?;
                let a_int = density_integral(scenario, section, traj)?;
                let curve = r_curve(q0, eps_eff, section.c_d, &a_int)?;
                q_data = Some((qseries, label.clone()));
                curve
            }
            other => {
                return Err(PipelineError::Numerical(format!(
                    "unknown bound kind {other:?}"
                )))
            }
        };
        artifacts.push(BoundArtifact {
            label,
            section: section.clone(),
            curve,
        });
    }
    Ok((artifacts, q_data))
}

/// Cumulative trapezoid integral of the measured density sup-norm sum.
fn density_integral(
    scenario: &Scenario,
    section: &BoundSection,
    traj: &PairedTrajectory,
) -> Result<Vec<(f64, f64)>, PipelineError> {
    let grid_n = section
        .grid_n
        .or(scenario.sim.grid_n)
        .unwrap_or(128);
    let a_series = measure_a_series(traj, grid_n)?;
    Ok(cumulative_trapezoid(&a_series))
}

fn score_bounds(
    scenario: &Scenario,
    seed: u64,
    traj: &PairedTrajectory,
    measured: &[MeasuredSeries],
    artifacts: &[BoundArtifact],
    q_data: &QData,
) -> Result<Vec<ReportRow>, PipelineError> {
    let mut rows = Vec::new();
    for artifact in artifacts {
        let section = &artifact.section;
        if !section.verify {
            continue;
        }
        if section.kind == "r_of_t" {
            let (qseries, _) = q_data
                .as_ref()
                .expect("r_of_t artifact implies q series");
            rows.push(score_r_dominance(&artifact.label, qseries, &artifact.curve));
            continue;
        }
        let series = measured.get(section.distance_index).ok_or_else(|| {
            PipelineError::Numerical(format!(
                "bound {} verifies distance index {} but only {} series were measured",
                artifact.label,
                section.distance_index,
                measured.len()
            ))
        })?;
        let distance_section = &scenario.distance[section.distance_index];
        let mut allowances = Vec::with_capacity(series.points.len());
        for (i, (t, _, _, plan)) in series.points.iter().enumerate() {
            let spec = distance_section.cost_spec(*t)?;
            let snap = &traj.snapshots[i];
            allowances.push(bootstrap_allowance(
                &snap.first,
                &snap.second,
                plan,
                &spec,
                BOOTSTRAP_RESAMPLES,
                BOOTSTRAP_MULTIPLIER,
                seed.wrapping_add(i as u64),
            ));
        }
        let values: Vec<(f64, f64)> = series.points.iter().map(|p| (p.0, p.1)).collect();
        let report = verify_bound(&values, &artifact.curve, &allowances)?;
        let mut worst_ratio = 0.0f64;
        let mut worst_t = values.first().map_or(0.0, |p| p.0);
        for (&(t, v), point) in values.iter().zip(&artifact.curve.points) {
            let ratio = if point.value > 0.0 {
                v / point.value
            } else if v > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst_t = t;
            }
        }
        let max_allowance = allowances.iter().cloned().fold(0.0f64, f64::max);
        let hypothesis_gaps = artifact
            .curve
            .points
            .iter()
            .filter(|p| !p.hypothesis_ok)
            .count();
        let note = if hypothesis_gaps > 0 {
            format!("{hypothesis_gaps} snapshots outside the validity hypotheses")
        } else {
            String::new()
        };
        rows.push(ReportRow {
            label: artifact.label.clone(),
            target: series.label.clone(),
            pass: report.pass,
            worst_ratio,
            worst_t,
            max_allowance,
            note,
        });
    }
    Ok(rows)
}

/// Scores `Q(t) <= R(t)` over the validity window of the comparison curve.
fn score_r_dominance(label: &str, qseries: &[QPoint], curve: &BoundCurve) -> ReportRow {
    let mut pass = true;
    let mut worst_ratio = 0.0f64;
    let mut worst_t = curve.points.first().map_or(0.0, |p| p.t);
    let mut window_end: Option<f64> = None;
    for (q, point) in qseries.iter().zip(&curve.points) {
        if !point.hypothesis_ok {
            continue;
        }
        window_end = Some(point.t);
        match q.q {
            Some(qv) => {
                let ratio = if point.value > 0.0 {
                    qv / point.value
                } else if qv > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst_t = point.t;
                }
                if qv > point.value * (1.0 + 1e-9) {
                    pass = false;
                }
            }
            None => {
                pass = false;
                worst_ratio = f64::INFINITY;
                worst_t = point.t;
            }
        }
    }
    let note = match window_end {
        Some(te) if te < qseries.last().map_or(te, |q| q.t) => {
            format!("validity window ends at t = {te}")
        }
        Some(_) => String::new(),
        None => "validity window is empty".to_string(),
    };
    ReportRow {
        label: label.to_string(),
        target: "q_series".to_string(),
        pass,
        worst_ratio,
        worst_t,
        max_allowance: 0.0,
        note,
    }
}

fn write_bounds_csv(
    traj: &PairedTrajectory,
    artifacts: &[BoundArtifact],
    path: &Path,
) -> Result<(), PipelineError> {
    let mut out = String::from("t");
    for a in artifacts {
        let _ = write!(out, ",{label},{label}_ok", label = a.label);
    }
    out.push('\n');
    for (i, snap) in traj.snapshots.iter().enumerate() {
        let _ = write!(out, "{}", fmt_f(snap.t));
        for a in artifacts {
            let p = &a.curve.points[i];
            let _ = write!(out, ",{},{}", fmt_f(p.value), fmt_flag(p.hypothesis_ok));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

fn write_qseries_csv(
    traj: &PairedTrajectory,
    qseries: &[QPoint],
    r_curve: Option<&BoundCurve>,
    path: &Path,
) -> Result<(), PipelineError> {
    let mut out = String::from("t,d,e,q,defined,degenerate");
    if r_curve.is_some() {
        out.push_str(",r,window_ok");
    }
    out.push('\n');
    for (i, (t, d, e)) in traj.moment_series().into_iter().enumerate() {
        let q = &qseries[i];
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            fmt_f(t),
            fmt_f(d),
            fmt_f(e),
            q.q.map(fmt_f).unwrap_or_default(),
            fmt_flag(q.q.is_some()),
            fmt_flag(q.degenerate),
        );
        if let Some(curve) = r_curve {
            let p = &curve.points[i];
            let _ = write!(out, ",{},{}", fmt_f(p.value), fmt_flag(p.hypothesis_ok));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

fn write_report_csv(rows: &[ReportRow], path: &Path) -> Result<(), PipelineError> {
    let mut out = String::from("label,target,pass,worst_ratio,worst_t,max_allowance,note\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.label,
            r.target,
            fmt_flag(r.pass),
            fmt_f(r.worst_ratio),
            fmt_f(r.worst_t),
            fmt_f(r.max_allowance),
            r.note.replace(',', ";")
        );
    }
    let overall = rows.iter().all(|r| r.pass);
    if !rows.is_empty() {
        let _ = writeln!(out, "overall,,{},,,,", fmt_flag(overall));
    }
    write_text(path, &out)
}

fn render_plot_script(
    scenario: &Scenario,
    measured: &[MeasuredSeries],
    artifacts: &[BoundArtifact],
    has_qseries: bool,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Plots for scenario '{}'.", scenario.name);
    let _ = writeln!(s, "# Usage: gnuplot plot.gp   (writes PNGs next to the CSVs)");
    s.push_str("set datafile separator ','\nset grid\nset key outside\n");
    s.push_str("set terminal pngcairo size 1000,640\nset xlabel 't'\n\n");

    s.push_str("set output 'moments.png'\n");
    let _ = writeln!(s, "set title '{}: coupling moments'", scenario.name);
    s.push_str(
        "plot 'trajectory.csv' using 1:2 with linespoints title 'D(t)', \\\n     \
         'trajectory.csv' using 1:3 with linespoints title 'E(t)', \\\n     \
         'trajectory.csv' using 1:6 with linespoints title 'shifted |dx|'\n\n",
    );

    s.push_str("set output 'energy.png'\n");
    let _ = writeln!(s, "set title '{}: total energy per ensemble'", scenario.name);
    s.push_str(
        "plot 'trajectory.csv' using 1:9 with lines title 'first', \\\n     \
         'trajectory.csv' using 1:12 with lines title 'second'\n\n",
    );

    if !measured.is_empty() {
        s.push_str("set output 'distances.png'\nset logscale y\n");
        let _ = writeln!(s, "set title '{}: measured distances vs bounds'", scenario.name);
        s.push_str("plot ");
        let mut first = true;
        for (k, m) in measured.iter().enumerate() {
            if !first {
                s.push_str(", \\\n     ");
            }
            first = false;
            let col = 2 + 2 * k;
            let _ = write!(
                s,
                "'distances.csv' using 1:{col} with linespoints title '{}'",
                m.label
            );
        }
        for (k, a) in artifacts.iter().enumerate() {
            if a.section.kind == "r_of_t" {
                continue;
            }
            if !first {
                s.push_str(", \\\n     ");
            }
            first = false;
            let col = 2 + 2 * k;
            let _ = write!(
                s,
                "'bounds.csv' using 1:{col} with lines title '{} bound'",
                a.label
            );
        }
        s.push_str("\nunset logscale y\n\n");
    }

    if has_qseries {
        s.push_str("set output 'qseries.png'\nset logscale y\n");
        let _ = writeln!(s, "set title '{}: implicit diagnostic vs comparison curve'", scenario.name);
        s.push_str(
            "plot 'qseries.csv' using 1:4 with linespoints title 'Q(t)', \\\n     \
             'qseries.csv' using 1:7 with lines title 'R(t)'\n",
        );
    }
    s
}

/// Summary row for `kwass list`.
#[derive(Debug, Clone)]
pub struct ScenarioSummary {
    pub path: PathBuf,
    pub name: String,
    pub mode: String,
    pub n: usize,
    pub t_end: f64,
    pub error: Option<String>,
}

/// Parses every `.toml` / `.json` file in a directory, sorted by name.
pub fn list_scenarios(dir: &Path) -> Result<Vec<ScenarioSummary>, PipelineError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("toml") | Some("json")
            )
        })
        .collect();
    paths.sort();
    let mut rows = Vec::new();
    for path in paths {
        match Scenario::load(&path).and_then(|s| s.validate().map(|_| s)) {
            Ok(s) => rows.push(ScenarioSummary {
                path,
                name: s.name,
                mode: s.sim.mode,
                n: s.init.n,
                t_end: s.sim.t_end,
                error: None,
            }),
            Err(e) => rows.push(ScenarioSummary {
                path,
                name: String::new(),
                mode: String::new(),
                n: 0,
                t_end: 0.0,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(rows)
}
