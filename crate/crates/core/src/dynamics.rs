//! Characteristic-flow integration for single ensembles and coupled pairs.
//!
//! Particles follow `dx/dt = v`, `dv/dt = F(x)` where the force is zero
//! (free streaming), a smooth-kernel convolution, or the self-consistent
//! spectral Poisson field of the ensemble's own deposited density. Time
//! stepping is kick-drift-kick leapfrog with one force evaluation per step
//! (the closing kick's force is carried into the next step), which keeps
//! the scheme second order and time-reversible.
//!
//! [`simulate_pair`] advances two ensembles under their own fields while
//! holding a fixed initial coupling between them, recording the coupling
//! moments the stability bounds consume: the halved quadratic moments in
//! position and velocity, their absolute first-moment analogues, and the
//! free-streaming-compensated position moment.

use crate::fields::{
    deposit_density, kernel_force_all, poisson_solve, FieldSolution, FieldsError, KernelSpec,
};
use crate::measures::{
    min_image, validate_coupling, Coupling, MeasuresError, PhaseEnsemble,
};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid configuration: {reason}")]
    BadConfig { reason: String },
    #[error("force on particle {particle} is not finite at t = {t}")]
    NonFiniteForce { particle: usize, t: f64 },
    #[error("coupling does not transport the first ensemble onto the second (max residual {residual})")]
    CouplingMismatch { residual: f64 },
    #[error("ensembles live in different dimensions: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Fields(#[from] FieldsError),
    #[error(transparent)]
    Measures(#[from] MeasuresError),
}

/// Force law selection.
#[derive(Debug, Clone, PartialEq)]
pub enum SimMode {
    Free,
    Kernel(KernelSpec),
    Poisson { eps: f64, grid_n: usize },
}

impl SimMode {
    pub fn name(&self) -> &'static str {
        match self {
            SimMode::Free => "free",
            SimMode::Kernel(_) => "kernel",
            SimMode::Poisson { .. } => "poisson",
        }
    }
}

/// Integration parameters shared by every run.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub mode: SimMode,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(DynamicsError::BadConfig {
                reason: format!("dt must be positive and finite, got {}", self.dt),
            });
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(DynamicsError::BadConfig {
                reason: format!("t_end must be nonnegative and finite, got {}", self.t_end),
            });
        }
        if let SimMode::Poisson { eps, grid_n } = &self.mode {
            if !(*eps > 0.0 && *eps <= 1.0) {
                return Err(DynamicsError::BadConfig {
                    reason: format!("poisson mode needs eps in (0, 1], got {eps}"),
                });
            }
            if *grid_n < 4 {
                return Err(DynamicsError::BadConfig {
                    reason: format!("poisson grid needs at least 4 nodes per axis, got {grid_n}"),
                });
            }
        }
        Ok(())
    }
}

/// Exact free streaming: `x <- x + t v` wrapped, velocities unchanged.
pub fn free_transport(ens: &PhaseEnsemble, t: f64) -> PhaseEnsemble {
    let mut out = ens.clone();
    let positions: Vec<f64> = ens
        .positions_flat()
        .iter()
        .zip(ens.velocities_flat())
        .map(|(x, v)| x + t * v)
        .collect();
    out.set_state(positions, ens.velocities_flat().to_vec())
        .expect("state lengths are unchanged");
    out
}

/// Per-mode force evaluator. Poisson mode keeps the most recent field
/// solution around so snapshot energies can read it without a re-solve.
pub struct ForceEvaluator {
    mode: SimMode,
    /// Field solution matching the positions of the last evaluation.
    pub last_field: Option<FieldSolution>,
}

impl ForceEvaluator {
    pub fn new(mode: SimMode) -> Self {
        ForceEvaluator {
            mode,
            last_field: None,
        }
    }

    pub fn mode(&self) -> &SimMode {
        &self.mode
    }

    /// Flattened `n*dim` force at every particle position.
    pub fn eval(&mut self, ens: &PhaseEnsemble, t: f64) -> Result<Vec<f64>, DynamicsError> {
        let forces = match &self.mode {
            SimMode::Free => vec![0.0; ens.len() * ens.dim()],
            SimMode::Kernel(kernel) => kernel_force_all(ens, kernel),
            SimMode::Poisson { eps, grid_n } => {
                let rho = deposit_density(ens, *grid_n)?;
                let sol = poisson_solve(&rho, *eps)?;
                let dim = ens.dim();
                let mut out = vec![0.0; ens.len() * dim];
                out.par_chunks_mut(dim).enumerate().for_each(|(i, slot)| {
                    let f = sol.force_at(ens.position(i));
                    slot.copy_from_slice(&f);
                });
                self.last_field = Some(sol);
                out
            }
        };
        if let Some(particle) = first_non_finite(&forces, ens.dim()) {
            return Err(DynamicsError::NonFiniteForce { particle, t });
        }
        Ok(forces)
    }
}

fn first_non_finite(flat: &[f64], dim: usize) -> Option<usize> {
    flat.iter().position(|f| !f.is_finite()).map(|p| p / dim)
}

/// One kick-drift-kick step given the force at the current positions.
/// Returns the force at the new positions for reuse by the caller.
fn step_kdk(
    ens: &mut PhaseEnsemble,
    force_start: &[f64],
    evaluator: &mut ForceEvaluator,
    dt: f64,
    t_next: f64,
) -> Result<Vec<f64>, DynamicsError> {
    let half = 0.5 * dt;
    let n = ens.len() * ens.dim();
    debug_assert_eq!(force_start.len(), n);
    let mut velocities: Vec<f64> = ens
        .velocities_flat()
        .iter()
        .zip(force_start)
        .map(|(v, f)| v + half * f)
        .collect();
    let positions: Vec<f64> = ens
        .positions_flat()
        .iter()
        .zip(&velocities)
        .map(|(x, v)| x + dt * v)
        .collect();
    ens.set_state(positions, velocities.clone())?;
    let force_end = evaluator.eval(ens, t_next)?;
    for (v, f) in velocities.iter_mut().zip(&force_end) {
        *v += half * f;
    }
    ens.set_state(ens.positions_flat().to_vec(), velocities)?;
    Ok(force_end)
}

/// Single leapfrog step with a caller-supplied force law.
///
/// Negative `dt` steps backwards; a forward step followed by the matching
/// backward step returns to the input state up to roundoff.
pub fn step(
    ens: &PhaseEnsemble,
    evaluator: &mut ForceEvaluator,
    dt: f64,
) -> Result<PhaseEnsemble, DynamicsError> {
    if !dt.is_finite() {
        return Err(DynamicsError::BadConfig {
            reason: format!("step size must be finite, got {dt}"),
        });
    }
    let mut out = ens.clone();
    let f0 = evaluator.eval(&out, 0.0)?;
    step_kdk(&mut out, &f0, evaluator, dt, dt)?;
    Ok(out)
}

/// Energy split of one ensemble at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    /// `1/2 sum w |v|^2`.
    pub kinetic: f64,
    /// Poisson field term `(eps^2/2) mean |grad U|^2`, when applicable.
    pub field: Option<f64>,
    /// Kernel interaction term `-1/2 sum_ij w_i w_j K(x_i - x_j)`, when applicable.
    pub interaction: Option<f64>,
}

impl EnergyReport {
    pub fn total(&self) -> f64 {
        self.kinetic + self.field.unwrap_or(0.0) + self.interaction.unwrap_or(0.0)
    }
}

/// `1/2 sum_i w_i |v_i|^2` in fixed particle order.
pub fn kinetic_energy(ens: &PhaseEnsemble) -> f64 {
    let mut acc = 0.0;
    for i in 0..ens.len() {
        let v = ens.velocity(i);
        let sq: f64 = v.iter().map(|c| c * c).sum();
        acc += 0.5 * ens.weight(i) * sq;
    }
    acc
}

/// `-1/2 sum_ij w_i w_j K(x_i - x_j)`; full double sum, self-terms included
/// (they contribute the constant `-K(0)` per unit mass).
///
/// The sign makes this the potential energy of the flow whose force is the
/// weighted sum of kernel gradients, so `kinetic + interaction` is the
/// conserved total along kernel-mode trajectories.
pub fn kernel_interaction_energy(ens: &PhaseEnsemble, kernel: &KernelSpec) -> f64 {
    let dim = ens.dim();
    let halves: Vec<f64> = (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let xi = ens.position(i);
            let mut dx = vec![0.0; dim];
            let mut acc = 0.0;
            for j in 0..ens.len() {
                let xj = ens.position(j);
                for a in 0..dim {
                    dx[a] = xi[a] - xj[a];
                }
                acc += ens.weight(j) * kernel.potential(&dx);
            }
            -0.5 * ens.weight(i) * acc
        })
        .collect();
    halves.iter().sum()
}

/// Energy of an ensemble in a given mode, with the poisson field solution
/// supplied by the caller (it must match the ensemble's current positions).
pub fn energy(ens: &PhaseEnsemble, mode: &SimMode, field: Option<&FieldSolution>) -> EnergyReport {
    let kinetic = kinetic_energy(ens);
    match mode {
        SimMode::Free => EnergyReport {
            kinetic,
            field: None,
            interaction: None,
        },
        SimMode::Kernel(kernel) => EnergyReport {
            kinetic,
            field: None,
            interaction: Some(kernel_interaction_energy(ens, kernel)),
        },
        SimMode::Poisson { .. } => EnergyReport {
            kinetic,
            field: field.map(|f| f.field_energy()),
            interaction: None,
        },
    }
}

/// Coupling moments of a pair state at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDiagnostics {
    /// `1/2 integral |X1 - X2|^2 dpi0`, torus-geodesic displacement.
    pub d: f64,
    /// `1/2 integral |V1 - V2|^2 dpi0`.
    pub e: f64,
    /// `integral |X1 - X2| dpi0`.
    pub x_abs: f64,
    /// `integral |V1 - V2| dpi0`.
    pub v_abs: f64,
    /// `integral |minimg((X1 - X2) - t (V1 - V2))| dpi0`: the position
    /// moment with free streaming compensated.
    pub shifted_abs: f64,
    pub energy_first: EnergyReport,
    pub energy_second: EnergyReport,
}

/// One recorded instant of a paired run.
#[derive(Debug, Clone)]
pub struct PairSnapshot {
    pub t: f64,
    pub first: PhaseEnsemble,
    pub second: PhaseEnsemble,
    pub diag: PairDiagnostics,
}

/// A paired trajectory: both ensembles at each snapshot plus the fixed
/// initial coupling whose index pairs the diagnostics integrate over.
#[derive(Debug, Clone)]
pub struct PairedTrajectory {
    pub snapshots: Vec<PairSnapshot>,
    pub coupling: Coupling,
    pub mode: SimMode,
}

impl PairedTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// `(t, D, E)` rows for the implicit-weight diagnostics.
    pub fn moment_series(&self) -> Vec<(f64, f64, f64)> {
        self.snapshots.iter().map(|s| (s.t, s.diag.d, s.diag.e)).collect()
    }
}

fn pair_moments(
    first: &PhaseEnsemble,
    second: &PhaseEnsemble,
    coupling: &Coupling,
    t: f64,
) -> (f64, f64, f64, f64, f64) {
    let dim = first.dim();
    let mut d = 0.0;
    let mut e = 0.0;
    let mut x_abs = 0.0;
    let mut v_abs = 0.0;
    let mut shifted_abs = 0.0;
    for entry in coupling.entries() {
        let x1 = first.position(entry.source);
        let v1 = first.velocity(entry.source);
        let x2 = second.position(entry.target);
        let v2 = second.velocity(entry.target);
        let mut dx_sq = 0.0;
        let mut dv_sq = 0.0;
        let mut shift_sq = 0.0;
        for a in 0..dim {
            let dx = min_image(x1[a] - x2[a]);
            let dv = v1[a] - v2[a];
            let ds = min_image(x1[a] - x2[a] - t * dv);
            dx_sq += dx * dx;
            dv_sq += dv * dv;
            shift_sq += ds * ds;
        }
        d += 0.5 * entry.mass * dx_sq;
        e += 0.5 * entry.mass * dv_sq;
        x_abs += entry.mass * dx_sq.sqrt();
        v_abs += entry.mass * dv_sq.sqrt();
        shifted_abs += entry.mass * shift_sq.sqrt();
    }
    (d, e, x_abs, v_abs, shifted_abs)
}

/// Advances a coupled pair of ensembles and records snapshot diagnostics.
///
/// Both ensembles evolve under their own self-consistent force; the
/// coupling is fixed at `t = 0` and only weighs the diagnostics. Snapshots
/// land every `snap_every` steps (and always at `t = 0` and `t_end`). The
/// step count must divide the horizon: `t_end / dt` is required to be an
/// integer within 1e-9 so recorded times are exact multiples of `dt`.
pub fn simulate_pair(
    cfg: &SimConfig,
    mu0: &PhaseEnsemble,
    nu0: &PhaseEnsemble,
    pi0: &Coupling,
    snap_every: usize,
) -> Result<PairedTrajectory, DynamicsError> {
    cfg.validate()?;
    if mu0.dim() != nu0.dim() {
        return Err(DynamicsError::DimensionMismatch(mu0.dim(), nu0.dim()));
    }
    if snap_every == 0 {
        return Err(DynamicsError::BadConfig {
            reason: "snap_every must be at least 1".into(),
        });
    }
    let check = validate_coupling(pi0, mu0, nu0)?;
    if !check.pass {
        return Err(DynamicsError::CouplingMismatch {
            residual: check.max_residual,
        });
    }
    let steps_f = cfg.t_end / cfg.dt;
    let steps = steps_f.round() as usize;
    if (steps_f - steps as f64).abs() > 1e-9 {
        return Err(DynamicsError::BadConfig {
            reason: format!(
                "t_end = {} is not an integer number of dt = {} steps",
                cfg.t_end, cfg.dt
            ),
        });
    }

    let mut first = mu0.clone();
    let mut second = nu0.clone();
    let mut eval_first = ForceEvaluator::new(cfg.mode.clone());
    let mut eval_second = ForceEvaluator::new(cfg.mode.clone());
    let mut force_first = eval_first.eval(&first, 0.0)?;
    let mut force_second = eval_second.eval(&second, 0.0)?;

    let mut snapshots = Vec::new();
    let record = |first: &PhaseEnsemble,
                  second: &PhaseEnsemble,
                  eval_first: &ForceEvaluator,
                  eval_second: &ForceEvaluator,
                  t: f64|
     -> PairSnapshot {
        let (d, e, x_abs, v_abs, shifted_abs) = pair_moments(first, second, pi0, t);
        let diag = PairDiagnostics {
            d,
            e,
            x_abs,
            v_abs,
            shifted_abs,
            energy_first: energy(first, &cfg.mode, eval_first.last_field.as_ref()),
            energy_second: energy(second, &cfg.mode, eval_second.last_field.as_ref()),
        };
        PairSnapshot {
            t,
            first: first.clone(),
            second: second.clone(),
            diag,
        }
    };
    snapshots.push(record(&first, &second, &eval_first, &eval_second, 0.0));

    for k in 1..=steps {
        let t_next = k as f64 * cfg.dt;
        force_first = step_kdk(&mut first, &force_first, &mut eval_first, cfg.dt, t_next)?;
        force_second = step_kdk(&mut second, &force_second, &mut eval_second, cfg.dt, t_next)?;
        if k % snap_every == 0 || k == steps {
            snapshots.push(record(&first, &second, &eval_first, &eval_second, t_next));
        }
    }

    Ok(PairedTrajectory {
        snapshots,
        coupling: pi0.clone(),
        mode: cfg.mode.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_particles() -> PhaseEnsemble {
        PhaseEnsemble::uniform(1, vec![0.2, 0.8], vec![0.5, -0.5]).unwrap()
    }

    #[test]
    fn free_transport_wraps() {
        let ens = PhaseEnsemble::new(1, vec![0.2], vec![0.5], vec![1.0]).unwrap();
        let moved = free_transport(&ens, 1.0);
        assert_abs_diff_eq!(moved.position(0)[0], 0.7, epsilon = 1e-15);
        let ens2 = PhaseEnsemble::new(1, vec![0.8], vec![0.5], vec![1.0]).unwrap();
        let moved2 = free_transport(&ens2, 1.0);
        assert_abs_diff_eq!(moved2.position(0)[0], 0.3, epsilon = 1e-15);
        assert_eq!(moved2.velocity(0)[0], 0.5);
    }

    #[test]
    fn free_transport_composes() {
        let ens = two_particles();
        let a = free_transport(&free_transport(&ens, 0.3), 0.45);
        let b = free_transport(&ens, 0.75);
        for i in 0..ens.len() {
            assert_abs_diff_eq!(a.position(i)[0], b.position(i)[0], epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_force_step_equals_free_transport() {
        let ens = two_particles();
        let mut eval = ForceEvaluator::new(SimMode::Free);
        let stepped = step(&ens, &mut eval, 0.05).unwrap();
        let streamed = free_transport(&ens, 0.05);
        for i in 0..ens.len() {
            assert_abs_diff_eq!(
                stepped.position(i)[0],
                streamed.position(i)[0],
                epsilon = 1e-15
            );
            assert_eq!(stepped.velocity(i)[0], streamed.velocity(i)[0]);
        }
    }

    #[test]
    fn leapfrog_reverses_in_kernel_mode() {
        let ens = PhaseEnsemble::uniform(1, vec![0.1, 0.35, 0.6, 0.9], vec![0.3, -0.2, 0.1, 0.0])
            .unwrap();
        let kernel = KernelSpec::single_mode(1.0).unwrap();
        let mut eval = ForceEvaluator::new(SimMode::Kernel(kernel));
        let fwd = step(&ens, &mut eval, 0.05).unwrap();
        let back = step(&fwd, &mut eval, -0.05).unwrap();
        for i in 0..ens.len() {
            assert_abs_diff_eq!(back.position(i)[0], ens.position(i)[0], epsilon = 1e-12);
            assert_abs_diff_eq!(back.velocity(i)[0], ens.velocity(i)[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn symmetric_pair_keeps_center_of_mass_velocity() {
        let ens = PhaseEnsemble::uniform(1, vec![0.4, 0.6], vec![0.25, -0.25]).unwrap();
        let kernel = KernelSpec::single_mode(1.0).unwrap();
        let mut eval = ForceEvaluator::new(SimMode::Kernel(kernel));
        let mut state = ens;
        for _ in 0..40 {
            state = step(&state, &mut eval, 0.01).unwrap();
        }
        let com_v = 0.5 * (state.velocity(0)[0] + state.velocity(1)[0]);
        assert_abs_diff_eq!(com_v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let bad_dt = SimConfig {
            dt: 0.0,
            t_end: 1.0,
            mode: SimMode::Free,
        };
        assert!(matches!(bad_dt.validate(), Err(DynamicsError::BadConfig { .. })));
        let bad_eps = SimConfig {
            dt: 0.1,
            t_end: 1.0,
            mode: SimMode::Poisson { eps: 1.5, grid_n: 32 },
        };
        assert!(matches!(bad_eps.validate(), Err(DynamicsError::BadConfig { .. })));
        let ok = SimConfig {
            dt: 0.1,
            t_end: 1.0,
            mode: SimMode::Poisson { eps: 1.0, grid_n: 32 },
        };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn identical_pair_stays_degenerate() {
        let ens = PhaseEnsemble::uniform(1, vec![0.2, 0.5, 0.8], vec![0.1, -0.3, 0.2]).unwrap();
        let pi = Coupling::diagonal(&ens);
        let cfg = SimConfig {
            dt: 0.05,
            t_end: 0.5,
            mode: SimMode::Kernel(KernelSpec::single_mode(1.0).unwrap()),
        };
        let traj = simulate_pair(&cfg, &ens, &ens, &pi, 2).unwrap();
        for snap in &traj.snapshots {
            assert_eq!(snap.diag.d, 0.0);
            assert_eq!(snap.diag.e, 0.0);
            assert_eq!(snap.diag.x_abs, 0.0);
        }
    }

    #[test]
    fn velocity_shift_free_flow_moments() {
        // nu equals mu with every velocity shifted by delta: E is constant
        // delta^2/2, D grows as (t delta)^2/2 before any wrap matters.
        let delta = 1e-3;
        let mu = PhaseEnsemble::uniform(1, vec![0.1, 0.4, 0.7], vec![0.0, 0.2, -0.1]).unwrap();
        let nu = PhaseEnsemble::uniform(
            1,
            vec![0.1, 0.4, 0.7],
            vec![delta, 0.2 + delta, -0.1 + delta],
        )
        .unwrap();
        let pi = Coupling::diagonal(&mu);
        let cfg = SimConfig {
            dt: 0.25,
            t_end: 1.0,
            mode: SimMode::Free,
        };
        let traj = simulate_pair(&cfg, &mu, &nu, &pi, 1).unwrap();
        for snap in &traj.snapshots {
            let t = snap.t;
            assert_abs_diff_eq!(snap.diag.e, 0.5 * delta * delta, epsilon = 1e-18);
            assert_abs_diff_eq!(snap.diag.d, 0.5 * (t * delta).powi(2), epsilon = 1e-12);
            assert_abs_diff_eq!(snap.diag.x_abs, t * delta, epsilon = 1e-9);
            // Free streaming compensated: the shifted moment stays at 0.
            assert_abs_diff_eq!(snap.diag.shifted_abs, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn kernel_zero_matches_free_bitwise() {
        let mu = PhaseEnsemble::uniform(1, vec![0.15, 0.55, 0.95], vec![0.4, -0.2, 0.05]).unwrap();
        let pi = Coupling::diagonal(&mu);
        let free_cfg = SimConfig {
            dt: 0.05,
            t_end: 1.0,
            mode: SimMode::Free,
        };
        let kernel_cfg = SimConfig {
            dt: 0.05,
            t_end: 1.0,
            mode: SimMode::Kernel(KernelSpec::zero()),
        };
        let a = simulate_pair(&free_cfg, &mu, &mu, &pi, 4).unwrap();
        let b = simulate_pair(&kernel_cfg, &mu, &mu, &pi, 4).unwrap();
        assert_eq!(a.snapshots.len(), b.snapshots.len());
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(sa.first.positions_flat(), sb.first.positions_flat());
            assert_eq!(sa.first.velocities_flat(), sb.first.velocities_flat());
        }
    }

    #[test]
    fn snapshot_cadence_and_horizon() {
        let mu = two_particles();
        let pi = Coupling::diagonal(&mu);
        let cfg = SimConfig {
            dt: 0.1,
            t_end: 1.0,
            mode: SimMode::Free,
        };
        let traj = simulate_pair(&cfg, &mu, &mu, &pi, 3).unwrap();
        let times = traj.times();
        // Steps 3, 6, 9 plus forced 0 and final step 10.
        assert_eq!(times.len(), 5);
        assert_abs_diff_eq!(times[0], 0.0);
        assert_abs_diff_eq!(times[1], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(times[4], 1.0, epsilon = 1e-15);
        let bad = SimConfig {
            dt: 0.3,
            t_end: 1.0,
            mode: SimMode::Free,
        };
        assert!(matches!(
            simulate_pair(&bad, &mu, &mu, &pi, 1),
            Err(DynamicsError::BadConfig { .. })
        ));
    }

    #[test]
    fn unit_speed_kinetic_energy() {
        let ens = PhaseEnsemble::uniform(1, vec![0.1, 0.9], vec![1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(kinetic_energy(&ens), 0.5, epsilon = 1e-15);
        let report = energy(&ens, &SimMode::Free, None);
        assert_eq!(report.total(), report.kinetic);
    }

    #[test]
    fn uniform_density_has_zero_field_energy() {
        // Particles exactly on the nodes deposit a flat density.
        let n = 8usize;
        let ens = PhaseEnsemble::uniform(
            1,
            (0..n).map(|i| i as f64 / n as f64).collect(),
            vec![0.0; n],
        )
        .unwrap();
        let mut eval = ForceEvaluator::new(SimMode::Poisson { eps: 1.0, grid_n: n });
        let _ = eval.eval(&ens, 0.0).unwrap();
        let sol = eval.last_field.as_ref().unwrap();
        assert!(sol.field_energy() < 1e-26);
    }

    #[test]
    fn weights_never_change_along_a_run() {
        let mu = PhaseEnsemble::new(
            1,
            vec![0.2, 0.6, 0.9],
            vec![0.3, -0.4, 0.1],
            vec![0.5, 0.25, 0.25],
        )
        .unwrap();
        let pi = Coupling::diagonal(&mu);
        let cfg = SimConfig {
            dt: 0.02,
            t_end: 0.2,
            mode: SimMode::Kernel(KernelSpec::single_mode(0.5).unwrap()),
        };
        let traj = simulate_pair(&cfg, &mu, &mu, &pi, 5).unwrap();
        for snap in &traj.snapshots {
            assert_eq!(snap.first.weights(), mu.weights());
            assert_eq!(snap.second.weights(), mu.weights());
        }
    }
}
