//! Optimal-transport distances between phase-space ensembles.
//!
//! | function | role |
//! |---|---|
//! | [`solve_exact`] | exact plan (assignment or min-cost flow) |
//! | [`solve_entropic`] | log-domain Sinkhorn with feasibility rounding |
//! | [`wasserstein`] | dispatching front end returning the rooted distance |
//! | [`kantorovich_lower_bound`] | dual lower bound from a 1-Lipschitz witness |
//! | [`implicit_weight_solve`] | root of `q - Phi(q) r = s` for a weight function |
//! | [`nonlinear_wasserstein`] | alternating solve for the weight-implicit distance |
//!
//! The nonlinear distance replaces the fixed position weight `lambda` of the
//! anisotropic cost with `Phi(value)` evaluated at the distance itself; the
//! alternation solves a transport problem at frozen `lambda`, re-solves the
//! scalar fixed point from the plan's moments, and repeats. Any stationary
//! point is a global optimum: if a plan is cost-optimal for `lambda* =
//! Phi(q*)` then every competing plan's implicit value is at least `q*`
//! because `Phi` is decreasing. The returned value is always realized by a
//! concrete coupling, so it is an upper bound for the infimum in exact
//! arithmetic and equal to it at any converged fixed point.

mod entropic;
mod exact;

use crate::measures::{
    pair_cost, validate_coupling, CostSpec, Coupling, CouplingEntry, MeasuresError, PhaseEnsemble,
    COUPLING_MASS_FLOOR,
};
use rayon::prelude::*;
use thiserror::Error;

/// Default particle cap for the exact solver.
pub const DEFAULT_EXACT_CAP: usize = 5000;

/// Residual target for [`implicit_weight_solve`]: `|q - Phi(q) r - s| <
/// IMPLICIT_RESIDUAL_TOL * max(1, s)`.
pub const IMPLICIT_RESIDUAL_TOL: f64 = 1e-12;

/// Empirical Lipschitz estimates above `1 + LIPSCHITZ_SLACK` reject the witness.
pub const LIPSCHITZ_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Measures(#[from] MeasuresError),
    #[error("ensembles live in different dimensions: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(
        "instance with {points} points exceeds the exact-solver cap {cap}; \
         use solve_entropic or raise the cap"
    )]
    CapacityExceeded { points: usize, cap: usize },
    #[error("witness is not 1-Lipschitz: empirical constant {estimate} on sampled pairs")]
    LipschitzViolation { estimate: f64 },
    #[error("no root: the log weight needs a velocity moment below 1, got s = {s}")]
    NoRoot { s: f64 },
    #[error("weight function is undefined at {argument}: {reason}")]
    WeightDomain { argument: f64, reason: &'static str },
    #[error("moment arguments must be nonnegative and finite, got r = {r}, s = {s}")]
    BadMoments { r: f64, s: f64 },
    #[error("implicit solve did not reach the residual target (best residual {residual})")]
    ImplicitNotConverged { residual: f64 },
}

/// Which backend produced a [`TransportResult`], plus its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverInfo {
    Exact,
    Entropic {
        eta: f64,
        iterations: usize,
        marginal_residual: f64,
        converged: bool,
    },
}

impl SolverInfo {
    pub fn converged(&self) -> bool {
        match self {
            SolverInfo::Exact => true,
            SolverInfo::Entropic { converged, .. } => *converged,
        }
    }
}

/// A transport plan with its objective.
///
/// `raw_objective` is the plan integral of the ground cost; `value` is its
/// `1/p` power (the distance). The plan always passes
/// [`validate_coupling`] against the inputs.
#[derive(Debug, Clone)]
pub struct TransportResult {
    pub plan: Coupling,
    pub value: f64,
    pub raw_objective: f64,
    pub solver: SolverInfo,
}

/// Options for the exact solver. `max_points` caps `max(|mu|, |nu|)`.
#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    pub max_points: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            max_points: DEFAULT_EXACT_CAP,
        }
    }
}

fn check_dims(mu: &PhaseEnsemble, nu: &PhaseEnsemble) -> Result<(), TransportError> {
    if mu.dim() != nu.dim() {
        return Err(TransportError::DimensionMismatch(mu.dim(), nu.dim()));
    }
    Ok(())
}

/// Dense row-major cost matrix between two ensembles.
pub fn cost_matrix(mu: &PhaseEnsemble, nu: &PhaseEnsemble, spec: &CostSpec) -> Vec<f64> {
    let m = mu.len();
    let n = nu.len();
    let mut cost = vec![0.0; m * n];
    cost.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = mu.position(i);
        let vi = mu.velocity(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = pair_cost(spec, xi, vi, nu.position(j), nu.velocity(j));
        }
    });
    cost
}

fn plan_objective(plan: &Coupling, cost: &[f64], n: usize) -> f64 {
    plan.entries()
        .iter()
        .map(|e| e.mass * cost[e.source * n + e.target])
        .sum()
}

fn result_from_plan(
    plan: Coupling,
    cost: &[f64],
    n: usize,
    p: f64,
    solver: SolverInfo,
) -> TransportResult {
    let raw = plan_objective(&plan, cost, n);
    TransportResult {
        plan,
        value: raw.max(0.0).powf(1.0 / p),
        raw_objective: raw,
        solver,
    }
}

/// Exact optimal transport with the default cap.
pub fn solve_exact(
    mu: &PhaseEnsemble,
    nu: &PhaseEnsemble,
    spec: &CostSpec,
) -> Result<TransportResult, TransportError> {
    solve_exact_with(mu, nu, spec, &ExactOptions::default())
}

/// Exact optimal transport.
///
/// Equal-size uniform-weight instances go through the assignment solver
/// (ties canonicalized to the lexicographically smallest optimal matching);
/// anything else through the transportation network. Instances larger than
/// `opts.max_points` return [`TransportError::CapacityExceeded`].
pub fn solve_exact_with(
    mu: &PhaseEnsemble,
    nu: &PhaseEnsemble,
    spec: &CostSpec,
    opts: &ExactOptions,
) -> Result<TransportResult, TransportError> {
    check_dims(mu, nu)?;
    let points = mu.len().max(nu.len());
    if points > opts.max_points {
        return Err(TransportError::CapacityExceeded {
            points,
            cap: opts.max_points,
        });
    }
    let cost = cost_matrix(mu, nu, spec);
    let n = nu.len();
    let uniform = mu.len() == nu.len()
        && mu.has_uniform_weights(1e-12)
        && nu.has_uniform_weights(1e-12);
    let plan = if uniform {
        let size = mu.len();
        let mut assign = exact::solve_assignment(size, &cost);
        exact::canonicalize_assignment(size, &cost, &mut assign);
        let w = 1.0 / size as f64;
        let entries = assign
            .iter()
            .enumerate()
            .map(|(i, &j)| CouplingEntry {
                source: i,
                target: j,
                mass: w,
            })
            .collect();
        Coupling::from_entries(entries, size, size)?
    } else {
        let plan = exact::solve_transportation(mu.weights(), nu.weights(), &cost);
        let entries = plan
            .into_iter()
            .map(|(i, j, f)| CouplingEntry {
                source: i,
                target: j,
                mass: f,
            })
            .collect();
        Coupling::truncated_renormalized(entries, mu.len(), nu.len())?
    };
    debug_assert!(validate_coupling(&plan, mu, nu).map(|c| c.pass).unwrap_or(false));
    Ok(result_from_plan(plan, &cost, n, spec.p(), SolverInfo::Exact))
}

/// Entropically regularized transport, rounded to exact marginals.
///
/// Non-convergence within `max_iter` is reported through the solver flags,
/// not an error: the rounded plan is still a valid coupling.
pub fn solve_entropic(
    mu: &PhaseEnsemble,
    nu: &PhaseEnsemble,
    spec: &CostSpec,
    eta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<TransportResult, TransportError> {
    check_dims(mu, nu)?;
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(MeasuresError::InvalidCostSpec {
            reason: format!("entropic regularization must be positive, got {eta}"),
        }
        .into());
    }
    let cost = cost_matrix(mu, nu, spec);
    let n = nu.len();
    let state = entropic::sinkhorn_log(mu.weights(), nu.weights(), &cost, eta, tol, max_iter);
    let raw_plan = entropic::round_to_feasible(
        mu.weights(),
        nu.weights(),
        &cost,
        &state,
        eta,
        COUPLING_MASS_FLOOR,
    );
    let entries = raw_plan
        .into_iter()
        .map(|(i, j, f)| CouplingEntry {
            source: i,
            target: j,
            mass: f,
        })
        .collect();
    let plan = Coupling::truncated_renormalized(entries, mu.len(), nu.len())?;
    let solver = SolverInfo::Entropic {
        eta,
        iterations: state.iterations,
        marginal_residual: state.residual,
        converged: state.converged,
    };
    Ok(result_from_plan(plan, &cost, n, spec.p(), solver))
}

/// Default regularization used when [`wasserstein`] falls back to Sinkhorn.
pub const DEFAULT_ENTROPIC_ETA: f64 = 1e-3;
pub const DEFAULT_ENTROPIC_TOL: f64 = 1e-9;
pub const DEFAULT_ENTROPIC_MAX_ITER: usize = 20_000;

/// Rooted transport distance; exact when the instance fits under the cap,
/// entropic otherwise.
pub fn wasserstein(
    mu: &PhaseEnsemble,
    nu: &PhaseEnsemble,
    spec: &CostSpec,
) -> Result<TransportResult, TransportError> {
    match solve_exact(mu, nu, spec) {
        Err(TransportError::CapacityExceeded { .. }) => solve_entropic(
            mu,
            nu,
            spec,
            DEFAULT_ENTROPIC_ETA,
            DEFAULT_ENTROPIC_TOL,
            DEFAULT_ENTROPIC_MAX_ITER,
        ),
        other => other,
    }
}

/// Options for the duality check in [`kantorovich_lower_bound`].
#[derive(Debug, Clone, Copy)]
pub struct DualWitnessOptions {
    /// Maximum number of sampled support pairs for the Lipschitz estimate.
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for DualWitnessOptions {
    fn default() -> Self {
        DualWitnessOptions {
            max_pairs: 200_000,
            seed: 0x6b77,
        }
    }
}

/// Dual lower bound `integral of psi d(mu - nu)` for a witness `psi` that is
/// 1-Lipschitz with respect to the plain p=1 ground metric
/// `|dx|_torus + |dv|`.
///
/// The witness's Lipschitz constant is estimated on support pairs (all pairs
/// when few, seeded samples when many); estimates above `1 + 1e-9` reject
/// the witness instead of silently producing an invalid bound.
pub fn kantorovich_lower_bound<F>(
    mu: &PhaseEnsemble,
    nu: &PhaseEnsemble,
    psi: F,
    opts: &DualWitnessOptions,
) -> Result<f64, TransportError>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    use rand::{Rng, SeedableRng};
    check_dims(mu, nu)?;

    let total = mu.len() + nu.len();
    let point = |k: usize| -> (&[f64], &[f64]) {
        if k < mu.len() {
            (mu.position(k), mu.velocity(k))
        } else {
            (nu.position(k - mu.len()), nu.velocity(k - mu.len()))
        }
    };
    let ground = |a: (&[f64], &[f64]), b: (&[f64], &[f64])| -> f64 {
        let dx = crate::measures::torus_distance(a.0, b.0);
        let dv = a
            .1
            .iter()
            .zip(b.1)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        dx + dv
    };

    let mut estimate: f64 = 0.0;
    let check_pair = |ka: usize, kb: usize, estimate: &mut f64| {
        let a = point(ka);
        let b = point(kb);
        let d = ground(a, b);
        if d > 0.0 {
            let ratio = (psi(a.0, a.1) - psi(b.0, b.1)).abs() / d;
            if ratio > *estimate {
                *estimate = ratio;
            }
        }
    };

    if total * total <= opts.max_pairs {
        for ka in 0..total {
            for kb in (ka + 1)..total {
                check_pair(ka, kb, &mut estimate);
            }
        }
    } else {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.max_pairs {
            let ka = rng.gen_range(0..total);
            let kb = rng.gen_range(0..total);
            if ka != kb {
                check_pair(ka, kb, &mut estimate);
            }
        }
    }
    if estimate > 1.0 + LIPSCHITZ_SLACK {
        return Err(TransportError::LipschitzViolation { estimate });
    }

    let mut value = 0.0;
    for i in 0..mu.len() {
        value += mu.weight(i) * psi(mu.position(i), mu.velocity(i));
    }
    for j in 0..nu.len() {
        value -= nu.weight(j) * psi(nu.position(j), nu.velocity(j));
    }
    Ok(value)
}

/// Position-moment weight functions `Phi`.
///
/// Both variants carry the field-strength scale `eps` and are strictly
/// decreasing where defined:
///
/// * `LogEps`: `Phi(s) = eps^-2 |log s|` on `(0, 1)`;
/// * `CappedPhi`: `Phi(s) = eps^-2 |log s|` on `(0, 1/e]`, continued by
///   `eps^-2 e^-1 s^-1` beyond, which makes it C^1 at `1/e` and defined for
///   every positive argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightFunction {
    LogEps { eps: f64 },
    CappedPhi { eps: f64 },
}

impl WeightFunction {
    pub fn log_eps(eps: f64) -> Result<Self, TransportError> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(TransportError::WeightDomain {
                argument: eps,
                reason: "eps must be positive and finite",
            });
        }
        Ok(WeightFunction::LogEps { eps })
    }

    pub fn capped_phi(eps: f64) -> Result<Self, TransportError> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(TransportError::WeightDomain {
                argument: eps,
                reason: "eps must be positive and finite",
            });
        }
        Ok(WeightFunction::CappedPhi { eps })
    }

    pub fn eps(&self) -> f64 {
        match *self {
            WeightFunction::LogEps { eps } | WeightFunction::CappedPhi { eps } => eps,
        }
    }

    /// Evaluates `Phi(s)`.
    pub fn evaluate(&self, s: f64) -> Result<f64, TransportError> {
        match *self {
            WeightFunction::LogEps { eps } => {
                if s <= 0.0 || s >= 1.0 {
                    return Err(TransportError::WeightDomain {
                        argument: s,
                        reason: "log weight is defined on (0, 1)",
                    });
                }
                Ok(s.ln().abs() / (eps * eps))
            }
            WeightFunction::CappedPhi { eps } => {
                if s <= 0.0 {
                    return Err(TransportError::WeightDomain {
                        argument: s,
                        reason: "capped weight needs a positive argument",
                    });
                }
                let e_inv = 1.0 / std::f64::consts::E;
                let phi = if s <= e_inv {
                    s.ln().abs()
                } else {
                    e_inv / s
                };
                Ok(phi / (eps * eps))
            }
        }
    }
}

/// Solution of the scalar fixed point `q = Phi(q) r + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitSolve {
    pub q: f64,
    pub residual: f64,
    /// True only for the r = s = 0 corner, where q = 0 by convention.
    pub degenerate: bool,
}

/// Solves `q - Phi(q) r = s` for `q`.
///
/// `G(q) = q - Phi(q) r` is strictly increasing, so the root is unique.
/// For the log weight, `G` maps `(0, 1)` onto `(-inf, 1)`, hence a root
/// exists iff `s < 1`; the capped weight is defined for every `s >= 0`.
/// Bracketing bisection followed by safeguarded Newton polishing drives the
/// residual below [`IMPLICIT_RESIDUAL_TOL`]` * max(1, s)`.
pub fn implicit_weight_solve(
    r: f64,
    s: f64,
    w: &WeightFunction,
) -> Result<ImplicitSolve, TransportError> {
    if !(r >= 0.0) || !(s >= 0.0) || !r.is_finite() || !s.is_finite() {
        return Err(TransportError::BadMoments { r, s });
    }
    if r == 0.0 && s == 0.0 {
        return Ok(ImplicitSolve {
            q: 0.0,
            residual: 0.0,
            degenerate: true,
        });
    }
    if let WeightFunction::LogEps { .. } = w {
        if s >= 1.0 {
            return Err(TransportError::NoRoot { s });
        }
    }
    if r == 0.0 {
        return Ok(ImplicitSolve {
            q: s,
            residual: 0.0,
            degenerate: false,
        });
    }

    let eps_sq = w.eps() * w.eps();
    // Residual F(q) = q - Phi(q) r - s and its derivative, on the open domain.
    let f_and_df = |q: f64| -> (f64, f64) {
        match *w {
            WeightFunction::LogEps { .. } => {
                let phi = -q.ln() / eps_sq;
                (q - phi * r - s, 1.0 + r / (eps_sq * q))
            }
            WeightFunction::CappedPhi { .. } => {
                let e_inv = 1.0 / std::f64::consts::E;
                if q <= e_inv {
                    let phi = -q.ln() / eps_sq;
                    (q - phi * r - s, 1.0 + r / (eps_sq * q))
                } else {
                    let phi = e_inv / (q * eps_sq);
                    (q - phi * r - s, 1.0 + e_inv * r / (eps_sq * q * q))
                }
            }
        }
    };

    // Bracket the root: F < 0 near 0 always (Phi blows up); find hi with F >= 0.
    let mut lo = 1e-300;
    let mut hi = match *w {
        WeightFunction::LogEps { .. } => 1.0 - f64::EPSILON,
        WeightFunction::CappedPhi { .. } => {
            let mut h = (2.0 * s).max(1.0);
            let mut guard = 0;
            while f_and_df(h).0 < 0.0 {
                h *= 2.0;
                guard += 1;
                assert!(guard < 2100, "capped weight bracket failed to expand");
            }
            h
        }
    };

    let tol = IMPLICIT_RESIDUAL_TOL * s.max(1.0);
    let mut best_q = hi;
    let mut best_res = f64::INFINITY;
    for _ in 0..300 {
        let mid = if hi / lo > 16.0 && lo > 0.0 {
            // Geometric bisection while the bracket spans decades.
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        let (fm, dfm) = f_and_df(mid);
        if fm.abs() < best_res {
            best_res = fm.abs();
            best_q = mid;
        }
        if fm.abs() <= tol * 1e-2 {
            break;
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        // Newton step from the current midpoint, kept inside the bracket.
        let newton = mid - fm / dfm;
        if newton > lo && newton < hi {
            let (fnw, _) = f_and_df(newton);
            if fnw.abs() < best_res {
                best_res = fnw.abs();
                best_q = newton;
            }
            if fnw < 0.0 {
                lo = newton;
            } else {
                hi = newton;
            }
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    if best_res > tol {
        return Err(TransportError::ImplicitNotConverged { residual: best_res });
    }
    Ok(ImplicitSolve {
        q: best_q,
        residual: best_res,
        degenerate: false,
    })
}

/// Options for [`nonlinear_wasserstein`].
#[derive(Debug, Clone, Copy)]
pub struct NonlinearOptions {
    /// Stop when successive implicit values differ by less than this.
    pub tol: f64,
    pub max_outer: usize,
    /// Cap forwarded to the inner exact solves.
    pub exact: ExactOptions,
}

impl Default for NonlinearOptions {
    fn default() -> Self {
        NonlinearOptions {
            tol: 1e-10,
            max_outer: 50,
            exact: ExactOptions::default(),
        }
    }
}

/// Result of the alternating nonlinear solve.
#[derive(Debug, Clone)]
pub struct NonlinearResult {
    /// Best implicit value found; this is the distance raised to the power p.
    pub value: f64,
    pub plan: Coupling,
    /// `Phi` evaluated at the best value; `None` for the degenerate mu == nu case.
    pub lambda_star: Option<f64>,
    pub converged: bool,
    pub degenerate: bool,
    pub outer_iterations: usize,
}

/// Weight-implicit transport distance by alternating minimization.
///
/// Starting from the plain-cost optimal plan, each round freezes `lambda`,
/// solves the anisotropic transport problem, recomputes the implicit value
/// from that plan's moments, and sets the next `lambda = Phi(value)`. The
/// best value seen is returned with its plan; `converged` reports whether
/// the alternation reached a fixed point within `opts.tol`.
pub fn nonlinear_wasserstein(
    mu: &PhaseEnsemble,
    nu: &PhaseEnsemble,
    p: f64,
    w: &WeightFunction,
    opts: &NonlinearOptions,
) -> Result<NonlinearResult, TransportError> {
    check_dims(mu, nu)?;
    let plain = CostSpec::plain(p)?;

    // Position and velocity moments of a plan, computed from raw coordinates.
    let moments = |plan: &Coupling| -> (f64, f64) {
        let mut r = 0.0;
        let mut s = 0.0;
        for e in plan.entries() {
            let dx = crate::measures::torus_distance(mu.position(e.source), nu.position(e.target));
            let dv = mu
                .velocity(e.source)
                .iter()
                .zip(nu.velocity(e.target))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            r += e.mass * dx.powf(p);
            s += e.mass * dv.powf(p);
        }
        (r, s)
    };

    let initial = solve_exact_with(mu, nu, &plain, &opts.exact)?;
    let (r0, s0) = moments(&initial.plan);
    if r0 == 0.0 && s0 == 0.0 {
        return Ok(NonlinearResult {
            value: 0.0,
            plan: initial.plan,
            lambda_star: None,
            converged: true,
            degenerate: true,
            outer_iterations: 0,
        });
    }

    let first = implicit_weight_solve(r0, s0, w)?;
    let mut best_value = first.q;
    let mut best_plan = initial.plan;
    let mut prev = first.q;
    let mut converged = false;
    let mut iterations = 0;

    for k in 0..opts.max_outer {
        iterations = k + 1;
        let lambda = w.evaluate(prev)?;
        let spec = CostSpec::anisotropic(p, lambda.max(f64::MIN_POSITIVE))?;
        let result = solve_exact_with(mu, nu, &spec, &opts.exact)?;
        let (r, s) = moments(&result.plan);
        let solved = implicit_weight_solve(r, s, w)?;
        if solved.q < best_value {
            best_value = solved.q;
            best_plan = result.plan;
        }
        if (solved.q - prev).abs() < opts.tol {
            converged = true;
            break;
        }
        prev = solved.q;
    }

    let lambda_star = w.evaluate(best_value).ok();
    Ok(NonlinearResult {
        value: best_value,
        plan: best_plan,
        lambda_star,
        converged,
        degenerate: false,
        outer_iterations: iterations,
    })
}
