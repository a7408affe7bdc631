//! Closed-form growth estimates for transport distances between kinetic
//! solutions, and the machinery that checks them against measurements.
//!
//! Three families:
//!
//! * exponential-in-time estimates for smooth-kernel dynamics: the
//!   classical Dobrushin rate `e^{(1+2B)t}` and the free-streaming-aware
//!   alternative `(1+t) e^{(2/3)B((1+t)^3-1)}`, combined by pointwise
//!   minimum;
//! * Loeper-type log-scale estimates for the scaled Poisson dynamics, in
//!   the classical double-exponential form and the sharper form driven by
//!   the density sup-norm integral;
//! * the implicit diagnostic `Q(t)` solving `Q = Phi(Q) D(t) + E(t)` along
//!   a paired trajectory, with the companion curve `R(t)` it is compared
//!   against.
//!
//! The unquantified constants (`C_d`, `c_0`, the classical rate `C`) are
//! calibration parameters with defaults below; every report records the
//! values used.

use crate::dynamics::PairedTrajectory;
use crate::fields::{deposit_density, FieldsError};
use crate::measures::{pair_cost, CostSpec, Coupling, PhaseEnsemble};
use crate::transport::{
    implicit_weight_solve, solve_entropic, solve_exact_with, ExactOptions, TransportError,
    TransportResult, WeightFunction,
};
use rand::{Rng, SeedableRng};
use thiserror::Error;

/// Default dimensional constant in the log-scale estimates.
pub const DEFAULT_C_D: f64 = 1.0;
/// Default small-data threshold for the sharper log-scale estimate.
pub const DEFAULT_C0: f64 = 0.05;
/// Crossover search window: roots are sought on `(0, CROSSOVER_T_MAX]`.
pub const CROSSOVER_T_MAX: f64 = 1e3;
/// Absolute bisection tolerance for crossover roots.
pub const CROSSOVER_TOL: f64 = 1e-10;
/// Exact transport is used for distance measurements up to this many points.
pub const MEASURE_EXACT_CAP: usize = 2000;
/// Default resample count for the bootstrap allowance.
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Default multiplier on the bootstrap standard deviation.
pub const BOOTSTRAP_MULTIPLIER: f64 = 3.0;
/// Relative slack absorbing floating-point noise in verification. The
/// free-streaming case is sharp (measurement equal to the bound), where
/// accumulated step rounding of order 1e-11 would otherwise flip the
/// verdict on ties.
pub const VERIFY_REL_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("{what} must be {requirement}, got {value}")]
    BadParameter {
        what: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error(
        "no crossover on (0, {max}]: the free-streaming form never drops below \
         the exponential form for curvature {b}"
    )]
    NoCrossing { b: f64, max: f64 },
    #[error("initial distance too large for the log-scale estimate: X = {x} >= 1")]
    InitialDistanceTooLarge { x: f64 },
    #[error("time grids differ at index {index}: measured t = {t_measured}, bound t = {t_bound}")]
    GridMismatch {
        index: usize,
        t_measured: f64,
        t_bound: f64,
    },
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error(transparent)]
    Transport(#[from] Box<TransportError>),
    #[error(transparent)]
    Fields(#[from] FieldsError),
}

impl From<TransportError> for BoundsError {
    fn from(e: TransportError) -> Self {
        BoundsError::Transport(Box::new(e))
    }
}

/// Classical exponential estimate `e^{(1+2B)t} W10`.
pub fn dobrushin_bound(b: f64, t: f64, w10: f64) -> f64 {
    ((1.0 + 2.0 * b) * t).exp() * w10
}

/// Free-streaming-aware estimate `(1+t) e^{(2/3) B ((1+t)^3 - 1)} W10`.
pub fn improved_bound(b: f64, t: f64, w10: f64) -> f64 {
    let u = 1.0 + t;
    u * ((2.0 / 3.0) * b * (u * u * u - 1.0)).exp() * w10
}

/// Pointwise minimum of the two exponential estimates.
pub fn combined_bound(b: f64, t: f64, w10: f64) -> f64 {
    dobrushin_bound(b, t, w10).min(improved_bound(b, t, w10))
}

/// Log-gap between the two estimates; the crossover is its positive root.
fn crossover_gap(b: f64, t: f64) -> f64 {
    let u = 1.0 + t;
    u.ln() + (2.0 / 3.0) * b * (u * u * u - 1.0) - (1.0 + 2.0 * b) * t
}

/// First positive time where the free-streaming form stops beating the
/// exponential form.
///
/// The gap `g(t) = log improved - log dobrushin` vanishes at `t = 0` with
/// `g'(0) = 0` and `g''(0) = 4B - 1`, so the free-streaming form only dips
/// below the exponential one for `B < 1/4`; at or above that curvature the
/// gap is positive for every `t > 0` and there is nothing to cross, which
/// is reported as [`BoundsError::NoCrossing`]. When the dip exists, the
/// root is bracketed by a geometric scan of `(0, 10^3]` and polished by
/// bisection to `1e-10`.
pub fn crossover_time(b: f64) -> Result<f64, BoundsError> {
    if !(b > 0.0 && b <= 1.0) || !b.is_finite() {
        return Err(BoundsError::BadParameter {
            what: "curvature bound B",
            requirement: "in (0, 1]",
            value: b,
        });
    }
    // Geometric scan for a sign change of the gap.
    let scan: Vec<f64> = (0..=4000)
        .map(|k| 1e-4 * (CROSSOVER_T_MAX / 1e-4).powf(k as f64 / 4000.0))
        .collect();
    let mut t_neg = None;
    let mut bracket = None;
    for &t in &scan {
        let g = crossover_gap(b, t);
        if g < 0.0 {
            t_neg = Some(t);
        } else if let Some(lo) = t_neg {
            bracket = Some((lo, t));
            break;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or(BoundsError::NoCrossing {
        b,
        max: CROSSOVER_T_MAX,
    })?;
    while hi - lo > CROSSOVER_TOL {
        let mid = 0.5 * (lo + hi);
        if crossover_gap(b, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Classical log-scale estimate `c_d exp(log(W20/c_d) e^{-C t})`.
///
/// Requires the small-data regime `0 < W20 < c_d`; the bound then grows
/// from `W20` at `t = 0` toward `c_d`.
pub fn loeper_classical_bound(
    w20: f64,
    t: f64,
    rate: f64,
    c_d: f64,
) -> Result<f64, BoundsError> {
    if !(c_d > 0.0) || !c_d.is_finite() {
        return Err(BoundsError::BadParameter {
            what: "c_d",
            requirement: "positive and finite",
            value: c_d,
        });
    }
    if !(w20 > 0.0) || !w20.is_finite() || w20 >= c_d {
        return Err(BoundsError::BadParameter {
            what: "initial distance W20",
            requirement: "in (0, c_d)",
            value: w20,
        });
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(BoundsError::BadParameter {
            what: "rate C",
            requirement: "positive and finite",
            value: rate,
        });
    }
    if !(t >= 0.0) {
        return Err(BoundsError::BadParameter {
            what: "time t",
            requirement: "nonnegative",
            value: t,
        });
    }
    Ok(c_d * ((w20 / c_d).ln() * (-rate * t).exp()).exp())
}

/// The sharper log-scale estimate with its two hypothesis flags.
#[derive(Debug, Clone, Copy)]
pub struct LoeperImproved {
    /// The W2 bound (square root of `w2_sq_bound`).
    pub value: f64,
    /// The squared-distance bound `2 exp(-(sqrt|log X| - (C_d/eps) A)^2)`.
    pub w2_sq_bound: f64,
    /// Small-data hypothesis `(1/2) eps^-2 W20^2 <= c0`.
    pub small_data_ok: bool,
    /// Time-window hypothesis
    /// `sqrt|log X| >= (C_d/eps) A + sqrt|log(eps/e)|`.
    pub window_ok: bool,
}

impl LoeperImproved {
    pub fn hypothesis_ok(&self) -> bool {
        self.small_data_ok && self.window_ok
    }
}

/// Sharper log-scale estimate driven by the density sup-norm integral
/// `a_int` accumulated up to the evaluation time.
///
/// With `X = eps^-2 W20^2 |log((1/2) eps^-2 W20^2)|`, the squared bound is
/// `2 exp(-(sqrt|log X| - (C_d/eps) a_int)^2)`. `X >= 1` puts the initial
/// distance outside the estimate's validity and is a domain error; failed
/// hypothesis flags still return a value, marked non-rigorous by the flags.
pub fn loeper_improved_bound(
    w20: f64,
    eps: f64,
    a_int: f64,
    c_d: f64,
    c0: f64,
) -> Result<LoeperImproved, BoundsError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(BoundsError::BadParameter {
            what: "eps",
            requirement: "in (0, 1]",
            value: eps,
        });
    }
    if !(w20 > 0.0) || !w20.is_finite() {
        return Err(BoundsError::BadParameter {
            what: "initial distance W20",
            requirement: "positive and finite",
            value: w20,
        });
    }
    if !(a_int >= 0.0) || !a_int.is_finite() {
        return Err(BoundsError::BadParameter {
            what: "density integral",
            requirement: "nonnegative and finite",
            value: a_int,
        });
    }
    if !(c_d > 0.0) || !(c0 > 0.0) {
        return Err(BoundsError::BadParameter {
            what: "constants C_d, c0",
            requirement: "positive",
            value: if c_d <= 0.0 { c_d } else { c0 },
        });
    }
    let half_ratio = 0.5 * (w20 / eps) * (w20 / eps);
    let x = 2.0 * half_ratio * half_ratio.ln().abs();
    if x >= 1.0 {
        return Err(BoundsError::InitialDistanceTooLarge { x });
    }
    let root_log_x = x.ln().abs().sqrt();
    let drive = (c_d / eps) * a_int;
    let g = root_log_x - drive;
    let w2_sq_bound = 2.0 * (-(g * g)).exp();
    let small_data_ok = half_ratio <= c0;
    let window_ok = root_log_x >= drive + (eps / std::f64::consts::E).ln().abs().sqrt();
    Ok(LoeperImproved {
        value: w2_sq_bound.sqrt(),
        w2_sq_bound,
        small_data_ok,
        window_ok,
    })
}

/// Comparison curve `R(t) = exp(-(sqrt|log Q0| - (C_d/eps) a_int)^2)`.
///
/// `R(0) = Q0`. The validity window (`sup R <= eps/e` so far) is tracked by
/// [`r_curve`], not here.
pub fn r_of_t(q0: f64, eps: f64, c_d: f64, a_int: f64) -> Result<f64, BoundsError> {
    if !(q0 > 0.0 && q0 < 1.0) {
        return Err(BoundsError::BadParameter {
            what: "Q0",
            requirement: "in (0, 1)",
            value: q0,
        });
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(BoundsError::BadParameter {
            what: "eps",
            requirement: "in (0, 1]",
            value: eps,
        });
    }
    if !(c_d > 0.0) || !(a_int >= 0.0) {
        return Err(BoundsError::BadParameter {
            what: "C_d / density integral",
            requirement: "positive / nonnegative",
            value: if c_d <= 0.0 { c_d } else { a_int },
        });
    }
    let g = q0.ln().abs().sqrt() - (c_d / eps) * a_int;
    Ok((-(g * g)).exp())
}

/// Concave comparison modulus: `s log^2 s` on `(0, 1/e]`, continued by `s`.
pub fn phi_modulus(s: f64) -> Result<f64, BoundsError> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(BoundsError::BadParameter {
            what: "argument s",
            requirement: "positive and finite",
            value: s,
        });
    }
    let e_inv = 1.0 / std::f64::consts::E;
    if s <= e_inv {
        let l = s.ln();
        Ok(s * l * l)
    } else {
        Ok(s)
    }
}

/// Which estimate a curve tabulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Dobrushin,
    ImprovedFreeFlow,
    Combined,
    LoeperClassical,
    LoeperImproved,
    ROfT,
}

impl BoundKind {
    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::Dobrushin => "dobrushin",
            BoundKind::ImprovedFreeFlow => "improved",
            BoundKind::Combined => "combined",
            BoundKind::LoeperClassical => "loeper_classical",
            BoundKind::LoeperImproved => "loeper_improved",
            BoundKind::ROfT => "r_of_t",
        }
    }
}

/// Parameters a curve was built from; only the relevant fields are set.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundParams {
    pub b: Option<f64>,
    pub eps: Option<f64>,
    pub c_d: Option<f64>,
    pub c0: Option<f64>,
    pub rate: Option<f64>,
    pub w10: Option<f64>,
    pub w20: Option<f64>,
    pub q0: Option<f64>,
}

impl BoundParams {
    /// `key=value` pairs for the set fields, semicolon separated.
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        let mut push = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                parts.push(format!("{name}={v}"));
            }
        };
        push("b", self.b);
        push("eps", self.eps);
        push("c_d", self.c_d);
        push("c0", self.c0);
        push("rate", self.rate);
        push("w10", self.w10);
        push("w20", self.w20);
        push("q0", self.q0);
        parts.join(";")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint {
    pub t: f64,
    pub value: f64,
    /// False where a validity hypothesis fails at this time.
    pub hypothesis_ok: bool,
}

/// A tabulated estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    pub kind: BoundKind,
    pub params: BoundParams,
    pub points: Vec<BoundPoint>,
}

impl BoundCurve {
    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }
}

fn check_growth_params(b: f64, w10: f64, times: &[f64]) -> Result<(), BoundsError> {
    if !(b >= 0.0) || !b.is_finite() {
        return Err(BoundsError::BadParameter {
            what: "curvature bound B",
            requirement: "nonnegative and finite",
            value: b,
        });
    }
    if !(w10 >= 0.0) || !w10.is_finite() {
        return Err(BoundsError::BadParameter {
            what: "initial distance",
            requirement: "nonnegative and finite",
            value: w10,
        });
    }
    for &t in times {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(BoundsError::BadParameter {
                what: "time t",
                requirement: "nonnegative and finite",
                value: t,
            });
        }
    }
    Ok(())
}

pub fn dobrushin_curve(b: f64, w10: f64, times: &[f64]) -> Result<BoundCurve, BoundsError> {
    check_growth_params(b, w10, times)?;
    Ok(BoundCurve {
        kind: BoundKind::Dobrushin,
        params: BoundParams {
            b: Some(b),
            w10: Some(w10),
            ..Default::default()
        },
        points: times
            .iter()
            .map(|&t| BoundPoint {
                t,
                value: dobrushin_bound(b, t, w10),
                hypothesis_ok: true,
            })
            .collect(),
    })
}

pub fn improved_curve(b: f64, w10: f64, times: &[f64]) -> Result<BoundCurve, BoundsError> {
    check_growth_params(b, w10, times)?;
    Ok(BoundCurve {
        kind: BoundKind::ImprovedFreeFlow,
        params: BoundParams {
            b: Some(b),
            w10: Some(w10),
            ..Default::default()
        },
        points: times
            .iter()
            .map(|&t| BoundPoint {
                t,
                value: improved_bound(b, t, w10),
                hypothesis_ok: true,
            })
            .collect(),
    })
}

pub fn combined_curve(b: f64, w10: f64, times: &[f64]) -> Result<BoundCurve, BoundsError> {
    check_growth_params(b, w10, times)?;
    Ok(BoundCurve {
        kind: BoundKind::Combined,
        params: BoundParams {
            b: Some(b),
            w10: Some(w10),
            ..Default::default()
        },
        points: times
            .iter()
            .map(|&t| BoundPoint {
                t,
                value: combined_bound(b, t, w10),
                hypothesis_ok: true,
            })
            .collect(),
    })
}

pub fn loeper_classical_curve(
    w20: f64,
    rate: f64,
    c_d: f64,
    times: &[f64],
) -> Result<BoundCurve, BoundsError> {
    let points = times
        .iter()
        .map(|&t| {
            loeper_classical_bound(w20, t, rate, c_d).map(|value| BoundPoint {
                t,
                value,
                hypothesis_ok: true,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BoundCurve {
        kind: BoundKind::LoeperClassical,
        params: BoundParams {
            w20: Some(w20),
            rate: Some(rate),
            c_d: Some(c_d),
            ..Default::default()
        },
        points,
    })
}

/// Curve form of [`loeper_improved_bound`]; `a_series` holds `(t, a_int)`
/// rows with `a_int` the density integral accumulated up to each `t`.
pub fn loeper_improved_curve(
    w20: f64,
    eps: f64,
    c_d: f64,
    c0: f64,
    a_series: &[(f64, f64)],
) -> Result<BoundCurve, BoundsError> {
    let points = a_series
        .iter()
        .map(|&(t, a_int)| {
            loeper_improved_bound(w20, eps, a_int, c_d, c0).map(|li| BoundPoint {
                t,
                value: li.value,
                hypothesis_ok: li.hypothesis_ok(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BoundCurve {
        kind: BoundKind::LoeperImproved,
        params: BoundParams {
            w20: Some(w20),
            eps: Some(eps),
            c_d: Some(c_d),
            c0: Some(c0),
            ..Default::default()
        },
        points,
    })
}

/// Curve form of [`r_of_t`]. The per-point flag reports the validity
/// window: it stays true while the running sup of `R` is at most `eps/e`.
pub fn r_curve(
    q0: f64,
    eps: f64,
    c_d: f64,
    a_series: &[(f64, f64)],
) -> Result<BoundCurve, BoundsError> {
    let ceiling = eps / std::f64::consts::E;
    let mut sup = 0.0f64;
    let mut points = Vec::with_capacity(a_series.len());
    for &(t, a_int) in a_series {
        let value = r_of_t(q0, eps, c_d, a_int)?;
        sup = sup.max(value);
        points.push(BoundPoint {
            t,
            value,
            hypothesis_ok: sup <= ceiling,
        });
    }
    Ok(BoundCurve {
        kind: BoundKind::ROfT,
        params: BoundParams {
            q0: Some(q0),
            eps: Some(eps),
            c_d: Some(c_d),
            ..Default::default()
        },
        points,
    })
}

/// One entry of the implicit diagnostic series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QPoint {
    pub t: f64,
    /// `None` when the solve is undefined at this snapshot (velocity moment
    /// at or above 1 for the log weight).
    pub q: Option<f64>,
    /// True for the `D = E = 0` corner (identical dynamics).
    pub degenerate: bool,
}

/// Solves `Q = Phi(Q) D(t) + E(t)` at every snapshot of a paired run.
pub fn compute_q_series(traj: &PairedTrajectory, w: &WeightFunction) -> Vec<QPoint> {
    traj.moment_series()
        .into_iter()
        .map(|(t, d, e)| match implicit_weight_solve(d, e, w) {
            Ok(sol) => QPoint {
                t,
                q: Some(sol.q),
                degenerate: sol.degenerate,
            },
            Err(_) => QPoint {
                t,
                q: None,
                degenerate: false,
            },
        })
        .collect()
}

/// Largest `|dQ/dt|` difference quotient over consecutive defined points
/// with `Q` above `floor`. `None` when fewer than two such points exist.
pub fn max_difference_quotient(series: &[QPoint], floor: f64) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for pair in series.windows(2) {
        if let (Some(q0), Some(q1)) = (pair[0].q, pair[1].q) {
            if q0 > floor && q1 > floor && pair[1].t > pair[0].t {
                let quot = ((q1 - q0) / (pair[1].t - pair[0].t)).abs();
                worst = Some(worst.map_or(quot, |w: f64| w.max(quot)));
            }
        }
    }
    worst
}

/// Density sup-norm sum `A(t) = sup rho_1(t) + sup rho_2(t)` per snapshot,
/// measured on deposited grids.
pub fn measure_a_series(
    traj: &PairedTrajectory,
    grid_n: usize,
) -> Result<Vec<(f64, f64)>, BoundsError> {
    traj.snapshots
        .iter()
        .map(|snap| {
            let rho1 = deposit_density(&snap.first, grid_n)?;
            let rho2 = deposit_density(&snap.second, grid_n)?;
            Ok((snap.t, rho1.sup_norm() + rho2.sup_norm()))
        })
        .collect()
}

/// Running trapezoid integral of a sampled series; output pairs are
/// `(t, integral up to t)` with the first entry at integral 0.
pub fn cumulative_trapezoid(series: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for (k, &(t, v)) in series.iter().enumerate() {
        if k > 0 {
            let (tp, vp) = series[k - 1];
            acc += 0.5 * (v + vp) * (t - tp);
        }
        out.push((t, acc));
    }
    out
}

/// A measured distance at one snapshot, with the plan that realized it.
#[derive(Debug, Clone)]
pub struct DistancePoint {
    pub t: f64,
    pub value: f64,
    pub exact: bool,
    pub converged: bool,
    pub plan: Coupling,
}

/// One distance measurement under the series policy: exact up to
/// [`MEASURE_EXACT_CAP`] points, entropic (eta = 1e-3) above.
pub fn measure_distance(
    mu: &PhaseEnsemble,
    nu: &PhaseEnsemble,
    spec: &CostSpec,
) -> Result<TransportResult, BoundsError> {
    let opts = ExactOptions {
        max_points: MEASURE_EXACT_CAP,
    };
    match solve_exact_with(mu, nu, spec, &opts) {
        Err(TransportError::CapacityExceeded { .. }) => {
            Ok(solve_entropic(mu, nu, spec, 1e-3, 1e-9, 20_000)?)
        }
        other => Ok(other?),
    }
}

/// Transport distance between the pair at every snapshot: exact up to
/// [`MEASURE_EXACT_CAP`] points, entropic (eta = 1e-3) above.
pub fn measure_distance_series(
    traj: &PairedTrajectory,
    spec: &CostSpec,
) -> Result<Vec<DistancePoint>, BoundsError> {
    traj.snapshots
        .iter()
        .map(|snap| {
            let result = measure_distance(&snap.first, &snap.second, spec)?;
            Ok(DistancePoint {
                t: snap.t,
                value: result.value,
                exact: matches!(result.solver, crate::transport::SolverInfo::Exact),
                converged: result.solver.converged(),
                plan: result.plan,
            })
        })
        .collect()
}

/// Relative Monte-Carlo allowance for a measured distance, by bootstrap
/// over the transport plan's atoms.
///
/// Plan entries are resampled (multinomially, by mass) `resamples` times;
/// the statistic is the rooted mean cost of each resample. The allowance is
/// `multiplier` times the standard deviation of that statistic divided by
/// the measured value, or 0 for a zero-cost plan.
pub fn bootstrap_allowance(
    mu: &PhaseEnsemble,
    nu: &PhaseEnsemble,
    plan: &Coupling,
    spec: &CostSpec,
    resamples: usize,
    multiplier: f64,
    seed: u64,
) -> f64 {
    let entries = plan.entries();
    if entries.len() < 2 {
        return 0.0;
    }
    let costs: Vec<f64> = entries
        .iter()
        .map(|e| {
            pair_cost(
                spec,
                mu.position(e.source),
                mu.velocity(e.source),
                nu.position(e.target),
                nu.velocity(e.target),
            )
        })
        .collect();
    let value = entries
        .iter()
        .zip(&costs)
        .map(|(e, c)| e.mass * c)
        .sum::<f64>()
        .max(0.0)
        .powf(1.0 / spec.p());
    if value <= 0.0 {
        return 0.0;
    }
    // Cumulative masses for categorical sampling.
    let mut cumulative = Vec::with_capacity(entries.len());
    let mut acc = 0.0;
    for e in entries {
        acc += e.mass;
        cumulative.push(acc);
    }
    let total = acc;
    let draws = entries.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..draws {
            let u: f64 = rng.gen::<f64>() * total;
            let idx = cumulative.partition_point(|&c| c < u).min(draws - 1);
            sum += costs[idx];
        }
        stats.push((sum / draws as f64).max(0.0).powf(1.0 / spec.p()));
    }
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    let var = stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
        / (stats.len() - 1) as f64;
    multiplier * var.sqrt() / value
}

/// Verdict of one bound-versus-measurement comparison.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub measured: Vec<(f64, f64)>,
    pub curve: BoundCurve,
    /// `bound - measured` per time.
    pub margins: Vec<f64>,
    /// Relative Monte-Carlo allowances per time.
    pub allowances: Vec<f64>,
    pub pass: bool,
}

/// Joins a measured series to a bound curve on the same time grid (aligned
/// within 1e-9) and passes iff `measured <= bound * (1 + allowance)` at
/// every time, up to the [`VERIFY_REL_SLACK`] float-noise slack.
pub fn verify_bound(
    measured: &[(f64, f64)],
    curve: &BoundCurve,
    allowances: &[f64],
) -> Result<StabilityReport, BoundsError> {
    if measured.len() != curve.points.len() {
        return Err(BoundsError::LengthMismatch {
            left: measured.len(),
            right: curve.points.len(),
        });
    }
    if allowances.len() != measured.len() {
        return Err(BoundsError::LengthMismatch {
            left: allowances.len(),
            right: measured.len(),
        });
    }
    let mut margins = Vec::with_capacity(measured.len());
    let mut pass = true;
    for (index, (&(t_m, value), point)) in measured.iter().zip(&curve.points).enumerate() {
        if (t_m - point.t).abs() > 1e-9 {
            return Err(BoundsError::GridMismatch {
                index,
                t_measured: t_m,
                t_bound: point.t,
            });
        }
        margins.push(point.value - value);
        if value > point.value * (1.0 + allowances[index]) * (1.0 + VERIFY_REL_SLACK) {
            pass = false;
        }
    }
    Ok(StabilityReport {
        measured: measured.to_vec(),
        curve: curve.clone(),
        margins,
        allowances: allowances.to_vec(),
        pass,
    })
}
