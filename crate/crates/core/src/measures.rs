//! Phase-space geometry on the flat unit torus.
//!
//! State lives on `T^d x R^d`: positions wrap modulo 1 in every coordinate,
//! velocities are unconstrained. This module owns the three data types the
//! rest of the crate is built on:
//!
//! * [`PhaseEnsemble`] - a weighted particle cloud (an empirical measure),
//! * [`Coupling`] - a sparse transference plan between two ensembles,
//! * [`CostSpec`] - the parameterized ground costs the transport solvers
//!   minimize: plain, anisotropic, quadratic-form, and velocity-shifted.
//!
//! Displacements in position always use the minimal torus image, with
//! components in `[-1/2, 1/2)`; the shifted cost applies the minimal image
//! to the combined displacement `dx - t*dv`, not to `dx` alone.

use thiserror::Error;

/// Weights must sum to one within this tolerance after construction.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A coupling is considered marginal-consistent when every row and column
/// residual stays below this.
pub const MARGINAL_TOL: f64 = 1e-10;

/// Coupling entries with mass below this are dropped by the sparse cleanup.
pub const COUPLING_MASS_FLOOR: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum MeasuresError {
    #[error("coordinate {index} is not finite")]
    NonFinite { index: usize },
    #[error("ensemble has no particles with positive weight")]
    EmptyEnsemble,
    #[error("weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("total weight {total} is not positive")]
    ZeroTotalMass { total: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("coupling entry {entry} points outside the ensembles ({source_index}, {target_index})")]
    EntryOutOfRange {
        entry: usize,
        source_index: usize,
        target_index: usize,
    },
    #[error("coupling entry {entry} has non-positive mass {mass}")]
    NonPositiveMass { entry: usize, mass: f64 },
    #[error("coupling mass sums to {total}, expected 1 within {tol}")]
    MassNotNormalized { total: f64, tol: f64 },
    #[error("invalid cost parameters: {reason}")]
    InvalidCostSpec { reason: String },
    #[error("csv parse error at line {line}: {reason}")]
    CsvParse { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Wraps a scalar coordinate into `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Minimal signed image of a coordinate difference, in `[-1/2, 1/2)`.
pub fn min_image(delta: f64) -> f64 {
    let r = wrap_unit(delta);
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// Componentwise minimal-image displacement `x - y` on the torus.
pub fn torus_displacement(x: &[f64], y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| min_image(a - b)).collect()
}

/// Geodesic distance on `T^d` (Euclidean norm of the minimal-image displacement).
pub fn torus_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = min_image(a - b);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn euclid_norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|d| d * d).sum::<f64>().sqrt()
}

/// One phase-space point. Positions are wrapped into `[0,1)` at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self, MeasuresError> {
        if x.len() != v.len() {
            return Err(MeasuresError::DimensionMismatch {
                expected: x.len(),
                got: v.len(),
            });
        }
        for (i, c) in x.iter().chain(v.iter()).enumerate() {
            if !c.is_finite() {
                return Err(MeasuresError::NonFinite { index: i });
            }
        }
        let x = x.into_iter().map(wrap_unit).collect();
        Ok(PhasePoint { x, v })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Ground-cost family. `p` is the transport exponent, `p >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostVariant {
    /// `|dx|^p + |dv|^p`.
    Plain,
    /// `lambda*|dx|^p + |dv|^p`, `lambda > 0`.
    Anisotropic { lambda: f64 },
    /// `(a|dx|^2 + 2b dx.dv + c|dv|^2)^(p/2)`, requires `sqrt(a c) > b`.
    Quadratic { a: f64, b: f64, c: f64 },
    /// `|min_image(dx - t dv)|^p + |dv|^p`, `t >= 0`.
    Shifted { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    p: f64,
    variant: CostVariant,
}

impl CostSpec {
    pub fn new(p: f64, variant: CostVariant) -> Result<Self, MeasuresError> {
        if !p.is_finite() || p < 1.0 {
            return Err(MeasuresError::InvalidCostSpec {
                reason: format!("exponent p must satisfy p >= 1, got {p}"),
            });
        }
        match variant {
            CostVariant::Plain => {}
            CostVariant::Anisotropic { lambda } => {
                if !lambda.is_finite() || lambda <= 0.0 {
                    return Err(MeasuresError::InvalidCostSpec {
                        reason: format!("anisotropic weight must be positive, got {lambda}"),
                    });
                }
            }
            CostVariant::Quadratic { a, b, c } => {
                let ok = a.is_finite()
                    && b.is_finite()
                    && c.is_finite()
                    && a > 0.0
                    && c > 0.0
                    && (a * c).sqrt() > b;
                if !ok {
                    return Err(MeasuresError::InvalidCostSpec {
                        reason: format!(
                            "quadratic form needs a, c > 0 and sqrt(a*c) > b, got a={a}, b={b}, c={c}"
                        ),
                    });
                }
            }
            CostVariant::Shifted { t } => {
                if !t.is_finite() || t < 0.0 {
                    return Err(MeasuresError::InvalidCostSpec {
                        reason: format!("shift time must be nonnegative, got {t}"),
                    });
                }
            }
        }
        Ok(CostSpec { p, variant })
    }

    pub fn plain(p: f64) -> Result<Self, MeasuresError> {
        Self::new(p, CostVariant::Plain)
    }

    pub fn anisotropic(p: f64, lambda: f64) -> Result<Self, MeasuresError> {
        Self::new(p, CostVariant::Anisotropic { lambda })
    }

    pub fn quadratic(p: f64, a: f64, b: f64, c: f64) -> Result<Self, MeasuresError> {
        Self::new(p, CostVariant::Quadratic { a, b, c })
    }

    pub fn shifted(p: f64, t: f64) -> Result<Self, MeasuresError> {
        Self::new(p, CostVariant::Shifted { t })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn variant(&self) -> CostVariant {
        self.variant
    }

    /// Short parameter string used by CSV outputs, e.g. `lambda=2`.
    pub fn param_string(&self) -> String {
        match self.variant {
            CostVariant::Plain => String::new(),
            CostVariant::Anisotropic { lambda } => format!("lambda={lambda}"),
            CostVariant::Quadratic { a, b, c } => format!("a={a};b={b};c={c}"),
            CostVariant::Shifted { t } => format!("t={t}"),
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self.variant {
            CostVariant::Plain => "plain",
            CostVariant::Anisotropic { .. } => "anisotropic",
            CostVariant::Quadratic { .. } => "quadratic",
            CostVariant::Shifted { .. } => "shifted",
        }
    }
}

/// Ground cost between two phase points given as coordinate slices.
///
/// This is the hot-loop form used when assembling cost matrices; the
/// [`phase_cost`] wrapper takes `PhasePoint` values.
pub fn pair_cost(spec: &CostSpec, x1: &[f64], v1: &[f64], x2: &[f64], v2: &[f64]) -> f64 {
    let p = spec.p;
    match spec.variant {
        CostVariant::Plain => {
            let dx = euclid_norm(x1.iter().zip(x2).map(|(a, b)| min_image(a - b)));
            let dv = euclid_norm(v1.iter().zip(v2).map(|(a, b)| a - b));
            dx.powf(p) + dv.powf(p)
        }
        CostVariant::Anisotropic { lambda } => {
            let dx = euclid_norm(x1.iter().zip(x2).map(|(a, b)| min_image(a - b)));
            let dv = euclid_norm(v1.iter().zip(v2).map(|(a, b)| a - b));
            lambda * dx.powf(p) + dv.powf(p)
        }
        CostVariant::Quadratic { a, b, c } => {
            let mut xx = 0.0;
            let mut xv = 0.0;
            let mut vv = 0.0;
            for k in 0..x1.len() {
                let dx = min_image(x1[k] - x2[k]);
                let dv = v1[k] - v2[k];
                xx += dx * dx;
                xv += dx * dv;
                vv += dv * dv;
            }
            let form = a * xx + 2.0 * b * xv + c * vv;
            // sqrt(ac) > b keeps the form nonnegative; clamp the roundoff tail.
            form.max(0.0).powf(p / 2.0)
        }
        CostVariant::Shifted { t } => {
            let shifted = euclid_norm(
                x1.iter()
                    .zip(x2)
                    .zip(v1.iter().zip(v2))
                    .map(|((a, b), (va, vb))| min_image((a - b) - t * (va - vb))),
            );
            let dv = euclid_norm(v1.iter().zip(v2).map(|(a, b)| a - b));
            shifted.powf(p) + dv.powf(p)
        }
    }
}

/// Ground cost between two phase points.
pub fn phase_cost(p1: &PhasePoint, p2: &PhasePoint, spec: &CostSpec) -> f64 {
    debug_assert_eq!(p1.dim(), p2.dim());
    pair_cost(spec, &p1.x, &p1.v, &p2.x, &p2.v)
}

/// A weighted particle cloud stored struct-of-arrays.
///
/// Weights are strictly positive and sum to 1 (zero-weight particles are
/// dropped, the remainder renormalized). Positions are wrapped into `[0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEnsemble {
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    weights: Vec<f64>,
}

impl PhaseEnsemble {
    /// Builds an ensemble from flattened coordinates (`n*dim` each) and `n` weights.
    pub fn new(
        dim: usize,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self, MeasuresError> {
        if dim == 0 {
            return Err(MeasuresError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        let n = weights.len();
        if positions.len() != n * dim {
            return Err(MeasuresError::LengthMismatch {
                what: "positions",
                expected: n * dim,
                got: positions.len(),
            });
        }
        if velocities.len() != n * dim {
            return Err(MeasuresError::LengthMismatch {
                what: "velocities",
                expected: n * dim,
                got: velocities.len(),
            });
        }
        for (i, c) in positions.iter().chain(velocities.iter()).enumerate() {
            if !c.is_finite() {
                return Err(MeasuresError::NonFinite { index: i });
            }
        }
        let mut total = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(MeasuresError::NegativeWeight { index: i, value: w });
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(MeasuresError::ZeroTotalMass { total });
        }
        let mut out = PhaseEnsemble {
            dim,
            positions: Vec::new(),
            velocities: Vec::new(),
            weights: Vec::new(),
        };
        for i in 0..n {
            if weights[i] == 0.0 {
                continue;
            }
            for k in 0..dim {
                out.positions.push(wrap_unit(positions[i * dim + k]));
                out.velocities.push(velocities[i * dim + k]);
            }
            out.weights.push(weights[i] / total);
        }
        if out.weights.is_empty() {
            return Err(MeasuresError::EmptyEnsemble);
        }
        Ok(out)
    }

    /// Equal-weight ensemble from flattened coordinates.
    pub fn uniform(dim: usize, positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self, MeasuresError> {
        if dim == 0 {
            return Err(MeasuresError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        let n = positions.len() / dim;
        Self::new(dim, positions, velocities, vec![1.0 / n as f64; n])
    }

    pub fn from_points(points: &[PhasePoint], weights: &[f64]) -> Result<Self, MeasuresError> {
        if points.is_empty() {
            return Err(MeasuresError::EmptyEnsemble);
        }
        let dim = points[0].dim();
        let mut positions = Vec::with_capacity(points.len() * dim);
        let mut velocities = Vec::with_capacity(points.len() * dim);
        for pt in points {
            if pt.dim() != dim {
                return Err(MeasuresError::DimensionMismatch {
                    expected: dim,
                    got: pt.dim(),
                });
            }
            positions.extend_from_slice(&pt.x);
            velocities.extend_from_slice(&pt.v);
        }
        Self::new(dim, positions, velocities, weights.to_vec())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn positions_flat(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities_flat(&self) -> &[f64] {
        &self.velocities
    }

    pub fn point(&self, i: usize) -> PhasePoint {
        PhasePoint {
            x: self.position(i).to_vec(),
            v: self.velocity(i).to_vec(),
        }
    }

    /// True when all weights are equal within `tol` (relative to `1/n`).
    pub fn has_uniform_weights(&self, tol: f64) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights.iter().all(|&w| (w - w0).abs() <= tol * w0)
    }

    /// Replaces coordinates in place, wrapping positions. Lengths must match.
    pub fn set_state(&mut self, positions: Vec<f64>, velocities: Vec<f64>) -> Result<(), MeasuresError> {
        if positions.len() != self.positions.len() {
            return Err(MeasuresError::LengthMismatch {
                what: "positions",
                expected: self.positions.len(),
                got: positions.len(),
            });
        }
        if velocities.len() != self.velocities.len() {
            return Err(MeasuresError::LengthMismatch {
                what: "velocities",
                expected: self.velocities.len(),
                got: velocities.len(),
            });
        }
        self.positions = positions.into_iter().map(wrap_unit).collect();
        self.velocities = velocities;
        Ok(())
    }

    /// Writes the ensemble in the `x1..xd,v1..vd,w` CSV layout.
    pub fn to_csv<W: std::io::Write>(&self, mut out: W) -> Result<(), MeasuresError> {
        let d = self.dim;
        let mut header = Vec::with_capacity(2 * d + 1);
        for k in 1..=d {
            header.push(format!("x{k}"));
        }
        for k in 1..=d {
            header.push(format!("v{k}"));
        }
        header.push("w".to_string());
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = Vec::with_capacity(2 * d + 1);
            for &c in self.position(i) {
                row.push(format!("{c}"));
            }
            for &c in self.velocity(i) {
                row.push(format!("{c}"));
            }
            row.push(format!("{}", self.weight(i)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads the `x1..xd,v1..vd,w` CSV layout; wraps positions, renormalizes weights.
    pub fn from_csv<R: std::io::BufRead>(reader: R) -> Result<Self, MeasuresError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or(MeasuresError::EmptyEnsemble)?
            .map_err(MeasuresError::Io)?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 3 || cols.len().is_multiple_of(2) {
            return Err(MeasuresError::CsvParse {
                line: 1,
                reason: format!("expected x1..xd,v1..vd,w header, got '{header}'"),
            });
        }
        let d = (cols.len() - 1) / 2;
        for k in 0..d {
            if cols[k] != format!("x{}", k + 1) || cols[d + k] != format!("v{}", k + 1) {
                return Err(MeasuresError::CsvParse {
                    line: 1,
                    reason: format!("expected x1..xd,v1..vd,w header, got '{header}'"),
                });
            }
        }
        if cols[2 * d] != "w" {
            return Err(MeasuresError::CsvParse {
                line: 1,
                reason: "last column must be w".to_string(),
            });
        }
        let mut positions = Vec::new();
        let mut velocities = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(MeasuresError::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 2 * d + 1 {
                return Err(MeasuresError::CsvParse {
                    line: lineno + 2,
                    reason: format!("expected {} fields, got {}", 2 * d + 1, fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64, MeasuresError> {
                s.parse::<f64>().map_err(|e| MeasuresError::CsvParse {
                    line: lineno + 2,
                    reason: format!("bad number '{s}': {e}"),
                })
            };
            for k in 0..d {
                positions.push(parse(fields[k])?);
            }
            for k in 0..d {
                velocities.push(parse(fields[d + k])?);
            }
            weights.push(parse(fields[2 * d])?);
        }
        Self::new(d, positions, velocities, weights)
    }
}

/// One mass assignment in a sparse transference plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingEntry {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
}

/// Sparse coupling between a source and a target ensemble.
///
/// Entries carry strictly positive mass and the total sums to 1 within
/// [`WEIGHT_SUM_TOL`]. Structural bounds are fixed at construction; whether
/// the marginals actually match a given pair of ensembles is a separate
/// check, [`validate_coupling`].
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    entries: Vec<CouplingEntry>,
    source_len: usize,
    target_len: usize,
}

impl Coupling {
    pub fn from_entries(
        entries: Vec<CouplingEntry>,
        source_len: usize,
        target_len: usize,
    ) -> Result<Self, MeasuresError> {
        let mut total = 0.0;
        for (k, e) in entries.iter().enumerate() {
            if e.source >= source_len || e.target >= target_len {
                return Err(MeasuresError::EntryOutOfRange {
                    entry: k,
                    source_index: e.source,
                    target_index: e.target,
                });
            }
            if !e.mass.is_finite() || e.mass <= 0.0 {
                return Err(MeasuresError::NonPositiveMass {
                    entry: k,
                    mass: e.mass,
                });
            }
            total += e.mass;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(MeasuresError::MassNotNormalized {
                total,
                tol: WEIGHT_SUM_TOL,
            });
        }
        Ok(Coupling {
            entries,
            source_len,
            target_len,
        })
    }

    /// Index-paired coupling reusing the ensemble's own weights.
    pub fn diagonal(ens: &PhaseEnsemble) -> Self {
        let entries = (0..ens.len())
            .map(|i| CouplingEntry {
                source: i,
                target: i,
                mass: ens.weight(i),
            })
            .collect();
        Coupling {
            entries,
            source_len: ens.len(),
            target_len: ens.len(),
        }
    }

    /// Independent product coupling `mu (x) nu`. Dense; intended for small ensembles.
    pub fn product(mu: &PhaseEnsemble, nu: &PhaseEnsemble) -> Self {
        let mut entries = Vec::with_capacity(mu.len() * nu.len());
        for i in 0..mu.len() {
            for j in 0..nu.len() {
                let mass = mu.weight(i) * nu.weight(j);
                if mass > 0.0 {
                    entries.push(CouplingEntry {
                        source: i,
                        target: j,
                        mass,
                    });
                }
            }
        }
        Coupling {
            entries,
            source_len: mu.len(),
            target_len: nu.len(),
        }
    }

    /// Drops entries below [`COUPLING_MASS_FLOOR`] and renormalizes the rest.
    /// Used to clean dense plans coming out of the entropic solver.
    pub fn truncated_renormalized(entries: Vec<CouplingEntry>, source_len: usize, target_len: usize) -> Result<Self, MeasuresError> {
        let kept: Vec<CouplingEntry> = entries
            .into_iter()
            .filter(|e| e.mass >= COUPLING_MASS_FLOOR)
            .collect();
        let total: f64 = kept.iter().map(|e| e.mass).sum();
        if total <= 0.0 {
            return Err(MeasuresError::ZeroTotalMass { total });
        }
        let rescaled = kept
            .into_iter()
            .map(|e| CouplingEntry {
                mass: e.mass / total,
                ..e
            })
            .collect();
        Coupling::from_entries(rescaled, source_len, target_len)
    }

    pub fn entries(&self) -> &[CouplingEntry] {
        &self.entries
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.mass).sum()
    }

    /// Integrates `f(source_index, target_index)` against the plan.
    pub fn integrate<F: FnMut(usize, usize) -> f64>(&self, mut f: F) -> f64 {
        self.entries.iter().map(|e| e.mass * f(e.source, e.target)).sum()
    }
}

/// Result of checking a coupling's marginals against a pair of ensembles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalCheck {
    pub pass: bool,
    /// Largest deviation of any row or column sum from the ensemble weight.
    pub max_residual: f64,
}

/// Verifies that `c` transports `mu` onto `nu`: both marginals must match
/// the ensemble weights within [`MARGINAL_TOL`].
///
/// Structural problems (entries out of range) are errors; a marginal
/// mismatch is a regular failed check.
pub fn validate_coupling(
    c: &Coupling,
    mu: &PhaseEnsemble,
    nu: &PhaseEnsemble,
) -> Result<MarginalCheck, MeasuresError> {
    if c.source_len() != mu.len() {
        return Err(MeasuresError::LengthMismatch {
            what: "coupling source side",
            expected: mu.len(),
            got: c.source_len(),
        });
    }
    if c.target_len() != nu.len() {
        return Err(MeasuresError::LengthMismatch {
            what: "coupling target side",
            expected: nu.len(),
            got: c.target_len(),
        });
    }
    let mut row = vec![0.0; mu.len()];
    let mut col = vec![0.0; nu.len()];
    for (k, e) in c.entries().iter().enumerate() {
        if e.source >= mu.len() || e.target >= nu.len() {
            return Err(MeasuresError::EntryOutOfRange {
                entry: k,
                source_index: e.source,
                target_index: e.target,
            });
        }
        row[e.source] += e.mass;
        col[e.target] += e.mass;
    }
    let mut max_residual: f64 = 0.0;
    for i in 0..mu.len() {
        max_residual = max_residual.max((row[i] - mu.weight(i)).abs());
    }
    for j in 0..nu.len() {
        max_residual = max_residual.max((col[j] - nu.weight(j)).abs());
    }
    Ok(MarginalCheck {
        pass: max_residual < MARGINAL_TOL,
        max_residual,
    })
}
