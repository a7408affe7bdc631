//! Mean-field forces on the torus.
//!
//! Two force paths feed the dynamics module: direct convolution with a
//! smooth interaction kernel (exact pairwise sums), and the scaled Poisson
//! field `-eps^2 lap U = rho - 1` solved spectrally on a uniform grid with
//! cloud-in-cell transfer between particles and nodes. The module also
//! carries the two field-regularity diagnostics used by the stability
//! bounds: the L2 estimate relating field differences to a transport
//! distance between the densities, and the empirical log-Lipschitz modulus
//! of a single field.

use crate::measures::{min_image, torus_distance, CostSpec, MeasuresError, PhaseEnsemble};
use crate::transport::{wasserstein, TransportError};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::io::{BufRead, Write};
use thiserror::Error;

/// Mean of a deposited density must sit this close to 1.
pub const DENSITY_MEAN_TOL: f64 = 1e-10;

/// Neutrality deviations above this are worth a loud warning downstream.
pub const NEUTRALITY_WARN: f64 = 1e-6;

/// Spectral residual must stay below this multiple of the source sup-norm.
pub const SPECTRAL_RESIDUAL_TOL: f64 = 1e-8;

/// Relative slack granted to the empirical kernel Lipschitz check.
pub const KERNEL_LIPSCHITZ_SLACK: f64 = 1e-6;

/// Discretization allowance for the L2 field estimate check.
pub const LOEPER_L2_ALLOWANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum FieldsError {
    #[error("grid needs n >= 4 nodes per axis, got {0}")]
    GridTooCoarse(usize),
    #[error("grid dimension must be positive")]
    ZeroDimension,
    #[error("value buffer has length {got}, expected {expected}")]
    BadValueLength { expected: usize, got: usize },
    #[error("grid value {index} is not finite")]
    NonFiniteValue { index: usize },
    #[error("eps must be positive and finite, got {0}")]
    BadEps(f64),
    #[error("kernel parameter is not finite")]
    BadKernelParameter,
    #[error("grids differ in shape: {0}^{1} vs {2}^{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("modulus estimate needs at least 1000 sample pairs, got {0}")]
    TooFewSamples(usize),
    #[error("density has negative node value {value} at index {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("csv parse error at line {line}: {reason}")]
    CsvParse { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Measures(#[from] MeasuresError),
    #[error(transparent)]
    Transport(#[from] Box<TransportError>),
}

impl From<TransportError> for FieldsError {
    fn from(e: TransportError) -> Self {
        FieldsError::Transport(Box::new(e))
    }
}

/// Scalar field sampled on the uniform torus grid with `n` nodes per axis,
/// nodes at coordinates `j/n`. Values are stored row-major (last axis
/// fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    values: Vec<f64>,
}

impl TorusGrid {
    pub fn zeros(dim: usize, n: usize) -> Result<Self, FieldsError> {
        if dim == 0 {
            return Err(FieldsError::ZeroDimension);
        }
        if n < 4 {
            return Err(FieldsError::GridTooCoarse(n));
        }
        Ok(TorusGrid {
            dim,
            n,
            values: vec![0.0; n.pow(dim as u32)],
        })
    }

    pub fn from_values(dim: usize, n: usize, values: Vec<f64>) -> Result<Self, FieldsError> {
        let mut grid = Self::zeros(dim, n)?;
        if values.len() != grid.values.len() {
            return Err(FieldsError::BadValueLength {
                expected: grid.values.len(),
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldsError::NonFiniteValue { index: bad });
        }
        grid.values = values;
        Ok(grid)
    }

    /// Samples a smooth function at every node.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(dim: usize, n: usize, f: F) -> Result<Self, FieldsError> {
        let mut grid = Self::zeros(dim, n)?;
        let mut coords = vec![0.0; dim];
        for flat in 0..grid.values.len() {
            grid.node_coords(flat, &mut coords);
            grid.values[flat] = f(&coords);
        }
        if let Some(bad) = grid.values.iter().position(|v| !v.is_finite()) {
            return Err(FieldsError::NonFiniteValue { index: bad });
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Writes the node position of flat index `flat` into `out`.
    pub fn node_coords(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for a in (0..self.dim).rev() {
            out[a] = (rem % self.n) as f64 / self.n as f64;
            rem /= self.n;
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sup norm of the values.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Sup norm of `values - 1`, the fluctuation size of a density.
    pub fn sup_deviation_from_one(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()))
    }

    /// Cloud-in-cell interpolation of the grid at an arbitrary torus point.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let n = self.n;
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        for a in 0..self.dim {
            let xi = crate::measures::wrap_unit(x[a]) * n as f64;
            let b = (xi.floor() as usize).min(n - 1);
            base[a] = b;
            frac[a] = xi - b as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for a in 0..self.dim {
                let hi = (corner >> a) & 1 == 1;
                weight *= if hi { frac[a] } else { 1.0 - frac[a] };
                let idx = if hi { (base[a] + 1) % n } else { base[a] };
                flat = flat * n + idx;
            }
            acc += weight * self.values[flat];
        }
        acc
    }

    /// Serializes as CSV with one row per node: index columns then `value`.
    pub fn to_csv<W: Write>(&self, mut out: W) -> Result<(), FieldsError> {
        let names = ["i", "j", "k"];
        let mut header = String::new();
        for a in 0..self.dim {
            let name = names
                .get(a)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("i{a}"));
            header.push_str(&name);
            header.push(',');
        }
        header.push_str("value");
        writeln!(out, "{header}")?;
        let mut idx = vec![0usize; self.dim];
        for (flat, v) in self.values.iter().enumerate() {
            let mut rem = flat;
            for a in (0..self.dim).rev() {
                idx[a] = rem % self.n;
                rem /= self.n;
            }
            let mut line = String::new();
            for i in &idx {
                line.push_str(&i.to_string());
                line.push(',');
            }
            line.push_str(&format!("{v}"));
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads a grid back from [`TorusGrid::to_csv`] output.
    pub fn from_csv<R: BufRead>(dim: usize, n: usize, input: R) -> Result<Self, FieldsError> {
        let mut grid = Self::zeros(dim, n)?;
        let mut seen = vec![false; grid.values.len()];
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                continue; // header
            }
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let parts: Vec<&str> = trimmed.split(',').collect();
            if parts.len() != dim + 1 {
                return Err(FieldsError::CsvParse {
                    line: lineno + 1,
                    reason: format!("expected {} fields, got {}", dim + 1, parts.len()),
                });
            }
            let mut flat = 0usize;
            for a in 0..dim {
                let i: usize = parts[a].parse().map_err(|e| FieldsError::CsvParse {
                    line: lineno + 1,
                    reason: format!("bad index: {e}"),
                })?;
                if i >= n {
                    return Err(FieldsError::CsvParse {
                        line: lineno + 1,
                        reason: format!("index {i} out of range for n={n}"),
                    });
                }
                flat = flat * n + i;
            }
            let v: f64 = parts[dim].parse().map_err(|e| FieldsError::CsvParse {
                line: lineno + 1,
                reason: format!("bad value: {e}"),
            })?;
            grid.values[flat] = v;
            seen[flat] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(FieldsError::CsvParse {
                line: 0,
                reason: format!("node {missing} missing from csv"),
            });
        }
        Ok(grid)
    }
}

/// Interaction kernels, declared by name in scenario files.
///
/// All kernels act separably per coordinate; gradients take minimal-image
/// displacements. The single-mode kernel with amplitude `B` has gradient
/// component `B sin(2 pi u) / (2 pi)`, so its second derivative is exactly
/// `B cos(2 pi u)` and the curvature bound below is sharp. The sum-of-modes
/// kernel assigns coefficient `c_k` to mode `k`, gradient component
/// `sum_k c_k sin(2 pi k u) / (2 pi k)`; its curvature bound `sum_k |c_k|`
/// is sharp when all coefficients share a sign.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Zero,
    SingleMode { amplitude: f64 },
    SumOfModes { coeffs: Vec<f64> },
}

impl KernelSpec {
    pub fn zero() -> Self {
        KernelSpec::Zero
    }

    pub fn single_mode(amplitude: f64) -> Result<Self, FieldsError> {
        if !amplitude.is_finite() {
            return Err(FieldsError::BadKernelParameter);
        }
        Ok(KernelSpec::SingleMode { amplitude })
    }

    pub fn sum_of_modes(coeffs: Vec<f64>) -> Result<Self, FieldsError> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(FieldsError::BadKernelParameter);
        }
        Ok(KernelSpec::SumOfModes { coeffs })
    }

    /// Sup norm of the second derivative; the `B` that the growth bounds use.
    pub fn hessian_bound(&self) -> f64 {
        match self {
            KernelSpec::Zero => 0.0,
            KernelSpec::SingleMode { amplitude } => amplitude.abs(),
            KernelSpec::SumOfModes { coeffs } => coeffs.iter().map(|c| c.abs()).sum(),
        }
    }

    /// Gradient component for a single minimal-image displacement coordinate.
    #[inline]
    fn gradient_1d(&self, u: f64) -> f64 {
        use std::f64::consts::TAU;
        match self {
            KernelSpec::Zero => 0.0,
            KernelSpec::SingleMode { amplitude } => amplitude * (TAU * u).sin() / TAU,
            KernelSpec::SumOfModes { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(idx, c)| {
                    let k = (idx + 1) as f64;
                    c * (TAU * k * u).sin() / (TAU * k)
                })
                .sum(),
        }
    }

    /// Potential value for a single displacement coordinate (zero-mean gauge).
    #[inline]
    fn potential_1d(&self, u: f64) -> f64 {
        use std::f64::consts::TAU;
        match self {
            KernelSpec::Zero => 0.0,
            KernelSpec::SingleMode { amplitude } => -amplitude * (TAU * u).cos() / (TAU * TAU),
            KernelSpec::SumOfModes { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(idx, c)| {
                    let k = (idx + 1) as f64;
                    -c * (TAU * k * u).cos() / (TAU * k).powi(2)
                })
                .sum(),
        }
    }

    /// Writes `grad K(dx)` into `out` for a displacement `dx` (minimal image
    /// applied internally).
    pub fn gradient(&self, dx: &[f64], out: &mut [f64]) {
        for (o, &d) in out.iter_mut().zip(dx) {
            *o = self.gradient_1d(min_image(d));
        }
    }

    /// `K(dx)` for the interaction-energy diagnostic.
    pub fn potential(&self, dx: &[f64]) -> f64 {
        dx.iter().map(|&d| self.potential_1d(min_image(d))).sum()
    }

    /// Empirical Lipschitz constant of the gradient over seeded random torus
    /// pairs, and whether it stays within the declared curvature bound.
    pub fn lipschitz_check(&self, dim: usize, pairs: usize, seed: u64) -> (f64, bool) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        let mut gx = vec![0.0; dim];
        let mut gy = vec![0.0; dim];
        let mut dx = vec![0.0; dim];
        for _ in 0..pairs {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            let dist = torus_distance(&x, &y);
            if dist == 0.0 {
                continue;
            }
            self.gradient(&x, &mut gx);
            self.gradient(&y, &mut gy);
            for a in 0..dim {
                dx[a] = gx[a] - gy[a];
            }
            let diff = dx.iter().map(|d| d * d).sum::<f64>().sqrt();
            worst = worst.max(diff / dist);
        }
        let bound = self.hessian_bound();
        (worst, worst <= bound * (1.0 + KERNEL_LIPSCHITZ_SLACK))
    }
}

/// Cloud-in-cell deposition of an ensemble onto an `n`-per-axis grid.
///
/// Returns a density: node values average to 1 (total deposited mass is the
/// unit ensemble mass, scaled by `n^d`). Chunked accumulation with a fixed
/// merge order keeps the result identical across thread counts.
pub fn deposit_density(ens: &PhaseEnsemble, n: usize) -> Result<TorusGrid, FieldsError> {
    let dim = ens.dim();
    let mut grid = TorusGrid::zeros(dim, n)?;
    let size = grid.node_count();
    let scale = size as f64; // mass -> density on the unit torus

    const CHUNK: usize = 1 << 15;
    let chunk_count = ens.len().div_ceil(CHUNK);
    let partials: Vec<Vec<f64>> = (0..chunk_count)
        .into_par_iter()
        .map(|c| {
            let mut local = vec![0.0f64; size];
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(ens.len());
            let mut base = [0usize; 8];
            let mut frac = [0.0f64; 8];
            for i in lo..hi {
                let x = ens.position(i);
                for a in 0..dim {
                    let xi = x[a] * n as f64;
                    let b = (xi.floor() as usize).min(n - 1);
                    base[a] = b;
                    frac[a] = xi - b as f64;
                }
                let w = ens.weight(i) * scale;
                for corner in 0..(1usize << dim) {
                    let mut weight = w;
                    let mut flat = 0usize;
                    for a in 0..dim {
                        let hi_node = (corner >> a) & 1 == 1;
                        weight *= if hi_node { frac[a] } else { 1.0 - frac[a] };
                        let idx = if hi_node { (base[a] + 1) % n } else { base[a] };
                        flat = flat * n + idx;
                    }
                    local[flat] += weight;
                }
            }
            local
        })
        .collect();
    for local in partials {
        for (dst, src) in grid.values.iter_mut().zip(&local) {
            *dst += src;
        }
    }
    debug_assert!((grid.mean() - 1.0).abs() < DENSITY_MEAN_TOL);
    Ok(grid)
}

/// Exact mean-field force at one query point: the weighted sum of kernel
/// gradients over every particle, minimal-image displacements, no cutoff.
pub fn kernel_force(ens: &PhaseEnsemble, kernel: &KernelSpec, x: &[f64]) -> Vec<f64> {
    let dim = ens.dim();
    let mut force = vec![0.0; dim];
    let mut dx = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for j in 0..ens.len() {
        let xj = ens.position(j);
        for a in 0..dim {
            dx[a] = x[a] - xj[a];
        }
        kernel.gradient(&dx, &mut g);
        let w = ens.weight(j);
        for a in 0..dim {
            force[a] += w * g[a];
        }
    }
    force
}

/// Kernel force evaluated at every particle of the ensemble itself,
/// flattened `n*dim`. Queries run in parallel; each inner sum keeps the
/// fixed particle order, so results do not depend on the thread count.
pub fn kernel_force_all(ens: &PhaseEnsemble, kernel: &KernelSpec) -> Vec<f64> {
    let dim = ens.dim();
    let mut out = vec![0.0; ens.len() * dim];
    out.par_chunks_mut(dim).enumerate().for_each(|(i, slot)| {
        let f = kernel_force(ens, kernel, ens.position(i));
        slot.copy_from_slice(&f);
    });
    out
}

/// Solution of the scaled periodic Poisson problem.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    /// Zero-mean potential grid.
    pub potential: TorusGrid,
    /// One gradient grid per axis; `field[a]` holds `-dU/dx_a`.
    pub field: Vec<TorusGrid>,
    pub eps: f64,
    /// `|mean(rho) - 1|`; nonzero means the source needed re-neutralization.
    pub neutrality_deviation: f64,
    /// Max-norm of the spectral defect `-eps^2 lap U - (rho - mean)`.
    pub residual: f64,
    /// Sup norm of the neutralized source, the scale `residual` compares to.
    pub source_sup: f64,
}

impl FieldSolution {
    /// Force vector at a torus point by cloud-in-cell gather of the field.
    pub fn force_at(&self, x: &[f64]) -> Vec<f64> {
        self.field.iter().map(|g| g.interpolate(x)).collect()
    }

    /// Field energy `(eps^2 / 2) * mean |grad U|^2` by node quadrature.
    pub fn field_energy(&self) -> f64 {
        let nodes = self.potential.node_count() as f64;
        let sum: f64 = self
            .field
            .iter()
            .map(|g| g.values().iter().map(|v| v * v).sum::<f64>())
            .sum();
        0.5 * self.eps * self.eps * sum / nodes
    }
}

/// In-place complex FFT over every axis of a row-major `n^dim` buffer.
/// The inverse pass includes the `1/n` normalization per axis.
fn fft_nd(data: &mut [Complex<f64>], dim: usize, n: usize, forward: bool) {
    let mut planner = FftPlanner::new();
    let fft = if forward {
        planner.plan_fft_forward(n)
    } else {
        planner.plan_fft_inverse(n)
    };
    let total = data.len();
    let mut line = vec![Complex::new(0.0, 0.0); n];
    for axis in 0..dim {
        // Row-major index: axis `a` has stride n^(dim-1-a).
        let stride = n.pow((dim - 1 - axis) as u32);
        let block = stride * n;
        for base_block in (0..total).step_by(block) {
            for offset in 0..stride {
                let start = base_block + offset;
                for (t, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + t * stride];
                }
                fft.process(&mut line);
                let scale = if forward { 1.0 } else { 1.0 / n as f64 };
                for (t, slot) in line.iter().enumerate() {
                    data[start + t * stride] = *slot * scale;
                }
            }
        }
    }
}

/// Signed integer frequency for index `j` on an `n`-point axis.
#[inline]
fn signed_freq(j: usize, n: usize) -> i64 {
    let j = j as i64;
    let n = n as i64;
    if j <= n / 2 {
        j
    } else {
        j - n
    }
}

/// Solves `-eps^2 lap U = rho - 1` spectrally on the grid of `rho`.
///
/// If the grid mean strays from 1 the source is re-centered and the
/// deviation recorded. The zero mode of `U` is pinned to 0 (mean-free
/// gauge). Field grids hold `E = -grad U`, differentiated spectrally with
/// the unpaired middle frequency dropped on even grids.
pub fn poisson_solve(rho: &TorusGrid, eps: f64) -> Result<FieldSolution, FieldsError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(FieldsError::BadEps(eps));
    }
    if let Some(bad) = rho.values.iter().position(|v| !v.is_finite()) {
        return Err(FieldsError::NonFiniteValue { index: bad });
    }
    let dim = rho.dim;
    let n = rho.n;
    let size = rho.values.len();
    let mean = rho.mean();
    let neutrality_deviation = (mean - 1.0).abs();

    let mut source = vec![Complex::new(0.0, 0.0); size];
    for (s, &v) in source.iter_mut().zip(&rho.values) {
        *s = Complex::new(v - mean, 0.0);
    }
    let source_sup = rho
        .values
        .iter()
        .fold(0.0f64, |m, &v| m.max((v - mean).abs()));

    let mut rho_hat = source.clone();
    fft_nd(&mut rho_hat, dim, n, true);

    use std::f64::consts::TAU;
    let eps_sq = eps * eps;
    let mut u_hat = vec![Complex::new(0.0, 0.0); size];
    let mut idx = vec![0usize; dim];
    for flat in 0..size {
        let mut rem = flat;
        for a in (0..dim).rev() {
            idx[a] = rem % n;
            rem /= n;
        }
        let k_sq: f64 = idx
            .iter()
            .map(|&j| {
                let k = signed_freq(j, n) as f64;
                k * k
            })
            .sum();
        if k_sq > 0.0 {
            // Dividing by eps_sq last keeps power-of-two eps rescalings exact.
            u_hat[flat] = rho_hat[flat] / (TAU * TAU * k_sq) / eps_sq;
        }
    }

    // E_a = -dU/dx_a: multiply by -(i tau k_a); drop the unpaired middle mode.
    let mut field = Vec::with_capacity(dim);
    for axis in 0..dim {
        let mut e_hat = vec![Complex::new(0.0, 0.0); size];
        for flat in 0..size {
            let mut rem = flat;
            let mut j_axis = 0usize;
            for a in (0..dim).rev() {
                let j = rem % n;
                rem /= n;
                if a == axis {
                    j_axis = j;
                }
            }
            let k = signed_freq(j_axis, n);
            if n.is_multiple_of(2) && j_axis == n / 2 {
                continue; // no conjugate partner; derivative contribution dropped
            }
            let factor = Complex::new(0.0, -(TAU * k as f64));
            e_hat[flat] = factor * u_hat[flat];
        }
        fft_nd(&mut e_hat, dim, n, false);
        let values: Vec<f64> = e_hat.iter().map(|c| c.re).collect();
        field.push(TorusGrid { dim, n, values });
    }

    // Spectral residual: reconstruct -eps^2 lap U and compare to the source.
    let mut lap_hat = vec![Complex::new(0.0, 0.0); size];
    for flat in 0..size {
        let mut rem = flat;
        let mut k_sq = 0.0;
        for _a in (0..dim).rev() {
            let j = rem % n;
            rem /= n;
            let k = signed_freq(j, n) as f64;
            k_sq += k * k;
        }
        lap_hat[flat] = u_hat[flat] * (eps_sq * TAU * TAU * k_sq);
    }
    fft_nd(&mut lap_hat, dim, n, false);
    let residual = lap_hat
        .iter()
        .zip(&source)
        .fold(0.0f64, |m, (l, s)| m.max((l.re - s.re).abs()));

    let mut u = u_hat;
    fft_nd(&mut u, dim, n, false);
    let potential = TorusGrid {
        dim,
        n,
        values: u.iter().map(|c| c.re).collect(),
    };

    Ok(FieldSolution {
        potential,
        field,
        eps,
        neutrality_deviation,
        residual,
        source_sup,
    })
}

/// Spectral partial derivative of a grid along one axis.
pub fn spectral_derivative(grid: &TorusGrid, axis: usize) -> TorusGrid {
    use std::f64::consts::TAU;
    let dim = grid.dim;
    let n = grid.n;
    let size = grid.values.len();
    let mut hat: Vec<Complex<f64>> = grid
        .values
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    fft_nd(&mut hat, dim, n, true);
    for flat in 0..size {
        let mut rem = flat;
        let mut j_axis = 0usize;
        for a in (0..dim).rev() {
            let j = rem % n;
            rem /= n;
            if a == axis {
                j_axis = j;
            }
        }
        if n.is_multiple_of(2) && j_axis == n / 2 {
            hat[flat] = Complex::new(0.0, 0.0);
            continue;
        }
        let k = signed_freq(j_axis, n) as f64;
        hat[flat] *= Complex::new(0.0, TAU * k);
    }
    fft_nd(&mut hat, dim, n, false);
    TorusGrid {
        dim,
        n,
        values: hat.iter().map(|c| c.re).collect(),
    }
}

/// Outcome of the L2 field-versus-transport comparison.
#[derive(Debug, Clone, Copy)]
pub struct LoeperCheck {
    /// `eps^2 * ||grad U_1 - grad U_2||_L2`.
    pub lhs: f64,
    /// `max(sup rho_1, sup rho_2)^(1/2) * W_2(rho_1, rho_2)`.
    pub rhs: f64,
    pub w2: f64,
    pub pass: bool,
}

/// Checks that the scaled L2 field difference is controlled by the
/// transport distance between the two densities, within a 5% allowance for
/// the two discretizations. Densities must be nonnegative with mean 1.
pub fn verify_loeper_l2(
    rho1: &TorusGrid,
    rho2: &TorusGrid,
    eps: f64,
) -> Result<LoeperCheck, FieldsError> {
    if rho1.dim != rho2.dim || rho1.n != rho2.n {
        return Err(FieldsError::ShapeMismatch(rho1.n, rho1.dim, rho2.n, rho2.dim));
    }
    for (idx, &v) in rho1.values.iter().enumerate() {
        if v < 0.0 {
            return Err(FieldsError::NegativeDensity { index: idx, value: v });
        }
    }
    for (idx, &v) in rho2.values.iter().enumerate() {
        if v < 0.0 {
            return Err(FieldsError::NegativeDensity { index: idx, value: v });
        }
    }
    let sol1 = poisson_solve(rho1, eps)?;
    let sol2 = poisson_solve(rho2, eps)?;

    let nodes = rho1.values.len() as f64;
    let mut sum_sq = 0.0;
    for a in 0..rho1.dim {
        for (e1, e2) in sol1.field[a].values().iter().zip(sol2.field[a].values()) {
            let d = e1 - e2;
            sum_sq += d * d;
        }
    }
    let lhs = eps * eps * (sum_sq / nodes).sqrt();

    let w2 = if rho1.values == rho2.values {
        0.0
    } else {
        let mu = grid_ensemble(rho1)?;
        let nu = grid_ensemble(rho2)?;
        wasserstein(&mu, &nu, &CostSpec::plain(2.0)?)?.value
    };
    let rhs = rho1.sup_norm().max(rho2.sup_norm()).sqrt() * w2;
    let pass = lhs <= rhs * (1.0 + LOEPER_L2_ALLOWANCE);
    Ok(LoeperCheck { lhs, rhs, w2, pass })
}

/// Ensemble of cell-center atoms weighted by a density grid (zero velocity).
fn grid_ensemble(rho: &TorusGrid) -> Result<PhaseEnsemble, FieldsError> {
    let size = rho.values.len();
    let dim = rho.dim;
    let mut positions = Vec::with_capacity(size * dim);
    let mut coords = vec![0.0; dim];
    for flat in 0..size {
        rho.node_coords(flat, &mut coords);
        positions.extend_from_slice(&coords);
    }
    let weights: Vec<f64> = rho.values.iter().map(|&v| v / size as f64).collect();
    Ok(PhaseEnsemble::new(
        dim,
        positions,
        vec![0.0; size * dim],
        weights,
    )?)
}

/// Empirical log-Lipschitz modulus of a solved field.
#[derive(Debug, Clone, Copy)]
pub struct LogLipschitzEstimate {
    /// Largest sampled ratio; `None` when the source vanishes identically.
    pub constant: Option<f64>,
    pub degenerate: bool,
    pub pairs_used: usize,
}

/// Samples random point pairs and maximizes
/// `eps^2 |grad U(x) - grad U(y)| / (|x-y| log(4 sqrt(d)/|x-y|) ||rho-1||_inf)`
/// over pairs with `|x-y| < 1`. A vanishing fluctuation makes the ratio
/// undefined and flips the degenerate flag instead.
pub fn log_lipschitz_modulus(
    field: &FieldSolution,
    rho: &TorusGrid,
    samples: usize,
    seed: u64,
) -> Result<LogLipschitzEstimate, FieldsError> {
    if samples < 1000 {
        return Err(FieldsError::TooFewSamples(samples));
    }
    let fluct = rho.sup_deviation_from_one();
    if fluct == 0.0 {
        return Ok(LogLipschitzEstimate {
            constant: None,
            degenerate: true,
            pairs_used: 0,
        });
    }
    let dim = rho.dim;
    let eps_sq = field.eps * field.eps;
    let log_scale = 4.0 * (dim as f64).sqrt();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut used = 0usize;
    for _ in 0..samples {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let dist = torus_distance(&x, &y);
        if dist <= 0.0 || dist >= 1.0 {
            continue;
        }
        let mut diff_sq = 0.0;
        for g in &field.field {
            let d = g.interpolate(&x) - g.interpolate(&y);
            diff_sq += d * d;
        }
        let ratio = eps_sq * diff_sq.sqrt() / (dist * (log_scale / dist).ln() * fluct);
        worst = worst.max(ratio);
        used += 1;
    }
    Ok(LogLipschitzEstimate {
        constant: Some(worst),
        degenerate: false,
        pairs_used: used,
    })
}
