//! Scenario files: the TOML/JSON schema, semantic validation, and the
//! deterministic construction of the initial ensemble pair they describe.

use kwass_core::dynamics::{SimConfig, SimMode};
use kwass_core::fields::KernelSpec;
use kwass_core::measures::{wrap_unit, CostSpec, Coupling, PhaseEnsemble};
use kwass_core::transport::{solve_exact_with, ExactOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

/// Largest pair size for which an exact initial coupling may be requested.
pub const EXACT_COUPLING_CAP: usize = 5000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Measures(#[from] kwass_core::measures::MeasuresError),
    #[error(transparent)]
    Fields(#[from] kwass_core::fields::FieldsError),
    #[error(transparent)]
    Transport(#[from] Box<kwass_core::transport::TransportError>),
}

impl From<kwass_core::transport::TransportError> for ScenarioError {
    fn from(e: kwass_core::transport::TransportError) -> Self {
        ScenarioError::Transport(Box::new(e))
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

fn default_seed() -> u64 {
    0
}
fn default_one() -> usize {
    1
}
fn default_dim() -> usize {
    1
}
fn default_p() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_variant() -> String {
    "plain".into()
}
fn default_coupling() -> String {
    "diagonal".into()
}
fn default_weight() -> String {
    "log".into()
}
fn default_c_d() -> f64 {
    kwass_core::bounds::DEFAULT_C_D
}
fn default_c0() -> f64 {
    kwass_core::bounds::DEFAULT_C0
}

/// One or several values of the field-scaling parameter.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EpsList {
    One(f64),
    Many(Vec<f64>),
}

impl EpsList {
    pub fn values(&self) -> Vec<f64> {
        match self {
            EpsList::One(v) => vec![*v],
            EpsList::Many(vs) => vs.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// "zero", "single_mode", or "sum_of_modes".
    pub shape: String,
    pub amplitude: Option<f64>,
    pub coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// "free", "kernel", or "poisson".
    pub mode: String,
    pub dt: f64,
    pub t_end: f64,
    /// Snapshot cadence in steps; 1 records every step.
    #[serde(default = "default_one")]
    pub snap_every: usize,
    pub kernel: Option<KernelSection>,
    pub eps: Option<EpsList>,
    pub grid_n: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub n: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Velocity spread of the Maxwellian draw.
    pub sigma_v: f64,
    /// Low-discrepancy (quiet) start instead of pseudo-random sampling.
    #[serde(default)]
    pub quiet: bool,
    /// Spatial density `1 + a cos(2 pi k x)` along the first coordinate.
    #[serde(default)]
    pub perturb_amplitude: f64,
    #[serde(default = "default_one")]
    pub perturb_mode: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    /// "velocity_shift", "position_shift", or "resample".
    pub kind: String,
    #[serde(default)]
    pub delta: f64,
    /// "diagonal", "exact_w1", or "exact_w2".
    #[serde(default = "default_coupling")]
    pub coupling: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceSection {
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "default_p")]
    pub p: f64,
    pub lambda: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
}

impl DistanceSection {
    /// Column label, e.g. `w1_plain` or `w2_shifted`.
    pub fn label(&self) -> String {
        format!("w{}_{}", self.p, self.variant)
    }

    /// Cost at snapshot time `t` (only the shifted variant uses `t`).
    pub fn cost_spec(&self, t: f64) -> Result<CostSpec, ScenarioError> {
        let spec = match self.variant.as_str() {
            "plain" => CostSpec::plain(self.p),
            "anisotropic" => CostSpec::anisotropic(self.p, self.lambda.unwrap_or(1.0)),
            "quadratic" => CostSpec::quadratic(
                self.p,
                self.a.unwrap_or(1.0),
                self.b.unwrap_or(0.0),
                self.c.unwrap_or(1.0),
            ),
            "shifted" => CostSpec::shifted(self.p, t),
            other => {
                return Err(invalid(
                    "distance.variant",
                    format!("unknown cost variant {other:?}"),
                ))
            }
        };
        Ok(spec?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSection {
    /// "dobrushin", "improved", "combined", "loeper_classical",
    /// "loeper_improved", or "r_of_t".
    pub kind: String,
    /// Force-gradient curvature for the growth bounds; defaults to the
    /// kernel's own bound.
    pub b: Option<f64>,
    /// Decay rate of the classical log-scale bound.
    pub rate: Option<f64>,
    #[serde(default = "default_c_d")]
    pub c_d: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    /// Deposit grid for density sup-norm measurements.
    pub grid_n: Option<usize>,
    /// Index into `[[distance]]` giving the measured series to verify.
    #[serde(default)]
    pub distance_index: usize,
    /// When false the curve is tabulated but not scored.
    #[serde(default = "default_true")]
    pub verify: bool,
    /// Weight family for the implicit diagnostic: "log" or "capped".
    #[serde(default = "default_weight")]
    pub weight: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub sim: SimSection,
    pub init: InitSection,
    pub pair: PairSection,
    #[serde(default)]
    pub distance: Vec<DistanceSection>,
    #[serde(default)]
    pub bounds: Vec<BoundSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl Scenario {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Reads a scenario from a `.toml` or `.json` file.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let origin = path.display().to_string();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text, &origin),
            _ => Self::from_toml_str(&text, &origin),
        }
    }

    /// The scaling parameters this scenario sweeps: `[None]` outside
    /// poisson mode.
    pub fn eps_values(&self) -> Vec<Option<f64>> {
        if self.sim.mode == "poisson" {
            match &self.sim.eps {
                Some(list) => list.values().into_iter().map(Some).collect(),
                None => vec![],
            }
        } else {
            vec![None]
        }
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec, ScenarioError> {
        let section = self
            .sim
            .kernel
            .as_ref()
            .ok_or_else(|| invalid("sim.kernel", "required in kernel mode"))?;
        let spec = match section.shape.as_str() {
            "zero" => KernelSpec::zero(),
            "single_mode" => {
                let amp = section
                    .amplitude
                    .ok_or_else(|| invalid("sim.kernel.amplitude", "required for single_mode"))?;
                KernelSpec::single_mode(amp)?
            }
            "sum_of_modes" => {
                let coeffs = section
                    .coeffs
                    .clone()
                    .ok_or_else(|| invalid("sim.kernel.coeffs", "required for sum_of_modes"))?;
                KernelSpec::sum_of_modes(coeffs)?
            }
            other => {
                return Err(invalid(
                    "sim.kernel.shape",
                    format!("unknown kernel shape {other:?}"),
                ))
            }
        };
        Ok(spec)
    }

    /// The dynamics mode for one sweep value.
    pub fn sim_mode(&self, eps: Option<f64>) -> Result<SimMode, ScenarioError> {
        match self.sim.mode.as_str() {
            "free" => Ok(SimMode::Free),
            "kernel" => Ok(SimMode::Kernel(self.kernel_spec()?)),
            "poisson" => Ok(SimMode::Poisson {
                eps: eps.ok_or_else(|| invalid("sim.eps", "required in poisson mode"))?,
                grid_n: self
                    .sim
                    .grid_n
                    .ok_or_else(|| invalid("sim.grid_n", "required in poisson mode"))?,
            }),
            other => Err(invalid("sim.mode", format!("unknown mode {other:?}"))),
        }
    }

    pub fn sim_config(&self, eps: Option<f64>) -> Result<SimConfig, ScenarioError> {
        Ok(SimConfig {
            dt: self.sim.dt,
            t_end: self.sim.t_end,
            mode: self.sim_mode(eps)?,
        })
    }

    /// Full semantic validation; never simulates.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.is_empty() {
            return Err(invalid("name", "must be nonempty"));
        }
        if !(self.sim.dt > 0.0) || !self.sim.dt.is_finite() {
            return Err(invalid("sim.dt", format!("must be positive, got {}", self.sim.dt)));
        }
        if !(self.sim.t_end >= 0.0) || !self.sim.t_end.is_finite() {
            return Err(invalid(
                "sim.t_end",
                format!("must be nonnegative, got {}", self.sim.t_end),
            ));
        }
        let steps = self.sim.t_end / self.sim.dt;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(invalid(
                "sim.t_end",
                format!("must be an integer multiple of dt, got {} / {}", self.sim.t_end, self.sim.dt),
            ));
        }
        if self.sim.snap_every == 0 {
            return Err(invalid("sim.snap_every", "must be at least 1"));
        }
        match self.sim.mode.as_str() {
            "free" => {}
            "kernel" => {
                self.kernel_spec()?;
            }
            "poisson" => {
                let eps = self
                    .sim
                    .eps
                    .as_ref()
                    .ok_or_else(|| invalid("sim.eps", "required in poisson mode"))?;
                let values = eps.values();
                if values.is_empty() {
                    return Err(invalid("sim.eps", "list must be nonempty"));
                }
                for &e in &values {
                    if !(e > 0.0 && e <= 1.0) {
                        return Err(invalid(
                            "sim.eps",
                            format!("must be in (0, 1], got {e}"),
                        ));
                    }
                }
                let n = self
                    .sim
                    .grid_n
                    .ok_or_else(|| invalid("sim.grid_n", "required in poisson mode"))?;
                if n < 4 {
                    return Err(invalid("sim.grid_n", format!("must be at least 4, got {n}")));
                }
            }
            other => return Err(invalid("sim.mode", format!("unknown mode {other:?}"))),
        }
        if self.init.n == 0 {
            return Err(invalid("init.n", "must be positive"));
        }
        if self.init.dim == 0 {
            return Err(invalid("init.dim", "must be at least 1"));
        }
        if !(self.init.sigma_v >= 0.0) || !self.init.sigma_v.is_finite() {
            return Err(invalid(
                "init.sigma_v",
                format!("must be nonnegative, got {}", self.init.sigma_v),
            ));
        }
        if !(self.init.perturb_amplitude >= 0.0 && self.init.perturb_amplitude < 1.0) {
            return Err(invalid(
                "init.perturb_amplitude",
                format!("must be in [0, 1), got {}", self.init.perturb_amplitude),
            ));
        }
        if self.init.perturb_mode == 0 {
            return Err(invalid("init.perturb_mode", "must be at least 1"));
        }
        match self.pair.kind.as_str() {
            "velocity_shift" | "position_shift" => {}
            "resample" => {
                if self.pair.coupling == "diagonal" {
                    return Err(invalid(
                        "pair.coupling",
                        "diagonal coupling pairs particles by index and is only \
                         meaningful for shift pairs; use exact_w1 or exact_w2",
                    ));
                }
            }
            other => return Err(invalid("pair.kind", format!("unknown pair kind {other:?}"))),
        }
        if !self.pair.delta.is_finite() {
            return Err(invalid("pair.delta", "must be finite"));
        }
        match self.pair.coupling.as_str() {
            "diagonal" => {}
            "exact_w1" | "exact_w2" => {
                if self.init.n > EXACT_COUPLING_CAP {
                    return Err(invalid(
                        "pair.coupling",
                        format!(
                            "exact initial coupling is limited to {EXACT_COUPLING_CAP} \
                             particles, got {}",
                            self.init.n
                        ),
                    ));
                }
            }
            other => {
                return Err(invalid(
                    "pair.coupling",
                    format!("unknown coupling {other:?}"),
                ))
            }
        }
        for (i, d) in self.distance.iter().enumerate() {
            d.cost_spec(0.0)
                .map_err(|e| invalid(&format!("distance[{i}]"), e.to_string()))?;
        }
        let mut r_count = 0;
        for (i, b) in self.bounds.iter().enumerate() {
            let field = |suffix: &str| format!("bounds[{i}].{suffix}");
            match b.kind.as_str() {
                "dobrushin" | "improved" | "combined" => {
                    if self.sim.mode == "poisson" && b.b.is_none() {
                        return Err(invalid(
                            &field("b"),
                            "required in poisson mode (no kernel curvature to default to)",
                        ));
                    }
                }
                "loeper_classical" => {
                    if self.sim.mode != "poisson" {
                        return Err(invalid(&field("kind"), "requires poisson mode"));
                    }
                    if b.rate.is_none() {
                        return Err(invalid(&field("rate"), "required for loeper_classical"));
                    }
                }
                "loeper_improved" => {
                    if self.sim.mode != "poisson" {
                        return Err(invalid(&field("kind"), "requires poisson mode"));
                    }
                }
                "r_of_t" => {
                    if self.sim.mode != "poisson" {
                        return Err(invalid(&field("kind"), "requires poisson mode"));
                    }
                    r_count += 1;
                    if r_count > 1 {
                        return Err(invalid(&field("kind"), "at most one r_of_t per scenario"));
                    }
                }
                other => {
                    return Err(invalid(&field("kind"), format!("unknown bound kind {other:?}")))
                }
            }
            if let Some(bb) = b.b {
                if !(bb >= 0.0) || !bb.is_finite() {
                    return Err(invalid(&field("b"), format!("must be nonnegative, got {bb}")));
                }
            }
            match b.weight.as_str() {
                "log" | "capped" => {}
                other => {
                    return Err(invalid(
                        &field("weight"),
                        format!("unknown weight family {other:?}"),
                    ))
                }
            }
            let needs_distance = matches!(
                b.kind.as_str(),
                "dobrushin" | "improved" | "combined" | "loeper_classical" | "loeper_improved"
            );
            if needs_distance && b.verify && b.distance_index >= self.distance.len() {
                return Err(invalid(
                    &field("distance_index"),
                    format!(
                        "no [[distance]] entry at index {} (have {})",
                        b.distance_index,
                        self.distance.len()
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Builds the base ensemble for a given seed.
    pub fn initial_ensemble(&self, seed: u64) -> Result<PhaseEnsemble, ScenarioError> {
        let n = self.init.n;
        let dim = self.init.dim;
        let mut positions = vec![0.0; n * dim];
        let mut velocities = vec![0.0; n * dim];
        let amp = self.init.perturb_amplitude;
        let mode = self.init.perturb_mode;
        if self.init.quiet {
            // Low-discrepancy start: stratified first coordinate, van der
            // Corput sequences in coprime bases for the rest.
            for i in 0..n {
                for a in 0..dim {
                    let u = if a == 0 {
                        (i as f64 + 0.5) / n as f64
                    } else {
                        van_der_corput(i as u64 + 1, PRIMES[a % PRIMES.len()])
                    };
                    let x = if a == 0 && amp > 0.0 {
                        inverse_perturbed_cdf(u, amp, mode)
                    } else {
                        u
                    };
                    positions[i * dim + a] = x;
                    let q = van_der_corput(i as u64 + 1, PRIMES[(a + dim) % PRIMES.len()]);
                    velocities[i * dim + a] = self.init.sigma_v * inverse_normal_cdf(q);
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..n {
                for a in 0..dim {
                    let u: f64 = rng.gen();
                    positions[i * dim + a] = if a == 0 && amp > 0.0 {
                        inverse_perturbed_cdf(u, amp, mode)
                    } else {
                        u
                    };
                }
                for a in 0..dim {
                    let q = rng.gen::<f64>().clamp(1e-15, 1.0 - 1e-15);
                    velocities[i * dim + a] = self.init.sigma_v * inverse_normal_cdf(q);
                }
            }
        }
        Ok(PhaseEnsemble::uniform(dim, positions, velocities)?)
    }

    /// Builds the pair `(mu0, nu0)` for a given seed.
    pub fn pair_ensembles(
        &self,
        seed: u64,
    ) -> Result<(PhaseEnsemble, PhaseEnsemble), ScenarioError> {
        let mu = self.initial_ensemble(seed)?;
        let dim = self.init.dim;
        let delta = self.pair.delta;
        let nu = match self.pair.kind.as_str() {
            "velocity_shift" => {
                let mut v = mu.velocities_flat().to_vec();
                for chunk in v.chunks_mut(dim) {
                    chunk[0] += delta;
                }
                let mut nu = mu.clone();
                nu.set_state(mu.positions_flat().to_vec(), v)?;
                nu
            }
            "position_shift" => {
                let mut x = mu.positions_flat().to_vec();
                for chunk in x.chunks_mut(dim) {
                    chunk[0] = wrap_unit(chunk[0] + delta);
                }
                let mut nu = mu.clone();
                nu.set_state(x, mu.velocities_flat().to_vec())?;
                nu
            }
            "resample" => self.initial_ensemble(seed ^ 0x9E37_79B9_7F4A_7C15)?,
            other => return Err(invalid("pair.kind", format!("unknown pair kind {other:?}"))),
        };
        Ok((mu, nu))
    }

    /// The fixed initial coupling used for trajectory diagnostics.
    pub fn initial_coupling(
        &self,
        mu: &PhaseEnsemble,
        nu: &PhaseEnsemble,
    ) -> Result<Coupling, ScenarioError> {
        match self.pair.coupling.as_str() {
            "diagonal" => Ok(Coupling::diagonal(mu)),
            "exact_w1" | "exact_w2" => {
                let p = if self.pair.coupling == "exact_w1" { 1.0 } else { 2.0 };
                let spec = CostSpec::plain(p)?;
                let opts = ExactOptions {
                    max_points: EXACT_COUPLING_CAP,
                };
                Ok(solve_exact_with(mu, nu, &spec, &opts)?.plan)
            }
            other => Err(invalid(
                "pair.coupling",
                format!("unknown coupling {other:?}"),
            )),
        }
    }
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical-inverse (van der Corput) sequence value in `(0, 1)`.
fn van_der_corput(mut i: u64, base: u64) -> f64 {
    let mut denom = 1.0;
    let mut r = 0.0;
    while i > 0 {
        denom /= base as f64;
        r += denom * (i % base) as f64;
        i /= base;
    }
    r
}

/// Standard normal quantile function (Acklam's rational approximation,
/// relative error below 1.2e-9, ample for sampling).
// The coefficient tables keep the published digits verbatim so they can be
// checked against the source; one entry carries a digit beyond f64.
#[allow(clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Inverts `F(x) = x + a sin(2 pi k x) / (2 pi k)`, the CDF of the density
/// `1 + a cos(2 pi k x)` on the unit interval, by safeguarded Newton.
pub fn inverse_perturbed_cdf(u: f64, a: f64, k: usize) -> f64 {
    debug_assert!((0.0..1.0).contains(&u) && a.abs() < 1.0 && k >= 1);
    let tau_k = std::f64::consts::TAU * k as f64;
    let f = |x: f64| x + a * (tau_k * x).sin() / tau_k - u;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut x = u;
    for _ in 0..100 {
        let fx = f(x);
        if fx.abs() < 1e-15 {
            break;
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let deriv = 1.0 + a * (tau_k * x).cos();
        let step = x - fx / deriv;
        x = if step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn minimal_toml() -> String {
        r#"
            name = "demo"
            seed = 7
            [sim]
            mode = "free"
            dt = 0.1
            t_end = 1.0
            [init]
            n = 50
            sigma_v = 0.2
            [pair]
            kind = "velocity_shift"
            delta = 1e-3
            [[distance]]
            p = 1.0
        "#
        .to_string()
    }

    #[test]
    fn parses_and_validates_minimal_scenario() {
        let sc = Scenario::from_toml_str(&minimal_toml(), "inline").unwrap();
        sc.validate().unwrap();
        assert_eq!(sc.name, "demo");
        assert_eq!(sc.eps_values(), vec![None]);
        assert_eq!(sc.distance[0].label(), "w1_plain");
    }

    #[test]
    fn rejects_bad_fields_with_path() {
        let bad_dt = minimal_toml().replace("dt = 0.1", "dt = -0.1");
        let sc = Scenario::from_toml_str(&bad_dt, "inline").unwrap();
        let msg = sc.validate().unwrap_err().to_string();
        assert!(msg.contains("sim.dt"), "{msg}");

        let toml = r#"
            name = "vp"
            [sim]
            mode = "poisson"
            dt = 0.001
            t_end = 0.01
            eps = 1.5
            grid_n = 64
            [init]
            n = 100
            sigma_v = 0.2
            [pair]
            kind = "velocity_shift"
            delta = 1e-6
        "#;
        let sc = Scenario::from_toml_str(toml, "inline").unwrap();
        let msg = sc.validate().unwrap_err().to_string();
        assert!(msg.contains("sim.eps") && msg.contains("(0, 1]"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        let toml = minimal_toml().replace("seed = 7", "seed = 7\nbogus = 1");
        let err = Scenario::from_toml_str(&toml, "inline").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn eps_list_forms() {
        let toml = r#"
            name = "vp"
            [sim]
            mode = "poisson"
            dt = 0.001
            t_end = 0.01
            eps = [1.0, 0.5]
            grid_n = 64
            [init]
            n = 100
            sigma_v = 0.2
            [pair]
            kind = "velocity_shift"
            delta = 1e-6
        "#;
        let sc = Scenario::from_toml_str(toml, "inline").unwrap();
        sc.validate().unwrap();
        assert_eq!(sc.eps_values(), vec![Some(1.0), Some(0.5)]);
    }

    #[test]
    fn velocity_shift_pair_is_exact() {
        let sc = Scenario::from_toml_str(&minimal_toml(), "inline").unwrap();
        let (mu, nu) = sc.pair_ensembles(7).unwrap();
        assert_eq!(mu.positions_flat(), nu.positions_flat());
        for i in 0..mu.len() {
            assert_abs_diff_eq!(
                nu.velocity(i)[0] - mu.velocity(i)[0],
                1e-3,
                epsilon = 1e-18
            );
        }
        // Same seed, same ensembles.
        let (mu2, _) = sc.pair_ensembles(7).unwrap();
        assert_eq!(mu.positions_flat(), mu2.positions_flat());
        assert_eq!(mu.velocities_flat(), mu2.velocities_flat());
    }

    #[test]
    fn quiet_start_is_stratified_and_seedless() {
        let toml = minimal_toml().replace("sigma_v = 0.2", "sigma_v = 0.2\nquiet = true");
        let sc = Scenario::from_toml_str(&toml, "inline").unwrap();
        let a = sc.initial_ensemble(1).unwrap();
        let b = sc.initial_ensemble(2).unwrap();
        assert_eq!(a.positions_flat(), b.positions_flat());
        // Stratified positions: one particle per cell of width 1/n.
        let n = a.len();
        for i in 0..n {
            let x = a.position(i)[0];
            assert!(x > i as f64 / n as f64 && x < (i + 1) as f64 / n as f64);
        }
        // Velocities are centered.
        let mean: f64 = a.velocities_flat().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05);
    }

    #[test]
    fn inverse_normal_cdf_matches_known_quantiles() {
        assert_abs_diff_eq!(inverse_normal_cdf(0.5), 0.0, epsilon = 1e-12);
        // Phi(1) = 0.8413447460685429.
        assert_abs_diff_eq!(inverse_normal_cdf(0.841344746068543), 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(inverse_normal_cdf(0.158655253931457), -1.0, epsilon = 1e-7);
        // Phi(2.3263478740408408) = 0.99.
        assert_abs_diff_eq!(inverse_normal_cdf(0.99), 2.3263478740408408, epsilon = 1e-7);
        assert!(inverse_normal_cdf(1e-12) < -6.0);
    }

    #[test]
    fn perturbed_cdf_inverts_to_machine_precision() {
        for &a in &[0.0, 0.05, 0.5, 0.9] {
            for k in [1usize, 3] {
                for j in 0..50 {
                    let u = (j as f64 + 0.5) / 50.0;
                    let x = inverse_perturbed_cdf(u, a, k);
                    let tau_k = std::f64::consts::TAU * k as f64;
                    let back = x + a * (tau_k * x).sin() / tau_k;
                    assert_abs_diff_eq!(back, u, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn perturbed_positions_tilt_the_density() {
        let toml = minimal_toml()
            .replace("n = 50", "n = 4000")
            .replace(
                "sigma_v = 0.2",
                "sigma_v = 0.2\nquiet = true\nperturb_amplitude = 0.3",
            );
        let sc = Scenario::from_toml_str(&toml, "inline").unwrap();
        let ens = sc.initial_ensemble(0).unwrap();
        // Density 1 + 0.3 cos(2 pi x): left half [0, 1/4) u [3/4, 1) carries
        // more mass than the complement.
        let near_peak = (0..ens.len())
            .filter(|&i| {
                let x = ens.position(i)[0];
                !(0.25..0.75).contains(&x)
            })
            .count() as f64
            / ens.len() as f64;
        let expected = 0.5 + 0.3 / std::f64::consts::PI;
        assert_abs_diff_eq!(near_peak, expected, epsilon = 0.01);
    }

    #[test]
    fn resample_requires_exact_coupling() {
        let toml = minimal_toml().replace("kind = \"velocity_shift\"", "kind = \"resample\"");
        let sc = Scenario::from_toml_str(&toml, "inline").unwrap();
        let msg = sc.validate().unwrap_err().to_string();
        assert!(msg.contains("pair.coupling"), "{msg}");
    }

    #[test]
    fn exact_coupling_is_optimal_for_shift() {
        let toml = minimal_toml().replace(
            "kind = \"velocity_shift\"",
            "kind = \"velocity_shift\"\ncoupling = \"exact_w1\"",
        );
        let sc = Scenario::from_toml_str(&toml, "inline").unwrap();
        sc.validate().unwrap();
        let (mu, nu) = sc.pair_ensembles(7).unwrap();
        let pi = sc.initial_coupling(&mu, &nu).unwrap();
        // A uniform velocity shift leaves the identity coupling optimal.
        let spec = CostSpec::plain(1.0).unwrap();
        let cost = pi.integrate(|i, j| {
            kwass_core::measures::pair_cost(&spec, mu.position(i), mu.velocity(i), nu.position(j), nu.velocity(j))
        });
        assert_abs_diff_eq!(cost, 1e-3, epsilon = 1e-15);
    }
}
