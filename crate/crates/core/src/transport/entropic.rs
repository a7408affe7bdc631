//! Log-domain Sinkhorn iteration with a feasibility rounding step.
//!
//! The iteration runs entirely on dual potentials, so small regularization
//! (eta down to 1e-4) stays stable. The returned plan is rounded onto the
//! exact marginals: scale rows down, scale columns down, then route the
//! leftover mass greedily. The greedy repair touches at most m+n entries,
//! which keeps the plan sparse after truncation and the marginal residuals
//! at roundoff level.

/// Outcome of the Sinkhorn loop before rounding.
pub struct SinkhornState {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub iterations: usize,
    /// Max absolute row-marginal deviation at the final iterate.
    pub residual: f64,
    pub converged: bool,
}

/// Runs log-domain Sinkhorn until the row marginals match `a` within `tol`
/// (column marginals are exact after every column update).
pub fn sinkhorn_log(
    a: &[f64],
    b: &[f64],
    cost: &[f64],
    eta: f64,
    tol: f64,
    max_iter: usize,
) -> SinkhornState {
    let m = a.len();
    let n = b.len();
    debug_assert_eq!(cost.len(), m * n);
    let log_a: Vec<f64> = a.iter().map(|&w| w.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|&w| w.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut scratch = vec![0.0; m.max(n)];

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        // Row update: f_i = eta * (log a_i - LSE_j((g_j - C_ij)/eta)).
        for i in 0..m {
            let base = i * n;
            let row = &mut scratch[..n];
            for j in 0..n {
                row[j] = (g[j] - cost[base + j]) / eta;
            }
            f[i] = eta * (log_a[i] - log_sum_exp(row));
        }
        // Column update.
        for j in 0..n {
            let col = &mut scratch[..m];
            for i in 0..m {
                col[i] = (f[i] - cost[i * n + j]) / eta;
            }
            g[j] = eta * (log_b[j] - log_sum_exp(col));
        }
        // After the column update the column marginals are exact; measure rows.
        residual = 0.0;
        for i in 0..m {
            let base = i * n;
            let mut row_sum = 0.0;
            for j in 0..n {
                row_sum += ((f[i] + g[j] - cost[base + j]) / eta).exp();
            }
            residual = residual.max((row_sum - a[i]).abs());
        }
        if residual <= tol {
            converged = true;
            break;
        }
    }
    SinkhornState {
        f,
        g,
        iterations,
        residual,
        converged,
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Materializes the (truncated) Gibbs plan and rounds it onto the exact
/// marginals `(a, b)`. Entries below `floor` are dropped up front; the
/// rounding repair restores marginals to roundoff level.
pub fn round_to_feasible(
    a: &[f64],
    b: &[f64],
    cost: &[f64],
    state: &SinkhornState,
    eta: f64,
    floor: f64,
) -> Vec<(usize, usize, f64)> {
    let m = a.len();
    let n = b.len();
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut row_sum = vec![0.0; m];
    for i in 0..m {
        let base = i * n;
        for j in 0..n {
            let mass = ((state.f[i] + state.g[j] - cost[base + j]) / eta).exp();
            if mass >= floor {
                entries.push((i, j, mass));
                row_sum[i] += mass;
            }
        }
    }
    // Scale rows down to at most a_i.
    for e in entries.iter_mut() {
        let s = row_sum[e.0];
        if s > a[e.0] && s > 0.0 {
            e.2 *= a[e.0] / s;
        }
    }
    // Scale columns down to at most b_j.
    let mut col_sum = vec![0.0; n];
    for e in entries.iter() {
        col_sum[e.1] += e.2;
    }
    for e in entries.iter_mut() {
        let s = col_sum[e.1];
        if s > b[e.1] && s > 0.0 {
            e.2 *= b[e.1] / s;
        }
    }
    // Residual marginals are nonnegative; route them greedily (northwest style).
    let mut row_res = a.to_vec();
    let mut col_res = b.to_vec();
    for e in entries.iter() {
        row_res[e.0] -= e.2;
        col_res[e.1] -= e.2;
    }
    let mut i = 0;
    let mut j = 0;
    const EPS: f64 = 1e-18;
    while i < m && j < n {
        if row_res[i] <= EPS {
            i += 1;
            continue;
        }
        if col_res[j] <= EPS {
            j += 1;
            continue;
        }
        let move_mass = row_res[i].min(col_res[j]);
        entries.push((i, j, move_mass));
        row_res[i] -= move_mass;
        col_res[j] -= move_mass;
    }
    // Merge duplicate coordinates introduced by the repair pass.
    entries.sort_by_key(|x| (x.0, x.1));
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
    for e in entries {
        match merged.last_mut() {
            Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
            _ => merged.push(e),
        }
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_sum_exp_matches_direct() {
        let xs = [-1.0f64, 0.5, 2.0];
        let direct = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_abs_diff_eq!(log_sum_exp(&xs), direct, epsilon = 1e-14);
    }

    #[test]
    fn rounding_restores_marginals() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let m = 8;
        let n = 6;
        let a: Vec<f64> = {
            let raw: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() + 0.1).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        };
        let b: Vec<f64> = {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.1).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        };
        let cost: Vec<f64> = (0..m * n).map(|_| rng.gen::<f64>()).collect();
        let state = sinkhorn_log(&a, &b, &cost, 0.05, 1e-9, 5000);
        assert!(state.converged);
        let plan = round_to_feasible(&a, &b, &cost, &state, 0.05, 1e-15);
        let mut row = vec![0.0; m];
        let mut col = vec![0.0; n];
        for &(i, j, f) in &plan {
            row[i] += f;
            col[j] += f;
        }
        for i in 0..m {
            assert_abs_diff_eq!(row[i], a[i], epsilon = 1e-12);
        }
        for j in 0..n {
            assert_abs_diff_eq!(col[j], b[j], epsilon = 1e-12);
        }
    }
}
