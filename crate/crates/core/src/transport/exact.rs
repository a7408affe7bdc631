//! Exact discrete transport solvers.
//!
//! Two routes: a shortest-augmenting-path assignment solver for the
//! equal-size uniform-weight case, and a successive-shortest-paths
//! min-cost flow for general weighted instances. Both are deterministic
//! for fixed input: scan orders are fixed and heap ties break on node index.

/// Solves the square assignment problem for a dense row-major cost matrix,
/// returning the column assigned to each row.
///
/// Shortest augmenting path with dual potentials (the Jonker-Volgenant
/// scheme). Worst case O(n^3); near-diagonal instances finish in ~O(n^2).
pub fn solve_assignment(n: usize, cost: &[f64]) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    const INF: f64 = f64::INFINITY;
    // 1-based arrays with a virtual column 0, the classical formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1]; // 0 = free
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            let base = (i0 - 1) * n;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[base + j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if row_of_col[j] > 0 {
            assign[row_of_col[j] - 1] = j - 1;
        }
    }
    assign
}

/// Canonicalizes an optimal assignment among exact cost ties: repeatedly
/// applies 2-swaps that keep the total cost bitwise unchanged while making
/// the column sequence lexicographically smaller. Terminates because every
/// swap strictly decreases the sequence.
pub fn canonicalize_assignment(n: usize, cost: &[f64], assign: &mut [usize]) {
    let c = |i: usize, j: usize| cost[i * n + j];
    loop {
        let mut changed = false;
        for i1 in 0..n {
            for i2 in (i1 + 1)..n {
                let (j1, j2) = (assign[i1], assign[i2]);
                if j2 < j1 && c(i1, j2) + c(i2, j1) == c(i1, j1) + c(i2, j2) {
                    assign.swap(i1, i2);
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

/// Sparse optimal plan for the general transportation problem.
///
/// `supply` and `demand` are positive and sum to the same total (1 after
/// ensemble normalization). Successive shortest paths over the bipartite
/// residual graph with Johnson potentials; Dijkstra cost keys are reduced
/// costs clamped at zero to absorb roundoff.
pub fn solve_transportation(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
) -> Vec<(usize, usize, f64)> {
    let m = supply.len();
    let n = demand.len();
    debug_assert_eq!(cost.len(), m * n);
    const MASS_EPS: f64 = 1e-14;

    let mut remaining_supply = supply.to_vec();
    let mut remaining_demand = demand.to_vec();
    // flow[i] lists (column, mass) pairs with positive flow.
    let mut flow: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    // back_edges[j] lists rows with positive flow into column j.
    let mut back: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut pot_u = vec![0.0; m];
    let mut pot_v = vec![0.0; n];

    let total: f64 = supply.iter().sum();
    let mut shipped = 0.0;

    while total - shipped > MASS_EPS {
        // Dijkstra over nodes: rows are 0..m, columns are m..m+n.
        let nodes = m + n;
        let mut dist = vec![f64::INFINITY; nodes];
        let mut parent = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        let mut heap = std::collections::BinaryHeap::new();
        for i in 0..m {
            if remaining_supply[i] > MASS_EPS {
                dist[i] = 0.0;
                heap.push(HeapItem { dist: 0.0, node: i });
            }
        }
        let mut target = usize::MAX;
        while let Some(HeapItem { dist: d, node }) = heap.pop() {
            if done[node] || d > dist[node] {
                continue;
            }
            done[node] = true;
            if node >= m && remaining_demand[node - m] > MASS_EPS {
                target = node;
                break;
            }
            if node < m {
                let i = node;
                let base = i * n;
                for j in 0..n {
                    let jj = m + j;
                    if done[jj] {
                        continue;
                    }
                    let rc = (cost[base + j] - pot_u[i] - pot_v[j]).max(0.0);
                    let nd = d + rc;
                    if nd < dist[jj] {
                        dist[jj] = nd;
                        parent[jj] = i;
                        heap.push(HeapItem { dist: nd, node: jj });
                    }
                }
            } else {
                let j = node - m;
                for &i in &back[j] {
                    if done[i] {
                        continue;
                    }
                    // Residual arcs exist only while the forward arc carries flow.
                    let carried = flow[i]
                        .iter()
                        .find(|&&(jj, _)| jj == j)
                        .map(|&(_, f)| f)
                        .unwrap_or(0.0);
                    if carried <= MASS_EPS {
                        continue;
                    }
                    let rc = (pot_u[i] + pot_v[j] - cost[i * n + j]).max(0.0);
                    let nd = d + rc;
                    if nd < dist[i] {
                        dist[i] = nd;
                        parent[i] = node;
                        heap.push(HeapItem { dist: nd, node: i });
                    }
                }
            }
        }
        assert!(
            target != usize::MAX,
            "transportation network disconnected; supply/demand mismatch"
        );

        // Bottleneck along the augmenting path.
        let mut delta = remaining_demand[target - m];
        let mut node = target;
        while parent[node] != usize::MAX {
            let p = parent[node];
            if node >= m {
                // forward arc p -> node
            } else {
                // residual arc (p = column) -> node (= row): limited by flow(node, p-m)
                let j = p - m;
                let f = flow[node]
                    .iter()
                    .find(|&&(jj, _)| jj == j)
                    .map(|&(_, f)| f)
                    .unwrap_or(0.0);
                delta = delta.min(f);
            }
            node = p;
        }
        delta = delta.min(remaining_supply[node]);
        let source_root = node;

        // Apply the augmentation.
        let mut node = target;
        while parent[node] != usize::MAX {
            let p = parent[node];
            if node >= m {
                let (i, j) = (p, node - m);
                match flow[i].iter_mut().find(|(jj, _)| *jj == j) {
                    Some(entry) => entry.1 += delta,
                    None => {
                        flow[i].push((j, delta));
                        back[j].push(i);
                    }
                }
            } else {
                let (i, j) = (node, p - m);
                let entry = flow[i]
                    .iter_mut()
                    .find(|(jj, _)| *jj == j)
                    .expect("residual arc without flow");
                entry.1 -= delta;
            }
            node = p;
        }
        remaining_supply[source_root] -= delta;
        remaining_demand[target - m] -= delta;
        shipped += delta;

        // Potential update keeps reduced costs nonnegative: rows gain what
        // columns lose, so path arcs end at zero reduced cost. Tentative
        // labels are safe here because anything not finalized sits at
        // distance >= dt and clamps to a no-op.
        let dt = dist[target];
        for i in 0..m {
            if dist[i].is_finite() {
                pot_u[i] += dt - dist[i].min(dt);
            }
        }
        for j in 0..n {
            if dist[m + j].is_finite() {
                pot_v[j] -= dt - dist[m + j].min(dt);
            }
        }
        if delta <= MASS_EPS {
            // Degenerate augmentation: residual masses are dominated by roundoff.
            break;
        }
    }

    let mut plan = Vec::new();
    for i in 0..m {
        for &(j, f) in &flow[i] {
            if f > 0.0 {
                plan.push((i, j, f));
            }
        }
    }
    plan.sort_by_key(|a| (a.0, a.1));
    plan
}

#[derive(PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on distance, ties broken by node index for determinism.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn assignment_value(n: usize, cost: &[f64], assign: &[usize]) -> f64 {
        (0..n).map(|i| cost[i * n + assign[i]]).sum()
    }

    fn brute_force_min(n: usize, cost: &[f64]) -> f64 {
        use itertools::Itertools;
        (0..n)
            .permutations(n)
            .map(|perm| (0..n).map(|i| cost[i * n + perm[i]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn assignment_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 1..=6 {
            for _ in 0..20 {
                let cost: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
                let assign = solve_assignment(n, &cost);
                let got = assignment_value(n, &cost, &assign);
                let want = brute_force_min(n, &cost);
                assert_abs_diff_eq!(got, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ties_resolve_to_lexicographically_smallest() {
        // All-equal costs: every permutation is optimal; identity is smallest.
        let n = 4;
        let cost = vec![1.0; n * n];
        let mut assign = solve_assignment(n, &cost);
        canonicalize_assignment(n, &cost, &mut assign);
        assert_eq!(assign, vec![0, 1, 2, 3]);
    }

    #[test]
    fn transportation_matches_assignment_on_uniform() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let cost: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
        let w = vec![1.0 / n as f64; n];
        let plan = solve_transportation(&w, &w, &cost);
        let flow_value: f64 = plan.iter().map(|&(i, j, f)| f * cost[i * n + j]).sum();
        let assign = solve_assignment(n, &cost);
        let best = assignment_value(n, &cost, &assign) / n as f64;
        assert_abs_diff_eq!(flow_value, best, epsilon = 1e-12);
    }

    #[test]
    fn transportation_weighted_oracle() {
        // Weighted case vs unit-expansion brute force: weights in sixths so the
        // instance expands to exactly 6 unit atoms per side.
        use itertools::Itertools;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let supply = [2.0 / 6.0, 3.0 / 6.0, 1.0 / 6.0];
            let demand = [1.0 / 6.0, 1.0 / 6.0, 4.0 / 6.0];
            let cost: Vec<f64> = (0..9).map(|_| rng.gen::<f64>()).collect();
            let plan = solve_transportation(&supply, &demand, &cost);
            let got: f64 = plan.iter().map(|&(i, j, f)| f * cost[i * 3 + j]).sum();

            // Expand to units of mass 1/6 and brute-force the assignment.
            let rows: Vec<usize> = vec![0, 0, 1, 1, 1, 2];
            let cols: Vec<usize> = vec![0, 1, 2, 2, 2, 2];
            let want = (0..6)
                .permutations(6)
                .map(|perm| {
                    (0..6)
                        .map(|u| cost[rows[u] * 3 + cols[perm[u]]] / 6.0)
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);

            // Marginals must be exact up to roundoff.
            let mut row_sum = [0.0; 3];
            let mut col_sum = [0.0; 3];
            for &(i, j, f) in &plan {
                row_sum[i] += f;
                col_sum[j] += f;
            }
            for i in 0..3 {
                assert_abs_diff_eq!(row_sum[i], supply[i], epsilon = 1e-12);
                assert_abs_diff_eq!(col_sum[i], demand[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn transportation_rectangular() {
        // 2 sources, 3 sinks.
        let supply = [0.5, 0.5];
        let demand = [0.25, 0.25, 0.5];
        let cost = vec![
            0.0, 1.0, 2.0, // row 0
            2.0, 1.0, 0.0, // row 1
        ];
        let plan = solve_transportation(&supply, &demand, &cost);
        let got: f64 = plan.iter().map(|&(i, j, f)| f * cost[i * 3 + j]).sum();
        // Optimal: row 0 -> sinks 0 and 1 (0.25 each, cost 0.25), row 1 -> sink 2.
        assert_abs_diff_eq!(got, 0.25, epsilon = 1e-12);
    }
}
