//! Slow reference implementations used to cross-check the graph algorithms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chaingraph::{compute_cr, min_return_cost, omega_costs, ChainGraph, ReturnCost};
use crate::error::Result;
use crate::space::PointId;

/// All-pairs cheapest walk with at least one edge, by Floyd-Warshall.
/// Entry `[i][j]` is infinite when no such walk exists.
pub fn floyd_warshall(g: &ChainGraph) -> Vec<Vec<f64>> {
    let n = g.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (u, row) in d.iter_mut().enumerate() {
        for e in g.out_edges(PointId(u)) {
            if e.w < row[e.v.0] {
                row[e.v.0] = e.w;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i][k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let c = dik + d[k][j];
                if c < d[i][j] {
                    d[i][j] = c;
                }
            }
        }
    }
    d
}

/// Cheapest chain cost from any node of `y` to each node over at most `max_steps` edges.
pub fn enumerate_chains(g: &ChainGraph, y: &[PointId], max_steps: usize) -> Vec<f64> {
    let n = g.len();
    let mut best = vec![f64::INFINITY; n];
    let mut frontier = vec![f64::INFINITY; n];
    for &u in y {
        frontier[u.0] = 0.0;
    }
    for _ in 0..max_steps {
        let mut next = vec![f64::INFINITY; n];
        for u in 0..n {
            if !frontier[u].is_finite() {
                continue;
            }
            for e in g.out_edges(PointId(u)) {
                let c = frontier[u] + e.w;
                if c < next[e.v.0] {
                    next[e.v.0] = c;
                }
            }
        }
        for v in 0..n {
            best[v] = best[v].min(next[v]);
        }
        frontier = next;
    }
    best
}

/// Chain recurrence by a reachability search from each node.
pub fn cr_by_search(g: &ChainGraph, eps: f64) -> Vec<PointId> {
    let n = g.len();
    let mut out = Vec::new();
    for u in 0..n {
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> =
            g.out_edges(PointId(u)).iter().filter(|e| e.w < eps).map(|e| e.v.0).collect();
        let mut found = false;
        while let Some(x) = stack.pop() {
            if x == u {
                found = true;
                break;
            }
            if seen[x] {
                continue;
            }
            seen[x] = true;
            stack.extend(g.out_edges(PointId(x)).iter().filter(|e| e.w < eps).map(|e| e.v.0));
        }
        if found {
            out.push(PointId(u));
        }
    }
    out
}

/// Random digraph with weights `k / 1024`, so path sums are exact in `f64`.
pub fn random_dyadic_graph(seed: u64, max_nodes: usize) -> ChainGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes);
    let density = rng.gen_range(1.0..6.0) / n as f64;
    let mut list = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if rng.gen_bool(density.min(1.0)) {
                list.push((u, v, rng.gen_range(1..=4), rng.gen_range(0..=512) as f64 / 1024.0));
            }
        }
    }
    ChainGraph::from_edges(n, 1.0, 1.0, &list).expect("valid random graph")
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OracleReport {
    pub graphs: usize,
    pub nodes: usize,
    pub return_cost_mismatches: usize,
    pub omega_mismatches: usize,
    pub cr_mismatches: usize,
    /// Largest absolute deviation seen on finite values.
    pub max_abs_diff: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.return_cost_mismatches == 0 && self.omega_mismatches == 0 && self.cr_mismatches == 0
    }

    fn record(&mut self, a: f64, b: f64, tol: f64) -> bool {
        if a.is_infinite() || b.is_infinite() {
            return a == b;
        }
        let diff = (a - b).abs();
        self.max_abs_diff = self.max_abs_diff.max(diff);
        diff <= tol
    }
}

/// Compares the fast algorithms against Floyd-Warshall on one graph.
/// `tol` is zero for dyadic weights.
pub fn check_graph(g: &ChainGraph, eps_values: &[f64], tol: f64, report: &mut OracleReport) -> Result<()> {
    let fw = floyd_warshall(g);
    let n = g.len();
    report.graphs += 1;
    report.nodes += n;
    for u in 0..n {
        let fast = match min_return_cost(g, PointId(u))? {
            ReturnCost::Finite(c) => c,
            _ => f64::INFINITY,
        };
        if !report.record(fast, fw[u][u], tol) {
            report.return_cost_mismatches += 1;
        }
    }
    let sources: Vec<Vec<PointId>> = vec![vec![PointId(0)], (0..n).step_by(3).map(PointId).collect()];
    for y in &sources {
        let fast = omega_costs(g, y, f64::INFINITY)?;
        for v in 0..n {
            let slow = y.iter().map(|s| fw[s.0][v]).fold(f64::INFINITY, f64::min);
            if !report.record(fast[v].unwrap_or(f64::INFINITY), slow, tol) {
                report.omega_mismatches += 1;
            }
        }
    }
    for &eps in eps_values {
        if compute_cr(g, eps) != cr_by_search(g, eps) {
            report.cr_mismatches += 1;
        }
    }
    Ok(())
}

/// Runs the random-graph comparison over `seeds`.
pub fn run_random(seeds: impl IntoIterator<Item = u64>, max_nodes: usize) -> Result<OracleReport> {
    let mut report = OracleReport::default();
    for seed in seeds {
        let g = random_dyadic_graph(seed, max_nodes);
        check_graph(&g, &[0.125, 0.25, 0.5], 0.0, &mut report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floyd_warshall_four_nodes() {
        let g = ChainGraph::from_edges(
            4,
            1.0,
            1.0,
            &[(0, 1, 1, 0.125), (1, 2, 1, 0.25), (2, 0, 1, 0.375), (2, 3, 1, 0.0625), (3, 2, 1, 0.0625)],
        )
        .unwrap();
        let d = floyd_warshall(&g);
        assert_eq!(d[0][0], 0.75);
        assert_eq!(d[3][3], 0.125);
        assert_eq!(d[3][1], 0.0625 + 0.375 + 0.125);
    }

    #[test]
    fn random_graphs_agree() {
        let r = run_random(0..20, 60).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.max_abs_diff, 0.0);
    }
}
