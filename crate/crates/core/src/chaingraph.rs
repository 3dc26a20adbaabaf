//! Jump-cost digraph on the grid, strong and classical chain recurrence, and
//! budgeted reachability.
//!
//! An edge `(u, v, m, w)` stands for flowing `u` for time `m T` and then
//! jumping to `v` at cost `w = d(phi_{mT}(u), v)`. Paths whose weights sum to
//! less than `eps` are strong `(eps, T)`-chains.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::flows::GridTransition;
use crate::space::{mask_to_ids, GridSpace, PointId};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub v: PointId,
    pub m: u32,
    pub w: f64,
}

#[derive(Clone, Debug)]
pub struct ChainGraph {
    n: usize,
    t_step: f64,
    prune_radius: f64,
    offsets: Vec<usize>,
    edges: Vec<Edge>,
    rev_offsets: Vec<usize>,
    /// `(source, weight)` grouped by target.
    rev: Vec<(PointId, f64)>,
}

impl ChainGraph {
    /// Builds a graph from an explicit `(u, v, m, w)` list.
    pub fn from_edges(n: usize, t_step: f64, prune_radius: f64, list: &[(usize, usize, u32, f64)]) -> Result<Self> {
        let mut per_node: Vec<Vec<Edge>> = vec![Vec::new(); n];
        for &(u, v, m, w) in list {
            if u >= n || v >= n {
                return Err(Error::InvalidPoint { id: u.max(v), len: n });
            }
            if !(w >= 0.0) {
                return Err(Error::InvalidParameter(format!("negative or NaN weight {w} on edge {u}->{v}")));
            }
            per_node[u].push(Edge { v: PointId(v), m, w });
        }
        Ok(Self::from_adjacency(n, t_step, prune_radius, per_node))
    }

    fn from_adjacency(n: usize, t_step: f64, prune_radius: f64, mut per_node: Vec<Vec<Edge>>) -> Self {
        let mut offsets = Vec::with_capacity(n + 1);
        let mut edges = Vec::with_capacity(per_node.iter().map(Vec::len).sum());
        offsets.push(0);
        for list in per_node.iter_mut() {
            list.sort_by(|a, b| a.m.cmp(&b.m).then(a.v.cmp(&b.v)));
            edges.extend_from_slice(list);
            offsets.push(edges.len());
        }
        let mut indeg = vec![0usize; n + 1];
        for e in &edges {
            indeg[e.v.0 + 1] += 1;
        }
        for i in 0..n {
            indeg[i + 1] += indeg[i];
        }
        let rev_offsets = indeg.clone();
        let mut fill = indeg;
        let mut rev = vec![(PointId(0), 0.0); edges.len()];
        for u in 0..n {
            for e in &edges[offsets[u]..offsets[u + 1]] {
                rev[fill[e.v.0]] = (PointId(u), e.w);
                fill[e.v.0] += 1;
            }
        }
        Self { n, t_step, prune_radius, offsets, edges, rev_offsets, rev }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn t_step(&self) -> f64 {
        self.t_step
    }

    pub fn prune_radius(&self) -> f64 {
        self.prune_radius
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn out_edges(&self, u: PointId) -> &[Edge] {
        &self.edges[self.offsets[u.0]..self.offsets[u.0 + 1]]
    }

    fn in_edges(&self, v: PointId) -> &[(PointId, f64)] {
        &self.rev[self.rev_offsets[v.0]..self.rev_offsets[v.0 + 1]]
    }

    fn check(&self, u: PointId) -> Result<()> {
        if u.0 < self.n {
            Ok(())
        } else {
            Err(Error::InvalidPoint { id: u.0, len: self.n })
        }
    }

    /// Writes `u,v,m,w` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["u", "v", "m", "w"])?;
        for u in 0..self.n {
            for e in self.out_edges(PointId(u)) {
                w.write_record([u.to_string(), e.v.0.to_string(), e.m.to_string(), format!("{:.16e}", e.w)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the jump-cost graph from a transition table.
///
/// Evaluator-backed transitions use the exact continuous images. Sampled
/// transitions only know the image cell, so their weights are lowered by one
/// resolution to stay below the true jump.
pub fn build_chain_graph(space: &GridSpace, tr: &GridTransition, prune_radius: f64) -> Result<ChainGraph> {
    let res = space.resolution();
    if !(prune_radius >= 3.0 * res) {
        return Err(Error::InvalidParameter(format!(
            "prune radius {prune_radius} is below 3 x resolution = {}",
            3.0 * res
        )));
    }
    if tr.len() != space.len() {
        return Err(Error::InvalidParameter("transition and grid sizes differ".into()));
    }
    let per_node: Vec<Vec<Edge>> = (0..space.len())
        .into_par_iter()
        .map(|u| {
            let mut list = Vec::new();
            for m in 1..=tr.m_max() {
                if tr.is_sampled() {
                    let img = space.point(tr.multi_image(m)[u]);
                    for (v, d) in space.within(&img, prune_radius + res) {
                        list.push(Edge { v, m: m as u32, w: (d - res).max(0.0) });
                    }
                } else {
                    for (v, d) in space.within(&tr.exact_image(m)[u], prune_radius) {
                        list.push(Edge { v, m: m as u32, w: d });
                    }
                }
            }
            list
        })
        .collect();
    Ok(ChainGraph::from_adjacency(space.len(), tr.t_step(), prune_radius, per_node))
}

/// Minimum total weight of a cycle through a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReturnCost {
    Finite(f64),
    /// Every cycle costs more than the given cap; the exact value was not computed.
    Above(f64),
    Unreachable,
}

impl ReturnCost {
    pub fn is_below(&self, eps: f64) -> bool {
        matches!(*self, ReturnCost::Finite(c) if c < eps)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ReturnCost::Finite(c) => Some(c),
            _ => None,
        }
    }

    /// Lower bound on the cost; infinite when unreachable.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            ReturnCost::Finite(c) | ReturnCost::Above(c) => c,
            ReturnCost::Unreachable => f64::INFINITY,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ReturnCostRepr {
    Finite(f64),
    Above { above: f64 },
    Marker(String),
}

impl Serialize for ReturnCost {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            ReturnCost::Finite(c) => ReturnCostRepr::Finite(c),
            ReturnCost::Above(c) => ReturnCostRepr::Above { above: c },
            ReturnCost::Unreachable => ReturnCostRepr::Marker("unreachable".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReturnCost {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match ReturnCostRepr::deserialize(d)? {
            ReturnCostRepr::Finite(c) => Ok(ReturnCost::Finite(c)),
            ReturnCostRepr::Above { above } => Ok(ReturnCost::Above(above)),
            ReturnCostRepr::Marker(m) if m == "unreachable" => Ok(ReturnCost::Unreachable),
            ReturnCostRepr::Marker(m) => Err(serde::de::Error::custom(format!("unknown cost marker {m:?}"))),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct State {
    d: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other.d.total_cmp(&self.d).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn return_cost(g: &ChainGraph, u: PointId, cap: f64) -> ReturnCost {
    let n = g.n;
    // Cheapest first step out of u, per target.
    let mut first = vec![f64::INFINITY; n];
    for e in g.out_edges(u) {
        if e.w < first[e.v.0] {
            first[e.v.0] = e.w;
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[u.0] = 0.0;
    heap.push(State { d: 0.0, node: u.0 });
    let mut best = f64::INFINITY;
    let mut truncated = false;
    while let Some(State { d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        if d >= best {
            break;
        }
        if first[node].is_finite() {
            best = best.min(first[node] + d);
        }
        for &(src, w) in g.in_edges(PointId(node)) {
            let nd = d + w;
            if nd > cap {
                truncated = true;
                continue;
            }
            if nd < dist[src.0] {
                dist[src.0] = nd;
                heap.push(State { d: nd, node: src.0 });
            }
        }
    }
    if best.is_finite() && (best <= cap || !truncated) {
        ReturnCost::Finite(best)
    } else if truncated {
        ReturnCost::Above(cap)
    } else {
        ReturnCost::Unreachable
    }
}

/// Minimum total weight over cycles through `u` with at least one edge.
pub fn min_return_cost(g: &ChainGraph, u: PointId) -> Result<ReturnCost> {
    g.check(u)?;
    Ok(return_cost(g, u, f64::INFINITY))
}

/// Return costs of every node. Costs above `cap` are reported as `Above(cap)`.
pub fn min_return_costs(g: &ChainGraph, cap: f64) -> Vec<ReturnCost> {
    (0..g.n).into_par_iter().map(|u| return_cost(g, PointId(u), cap)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScrResult {
    pub epsilon: f64,
    pub resolution: f64,
    /// True when `epsilon <= 3 * resolution`.
    pub resolution_limited: bool,
    pub min_return_cost: Vec<ReturnCost>,
    pub members: Vec<PointId>,
    /// Nodes whose cost lies within `3 * resolution` of `epsilon`.
    pub warning_band: Vec<PointId>,
}

impl ScrResult {
    pub fn is_member(&self, u: PointId) -> bool {
        self.members.binary_search(&u).is_ok()
    }
}

pub fn band_width(resolution: f64) -> f64 {
    3.0 * resolution
}

/// Strong chain recurrent nodes at budget `eps`.
///
/// Budgets at or below `3 * resolution` are accepted but flagged as
/// resolution-limited.
pub fn compute_scr(g: &ChainGraph, eps: f64, resolution: f64) -> Result<ScrResult> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
    }
    let resolution_limited = eps <= band_width(resolution);
    if resolution_limited {
        log::warn!("epsilon {eps} <= 3 x resolution; costs are within discretization noise of the threshold");
    } else if eps < 10.0 * resolution {
        log::warn!("epsilon {eps} < 10 x resolution; membership near the threshold is resolution-limited");
    }
    let band = band_width(resolution);
    let costs = min_return_costs(g, eps + band);
    let members = mask_to_ids(&costs.iter().map(|c| c.is_below(eps)).collect::<Vec<_>>());
    let warning_band =
        mask_to_ids(&costs.iter().map(|c| matches!(*c, ReturnCost::Finite(x) if (x - eps).abs() <= band)).collect::<Vec<_>>());
    Ok(ScrResult { epsilon: eps, resolution, resolution_limited, min_return_cost: costs, members, warning_band })
}

/// Classical chain recurrence: nodes on an SCC that carries an edge of weight `< eps`.
pub fn compute_cr(g: &ChainGraph, eps: f64) -> Vec<PointId> {
    let comp = tarjan(g, eps);
    let n = g.n;
    let mut size = vec![0usize; n];
    for &c in &comp {
        size[c] += 1;
    }
    let mask: Vec<bool> = (0..n)
        .map(|u| {
            size[comp[u]] > 1 || g.out_edges(PointId(u)).iter().any(|e| e.v.0 == u && e.w < eps)
        })
        .collect();
    mask_to_ids(&mask)
}

/// Iterative Tarjan over edges with weight `< eps`; returns a component id per node.
fn tarjan(g: &ChainGraph, eps: f64) -> Vec<usize> {
    const UNSET: usize = usize::MAX;
    let n = g.n;
    let mut index = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSET; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut next_comp = 0;
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNSET {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&(u, start)) = call.last() {
            let out = g.out_edges(PointId(u));
            let mut pos = start;
            let mut descended = false;
            while pos < out.len() {
                let e = out[pos];
                pos += 1;
                if !(e.w < eps) {
                    continue;
                }
                let v = e.v.0;
                if index[v] == UNSET {
                    let top = call.len() - 1;
                    call[top].1 = pos;
                    index[v] = next_index;
                    low[v] = next_index;
                    next_index += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    call.push((v, 0));
                    descended = true;
                    break;
                } else if on_stack[v] {
                    low[u] = low[u].min(index[v]);
                }
            }
            if descended {
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[u]);
            }
            if low[u] == index[u] {
                while let Some(w) = stack.pop() {
                    on_stack[w] = false;
                    comp[w] = next_comp;
                    if w == u {
                        break;
                    }
                }
                next_comp += 1;
            }
        }
    }
    comp
}

/// Cheapest chain cost from `Y` to every node, first step included.
/// Costs above `cap` are left as `None`.
pub fn omega_costs(g: &ChainGraph, y: &[PointId], cap: f64) -> Result<Vec<Option<f64>>> {
    if y.is_empty() {
        return Err(Error::EmptySet("Y"));
    }
    for &u in y {
        g.check(u)?;
    }
    let n = g.n;
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &u in y {
        for e in g.out_edges(u) {
            if e.w <= cap && e.w < dist[e.v.0] {
                dist[e.v.0] = e.w;
                heap.push(State { d: e.w, node: e.v.0 });
            }
        }
    }
    let mut done = vec![false; n];
    while let Some(State { d, node }) = heap.pop() {
        if done[node] || d > dist[node] {
            continue;
        }
        done[node] = true;
        for e in g.out_edges(PointId(node)) {
            let nd = d + e.w;
            if nd <= cap && nd < dist[e.v.0] {
                dist[e.v.0] = nd;
                heap.push(State { d: nd, node: e.v.0 });
            }
        }
    }
    Ok(dist.into_iter().map(|d| d.is_finite().then_some(d)).collect())
}

/// Budgeted reachability: endpoints of chains from `Y` with cost `< eps`,
/// or `<= eps` when `closed`.
pub fn omega_budget(g: &ChainGraph, y: &[PointId], eps: f64, closed: bool) -> Result<Vec<PointId>> {
    let costs = omega_costs(g, y, eps)?;
    let mask: Vec<bool> = costs
        .iter()
        .map(|c| match *c {
            Some(d) if closed => d <= eps,
            Some(d) => d < eps,
            None => false,
        })
        .collect();
    Ok(mask_to_ids(&mask))
}

/// Writes per-node SCR rows `point_index,min_return_cost,member,in_band`.
pub fn write_scr_csv(path: &Path, scr: &ScrResult) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "point_index,min_return_cost,member,in_band")?;
    for (u, c) in scr.min_return_cost.iter().enumerate() {
        let cost = match *c {
            ReturnCost::Finite(x) => format!("{x:.16e}"),
            ReturnCost::Above(x) => format!(">{x:.16e}"),
            ReturnCost::Unreachable => "unreachable".into(),
        };
        let id = PointId(u);
        writeln!(
            f,
            "{u},{cost},{},{}",
            scr.is_member(id),
            scr.warning_band.binary_search(&id).is_ok()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{build_transition, FlowModel};
    use crate::space::Domain;

    fn circle_identity(prune: f64) -> (GridSpace, ChainGraph) {
        let s = GridSpace::build(Domain::Circle, 8).unwrap();
        let tr = build_transition(&FlowModel::identity(), &s, 1.0, 4).unwrap();
        let g = build_chain_graph(&s, &tr, prune).unwrap();
        (s, g)
    }

    #[test]
    fn identity_edges() {
        let (_, g) = circle_identity(0.2);
        let m1: Vec<(usize, f64)> =
            g.out_edges(PointId(0)).iter().filter(|e| e.m == 1).map(|e| (e.v.0, e.w)).collect();
        assert_eq!(m1, vec![(0, 0.0), (1, 0.125), (7, 0.125)]);
        for u in 0..8 {
            assert_eq!(min_return_cost(&g, PointId(u)).unwrap(), ReturnCost::Finite(0.0));
        }
    }

    #[test]
    fn rejects_small_prune_radius() {
        let s = GridSpace::build(Domain::Circle, 8).unwrap();
        let tr = build_transition(&FlowModel::identity(), &s, 1.0, 1).unwrap();
        assert!(build_chain_graph(&s, &tr, 0.1).is_err());
    }

    #[test]
    fn four_node_graph() {
        let g = ChainGraph::from_edges(
            4,
            1.0,
            1.0,
            &[(0, 1, 1, 0.1), (1, 2, 1, 0.2), (2, 0, 1, 0.3), (2, 3, 1, 0.05), (3, 2, 1, 0.05)],
        )
        .unwrap();
        let c0 = min_return_cost(&g, PointId(0)).unwrap().finite().unwrap();
        let c3 = min_return_cost(&g, PointId(3)).unwrap().finite().unwrap();
        assert!((c0 - 0.6).abs() < 1e-15);
        assert!((c3 - 0.1).abs() < 1e-15);
        assert_eq!(compute_cr(&g, 0.25), vec![PointId(2), PointId(3)]);
    }

    #[test]
    fn unreachable_and_capped() {
        let g = ChainGraph::from_edges(3, 1.0, 1.0, &[(0, 1, 1, 0.5), (1, 0, 1, 0.5), (2, 0, 1, 0.0)]).unwrap();
        assert_eq!(min_return_cost(&g, PointId(2)).unwrap(), ReturnCost::Unreachable);
        let capped = min_return_costs(&g, 0.6);
        assert_eq!(capped[0], ReturnCost::Above(0.6));
        assert_eq!(capped[2], ReturnCost::Unreachable);
    }

    #[test]
    fn omega_identity_ball() {
        let (_, g) = circle_identity(0.4);
        let om = omega_budget(&g, &[PointId(0)], 0.3, false).unwrap();
        assert_eq!(om, vec![PointId(0), PointId(1), PointId(2), PointId(6), PointId(7)]);
        let closed = omega_budget(&g, &[PointId(0)], 0.25, true).unwrap();
        assert_eq!(closed, om);
        let open = omega_budget(&g, &[PointId(0)], 0.25, false).unwrap();
        assert_eq!(open, vec![PointId(0), PointId(1), PointId(7)]);
    }

    #[test]
    fn cost_serde() {
        let v = vec![ReturnCost::Finite(0.25), ReturnCost::Above(0.5), ReturnCost::Unreachable];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[0.25,{"above":0.5},"unreachable"]"#);
        let back: Vec<ReturnCost> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
