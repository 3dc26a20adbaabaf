//! Finite metric spaces standing in for the compact domains.
//!
//! Three domains are supported: the circle `R/Z` with its quotient metric,
//! the unit square with the Euclidean metric, and the "roof" region
//! `{(x, y) : 0 <= x <= 1, 0 <= y <= tau(x)}` whose upper boundary is glued
//! to the lower one, `(x, tau(x)) ~ (x, 0)`.
//!
//! On the roof the distance is the shortest-path metric of the plane region
//! with the glued boundary: a path either goes straight (chord) or passes
//! through the seam any number of times. The seam is discretized by a fixed
//! set of portals; portal-to-portal distances are closed under shortest
//! paths, so the result is a genuine metric.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Index of a grid point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub usize);

impl PointId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Circle,
    UnitSquare,
    Roof,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    CircleArcLength,
    EuclideanSubset,
    RoofIntrinsic,
}

/// Height of the roof over abscissa `x`; `tau(0) = tau(1) = 1` and the
/// minimum `1 - 1/sqrt(2)` sits at `x = 1/2`.
pub fn roof_height(x: f64) -> f64 {
    (x - 0.5).abs().sqrt() + ROOF_OFFSET
}

pub(crate) const ROOF_OFFSET: f64 = (std::f64::consts::SQRT_2 - 1.0) / std::f64::consts::SQRT_2;

const ROOF_PORTALS: usize = 129;

#[derive(Clone, Debug)]
struct Column {
    x: f64,
    start: usize,
    len: usize,
}

#[derive(Clone, Debug)]
struct RoofPortals {
    top: Vec<Point>,
    bottom: Vec<Point>,
    /// Portal-to-portal shortest path lengths, row major.
    between: Vec<f64>,
}

impl RoofPortals {
    fn new() -> Self {
        let k = ROOF_PORTALS;
        let z: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
        let top: Vec<Point> = z.iter().map(|&z| [z, roof_height(z)]).collect();
        let bottom: Vec<Point> = z.iter().map(|&z| [z, 0.0]).collect();
        let mut between = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    between[i * k + j] = euclid(&top[i], &top[j])
                        .min(euclid(&top[i], &bottom[j]))
                        .min(euclid(&bottom[i], &top[j]))
                        .min(euclid(&bottom[i], &bottom[j]));
                }
            }
        }
        for m in 0..k {
            for i in 0..k {
                let im = between[i * k + m];
                for j in 0..k {
                    let via = im + between[m * k + j];
                    if via < between[i * k + j] {
                        between[i * k + j] = via;
                    }
                }
            }
        }
        // symmetrize against rounding in the relaxation order
        for i in 0..k {
            for j in (i + 1)..k {
                let v = between[i * k + j].min(between[j * k + i]);
                between[i * k + j] = v;
                between[j * k + i] = v;
            }
        }
        Self { top, bottom, between }
    }

    fn entry(&self, p: &Point) -> (Vec<f64>, f64) {
        let e: Vec<f64> = self
            .top
            .iter()
            .zip(&self.bottom)
            .map(|(a, b)| euclid(p, a).min(euclid(p, b)))
            .collect();
        let rho = e.iter().copied().fold(f64::INFINITY, f64::min);
        (e, rho)
    }

    /// `g[i] = min_j between(i, j) + e[j]`: cost from portal `i` to the point.
    fn spread(&self, e: &[f64]) -> Vec<f64> {
        let k = e.len();
        (0..k)
            .map(|i| {
                let row = &self.between[i * k..(i + 1) * k];
                row.iter().zip(e).map(|(g, e)| g + e).fold(f64::INFINITY, f64::min)
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
struct GridPortal {
    rho: f64,
    spread: Vec<f64>,
}

/// A point prepared for repeated distance queries against grid points.
#[derive(Clone, Debug)]
pub struct Probe {
    pub point: Point,
    portal: Option<(Vec<f64>, f64)>,
}

/// Finite point set with a metric; immutable after construction.
#[derive(Debug)]
pub struct GridSpace {
    domain: Domain,
    metric_kind: MetricKind,
    n: usize,
    points: Vec<Point>,
    resolution: f64,
    cell: f64,
    columns: Vec<Column>,
    roof: Option<RoofPortals>,
    grid_portals: Vec<GridPortal>,
    diameter: OnceLock<f64>,
}

#[inline]
fn euclid(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[inline]
fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

impl GridSpace {
    /// Builds the grid for `domain` at parameter `n` (points per unit length).
    pub fn build(domain: Domain, n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::GridTooCoarse(n));
        }
        Ok(match domain {
            Domain::Circle => {
                let points = (0..n).map(|i| [i as f64 / n as f64, 0.0]).collect();
                Self::assemble(domain, MetricKind::CircleArcLength, n, points, Vec::new(), 1.0 / (2 * n) as f64, 1.0 / n as f64, None)
            }
            Domain::UnitSquare => {
                let h = 1.0 / (n - 1) as f64;
                let mut points = Vec::with_capacity(n * n);
                let mut columns = Vec::with_capacity(n);
                for i in 0..n {
                    columns.push(Column { x: i as f64 * h, start: points.len(), len: n });
                    for j in 0..n {
                        points.push([i as f64 * h, j as f64 * h]);
                    }
                }
                let res = std::f64::consts::SQRT_2 * h / 2.0;
                Self::assemble(domain, MetricKind::EuclideanSubset, n, points, columns, res, h, None)
            }
            Domain::Roof => {
                let h = 1.0 / (n - 1) as f64;
                let mut points = Vec::new();
                let mut columns = Vec::with_capacity(n);
                for i in 0..n {
                    let x = i as f64 * h;
                    let tau = roof_height(x);
                    let len = ((tau / h).round() as usize).max(1);
                    columns.push(Column { x, start: points.len(), len });
                    for j in 0..len {
                        points.push([x, j as f64 * tau / len as f64]);
                    }
                }
                let mut space = Self::assemble(
                    domain,
                    MetricKind::RoofIntrinsic,
                    n,
                    points,
                    columns,
                    f64::INFINITY,
                    h,
                    Some(RoofPortals::new()),
                );
                space.resolution = space.roof_resolution_bound();
                space
            }
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        domain: Domain,
        metric_kind: MetricKind,
        n: usize,
        points: Vec<Point>,
        columns: Vec<Column>,
        resolution: f64,
        cell: f64,
        roof: Option<RoofPortals>,
    ) -> Self {
        let grid_portals = match &roof {
            Some(portals) => points
                .par_iter()
                .map(|p| {
                    let (e, rho) = portals.entry(p);
                    GridPortal { rho, spread: portals.spread(&e) }
                })
                .collect(),
            None => Vec::new(),
        };
        Self {
            domain,
            metric_kind,
            n,
            points,
            resolution,
            cell,
            columns,
            roof,
            grid_portals,
            diameter: OnceLock::new(),
        }
    }

    /// Max distance from the domain to the grid, bounded by brute force over
    /// a fine sample plus the sample's own covering radius.
    fn roof_resolution_bound(&self) -> f64 {
        let sub = 8usize;
        let step = self.cell / sub as f64;
        let nx = (self.n - 1) * sub + 1;
        let worst = (0..nx)
            .into_par_iter()
            .map(|ix| {
                let x = (ix as f64 * step).min(1.0);
                let tau = roof_height(x);
                let ny = (tau / step).ceil() as usize;
                (0..ny)
                    .map(|iy| {
                        let p = [x, (iy as f64 * step).min(tau)];
                        let q = self.nearest(&p);
                        self.dist_point_grid(&self.probe(p), q)
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        worst + std::f64::consts::SQRT_2 * step / 2.0
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn metric_kind(&self) -> MetricKind {
        self.metric_kind
    }

    /// Grid parameter the space was built with.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn ids(&self) -> impl Iterator<Item = PointId> {
        (0..self.points.len()).map(PointId)
    }

    /// Max distance from any domain point to its nearest grid point.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Lattice spacing ("one cell").
    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn check(&self, id: PointId) -> Result<()> {
        if id.0 < self.points.len() {
            Ok(())
        } else {
            Err(Error::InvalidPoint { id: id.0, len: self.points.len() })
        }
    }

    pub fn point(&self, id: PointId) -> Point {
        self.points[id.0]
    }

    /// Metric between two grid points.
    pub fn distance(&self, p: PointId, q: PointId) -> Result<f64> {
        self.check(p)?;
        self.check(q)?;
        Ok(self.dist_ids(p, q))
    }

    #[inline]
    pub(crate) fn dist_ids(&self, p: PointId, q: PointId) -> f64 {
        if p == q {
            return 0.0;
        }
        // evaluate in a canonical order so the result is symmetric bit for bit
        let (a, b) = if p < q { (p, q) } else { (q, p) };
        match self.metric_kind {
            MetricKind::CircleArcLength => circle_dist(self.points[a.0][0], self.points[b.0][0]),
            MetricKind::EuclideanSubset => euclid(&self.points[a.0], &self.points[b.0]),
            MetricKind::RoofIntrinsic => {
                let pa = &self.points[a.0];
                let chord = euclid(pa, &self.points[b.0]);
                let ga = &self.grid_portals[a.0];
                let gb = &self.grid_portals[b.0];
                if ga.rho + gb.rho >= chord {
                    return chord;
                }
                let roof = self.roof.as_ref().expect("roof portals");
                let (e, _) = roof.entry(pa);
                let through = e.iter().zip(&gb.spread).map(|(x, y)| x + y).fold(f64::INFINITY, f64::min);
                chord.min(through)
            }
        }
    }

    pub fn probe(&self, point: Point) -> Probe {
        let portal = self.roof.as_ref().map(|r| r.entry(&point));
        Probe { point, portal }
    }

    /// Metric between an arbitrary domain point and a grid point.
    #[inline]
    pub fn dist_point_grid(&self, probe: &Probe, q: PointId) -> f64 {
        let p = &probe.point;
        let pq = &self.points[q.0];
        match self.metric_kind {
            MetricKind::CircleArcLength => circle_dist(p[0], pq[0]),
            MetricKind::EuclideanSubset => euclid(p, pq),
            MetricKind::RoofIntrinsic => {
                let chord = euclid(p, pq);
                let (e, rho) = probe.portal.as_ref().expect("roof probe");
                let gq = &self.grid_portals[q.0];
                if rho + gq.rho >= chord {
                    return chord;
                }
                let through = e.iter().zip(&gq.spread).map(|(x, y)| x + y).fold(f64::INFINITY, f64::min);
                chord.min(through)
            }
        }
    }

    /// Lower bound on `dist_point_grid(probe, q)` that skips the seam term.
    #[inline]
    fn chord_lower(&self, probe: &Probe, q: PointId) -> f64 {
        match self.metric_kind {
            MetricKind::RoofIntrinsic => {
                let chord = euclid(&probe.point, &self.points[q.0]);
                let (_, rho) = probe.portal.as_ref().expect("roof probe");
                chord.min(rho + self.grid_portals[q.0].rho)
            }
            _ => self.dist_point_grid(probe, q),
        }
    }

    /// Metric between two arbitrary domain points.
    pub fn dist_points(&self, a: &Point, b: &Point) -> f64 {
        match self.metric_kind {
            MetricKind::CircleArcLength => circle_dist(a[0], b[0]),
            MetricKind::EuclideanSubset => euclid(a, b),
            MetricKind::RoofIntrinsic => {
                let roof = self.roof.as_ref().expect("roof portals");
                let chord = euclid(a, b);
                let (ea, ra) = roof.entry(a);
                let (eb, rb) = roof.entry(b);
                if ra + rb >= chord {
                    return chord;
                }
                let gb = roof.spread(&eb);
                let through = ea.iter().zip(&gb).map(|(x, y)| x + y).fold(f64::INFINITY, f64::min);
                chord.min(through)
            }
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        const TOL: f64 = 1e-12;
        let finite = p[0].is_finite() && p[1].is_finite();
        finite
            && match self.domain {
                Domain::Circle => (0.0..1.0).contains(&p[0]) && p[1] == 0.0,
                Domain::UnitSquare => (-TOL..=1.0 + TOL).contains(&p[0]) && (-TOL..=1.0 + TOL).contains(&p[1]),
                Domain::Roof => {
                    (-TOL..=1.0 + TOL).contains(&p[0])
                        && p[1] >= -TOL
                        && p[1] <= roof_height(p[0].clamp(0.0, 1.0)) + TOL
                }
            }
    }

    /// Maps an equivalent representative onto the stored chart
    /// (angles into `[0,1)`, roof heights into `[0, tau(x))`).
    pub fn canonicalize(&self, p: Point) -> Point {
        match self.domain {
            Domain::Circle => {
                let t = p[0].rem_euclid(1.0);
                [if t >= 1.0 { 0.0 } else { t }, 0.0]
            }
            Domain::UnitSquare => [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)],
            Domain::Roof => {
                let x = p[0].clamp(0.0, 1.0);
                let tau = roof_height(x);
                let y = p[1].rem_euclid(tau);
                [x, if y >= tau { 0.0 } else { y }]
            }
        }
    }

    /// Maps `(u, v) in [0,1]^2` onto the domain; used for sampling.
    pub fn sample_point(&self, u: f64, v: f64) -> Point {
        match self.domain {
            Domain::Circle => [u.rem_euclid(1.0), 0.0],
            Domain::UnitSquare => [u, v],
            Domain::Roof => [u, v * roof_height(u) * (1.0 - 1e-12)],
        }
    }

    /// Nearest grid point; ties go to the lowest id.
    pub fn nearest(&self, p: &Point) -> PointId {
        match self.domain {
            Domain::Circle => {
                let n = self.n;
                let s = p[0].rem_euclid(1.0) * n as f64;
                let lo = (s.floor() as usize) % n;
                let hi = (lo + 1) % n;
                let dl = circle_dist(p[0], self.points[lo][0]);
                let dh = circle_dist(p[0], self.points[hi][0]);
                if dl < dh || (dl == dh && lo < hi) {
                    PointId(lo)
                } else {
                    PointId(hi)
                }
            }
            Domain::UnitSquare => {
                let n = self.n;
                let h = self.cell;
                let axis = |c: f64| {
                    let s = (c / h).clamp(0.0, (n - 1) as f64);
                    let lo = s.floor() as usize;
                    let hi = (lo + 1).min(n - 1);
                    (lo, hi)
                };
                let (i0, i1) = axis(p[0]);
                let (j0, j1) = axis(p[1]);
                let mut best = (f64::INFINITY, usize::MAX);
                for i in [i0, i1] {
                    for j in [j0, j1] {
                        let id = i * n + j;
                        let d = euclid(p, &self.points[id]);
                        if d < best.0 || (d == best.0 && id < best.1) {
                            best = (d, id);
                        }
                    }
                }
                PointId(best.1)
            }
            Domain::Roof => {
                let probe = self.probe(*p);
                let mut best = (f64::INFINITY, usize::MAX);
                for c in self.columns_by_x(p[0]) {
                    let col = &self.columns[c];
                    if (col.x - p[0]).abs() > best.0 {
                        break;
                    }
                    for id in col.start..col.start + col.len {
                        if self.chord_lower(&probe, PointId(id)) > best.0 {
                            continue;
                        }
                        let d = self.dist_point_grid(&probe, PointId(id));
                        if d < best.0 || (d == best.0 && id < best.1) {
                            best = (d, id);
                        }
                    }
                }
                PointId(best.1)
            }
        }
    }

    /// Column indices ordered by horizontal distance from `x`.
    fn columns_by_x(&self, x: f64) -> impl Iterator<Item = usize> + '_ {
        let m = self.columns.len();
        let start = ((x / self.cell).round().clamp(0.0, (m - 1) as f64)) as usize;
        let mut left = start as isize - 1;
        let mut right = start + 1;
        let mut first = true;
        std::iter::from_fn(move || {
            if first {
                first = false;
                return Some(start);
            }
            let dl = if left >= 0 { (x - self.columns[left as usize].x).abs() } else { f64::INFINITY };
            let dr = if right < m { (self.columns[right].x - x).abs() } else { f64::INFINITY };
            if dl.is_infinite() && dr.is_infinite() {
                None
            } else if dl <= dr {
                left -= 1;
                Some((left + 1) as usize)
            } else {
                right += 1;
                Some(right - 1)
            }
        })
    }

    /// All grid points within distance `r` of `p`, with their distances,
    /// sorted by id.
    pub fn within(&self, p: &Point, r: f64) -> Vec<(PointId, f64)> {
        let mut out = Vec::new();
        match self.domain {
            Domain::Circle => {
                let n = self.n as isize;
                let c = (p[0].rem_euclid(1.0) * n as f64).round() as isize;
                let span = (r * n as f64).ceil() as isize + 1;
                if 2 * span + 1 >= n {
                    for id in 0..self.points.len() {
                        let d = circle_dist(p[0], self.points[id][0]);
                        if d <= r {
                            out.push((PointId(id), d));
                        }
                    }
                } else {
                    for k in (c - span)..=(c + span) {
                        let id = k.rem_euclid(n) as usize;
                        let d = circle_dist(p[0], self.points[id][0]);
                        if d <= r {
                            out.push((PointId(id), d));
                        }
                    }
                }
            }
            Domain::UnitSquare => {
                let n = self.n;
                let h = self.cell;
                let lo = |c: f64| (((c - r) / h).floor().max(0.0)) as usize;
                let hi = |c: f64| (((c + r) / h).ceil().min((n - 1) as f64)).max(0.0) as usize;
                for i in lo(p[0])..=hi(p[0]) {
                    for j in lo(p[1])..=hi(p[1]) {
                        let id = i * n + j;
                        let d = euclid(p, &self.points[id]);
                        if d <= r {
                            out.push((PointId(id), d));
                        }
                    }
                }
            }
            Domain::Roof => {
                let probe = self.probe(*p);
                for c in self.columns_by_x(p[0]) {
                    let col = &self.columns[c];
                    if (col.x - p[0]).abs() > r {
                        break;
                    }
                    for id in col.start..col.start + col.len {
                        if self.chord_lower(&probe, PointId(id)) > r {
                            continue;
                        }
                        let d = self.dist_point_grid(&probe, PointId(id));
                        if d <= r {
                            out.push((PointId(id), d));
                        }
                    }
                }
            }
        }
        out.sort_by_key(|e| e.0);
        out
    }

    /// Grid points within `r` of some member of `set` (sorted ids).
    pub fn thicken(&self, set: &[PointId], r: f64) -> Vec<PointId> {
        let mut mark = vec![false; self.len()];
        for &id in set {
            mark[id.0] = true;
            for (q, _) in self.within(&self.points[id.0], r) {
                mark[q.0] = true;
            }
        }
        mask_to_ids(&mark)
    }

    /// Largest distance between two grid points.
    pub fn diameter(&self) -> f64 {
        *self.diameter.get_or_init(|| match self.domain {
            Domain::Circle => {
                let n = self.n;
                circle_dist(0.0, self.points[n / 2][0])
            }
            Domain::UnitSquare => std::f64::consts::SQRT_2,
            Domain::Roof => (0..self.len())
                .into_par_iter()
                .map(|i| {
                    (i + 1..self.len())
                        .map(|j| self.dist_ids(PointId(i), PointId(j)))
                        .fold(0.0, f64::max)
                })
                .reduce(|| 0.0, f64::max),
        })
    }
}

/// Distance from a point to a fixed set of grid points.
#[derive(Clone, Debug)]
pub struct SetDistance {
    ids: Vec<PointId>,
    /// Roof only: `min_q` of the portal-to-`q` costs, per portal.
    portal: Option<Vec<f64>>,
}

impl SetDistance {
    pub fn new(space: &GridSpace, ids: &[PointId]) -> Self {
        let portal = space.roof.as_ref().map(|_| {
            let mut agg = vec![f64::INFINITY; ROOF_PORTALS];
            for q in ids {
                for (a, s) in agg.iter_mut().zip(&space.grid_portals[q.0].spread) {
                    if *s < *a {
                        *a = *s;
                    }
                }
            }
            agg
        });
        Self { ids: ids.to_vec(), portal }
    }

    pub fn ids(&self) -> &[PointId] {
        &self.ids
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `+inf` for the empty set.
    pub fn to_point(&self, space: &GridSpace, p: &Point) -> f64 {
        let probe = space.probe(*p);
        self.to_probe(space, &probe)
    }

    pub fn to_probe(&self, space: &GridSpace, probe: &Probe) -> f64 {
        match (&self.portal, &probe.portal) {
            (Some(agg), Some((e, _))) => {
                let chord = self.ids.iter().map(|q| euclid(&probe.point, &space.points[q.0])).fold(f64::INFINITY, f64::min);
                let through = e.iter().zip(agg).map(|(x, y)| x + y).fold(f64::INFINITY, f64::min);
                chord.min(through)
            }
            _ => self.ids.iter().map(|&q| space.dist_point_grid(probe, q)).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn to_grid(&self, space: &GridSpace, p: PointId) -> f64 {
        self.to_point(space, &space.points[p.0])
    }
}

pub(crate) fn mask_to_ids(mask: &[bool]) -> Vec<PointId> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| PointId(i)).collect()
}
