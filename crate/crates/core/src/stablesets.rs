//! Omega-limit sets, strongly stable sets `B = omega(closed Omega(C, eps))`,
//! their complementaries, the neighbourhood family `U_eta` and the avoiding
//! set `B*`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaingraph::{omega_budget, ChainGraph};
use crate::error::{Error, Result};
use crate::flows::{FlowModel, GridTransition};
use crate::orbit::{walk, WalkEnd};
use crate::space::{mask_to_ids, GridSpace, PointId, SetDistance};

/// Slack used when comparing a distance against `R * eta`.
const LEVEL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StableParams {
    /// Orbit length in steps of `T` for point omega-limits; half is burn-in.
    pub n_orbit: usize,
    /// Number of geometric eta samples in `[eta_min, eta_max]`.
    pub n_eta: usize,
    pub eta_min: f64,
    pub eta_max: f64,
    /// Neighbourhood scale; `None` means `max(1, diameter)`.
    pub r: Option<f64>,
    /// Invariance search cap, in steps of `T`.
    pub t_cap_steps: usize,
    /// Avoidance horizon, in multiples of `T`.
    pub avoid_horizon: f64,
    /// Exact orbits are sampled every `T / orbit_subdivision`.
    pub orbit_subdivision: usize,
}

impl Default for StableParams {
    fn default() -> Self {
        Self {
            n_orbit: 200,
            n_eta: 32,
            eta_min: 0.01,
            eta_max: 0.99,
            r: None,
            t_cap_steps: 200,
            avoid_horizon: 200.0,
            orbit_subdivision: 16,
        }
    }
}

impl StableParams {
    pub fn scale(&self, space: &GridSpace) -> f64 {
        self.r.unwrap_or_else(|| space.diameter().max(1.0))
    }

    /// Orbit sampling step; sampled flows are only known at multiples of `T`.
    pub fn orbit_delta(&self, flow: &FlowModel, t_step: f64) -> f64 {
        if flow.sampled_data().is_some() {
            t_step
        } else {
            t_step / self.orbit_subdivision as f64
        }
    }
}

/// Union of the grid cycles that the nearest-image map reaches from `u`:
/// the limit of the set sequence `S, image(S), image(image(S)), ...`.
pub fn omega_limit_of_set(tr: &GridTransition, u: &[PointId]) -> Result<Vec<PointId>> {
    if u.is_empty() {
        return Err(Error::EmptySet("U"));
    }
    let img = tr.image();
    let n = img.len();
    // 0 = unvisited, 1 = on the current path, 2 = finished
    let mut state = vec![0u8; n];
    let mut on_cycle = vec![false; n];
    let mut path = Vec::new();
    for &start in u {
        let mut x = start.0;
        path.clear();
        while state[x] == 0 {
            state[x] = 1;
            path.push(x);
            x = img[x].0;
        }
        if state[x] == 1 {
            let pos = path.iter().position(|&p| p == x).expect("on path");
            for &p in &path[pos..] {
                on_cycle[p] = true;
            }
        }
        for &p in &path {
            state[p] = 2;
        }
    }
    Ok(mask_to_ids(&on_cycle))
}

/// Grid-precision omega-limit of one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointOmega {
    pub cells: Vec<PointId>,
    pub converged: bool,
}

/// Follows the exact trajectory `phi_{nT}(x)`, `n = 1..=n_orbit`, and returns
/// the cells that recur after a burn-in of `n_orbit / 2` steps.
pub fn omega_limit_of_point(
    flow: &FlowModel,
    space: &GridSpace,
    x: PointId,
    t_step: f64,
    n_orbit: usize,
) -> Result<PointOmega> {
    space.check(x)?;
    let n_orbit = n_orbit.max(4);
    let burn = n_orbit / 2;
    let third = burn + (n_orbit - burn) / 2;
    let mut p = space.point(x);
    let mut visits: BTreeMap<PointId, usize> = BTreeMap::new();
    let mut early = Vec::new();
    let mut late = Vec::new();
    for step in 1..=n_orbit {
        p = space.canonicalize(flow.eval(space, p, t_step)?);
        if step > burn {
            let cell = space.nearest(&p);
            *visits.entry(cell).or_default() += 1;
            if step > third {
                late.push(cell);
            } else {
                early.push(cell);
            }
        }
    }
    let mut cells: Vec<PointId> = visits.iter().filter(|(_, &c)| c >= 2).map(|(&id, _)| id).collect();
    if cells.is_empty() {
        cells = late.clone();
        cells.sort_unstable();
        cells.dedup();
    }
    early.sort_unstable();
    early.dedup();
    let reach = 2.0 * space.cell_size() + 1e-12;
    let converged = late.iter().all(|&c| early.iter().any(|&e| space.dist_ids(c, e) <= reach));
    Ok(PointOmega { cells, converged })
}

/// Point omega-limits of every grid point, shared by all candidate sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OmegaCache {
    pub t_step: f64,
    pub n_orbit: usize,
    pub omega: Vec<PointOmega>,
}

impl OmegaCache {
    pub fn build(flow: &FlowModel, space: &GridSpace, t_step: f64, n_orbit: usize) -> Result<Self> {
        let omega = space
            .ids()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|x| omega_limit_of_point(flow, space, x, t_step, n_orbit))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { t_step, n_orbit, omega })
    }

    pub fn nonconverged(&self) -> Vec<PointId> {
        mask_to_ids(&self.omega.iter().map(|o| !o.converged).collect::<Vec<_>>())
    }
}

/// Output of the `omega(closed Omega(C, eps))` construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableCandidate {
    pub b: Vec<PointId>,
    /// Closed budgeted reach `W` of the seed ball.
    pub reach: Vec<PointId>,
    /// `C` and `W` are disjoint.
    pub separated: bool,
    /// `B` lies inside `W`.
    pub b_in_reach: bool,
}

pub fn build_strongly_stable(
    flow: &FlowModel,
    space: &GridSpace,
    g: &ChainGraph,
    tr: &GridTransition,
    c: &[PointId],
    eps: f64,
) -> Result<StableCandidate> {
    if c.is_empty() {
        return Err(Error::EmptySet("C"));
    }
    let reach = omega_budget(g, c, eps, true)?;
    if reach.is_empty() {
        return Err(Error::EmptyReach);
    }
    let b = omega_limit_of_set(tr, &reach)?;
    let b = unstable_closure(flow, space, tr, &reach, b)?;
    let separated = c.iter().all(|x| reach.binary_search(x).is_err());
    let b_in_reach = b.iter().all(|x| reach.binary_search(x).is_ok());
    if !b_in_reach {
        log::warn!("omega of the reach is not contained in the reach ({} cells)", b.len());
    }
    Ok(StableCandidate { b, reach, separated, b_in_reach })
}

/// Distance from `b`, in cells, beyond which a grid orbit counts as leaving it.
const ESCAPE_CELLS: f64 = 2.0;

/// Adds the orbits that leave `b` from arbitrarily close by.
///
/// The omega-limit of a set contains every orbit that departs from it, but
/// on a grid the closest departing point is a whole cell away and gets out
/// in finite time, so the cycles alone miss those orbits. Reach points next
/// to `b` whose grid orbit moves more than two cells away have their forward
/// orbit added, until nothing changes.
fn unstable_closure(
    flow: &FlowModel,
    space: &GridSpace,
    tr: &GridTransition,
    reach: &[PointId],
    mut b: Vec<PointId>,
) -> Result<Vec<PointId>> {
    let n = space.len();
    let cell = space.cell_size();
    let img = tr.image();
    let mut in_b = vec![false; n];
    for id in &b {
        in_b[id.0] = true;
    }
    let mut seen = vec![usize::MAX; n];
    loop {
        let dist = SetDistance::new(space, &b);
        let mut added = Vec::new();
        for &u in reach {
            if in_b[u.0] || dist.to_grid(space, u) > 1.5 * cell {
                continue;
            }
            let mut path = Vec::new();
            let mut x = u.0;
            while seen[x] != u.0 && path.len() < n {
                seen[x] = u.0;
                path.push(x);
                x = img[x].0;
            }
            if path.iter().any(|&p| dist.to_grid(space, PointId(p)) > ESCAPE_CELLS * cell + 1e-12) {
                added.extend(orbit_cells(flow, space, tr.t_step(), u, &path)?);
            }
        }
        added.retain(|id| !in_b[id.0]);
        if added.is_empty() {
            return Ok(b);
        }
        for id in added {
            if !in_b[id.0] {
                in_b[id.0] = true;
                b.push(id);
            }
        }
        b.sort_unstable();
        // fresh visit marks for the next round
        seen.iter_mut().for_each(|s| *s = usize::MAX);
    }
}

/// Grid cells met by the forward orbit of `start` over as many steps as
/// `path` has, sampled finely enough that consecutive samples are at most
/// half a cell apart. Sampled flows fall back to `path`.
fn orbit_cells(flow: &FlowModel, space: &GridSpace, t_step: f64, start: PointId, path: &[usize]) -> Result<Vec<PointId>> {
    if flow.sampled_data().is_some() {
        return Ok(path.iter().map(|&p| PointId(p)).collect());
    }
    let half = 0.5 * space.cell_size();
    let (dt_max, dt_min) = (t_step / 16.0, t_step / 4096.0);
    let t_end = path.len() as f64 * t_step;
    let mut out = vec![start];
    let mut p = space.point(start);
    let (mut t, mut dt) = (0.0, dt_max);
    while t < t_end {
        let q = space.canonicalize(flow.eval(space, p, dt)?);
        let step = space.dist_points(&p, &q);
        if step > half && dt > dt_min {
            dt *= 0.5;
            continue;
        }
        out.push(space.nearest(&q));
        p = q;
        t += dt;
        if step < 0.25 * half {
            dt = (2.0 * dt).min(dt_max);
        }
        if matches!(flow.limit_regime(p, 1e-13), Some(crate::flows::Limit::Stationary)) {
            break;
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Complementary {
    pub b_bullet: Vec<PointId>,
    /// Points left out of `B_bullet` because their omega-limit did not settle.
    pub nonconverged: Vec<PointId>,
}

/// `B_bullet = {x : omega(x) misses B thickened by one resolution}`.
pub fn complementary(space: &GridSpace, cache: &OmegaCache, b: &[PointId]) -> Result<Complementary> {
    if cache.omega.len() != space.len() {
        return Err(Error::InvalidParameter("omega cache does not match the grid".into()));
    }
    let mut near = vec![false; space.len()];
    for id in space.thicken(b, space.resolution()) {
        near[id.0] = true;
    }
    for id in b {
        near[id.0] = true;
    }
    let mut bullet = Vec::new();
    let mut nonconverged = Vec::new();
    for (x, om) in cache.omega.iter().enumerate() {
        if near[x] && b.binary_search(&PointId(x)).is_ok() {
            continue;
        }
        if om.cells.iter().any(|c| near[c.0]) {
            continue;
        }
        if om.converged {
            bullet.push(PointId(x));
        } else {
            nonconverged.push(PointId(x));
        }
    }
    Ok(Complementary { b_bullet: bullet, nonconverged })
}

/// The family `U_eta = {x : d(x, B) <= R eta}` with its invariance times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighborhoods {
    pub r: f64,
    /// Ascending eta samples.
    pub etas: Vec<f64>,
    /// `T(eta)`; `None` above the certified prefix, where `U_eta = X`.
    pub times: Vec<Option<f64>>,
}

impl Neighborhoods {
    /// Largest eta whose thickening is certified.
    pub fn certified_max(&self) -> f64 {
        self.etas.iter().zip(&self.times).filter(|(_, t)| t.is_some()).map(|(e, _)| *e).fold(0.0, f64::max)
    }

    pub fn certified(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.etas.iter().zip(&self.times).filter_map(|(&e, t)| t.map(|t| (e, t)))
    }

    /// Membership of a point at distance `d` from `B` in `U_eta`.
    pub fn contains(&self, d: f64, eta: f64) -> bool {
        let certified = self.certified_max();
        eta > certified || d <= self.r * eta + LEVEL_TOL
    }
}

/// Eta samples: geometric ladder plus the levels `d(x, B) / R` of grid points.
pub fn eta_samples(params: &StableParams, r: f64, d_b: &[f64]) -> Vec<f64> {
    let n = params.n_eta.max(2);
    let ratio = (params.eta_max / params.eta_min).powf(1.0 / (n - 1) as f64);
    let mut etas: Vec<f64> = (0..n).map(|i| params.eta_min * ratio.powi(i as i32)).collect();
    etas.extend(d_b.iter().map(|d| d / r).filter(|e| *e > 0.0 && *e < 1.0));
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    etas
}

/// Certifies `T(eta)` for each sample: the least `k T` after which the
/// nearest-image orbit of every point of `U_eta` stays within `slack` of
/// `U_eta`, up to `t_cap_steps`. Fails with a witness when the smallest
/// sample fails.
///
/// `B` is a finite sample of an invariant set, so `d(., B)` wobbles by up to
/// the grid resolution along orbits that keep a constant distance from the
/// set itself; `slack` absorbs that.
pub fn nested_neighborhoods(
    tr: &GridTransition,
    d_b: &[f64],
    r: f64,
    etas: &[f64],
    t_cap_steps: usize,
    slack: f64,
) -> Result<Neighborhoods> {
    if !(r >= 1.0) {
        return Err(Error::InvalidParameter(format!("scale R = {r} must be at least 1")));
    }
    let img = tr.image();
    let n = img.len();
    let k_cap = t_cap_steps.max(1);
    // suffix maxima of d_B along each grid orbit, indices 1..=k_cap
    let suffix: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut orbit = Vec::with_capacity(k_cap + 1);
            let mut cur = x;
            for _ in 0..=k_cap {
                orbit.push(d_b[cur]);
                cur = img[cur].0;
            }
            let mut s = vec![0.0; k_cap + 1];
            let mut m = f64::NEG_INFINITY;
            for k in (0..=k_cap).rev() {
                m = m.max(orbit[k]);
                s[k] = m;
            }
            s
        })
        .collect();
    let mut times = Vec::with_capacity(etas.len());
    let mut failed = false;
    for (i, &eta) in etas.iter().enumerate() {
        if failed {
            times.push(None);
            continue;
        }
        let level = r * eta + LEVEL_TOL;
        let reach = level + slack;
        let mut worst = 1usize;
        let mut witness = None;
        for x in 0..n {
            if d_b[x] > level {
                continue;
            }
            let s = &suffix[x];
            if s[k_cap] > reach {
                witness = Some(x);
                break;
            }
            // s is nonincreasing: least k >= 1 with s[k] <= reach
            let k = 1 + s[1..].partition_point(|&v| v > reach);
            worst = worst.max(k);
        }
        match witness {
            Some(x) if i == 0 => {
                return Err(Error::InvalidParameter(format!(
                    "U_eta at eta = {eta} is not eventually invariant within {k_cap} steps; witness point {x}"
                )));
            }
            Some(_) => {
                failed = true;
                times.push(None);
            }
            None => times.push(Some(worst as f64 * tr.t_step())),
        }
    }
    Ok(Neighborhoods { r, etas: etas.to_vec(), times })
}

/// Smallest distance to `B` along the sampled exact forward orbit of every
/// point in `candidates`, including the limit orbit. Points whose orbit comes
/// within `floor` are cut short and may report any value `<= floor`.
pub fn orbit_min_distance(
    flow: &FlowModel,
    space: &GridSpace,
    dist: &SetDistance,
    candidates: &[PointId],
    delta: f64,
    horizon_steps: usize,
    floor: f64,
) -> Result<Vec<(PointId, f64)>> {
    candidates
        .par_iter()
        .map(|&x| {
            let mut values = Vec::new();
            let mut m = f64::INFINITY;
            let end = walk(flow, space, space.point(x), delta, horizon_steps, |_, p| {
                let d = dist.to_point(space, p);
                values.push(d);
                m = m.min(d);
                m > floor
            })?;
            match end {
                WalkEnd::Limit { limit, point, .. } => {
                    let lim = flow.orbit_extremum(space, point, limit, false, |p| dist.to_point(space, p))?;
                    m = m.min(lim);
                }
                WalkEnd::Cycle { start, at } => {
                    m = m.min(values[start..at].iter().copied().fold(f64::INFINITY, f64::min));
                }
                WalkEnd::Stopped | WalkEnd::Horizon => {}
            }
            Ok((x, m))
        })
        .collect()
}

/// Level `eta0` and avoiding set `B*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Avoider {
    pub eta0: f64,
    pub b_star: Vec<PointId>,
}

/// Picks the largest certified eta whose avoiding set
/// `{x in B_bullet : the orbit of x never enters U_eta}` is nonempty.
pub fn find_eta0_and_bstar(
    flow: &FlowModel,
    space: &GridSpace,
    dist: &SetDistance,
    b_bullet: &[PointId],
    hoods: &Neighborhoods,
    delta: f64,
    horizon_steps: usize,
) -> Result<Option<Avoider>> {
    if b_bullet.is_empty() {
        return Ok(None);
    }
    let certified: Vec<f64> = hoods.certified().map(|(e, _)| e).collect();
    let Some(&smallest) = certified.first() else {
        return Ok(None);
    };
    let floor = hoods.r * smallest + LEVEL_TOL;
    let mins = orbit_min_distance(flow, space, dist, b_bullet, delta, horizon_steps, floor)?;
    for &eta in certified.iter().rev() {
        let level = hoods.r * eta + LEVEL_TOL;
        let b_star: Vec<PointId> = mins.iter().filter(|(_, m)| *m > level).map(|(x, _)| *x).collect();
        if !b_star.is_empty() {
            return Ok(Some(Avoider { eta0: eta, b_star }));
        }
    }
    Ok(None)
}

/// How a pair was seeded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub center: PointId,
    pub radius: f64,
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub t_step: f64,
}

/// A strongly stable set with everything needed to build its Lyapunov function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StablePair {
    #[serde(rename = "B")]
    pub b: Vec<PointId>,
    #[serde(rename = "B_bullet")]
    pub b_bullet: Vec<PointId>,
    #[serde(rename = "R")]
    pub r: f64,
    pub eta0: Option<f64>,
    #[serde(rename = "T_table", with = "table_map")]
    pub t_table: Vec<(f64, Option<f64>)>,
    #[serde(rename = "B_star")]
    pub b_star: Vec<PointId>,
    pub provenance: Provenance,
    pub separated: bool,
    pub b_in_reach: bool,
    pub nonconverged: Vec<PointId>,
}

impl StablePair {
    pub fn neighborhoods(&self) -> Neighborhoods {
        Neighborhoods {
            r: self.r,
            etas: self.t_table.iter().map(|e| e.0).collect(),
            times: self.t_table.iter().map(|e| e.1).collect(),
        }
    }

    /// Level used to normalize `l`: `eta0`, or the largest certified eta without one.
    pub fn eta_ref(&self) -> f64 {
        self.eta0.unwrap_or_else(|| self.neighborhoods().certified_max())
    }
}

/// Serializes the eta table as a JSON object `{"eta": T}`, with `null`
/// above the certified prefix.
mod table_map {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(v: &[(f64, Option<f64>)], s: S) -> Result<S::Ok, S::Error> {
        let map: serde_json::Map<String, serde_json::Value> =
            v.iter().map(|(e, t)| (format!("{e:?}"), serde_json::to_value(t).expect("finite"))).collect();
        map.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, Option<f64>)>, D::Error> {
        let map: BTreeMap<String, Option<f64>> = BTreeMap::deserialize(d)?;
        let mut out = map
            .into_iter()
            .map(|(k, t)| k.parse::<f64>().map(|e| (e, t)).map_err(D::Error::custom))
            .collect::<Result<Vec<_>, _>>()?;
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(out)
    }
}

/// Reasons a seed produced no usable pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Rejection {
    NotSeparated,
    EmptyB,
    NotInvariant(String),
}

/// Completes a separated candidate into a pair: complementary, neighbourhoods,
/// `eta0` and `B*`.
#[allow(clippy::too_many_arguments)]
pub fn complete_pair(
    flow: &FlowModel,
    space: &GridSpace,
    tr: &GridTransition,
    cache: &OmegaCache,
    cand: &StableCandidate,
    provenance: Provenance,
    params: &StableParams,
) -> Result<std::result::Result<StablePair, Rejection>> {
    if !cand.separated {
        return Ok(Err(Rejection::NotSeparated));
    }
    if cand.b.is_empty() {
        return Ok(Err(Rejection::EmptyB));
    }
    let comp = complementary(space, cache, &cand.b)?;
    let dist = SetDistance::new(space, &cand.b);
    let d_b: Vec<f64> = space.ids().map(|x| dist.to_grid(space, x)).collect();
    let r = params.scale(space);
    let etas = eta_samples(params, r, &d_b);
    let hoods = match nested_neighborhoods(tr, &d_b, r, &etas, params.t_cap_steps, space.resolution()) {
        Ok(h) => h,
        Err(Error::InvalidParameter(msg)) => return Ok(Err(Rejection::NotInvariant(msg))),
        Err(e) => return Err(e),
    };
    let delta = params.orbit_delta(flow, tr.t_step());
    let horizon = (params.avoid_horizon * tr.t_step() / delta).round() as usize;
    let avoider = find_eta0_and_bstar(flow, space, &dist, &comp.b_bullet, &hoods, delta, horizon)?;
    let (eta0, b_star) = match avoider {
        Some(a) => (Some(a.eta0), a.b_star),
        None => (None, Vec::new()),
    };
    Ok(Ok(StablePair {
        b: cand.b.clone(),
        b_bullet: comp.b_bullet,
        r,
        eta0,
        t_table: hoods.etas.iter().copied().zip(hoods.times.iter().copied()).collect(),
        b_star,
        provenance,
        separated: cand.separated,
        b_in_reach: cand.b_in_reach,
        nonconverged: comp.nonconverged,
    }))
}

/// Builds a pair around a given invariant set `b` rather than from a seed ball.
pub fn pair_from_set(
    flow: &FlowModel,
    space: &GridSpace,
    tr: &GridTransition,
    cache: &OmegaCache,
    b: &[PointId],
    params: &StableParams,
) -> Result<std::result::Result<StablePair, Rejection>> {
    let mut b = b.to_vec();
    b.sort_unstable();
    b.dedup();
    let center = *b.first().ok_or(Error::EmptySet("B"))?;
    let cand = StableCandidate { b: b.clone(), reach: b, separated: true, b_in_reach: true };
    let provenance = Provenance { center, radius: 0.0, epsilon: 0.0, t_step: tr.t_step() };
    complete_pair(flow, space, tr, cache, &cand, provenance, params)
}
