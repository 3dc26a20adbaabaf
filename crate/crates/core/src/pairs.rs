//! Candidate pairs from seed balls, deduplication, and a greedy cover of the
//! non-recurrent grid points.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaingraph::{ChainGraph, ScrResult};
use crate::error::{Error, Result};
use crate::flows::{FlowModel, GridTransition};
use crate::lyapunov::strictly_outside;
use crate::space::{mask_to_ids, GridSpace, PointId};
use crate::stablesets::{
    build_strongly_stable, complementary, complete_pair, OmegaCache, Provenance, Rejection, StableCandidate,
    StablePair, StableParams,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairParams {
    /// Seed ball radii in units of the grid resolution.
    pub radii: Vec<f64>,
    /// Seed every `stride`-th non-recurrent point; `None` picks 1 up to
    /// 1000 points and 4 above.
    pub seed_stride: Option<usize>,
}

impl Default for PairParams {
    fn default() -> Self {
        Self { radii: vec![2.0, 4.0, 8.0], seed_stride: None }
    }
}

impl PairParams {
    pub fn stride(&self, n_points: usize) -> usize {
        self.seed_stride.unwrap_or(if n_points <= 1000 { 1 } else { 4 }).max(1)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PairCatalog {
    pub pairs: Vec<StablePair>,
    /// Sorted ids of `B u B_bullet` thickened by one cell, per pair.
    pub dedupe_keys: Vec<Vec<PointId>>,
    pub selected: Vec<usize>,
    /// Non-recurrent points outside the warning band that no selected pair excludes.
    pub residual: Vec<PointId>,
    pub seeds_tried: usize,
    pub separated: usize,
    pub rejected_not_invariant: usize,
    /// Per selected pair: recurrent points outside `B u B_bullet` and the warning band.
    pub soundness_violations: Vec<Vec<PointId>>,
}

fn key_of(space: &GridSpace, b: &[PointId], bullet: &[PointId]) -> Vec<PointId> {
    let mut union: Vec<PointId> = b.iter().chain(bullet).copied().collect();
    union.sort_unstable();
    union.dedup();
    space.thicken(&union, space.cell_size() + 1e-12)
}

struct Seeded {
    cand: StableCandidate,
    b_bullet: Vec<PointId>,
    provenance: Provenance,
    key: Vec<PointId>,
}

/// Seeds balls at non-recurrent points and keeps every separated candidate
/// whose seed lies outside `B u B_bullet`, deduplicated on the thickened
/// union.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_pairs(
    g: &ChainGraph,
    tr: &GridTransition,
    flow: &FlowModel,
    space: &GridSpace,
    cache: &OmegaCache,
    scr: &ScrResult,
    pair_params: &PairParams,
    stable_params: &StableParams,
) -> Result<PairCatalog> {
    if pair_params.radii.is_empty() || pair_params.radii.iter().any(|&r| !(r >= 2.0)) {
        return Err(Error::InvalidParameter("radii must be nonempty and at least 2 x resolution".into()));
    }
    let eps = scr.epsilon;
    let res = space.resolution();
    let stride = pair_params.stride(space.len());
    let seeds: Vec<PointId> = space.ids().filter(|&u| !scr.is_member(u)).step_by(stride).collect();
    let jobs: Vec<(PointId, f64)> =
        seeds.iter().flat_map(|&s| pair_params.radii.iter().map(move |&r| (s, r * res))).collect();
    let found: Vec<Option<Seeded>> = jobs
        .par_iter()
        .map(|&(seed, radius)| {
            let ball: Vec<PointId> = space.within(&space.point(seed), radius).into_iter().map(|(v, _)| v).collect();
            let cand = match build_strongly_stable(flow, space, g, tr, &ball, eps) {
                Ok(c) => c,
                Err(Error::EmptyReach) => return Ok(None),
                Err(e) => return Err(e),
            };
            if !cand.separated || cand.b.is_empty() {
                return Ok(None);
            }
            let comp = complementary(space, cache, &cand.b)?;
            if cand.b.binary_search(&seed).is_ok() || comp.b_bullet.binary_search(&seed).is_ok() {
                return Ok(None);
            }
            let key = key_of(space, &cand.b, &comp.b_bullet);
            let provenance = Provenance { center: seed, radius, epsilon: eps, t_step: tr.t_step() };
            Ok(Some(Seeded { cand, b_bullet: comp.b_bullet, provenance, key }))
        })
        .collect::<Result<_>>()?;
    let separated = found.iter().filter(|f| f.is_some()).count();
    let mut seen = HashSet::new();
    let unique: Vec<Seeded> = found.into_iter().flatten().filter(|s| seen.insert(s.key.clone())).collect();
    let completed: Vec<_> = unique
        .par_iter()
        .map(|s| complete_pair(flow, space, tr, cache, &s.cand, s.provenance.clone(), stable_params))
        .collect::<Result<_>>()?;
    let mut catalog = PairCatalog { seeds_tried: jobs.len(), separated, ..Default::default() };
    for (s, done) in unique.into_iter().zip(completed) {
        match done {
            Ok(pair) => {
                debug_assert_eq!(pair.b_bullet, s.b_bullet);
                catalog.pairs.push(pair);
                catalog.dedupe_keys.push(s.key);
            }
            Err(Rejection::NotInvariant(_)) => catalog.rejected_not_invariant += 1,
            Err(_) => {}
        }
    }
    Ok(catalog)
}

/// Points a pair excludes: outside `B u B_bullet`.
pub fn excluded_by(space: &GridSpace, pair: &StablePair) -> Vec<bool> {
    let mut out = vec![true; space.len()];
    for id in pair.b.iter().chain(&pair.b_bullet) {
        out[id.0] = false;
    }
    out
}

/// Greedy cover of the non-recurrent points outside the warning band.
/// Fills `selected`, `residual` and `soundness_violations`.
pub fn select_cover(catalog: &mut PairCatalog, scr: &ScrResult, space: &GridSpace) {
    let targets: Vec<bool> = space.ids().map(|u| strictly_outside(scr, u)).collect();
    let excl: Vec<Vec<bool>> = catalog.pairs.iter().map(|p| excluded_by(space, p)).collect();
    let mut uncovered = targets.clone();
    let mut selected = Vec::new();
    loop {
        let mut best = (0usize, usize::MAX);
        for (i, e) in excl.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            let gain = e.iter().zip(&uncovered).filter(|(&x, &u)| x && u).count();
            if gain > best.0 {
                best = (gain, i);
            }
        }
        if best.0 == 0 {
            break;
        }
        let i = best.1;
        for (u, &x) in uncovered.iter_mut().zip(&excl[i]) {
            if x {
                *u = false;
            }
        }
        selected.push(i);
    }
    let in_band = |m: &PointId| scr.warning_band.binary_search(m).is_ok();
    catalog.soundness_violations = selected
        .iter()
        .map(|&i| scr.members.iter().copied().filter(|m| excl[i][m.0] && !in_band(m)).collect())
        .collect();
    catalog.residual = mask_to_ids(&uncovered);
    catalog.selected = selected;
}

impl PairCatalog {
    pub fn selected_pairs(&self) -> Vec<StablePair> {
        self.selected.iter().map(|&i| self.pairs[i].clone()).collect()
    }
}
