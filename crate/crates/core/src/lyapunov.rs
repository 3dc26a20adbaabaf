//! Lyapunov functions of stable pairs and their weighted sum.
//!
//! For a pair with set `B`, scale `R` and level `eta0`:
//!
//! * `l(x) = min(d(x, B) / (R eta0), 1)`
//! * `k(x) = sup_{t >= 0} l(phi_t(x))`
//! * `h(x) = int_0^inf e^{-s} k(phi_s(x)) ds`
//!
//! and the combination is `H = sum_n h_n / 3^n`.
//!
//! Orbits are sampled on a lattice of step `delta`. Once an orbit reaches
//! its limit (a fixed point or a periodic orbit) the rest of the supremum is
//! taken over the limit orbit directly, so `k` needs no artificial horizon.
//! `h` is integrated with a product trapezoid rule on a coarser lattice of
//! step `delta_q`; since `k` is nonincreasing along orbits, the left and
//! right rectangle sums bracket the integral and give the quadrature bound.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaingraph::{band_width, ReturnCost, ScrResult};
use crate::error::{Error, Result};
use crate::flows::FlowModel;
use crate::orbit::{walk, WalkEnd};
use crate::space::{GridSpace, Point, PointId, SetDistance};
use crate::stablesets::StablePair;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LyapunovParams {
    /// Orbit lattice step is `T / orbit_subdivision`.
    pub orbit_subdivision: usize,
    /// Quadrature step is `T / quad_subdivision`; must divide `orbit_subdivision`.
    pub quad_subdivision: usize,
    pub s_max: f64,
    /// Sampling horizon for `k`, in multiples of `T`.
    pub k_horizon: f64,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        Self { orbit_subdivision: 16, quad_subdivision: 8, s_max: 20.0, k_horizon: 200.0 }
    }
}

/// Everything needed to evaluate one pair's functions at arbitrary points.
#[derive(Clone, Debug)]
pub struct PairEvaluator {
    dist: SetDistance,
    /// `R * eta_ref`.
    level: f64,
    delta: f64,
    /// Orbit nodes per quadrature panel.
    stride: usize,
    /// Quadrature panels up to `s_max`.
    panels: usize,
    s_max: f64,
    horizon: usize,
}

/// Values of `l`, `k`, `h` at one point with their error bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointValue {
    pub l: f64,
    pub k: f64,
    pub h: f64,
    /// Width of the rectangle-rule bracket around the quadrature.
    pub quad_bound: f64,
    /// Bound on the error from truncating the integral at `s_max`.
    pub tail_bound: f64,
    /// Flow time after which the orbit was no longer sampled.
    pub horizon: f64,
    /// False when the orbit hit the sampling horizon without settling;
    /// `k` and `h` are then lower bounds.
    pub certified: bool,
}

impl PairEvaluator {
    pub fn new(
        flow: &FlowModel,
        space: &GridSpace,
        pair: &StablePair,
        t_step: f64,
        params: &LyapunovParams,
    ) -> Result<Self> {
        if params.orbit_subdivision == 0
            || params.quad_subdivision == 0
            || params.orbit_subdivision % params.quad_subdivision != 0
        {
            return Err(Error::InvalidParameter(format!(
                "quadrature subdivision {} must divide orbit subdivision {}",
                params.quad_subdivision, params.orbit_subdivision
            )));
        }
        if !(params.s_max > 0.0) || !(params.k_horizon >= params.s_max / t_step) {
            return Err(Error::InvalidParameter("need s_max > 0 and k_horizon T >= s_max".into()));
        }
        let (delta, stride) = if flow.sampled_data().is_some() {
            (t_step, 1)
        } else {
            (t_step / params.orbit_subdivision as f64, params.orbit_subdivision / params.quad_subdivision)
        };
        let delta_q = delta * stride as f64;
        let panels = (params.s_max / delta_q).round().max(1.0) as usize;
        Ok(Self {
            dist: SetDistance::new(space, &pair.b),
            level: pair.r * pair.eta_ref(),
            delta,
            stride,
            panels,
            s_max: panels as f64 * delta_q,
            horizon: (params.k_horizon * t_step / delta).round() as usize,
        })
    }

    pub fn level_at(&self, space: &GridSpace, p: &Point) -> f64 {
        (self.dist.to_point(space, p) / self.level).min(1.0)
    }

    /// `l`, `k`, `h` at an arbitrary domain point.
    pub fn evaluate(&self, flow: &FlowModel, space: &GridSpace, x: Point) -> Result<PointValue> {
        let needed = self.panels * self.stride;
        let mut ls: Vec<f64> = Vec::with_capacity(needed + 1);
        let mut late_max = 0.0f64;
        let end = walk(flow, space, x, self.delta, self.horizon.max(needed), |j, p| {
            let l = self.level_at(space, p);
            ls.push(l);
            if j >= needed {
                late_max = late_max.max(l);
                // the supremum beyond node `needed` is already attained
                return late_max < 1.0;
            }
            true
        })?;
        let (tail, certified) = match end {
            WalkEnd::Limit { limit, point, .. } => {
                (flow.orbit_extremum(space, point, limit, true, |p| self.level_at(space, p))?, true)
            }
            WalkEnd::Cycle { start, .. } => (ls[start..].iter().copied().fold(0.0, f64::max), true),
            WalkEnd::Stopped => (0.0, true),
            WalkEnd::Horizon => (0.0, false),
        };
        // k at orbit nodes: suffix maxima, joined with the limit supremum
        let mut ks = vec![0.0; ls.len()];
        let mut m = tail;
        for j in (0..ls.len()).rev() {
            m = m.max(ls[j]);
            ks[j] = m;
        }
        let k_at = |j: usize| if j < ks.len() { ks[j] } else { tail };
        let hq = self.delta * self.stride as f64;
        let decay = (-hq).exp();
        let w_left = 1.0 - decay;
        let w_slope = (1.0 - decay * (1.0 + hq)) / hq;
        let mut h = 0.0;
        let mut quad_bound = 0.0;
        let mut weight = 1.0;
        for i in 0..self.panels {
            let a = k_at(i * self.stride);
            let b = k_at((i + 1) * self.stride);
            h += weight * (a * w_left + (b - a) * w_slope);
            quad_bound += weight * w_left * (a - b);
            weight = (-((i + 1) as f64) * hq).exp();
        }
        let k_end = k_at(self.panels * self.stride);
        h += (-self.s_max).exp() * k_end;
        Ok(PointValue {
            l: ls[0],
            k: ks[0],
            h: h.clamp(0.0, 1.0),
            quad_bound,
            tail_bound: (-self.s_max).exp(),
            horizon: (ls.len() - 1) as f64 * self.delta,
            certified,
        })
    }
}

/// The functions of one pair on the grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovField {
    pub pair_index: usize,
    pub values: Vec<PointValue>,
}

impl LyapunovField {
    pub fn h(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.h).collect()
    }

    pub fn uncertified(&self) -> Vec<PointId> {
        self.values.iter().enumerate().filter(|(_, v)| !v.certified).map(|(i, _)| PointId(i)).collect()
    }

    pub fn max_quad_bound(&self) -> f64 {
        self.values.iter().map(|v| v.quad_bound).fold(0.0, f64::max)
    }
}

pub fn lyapunov_field(
    flow: &FlowModel,
    space: &GridSpace,
    eval: &PairEvaluator,
    pair_index: usize,
) -> Result<LyapunovField> {
    let values = space
        .points()
        .par_iter()
        .map(|&p| eval.evaluate(flow, space, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(LyapunovField { pair_index, values })
}

/// `H = sum_n h_n / 3^n` on the grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CombinedLyapunov {
    pub h_values: Vec<f64>,
    pub n_pairs: usize,
    /// `(3/2) 3^{-n_pairs}`: what the dropped terms of the series could add.
    pub tail_bound: f64,
}

pub fn combine_pairs(fields: &[LyapunovField], n_points: usize) -> CombinedLyapunov {
    let mut h_values = vec![0.0; n_points];
    let mut w = 1.0;
    for f in fields {
        for (acc, v) in h_values.iter_mut().zip(&f.values) {
            *acc += w * v.h;
        }
        w /= 3.0;
    }
    CombinedLyapunov { h_values, n_pairs: fields.len(), tail_bound: 1.5 * 3f64.powi(-(fields.len() as i32)) }
}

/// Evaluates `H` at arbitrary points.
#[derive(Clone, Debug)]
pub struct CombinedEvaluator {
    pub pairs: Vec<PairEvaluator>,
}

impl CombinedEvaluator {
    pub fn evaluate(&self, flow: &FlowModel, space: &GridSpace, x: Point) -> Result<f64> {
        let mut h = 0.0;
        let mut w = 1.0;
        for p in &self.pairs {
            h += w * p.evaluate(flow, space, x)?.h;
            w /= 3.0;
        }
        Ok(h)
    }
}

/// Strictness margin for `n_pairs` combined pairs.
pub fn default_margin(n_pairs: usize) -> f64 {
    1e-4 * 3f64.powi(-(n_pairs as i32))
}

pub const MONOTONICITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Violation {
    pub point: PointId,
    pub h_before: f64,
    pub h_after: f64,
    /// Within three cells of the boundary of some `B u B_bullet`.
    pub near_boundary: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub t_probe: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub n_points: usize,
    pub n_pairs: usize,
    pub monotonicity_violations: Vec<Violation>,
    /// Points off the recurrent set and its warning band.
    pub strict_candidates: usize,
    pub strictness_failures: Vec<Violation>,
    pub strict_fraction: f64,
    pub max_increase: f64,
    pub min_decrease_off_scr: f64,
    /// Every strictness failure is near a pair boundary.
    pub failures_near_boundary: bool,
}

impl VerifyReport {
    /// Zero monotonicity violations, at least 99% strict decrease, and the
    /// remainder near pair boundaries.
    pub fn passed(&self) -> bool {
        self.monotonicity_violations.is_empty() && self.strict_fraction >= 0.99 && self.failures_near_boundary
    }
}

/// Outside the recurrent set and clear of the warning band.
pub fn strictly_outside(scr: &ScrResult, u: PointId) -> bool {
    if scr.is_member(u) {
        return false;
    }
    match scr.min_return_cost[u.0] {
        ReturnCost::Finite(c) => c > scr.epsilon + band_width(scr.resolution),
        ReturnCost::Above(_) | ReturnCost::Unreachable => true,
    }
}

/// Grid points within three cells of the boundary of some `B u B_bullet`.
pub fn near_pair_boundaries(space: &GridSpace, pairs: &[StablePair]) -> Vec<bool> {
    let n = space.len();
    let mut near = vec![false; n];
    let adj = 1.5 * space.cell_size();
    for pair in pairs {
        let mut inside = vec![false; n];
        for id in pair.b.iter().chain(&pair.b_bullet) {
            inside[id.0] = true;
        }
        let boundary: Vec<PointId> = space
            .ids()
            .filter(|&u| space.within(&space.point(u), adj).iter().any(|(v, _)| inside[v.0] != inside[u.0]))
            .collect();
        for id in space.thicken(&boundary, 3.0 * space.cell_size() + 1e-12) {
            near[id.0] = true;
        }
    }
    near
}

#[allow(clippy::too_many_arguments)]
pub fn verify_lyapunov(
    combined: &CombinedLyapunov,
    eval: &CombinedEvaluator,
    flow: &FlowModel,
    space: &GridSpace,
    scr: &ScrResult,
    pairs: &[StablePair],
    t_probe: f64,
    margin: f64,
) -> Result<VerifyReport> {
    if !(t_probe > 0.0) || !(margin >= 0.0) {
        return Err(Error::InvalidParameter("need t_probe > 0 and margin >= 0".into()));
    }
    let after: Vec<f64> = space
        .points()
        .par_iter()
        .map(|&p| {
            let y = space.canonicalize(flow.eval(space, p, t_probe)?);
            eval.evaluate(flow, space, y)
        })
        .collect::<Result<_>>()?;
    let near = near_pair_boundaries(space, pairs);
    let mut mono = Vec::new();
    let mut strict_fail = Vec::new();
    let mut candidates = 0;
    let mut max_increase = f64::NEG_INFINITY;
    let mut min_decrease = f64::INFINITY;
    for (i, (&before, &after)) in combined.h_values.iter().zip(&after).enumerate() {
        let u = PointId(i);
        let v = Violation { point: u, h_before: before, h_after: after, near_boundary: near[i] };
        max_increase = max_increase.max(after - before);
        if after > before + MONOTONICITY_TOL {
            mono.push(v.clone());
        }
        if strictly_outside(scr, u) {
            candidates += 1;
            min_decrease = min_decrease.min(before - after);
            if after > before - margin {
                strict_fail.push(v);
            }
        }
    }
    let strict_fraction = if candidates == 0 { 1.0 } else { 1.0 - strict_fail.len() as f64 / candidates as f64 };
    Ok(VerifyReport {
        t_probe,
        margin,
        tolerance: MONOTONICITY_TOL,
        n_points: space.len(),
        n_pairs: combined.n_pairs,
        failures_near_boundary: strict_fail.iter().all(|v| v.near_boundary),
        monotonicity_violations: mono,
        strict_candidates: candidates,
        strictness_failures: strict_fail,
        strict_fraction,
        max_increase,
        min_decrease_off_scr: if candidates == 0 { 0.0 } else { min_decrease },
    })
}

/// Writes `point_index,x,y,l,k,h`.
pub fn write_field_csv(path: &Path, space: &GridSpace, field: &LyapunovField) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "point_index,x,y,l,k,h")?;
    for (i, v) in field.values.iter().enumerate() {
        let p = space.point(PointId(i));
        writeln!(f, "{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", p[0], p[1], v.l, v.k, v.h)?;
    }
    Ok(())
}

/// Writes `point_index,x,y,H`.
pub fn write_combined_csv(path: &Path, space: &GridSpace, combined: &CombinedLyapunov) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "point_index,x,y,H")?;
    for (i, h) in combined.h_values.iter().enumerate() {
        let p = space.point(PointId(i));
        writeln!(f, "{i},{:.16e},{:.16e},{h:.16e}", p[0], p[1])?;
    }
    Ok(())
}
