use std::collections::HashMap;

use crate::error::Result;
use crate::flows::{FlowModel, Limit};
use crate::space::{GridSpace, Point};

/// Distance to its limit below which a trajectory counts as having arrived.
pub(crate) const LIMIT_TOL: f64 = 1e-13;

/// How a sampled orbit walk ended.
#[derive(Clone, Copy, Debug)]
pub(crate) enum WalkEnd {
    /// The last visited node reached the limit regime.
    Limit { limit: Limit, point: Point },
    /// Grid-valued orbit revisited node `start` at node `at`; nodes
    /// `start..at` form the cycle.
    Cycle { start: usize, at: usize },
    /// The visitor asked to stop.
    Stopped,
    /// `max_steps` nodes were visited without reaching a limit.
    Horizon,
}

/// Walks `x, phi_delta(x), phi_{2 delta}(x), ...`, calling `visit(j, p_j)`
/// for every node until the limit regime, a grid cycle, the visitor's
/// stop request or the horizon. `visit` returns false to stop.
pub(crate) fn walk(
    flow: &FlowModel,
    space: &GridSpace,
    x: Point,
    delta: f64,
    max_steps: usize,
    mut visit: impl FnMut(usize, &Point) -> bool,
) -> Result<WalkEnd> {
    let sampled = flow.sampled_data().is_some();
    let mut seen = HashMap::new();
    let mut p = x;
    for j in 0..=max_steps {
        if sampled {
            let id = space.nearest(&p);
            if let Some(&start) = seen.get(&id) {
                return Ok(WalkEnd::Cycle { start, at: j });
            }
            seen.insert(id, j);
        }
        if !visit(j, &p) {
            return Ok(WalkEnd::Stopped);
        }
        if let Some(limit) = flow.limit_regime(p, LIMIT_TOL) {
            return Ok(WalkEnd::Limit { limit, point: p });
        }
        if j == max_steps {
            break;
        }
        p = space.canonicalize(flow.eval(space, p, delta)?);
    }
    Ok(WalkEnd::Horizon)
}
