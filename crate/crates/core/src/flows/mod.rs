//! Forward-time flow evaluators.
//!
//! The example systems are given only by their phase portraits, so each one
//! fixes a concrete speed profile:
//!
//! * circle: angular speed equal to the distance to the fixed set, moving
//!   clockwise (increasing angle). Between two consecutive fixed points the
//!   motion is an exponential escape followed by an exponential approach,
//!   solved in closed form.
//! * north-south square: each vertical fiber follows `y' = -y (1 - y)`.
//! * roof: vertical unit-speed motion on each fiber circle of length
//!   `tau(x)`; inside the central strip `|x - 1/2| <= w` every orbit is
//!   periodic with period `tau(x)`, outside it the abscissa relaxes towards
//!   the strip as `u' = -a (u - w)` with `u = |x - 1/2|`.
//!
//! Orbits are computed from these closed forms, with a Gauss–Kronrod rule
//! for the phase integral of the roof's inflow region.

mod transition;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::space::{roof_height, Domain, GridSpace, Point, PointId};

pub use transition::{build_transition, read_sampled_csv, write_sampled_csv, GridTransition};

/// Marker angles on the circle as fractions of the circumference, measured
/// clockwise. The closed arc from `a` clockwise to `b` is fixed, `e` lies
/// strictly inside it, and `c`, `d` are isolated fixed points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CircleMarkers {
    pub a: f64,
    pub e: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for CircleMarkers {
    fn default() -> Self {
        Self { b: 0.0, c: 0.375, d: 0.625, a: 0.875, e: 0.9375 }
    }
}

/// Length of the clockwise arc from `from` to `to`.
pub fn clockwise(from: f64, to: f64) -> f64 {
    (to - from).rem_euclid(1.0)
}

impl CircleMarkers {
    pub fn validate(&self) -> Result<()> {
        for v in [self.a, self.e, self.b, self.c, self.d] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("circle marker {v} not in [0,1)")));
            }
        }
        let arc = clockwise(self.a, self.b);
        let inside = |v: f64| clockwise(self.a, v) <= arc;
        if !(clockwise(self.a, self.e) > 0.0 && clockwise(self.a, self.e) < arc) {
            return Err(Error::InvalidParameter("marker E must lie strictly inside arc AB".into()));
        }
        if inside(self.c) || inside(self.d) || self.c == self.d {
            return Err(Error::InvalidParameter("fixed points C, D must be distinct and off arc AB".into()));
        }
        Ok(())
    }

    /// Fixed components as `(start, end)` clockwise intervals; `end` may exceed 1.
    fn components(&self) -> [(f64, f64); 3] {
        [
            (self.a, self.a + clockwise(self.a, self.b)),
            (self.c, self.c),
            (self.d, self.d),
        ]
    }

    pub fn is_fixed(&self, theta: f64) -> bool {
        self.components().iter().any(|&(s, e)| clockwise(s, theta) <= e - s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoofParams {
    /// Half width of the central strip of periodic orbits.
    pub strip_half_width: f64,
    /// Exponential rate at which orbits outside the strip approach it.
    pub inflow_rate: f64,
    /// Speed along each fiber circle.
    pub vertical_speed: f64,
}

impl Default for RoofParams {
    fn default() -> Self {
        Self { strip_half_width: 0.1, inflow_rate: 5.0, vertical_speed: 1.0 }
    }
}

/// Grid-projected images `phi_{mT}` of a flow known only on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFlow {
    pub t_step: f64,
    /// `images[m - 1][u]` is the grid image of `u` after time `m T`.
    pub images: Vec<Vec<PointId>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FlowKind {
    Identity,
    CircleArc { markers: CircleMarkers },
    NorthSouthSquare,
    Roof { params: RoofParams },
    CustomSampled,
}

/// Long-run regime of a trajectory once it is within tolerance of its limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Limit {
    /// The trajectory stays put.
    Stationary,
    /// The trajectory runs around a periodic orbit through `base`.
    Periodic { period: f64, base: Point },
}

/// Phase samples used to bracket an extremum over a periodic orbit.
const ORBIT_PHASES: usize = 64;

#[derive(Clone, Debug)]
pub struct FlowModel {
    kind: FlowKind,
    sampled: Option<SampledFlow>,
}

impl FlowModel {
    pub fn identity() -> Self {
        Self { kind: FlowKind::Identity, sampled: None }
    }

    pub fn circle(markers: CircleMarkers) -> Result<Self> {
        markers.validate()?;
        Ok(Self { kind: FlowKind::CircleArc { markers }, sampled: None })
    }

    pub fn square() -> Self {
        Self { kind: FlowKind::NorthSouthSquare, sampled: None }
    }

    pub fn roof(params: RoofParams) -> Result<Self> {
        if !(params.strip_half_width > 0.0 && params.strip_half_width < 0.5)
            || !(params.inflow_rate > 0.0)
            || !(params.vertical_speed > 0.0)
        {
            return Err(Error::InvalidParameter(format!("bad roof parameters {params:?}")));
        }
        Ok(Self { kind: FlowKind::Roof { params }, sampled: None })
    }

    pub fn sampled(flow: SampledFlow) -> Result<Self> {
        if flow.images.is_empty() || !(flow.t_step > 0.0) {
            return Err(Error::InvalidParameter("sampled flow needs T > 0 and at least one image map".into()));
        }
        Ok(Self { kind: FlowKind::CustomSampled, sampled: Some(flow) })
    }

    pub fn kind(&self) -> &FlowKind {
        &self.kind
    }

    pub fn sampled_data(&self) -> Option<&SampledFlow> {
        self.sampled.as_ref()
    }

    /// Domain the built-in system lives on; `None` for identity and sampled flows.
    pub fn native_domain(&self) -> Option<Domain> {
        match self.kind {
            FlowKind::CircleArc { .. } => Some(Domain::Circle),
            FlowKind::NorthSouthSquare => Some(Domain::UnitSquare),
            FlowKind::Roof { .. } => Some(Domain::Roof),
            _ => None,
        }
    }

    /// Human-readable speed profile, recorded in run metadata.
    pub fn profile(&self) -> String {
        match &self.kind {
            FlowKind::Identity => "identity: every point fixed".into(),
            FlowKind::CircleArc { markers } => format!(
                "circle: theta' = dist(theta, fixed set), clockwise; fixed arc [A={}, B={}] with E={}, fixed points C={}, D={}",
                markers.a, markers.b, markers.e, markers.c, markers.d
            ),
            FlowKind::NorthSouthSquare => "square: x' = 0, y' = -y (1 - y)".into(),
            FlowKind::Roof { params } => format!(
                "roof: unit-speed phase motion on fibers, speed {}; strip |x-1/2| <= {} periodic; outside u' = -{} (u - {})",
                params.vertical_speed, params.strip_half_width, params.inflow_rate, params.strip_half_width
            ),
            FlowKind::CustomSampled => "custom: grid-projected sampled images".into(),
        }
    }

    /// `phi_t(x)` with domain and time validation.
    pub fn flow_map(&self, space: &GridSpace, x: Point, t: f64) -> Result<Point> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        if !space.contains(&x) {
            return Err(Error::OutsideDomain(x[0], x[1]));
        }
        if let Some(domain) = self.native_domain() {
            if domain != space.domain() {
                return Err(Error::InvalidParameter(format!(
                    "flow lives on {domain:?} but the grid is {:?}",
                    space.domain()
                )));
            }
        }
        self.eval(space, x, t)
    }

    /// `phi_t(x)` without input validation; `t >= 0` and `x` in the domain.
    pub fn eval(&self, space: &GridSpace, x: Point, t: f64) -> Result<Point> {
        Ok(match &self.kind {
            FlowKind::Identity => x,
            FlowKind::CircleArc { markers } => [circle_flow(markers, x[0], t), 0.0],
            FlowKind::NorthSouthSquare => [x[0], logistic_decay(x[1], t)],
            FlowKind::Roof { params } => roof_flow(params, x, t),
            FlowKind::CustomSampled => self.eval_sampled(space, x, t)?,
        })
    }

    /// Detects whether the forward orbit of `x` has (to within `tol`)
    /// reached its limit: a fixed point or a periodic orbit. The periodic
    /// base point depends only on the orbit, not on where `x` sits on it.
    pub fn limit_regime(&self, x: Point, tol: f64) -> Option<Limit> {
        match &self.kind {
            FlowKind::Identity => Some(Limit::Stationary),
            FlowKind::CircleArc { markers } => {
                let ahead = markers.components().iter().map(|&(s, _)| clockwise(x[0], s)).fold(f64::INFINITY, f64::min);
                (markers.is_fixed(x[0]) || ahead <= tol).then_some(Limit::Stationary)
            }
            FlowKind::NorthSouthSquare => (x[1] <= tol || x[1] == 1.0).then_some(Limit::Stationary),
            FlowKind::Roof { params } => {
                let u = (x[0] - 0.5).abs();
                (u <= params.strip_half_width + tol).then(|| Limit::Periodic {
                    period: roof_height(x[0]) / params.vertical_speed,
                    base: [x[0], 0.0],
                })
            }
            FlowKind::CustomSampled => None,
        }
    }

    /// Largest (or smallest, with `maximize = false`) value of `f` over the
    /// limit orbit: sampled at fixed phases from the base point, then refined
    /// by golden-section search around the best sample.
    pub fn orbit_extremum(
        &self,
        space: &GridSpace,
        at: Point,
        limit: Limit,
        maximize: bool,
        f: impl Fn(&Point) -> f64,
    ) -> Result<f64> {
        let sign = if maximize { 1.0 } else { -1.0 };
        match limit {
            Limit::Stationary => Ok(f(&at)),
            Limit::Periodic { period, base } => {
                let g = |theta: f64| -> Result<f64> {
                    let p = space.canonicalize(self.eval(space, base, theta * period)?);
                    Ok(sign * f(&p))
                };
                let m = ORBIT_PHASES;
                let mut best = (f64::NEG_INFINITY, 0usize);
                for i in 0..m {
                    let v = g(i as f64 / m as f64)?;
                    if v > best.0 {
                        best = (v, i);
                    }
                }
                let (mut lo, mut hi) = ((best.1 as f64 - 1.0) / m as f64, (best.1 as f64 + 1.0) / m as f64);
                let phi = (5f64.sqrt() - 1.0) / 2.0;
                let mut x1 = hi - phi * (hi - lo);
                let mut x2 = lo + phi * (hi - lo);
                let (mut f1, mut f2) = (g(x1.rem_euclid(1.0))?, g(x2.rem_euclid(1.0))?);
                let mut top = best.0.max(f1).max(f2);
                for _ in 0..40 {
                    if f1 < f2 {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = lo + phi * (hi - lo);
                        f2 = g(x2.rem_euclid(1.0))?;
                        top = top.max(f2);
                    } else {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = hi - phi * (hi - lo);
                        f1 = g(x1.rem_euclid(1.0))?;
                        top = top.max(f1);
                    }
                }
                Ok(sign * top)
            }
        }
    }

    fn eval_sampled(&self, space: &GridSpace, x: Point, t: f64) -> Result<Point> {
        let flow = self.sampled.as_ref().expect("sampled data");
        let id = space.nearest(&x);
        if space.dist_point_grid(&space.probe(x), id) > 1e-12 {
            return Err(Error::Unsampled(format!("({}, {}) is not a grid point", x[0], x[1])));
        }
        let steps = t / flow.t_step;
        let k = steps.round();
        if (steps - k).abs() > 1e-9 {
            return Err(Error::Unsampled(format!("t = {t} is not a multiple of T = {}", flow.t_step)));
        }
        let mut remaining = k as usize;
        let mut cur = id;
        let m_max = flow.images.len();
        while remaining > 0 {
            let m = remaining.min(m_max);
            cur = flow.images[m - 1][cur.0];
            remaining -= m;
        }
        Ok(space.point(cur))
    }
}

fn circle_flow(markers: &CircleMarkers, theta: f64, t: f64) -> f64 {
    if t == 0.0 || markers.is_fixed(theta) {
        return theta;
    }
    let comps = markers.components();
    let back = comps.iter().map(|&(_, e)| clockwise(e, theta)).fold(f64::INFINITY, f64::min);
    let ahead = comps.iter().map(|&(s, _)| clockwise(theta, s)).fold(f64::INFINITY, f64::min);
    let lo = theta - back;
    let gap = back + ahead;
    let half = gap / 2.0;
    let u = back;
    let u_t = if u < half {
        let t_mid = (half / u).ln();
        if t <= t_mid {
            u * t.exp()
        } else {
            gap - half * (-(t - t_mid)).exp()
        }
    } else {
        gap - (gap - u) * (-t).exp()
    };
    let out = (lo + u_t).rem_euclid(1.0);
    if out >= 1.0 {
        0.0
    } else {
        out
    }
}

/// Solution of `y' = -y (1 - y)` at time `t`.
fn logistic_decay(y: f64, t: f64) -> f64 {
    if y == 0.0 || y == 1.0 {
        return y;
    }
    let e = (-t).exp();
    y * e / (1.0 - y + y * e)
}

fn roof_flow(params: &RoofParams, x: Point, t: f64) -> Point {
    let w = params.strip_half_width;
    let a = params.inflow_rate;
    let v = params.vertical_speed;
    let tau0 = roof_height(x[0]);
    let phase0 = x[1] / tau0;
    let u = (x[0] - 0.5).abs();
    let (x_new, advance) = if u <= w {
        (x[0], v * t / tau0)
    } else {
        let excess = u - w;
        let u_t = w + excess * (-a * t).exp();
        let side = if x[0] > 0.5 { 1.0 } else { -1.0 };
        (0.5 + side * u_t, v * roof_phase_integral(w, excess, a, t))
    };
    let tau1 = roof_height(x_new);
    let mut phase = (phase0 + advance).rem_euclid(1.0);
    if phase >= 1.0 {
        phase = 0.0;
    }
    [x_new, phase * tau1]
}

/// `int_0^t ds / tau(1/2 + w + excess e^{-a s})`.
fn roof_phase_integral(w: f64, excess: f64, a: f64, t: f64) -> f64 {
    let tau_w = w.sqrt() + crate::space::ROOF_OFFSET;
    let height = |u: f64| u.sqrt() + crate::space::ROOF_OFFSET;
    // substitute r = e^{-a s}; the integrand below is smooth on [0, 1]
    let lower = (-a * t).exp();
    let f = |r: f64| {
        if r == 0.0 {
            let slope = 0.5 / w.sqrt();
            -slope * excess / (tau_w * tau_w)
        } else {
            let tau = height(w + excess * r);
            (tau_w - tau) / (tau * tau_w * r)
        }
    };
    t / tau_w + quad::integrate(f, lower, 1.0, 1e-14) / a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_space() -> GridSpace {
        GridSpace::build(Domain::Circle, 256).unwrap()
    }

    #[test]
    fn circle_fixed_points_stay() {
        let s = circle_space();
        let f = FlowModel::circle(CircleMarkers::default()).unwrap();
        for &theta in &[0.375, 0.625, 0.875, 0.9375, 0.0, 0.95] {
            for &t in &[0.0, 0.5, 3.0, 100.0] {
                assert_eq!(f.flow_map(&s, [theta, 0.0], t).unwrap()[0], theta);
            }
        }
    }

    #[test]
    fn circle_moves_clockwise_towards_next_fixed_point() {
        let s = circle_space();
        let f = FlowModel::circle(CircleMarkers::default()).unwrap();
        let x = [0.01, 0.0];
        let y = f.flow_map(&s, x, 1.0).unwrap();
        assert!(y[0] > x[0]);
        let far = f.flow_map(&s, x, 60.0).unwrap();
        assert!((far[0] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn square_segments_fixed_and_interior_drains() {
        let s = GridSpace::build(Domain::UnitSquare, 16).unwrap();
        let f = FlowModel::square();
        assert_eq!(f.flow_map(&s, [0.3, 1.0], 7.0).unwrap(), [0.3, 1.0]);
        assert_eq!(f.flow_map(&s, [0.3, 0.0], 7.0).unwrap(), [0.3, 0.0]);
        let mut prev = 0.5;
        for k in 1..60 {
            let y = f.flow_map(&s, [0.3, 0.5], k as f64).unwrap()[1];
            assert!(y < prev);
            prev = y;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn rejects_negative_time_and_outside_points() {
        let s = circle_space();
        let f = FlowModel::circle(CircleMarkers::default()).unwrap();
        assert!(matches!(f.flow_map(&s, [0.1, 0.0], -1.0), Err(Error::NegativeTime(_))));
        assert!(matches!(f.flow_map(&s, [1.5, 0.0], 1.0), Err(Error::OutsideDomain(..))));
        let sq = GridSpace::build(Domain::UnitSquare, 8).unwrap();
        assert!(f.flow_map(&sq, [0.1, 0.0], 1.0).is_err());
    }

    #[test]
    fn roof_strip_is_periodic() {
        let s = GridSpace::build(Domain::Roof, 16).unwrap();
        let f = FlowModel::roof(RoofParams::default()).unwrap();
        let x = [0.52, 0.05];
        let period = roof_height(0.52);
        let y = f.flow_map(&s, x, 3.0 * period).unwrap();
        assert!(s.dist_points(&x, &y) < 1e-12);
    }

    #[test]
    fn roof_outside_approaches_strip() {
        let s = GridSpace::build(Domain::Roof, 16).unwrap();
        let f = FlowModel::roof(RoofParams::default()).unwrap();
        let y = f.flow_map(&s, [0.95, 0.3], 10.0).unwrap();
        assert!((y[0] - 0.6).abs() < 1e-15 + 0.35 * (-50.0f64).exp());
        assert!(s.contains(&y));
    }

    #[test]
    fn markers_validated() {
        let bad = CircleMarkers { e: 0.5, ..CircleMarkers::default() };
        assert!(FlowModel::circle(bad).is_err());
    }
}
