//! Lyapunov function of the pair whose stable set is the closed arc AE on
//! the circle: zero on B, one on B*, increasing along the arc from E to B.

use scr_lyapunov::flows::{build_transition, clockwise, CircleMarkers, FlowModel};
use scr_lyapunov::lyapunov::{lyapunov_field, LyapunovParams, PairEvaluator};
use scr_lyapunov::space::{Domain, GridSpace, PointId};
use scr_lyapunov::stablesets::{pair_from_set, OmegaCache, StableParams};

fn main() -> scr_lyapunov::Result<()> {
    let markers = CircleMarkers::default();
    let space = GridSpace::build(Domain::Circle, 256)?;
    let flow = FlowModel::circle(markers)?;
    let tr = build_transition(&flow, &space, 1.0, 1)?;
    let cache = OmegaCache::build(&flow, &space, 1.0, 200)?;
    let on_arc = |from: f64, to: f64, theta: f64| clockwise(from, theta) <= clockwise(from, to) + 1e-12;
    let b: Vec<PointId> = space.ids().filter(|&u| on_arc(markers.a, markers.e, space.point(u)[0])).collect();
    let params = StableParams::default();
    let pair = pair_from_set(&flow, &space, &tr, &cache, &b, &params)?.expect("pair");
    println!(
        "|B| = {}, |B_bullet| = {}, |B*| = {}, eta0 = {:?}, R = {}",
        pair.b.len(),
        pair.b_bullet.len(),
        pair.b_star.len(),
        pair.eta0,
        pair.r
    );
    let eval = PairEvaluator::new(&flow, &space, &pair, 1.0, &LyapunovParams::default())?;
    let field = lyapunov_field(&flow, &space, &eval, 0)?;
    let h = field.h();
    let max_on_b = pair.b.iter().map(|u| h[u.0]).fold(0.0, f64::max);
    let min_on_star = pair.b_star.iter().map(|u| h[u.0]).fold(1.0, f64::min);
    println!("max h on B = {max_on_b:e}, min h on B* = {min_on_star}");
    let arc: Vec<PointId> = space.ids().filter(|&u| on_arc(markers.e, markers.b, space.point(u)[0])).collect();
    let mut arc = arc;
    arc.sort_by(|p, q| clockwise(markers.e, space.point(*p)[0]).total_cmp(&clockwise(markers.e, space.point(*q)[0])));
    println!("h along arc EB:");
    for u in &arc {
        let theta = space.point(*u)[0];
        let de = clockwise(markers.e, theta);
        let db = clockwise(theta, markers.b);
        println!("  theta {theta:.5}  h {:.6}  d(x,E)/(d(x,E)+d(x,B)) {:.6}", h[u.0], de / (de + db));
    }
    let bullet_h: Vec<f64> = pair.b_bullet.iter().map(|u| h[u.0]).collect();
    println!(
        "h on B_bullet spans [{:.4}, {:.4}]",
        bullet_h.iter().copied().fold(1.0, f64::min),
        bullet_h.iter().copied().fold(0.0, f64::max)
    );
    Ok(())
}
