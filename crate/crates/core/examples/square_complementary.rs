//! Complementary of the corner cell under the north-south flow on the square.

use scr_lyapunov::flows::{build_transition, FlowModel};
use scr_lyapunov::space::{Domain, GridSpace, PointId};
use scr_lyapunov::stablesets::{complementary, OmegaCache};

fn main() -> scr_lyapunov::Result<()> {
    let n = 32;
    let space = GridSpace::build(Domain::UnitSquare, n)?;
    let flow = FlowModel::square();
    let tr = build_transition(&flow, &space, 1.0, 1)?;
    let cache = OmegaCache::build(&flow, &space, tr.t_step(), 200)?;
    let b = vec![space.nearest(&[0.0, 0.0])];
    let comp = complementary(&space, &cache, &b)?;
    let in_bullet = |id: PointId| comp.b_bullet.binary_search(&id).is_ok();
    let left: Vec<String> = space
        .ids()
        .filter(|&id| space.point(id)[0] == 0.0)
        .map(|id| if in_bullet(id) { "o".to_string() } else { ".".to_string() })
        .collect();
    println!("left column bottom to top (o = in complementary): {}", left.join(""));
    let interior_missing = space.ids().filter(|&id| space.point(id)[0] > 0.0 && !in_bullet(id)).count();
    println!("points with x > 0 missing from the complementary: {interior_missing}");
    println!("non-converged omega-limits: {}", comp.nonconverged.len());
    Ok(())
}
