//! Stable pairs seeded off the recurrent set and a greedy cover of the
//! non-recurrent points.

use scr_lyapunov::chaingraph::{build_chain_graph, compute_scr};
use scr_lyapunov::flows::{build_transition, FlowModel};
use scr_lyapunov::pairs::{enumerate_pairs, select_cover, PairParams};
use scr_lyapunov::space::{Domain, GridSpace};
use scr_lyapunov::stablesets::{OmegaCache, StableParams};

fn main() -> scr_lyapunov::Result<()> {
    let space = GridSpace::build(Domain::UnitSquare, 16)?;
    let flow = FlowModel::square();
    let tr = build_transition(&flow, &space, 1.0, 4)?;
    let g = build_chain_graph(&space, &tr, 10.0 * space.resolution())?;
    let scr = compute_scr(&g, 0.05, space.resolution())?;
    let cache = OmegaCache::build(&flow, &space, 1.0, 200)?;
    let mut catalog =
        enumerate_pairs(&g, &tr, &flow, &space, &cache, &scr, &PairParams::default(), &StableParams::default())?;
    select_cover(&mut catalog, &scr, &space);
    println!(
        "{} seeds, {} separated, {} distinct pairs, {} selected, residual {}",
        catalog.seeds_tried,
        catalog.separated,
        catalog.pairs.len(),
        catalog.selected.len(),
        catalog.residual.len()
    );
    for p in catalog.selected_pairs() {
        println!(
            "|B| {:>3}  |B_bullet| {:>3}  |B*| {:>3}  eta0 {:?}",
            p.b.len(),
            p.b_bullet.len(),
            p.b_star.len(),
            p.eta0
        );
    }
    Ok(())
}
