//! SCR and CR on the circle as the chain budget grows.

use scr_lyapunov::chaingraph::{build_chain_graph, compute_cr, compute_scr};
use scr_lyapunov::flows::{build_transition, CircleMarkers, FlowModel};
use scr_lyapunov::space::{Domain, GridSpace};

fn main() -> scr_lyapunov::Result<()> {
    let space = GridSpace::build(Domain::Circle, 256)?;
    let flow = FlowModel::circle(CircleMarkers::default())?;
    let tr = build_transition(&flow, &space, 1.0, 4)?;
    let eps = [0.01, 0.02, 0.05, 0.1, 0.2];
    let g = build_chain_graph(&space, &tr, 0.2)?;
    let mut prev = Vec::new();
    for e in eps {
        let scr = compute_scr(&g, e, space.resolution())?;
        let cr = compute_cr(&g, e);
        let inside = scr.members.iter().all(|u| cr.binary_search(u).is_ok());
        let grows = prev.iter().all(|&u| scr.is_member(u));
        println!(
            "eps {e:<5} SCR {:>3}  CR {:>3}  band {:>2}  SCR in CR {inside}  contains previous {grows}",
            scr.members.len(),
            cr.len(),
            scr.warning_band.len()
        );
        prev = scr.members;
    }
    Ok(())
}
