//! A flow known only through its grid images: the circle's transition table
//! is written to CSV, read back, and gives the same recurrent set.

use scr_lyapunov::chaingraph::{build_chain_graph, compute_scr};
use scr_lyapunov::flows::{build_transition, read_sampled_csv, write_sampled_csv, CircleMarkers, FlowModel};
use scr_lyapunov::space::{Domain, GridSpace};

fn main() -> scr_lyapunov::Result<()> {
    let space = GridSpace::build(Domain::Circle, 128)?;
    let exact = build_transition(&FlowModel::circle(CircleMarkers::default())?, &space, 1.0, 4)?;
    let path = std::env::temp_dir().join("scrl_circle_images.csv");
    write_sampled_csv(&path, &exact)?;
    let sampled = FlowModel::sampled(read_sampled_csv(&path, space.len(), 1.0)?)?;
    let tr = build_transition(&sampled, &space, 1.0, 4)?;
    let scr_exact = compute_scr(&build_chain_graph(&space, &exact, 0.1)?, 0.05, space.resolution())?;
    let scr_sampled = compute_scr(&build_chain_graph(&space, &tr, 0.1)?, 0.05, space.resolution())?;
    println!("table {} ({} rows)", path.display(), 4 * space.len());
    println!("SCR exact {} / sampled {}, identical {}", scr_exact.members.len(), scr_sampled.members.len(), scr_exact.members == scr_sampled.members);
    std::fs::remove_file(&path)?;
    Ok(())
}
