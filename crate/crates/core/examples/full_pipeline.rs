//! Runs every stage on one built-in system and prints a summary.
//!
//! `cargo run --release --example full_pipeline -- square`

use std::time::Instant;

use scr_lyapunov::pipeline::{System, SystemKind, RunConfig};

fn main() -> scr_lyapunov::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "circle".into());
    let system: SystemKind = serde_json::from_value(serde_json::Value::String(name.clone()))?;
    let dir = std::env::temp_dir().join(format!("scrl_full_{name}"));
    let config = RunConfig { output_dir: dir.clone(), ..RunConfig::for_system(system) };
    let clock = Instant::now();
    let sys = System::build(&config)?;
    println!("{name}: {} points, {} edges ({:.1?})", sys.space.len(), sys.graph.edge_count(), clock.elapsed());
    sys.write_metadata()?;
    let scr = sys.stage_scr()?;
    sys.stage_cr()?;
    let compare = sys.stage_compare()?;
    println!("SCR members {}, compare passed {} ({:.1?})", scr.runs[0].members.len(), compare.passed, clock.elapsed());
    let catalog = sys.stage_pairs()?;
    println!(
        "pairs: {} seeds, {} separated, {} unique, selected {:?}, residual {} ({:.1?})",
        catalog.seeds_tried,
        catalog.separated,
        catalog.pairs.len(),
        catalog.selected,
        catalog.residual.len(),
        clock.elapsed()
    );
    let lyap = sys.stage_lyapunov()?;
    println!(
        "lyapunov: quad bounds {:?}, uncertified {:?} ({:.1?})",
        lyap.max_quad_bound,
        lyap.uncertified.iter().map(Vec::len).collect::<Vec<_>>(),
        clock.elapsed()
    );
    let report = sys.stage_verify()?;
    println!(
        "verify: {} monotonicity violations, strict fraction {:.4} over {} points, remainder near boundaries {}, passed {} ({:.1?})",
        report.monotonicity_violations.len(),
        report.strict_fraction,
        report.strict_candidates,
        report.failures_near_boundary,
        report.passed(),
        clock.elapsed()
    );
    println!("artifacts in {}", dir.display());
    Ok(())
}
