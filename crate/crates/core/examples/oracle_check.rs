//! Fast return costs, omega budgets and CR against Floyd-Warshall and brute-force search.

use scr_lyapunov::oracle::run_random;

fn main() -> scr_lyapunov::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let report = run_random(0..seeds, 200)?;
    println!(
        "{} graphs, {} nodes: return-cost mismatches {}, omega mismatches {}, CR mismatches {}",
        report.graphs, report.nodes, report.return_cost_mismatches, report.omega_mismatches, report.cr_mismatches
    );
    println!("passed: {}", report.passed());
    Ok(())
}
