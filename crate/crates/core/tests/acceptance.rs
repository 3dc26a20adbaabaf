//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::time::{Duration, Instant};

use scr_lyapunov::chaingraph::{compute_cr, compute_scr};
use scr_lyapunov::flows::{clockwise, CircleMarkers};
use scr_lyapunov::lyapunov::{lyapunov_field, LyapunovParams, PairEvaluator};
use scr_lyapunov::pairs::{enumerate_pairs, select_cover, PairCatalog, PairParams};
use scr_lyapunov::pipeline::{oracle_check, RunConfig, System, SystemKind};
use scr_lyapunov::space::PointId;
use scr_lyapunov::stablesets::{complementary, pair_from_set, OmegaCache, StablePair};

struct Line {
    id: usize,
    pass: bool,
    detail: String,
}

fn line(id: usize, pass: bool, detail: String) -> Line {
    Line { id, pass, detail }
}

fn system(kind: SystemKind, eps: &[f64], out: &std::path::Path) -> System {
    let config = RunConfig {
        epsilon: eps[0],
        extra_epsilons: eps[1..].to_vec(),
        output_dir: out.join(format!("{kind:?}").to_lowercase()),
        ..RunConfig::for_system(kind)
    };
    System::build(&config).expect("system builds")
}

/// Oracle agreement on 100 random graphs and on small grids.
fn oracles() -> Line {
    let clock = Instant::now();
    let report = oracle_check(100, 0).expect("oracle check runs");
    let elapsed = clock.elapsed();
    let nodes = report.random.nodes;
    let grid_diff = report.grids.iter().map(|(_, r)| r.max_abs_diff).fold(0.0, f64::max);
    line(
        1,
        report.passed && report.random.max_abs_diff == 0.0 && elapsed < Duration::from_secs(30),
        format!(
            "{} random graphs ({nodes} nodes) exact, {} grids max diff {grid_diff:.1e}, {elapsed:.1?}",
            report.random.graphs,
            report.grids.len()
        ),
    )
}

/// SCR inside CR and monotone in epsilon on the three built-in systems.
fn inclusion_and_monotonicity(out: &std::path::Path) -> Line {
    let eps = [0.02, 0.05, 0.1];
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [SystemKind::Circle, SystemKind::Square, SystemKind::Roof] {
        let clock = Instant::now();
        let sys = system(kind, &eps, out);
        let res = sys.space.resolution();
        let scr: Vec<_> = eps.iter().map(|&e| compute_scr(&sys.graph, e, res).unwrap()).collect();
        let cr: Vec<_> = eps.iter().map(|&e| compute_cr(&sys.graph, e)).collect();
        let inside = scr.iter().zip(&cr).all(|(s, c)| s.members.iter().all(|u| c.binary_search(u).is_ok()));
        let monotone = scr.windows(2).all(|w| w[0].members.iter().all(|&u| w[1].is_member(u)));
        let elapsed = clock.elapsed();
        pass &= inside && monotone && elapsed < Duration::from_secs(60);
        let sizes: Vec<usize> = scr.iter().map(|s| s.members.len()).collect();
        parts.push(format!("{kind:?} SCR sizes {sizes:?} inside CR {inside} monotone {monotone} {elapsed:.1?}"));
    }
    line(2, pass, parts.join("; "))
}

/// Roof: SCR hugs the periodic strip.
fn roof_strip(out: &std::path::Path) -> Line {
    let sys = system(SystemKind::Roof, &[0.05], out);
    let scr = compute_scr(&sys.graph, 0.05, sys.space.resolution()).unwrap();
    let w = sys.config.roof.strip_half_width;
    let cell = sys.space.cell_size();
    let off_strip = |u: PointId| (sys.space.point(u)[0] - 0.5).abs() - w;
    let off: Vec<PointId> = sys.space.ids().filter(|&u| off_strip(u) > 1e-12).collect();
    let excluded = off.iter().filter(|&&u| !scr.is_member(u)).count() as f64 / off.len() as f64;
    let stray = scr.members.iter().filter(|&&u| off_strip(u) > 2.0 * cell + 1e-12).count();
    line(
        3,
        stray == 0 && excluded >= 0.9,
        format!("{} members, {stray} beyond 2 cells of the strip, {:.1}% of non-strip nodes excluded", scr.members.len(), 100.0 * excluded),
    )
}

/// Square: complementary of the corner cell.
fn square_complementary(out: &std::path::Path) -> Line {
    let sys = system(SystemKind::Square, &[0.05], out);
    let space = &sys.space;
    let cache = OmegaCache::build(&sys.flow, space, 1.0, sys.config.stable.n_orbit).unwrap();
    let b = vec![space.nearest(&[0.0, 0.0])];
    let comp = complementary(space, &cache, &b).unwrap();
    let inside = |u: PointId| comp.b_bullet.binary_search(&u).is_ok();
    let cell = space.cell_size();
    let mut column_ok = true;
    let mut far_mismatch = 0;
    let mut near_mismatch = 0;
    for u in space.ids() {
        let [x, y] = space.point(u);
        if x == 0.0 {
            column_ok &= inside(u) == (y == 1.0);
        } else if !inside(u) {
            if x <= cell + 1e-12 {
                near_mismatch += 1;
            } else {
                far_mismatch += 1;
            }
        }
    }
    line(
        4,
        column_ok && far_mismatch == 0 && comp.nonconverged.is_empty(),
        format!(
            "|B_bullet| = {}, column x=0 only top corner {column_ok}, mismatches within 1 cell {near_mismatch}, beyond {far_mismatch}",
            comp.b_bullet.len()
        ),
    )
}

/// Circle: the pair around the closed arc AE.
fn circle_pair(out: &std::path::Path) -> Line {
    let sys = system(SystemKind::Circle, &[0.05], out);
    let (space, flow) = (&sys.space, &sys.flow);
    let m: CircleMarkers = sys.config.markers;
    let on_arc = |from: f64, to: f64, u: PointId| clockwise(from, space.point(u)[0]) <= clockwise(from, to) + 1e-12;
    let b: Vec<PointId> = space.ids().filter(|&u| on_arc(m.a, m.e, u)).collect();
    let cache = OmegaCache::build(flow, space, 1.0, sys.config.stable.n_orbit).unwrap();
    let pair = pair_from_set(flow, space, &sys.transition, &cache, &b, &sys.config.stable).unwrap().expect("pair");
    let params = LyapunovParams::default();
    let eval = PairEvaluator::new(flow, space, &pair, 1.0, &params).unwrap();
    let h = lyapunov_field(flow, space, &eval, 0).unwrap().h();
    let zero_on_b = pair.b.iter().all(|u| h[u.0].abs() <= 1e-6);
    let one_tol = (-params.s_max).exp() + 1e-6;
    let one_on_star = !pair.b_star.is_empty() && pair.b_star.iter().all(|u| (h[u.0] - 1.0).abs() <= one_tol);
    let mut arc: Vec<PointId> = space.ids().filter(|&u| on_arc(m.e, m.b, u)).collect();
    arc.sort_by(|p, q| clockwise(m.e, space.point(*p)[0]).total_cmp(&clockwise(m.e, space.point(*q)[0])));
    let increasing = arc.windows(2).all(|w| h[w[0].0] < h[w[1].0]);
    let lo = pair.b_bullet.iter().map(|u| h[u.0]).fold(f64::INFINITY, f64::min);
    let hi = pair.b_bullet.iter().map(|u| h[u.0]).fold(f64::NEG_INFINITY, f64::max);
    let spans = lo <= 0.05 && hi >= 0.95;
    line(
        5,
        zero_on_b && one_on_star && increasing && spans,
        format!(
            "h=0 on B {zero_on_b}, h=1 on B* ({} pts) {one_on_star}, increasing on {} arc points {increasing}, h on B_bullet spans [{lo:.4}, {hi:.4}] (need [0.05, 0.95]; arc EB has {} cells, so the smallest nonzero grid value is 1/{})",
            pair.b_star.len(),
            arc.len(),
            arc.len() - 1,
            arc.len() - 1
        ),
    )
}

/// Full pipeline on one system, shared by the last three criteria.
struct Run {
    kind: SystemKind,
    sys: System,
    catalog: PairCatalog,
    passed: bool,
    detail: String,
}

fn full_runs(out: &std::path::Path) -> Vec<Run> {
    [SystemKind::Circle, SystemKind::Square, SystemKind::Roof]
        .into_iter()
        .map(|kind| {
            let sys = system(kind, &[0.05], out);
            sys.write_metadata().unwrap();
            sys.stage_scr().unwrap();
            let catalog = sys.stage_pairs().unwrap();
            sys.stage_lyapunov().unwrap();
            let r = sys.stage_verify().unwrap();
            let detail = format!(
                "{kind:?}: {} pairs, {} monotonicity violations, strict {:.4} of {} at margin {:.1e}",
                r.n_pairs,
                r.monotonicity_violations.len(),
                r.strict_fraction,
                r.strict_candidates,
                r.margin
            );
            Run { kind, passed: r.passed(), detail, sys, catalog }
        })
        .collect()
}

fn main_theorem(runs: &[Run]) -> Line {
    let pass = runs.iter().all(|r| r.passed);
    line(6, pass, runs.iter().map(|r| r.detail.as_str()).collect::<Vec<_>>().join("; "))
}

fn doubled_radii(radii: &[f64]) -> Vec<f64> {
    radii.iter().flat_map(|&r| [r, r * std::f64::consts::SQRT_2]).collect()
}

fn cover(runs: &[Run]) -> Line {
    let mut pass = true;
    let mut parts = Vec::new();
    for run in runs {
        let residual = run.catalog.residual.len();
        let unsound: usize = run.catalog.soundness_violations.iter().map(Vec::len).sum();
        let mut part = format!(
            "{:?}: {} selected of {}, residual {residual}, members outside B u B_bullet u band {unsound}",
            run.kind,
            run.catalog.selected.len(),
            run.catalog.pairs.len()
        );
        match run.kind {
            SystemKind::Roof if residual > 0 => {
                let witnesses: Vec<_> = run.catalog.residual.iter().take(5).map(|u| run.sys.space.point(*u)).collect();
                let sys = &run.sys;
                let scr = compute_scr(&sys.graph, sys.config.epsilon, sys.space.resolution()).unwrap();
                let cache = OmegaCache::build(&sys.flow, &sys.space, 1.0, sys.config.stable.n_orbit).unwrap();
                let params = PairParams { radii: doubled_radii(&sys.config.pairs.radii), ..sys.config.pairs.clone() };
                let mut more = enumerate_pairs(
                    &sys.graph,
                    &sys.transition,
                    &sys.flow,
                    &sys.space,
                    &cache,
                    &scr,
                    &params,
                    &sys.config.stable,
                )
                .unwrap();
                select_cover(&mut more, &scr, &sys.space);
                pass &= more.residual.len() < residual;
                part += &format!(", witnesses {witnesses:?}, residual with doubled radii {}", more.residual.len());
            }
            SystemKind::Roof => {}
            _ => pass &= residual == 0,
        }
        parts.push(part);
    }
    line(7, pass, parts.join("; "))
}

fn field_h(run: &Run, pair: &StablePair, params: &LyapunovParams) -> Vec<f64> {
    let sys = &run.sys;
    let eval = PairEvaluator::new(&sys.flow, &sys.space, pair, sys.config.t_step, params).unwrap();
    lyapunov_field(&sys.flow, &sys.space, &eval, 0).unwrap().h()
}

fn quadrature(runs: &[Run]) -> Line {
    let mut pass = true;
    let mut worst_ratio = 0.0f64;
    let mut worst_tail = 0.0f64;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut checked = 0;
    for run in runs {
        let sys = &run.sys;
        let base = sys.config.lyapunov.clone();
        let halved = LyapunovParams { quad_subdivision: base.quad_subdivision * 2, ..base.clone() };
        let longer = LyapunovParams { s_max: base.s_max * 2.0, ..base.clone() };
        let tail = (-base.s_max).exp();
        for pair in run.catalog.selected_pairs() {
            let eval = PairEvaluator::new(&sys.flow, &sys.space, &pair, sys.config.t_step, &base).unwrap();
            let field = lyapunov_field(&sys.flow, &sys.space, &eval, 0).unwrap();
            let h_half = field_h(run, &pair, &halved);
            let h_long = field_h(run, &pair, &longer);
            for (i, v) in field.values.iter().enumerate() {
                let d_half = (v.h - h_half[i]).abs();
                let d_long = (v.h - h_long[i]).abs();
                pass &= d_half <= v.quad_bound + 1e-12 && d_long <= tail + 1e-15;
                if v.quad_bound > 1e-9 {
                    worst_ratio = worst_ratio.max(d_half / v.quad_bound);
                }
                worst_excess = worst_excess.max(d_half - v.quad_bound);
                worst_tail = worst_tail.max(d_long);
                checked += 1;
            }
        }
    }
    line(
        8,
        pass,
        format!(
            "{checked} point values; halving the step changes h by at most {worst_ratio:.3} of the bound (largest excess over the bound {worst_excess:.1e}); doubling S_max by at most {worst_tail:.2e} (bound {:.2e})",
            (-20f64).exp()
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path();
    let mut lines = Vec::new();
    let mut emit = |l: Line| {
        println!("criterion {} {}: {}", l.id, if l.pass { "PASS" } else { "FAIL" }, l.detail);
        lines.push(l.pass);
    };
    emit(oracles());
    emit(inclusion_and_monotonicity(out));
    emit(roof_strip(out));
    emit(square_complementary(out));
    emit(circle_pair(out));
    let runs = full_runs(out);
    emit(main_theorem(&runs));
    emit(cover(&runs));
    emit(quadrature(&runs));
    let failed = lines.iter().filter(|p| !**p).count();
    println!("acceptance: {} of {} criteria pass", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
