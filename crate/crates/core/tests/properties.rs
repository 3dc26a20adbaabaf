use std::sync::OnceLock;

use proptest::prelude::*;

use scr_lyapunov::chaingraph::{build_chain_graph, compute_cr, compute_scr};
use scr_lyapunov::flows::{build_transition, CircleMarkers, FlowModel, RoofParams};
use scr_lyapunov::oracle::{check_graph, random_dyadic_graph, OracleReport};
use scr_lyapunov::space::{Domain, GridSpace, PointId};

const DOMAINS: [Domain; 3] = [Domain::Circle, Domain::UnitSquare, Domain::Roof];

/// Grids shared across proptest cases, by domain and size.
fn grid(domain: Domain, n: usize) -> &'static GridSpace {
    static GRIDS: OnceLock<Vec<(Domain, usize, GridSpace)>> = OnceLock::new();
    let grids = GRIDS.get_or_init(|| {
        DOMAINS
            .iter()
            .flat_map(|&d| [16, 48].map(|n| (d, n, GridSpace::build(d, n).unwrap())))
            .collect()
    });
    &grids.iter().find(|(d, m, _)| *d == domain && *m == n).expect("cached grid").2
}

fn flow_for(domain: Domain) -> FlowModel {
    match domain {
        Domain::Circle => FlowModel::circle(CircleMarkers::default()).unwrap(),
        Domain::UnitSquare => FlowModel::square(),
        Domain::Roof => FlowModel::roof(RoofParams::default()).unwrap(),
    }
}

#[test]
fn metric_axioms_exhaustive_on_small_grids() {
    for domain in DOMAINS {
        let n = if domain == Domain::Circle { 200 } else { 12 };
        let space = GridSpace::build(domain, n).unwrap();
        let ids: Vec<PointId> = space.ids().collect();
        assert!(ids.len() <= 200, "{domain:?} has {} points", ids.len());
        let d = |p: PointId, q: PointId| space.distance(p, q).unwrap();
        for &p in &ids {
            assert_eq!(d(p, p), 0.0);
            for &q in &ids {
                assert_eq!(d(p, q), d(q, p));
                if p != q {
                    assert!(d(p, q) > 0.0);
                }
                for &r in ids.iter().step_by(3) {
                    assert!(d(p, r) <= d(p, q) + d(q, r) + 1e-12, "{domain:?} {p:?} {q:?} {r:?}");
                }
            }
        }
    }
}

#[test]
fn thickening_is_nested() {
    for domain in DOMAINS {
        let space = GridSpace::build(domain, 16).unwrap();
        let set: Vec<PointId> = space.ids().step_by(17).collect();
        let mut prev = space.thicken(&set, 0.0);
        assert!(set.iter().all(|u| prev.binary_search(u).is_ok()));
        for k in 1..8 {
            let next = space.thicken(&set, 0.03 * k as f64);
            assert!(prev.iter().all(|u| next.binary_search(u).is_ok()));
            prev = next;
        }
    }
}

fn domain_strategy() -> impl Strategy<Value = Domain> {
    prop_oneof![Just(Domain::Circle), Just(Domain::UnitSquare), Just(Domain::Roof)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metric_axioms_sampled(domain in domain_strategy(), a in (0.0..1.0, 0.0..1.0), b in (0.0..1.0, 0.0..1.0), c in (0.0..1.0, 0.0..1.0)) {
        let space = grid(domain, 48);
        let (p, q, r) = (space.sample_point(a.0, a.1), space.sample_point(b.0, b.1), space.sample_point(c.0, c.1));
        let d = |x, y| space.dist_points(x, y);
        prop_assert_eq!(d(&p, &p), 0.0);
        prop_assert!((d(&p, &q) - d(&q, &p)).abs() <= 1e-15);
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn semigroup_circle(u in 0.0..1.0f64, s in 0.0..5.0f64, t in 0.0..5.0f64) {
        semigroup(Domain::Circle, u, 0.5, s, t)?;
    }

    #[test]
    fn semigroup_square(u in 0.0..1.0f64, v in 0.0..1.0f64, s in 0.0..5.0f64, t in 0.0..5.0f64) {
        semigroup(Domain::UnitSquare, u, v, s, t)?;
    }

    #[test]
    fn semigroup_roof(u in 0.0..1.0f64, v in 0.0..1.0f64, s in 0.0..5.0f64, t in 0.0..5.0f64) {
        semigroup(Domain::Roof, u, v, s, t)?;
    }
}

fn semigroup(domain: Domain, u: f64, v: f64, s: f64, t: f64) -> Result<(), TestCaseError> {
    let space = grid(domain, 16);
    let flow = flow_for(domain);
    let x = space.sample_point(u, v);
    let direct = flow.flow_map(space, x, s + t).unwrap();
    let mid = space.canonicalize(flow.flow_map(space, x, s).unwrap());
    let composed = flow.flow_map(space, mid, t).unwrap();
    let gap = space.dist_points(&space.canonicalize(direct), &space.canonicalize(composed));
    prop_assert!(gap <= 1e-9, "{:?} x={:?} s={} t={} gap={}", domain, x, s, t, gap);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fast_paths_match_oracles(seed in any::<u64>()) {
        let g = random_dyadic_graph(seed, 40);
        let mut report = OracleReport::default();
        check_graph(&g, &[0.0625, 0.25, 0.75], 0.0, &mut report).unwrap();
        prop_assert!(report.passed(), "{:?}", report);
    }

    #[test]
    fn scr_inside_cr_and_monotone_on_random_graphs(seed in any::<u64>()) {
        let g = random_dyadic_graph(seed, 60);
        let eps = [0.0625, 0.125, 0.25, 0.5];
        let scr: Vec<_> = eps.iter().map(|&e| compute_scr(&g, e, 1e-3).unwrap()).collect();
        for (s, &e) in scr.iter().zip(&eps) {
            let cr = compute_cr(&g, e);
            prop_assert!(s.members.iter().all(|u| cr.binary_search(u).is_ok()));
        }
        for w in scr.windows(2) {
            prop_assert!(w[0].members.iter().all(|&u| w[1].is_member(u)));
        }
    }
}

#[test]
fn scr_monotone_on_grids() {
    for domain in DOMAINS {
        let space = GridSpace::build(domain, 24).unwrap();
        let flow = flow_for(domain);
        let tr = build_transition(&flow, &space, 1.0, 2).unwrap();
        let g = build_chain_graph(&space, &tr, 0.25).unwrap();
        let mut prev: Option<Vec<PointId>> = None;
        for eps in [0.05, 0.1, 0.15, 0.2, 0.25] {
            let scr = compute_scr(&g, eps, space.resolution()).unwrap();
            let cr = compute_cr(&g, eps);
            assert!(scr.members.iter().all(|u| cr.binary_search(u).is_ok()), "{domain:?} eps {eps}");
            if let Some(p) = prev {
                assert!(p.iter().all(|&u| scr.is_member(u)), "{domain:?} eps {eps}");
            }
            prev = Some(scr.members);
        }
    }
}
