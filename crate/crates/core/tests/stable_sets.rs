use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scr_lyapunov::chaingraph::build_chain_graph;
use scr_lyapunov::flows::{build_transition, clockwise, CircleMarkers, FlowModel, GridTransition};
use scr_lyapunov::space::{Domain, GridSpace, PointId};
use scr_lyapunov::stablesets::{
    build_strongly_stable, complementary, nested_neighborhoods, omega_limit_of_set, pair_from_set, OmegaCache,
    StableParams,
};

/// Iterates the set map `n` times; on an `n`-point grid the sequence has settled by then.
fn naive_omega(tr: &GridTransition, u: &[PointId]) -> Vec<PointId> {
    let mut s = u.to_vec();
    for _ in 0..tr.len() {
        s = tr.image_of_set(&s);
    }
    s
}

#[test]
fn omega_of_set_matches_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (domain, flow) in [
        (Domain::Circle, FlowModel::circle(CircleMarkers::default()).unwrap()),
        (Domain::UnitSquare, FlowModel::square()),
    ] {
        let space = GridSpace::build(domain, if domain == Domain::Circle { 64 } else { 12 }).unwrap();
        let tr = build_transition(&flow, &space, 1.0, 1).unwrap();
        for _ in 0..20 {
            let u: Vec<PointId> = space.ids().filter(|_| rng.gen_bool(0.2)).collect();
            if u.is_empty() {
                continue;
            }
            assert_eq!(omega_limit_of_set(&tr, &u).unwrap(), naive_omega(&tr, &u), "{domain:?}");
        }
    }
}

#[test]
fn bottom_half_of_square_drains_to_bottom_edge() {
    let space = GridSpace::build(Domain::UnitSquare, 16).unwrap();
    let tr = build_transition(&FlowModel::square(), &space, 1.0, 1).unwrap();
    let lower: Vec<PointId> = space.ids().filter(|&u| space.point(u)[1] <= 0.5).collect();
    let omega = omega_limit_of_set(&tr, &lower).unwrap();
    let bottom: Vec<PointId> = space.ids().filter(|&u| space.point(u)[1] == 0.0).collect();
    assert_eq!(omega, bottom);
}

#[test]
fn identity_omega_is_the_set_and_neighbourhoods_settle_at_once() {
    let space = GridSpace::build(Domain::Circle, 16).unwrap();
    let tr = build_transition(&FlowModel::identity(), &space, 1.0, 1).unwrap();
    let u = vec![PointId(2), PointId(3), PointId(9)];
    assert_eq!(omega_limit_of_set(&tr, &u).unwrap(), u);
    let d_b: Vec<f64> = space.ids().map(|x| (0..u.len()).map(|i| space.distance(x, u[i]).unwrap()).fold(1.0, f64::min)).collect();
    let hoods = nested_neighborhoods(&tr, &d_b, 1.0, &[0.05, 0.1, 0.3], 10, space.resolution()).unwrap();
    assert!(hoods.times.iter().all(|t| *t == Some(1.0)));
}

#[test]
fn circle_complementary_is_the_arc_from_e_to_d() {
    let m = CircleMarkers::default();
    let space = GridSpace::build(Domain::Circle, 128).unwrap();
    let flow = FlowModel::circle(m).unwrap();
    let cache = OmegaCache::build(&flow, &space, 1.0, 200).unwrap();
    let on_arc = |from: f64, to: f64, u: PointId| clockwise(from, space.point(u)[0]) <= clockwise(from, to) + 1e-12;
    let b: Vec<PointId> = space.ids().filter(|&u| on_arc(m.a, m.e, u)).collect();
    let comp = complementary(&space, &cache, &b).unwrap();
    assert!(comp.nonconverged.is_empty());
    // open arc ED plus D, less the grid point next to E
    let expected: Vec<PointId> = space
        .ids()
        .filter(|&u| on_arc(m.e, m.d, u) && clockwise(m.e, space.point(u)[0]) > space.resolution())
        .collect();
    assert_eq!(comp.b_bullet, expected);
}

#[test]
fn circle_pair_levels() {
    let m = CircleMarkers::default();
    let space = GridSpace::build(Domain::Circle, 128).unwrap();
    let flow = FlowModel::circle(m).unwrap();
    let tr = build_transition(&flow, &space, 1.0, 1).unwrap();
    let cache = OmegaCache::build(&flow, &space, 1.0, 200).unwrap();
    let b: Vec<PointId> = space.ids().filter(|&u| clockwise(m.a, space.point(u)[0]) <= clockwise(m.a, m.e) + 1e-12).collect();
    let pair = pair_from_set(&flow, &space, &tr, &cache, &b, &StableParams::default()).unwrap().unwrap();
    // past the fixed point B orbits keep their distance, so the level sits between |EB| and one cell beyond
    let eta0 = pair.eta0.expect("certified level");
    let eb = clockwise(m.e, m.b);
    assert!(eta0 >= eb - space.cell_size() && eta0 < eb + space.cell_size(), "eta0 {eta0}");
    assert!(!pair.b_star.is_empty());
    assert!(pair.b_star.iter().all(|u| pair.b_bullet.binary_search(u).is_ok()));
}

#[test]
fn seed_between_fixed_points_gives_the_attracting_arc() {
    let m = CircleMarkers::default();
    let space = GridSpace::build(Domain::Circle, 256).unwrap();
    let flow = FlowModel::circle(m).unwrap();
    let tr = build_transition(&flow, &space, 1.0, 4).unwrap();
    let g = build_chain_graph(&space, &tr, 0.05).unwrap();
    // a ball between D and A: the reach drains into A and spreads along the fixed arc
    let seed = space.nearest(&[0.75, 0.0]);
    let ball: Vec<PointId> = space.within(&space.point(seed), 2.0 * space.resolution()).into_iter().map(|(v, _)| v).collect();
    let cand = build_strongly_stable(&flow, &space, &g, &tr, &ball, 0.05).unwrap();
    assert!(cand.separated && cand.b_in_reach);
    assert!(cand.b.iter().all(|&u| m.is_fixed(space.point(u)[0])));
    assert!(cand.b.contains(&space.nearest(&[m.a, 0.0])));
    // a ball between B and C: the orbits leaving C and D belong to B as well
    let seed = space.nearest(&[0.1, 0.0]);
    let ball: Vec<PointId> = space.within(&space.point(seed), 2.0 * space.resolution()).into_iter().map(|(v, _)| v).collect();
    let cand = build_strongly_stable(&flow, &space, &g, &tr, &ball, 0.05).unwrap();
    let arc_c_to_a: Vec<PointId> = space.ids().filter(|&u| clockwise(m.c, space.point(u)[0]) <= clockwise(m.c, m.a)).collect();
    assert!(arc_c_to_a.iter().all(|u| cand.b.binary_search(u).is_ok()));
}
