use proptest::prelude::*;
use rwalk::graph::Graph;
use rwalk::model::{generate_heterogeneous, generate_homogeneous, solve_least_squares, DataSpec, Dataset, NodeData};
use rwalk::sgd::{run, RunConfig, SamplerKind};
use rwalk::walker::JumpParams;
use rwalk::Error;

fn testbed(seed: u64) -> (Dataset, Graph) {
    let ds = generate_heterogeneous(&DataSpec::heterogeneous(40, 4, 1.0, 100.0, 0.0, seed, 1)).unwrap();
    (ds, Graph::ring(40).unwrap())
}

#[test]
fn mhlj_without_jumps_is_importance_sampling() {
    let (ds, g) = testbed(2);
    let gt = solve_least_squares(&ds).unwrap();
    let is = run(&ds, &g, &gt, &RunConfig::new(SamplerKind::IsMh, 1e-3, 20_000, 9)).unwrap();
    let cfg = RunConfig::new(SamplerKind::Mhlj, 1e-3, 20_000, 9).with_jump(JumpParams::new(0.0, 0.5, 3).unwrap());
    let lj = run(&ds, &g, &gt, &cfg).unwrap();
    assert_eq!(is.records, lj.records);
    assert_eq!(is.final_x, lj.final_x);
}

#[test]
fn equal_smoothness_makes_importance_sampling_plain_sgd() {
    // every a_v has the same (exactly representable) norm, so L_v = L_bar
    // and the weight is one
    let dirs = [[1.0, 0.5], [0.5, -1.0], [-1.0, 0.5], [-0.5, -1.0], [1.0, -0.5]];
    let nodes: Vec<NodeData> = (0..30)
        .map(|v| NodeData::new(dirs[v % 5].to_vec(), (v % 7) as f64 - 3.0))
        .collect();
    let ds = Dataset::from_nodes(nodes, vec![0.0, 0.0]).unwrap();
    let g = Graph::watts_strogatz(30, 4, 0.2, 1).unwrap();
    let gt = solve_least_squares(&ds).unwrap();
    let u = run(&ds, &g, &gt, &RunConfig::new(SamplerKind::UniformMh, 0.05, 5_000, 4)).unwrap();
    let i = run(&ds, &g, &gt, &RunConfig::new(SamplerKind::IsMh, 0.05, 5_000, 4)).unwrap();
    assert_eq!(u.records, i.records);
}

#[test]
fn well_mixed_sgd_reaches_the_optimum() {
    let ds = generate_homogeneous(50, 5, 1.0, 3).unwrap();
    let g = Graph::complete(50).unwrap();
    let gt = solve_least_squares(&ds).unwrap();
    for kind in [SamplerKind::UniformMh, SamplerKind::IsMh] {
        let t = run(&ds, &g, &gt, &RunConfig::new(kind, 2e-3, 100_000, 1)).unwrap();
        assert!(t.plateau_mse() < 1.1 * gt.mse_star, "{kind}: {} vs {}", t.plateau_mse(), gt.mse_star);
        assert!(t.records[0].dist_sq > 10.0 * t.final_dist_sq());
    }
}

#[test]
fn huge_step_diverges() {
    let (ds, g) = testbed(1);
    let gt = solve_least_squares(&ds).unwrap();
    let err = run(&ds, &g, &gt, &RunConfig::new(SamplerKind::UniformMh, 10.0, 100_000, 1)).unwrap_err();
    assert!(matches!(err, Error::Divergence { iteration } if iteration < 100_000));
}

#[test]
fn communication_matches_the_walker() {
    let (ds, g) = testbed(3);
    let gt = solve_least_squares(&ds).unwrap();
    let cfg = RunConfig::new(SamplerKind::Mhlj, 1e-3, 50_000, 2).with_jump(JumpParams::new(0.1, 0.5, 3).unwrap());
    let t = run(&ds, &g, &gt, &cfg).unwrap();
    assert_eq!(t.last().unwrap().comm_count, t.comm_count);
    assert!(t.comm_count <= t.hop_count);
    assert!((t.hops_per_update() - 1.057).abs() < 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trace_shape_and_determinism(
        t_total in 1u64..3000, log_every in 1u64..400, seed in any::<u64>(),
        kind in prop::sample::select(SamplerKind::ALL.to_vec()),
    ) {
        let (ds, g) = testbed(seed % 5);
        let gt = solve_least_squares(&ds).unwrap();
        let cfg = RunConfig::new(kind, 1e-3, t_total, seed)
            .with_log_every(log_every)
            .with_jump(JumpParams::new(0.2, 0.5, 3).unwrap());
        let a = run(&ds, &g, &gt, &cfg).unwrap();
        let b = run(&ds, &g, &gt, &cfg).unwrap();
        prop_assert_eq!(&a.records, &b.records);
        prop_assert_eq!(a.records.last().unwrap().iter, t_total);
        prop_assert!(a.records.windows(2).all(|w| w[0].iter < w[1].iter));
        prop_assert!(a.records.iter().all(|r| r.mse >= 0.0 && r.dist_sq >= 0.0));
        prop_assert!(a.records.iter().all(|r| r.iter % log_every == 0 || r.iter == t_total));
        prop_assert_eq!(a.records.len() as u64, t_total / log_every + u64::from(t_total % log_every != 0));
    }
}

#[test]
fn replayed_visits_equal_the_trace_nodes() {
    let (ds, g) = testbed(4);
    let gt = solve_least_squares(&ds).unwrap();
    for kind in SamplerKind::ALL {
        let cfg = RunConfig::new(kind, 1e-3, 5_000, 8)
            .with_log_every(1)
            .with_jump(JumpParams::new(0.3, 0.5, 3).unwrap().with_switch(2_500));
        let sim = rwalk::sgd::Simulation::new(&ds, &g, &gt, kind).unwrap();
        let nodes: Vec<usize> = sim.run(&cfg).unwrap().records.iter().map(|r| r.node).collect();
        assert_eq!(sim.visits(&cfg).unwrap(), nodes);
    }
}
