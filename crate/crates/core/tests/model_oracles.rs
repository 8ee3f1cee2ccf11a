use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rwalk::model::{
    generate_heterogeneous, generate_homogeneous, global_mse, local_grad, local_loss, solve_least_squares,
    DataSpec, Dataset, NodeData,
};
use rwalk::transition::Distribution;

fn random_node(rng: &mut ChaCha8Rng, d: usize) -> NodeData {
    let a = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    NodeData::new(a, rng.random_range(-5.0..5.0))
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let d = rng.random_range(1..12);
        let node = random_node(&mut rng, d);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = local_grad(&node, &x).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..d)
            .map(|k| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                (local_loss(&node, &xp).unwrap() - local_loss(&node, &xm).unwrap()) / (2.0 * h)
            })
            .collect();
        let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-3);
        assert!(num / den < 1e-6, "relative error {}", num / den);
    }
}

proptest! {
    #[test]
    fn gradient_is_lipschitz_with_constant_two_norm_sq(seed in any::<u64>(), d in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let node = random_node(&mut rng, d);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let gx = local_grad(&node, &x).unwrap();
        let gy = local_grad(&node, &y).unwrap();
        let lhs: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let dist: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(lhs <= node.lipschitz() * dist * (1.0 + 1e-12) + 1e-12);
        // the bound is attained along a
        let xa: Vec<f64> = x.iter().zip(node.a()).map(|(xi, ai)| xi + ai).collect();
        let ga = local_grad(&node, &xa).unwrap();
        let lhs: f64 = gx.iter().zip(&ga).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm_a: f64 = node.a().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((lhs - node.lipschitz() * norm_a).abs() <= 1e-9 * (1.0 + lhs));
    }
}

#[test]
fn least_squares_residual_is_orthogonal_to_features() {
    for seed in 0..10 {
        let ds = generate_heterogeneous(&DataSpec::heterogeneous(150, 10, 1.0, 100.0, 0.005, seed, 1)).unwrap();
        let gt = solve_least_squares(&ds).unwrap();
        let mut normal = [0.0; 10];
        let mut scale = 0.0f64;
        for nd in ds.nodes() {
            let r = nd.y() - nd.a().iter().zip(&gt.x_star).map(|(a, x)| a * x).sum::<f64>();
            for (k, a) in nd.a().iter().enumerate() {
                normal[k] += a * r;
            }
            scale = scale.max(nd.a().iter().map(|a| a.abs()).fold(0.0, f64::max) * nd.y().abs());
        }
        let worst = normal.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(worst / scale < 1e-8, "seed {seed}: {worst} / {scale}");
        // x* beats nearby points
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = gt.x_star.iter().map(|v| v + rng.random_range(-1e-3..1e-3)).collect();
        assert!(global_mse(&ds, &x).unwrap() >= gt.mse_star);
    }
}

#[test]
fn weighted_importance_gradient_vanishes_at_the_optimum() {
    let ds = generate_heterogeneous(&DataSpec::heterogeneous(80, 5, 1.0, 100.0, 0.02, 3, 1)).unwrap();
    let gt = solve_least_squares(&ds).unwrap();
    let pi = Distribution::importance(&ds.lipschitz()).unwrap();
    let mut g = vec![0.0; 5];
    for (v, nd) in ds.nodes().iter().enumerate() {
        let w = ds.l_bar() / nd.lipschitz() * pi.get(v);
        for (gk, lk) in g.iter_mut().zip(local_grad(nd, &gt.x_star).unwrap()) {
            *gk += w * lk;
        }
    }
    assert!(g.iter().all(|v| v.abs() < 1e-10), "{g:?}");
}

#[test]
fn light_class_lipschitz_mean() {
    // E[L_v] = 2 d sigma^2
    for seed in 0..5 {
        let ds = generate_heterogeneous(&DataSpec::heterogeneous(2000, 10, 1.0, 100.0, 0.0, seed, 0)).unwrap();
        assert!(ds.heavy_class().iter().all(|h| !h));
        assert!((ds.l_bar() - 20.0).abs() < 2.0, "seed {seed}: {}", ds.l_bar());
    }
}

#[test]
fn forced_heavy_node_dominates() {
    for seed in 1..=5 {
        let ds = generate_heterogeneous(&DataSpec::heterogeneous(200, 10, 1.0, 100.0, 0.0, seed, 1)).unwrap();
        assert_eq!(ds.heavy_class().iter().filter(|h| **h).count(), 1);
        let heavy = rwalk::diagnostics::heavy_nodes(&ds, 10.0);
        assert_eq!(heavy, ds.heavy_class());
    }
}

#[test]
fn homogeneous_lipschitz_spread_is_moderate() {
    for seed in 0..10 {
        let ds = generate_homogeneous(100, 10, 1.0, seed).unwrap();
        let ratio = ds.l_max() / ds.l_min();
        assert!(ratio < 25.0, "seed {seed}: {ratio}");
        assert!((ds.l_bar() - 20.0).abs() < 2.0);
    }
}

#[test]
fn generator_is_deterministic_and_text_round_trips() {
    let spec = DataSpec::heterogeneous(40, 4, 1.0, 100.0, 0.05, 11, 1);
    let a = generate_heterogeneous(&spec).unwrap();
    let b = generate_heterogeneous(&spec).unwrap();
    assert_eq!(a, b);
    let back = Dataset::parse(&a.to_text()).unwrap();
    assert_eq!(back.lipschitz(), a.lipschitz());
    assert_eq!(back.x_true(), a.x_true());
}
