use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rwalk::graph::Graph;
use rwalk::transition::{levy_matrix, mh_importance, mix, truncated_geometric_weights};
use rwalk::walker::{expected_comm_bound, expected_visits_per_update, sample_trunc_geom, JumpParams, WalkerState};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson goodness-of-fit p-value.
fn chi_square(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let (mut stat, mut cells) = (0.0, 0usize);
    for (&c, &p) in counts.iter().zip(probs) {
        if p == 0.0 {
            assert_eq!(c, 0, "mass outside the support");
            continue;
        }
        let e = p * total as f64;
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    ChiSquared::new((cells - 1) as f64).unwrap().sf(stat)
}

#[test]
fn truncated_geometric_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for &(p_d, r) in &[(0.5, 3), (0.2, 8), (0.9, 2)] {
        let mut counts = vec![0u64; r];
        for _ in 0..1_000_000 {
            let d = sample_trunc_geom(p_d, r, &mut rng);
            counts[d - 1] += 1;
        }
        let p = chi_square(&counts, &truncated_geometric_weights(p_d, r).unwrap());
        assert!(p > 1e-3, "p_d={p_d} r={r}: p-value {p}");
    }
}

#[test]
fn one_step_rows_match_the_mixed_kernel() {
    let g = Graph::ring(5).unwrap();
    let l = [100.0, 1.0, 1.0, 1.0, 1.0];
    let p_is = mh_importance(&g, &l).unwrap();
    let m = mix(&p_is, &levy_matrix(&g, 0.5, 3).unwrap(), 0.1).unwrap();
    let params = JumpParams::new(0.1, 0.5, 3).unwrap();
    for start in 0..5 {
        let mut counts = vec![0u64; 5];
        let mut rng_seed = 100 + start as u64;
        for _ in 0..200_000 {
            let mut w = WalkerState::new(start, rng_seed);
            rng_seed = rng_seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            counts[w.step_mhlj(&g, &p_is, &params)] += 1;
        }
        let row: Vec<f64> = (0..5).map(|j| m.get(start, j)).collect();
        let p = chi_square(&counts, &row);
        assert!(p > 1e-3, "start {start}: p-value {p}");
    }
}

#[test]
fn visits_per_update_respect_the_bound() {
    let g = Graph::ring(200).unwrap();
    let p_is = mh_importance(&g, &vec![1.0; 200]).unwrap();
    let params = JumpParams::new(0.1, 0.5, 3).unwrap();
    let mut w = WalkerState::new(0, 5);
    let steps = 1_000_000u64;
    for _ in 0..steps {
        w.record_update();
        w.step_mhlj(&g, &p_is, &params);
    }
    let mean = w.hop_count() as f64 / steps as f64;
    let exact = expected_visits_per_update(0.1, 0.5, 3);
    // visits per update: 1 w.p. 0.9, D otherwise; variance of the mixture
    let weights = truncated_geometric_weights(0.5, 3).unwrap();
    let second: f64 = 0.9 + 0.1 * weights.iter().enumerate().map(|(i, w)| w * ((i + 1) * (i + 1)) as f64).sum::<f64>();
    let sd = ((second - exact * exact) / steps as f64).sqrt();
    assert!((mean - exact).abs() < 4.0 * sd, "{mean} vs {exact}");
    assert!(mean <= expected_comm_bound(0.1, 0.5));
    assert!(w.comm_count() <= w.hop_count());
}

#[test]
fn switch_turns_jumps_off() {
    let g = Graph::ring(20).unwrap();
    let p_is = mh_importance(&g, &[1.0; 20]).unwrap();
    let params = JumpParams::new(1.0, 0.5, 3).unwrap().with_switch(100);
    let mut w = WalkerState::new(0, 1);
    for _ in 0..100 {
        w.record_update();
        w.step_mhlj(&g, &p_is, &params);
    }
    let before = w.hop_count();
    assert!(before > 100);
    for _ in 0..100 {
        w.record_update();
        w.step_mhlj(&g, &p_is, &params);
    }
    assert_eq!(w.hop_count() - before, 100);
}
