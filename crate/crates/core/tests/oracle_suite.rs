mod oracles;

use cwlab_core::evolution::{expmv, Side};
use cwlab_core::metrics::{w1, w2};
use cwlab_core::spectral::{perron_eigenpair, PerronMethod, PerronOptions};
use cwlab_core::{DiscreteLaw, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn simplex_solves_a_known_transport_problem() {
    // two points each, cost |x - y|: move 0.25 from 0 to 1
    let c = oracles::transport_cost(&[0.0, 1.0], &[0.75, 0.25], &[0.0, 1.0], &[0.5, 0.5], |x, y| (x - y).abs());
    assert!((c - 0.25).abs() < 1e-14);
}

#[test]
fn dense_expm_of_diagonal_and_nilpotent() {
    let e = oracles::expm(&vec![vec![-3.0, 0.0], vec![0.0, 0.5]]);
    assert!((e[0][0] - (-3.0f64).exp()).abs() < 1e-14);
    assert!((e[1][1] - 0.5f64.exp()).abs() < 1e-14);
    let n = oracles::expm(&vec![vec![0.0, 7.0], vec![0.0, 0.0]]);
    assert!((n[0][1] - 7.0).abs() < 1e-13);
}

#[test]
fn expmv_matches_dense_exponential() {
    for &(n, beta, eps) in &[(12, 1.2, 0.100001), (20, 1.5, 0.23), (17, 0.8, 0.31)] {
        let p = ModelParams::new(n, beta, eps).unwrap();
        for killed in [false, true] {
            let gen = p.build_generator(killed).unwrap();
            let dense = gen.to_dense();
            let len = gen.dim();
            let v: Vec<f64> = (0..len).map(|k| 1.0 / (1.0 + k as f64)).collect();
            for t in [0.01, 0.7, 3.0] {
                let e = oracles::expm(&oracles::scaled(&dense, t));
                let exact_left = oracles::row_times(&v, &e);
                let exact_right = oracles::times_col(&e, &v);
                let left = expmv(&gen, &v, t, Side::Measure, 1e-13).unwrap();
                let right = expmv(&gen, &v, t, Side::Function, 1e-13).unwrap();
                for k in 0..len {
                    assert!((left[k] - exact_left[k]).abs() < 1e-9, "n={n} killed={killed} t={t}");
                    assert!((right[k] - exact_right[k]).abs() < 1e-9, "n={n} killed={killed} t={t}");
                }
            }
        }
    }
}

fn random_law(rng: &mut ChaCha8Rng, max_len: usize) -> DiscreteLaw {
    let len = rng.random_range(1..=max_len);
    let mut pts: Vec<f64> = Vec::new();
    while pts.len() < len {
        let x = rng.random_range(-20..=20) as f64 / 10.0;
        if !pts.contains(&x) {
            pts.push(x);
        }
    }
    pts.sort_by(f64::total_cmp);
    let w: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    DiscreteLaw::normalized(pts, w).unwrap()
}

#[test]
fn wasserstein_matches_transport_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..300 {
        let a = random_law(&mut rng, 6);
        let b = random_law(&mut rng, 6);
        let lp1 = oracles::transport_cost(a.points(), a.weights(), b.points(), b.weights(), |x, y| (x - y).abs());
        let lp2 = oracles::transport_cost(a.points(), a.weights(), b.points(), b.weights(), |x, y| (x - y).powi(2));
        assert!((w1(&a, &b) - lp1).abs() < 1e-10, "{a:?} {b:?}");
        assert!((w2(&a, &b) - lp2.max(0.0).sqrt()).abs() < 1e-10, "{a:?} {b:?}");
    }
}

#[test]
fn perron_pair_matches_two_state_closed_form() {
    for &(beta, eps) in &[(1.2, 0.3), (2.0, 0.2), (1.05, 0.01)] {
        let p = ModelParams::new(4, beta, eps).unwrap();
        let gen = p.build_generator(true).unwrap();
        assert_eq!(gen.dim(), 2);
        let (u, d0) = p.rates_at_index(3);
        let (_, d1) = p.rates_at_index(4);
        let (b, h, q) = oracles::two_state_perron(u, d0, d1);
        for method in [PerronMethod::InverseIteration, PerronMethod::ShiftedPower] {
            let opts = PerronOptions { method, ..PerronOptions::default() };
            let pack = perron_eigenpair(&gen, &opts).unwrap();
            assert!((pack.b_n - b).abs() <= 1e-12 * b.max(1.0));
            for k in 0..2 {
                assert!((pack.h_n[k] - h[k]).abs() <= 1e-12);
                assert!((pack.qsd[k] - q[k]).abs() <= 1e-12);
            }
        }
    }
}
