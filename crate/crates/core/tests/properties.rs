use cwlab_core::evolution::{conditional_law, expmv, survival_prob, Side};
use cwlab_core::metrics::tv;
use cwlab_core::sampler::{
    killed_endpoints, mc_conditional_expectation, replica_stream, sample_auxiliary, sample_path, Record,
    SimConfig,
};
use cwlab_core::spectral::{killed_spectrum, stationary_full, PerronOptions};
use cwlab_core::{DiscreteLaw, ModelParams};
use proptest::prelude::*;

const EPS: f64 = 0.100001;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn semigroup_property(s in 0.0f64..10.0, t in 0.0f64..10.0, killed in any::<bool>(), seed in 0usize..30) {
        let p = ModelParams::new(30, 1.2, EPS).unwrap();
        let gen = p.build_generator(killed).unwrap();
        let mut v = vec![0.0; gen.dim()];
        v[seed % gen.dim()] = 1.0;
        let two = expmv(&gen, &expmv(&gen, &v, s, Side::Measure, 1e-13).unwrap(), t, Side::Measure, 1e-13).unwrap();
        let one = expmv(&gen, &v, s + t, Side::Measure, 1e-13).unwrap();
        for (a, b) in one.iter().zip(&two) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn killed_mass_never_exceeds_one(k in 0usize..40, t in 0.0f64..50.0) {
        let p = ModelParams::new(60, 1.3, EPS).unwrap();
        let gen = p.build_generator(true).unwrap();
        let m = gen.grid().points()[k % gen.dim()];
        let s = survival_prob(&gen, m, t, 1e-12).unwrap();
        prop_assert!(s > 0.0 && s <= 1.0);
    }
}

#[test]
fn killed_semigroup_approaches_its_perron_projection_geometrically() {
    let p = ModelParams::new(80, 1.2, EPS).unwrap();
    let (gen, pack) = killed_spectrum(&p, &PerronOptions::default()).unwrap();
    let k = gen.grid().nearest_position(0.9);
    let mut e = vec![0.0; gen.dim()];
    e[k] = 1.0;
    let qh = pack.qsd_mass_of_h();
    let gaps: Vec<f64> = [1.0, 2.0, 3.0, 4.0, 5.0]
        .iter()
        .map(|&t| {
            let w = expmv(&gen, &e, t, Side::Measure, 1e-14).unwrap();
            let scale = (pack.b_n * t).exp();
            w.iter().zip(&pack.qsd).map(|(x, q)| (scale * x - pack.h_n[k] * q / qh).abs()).sum()
        })
        .collect();
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
    assert!(ratios.iter().all(|&r| r > 0.0 && r < 1.0), "{ratios:?}");
    let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(1.0, f64::min);
    assert!(spread < 1.5, "{ratios:?}");
}

#[test]
fn free_chain_empirical_law_matches_exact_law() {
    let p = ModelParams::new(100, 1.2, EPS).unwrap();
    let gen = p.build_generator(false).unwrap();
    let grid = gen.grid();
    let start = grid.position(0.0).unwrap();
    let exact = DiscreteLaw::new(
        grid.points().to_vec(),
        expmv(&gen, DiscreteLaw::dirac_on_grid(grid, start).weights(), 2.0, Side::Measure, 1e-13).unwrap(),
    )
    .unwrap_or_else(|_| panic!("exact law"));
    let replicas = 200_000;
    let cfg = SimConfig::new(77, replicas, 2.0).unwrap();
    let emp = cwlab_core::sampler::empirical_law(&p, 0.0, 2.0, &cfg).unwrap();
    let bound = 4.0 * (101.0 / replicas as f64).sqrt();
    assert!(tv(&emp, &exact) <= bound, "{} > {bound}", tv(&emp, &exact));
}

#[test]
fn survival_fraction_matches_exact_survival() {
    let p = ModelParams::new(40, 1.2, EPS).unwrap();
    let gen = p.build_generator(true).unwrap();
    let m0 = gen.grid().points()[2];
    let replicas = 20_000;
    let cfg = SimConfig::new(3, replicas, 3.0).unwrap();
    for t in [0.5, 3.0] {
        let alive = killed_endpoints(&p, m0, t, &cfg).unwrap().iter().flatten().count() as f64;
        let s = survival_prob(&gen, m0, t, 1e-12).unwrap();
        let sigma = (replicas as f64 * s * (1.0 - s)).sqrt();
        assert!((alive - replicas as f64 * s).abs() <= 3.0 * sigma, "t={t}");
    }
}

#[test]
fn conditional_mean_estimate_covers_exact_value() {
    let p = ModelParams::new(100, 1.2, EPS).unwrap();
    let gen = p.build_generator(true).unwrap();
    let k = gen.grid().nearest_position(0.9);
    let m0 = gen.grid().points()[k];
    let (nu, _) = conditional_law(&gen, &DiscreteLaw::dirac_on_grid(gen.grid(), k), 5.0, 1e-13).unwrap();
    let cfg = SimConfig::new(11, 20_000, 5.0).unwrap();
    let est = mc_conditional_expectation(&p, m0, |m| m, 5.0, &cfg).unwrap();
    assert!((est.estimate - nu.mean()).abs() <= 3.0 * est.stderr, "{est:?} vs {}", nu.mean());
}

#[test]
fn long_run_time_average_is_centered() {
    let p = ModelParams::new(20, 1.2, EPS).unwrap();
    let averages: Vec<f64> = (0..40)
        .map(|r| {
            let path = sample_path(&p, 0.5, 1e4, Record::FullPath, &mut replica_stream(5, r)).unwrap();
            path.time_average(1e3, 1e4)
        })
        .collect();
    let (mean, se) = cwlab_core::sampler::mean_and_stderr(&averages);
    assert!(mean.abs() <= 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn auxiliary_chain_settles_in_the_retained_well() {
    let p = ModelParams::new(200, 1.2, EPS).unwrap();
    let aux = p.auxiliary_generator().unwrap();
    let pi = stationary_full(&aux).unwrap();
    let exact_mean: f64 = aux.grid().points().iter().zip(&pi).map(|(m, w)| m * w).sum();
    assert!((exact_mean - p.m_plus()).abs() < 0.05);
    let ends: Vec<f64> = (0..2000)
        .map(|r| sample_auxiliary(&p, 0.5, 30.0, Record::EndpointsOnly, &mut replica_stream(8, r)).unwrap().last())
        .collect();
    assert!(ends.iter().all(|m| (0.0..=1.0).contains(m)));
    let (mean, se) = cwlab_core::sampler::mean_and_stderr(&ends);
    assert!((mean - exact_mean).abs() <= 4.0 * se, "{mean} vs {exact_mean} (se {se})");
}
