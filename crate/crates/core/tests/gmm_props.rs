use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use renovor_core::gmm::*;

fn two_gaussians(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Normal::new(0.0, 10.0).unwrap();
    let b = Normal::new(50.0, 10.0).unwrap();
    (0..n).map(|i| if i % 2 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) }).collect()
}

#[test]
fn recovers_overlapping_means() {
    for seed in 0..5 {
        let xs = two_gaussians(10_000, seed);
        let fit = fit_gmm(&xs, 2, &EmOptions { seed, ..EmOptions::default() }).unwrap();
        let mut means: Vec<f64> = fit.model.components().iter().map(|c| c.mean).collect();
        means.sort_by(f64::total_cmp);
        assert!(means[0].abs() <= 2.0, "{means:?}");
        assert!((means[1] - 50.0).abs() <= 2.0, "{means:?}");
        for c in fit.model.components() {
            assert!((c.weight - 0.5).abs() < 0.05);
            assert!((c.variance.sqrt() - 10.0).abs() < 1.5);
        }
    }
}

#[test]
fn log_likelihood_trace_never_decreases() {
    for seed in 0..10 {
        let xs = two_gaussians(2_000, seed + 100);
        for k in 1..=4 {
            let fit = fit_gmm(&xs, k, &EmOptions { seed, ..EmOptions::default() }).unwrap();
            for w in fit.log_likelihood_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "k={k}: {} -> {}", w[0], w[1]);
            }
            let total: f64 = fit.model.components().iter().map(|c| c.weight).sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(fit.model.components().iter().all(|c| c.variance >= VAR_FLOOR));
        }
    }
}

#[test]
fn fit_is_deterministic() {
    let xs = two_gaussians(3_000, 7);
    let a = fit_gmm(&xs, 3, &EmOptions::default()).unwrap();
    let b = fit_gmm(&xs, 3, &EmOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn too_few_distinct_samples() {
    assert!(matches!(fit_gmm(&[1.0, 1.0, 2.0], 3, &EmOptions::default()), Err(renovor_core::Error::InsufficientSamples { .. })));
}

proptest! {
    #[test]
    fn nll_matches_direct_sum(
        w in proptest::collection::vec(0.05f64..1.0, 1..5),
        mu in proptest::collection::vec(-100.0f64..100.0, 5),
        var in proptest::collection::vec(0.5f64..400.0, 5),
        x in -150.0f64..150.0,
    ) {
        let total: f64 = w.iter().sum();
        let comps: Vec<GaussianComponent> = w
            .iter()
            .enumerate()
            .map(|(i, &wi)| GaussianComponent { weight: wi / total, mean: mu[i], variance: var[i] })
            .collect();
        let model = GmmModel::new(comps.clone()).unwrap();
        let p: f64 = comps
            .iter()
            .map(|c| c.weight * (-(x - c.mean).powi(2) / (2.0 * c.variance)).exp() / (2.0 * std::f64::consts::PI * c.variance).sqrt())
            .sum();
        let direct = (-p.ln()).min(NLL_CLAMP);
        let got = gmm_neg_log_likelihood(&model, x);
        if p > 1e-300 {
            prop_assert!((got - direct).abs() <= 1e-9 * (1.0 + direct.abs()), "{got} vs {direct}");
        } else {
            prop_assert_eq!(got, NLL_CLAMP);
        }
    }
}
