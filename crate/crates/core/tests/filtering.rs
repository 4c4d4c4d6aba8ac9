use permon_core::filtering::{
    info_filter_step, kalman_covariance_step, periodic_riccati_fixed_point, steady_state_covariances,
    CovarianceState, InformationState,
};
use permon_core::linalg::{rel_frobenius, spd_inverse, Mat};
use permon_core::model::Point;
use permon_core::scenarios::{random_observable_target, scalar_target, standard_target};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn scalar_riccati_by_hand() {
    // a = h = q = r = 1: Σ⁻ = Σ + 1, Σ⁺ = Σ⁻/(Σ⁻ + 1)
    let t = scalar_target(1, Point::new(0.0, 0.0), 1.0);
    let s = CovarianceState { sigma: Mat::from_element(1, 1, 2.0), k: 0 };
    let next = kalman_covariance_step(&t, &s, 1.0).unwrap();
    assert!((next.sigma[(0, 0)] - 0.75).abs() < 1e-14);
    let blind = kalman_covariance_step(&t, &s, 0.0).unwrap();
    assert!((blind.sigma[(0, 0)] - 3.0).abs() < 1e-14);
    let half = kalman_covariance_step(&t, &s, 0.5).unwrap();
    // H = √½: Σ⁺ = 3/(1 + 1.5)
    assert!((half.sigma[(0, 0)] - 1.2).abs() < 1e-14);
}

#[test]
fn steady_state_is_a_periodic_orbit() {
    let t = standard_target(1, Point::new(0.0, 0.0), 0.3);
    let gammas = [0.8, 0.0, 0.0, 0.4, 0.0];
    let sigmas = steady_state_covariances(&t, &gammas).unwrap();
    for k in 0..gammas.len() {
        let prev = &sigmas[(k + gammas.len() - 1) % gammas.len()];
        let next = kalman_covariance_step(&t, &CovarianceState { sigma: prev.clone(), k: 0 }, gammas[k]).unwrap();
        assert!(rel_frobenius(&next.sigma, &sigmas[k]) < 1e-8, "slot {k}");
    }
}

#[test]
fn steady_state_ignores_the_seed() {
    let t = standard_target(1, Point::new(0.0, 0.0), 0.3);
    let gammas = [1.0, 0.0, 0.3];
    let a = periodic_riccati_fixed_point(&t, &gammas).unwrap();
    let seed = Mat::identity(2, 2) * 50.0;
    let b = permon_core::filtering::periodic_riccati_fixed_point_with(&t, &gammas, &seed, &Default::default())
        .unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(rel_frobenius(&x.p, &y.p) < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn information_and_covariance_forms_agree(seed in 0u64..10_000, l in 1usize..4, gamma in 0.0f64..1.0, scale in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_observable_target(&mut rng, 1, l);
        let sigma = Mat::identity(l, l) * scale + Mat::from_fn(l, l, |i, j| if i == j { 0.0 } else { 0.1 * scale });
        let cov = kalman_covariance_step(&t, &CovarianceState { sigma: sigma.clone(), k: 0 }, gamma).unwrap();
        let info = info_filter_step(&t, &InformationState { p: spd_inverse(&sigma, "Σ").unwrap(), k: 0 }, gamma).unwrap();
        let back = spd_inverse(&info.p, "P").unwrap();
        prop_assert!(rel_frobenius(&back, &cov.sigma) < 1e-8, "{back} vs {}", cov.sigma);
        prop_assert_eq!(info.k, 1);
    }

    #[test]
    fn more_signal_never_hurts(seed in 0u64..10_000, l in 1usize..4, g1 in 0.0f64..1.0, g2 in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_observable_target(&mut rng, 1, l);
        let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let s = CovarianceState { sigma: Mat::identity(l, l), k: 0 };
        let a = kalman_covariance_step(&t, &s, lo).unwrap();
        let b = kalman_covariance_step(&t, &s, hi).unwrap();
        // Σ(lo) − Σ(hi) ⪰ 0
        let d = &a.sigma - &b.sigma;
        prop_assert!(d.symmetric_eigenvalues().min() > -1e-10);
    }
}
