use permon_core::filtering::{build_augmented, periodic_riccati_fixed_point};
use permon_core::linalg::{self, Mat};
use permon_core::scenarios::{random_observable_target, scalar_target, standard_target};
use permon_core::sdp::{
    build_prop1, build_prop1_with, solve_prop1, verify_prop1, SdpStatus, SolverSettings,
    VariableStructure,
};
use permon_core::model::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn oracle_pi(t: &permon_core::model::TargetModel, gammas: &[f64]) -> Mat {
    let blocks: Vec<Mat> =
        periodic_riccati_fixed_point(t, gammas).unwrap().into_iter().map(|s| s.p).collect();
    linalg::block_diag(&blocks)
}

#[test]
fn golden_ratio() {
    let t = scalar_target(1, Point::new(0.0, 0.0), 1.0);
    let aug = build_augmented(&t, 1).unwrap();
    let p = build_prop1(&aug, &[1.0]).unwrap();
    let sol = solve_prop1(&p, &SolverSettings::default()).unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert_eq!(sol.sdp.status, SdpStatus::Optimal);
    assert!((sol.pi[(0, 0)] - phi).abs() < 1e-7, "{}", sol.pi[(0, 0)]);
    assert!((sol.objective - 1.0 / phi).abs() < 1e-7, "{}", sol.objective);
}

#[test]
fn matches_oracle_on_standard_target() {
    let t = standard_target(1, Point::new(0.0, 0.0), 0.6);
    let gammas = [0.9, 0.4, 0.0, 0.0, 0.0, 0.1];
    let aug = build_augmented(&t, gammas.len()).unwrap();
    let sol = solve_prop1(&build_prop1(&aug, &gammas).unwrap(), &SolverSettings::default()).unwrap();
    let oracle = oracle_pi(&t, &gammas);
    let err = linalg::rel_frobenius(&sol.pi, &oracle);
    assert!(err < 1e-5, "{err}");
    let cert = verify_prop1(&sol, &aug, &gammas).unwrap();
    assert!(cert.accepted(), "{cert:?}");
    let oracle_cost: f64 = linalg::spd_inverse(&oracle, "P").unwrap().trace();
    assert!((sol.objective - oracle_cost).abs() < 1e-6 * oracle_cost);
}

#[test]
fn dense_and_block_agree() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for l in 1..=2 {
        let t = random_observable_target(&mut rng, 1, l);
        let gammas: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let aug = build_augmented(&t, 3).unwrap();
        let s = SolverSettings::default();
        let a = solve_prop1(&build_prop1(&aug, &gammas).unwrap(), &s).unwrap();
        let b = solve_prop1(&build_prop1_with(&aug, &gammas, VariableStructure::Dense).unwrap(), &s)
            .unwrap();
        assert!(linalg::rel_frobenius(&a.pi, &b.pi) < 1e-5);
        assert!((a.objective - b.objective).abs() < 1e-6 * a.objective.abs());
    }
}

#[test]
fn random_instances_match_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..50 {
        let l = rng.gen_range(1..=3);
        let tau = rng.gen_range(1..=12);
        let t = random_observable_target(&mut rng, 1, l);
        let gammas: Vec<f64> = (0..tau).map(|_| rng.gen_range(0.0..1.0)).collect();
        let aug = build_augmented(&t, tau).unwrap();
        let sol = solve_prop1(&build_prop1(&aug, &gammas).unwrap(), &SolverSettings::default()).unwrap();
        let err = linalg::rel_frobenius(&sol.pi, &oracle_pi(&t, &gammas));
        let eye = Mat::identity(aug.dim(), aug.dim());
        let gap = linalg::spectral_norm(&(&sol.gamma * &sol.pi - eye));
        let bound = 1e-6 * linalg::spectral_norm(&sol.gamma) * linalg::spectral_norm(&sol.pi);
        println!("l={l} tau={tau} err={err:.2e} gap={gap:.2e} bound={bound:.2e} passes={}", sol.passes);
        assert!(err < 1e-5);
        assert!(gap < bound);
    }
}
