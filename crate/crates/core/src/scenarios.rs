//! Bundled scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::linalg::Mat;
use crate::model::{AgentModel, Point, Scenario, TargetModel};

/// Target with the dynamics and sensor used throughout the bundled scenarios:
/// `A = 1.1·I`, `Q = 0.1·I`, `R = I`, and a 45° rotation as `H_max`.
pub fn standard_target(id: usize, position: Point, range: f64) -> TargetModel {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    TargetModel {
        id,
        a: Mat::from_diagonal_element(2, 2, 1.1),
        q: Mat::from_diagonal_element(2, 2, 0.1),
        h_max: Mat::from_row_slice(2, 2, &[h, h, -h, h]),
        r: Mat::identity(2, 2),
        position,
        range,
    }
}

pub const STANDARD_U_MAX: f64 = 0.33;

/// Three targets with `r = 0.6` and `u_max = 0.33`. Target coordinates are
/// approximate (a triangle roughly two units across).
pub fn three_target() -> Scenario {
    let positions = [Point::new(1.0, 1.0), Point::new(3.0, 1.0), Point::new(2.0, 2.6)];
    Scenario {
        name: "three-target".into(),
        targets: positions
            .iter()
            .enumerate()
            .map(|(k, p)| standard_target(k + 1, *p, 0.6))
            .collect(),
        agent: AgentModel { u_max: STANDARD_U_MAX, s0: positions[0] },
    }
}

/// `n` targets placed uniformly on `[0, 4]²` by a ChaCha20 stream seeded with `seed`.
/// Coordinates are drawn x then y, target by target.
pub fn random_uniform(n: usize, seed: u64, range: f64) -> Scenario {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let targets: Vec<_> = (0..n)
        .map(|k| {
            let x = rng.gen_range(0.0..4.0);
            let y = rng.gen_range(0.0..4.0);
            standard_target(k + 1, Point::new(x, y), range)
        })
        .collect();
    let s0 = targets[0].position;
    Scenario {
        name: format!("random-{n}-seed{seed}"),
        targets,
        agent: AgentModel { u_max: STANDARD_U_MAX, s0 },
    }
}

/// Scalar target with `A = Q = H = R = 1`.
pub fn scalar_target(id: usize, position: Point, range: f64) -> TargetModel {
    TargetModel {
        id,
        a: Mat::identity(1, 1),
        q: Mat::identity(1, 1),
        h_max: Mat::identity(1, 1),
        r: Mat::identity(1, 1),
        position,
        range,
    }
}

/// A single scalar target; its γ = 1 steady state is the golden ratio.
pub fn golden_scalar() -> Scenario {
    Scenario {
        name: "golden-scalar".into(),
        targets: vec![scalar_target(1, Point::new(0.0, 0.0), 0.5)],
        agent: AgentModel { u_max: 0.3, s0: Point::new(0.0, 0.0) },
    }
}

/// Random target with state dimension `l` and a single output, rejection-sampled
/// until `(A, H_max)` is observable. `A` has spectral radius in `[0.5, 1.1]`
/// (the bundled targets use 1.1), `‖H_max‖ ∈ [0.5, 1.5]`, `R ∈ [0.5, 2]` and
/// `Q = 0.1·(I + ½BBᵀ)` with `B` uniform on `[−1, 1]`.
pub fn random_observable_target<R: Rng>(rng: &mut R, id: usize, l: usize) -> TargetModel {
    loop {
        let raw = Mat::from_fn(l, l, |_, _| rng.gen_range(-1.0..1.0));
        let radius = raw.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let target_radius = rng.gen_range(0.5..1.1);
        let b = Mat::from_fn(l, l, |_, _| rng.gen_range(-1.0..1.0));
        let h = Mat::from_fn(1, l, |_, _| rng.gen_range(-1.0..1.0));
        let h_norm = rng.gen_range(0.5..1.5);
        let r = Mat::from_element(1, 1, rng.gen_range(0.5..2.0));
        if radius < 1e-6 || h.norm() < 1e-6 {
            continue;
        }
        let a = raw * (target_radius / radius);
        let q = (Mat::identity(l, l) + &b * b.transpose() * 0.5) * 0.1;
        let h_max = &h * (h_norm / h.norm());
        let obs = crate::linalg::observability_matrix(&a, &h_max);
        if crate::linalg::rank(&obs, 1e-6) == l {
            return TargetModel {
                id,
                a,
                q: crate::linalg::symmetrize(&q),
                h_max,
                r,
                position: Point::new(0.0, 0.0),
                range: 1.0,
            };
        }
    }
}
