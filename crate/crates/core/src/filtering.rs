//! Covariance and information filter recursions, the periodic steady state,
//! and the augmented (lifted) periodic system whose ARE the SDPs encode.
//!
//! Cycle steps are 0-based: slot `k` uses `gammas[k]`, and slot 0 follows
//! slot `τ − 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::TargetModel;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    pub sigma: Mat,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InformationState {
    pub p: Mat,
    pub k: usize,
}

impl InformationState {
    pub fn to_covariance(&self) -> Result<CovarianceState> {
        Ok(CovarianceState { sigma: linalg::spd_inverse(&self.p, "P")?, k: self.k })
    }
}

impl CovarianceState {
    pub fn to_information(&self) -> Result<InformationState> {
        Ok(InformationState { p: linalg::spd_inverse(&self.sigma, "Σ")?, k: self.k })
    }
}

/// One predict-update step in information form:
///
/// `P⁺ = Q⁻¹ + γ·G − Q⁻¹A (P + AᵀQ⁻¹A)⁻¹ AᵀQ⁻¹`, with `G = H_maxᵀR⁻¹H_max`.
pub fn info_filter_step(
    target: &TargetModel,
    prev: &InformationState,
    gamma_k: f64,
) -> Result<InformationState> {
    linalg::require_pd(&prev.p, "previous information matrix")?;
    let qinv = linalg::spd_inverse(&target.q, "Q")?;
    let a = &target.a;
    let qinv_a = &qinv * a;
    let inner = &prev.p + a.transpose() * &qinv_a;
    let chol = linalg::require_pd(&inner, "P + AᵀQ⁻¹A")?;
    let x = chol.solve(&qinv_a.transpose());
    let p = qinv + target.information_gain() * gamma_k - &qinv_a * x;
    Ok(InformationState { p: linalg::symmetrize(&p), k: prev.k + 1 })
}

/// Standard Kalman predict/update of the covariance with `H = √γ·H_max`
/// (Joseph form for the update).
pub fn kalman_covariance_step(
    target: &TargetModel,
    prev: &CovarianceState,
    gamma_k: f64,
) -> Result<CovarianceState> {
    linalg::require_pd(&prev.sigma, "previous covariance")?;
    let a = &target.a;
    let pred = linalg::symmetrize(&(a * &prev.sigma * a.transpose() + &target.q));
    if gamma_k <= 0.0 {
        return Ok(CovarianceState { sigma: pred, k: prev.k + 1 });
    }
    let h = &target.h_max * gamma_k.sqrt();
    let s = &h * &pred * h.transpose() + &target.r;
    let s_chol = linalg::require_pd(&s, "innovation covariance")?;
    // K = Σ Hᵀ S⁻¹
    let gain = s_chol.solve(&(&h * &pred)).transpose();
    let ikh = Mat::identity(pred.nrows(), pred.ncols()) - &gain * &h;
    let sigma = &ikh * &pred * ikh.transpose() + &gain * &target.r * gain.transpose();
    Ok(CovarianceState { sigma: linalg::symmetrize(&sigma), k: prev.k + 1 })
}

/// One cycle of the periodic system stacked into a single time-invariant one.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPeriodicSystem {
    pub tau: usize,
    /// Block size `L`.
    pub block: usize,
    /// `Ã = J⁻ᵀΛ̃`.
    pub a_tilde: Mat,
    /// `Q̃⁻¹ = (JᵀΨ̃J)⁻¹`.
    pub q_tilde_inv: Mat,
    /// `diag(G, …, G)`.
    pub g_tilde: Mat,
    /// Block-circulant permutation with `J[k, k−1 mod τ] = I`.
    pub j: Mat,
}

impl AugmentedPeriodicSystem {
    pub fn dim(&self) -> usize {
        self.tau * self.block
    }

    /// Slot whose posterior feeds the prediction of slot `k`.
    pub fn predecessor(&self, k: usize) -> usize {
        (k + self.tau - 1) % self.tau
    }

    /// `γ̃ = diag(γ_0·I, …, γ_{τ−1}·I)`.
    pub fn gamma_tilde(&self, gammas: &[f64]) -> Mat {
        let l = self.block;
        Mat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            gammas.iter().flat_map(|&g| std::iter::repeat_n(g, l)),
        ))
    }

    /// Left-hand side of the augmented information ARE evaluated at `pi`:
    /// `Q̃⁻¹ − Π + γ̃G̃ − Q̃⁻¹Ã(Π + ÃᵀQ̃⁻¹Ã)⁻¹ÃᵀQ̃⁻¹`.
    pub fn are_lhs(&self, pi: &Mat, gammas: &[f64]) -> Result<Mat> {
        if pi.nrows() != self.dim() || gammas.len() != self.tau {
            return Err(Error::Dimension(format!(
                "Π is {}×{}, γ has {} entries; expected {} and {}",
                pi.nrows(),
                pi.ncols(),
                gammas.len(),
                self.dim(),
                self.tau
            )));
        }
        let qa = &self.q_tilde_inv * &self.a_tilde;
        let inner = pi + self.a_tilde.transpose() * &qa;
        let x = match linalg::symmetrize(&inner).cholesky() {
            Some(c) => c.solve(&qa.transpose()),
            None => inner
                .lu()
                .solve(&qa.transpose())
                .ok_or_else(|| Error::NotPositiveDefinite("Π + ÃᵀQ̃⁻¹Ã".into()))?,
        };
        let lhs = &self.q_tilde_inv - pi + self.gamma_tilde(gammas) * &self.g_tilde - &qa * x;
        Ok(linalg::symmetrize(&lhs))
    }
}

pub fn shift_permutation(tau: usize, l: usize) -> Mat {
    let mut j = Mat::zeros(tau * l, tau * l);
    for k in 0..tau {
        let prev = (k + tau - 1) % tau;
        j.view_mut((k * l, prev * l), (l, l)).fill_with_identity();
    }
    j
}

pub fn build_augmented(target: &TargetModel, tau: usize) -> Result<AugmentedPeriodicSystem> {
    if tau == 0 {
        return Err(Error::InvalidSchedule("cycle length must be at least 1".into()));
    }
    let l = target.state_dim();
    let j = shift_permutation(tau, l);
    let lambda = linalg::block_diag(&vec![target.a.clone(); tau]);
    let psi = linalg::block_diag(&vec![target.q.clone(); tau]);
    // J is a permutation, so J⁻ᵀ = J.
    let a_tilde = &j * lambda;
    let conj = j.transpose() * psi * &j;
    let blocks = linalg::diag_blocks(&conj, l)
        .iter()
        .map(|b| linalg::spd_inverse(b, "Q"))
        .collect::<Result<Vec<_>>>()?;
    let q_tilde_inv = linalg::block_diag(&blocks);
    let g_tilde = linalg::block_diag(&vec![target.information_gain(); tau]);
    Ok(AugmentedPeriodicSystem { tau, block: l, a_tilde, q_tilde_inv, g_tilde, j })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSettings {
    /// Relative Frobenius change between successive cycles.
    pub tol: f64,
    pub max_cycles: usize,
    /// Covariance trace beyond which the iteration is declared divergent.
    pub divergence_guard: f64,
}

impl Default for FixedPointSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_cycles: 100_000, divergence_guard: 1e12 }
    }
}

/// Periodic steady-state information matrices `P̄(0..τ)` by iterating the
/// information filter around the cycle from the identity.
pub fn periodic_riccati_fixed_point(
    target: &TargetModel,
    gammas: &[f64],
) -> Result<Vec<InformationState>> {
    let seed = Mat::identity(target.state_dim(), target.state_dim());
    periodic_riccati_fixed_point_with(target, gammas, &seed, &FixedPointSettings::default())
}

pub fn periodic_riccati_fixed_point_with(
    target: &TargetModel,
    gammas: &[f64],
    seed: &Mat,
    settings: &FixedPointSettings,
) -> Result<Vec<InformationState>> {
    if gammas.is_empty() {
        return Err(Error::InvalidSchedule("empty γ sequence".into()));
    }
    let tau = gammas.len();
    let mut state = InformationState { p: seed.clone(), k: 0 };
    let mut previous: Option<Vec<Mat>> = None;
    let mut steps = 0usize;
    let mut change = f64::INFINITY;

    for _ in 0..settings.max_cycles {
        let mut cycle = Vec::with_capacity(tau);
        for &g in gammas {
            let next = info_filter_step(target, &state, g);
            steps += 1;
            state = match next {
                Ok(s) => s,
                Err(Error::NotPositiveDefinite(_)) => {
                    return Err(Error::Divergent { trace: f64::INFINITY, steps })
                }
                Err(e) => return Err(e),
            };
            let trace = match linalg::symmetrize(&state.p).cholesky() {
                Some(c) => c.inverse().trace(),
                None => f64::INFINITY,
            };
            if !(trace <= settings.divergence_guard) {
                return Err(Error::Divergent { trace, steps });
            }
            cycle.push(state.p.clone());
        }
        if let Some(prev) = &previous {
            let num: f64 = cycle.iter().zip(prev).map(|(a, b)| (a - b).norm_squared()).sum();
            let den: f64 = cycle.iter().map(|a| a.norm_squared()).sum();
            change = (num / den).sqrt();
            if change < settings.tol {
                return Ok(cycle
                    .into_iter()
                    .enumerate()
                    .map(|(k, p)| InformationState { p, k })
                    .collect());
            }
        }
        previous = Some(cycle);
    }
    Err(Error::NonConvergent { cycles: settings.max_cycles, change })
}

/// Steady-state covariances `Σ̄(k) = P̄(k)⁻¹`.
pub fn steady_state_covariances(target: &TargetModel, gammas: &[f64]) -> Result<Vec<Mat>> {
    periodic_riccati_fixed_point(target, gammas)?
        .iter()
        .map(|s| linalg::spd_inverse(&s.p, "P̄"))
        .collect()
}

/// `Σ_k tr Σ̄(k)` over one cycle.
pub fn steady_state_trace_sum(target: &TargetModel, gammas: &[f64]) -> Result<f64> {
    Ok(steady_state_covariances(target, gammas)?.iter().map(|s| s.trace()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Point;
    use crate::scenarios;

    const PHI: f64 = 1.618_033_988_749_895;

    fn scalar() -> TargetModel {
        scenarios::scalar_target(1, Point::zeros(), 1.0)
    }

    fn sec_v() -> TargetModel {
        scenarios::standard_target(1, Point::zeros(), 0.6)
    }

    /// Oracle: iterate the scalar map `P ↦ 2 − 1/(1 + P)` to a fixed point.
    fn scalar_fixed_point_by_iteration() -> f64 {
        let mut p = 1.0;
        for _ in 0..200 {
            p = 2.0 - 1.0 / (1.0 + p);
        }
        p
    }

    #[test]
    fn golden_ratio_is_a_fixed_point() {
        let oracle = scalar_fixed_point_by_iteration();
        assert!((oracle - PHI).abs() < 1e-12);
        let s = InformationState { p: Mat::from_element(1, 1, PHI), k: 0 };
        let next = info_filter_step(&scalar(), &s, 1.0).unwrap();
        assert!((next.p[(0, 0)] - oracle).abs() < 1e-12);
    }

    #[test]
    fn no_measurement_scalar() {
        let s = InformationState { p: Mat::from_element(1, 1, 1.0), k: 0 };
        let next = info_filter_step(&scalar(), &s, 0.0).unwrap();
        assert!((next.p[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn info_step_matches_inverted_kalman_step() {
        let t = sec_v();
        let sigma = Mat::from_row_slice(2, 2, &[0.7, 0.1, 0.1, 0.4]);
        for g in [0.0, 0.3, 1.0] {
            let kf = kalman_covariance_step(&t, &CovarianceState { sigma: sigma.clone(), k: 0 }, g)
                .unwrap();
            let info = info_filter_step(&t, &CovarianceState { sigma: sigma.clone(), k: 0 }
                .to_information()
                .unwrap(), g)
            .unwrap();
            let kf_info = kf.to_information().unwrap();
            assert!(linalg::rel_frobenius(&info.p, &kf_info.p) < 1e-10, "γ = {g}");
        }
    }

    #[test]
    fn kalman_no_measurement_is_prediction() {
        let t = sec_v();
        let sigma = Mat::from_row_slice(2, 2, &[0.7, 0.1, 0.1, 0.4]);
        let out = kalman_covariance_step(&t, &CovarianceState { sigma: sigma.clone(), k: 3 }, 0.0)
            .unwrap();
        assert_eq!(out.k, 4);
        let expect = &t.a * &sigma * t.a.transpose() + &t.q;
        assert!((out.sigma - expect).amax() < 1e-15);
    }

    #[test]
    fn kalman_scalar_fixed_point() {
        let mut s = CovarianceState { sigma: Mat::from_element(1, 1, 3.0), k: 0 };
        for _ in 0..200 {
            s = kalman_covariance_step(&scalar(), &s, 1.0).unwrap();
        }
        assert!((s.sigma[(0, 0)] - 1.0 / PHI).abs() < 1e-12);
    }

    #[test]
    fn step_rejects_non_pd() {
        let bad = InformationState { p: Mat::from_element(1, 1, -1.0), k: 0 };
        assert!(matches!(info_filter_step(&scalar(), &bad, 1.0), Err(Error::NotPositiveDefinite(_))));
        let bad = CovarianceState { sigma: Mat::zeros(1, 1), k: 0 };
        assert!(kalman_covariance_step(&scalar(), &bad, 1.0).is_err());
    }

    #[test]
    fn augmented_tau_one_is_the_original_system() {
        let t = sec_v();
        let aug = build_augmented(&t, 1).unwrap();
        assert_eq!(aug.j, Mat::identity(2, 2));
        assert!((&aug.a_tilde - &t.a).amax() < 1e-15);
        assert!((&aug.q_tilde_inv - t.q.clone().try_inverse().unwrap()).amax() < 1e-12);
    }

    #[test]
    fn shift_permutation_rotates_blocks() {
        let j = shift_permutation(3, 2);
        assert!((&j * j.transpose() - Mat::identity(6, 6)).amax() == 0.0);
        // stack blocks b1 = 1, b2 = 2, b3 = 3
        let v = nalgebra::DVector::from_vec(vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let out = &j * v;
        assert_eq!(out.as_slice(), &[3.0, 3.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn q_tilde_inverse_matches_dense_inverse() {
        let mut t = sec_v();
        t.q = Mat::from_row_slice(2, 2, &[0.3, 0.05, 0.05, 0.2]);
        for tau in 1..6 {
            let aug = build_augmented(&t, tau).unwrap();
            let psi = linalg::block_diag(&vec![t.q.clone(); tau]);
            let dense = (aug.j.transpose() * psi * &aug.j).try_inverse().unwrap();
            assert!((&aug.q_tilde_inv - dense).amax() < 1e-12);
        }
    }

    #[test]
    fn scalar_fixed_point_is_golden() {
        let p = periodic_riccati_fixed_point(&scalar(), &[1.0]).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p[0].p[(0, 0)] - PHI).abs() < 1e-10);
    }

    #[test]
    fn fixed_point_satisfies_augmented_are() {
        let t = sec_v();
        for gammas in [vec![1.0], vec![1.0, 0.0, 0.0, 0.4, 0.0]] {
            let p = periodic_riccati_fixed_point(&t, &gammas).unwrap();
            let stacked = linalg::block_diag(&p.iter().map(|s| s.p.clone()).collect::<Vec<_>>());
            let aug = build_augmented(&t, gammas.len()).unwrap();
            let res = linalg::spectral_norm(&aug.are_lhs(&stacked, &gammas).unwrap());
            assert!(res < 1e-9, "residual {res}");
        }
    }

    #[test]
    fn unobserved_unstable_diverges() {
        let err = periodic_riccati_fixed_point(&sec_v(), &[0.0; 4]).unwrap_err();
        assert!(matches!(err, Error::Divergent { .. }), "{err}");
    }

    #[test]
    fn unobserved_stable_converges_to_lyapunov() {
        let mut t = sec_v();
        t.a = Mat::from_diagonal_element(2, 2, 0.5);
        let p = periodic_riccati_fixed_point(&t, &[0.0, 0.0]).unwrap();
        // Σ = 0.25 Σ + 0.1  =>  Σ = 0.1 / 0.75
        let sigma = 0.1 / 0.75;
        assert!((p[0].p[(0, 0)] - 1.0 / sigma).abs() < 1e-8);
    }

    #[test]
    fn steady_state_is_seed_independent() {
        let t = sec_v();
        let gammas = [0.9, 0.0, 0.0, 0.2];
        let s = FixedPointSettings::default();
        let a = periodic_riccati_fixed_point_with(&t, &gammas, &Mat::identity(2, 2), &s).unwrap();
        let b = periodic_riccati_fixed_point_with(
            &t,
            &gammas,
            &Mat::from_row_slice(2, 2, &[50.0, 3.0, 3.0, 0.5]),
            &s,
        )
        .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(linalg::rel_frobenius(&x.p, &y.p) < 1e-8);
        }
    }
}
