//! The periodic information ARE as an SDP:
//!
//! ```text
//! minimize tr(Γ)
//!   s.t. [[Q̃⁻¹ − Π + γ̃G̃, Q̃⁻¹Ã], [ÃᵀQ̃⁻¹, Π + ÃᵀQ̃⁻¹Ã]] ⪰ 0
//!        [[Γ, I], [I, Π]] ⪰ 0,   Γ, Π ⪰ 0
//! ```
//!
//! At the optimum `Π*` solves the ARE and `Γ* = (Π*)⁻¹`.
//!
//! With [`MatrixStructure::BlockDiagonal`] variables the big LMI is a
//! symmetric permutation of `τ` independent `2L×2L` LMIs
//! `[[Q⁻¹ − Π_k + γ_k G, Q⁻¹A], [AᵀQ⁻¹, Π_{k−1} + AᵀQ⁻¹A]] ⪰ 0`,
//! and that is what gets emitted.
//!
//! The solver works on scaled blocks `Π_k = S_k Π'_k S_kᵀ`, `Γ_k = S_k⁻ᵀ Γ'_k S_k⁻¹`
//! (a congruence, so feasibility and the optimum are unchanged). The first
//! pass uses `S_k = √α·I` with `α = ‖Q̃⁻¹‖₂`.
//!
//! When `Π` is small next to `Q⁻¹` the slot LMI is badly conditioned: its
//! Schur complement is a small difference of large constants. If the first
//! certificate fails, a second pass anchors every slot at the first-pass
//! estimate `Π̂`: `S_k` becomes the Cholesky factor of `Π̂_k`, and the slot LMI
//! is multiplied by `[[I, X], [0, I]]` with `X = −Q⁻¹A(AᵀQ⁻¹A + Π̂_{k−1})⁻¹`.
//! The top-left constant is then `(Q + AΠ̂_{k−1}⁻¹Aᵀ)⁻¹ − XΠ̂_{k−1}Xᵀ`, evaluated
//! directly, and the coupling block is `X(Π_{k−1} − Π̂_{k−1})`.
//!
//! The anchored pass also minimizes `Σ_k tr Γ'_k` instead of `tr Γ`. Every
//! feasible `Π` satisfies `Π ⪯ Π*`, so `⟨W, Γ⟩` has the minimizer `Γ = (Π*)⁻¹`
//! for any `W ≻ 0`; the plain trace underweights well-observed directions and
//! leaves them inaccurate. Extraction undoes all of this, so callers only ever
//! see `Γ`, `Π` and `tr Γ`.

use serde::{Deserialize, Serialize};

use super::expr::{AffineExpr, MatExpr};
use super::problem::{MatrixStructure, MatrixVarId, SdpProblem};
use super::{solve, SdpSolution, SdpStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::filtering::AugmentedPeriodicSystem;
use crate::linalg::{self, Mat};

/// Variable layout for Γ and Π.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VariableStructure {
    #[default]
    BlockDiagonal,
    Dense,
}

/// Per-slot change of variables `Π_k = S_k Π'_k S_kᵀ`, `Γ_k = S_k⁻ᵀ Γ'_k S_k⁻¹`,
/// optionally anchored at an estimate `Π̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotScaling {
    s: Vec<Mat>,
    s_inv: Vec<Mat>,
    anchor: Option<Vec<Mat>>,
}

impl SlotScaling {
    /// `S_k = √α·I` for every slot.
    pub fn uniform(tau: usize, l: usize, alpha: f64) -> Self {
        let root = alpha.sqrt();
        Self {
            s: vec![Mat::identity(l, l) * root; tau],
            s_inv: vec![Mat::identity(l, l) / root; tau],
            anchor: None,
        }
    }

    /// `S_k` = lower Cholesky factor of the estimate `Π̂_k`, which also
    /// becomes the elimination anchor.
    pub fn anchored(estimate: &[Mat]) -> Result<Self> {
        let mut s = Vec::with_capacity(estimate.len());
        let mut s_inv = Vec::with_capacity(estimate.len());
        for b in estimate {
            let l = linalg::require_pd(b, "Π estimate")?.l();
            let inv = l
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::NotPositiveDefinite("Π estimate".into()))?;
            s.push(l);
            s_inv.push(inv);
        }
        Ok(Self { s, s_inv, anchor: Some(estimate.iter().map(linalg::symmetrize).collect()) })
    }

    pub fn tau(&self) -> usize {
        self.s.len()
    }

    pub fn is_anchored(&self) -> bool {
        self.anchor.is_some()
    }

    /// `S_k⁻¹ M S_c⁻ᵀ`.
    fn congruence(&self, k: usize, m: &Mat, c: usize) -> Mat {
        &self.s_inv[k] * m * self.s_inv[c].transpose()
    }

    /// `S_k⁻¹ S_k⁻ᵀ`, so that `tr Γ_k = ⟨W_k, Γ'_k⟩`.
    pub fn weight(&self, k: usize) -> Mat {
        linalg::symmetrize(&(&self.s_inv[k] * self.s_inv[k].transpose()))
    }

    pub fn unscale_pi(&self, k: usize, pi_scaled: &Mat) -> Mat {
        linalg::symmetrize(&(&self.s[k] * pi_scaled * self.s[k].transpose()))
    }

    pub fn unscale_gamma(&self, k: usize, gamma_scaled: &Mat) -> Mat {
        linalg::symmetrize(&(self.s_inv[k].transpose() * gamma_scaled * &self.s_inv[k]))
    }

    fn full(&self, m: &[Mat]) -> Mat {
        linalg::block_diag(m)
    }
}

#[derive(Debug, Clone)]
pub struct Prop1Problem {
    pub problem: SdpProblem,
    pub gamma: MatrixVarId,
    pub pi: MatrixVarId,
    pub scaling: SlotScaling,
    pub tau: usize,
    pub block: usize,
    pub structure: VariableStructure,
    aug: AugmentedPeriodicSystem,
    gammas: Vec<f64>,
}

impl std::ops::Deref for Prop1Problem {
    type Target = SdpProblem;
    fn deref(&self) -> &SdpProblem {
        &self.problem
    }
}

impl Prop1Problem {
    /// Unscaled `(Γ, Π)` from a solution of this problem.
    pub fn extract(&self, sdp: &SdpSolution) -> (Mat, Mat) {
        let g = sdp.matrix(&self.problem, self.gamma);
        let p = sdp.matrix(&self.problem, self.pi);
        match self.structure {
            VariableStructure::BlockDiagonal => {
                let l = self.block;
                let gs: Vec<_> = linalg::diag_blocks(&g, l)
                    .iter()
                    .enumerate()
                    .map(|(k, b)| self.scaling.unscale_gamma(k, b))
                    .collect();
                let ps: Vec<_> = linalg::diag_blocks(&p, l)
                    .iter()
                    .enumerate()
                    .map(|(k, b)| self.scaling.unscale_pi(k, b))
                    .collect();
                (linalg::block_diag(&gs), linalg::block_diag(&ps))
            }
            VariableStructure::Dense => {
                let s = self.scaling.full(&self.scaling.s);
                let si = self.scaling.full(&self.scaling.s_inv);
                (
                    linalg::symmetrize(&(si.transpose() * g * &si)),
                    linalg::symmetrize(&(&s * p * s.transpose())),
                )
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prop1Solution {
    pub sdp: SdpSolution,
    /// Unscaled Γ*.
    pub gamma: Mat,
    /// Unscaled Π*.
    pub pi: Mat,
    /// `tr Γ*`.
    pub objective: f64,
    /// Number of solves performed (2 when the anchored pass ran).
    pub passes: usize,
}

pub fn build_prop1(aug: &AugmentedPeriodicSystem, gammas: &[f64]) -> Result<Prop1Problem> {
    build_prop1_with(aug, gammas, VariableStructure::BlockDiagonal)
}

/// Data of the slot-`k` Riccati LMI in solver coordinates, with `p = k − 1`:
/// `[[c11 − Π'_k + γ_k·gain + x Π'_p xᵀ, c12 + x Π'_p], [·, Π'_p + c22]] ⪰ 0`.
pub(crate) struct SlotBlocks {
    pub c11: Mat,
    pub c12: Mat,
    pub c22: Mat,
    pub x: Option<Mat>,
    pub gain: Mat,
}

pub(crate) fn slot_blocks(
    aug: &AugmentedPeriodicSystem,
    scaling: &SlotScaling,
) -> Result<Vec<SlotBlocks>> {
    let l = aug.block;
    if scaling.tau() != aug.tau {
        return Err(Error::Dimension(format!(
            "scaling for {} slots, cycle of length {}",
            scaling.tau(),
            aug.tau
        )));
    }
    let qa = &aug.q_tilde_inv * &aug.a_tilde;
    let n = aug.a_tilde.transpose() * &qa;
    let block = |m: &Mat, r: usize, c: usize| m.view((r * l, c * l), (l, l)).into_owned();
    (0..aug.tau)
        .map(|k| {
            let p = aug.predecessor(k);
            // the decomposition needs Q̃⁻¹Ã to couple slot k only to its predecessor
            for c in 0..aug.tau {
                if c != p && qa.view((k * l, c * l), (l, l)).amax() > 0.0 {
                    return Err(Error::MalformedProblem(format!(
                        "augmented system couples slot {k} to non-predecessor slot {c}"
                    )));
                }
            }
            let qinv = block(&aug.q_tilde_inv, k, k);
            let coupling = block(&qa, k, p);
            let inner = linalg::symmetrize(&block(&n, p, p));
            let (c11, c12, x) = match &scaling.anchor {
                None => (qinv, coupling, None),
                Some(anchor) => {
                    let pi_hat = &anchor[p];
                    let k_inv = linalg::spd_inverse(&(&inner + pi_hat), "AᵀQ⁻¹A + Π̂")?;
                    let x = -(&coupling * k_inv);
                    let a = block(&aug.a_tilde, k, p);
                    let q = linalg::spd_inverse(&qinv, "Q̃⁻¹ block")?;
                    let sigma_hat = linalg::spd_inverse(pi_hat, "Π̂")?;
                    let predicted = linalg::spd_inverse(&(q + &a * sigma_hat * a.transpose()), "Q + AΣ̂Aᵀ")?;
                    let c11 = predicted - &x * pi_hat * x.transpose();
                    let c12 = -(&x * pi_hat);
                    (c11, c12, Some(x))
                }
            };
            Ok(SlotBlocks {
                c11: linalg::symmetrize(&scaling.congruence(k, &c11, k)),
                c12: scaling.congruence(k, &c12, p),
                c22: linalg::symmetrize(&scaling.congruence(p, &inner, p)),
                x: x.map(|x| &scaling.s_inv[k] * x * &scaling.s[p]),
                gain: linalg::symmetrize(&scaling.congruence(k, &block(&aug.g_tilde, k, k), k)),
            })
        })
        .collect()
}

/// `⟨W, M⟩` for a constant `W`.
pub(crate) fn weighted_trace(m: &MatExpr, w: &Mat) -> AffineExpr {
    let mut e = AffineExpr::zero();
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            if w[(i, j)] != 0.0 {
                e.add_scaled(m.get(i, j), w[(i, j)]);
            }
        }
    }
    e
}

/// Emit the Riccati LMIs for one target into `problem`, given the scaled
/// block variables `pi[k]`, `gamma[k]` and the per-slot `γ_k` expressions.
pub(crate) fn add_riccati_block_lmis(
    problem: &mut SdpProblem,
    tag: &str,
    blocks: &[SlotBlocks],
    pi: &[MatExpr],
    gamma: &[MatExpr],
    gamma_k: &[AffineExpr],
) -> Result<()> {
    let tau = blocks.len();
    let l = blocks[0].c11.nrows();
    for k in 0..tau {
        let prev = (k + tau - 1) % tau;
        let sb = &blocks[k];
        // (1,1) = Q⁻¹ − Π_k + γ_k G
        let mut gain_term = MatExpr::zeros(l, l);
        for i in 0..l {
            for j in 0..l {
                *gain_term.get_mut(i, j) = gamma_k[k].clone() * sb.gain[(i, j)];
            }
        }
        let mut top_left =
            MatExpr::from_const(&sb.c11).add_scaled(&pi[k], -1.0).add_scaled(&gain_term, 1.0);
        let mut top_right = MatExpr::from_const(&sb.c12);
        if let Some(x) = &sb.x {
            top_left = top_left.add_scaled(&pi[prev].congruence(x), 1.0);
            top_right = top_right.add_scaled(&pi[prev].left_mul(x), 1.0);
        }
        let bottom_right = pi[prev].clone().add_const(&sb.c22);
        let lmi = MatExpr::block2(&top_left, &top_right, &top_right.transpose(), &bottom_right);
        problem.add_lmi(format!("{tag}riccati[{k}]"), lmi)?;

        let eye = MatExpr::identity(l);
        let bound = MatExpr::block2(&gamma[k], &eye, &eye, &pi[k]);
        problem.add_lmi(format!("{tag}gamma_bound[{k}]"), bound)?;
        problem.add_lmi(format!("{tag}gamma_psd[{k}]"), gamma[k].clone())?;
        problem.add_lmi(format!("{tag}pi_psd[{k}]"), pi[k].clone())?;
    }
    Ok(())
}

fn check_gammas(aug: &AugmentedPeriodicSystem, gammas: &[f64]) -> Result<()> {
    if gammas.len() != aug.tau {
        return Err(Error::Dimension(format!(
            "{} γ values for a cycle of length {}",
            gammas.len(),
            aug.tau
        )));
    }
    Ok(())
}

pub fn build_prop1_with(
    aug: &AugmentedPeriodicSystem,
    gammas: &[f64],
    structure: VariableStructure,
) -> Result<Prop1Problem> {
    check_gammas(aug, gammas)?;
    let alpha = linalg::spectral_norm(&aug.q_tilde_inv);
    let scaling = SlotScaling::uniform(aug.tau, aug.block, alpha);
    match structure {
        VariableStructure::BlockDiagonal => build_prop1_scaled(aug, gammas, scaling),
        VariableStructure::Dense => build_dense(aug, gammas, scaling, alpha),
    }
}

/// Block-diagonal problem under an explicit scaling.
pub fn build_prop1_scaled(
    aug: &AugmentedPeriodicSystem,
    gammas: &[f64],
    scaling: SlotScaling,
) -> Result<Prop1Problem> {
    check_gammas(aug, gammas)?;
    let l = aug.block;
    let mut problem = SdpProblem::new();
    let ms = MatrixStructure::BlockDiagonal { block: l };
    let gamma = problem.add_sym_matrix("Gamma", aug.dim(), ms)?;
    let pi = problem.add_sym_matrix("Pi", aug.dim(), ms)?;
    let blocks = slot_blocks(aug, &scaling)?;
    let pis: Vec<_> = (0..aug.tau).map(|k| problem.matrix_block_expr(pi, k * l, l)).collect();
    let gs: Vec<_> = (0..aug.tau).map(|k| problem.matrix_block_expr(gamma, k * l, l)).collect();
    let gk: Vec<_> = gammas.iter().map(|&g| AffineExpr::constant(g)).collect();
    add_riccati_block_lmis(&mut problem, "", &blocks, &pis, &gs, &gk)?;
    let mut objective = AffineExpr::zero();
    for (k, g) in gs.iter().enumerate() {
        if scaling.is_anchored() {
            objective += &problem.trace_expr_of(g);
        } else {
            objective += &weighted_trace(g, &scaling.weight(k));
        }
    }
    problem.set_objective(objective)?;
    Ok(Prop1Problem {
        problem,
        gamma,
        pi,
        scaling,
        tau: aug.tau,
        block: l,
        structure: VariableStructure::BlockDiagonal,
        aug: aug.clone(),
        gammas: gammas.to_vec(),
    })
}

fn build_dense(
    aug: &AugmentedPeriodicSystem,
    gammas: &[f64],
    scaling: SlotScaling,
    alpha: f64,
) -> Result<Prop1Problem> {
    let dim = aug.dim();
    let mut problem = SdpProblem::new();
    let gamma = problem.add_sym_matrix("Gamma", dim, MatrixStructure::Dense)?;
    let pi = problem.add_sym_matrix("Pi", dim, MatrixStructure::Dense)?;
    let qinv = &aug.q_tilde_inv / alpha;
    let qa = &aug.q_tilde_inv * &aug.a_tilde / alpha;
    let n = aug.a_tilde.transpose() * &aug.q_tilde_inv * &aug.a_tilde / alpha;
    let gg = aug.gamma_tilde(gammas) * &aug.g_tilde / alpha;
    let pe = problem.matrix_expr(pi);
    let ge = problem.matrix_expr(gamma);
    let top_left = MatExpr::from_const(&linalg::symmetrize(&(qinv + gg))).add_scaled(&pe, -1.0);
    let top_right = MatExpr::from_const(&qa);
    let bottom_right = pe.clone().add_const(&linalg::symmetrize(&n));
    let lmi = MatExpr::block2(&top_left, &top_right, &top_right.transpose(), &bottom_right);
    problem.add_lmi("riccati", lmi)?;
    let eye = MatExpr::identity(dim);
    problem.add_lmi("gamma_bound", MatExpr::block2(&ge, &eye, &eye, &pe))?;
    problem.add_lmi("gamma_psd", ge)?;
    problem.add_lmi("pi_psd", pe)?;
    problem.set_objective(problem.trace_expr(gamma) * (1.0 / alpha))?;
    Ok(Prop1Problem {
        problem,
        gamma,
        pi,
        scaling,
        tau: aug.tau,
        block: aug.block,
        structure: VariableStructure::Dense,
        aug: aug.clone(),
        gammas: gammas.to_vec(),
    })
}

/// Relative certificate level below which the first pass is kept.
pub const ANCHOR_TRIGGER_TOL: f64 = 1e-7;

/// Solve, and for block-diagonal problems re-solve once anchored at the first
/// solution if that one fails its certificate.
pub fn solve_prop1(p: &Prop1Problem, settings: &SolverSettings) -> Result<Prop1Solution> {
    let first = solve_once(p, settings)?;
    if p.structure == VariableStructure::Dense || !first.sdp.is_optimal() {
        return Ok(first);
    }
    let cert = Prop1Certificate::from_values(&first.gamma, &first.pi, &p.aug, &p.gammas)?;
    if cert.accepted_with(ANCHOR_TRIGGER_TOL) {
        return Ok(first);
    }
    let Ok(scaling) = SlotScaling::anchored(&linalg::diag_blocks(&first.pi, p.block)) else {
        return Ok(first);
    };
    let second = build_prop1_scaled(&p.aug, &p.gammas, scaling)?;
    let mut sol = solve_once(&second, settings)?;
    sol.passes = 2;
    if sol.sdp.is_optimal() {
        Ok(sol)
    } else {
        log::warn!("anchored Riccati SDP ended {}; keeping the first pass", sol.sdp.status);
        Ok(Prop1Solution { passes: 2, ..first })
    }
}

fn solve_once(p: &Prop1Problem, settings: &SolverSettings) -> Result<Prop1Solution> {
    let sdp = solve(&p.problem, settings)?;
    let (gamma, pi) = p.extract(&sdp);
    let objective = if p.scaling.is_anchored() { gamma.trace() } else { sdp.objective };
    Ok(Prop1Solution { sdp, gamma, pi, objective, passes: 1 })
}

/// Primal-only tightness certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Certificate {
    /// Spectral norm of the ARE left-hand side at Π*.
    pub are_residual: f64,
    /// `‖Γ*Π* − I‖₂`.
    pub inverse_gap: f64,
    pub min_eig_gamma: f64,
    pub min_eig_pi: f64,
    pub gamma_norm: f64,
    pub pi_norm: f64,
}

impl Prop1Certificate {
    pub const RELATIVE_TOL: f64 = 1e-6;

    pub fn accepted(&self) -> bool {
        self.accepted_with(Self::RELATIVE_TOL)
    }

    pub fn accepted_with(&self, tol: f64) -> bool {
        self.are_residual < tol * self.pi_norm
            && self.inverse_gap < tol * self.gamma_norm * self.pi_norm
    }

    pub fn from_values(
        gamma: &Mat,
        pi: &Mat,
        aug: &AugmentedPeriodicSystem,
        gammas: &[f64],
    ) -> Result<Self> {
        let are = aug.are_lhs(pi, gammas)?;
        let eye = Mat::identity(pi.nrows(), pi.ncols());
        Ok(Self {
            are_residual: linalg::spectral_norm(&are),
            inverse_gap: linalg::spectral_norm(&(gamma * pi - eye)),
            min_eig_gamma: linalg::min_eigenvalue(gamma),
            min_eig_pi: linalg::min_eigenvalue(pi),
            gamma_norm: linalg::spectral_norm(gamma),
            pi_norm: linalg::spectral_norm(pi),
        })
    }
}

pub fn verify_prop1(
    solution: &Prop1Solution,
    aug: &AugmentedPeriodicSystem,
    gammas: &[f64],
) -> Result<Prop1Certificate> {
    if solution.sdp.status != SdpStatus::Optimal {
        return Err(Error::NotOptimal(solution.sdp.status.to_string()));
    }
    Prop1Certificate::from_values(&solution.gamma, &solution.pi, aug, gammas)
}
