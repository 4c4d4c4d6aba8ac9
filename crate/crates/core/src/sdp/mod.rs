//! Backend-agnostic semidefinite programs, the solver adapter, and the
//! Riccati-equation SDP with its certificate.

pub mod expr;
pub mod problem;
pub mod prop1;
pub mod sdpa;

#[cfg(feature = "clarabel")]
mod clarabel_backend;

use serde::{Deserialize, Serialize};

pub use expr::{AffineExpr, MatExpr, VarId};
pub use problem::{MatrixStructure, MatrixVarId, SdpProblem};
pub use prop1::{
    build_prop1, build_prop1_scaled, build_prop1_with, solve_prop1, verify_prop1, Prop1Certificate, Prop1Problem,
    Prop1Solution, SlotScaling, VariableStructure,
};

use crate::error::Result;
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl std::fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub backend: String,
    /// Status string as reported by the backend.
    pub backend_status: String,
    pub iterations: u32,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|primal − dual|`.
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Value per scalar variable (meaningful when Optimal).
    pub x: Vec<f64>,
    /// Dual matrix per LMI, in constraint order.
    pub lmi_duals: Vec<Mat>,
    pub equality_duals: Vec<f64>,
    pub objective: f64,
    pub diagnostics: SolverDiagnostics,
}

impl SdpSolution {
    pub fn value(&self, v: VarId) -> f64 {
        self.x[v.0]
    }

    pub fn eval(&self, e: &AffineExpr) -> f64 {
        e.eval(&self.x)
    }

    pub fn matrix(&self, problem: &SdpProblem, id: MatrixVarId) -> Mat {
        problem::matrix_value(problem, id, &self.x)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
    /// Seconds; `None` for unlimited.
    pub time_limit: Option<f64>,
    pub verbose: bool,
    /// Let the backend split PSD cones along a chordal sparsity pattern.
    /// Off by default: every LMI emitted here is already small, and the
    /// decomposition costs accuracy on ill-conditioned instances.
    pub chordal_decomposition: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_gap_abs: 1e-8,
            tol_gap_rel: 1e-8,
            tol_feas: 1e-8,
            max_iter: 200,
            time_limit: None,
            verbose: false,
            chordal_decomposition: false,
        }
    }
}

/// A conic solver able to handle PSD cones and linear equalities.
pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution>;
}

/// The backend compiled into this build.
pub fn default_backend() -> Result<&'static dyn SdpBackend> {
    #[cfg(feature = "clarabel")]
    {
        Ok(&clarabel_backend::Clarabel)
    }
    #[cfg(not(feature = "clarabel"))]
    {
        Err(crate::error::Error::BackendUnavailable)
    }
}

/// Solve with the default backend.
pub fn solve(problem: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution> {
    problem.validate()?;
    default_backend()?.solve(problem, settings)
}

/// Scaled upper-triangle vectorization used by the PSD cone: column-major
/// upper triangle with off-diagonal entries multiplied by √2.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn svec_index(i: usize, j: usize) -> usize {
    let (row, col) = if i <= j { (i, j) } else { (j, i) };
    col * (col + 1) / 2 + row
}

pub fn smat(v: &[f64], n: usize) -> Mat {
    let mut m = Mat::zeros(n, n);
    for col in 0..n {
        for row in 0..=col {
            let x = v[svec_index(row, col)];
            if row == col {
                m[(row, col)] = x;
            } else {
                m[(row, col)] = x * std::f64::consts::FRAC_1_SQRT_2;
                m[(col, row)] = x * std::f64::consts::FRAC_1_SQRT_2;
            }
        }
    }
    m
}
