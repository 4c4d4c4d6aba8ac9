//! Translation of [`SdpProblem`] into Clarabel's canonical form
//!
//! `min qᵀx  s.t.  Ax + s = b,  s ∈ K`
//!
//! with `K` = zero cone (equalities) × nonnegative cone (scalar bounds and
//! 1×1 LMIs) × one PSD triangle cone per remaining LMI. For an LMI
//! `M(x) = C + Σ x_j M_j ⪰ 0` the slack is `s = svec(M(x))`, so the rows are
//! `A = −svec(M_j)` and `b = svec(C)`.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::expr::AffineExpr;
use super::problem::SdpProblem;
use super::{smat, svec_index, svec_len, SdpBackend, SdpSolution, SdpStatus, SolverDiagnostics, SolverSettings};
use crate::error::{Error, Result};

pub(crate) struct Clarabel;

#[derive(Default)]
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    /// Append one row encoding `s = expr(x)` (so `A = −coeffs`, `b = constant`).
    fn push_expr(&mut self, e: &AffineExpr, scale: f64) {
        let row = self.b.len();
        for &(var, c) in &e.terms {
            self.i.push(row);
            self.j.push(var.0);
            self.v.push(-c * scale);
        }
        self.b.push(e.constant * scale);
    }
}

enum LmiSlot {
    Scalar(usize),
    Psd { offset: usize, dim: usize },
}

fn map_status(s: SolverStatus) -> SdpStatus {
    match s {
        SolverStatus::Solved => SdpStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SdpStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SdpStatus::Unbounded,
        _ => SdpStatus::NumericalFailure,
    }
}

impl SdpBackend for Clarabel {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, problem: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution> {
        let started = Instant::now();
        let n = problem.n_vars();
        let mut rows = Rows::default();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        let n_eq = problem.equality_constraints.len();
        for eq in &problem.equality_constraints {
            rows.push_expr(&eq.expr, 1.0);
        }
        if n_eq > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_eq));
        }

        let mut n_nonneg = 0;
        for (k, var) in problem.scalars.iter().enumerate() {
            let x = AffineExpr::var(super::VarId(k));
            if let Some(lo) = var.lower {
                rows.push_expr(&(x.clone() - AffineExpr::constant(lo)), 1.0);
                n_nonneg += 1;
            }
            if let Some(hi) = var.upper {
                rows.push_expr(&(AffineExpr::constant(hi) - x), 1.0);
                n_nonneg += 1;
            }
        }
        // 1×1 LMIs join the nonnegative cone; remember their rows.
        let mut all_slots: Vec<Option<LmiSlot>> = problem
            .lmi_constraints
            .iter()
            .map(|lmi| {
                (lmi.matrix.nrows() == 1).then(|| {
                    let row = rows.b.len();
                    rows.push_expr(lmi.matrix.get(0, 0), 1.0);
                    n_nonneg += 1;
                    LmiSlot::Scalar(row)
                })
            })
            .collect();
        if n_nonneg > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(n_nonneg));
        }
        for (lmi, slot) in problem.lmi_constraints.iter().zip(all_slots.iter_mut()) {
            let dim = lmi.matrix.nrows();
            if slot.is_some() {
                continue;
            }
            let offset = rows.b.len();
            for col in 0..dim {
                for row in 0..=col {
                    debug_assert_eq!(rows.b.len() - offset, svec_index(row, col));
                    let scale = if row == col { 1.0 } else { std::f64::consts::SQRT_2 };
                    rows.push_expr(lmi.matrix.get(row, col), scale);
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(dim));
            *slot = Some(LmiSlot::Psd { offset, dim });
        }

        let m = rows.b.len();
        let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);
        let p = CscMatrix::<f64>::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(v, c) in &problem.objective.terms {
            q[v.0] += c;
        }

        let cs = DefaultSettings::<f64> {
            max_iter: settings.max_iter,
            time_limit: settings.time_limit.unwrap_or(f64::INFINITY),
            verbose: settings.verbose,
            tol_gap_abs: settings.tol_gap_abs,
            tol_gap_rel: settings.tol_gap_rel,
            tol_feas: settings.tol_feas,
            chordal_decomposition_enable: settings.chordal_decomposition,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &q, &a, &rows.b, &cones, cs)
            .map_err(|e| Error::Backend(format!("{e:?}")))?;
        solver.solve();

        let sol = &solver.solution;
        let info = &solver.info;
        let status = map_status(sol.status);

        let lmi_duals = all_slots
            .iter()
            .map(|slot| match *slot.as_ref().expect("every LMI has a slot") {
                LmiSlot::Scalar(r) => crate::linalg::Mat::from_element(1, 1, sol.z[r]),
                LmiSlot::Psd { offset, dim } => smat(&sol.z[offset..offset + svec_len(dim)], dim),
            })
            .collect();

        let constant = problem.objective.constant;
        Ok(SdpSolution {
            status,
            x: sol.x.clone(),
            lmi_duals,
            equality_duals: sol.z[..n_eq].to_vec(),
            objective: sol.obj_val + constant,
            diagnostics: SolverDiagnostics {
                backend: self.name().into(),
                backend_status: format!("{:?}", sol.status),
                iterations: sol.iterations,
                primal_objective: sol.obj_val + constant,
                dual_objective: sol.obj_val_dual + constant,
                gap: info.gap_abs,
                primal_residual: sol.r_prim,
                dual_residual: sol.r_dual,
                solve_seconds: started.elapsed().as_secs_f64(),
            },
        })
    }
}
