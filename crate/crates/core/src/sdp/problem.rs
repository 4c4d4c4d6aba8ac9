use serde::{Deserialize, Serialize};

use super::expr::{AffineExpr, MatExpr, VarId};
use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarVar {
    pub name: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Sparsity pattern imposed on a symmetric matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixStructure {
    Dense,
    /// Diagonal blocks of the given size; every other entry is fixed at zero.
    BlockDiagonal { block: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatrixVarId(pub usize);

/// Symmetric matrix variable; each free upper-triangle entry is a scalar variable.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixVar {
    pub name: String,
    pub dim: usize,
    pub structure: MatrixStructure,
    pub symmetric: bool,
    entries: Vec<Option<VarId>>,
}

impl MatrixVar {
    pub fn entry(&self, i: usize, j: usize) -> Option<VarId> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.entries[i * self.dim + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lmi {
    pub name: String,
    pub matrix: MatExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equality {
    pub name: String,
    pub expr: AffineExpr,
}

/// `minimize objective` subject to every LMI being PSD, every equality being
/// zero, and scalar bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdpProblem {
    pub scalars: Vec<ScalarVar>,
    pub matrix_vars: Vec<MatrixVar>,
    pub lmi_constraints: Vec<Lmi>,
    pub equality_constraints: Vec<Equality>,
    pub objective: AffineExpr,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.scalars.len()
    }

    pub fn add_scalar(
        &mut self,
        name: impl Into<String>,
        lower: Option<f64>,
        upper: Option<f64>,
    ) -> VarId {
        self.scalars.push(ScalarVar { name: name.into(), lower, upper });
        VarId(self.scalars.len() - 1)
    }

    pub fn add_free(&mut self, name: impl Into<String>) -> VarId {
        self.add_scalar(name, None, None)
    }

    pub fn add_sym_matrix(
        &mut self,
        name: impl Into<String>,
        dim: usize,
        structure: MatrixStructure,
    ) -> Result<MatrixVarId> {
        let name = name.into();
        if let MatrixStructure::BlockDiagonal { block } = structure {
            if block == 0 || !dim.is_multiple_of(block) {
                return Err(Error::MalformedProblem(format!(
                    "{name}: block size {block} does not divide {dim}"
                )));
            }
        }
        let mut entries = vec![None; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let free = match structure {
                    MatrixStructure::Dense => true,
                    MatrixStructure::BlockDiagonal { block } => i / block == j / block,
                };
                if free {
                    entries[i * dim + j] = Some(self.add_free(format!("{name}[{i},{j}]")));
                }
            }
        }
        self.matrix_vars.push(MatrixVar { name, dim, structure, symmetric: true, entries });
        Ok(MatrixVarId(self.matrix_vars.len() - 1))
    }

    pub fn matrix_var(&self, id: MatrixVarId) -> &MatrixVar {
        &self.matrix_vars[id.0]
    }

    /// The variable as an expression matrix.
    pub fn matrix_expr(&self, id: MatrixVarId) -> MatExpr {
        let mv = self.matrix_var(id);
        let mut out = MatExpr::zeros(mv.dim, mv.dim);
        for i in 0..mv.dim {
            for j in 0..mv.dim {
                if let Some(v) = mv.entry(i, j) {
                    *out.get_mut(i, j) = AffineExpr::var(v);
                }
            }
        }
        out
    }

    /// Square diagonal sub-block starting at `offset`.
    pub fn matrix_block_expr(&self, id: MatrixVarId, offset: usize, size: usize) -> MatExpr {
        let mv = self.matrix_var(id);
        let mut out = MatExpr::zeros(size, size);
        for i in 0..size {
            for j in 0..size {
                if let Some(v) = mv.entry(offset + i, offset + j) {
                    *out.get_mut(i, j) = AffineExpr::var(v);
                }
            }
        }
        out
    }

    /// Trace of a matrix variable as an affine expression.
    pub fn trace_expr(&self, id: MatrixVarId) -> AffineExpr {
        let mv = self.matrix_var(id);
        let mut e = AffineExpr::zero();
        for i in 0..mv.dim {
            if let Some(v) = mv.entry(i, i) {
                e.add_term(v, 1.0);
            }
        }
        e
    }

    pub fn trace_expr_of(&self, m: &MatExpr) -> AffineExpr {
        let mut e = AffineExpr::zero();
        for i in 0..m.nrows() {
            e.add_scaled(m.get(i, i), 1.0);
        }
        e
    }

    pub fn add_lmi(&mut self, name: impl Into<String>, mut matrix: MatExpr) -> Result<usize> {
        let name = name.into();
        let (r, c) = matrix.shape();
        if r != c || r == 0 {
            return Err(Error::MalformedProblem(format!("LMI {name} is {r}×{c}")));
        }
        matrix.compact();
        let scale = matrix
            .entries()
            .flat_map(|e| e.terms.iter().map(|t| t.1.abs()).chain([e.constant.abs()]))
            .fold(1.0f64, f64::max);
        if !matrix.is_symmetric(1e-12 * scale) {
            return Err(Error::MalformedProblem(format!("LMI {name} is not symmetric")));
        }
        self.check_vars(matrix.entries(), &name)?;
        self.lmi_constraints.push(Lmi { name, matrix });
        Ok(self.lmi_constraints.len() - 1)
    }

    pub fn add_equality(&mut self, name: impl Into<String>, expr: AffineExpr) -> Result<usize> {
        let name = name.into();
        let expr = expr.compacted();
        self.check_vars(std::iter::once(&expr), &name)?;
        self.equality_constraints.push(Equality { name, expr });
        Ok(self.equality_constraints.len() - 1)
    }

    pub fn set_objective(&mut self, expr: AffineExpr) -> Result<()> {
        let expr = expr.compacted();
        self.check_vars(std::iter::once(&expr), "objective")?;
        self.objective = expr;
        Ok(())
    }

    fn check_vars<'a>(
        &self,
        exprs: impl Iterator<Item = &'a AffineExpr>,
        name: &str,
    ) -> Result<()> {
        let n = self.n_vars();
        for e in exprs {
            if let Some(v) = e.max_var() {
                if v.0 >= n {
                    return Err(Error::MalformedProblem(format!(
                        "{name} references undeclared variable {}",
                        v.0
                    )));
                }
            }
        }
        Ok(())
    }

    /// Re-check every invariant (used before handing the problem to a backend).
    pub fn validate(&self) -> Result<()> {
        for l in &self.lmi_constraints {
            let (r, c) = l.matrix.shape();
            if r != c {
                return Err(Error::MalformedProblem(format!("LMI {} not square", l.name)));
            }
            self.check_vars(l.matrix.entries(), &l.name)?;
        }
        for e in &self.equality_constraints {
            self.check_vars(std::iter::once(&e.expr), &e.name)?;
        }
        self.check_vars(std::iter::once(&self.objective), "objective")?;
        for (k, s) in self.scalars.iter().enumerate() {
            if let (Some(lo), Some(hi)) = (s.lower, s.upper) {
                if lo > hi {
                    return Err(Error::MalformedProblem(format!(
                        "variable {k} ({}) has lower bound above upper bound",
                        s.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Dense symmetric matrix value of a matrix variable.
pub fn matrix_value(problem: &SdpProblem, id: MatrixVarId, x: &[f64]) -> Mat {
    let mv = problem.matrix_var(id);
    Mat::from_fn(mv.dim, mv.dim, |i, j| mv.entry(i, j).map_or(0.0, |v| x[v.0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_diagonal_variable_count() {
        let mut p = SdpProblem::new();
        let id = p.add_sym_matrix("X", 6, MatrixStructure::BlockDiagonal { block: 2 }).unwrap();
        assert_eq!(p.n_vars(), 9);
        assert!(p.matrix_var(id).entry(0, 2).is_none());
        assert_eq!(p.matrix_var(id).entry(1, 0), p.matrix_var(id).entry(0, 1));
        let d = p.add_sym_matrix("Y", 3, MatrixStructure::Dense).unwrap();
        assert_eq!(p.n_vars(), 15);
        assert_eq!(p.trace_expr(d).terms.len(), 3);
        assert!(p.add_sym_matrix("Z", 5, MatrixStructure::BlockDiagonal { block: 2 }).is_err());
    }

    #[test]
    fn rejects_undeclared_and_asymmetric() {
        let mut p = SdpProblem::new();
        let x = p.add_free("x");
        assert!(p.add_equality("bad", AffineExpr::var(VarId(5))).is_err());
        let mut m = MatExpr::identity(2);
        *m.get_mut(0, 1) = AffineExpr::var(x);
        assert!(p.add_lmi("asym", m.clone()).is_err());
        *m.get_mut(1, 0) = AffineExpr::var(x);
        assert!(p.add_lmi("sym", m).is_ok());
        assert!(p.add_lmi("rect", MatExpr::zeros(2, 3)).is_err());
        assert!(p.validate().is_ok());
    }
}
