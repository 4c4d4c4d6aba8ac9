//! Affine expressions over scalar decision variables.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// `constant + Σ coeff·var`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: VarId, coeff: f64) -> Self {
        Self { terms: vec![(v, coeff)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: VarId, coeff: f64) {
        if coeff != 0.0 {
            self.terms.push((v, coeff));
        }
    }

    pub fn add_scaled(&mut self, other: &AffineExpr, scale: f64) {
        if scale == 0.0 {
            return;
        }
        self.constant += scale * other.constant;
        self.terms.extend(other.terms.iter().map(|&(v, c)| (v, c * scale)));
    }

    /// Merge repeated variables and drop zero coefficients; terms end up sorted.
    pub fn compact(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for &(v, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
    }

    pub fn compacted(mut self) -> Self {
        self.compact();
        self
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.1 == 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }

    pub fn max_var(&self) -> Option<VarId> {
        self.terms.iter().map(|t| t.0).max()
    }

    fn approx_eq(&self, other: &AffineExpr, tol: f64) -> bool {
        let a = self.clone().compacted();
        let b = other.clone().compacted();
        (a.constant - b.constant).abs() <= tol
            && a.terms.len() == b.terms.len()
            && a.terms
                .iter()
                .zip(&b.terms)
                .all(|(x, y)| x.0 == y.0 && (x.1 - y.1).abs() <= tol)
    }
}

impl From<f64> for AffineExpr {
    fn from(c: f64) -> Self {
        Self::constant(c)
    }
}

impl From<VarId> for AffineExpr {
    fn from(v: VarId) -> Self {
        Self::var(v)
    }
}

impl AddAssign<&AffineExpr> for AffineExpr {
    fn add_assign(&mut self, rhs: &AffineExpr) {
        self.add_scaled(rhs, 1.0);
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        self += &rhs;
        self
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(mut self, rhs: AffineExpr) -> AffineExpr {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Mul<f64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(self, rhs: f64) -> AffineExpr {
        let mut out = AffineExpr::zero();
        out.add_scaled(&self, rhs);
        out
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self * -1.0
    }
}

/// Dense row-major matrix whose entries are affine expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    rows: usize,
    cols: usize,
    data: Vec<AffineExpr>,
}

impl MatExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![AffineExpr::zero(); rows * cols] }
    }

    pub fn from_const(m: &Mat) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.get_mut(i, j).constant = m[(i, j)];
            }
        }
        out
    }

    pub fn identity(n: usize) -> Self {
        Self::from_const(&Mat::identity(n, n))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> &AffineExpr {
        &self.data[i * self.cols + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut AffineExpr {
        &mut self.data[i * self.cols + j]
    }

    pub fn entries(&self) -> impl Iterator<Item = &AffineExpr> {
        self.data.iter()
    }

    /// `self + scale·other`.
    pub fn add_scaled(mut self, other: &MatExpr, scale: f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "MatExpr shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            a.add_scaled(b, scale);
        }
        self
    }

    pub fn add_const(mut self, m: &Mat) -> Self {
        assert_eq!(self.shape(), m.shape(), "MatExpr shape mismatch");
        for i in 0..self.rows {
            for j in 0..self.cols {
                self.get_mut(i, j).constant += m[(i, j)];
            }
        }
        self
    }

    pub fn scale(mut self, s: f64) -> Self {
        for a in &mut self.data {
            *a = std::mem::take(a) * s;
        }
        self
    }

    /// `c·self` for a constant `c`.
    pub fn left_mul(&self, c: &Mat) -> Self {
        assert_eq!(c.ncols(), self.rows, "MatExpr shape mismatch");
        let mut out = Self::zeros(c.nrows(), self.cols);
        for i in 0..c.nrows() {
            for j in 0..self.cols {
                let e = out.get_mut(i, j);
                for t in 0..self.rows {
                    if c[(i, t)] != 0.0 {
                        e.add_scaled(self.get(t, j), c[(i, t)]);
                    }
                }
            }
        }
        out
    }

    /// `c·self·cᵀ`, symmetric when `self` is.
    pub fn congruence(&self, c: &Mat) -> Self {
        self.left_mul(c).transpose().left_mul(c).transpose()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.get_mut(j, i) = self.get(i, j).clone();
            }
        }
        out
    }

    /// `[[a, b], [c, d]]`.
    pub fn block2(a: &MatExpr, b: &MatExpr, c: &MatExpr, d: &MatExpr) -> Self {
        assert_eq!(a.rows, b.rows);
        assert_eq!(c.rows, d.rows);
        assert_eq!(a.cols, c.cols);
        assert_eq!(b.cols, d.cols);
        let mut out = Self::zeros(a.rows + c.rows, a.cols + b.cols);
        out.paste(0, 0, a);
        out.paste(0, a.cols, b);
        out.paste(a.rows, 0, c);
        out.paste(a.rows, a.cols, d);
        out
    }

    pub fn paste(&mut self, r0: usize, c0: usize, m: &MatExpr) {
        for i in 0..m.rows {
            for j in 0..m.cols {
                *self.get_mut(r0 + i, c0 + j) = m.get(i, j).clone();
            }
        }
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                *out.get_mut(i, j) = self.get(r0 + i, c0 + j).clone();
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(x))
    }

    /// Entry-wise structural symmetry up to `tol` on coefficients.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                (i + 1..self.cols).all(|j| self.get(i, j).approx_eq(self.get(j, i), tol))
            })
    }

    pub fn compact(&mut self) {
        for a in &mut self.data {
            a.compact();
        }
    }
}
