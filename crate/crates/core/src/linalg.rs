//! Small dense helpers over `nalgebra::DMatrix`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vec2 = nalgebra::Vector2<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Cholesky-based positive definiteness test.
pub fn is_positive_definite(m: &Mat) -> bool {
    m.is_square() && m.iter().all(|v| v.is_finite()) && symmetrize(m).cholesky().is_some()
}

pub fn require_pd(m: &Mat, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what} is not square")));
    }
    symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(m: &Mat, what: &str) -> Result<Mat> {
    Ok(symmetrize(&require_pd(m, what)?.inverse()))
}

pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Numerical rank with a singular-value threshold relative to the largest one.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Stack `[H; HA; HA²; …; HA^{L-1}]`.
pub fn observability_matrix(a: &Mat, h: &Mat) -> Mat {
    let l = a.nrows();
    let m = h.nrows();
    let mut out = Mat::zeros(m * l, l);
    let mut row = h.clone();
    for k in 0..l {
        out.view_mut((k * m, 0), (m, l)).copy_from(&row);
        row = &row * a;
    }
    out
}

pub fn block_diag(blocks: &[Mat]) -> Mat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(n, c);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Extract the `n` diagonal blocks of size `l` from a square matrix.
pub fn diag_blocks(m: &Mat, l: usize) -> Vec<Mat> {
    (0..m.nrows() / l)
        .map(|k| m.view((k * l, k * l), (l, l)).into_owned())
        .collect()
}

pub fn rel_frobenius(a: &Mat, reference: &Mat) -> f64 {
    let denom = reference.norm();
    if denom == 0.0 {
        (a - reference).norm()
    } else {
        (a - reference).norm() / denom
    }
}

/// Build a `DMatrix` from row-major nested rows.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Neumaier compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}
