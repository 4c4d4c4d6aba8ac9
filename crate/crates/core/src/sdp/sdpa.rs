//! Debug dump in SDPA sparse format (`.dat-s`).
//!
//! SDPA solves `min cᵀx  s.t.  Σ F_k x_k − F_0 ⪰ 0`. An LMI
//! `C + Σ x_k M_k ⪰ 0` therefore becomes one SDP block with `F_0 = −C` and
//! `F_k = M_k`. Scalar bounds and equalities (as a pair `e ≥ 0`, `−e ≥ 0`)
//! go into a single trailing diagonal (LP) block. The objective constant has
//! no SDPA counterpart and is written as a comment.

use std::fmt::Write as _;
use std::io::Write;

use super::expr::AffineExpr;
use super::problem::SdpProblem;
use super::VarId;
use crate::error::Result;

pub fn to_sdpa_string(problem: &SdpProblem) -> String {
    let mut lp_rows: Vec<AffineExpr> = Vec::new();
    for (k, v) in problem.scalars.iter().enumerate() {
        let x = AffineExpr::var(VarId(k));
        if let Some(lo) = v.lower {
            lp_rows.push(x.clone() - AffineExpr::constant(lo));
        }
        if let Some(hi) = v.upper {
            lp_rows.push(AffineExpr::constant(hi) - x);
        }
    }
    for eq in &problem.equality_constraints {
        lp_rows.push(eq.expr.clone());
        lp_rows.push(-eq.expr.clone());
    }

    let mut blocks: Vec<i64> = problem
        .lmi_constraints
        .iter()
        .map(|l| l.matrix.nrows() as i64)
        .collect();
    if !lp_rows.is_empty() {
        blocks.push(-(lp_rows.len() as i64));
    }

    let mut out = String::new();
    let _ = writeln!(out, "\"generated by permon; objective constant {:e}\"", problem.objective.constant);
    let _ = writeln!(out, "{}", problem.n_vars());
    let _ = writeln!(out, "{}", blocks.len());
    let sizes: Vec<String> = blocks.iter().map(|b| b.to_string()).collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let mut c = vec![0.0; problem.n_vars()];
    for &(v, coeff) in &problem.objective.terms {
        c[v.0] += coeff;
    }
    let cs: Vec<String> = c.iter().map(|x| format!("{x:e}")).collect();
    let _ = writeln!(out, "{}", cs.join(" "));

    let mut emit = |mat: usize, blk: usize, i: usize, j: usize, val: f64| {
        if val != 0.0 {
            let _ = writeln!(out, "{mat} {blk} {} {} {val:e}", i + 1, j + 1);
        }
    };
    for (b, lmi) in problem.lmi_constraints.iter().enumerate() {
        let n = lmi.matrix.nrows();
        for i in 0..n {
            for j in i..n {
                let e = lmi.matrix.get(i, j);
                emit(0, b + 1, i, j, -e.constant);
                for &(v, coeff) in &e.terms {
                    emit(v.0 + 1, b + 1, i, j, coeff);
                }
            }
        }
    }
    let lp_block = problem.lmi_constraints.len() + 1;
    for (r, e) in lp_rows.iter().enumerate() {
        emit(0, lp_block, r, r, -e.constant);
        for &(v, coeff) in &e.terms {
            emit(v.0 + 1, lp_block, r, r, coeff);
        }
    }
    out
}

pub fn write_sdpa(problem: &SdpProblem, mut w: impl Write) -> Result<()> {
    w.write_all(to_sdpa_string(problem).as_bytes())?;
    Ok(())
}
