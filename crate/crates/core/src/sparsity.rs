//! Pattern-sparse transformation keys.
//!
//! The pattern `U` (`n x s`, 0/1) minimises `1^T (A U) 1 + 1^T (B U) 1 + 1^T U 1`
//! subject to every row and every column of `U` holding at least one entry.
//! The constraint matrix is the incidence matrix of a bipartite graph, so the
//! LP relaxation has integral vertices. The key is then `D^T = U ⊙ R` for a
//! positive random `R`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lp::{self, dump_coefficients, DumpFormat, LinearProgram, Relation, RowGroup};

pub const INTEGRALITY_TOL: f64 = 1e-6;
const MAX_RESAMPLES: usize = 5;

pub fn build_sparsity_lp(a: &Matrix, b: &Matrix, s: usize) -> Result<LinearProgram> {
    let n = a.cols();
    if b.cols() != n {
        return Err(Error::Dimension(format!("A has {n} columns, B has {}", b.cols())));
    }
    if s < n {
        return Err(Error::Dimension(format!("s = {s} is smaller than n = {n}")));
    }
    let mut weight: Vec<f64> = (0..n).map(|_| 1.0).collect();
    for m in [a, b] {
        for i in 0..m.rows() {
            for (w, v) in weight.iter_mut().zip(m.row(i)) {
                *w += v;
            }
        }
    }
    let mut lp = LinearProgram::new(0);
    for &w in &weight {
        for _ in 0..s {
            lp.add_var(-w, 0.0, 1.0);
        }
    }
    for i in 0..n {
        let coeffs = (0..s).map(|l| (i * s + l, 1.0)).collect();
        lp.add_row(coeffs, Relation::Ge, 1.0, RowGroup::SparsityRow);
    }
    for l in 0..s {
        let coeffs = (0..n).map(|i| (i * s + l, 1.0)).collect();
        lp.add_row(coeffs, Relation::Ge, 1.0, RowGroup::SparsityCol);
    }
    Ok(lp)
}

/// Optimal 0/1 pattern `U` (`n x s`).
pub fn solve_sparsity(a: &Matrix, b: &Matrix, s: usize) -> Result<Matrix> {
    let n = a.cols();
    let lp = build_sparsity_lp(a, b, s)?;
    let sol = lp::solve(&lp)?;
    sol.require_optimal()?;
    let mut u = Matrix::zeros(n, s);
    for i in 0..n {
        for l in 0..s {
            let v = sol.primal[i * s + l];
            let rounded = libm::round(v);
            if (v - rounded).abs() > INTEGRALITY_TOL {
                log::error!("non-integral sparsity vertex:\n{}", dump_coefficients(&lp, DumpFormat::Full));
                return Err(Error::NonIntegral { row: i, col: l, value: v });
            }
            u[(i, l)] = rounded;
        }
    }
    Ok(u)
}

/// `D` (`s x n`) with `D^T = U ⊙ R`, `R` uniform in `[0.5, 2]`.
pub fn randomize<R: Rng + ?Sized>(u: &Matrix, rng: &mut R) -> Result<Matrix> {
    // Nonempty rows with pairwise disjoint supports are independent for any
    // positive weights, so the rank check can be skipped.
    let disjoint = (0..u.cols()).all(|l| u.column(l).iter().filter(|&&v| v != 0.0).count() <= 1)
        && (0..u.rows()).all(|i| u.row(i).iter().any(|&v| v != 0.0));
    for _ in 0..=MAX_RESAMPLES {
        let r = Matrix::from_fn(u.rows(), u.cols(), |_, _| rng.random_range(0.5..=2.0));
        let dt = u.hadamard(&r)?;
        if disjoint || dt.rank() == u.rows() {
            return Ok(dt.transpose());
        }
    }
    Err(Error::KeyGeneration(format!(
        "pattern {}x{} stayed rank deficient after {MAX_RESAMPLES} resamples",
        u.rows(),
        u.cols()
    )))
}

/// Nonzero counts of one party's masked incidence blocks under one key set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityRow {
    pub party: usize,
    pub mode: String,
    pub nnz_a: usize,
    pub nnz_b: usize,
    pub density: f64,
    pub rank_ok: bool,
}

pub const SECURITY_CAVEAT: &str =
    "structured (sparse) keys are more exposed to reconstruction than dense keys";

/// Counts for `A D^T` and `B D^T`.
pub fn measure(party: usize, mode: &str, a: &Matrix, b: &Matrix, d: &Matrix) -> Result<SparsityRow> {
    let dt = d.transpose();
    let ad = a.mul(&dt)?;
    let bd = b.mul(&dt)?;
    let cells = ad.rows() * ad.cols() + bd.rows() * bd.cols();
    let nnz_a = ad.nnz();
    let nnz_b = bd.nnz();
    Ok(SparsityRow {
        party,
        mode: mode.into(),
        nnz_a,
        nnz_b,
        density: if cells == 0 { 0.0 } else { (nnz_a + nnz_b) as f64 / cells as f64 },
        rank_ok: d.rank() == a.cols(),
    })
}
