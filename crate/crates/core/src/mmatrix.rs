//! Sampling and checking nonsingular M-matrices.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Smallest inverse entry tolerated by [`is_m_matrix`].
pub const INVERSE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MMatrixMode {
    /// Positive diagonal with entries uniform in `[0.5, 2]`.
    #[default]
    Diagonal,
    /// `s I - N` with `N >= 0` and `s` above the largest row sum of `N`.
    General,
}

/// `s I - N`; fails unless `N` is entrywise nonnegative and square.
pub fn from_nonnegative(n: &Matrix, s: f64) -> Result<Matrix> {
    if n.rows() != n.cols() {
        return Err(Error::Dimension(format!("{}x{} is not square", n.rows(), n.cols())));
    }
    if n.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::Instance("N must be entrywise nonnegative".into()));
    }
    let mut m = n.scale(-1.0);
    for i in 0..n.rows() {
        m[(i, i)] += s;
    }
    Ok(m)
}

/// Smallest entry of the inverse, or `None` when singular.
pub fn min_inverse_entry(m: &Matrix) -> Option<f64> {
    let inv = m.inverse().ok()?;
    Some(inv.as_slice().iter().copied().fold(f64::INFINITY, f64::min))
}

pub fn is_m_matrix(m: &Matrix) -> bool {
    m.rows() == m.cols() && min_inverse_entry(m).is_some_and(|v| v >= -INVERSE_TOL)
}

pub fn sample_m_matrix<R: Rng + ?Sized>(dim: usize, rng: &mut R, mode: MMatrixMode) -> Matrix {
    match mode {
        MMatrixMode::Diagonal => {
            let diag: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..=2.0)).collect();
            Matrix::from_diagonal(&diag)
        }
        MMatrixMode::General => loop {
            let n = Matrix::from_fn(dim, dim, |_, _| rng.random_range(0.0..1.0));
            let max_row_sum = (0..dim)
                .map(|i| n.row(i).iter().sum::<f64>())
                .fold(0.0, f64::max);
            // u in (0, 1]
            let u = 1.0 - rng.random_range(0.0..1.0);
            let s = (1.0 + u) * if max_row_sum > 0.0 { max_row_sum } else { 1.0 };
            let m = from_nonnegative(&n, s).expect("square nonnegative sample");
            if is_m_matrix(&m) {
                break m;
            }
        },
    }
}
