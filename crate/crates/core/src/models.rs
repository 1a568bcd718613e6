//! The collective capacity-sharing program, the hard-block individual
//! programs and the shifted program used as the first masking stage.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::lp::{self, LinearProgram, LpSolution, Relation, RowGroup};
use crate::netmodel::Blocks;

/// First column of each party in the party-major column layout.
pub fn column_offsets(blocks: &Blocks) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(blocks.parties.len() + 1);
    let mut acc = 0;
    for p in &blocks.parties {
        offsets.push(acc);
        acc += p.n();
    }
    offsets.push(acc);
    offsets
}

/// `max sum r_k x_k` s.t. `sum A_k x_k <= c`, `B_k x_k <= c_k`, `0 <= x <= 1`.
pub fn build_collective(blocks: &Blocks) -> LinearProgram {
    let offsets = column_offsets(blocks);
    let mut lp = LinearProgram::new(0);
    for p in &blocks.parties {
        for &r in &p.r {
            lp.add_var(r, 0.0, 1.0);
        }
    }
    for i in 0..blocks.m() {
        let mut coeffs = Vec::new();
        for (p, &off) in blocks.parties.iter().zip(&offsets) {
            for (j, &a) in p.a.row(i).iter().enumerate() {
                if a != 0.0 {
                    coeffs.push((off + j, a));
                }
            }
        }
        lp.add_row(coeffs, Relation::Le, blocks.c[i], RowGroup::SharedCap);
    }
    for (k, (p, &off)) in blocks.parties.iter().zip(&offsets).enumerate() {
        for i in 0..p.m_private() {
            lp.add_dense_row(off, p.b.row(i), Relation::Le, p.c[i], RowGroup::PartyCap(k));
        }
    }
    lp
}

/// Party `k` alone with a fixed share `s_k` of every shared leg.
pub fn build_individual(blocks: &Blocks, k: usize, share: &[f64]) -> Result<LinearProgram> {
    let p = blocks
        .parties
        .get(k)
        .ok_or_else(|| Error::Dimension(format!("no party {k}")))?;
    if share.len() != blocks.m() {
        return Err(Error::Dimension(format!(
            "share has {} entries for {} shared legs",
            share.len(),
            blocks.m()
        )));
    }
    if share.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::Instance("shares must be nonnegative".into()));
    }
    let mut lp = LinearProgram::new(0);
    for &r in &p.r {
        lp.add_var(r, 0.0, 1.0);
    }
    for (i, &s) in share.iter().enumerate() {
        lp.add_dense_row(0, p.a.row(i), Relation::Le, s, RowGroup::SharedCap);
    }
    for i in 0..p.m_private() {
        lp.add_dense_row(0, p.b.row(i), Relation::Le, p.c[i], RowGroup::PartyCap(k));
    }
    Ok(lp)
}

/// Primal and dual optimum of the collective program, split by party.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectiveSolution {
    pub z: f64,
    pub x: Vec<Vec<f64>>,
    /// Shared-leg bid-prices.
    pub alpha: Vec<f64>,
    /// Private-leg bid-prices per party.
    pub alpha_k: Vec<Vec<f64>>,
}

pub fn solve_collective(blocks: &Blocks) -> Result<CollectiveSolution> {
    let lp = build_collective(blocks);
    let sol = lp::solve(&lp)?;
    sol.require_optimal()?;
    Ok(split_collective(blocks, &sol))
}

pub fn split_collective(blocks: &Blocks, sol: &LpSolution) -> CollectiveSolution {
    let offsets = column_offsets(blocks);
    CollectiveSolution {
        z: sol.objective,
        x: (0..blocks.parties.len())
            .map(|k| sol.primal[offsets[k]..offsets[k + 1]].to_vec())
            .collect(),
        alpha: sol.duals(RowGroup::SharedCap),
        alpha_k: (0..blocks.parties.len())
            .map(|k| sol.duals(RowGroup::PartyCap(k)))
            .collect(),
    }
}

/// Feasibility and objective of a candidate primal point of the collective program.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimalCheck {
    pub objective: f64,
    pub residual: f64,
}

pub fn check_primal(blocks: &Blocks, x: &[Vec<f64>]) -> Result<PrimalCheck> {
    if x.len() != blocks.parties.len() {
        return Err(Error::Dimension("one primal block per party expected".into()));
    }
    let mut shared = vec![0.0; blocks.m()];
    let mut residual: f64 = 0.0;
    let mut objective = 0.0;
    for (p, xk) in blocks.parties.iter().zip(x) {
        if xk.len() != p.n() {
            return Err(Error::Dimension(format!("party {} primal length", p.party)));
        }
        objective += dot(&p.r, xk);
        for &v in xk {
            residual = residual.max(-v).max(v - 1.0);
        }
        for (s, v) in shared.iter_mut().zip(p.a.mul_vec(xk)?) {
            *s += v;
        }
        for (v, c) in p.b.mul_vec(xk)?.into_iter().zip(&p.c) {
            residual = residual.max(v - c);
        }
    }
    for (s, c) in shared.iter().zip(&blocks.c) {
        residual = residual.max(s - c);
    }
    Ok(PrimalCheck { objective, residual })
}

/// Dual feasibility and objective of `(alpha, alpha_k)` with the smallest
/// feasible bound multipliers `lambda_k = max(0, r_k - A_k^T alpha - B_k^T alpha_k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualCheck {
    pub objective: f64,
    pub residual: f64,
}

pub fn check_dual(blocks: &Blocks, alpha: &[f64], alpha_k: &[Vec<f64>]) -> Result<DualCheck> {
    if alpha.len() != blocks.m() || alpha_k.len() != blocks.parties.len() {
        return Err(Error::Dimension("dual vector sizes".into()));
    }
    let mut residual = alpha.iter().fold(0.0f64, |r, &a| r.max(-a));
    let mut objective = dot(&blocks.c, alpha);
    for (p, ak) in blocks.parties.iter().zip(alpha_k) {
        if ak.len() != p.m_private() {
            return Err(Error::Dimension(format!("party {} dual length", p.party)));
        }
        residual = ak.iter().fold(residual, |r, &a| r.max(-a));
        objective += dot(&p.c, ak);
        let used = p.a.tr_mul_vec(alpha)?;
        let own = p.b.tr_mul_vec(ak)?;
        for ((r, u), o) in p.r.iter().zip(used).zip(own) {
            objective += (r - u - o).max(0.0);
        }
    }
    Ok(DualCheck { objective, residual })
}

/// Per-party shift vectors of the first masking stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Shift {
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
}

/// The shifted program in `(z_k, v_k)` with `z_k = x_k + eta_k`:
///
/// `max (r_k + B_k^T xi_k)^T z_k + xi_k^T v_k` s.t.
/// `sum A_k z_k <= c + sum A_k eta_k`, `B_k z_k + v_k = c_k + B_k eta_k`,
/// `z_k <= 1 + eta_k`, `z_k >= eta_k`, `v_k >= 0`, all variables free.
/// Columns are `z_1, v_1, z_2, v_2, ...`.
pub fn build_dp_model(blocks: &Blocks, shifts: &[Shift]) -> Result<LinearProgram> {
    if shifts.len() != blocks.parties.len() {
        return Err(Error::Dimension("one shift per party expected".into()));
    }
    let mut c_bar = blocks.c.clone();
    let mut lp = LinearProgram::new(0);
    let mut offsets = Vec::new();
    for (p, sh) in blocks.parties.iter().zip(shifts) {
        if sh.eta.len() != p.n() || sh.xi.len() != p.m_private() {
            return Err(Error::Dimension(format!("shift sizes for party {}", p.party)));
        }
        for (cb, v) in c_bar.iter_mut().zip(p.a.mul_vec(&sh.eta)?) {
            *cb += v;
        }
        let bt_xi = p.b.tr_mul_vec(&sh.xi)?;
        let off = lp.num_vars();
        offsets.push(off);
        for (r, bx) in p.r.iter().zip(&bt_xi) {
            lp.add_var(r + bx, f64::NEG_INFINITY, f64::INFINITY);
        }
        for &x in &sh.xi {
            lp.add_var(x, f64::NEG_INFINITY, f64::INFINITY);
        }
    }
    for i in 0..blocks.m() {
        let mut coeffs = Vec::new();
        for (p, &off) in blocks.parties.iter().zip(&offsets) {
            for (j, &a) in p.a.row(i).iter().enumerate() {
                if a != 0.0 {
                    coeffs.push((off + j, a));
                }
            }
        }
        lp.add_row(coeffs, Relation::Le, c_bar[i], RowGroup::SharedCap);
    }
    for (k, ((p, sh), &off)) in blocks.parties.iter().zip(shifts).zip(&offsets).enumerate() {
        let n = p.n();
        let b_eta = p.b.mul_vec(&sh.eta)?;
        for i in 0..p.m_private() {
            let mut coeffs: Vec<(usize, f64)> = p
                .b
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .map(|(j, &a)| (off + j, a))
                .collect();
            coeffs.push((off + n + i, 1.0));
            lp.add_row(coeffs, Relation::Eq, p.c[i] + b_eta[i], RowGroup::PartyCap(k));
        }
        for j in 0..n {
            lp.add_row(vec![(off + j, 1.0)], Relation::Le, 1.0 + sh.eta[j], RowGroup::UpperBound(k));
        }
        for j in 0..n {
            lp.add_row(vec![(off + j, 1.0)], Relation::Ge, sh.eta[j], RowGroup::LowerBound(k));
        }
        for i in 0..p.m_private() {
            lp.add_row(vec![(off + n + i, 1.0)], Relation::Ge, 0.0, RowGroup::NonNeg(k));
        }
    }
    Ok(lp)
}

/// Collective-model quantities read off an optimal shifted solution:
/// `x_k = z_k - eta_k`, `alpha = beta`, `alpha_k = beta_k - xi_k`.
pub fn unshift(blocks: &Blocks, shifts: &[Shift], sol: &LpSolution) -> Result<CollectiveSolution> {
    sol.require_optimal()?;
    let mut x = Vec::new();
    let mut alpha_k = Vec::new();
    let mut off = 0;
    for (k, (p, sh)) in blocks.parties.iter().zip(shifts).enumerate() {
        x.push(
            sol.primal[off..off + p.n()]
                .iter()
                .zip(&sh.eta)
                .map(|(z, e)| z - e)
                .collect::<Vec<f64>>(),
        );
        alpha_k.push(
            sol.duals(RowGroup::PartyCap(k))
                .iter()
                .zip(&sh.xi)
                .map(|(b, x)| b - x)
                .collect(),
        );
        off += p.n() + p.m_private();
    }
    let z = blocks
        .parties
        .iter()
        .zip(&x)
        .map(|(p, xk)| dot(&p.r, xk))
        .sum();
    Ok(CollectiveSolution {
        z,
        x,
        alpha: sol.duals(RowGroup::SharedCap),
        alpha_k,
    })
}

/// Dense `[A_1 ... A_K]` for reporting.
pub fn stacked_shared_incidence(blocks: &Blocks) -> Matrix {
    let offsets = column_offsets(blocks);
    let n = *offsets.last().unwrap_or(&0);
    let mut out = Matrix::zeros(blocks.m(), n);
    for (p, &off) in blocks.parties.iter().zip(&offsets) {
        for i in 0..blocks.m() {
            for (j, &a) in p.a.row(i).iter().enumerate() {
                out[(i, off + j)] = a;
            }
        }
    }
    out
}
