//! Masking a party's block of the collective program and recovering exact
//! primal and dual values from the solution of the masked program.
//!
//! Three transformations are chained. The shift `z = x + eta` with slack `v`
//! priced at `xi`; the change of variables `z = D^T u`, `v = E^T w`; and a
//! left multiplication of each constraint block by an M-matrix (`F`, `G`, `H`,
//! `L`). Only the transformed blocks leave the party.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{add, dot, max_abs_diff, sub, Matrix};
use crate::lp::{LinearProgram, LpSolution, Relation, RowGroup};
use crate::mmatrix::{is_m_matrix, sample_m_matrix, MMatrixMode};
use crate::netmodel::PartyBlocks;
use crate::sparsity;

const MAX_RESAMPLES: usize = 5;

pub const WARN_SMALL_PARTY: &str = "party size below privacy threshold";
pub const WARN_IDENTITY_INCIDENCE: &str = "identity incidence exposes D";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyStructure {
    /// Dense uniform `D` and `E`.
    #[default]
    Dense,
    /// `D` and `E` follow a minimal covering pattern.
    Sparse,
    /// All transformations are identities and both shifts are zero.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyPolicy {
    pub structure: KeyStructure,
    pub mode: MMatrixMode,
    /// `s_k - n_k`.
    pub extra_u: usize,
    /// `t_k - m_k`.
    pub extra_w: usize,
    pub permute: bool,
    /// Draw `xi` from `[-scale, scale]` instead of `[0, scale]`.
    pub signed_xi: bool,
    /// Dense key entries are uniform in `[-entry_scale, entry_scale]`.
    pub entry_scale: f64,
}

impl Default for KeyPolicy {
    fn default() -> Self {
        Self {
            structure: KeyStructure::Dense,
            mode: MMatrixMode::Diagonal,
            extra_u: 0,
            extra_w: 0,
            permute: false,
            signed_xi: false,
            entry_scale: 1.0,
        }
    }
}

impl KeyPolicy {
    pub fn identity() -> Self {
        Self {
            structure: KeyStructure::Identity,
            ..Self::default()
        }
    }

    pub fn sparse() -> Self {
        Self {
            structure: KeyStructure::Sparse,
            ..Self::default()
        }
    }
}

/// One party's private randomness. Never part of a payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingKeys {
    pub party: usize,
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
    /// `s x n`.
    pub d: Matrix,
    /// `t x m_k`.
    pub e: Matrix,
    pub f: Matrix,
    pub g: Matrix,
    pub h: Matrix,
    pub l: Matrix,
    /// Column `j` of the masked blocks is original column `perm[j]`.
    pub perm: Option<Vec<usize>>,
}

impl MaskingKeys {
    pub fn s(&self) -> usize {
        self.d.rows()
    }

    pub fn t(&self) -> usize {
        self.e.rows()
    }

    pub fn identity(party: usize, n: usize, m: usize) -> Self {
        Self {
            party,
            eta: vec![0.0; n],
            xi: vec![0.0; m],
            d: Matrix::identity(n),
            e: Matrix::identity(m),
            f: Matrix::identity(m),
            g: Matrix::identity(n),
            h: Matrix::identity(n),
            l: Matrix::identity(m),
            perm: None,
        }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        let shapes = [
            (self.d.cols(), n, "D columns"),
            (self.e.cols(), m, "E columns"),
            (self.eta.len(), n, "eta"),
            (self.xi.len(), m, "xi"),
            (self.g.rows(), n, "G"),
            (self.h.rows(), n, "H"),
            (self.f.rows(), m, "F"),
            (self.l.rows(), m, "L"),
        ];
        for (got, want, what) in shapes {
            if got != want {
                return Err(Error::Dimension(format!("{what}: {got} != {want}")));
            }
        }
        if self.d.rows() < n || self.e.rows() < m {
            return Err(Error::Dimension("D and E need at least as many rows as columns".into()));
        }
        if let Some(p) = &self.perm {
            let mut seen = vec![false; n];
            if p.len() != n || p.iter().any(|&j| j >= n || core::mem::replace(&mut seen[j], true)) {
                return Err(Error::Dimension("perm is not a permutation".into()));
            }
        }
        Ok(())
    }
}

fn dense_full_rank<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Result<Matrix> {
    for _ in 0..=MAX_RESAMPLES {
        let m = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..=scale));
        if m.rank() == cols {
            return Ok(m);
        }
    }
    Err(Error::KeyGeneration(format!(
        "{rows}x{cols} key stayed rank deficient after {MAX_RESAMPLES} resamples"
    )))
}

/// Warnings about configurations the reconstruction attacks exploit.
pub fn key_warnings(party: &PartyBlocks, keys: &MaskingKeys) -> Vec<String> {
    let mut out = Vec::new();
    if party.n() <= 2 {
        out.push(String::from(WARN_SMALL_PARTY));
    }
    if keys.perm.is_none() && party.a.rows() == party.a.cols() && party.a == Matrix::identity(party.a.rows()) {
        out.push(String::from(WARN_IDENTITY_INCIDENCE));
    }
    out
}

/// Covering patterns for sparse `D` and `E`; they depend only on the
/// incidence structure, so callers may compute them once and reuse them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsePatterns {
    /// `n x s`, rows indexed by original column.
    pub u: Matrix,
    /// `m_k x t`.
    pub ue: Matrix,
}

pub fn sparse_patterns(party: &PartyBlocks, policy: &KeyPolicy) -> Result<SparsePatterns> {
    let m = party.m_private();
    let s = party.n() + policy.extra_u;
    let t = if m == 0 { 0 } else { m + policy.extra_w };
    Ok(SparsePatterns {
        u: sparsity::solve_sparsity(&party.a, &party.b, s)?,
        ue: sparsity::solve_sparsity(&Matrix::zeros(0, m), &Matrix::zeros(0, m), t)?,
    })
}

pub fn generate_keys<R: Rng + ?Sized>(party: &PartyBlocks, rng: &mut R, policy: &KeyPolicy) -> Result<MaskingKeys> {
    generate_keys_with(party, rng, policy, None)
}

pub fn generate_keys_with<R: Rng + ?Sized>(
    party: &PartyBlocks,
    rng: &mut R,
    policy: &KeyPolicy,
    patterns: Option<&SparsePatterns>,
) -> Result<MaskingKeys> {
    let n = party.n();
    let m = party.m_private();
    let keys = match policy.structure {
        KeyStructure::Identity => MaskingKeys::identity(party.party, n, m),
        KeyStructure::Dense | KeyStructure::Sparse => {
            let s = n + policy.extra_u;
            let t = if m == 0 { 0 } else { m + policy.extra_w };
            let perm = policy.permute.then(|| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(rng);
                p
            });
            let (d, e) = if policy.structure == KeyStructure::Dense {
                (
                    dense_full_rank(s, n, policy.entry_scale, rng)?,
                    dense_full_rank(t, m, policy.entry_scale, rng)?,
                )
            } else {
                let computed;
                let pats = match patterns {
                    Some(p) => p,
                    None => {
                        computed = sparse_patterns(party, policy)?;
                        &computed
                    }
                };
                if pats.u.shape() != (n, s) || pats.ue.shape() != (m, t) {
                    return Err(Error::Dimension("sparse patterns do not fit the policy".into()));
                }
                let u = match &perm {
                    Some(p) => Matrix::from_fn(n, s, |i, l| pats.u[(p[i], l)]),
                    None => pats.u.clone(),
                };
                (sparsity::randomize(&u, rng)?, sparsity::randomize(&pats.ue, rng)?)
            };
            let fare_scale = party.r.iter().copied().fold(0.0, f64::max).max(1.0);
            let eta = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
            let low = if policy.signed_xi { -fare_scale } else { 0.0 };
            let xi = (0..m).map(|_| rng.random_range(low..=fare_scale)).collect();
            MaskingKeys {
                party: party.party,
                eta,
                xi,
                d,
                e,
                f: sample_m_matrix(m, rng, policy.mode),
                g: sample_m_matrix(n, rng, policy.mode),
                h: sample_m_matrix(n, rng, policy.mode),
                l: sample_m_matrix(m, rng, policy.mode),
                perm,
            }
        }
    };
    for w in key_warnings(party, &keys) {
        log::warn!("party {}: {w}", party.party);
    }
    Ok(keys)
}

/// The blocks a party publishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskedPartyData {
    pub party: usize,
    pub r_bar: Vec<f64>,
    pub xi_bar: Vec<f64>,
    pub a_bar: Matrix,
    pub b_bar: Matrix,
    pub f_bar: Matrix,
    pub c_bar: Vec<f64>,
    pub g_bar: Matrix,
    pub one_bar: Vec<f64>,
    pub h_bar: Matrix,
    pub eta_bar: Vec<f64>,
    pub l_bar: Matrix,
    pub a_eta: Vec<f64>,
}

impl MaskedPartyData {
    pub fn s(&self) -> usize {
        self.r_bar.len()
    }

    pub fn t(&self) -> usize {
        self.xi_bar.len()
    }

    pub fn m_private(&self) -> usize {
        self.c_bar.len()
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let (s, t, mk, n) = (self.s(), self.t(), self.m_private(), self.one_bar.len());
        let checks = [
            (self.a_bar.shape(), (m, s), "A_bar"),
            (self.b_bar.shape(), (mk, s), "B_bar"),
            (self.f_bar.shape(), (mk, t), "F_bar"),
            (self.g_bar.shape(), (n, s), "G_bar"),
            (self.h_bar.shape(), (n, s), "H_bar"),
            (self.l_bar.shape(), (mk, t), "L_bar"),
            ((self.eta_bar.len(), 0), (n, 0), "eta_bar"),
            ((self.a_eta.len(), 0), (m, 0), "A eta"),
        ];
        for (got, want, what) in checks {
            if got != want {
                return Err(Error::Dimension(format!(
                    "party {} {what}: {got:?} != {want:?}",
                    self.party
                )));
            }
        }
        Ok(())
    }
}

/// `(A, B, r)` with the key's column permutation applied.
fn permuted(party: &PartyBlocks, keys: &MaskingKeys) -> (Matrix, Matrix, Vec<f64>) {
    match &keys.perm {
        Some(p) => (
            party.a.permute_columns(p),
            party.b.permute_columns(p),
            p.iter().map(|&j| party.r[j]).collect(),
        ),
        None => (party.a.clone(), party.b.clone(), party.r.clone()),
    }
}

pub fn mask(party: &PartyBlocks, keys: &MaskingKeys) -> Result<MaskedPartyData> {
    keys.validate(party.n(), party.m_private())?;
    let (a, b, r) = permuted(party, keys);
    let dt = keys.d.transpose();
    let et = keys.e.transpose();
    let ones_eta: Vec<f64> = keys.eta.iter().map(|e| 1.0 + e).collect();
    let b_eta = b.mul_vec(&keys.eta)?;
    Ok(MaskedPartyData {
        party: party.party,
        r_bar: keys.d.mul_vec(&add(&r, &b.tr_mul_vec(&keys.xi)?))?,
        xi_bar: keys.e.mul_vec(&keys.xi)?,
        a_bar: a.mul(&dt)?,
        b_bar: keys.f.mul(&b)?.mul(&dt)?,
        f_bar: keys.f.mul(&et)?,
        c_bar: keys.f.mul_vec(&add(&party.c, &b_eta))?,
        g_bar: keys.g.mul(&dt)?,
        one_bar: keys.g.mul_vec(&ones_eta)?,
        h_bar: keys.h.mul(&dt)?,
        eta_bar: keys.h.mul_vec(&keys.eta)?,
        l_bar: keys.l.mul(&et)?,
        a_eta: a.mul_vec(&keys.eta)?,
    })
}

/// `o_k = r_k^T eta_k + (c_k + B_k eta_k)^T xi_k`, the party's share of `Zbar - Z`.
pub fn objective_offset(party: &PartyBlocks, keys: &MaskingKeys) -> Result<f64> {
    keys.validate(party.n(), party.m_private())?;
    let (_, b, r) = permuted(party, keys);
    let b_eta = b.mul_vec(&keys.eta)?;
    Ok(dot(&r, &keys.eta) + dot(&add(&party.c, &b_eta), &keys.xi))
}

/// The program every party solves, with its column layout.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedModel {
    pub lp: LinearProgram,
    pub u_offsets: Vec<usize>,
    pub w_offsets: Vec<usize>,
    pub c_bar: Vec<f64>,
}

pub fn assemble_masked_model(payloads: &[MaskedPartyData], c: &[f64]) -> Result<MaskedModel> {
    if payloads.is_empty() {
        return Err(Error::Protocol("no payloads".into()));
    }
    for (k, p) in payloads.iter().enumerate() {
        if p.party != k {
            return Err(Error::Protocol(format!("missing payload for party {k}")));
        }
        p.validate(c.len())?;
    }
    let mut c_bar = c.to_vec();
    for p in payloads {
        c_bar = add(&c_bar, &p.a_eta);
    }
    let mut lp = LinearProgram::new(0);
    let mut u_offsets = Vec::new();
    let mut w_offsets = Vec::new();
    for p in payloads {
        u_offsets.push(lp.num_vars());
        for &r in &p.r_bar {
            lp.add_var(r, f64::NEG_INFINITY, f64::INFINITY);
        }
        w_offsets.push(lp.num_vars());
        for &x in &p.xi_bar {
            lp.add_var(x, f64::NEG_INFINITY, f64::INFINITY);
        }
    }
    for (i, &rhs) in c_bar.iter().enumerate() {
        let mut coeffs = Vec::new();
        for (p, &off) in payloads.iter().zip(&u_offsets) {
            for (j, &a) in p.a_bar.row(i).iter().enumerate() {
                if a != 0.0 {
                    coeffs.push((off + j, a));
                }
            }
        }
        lp.add_row(coeffs, Relation::Le, rhs, RowGroup::SharedCap);
    }
    for (k, p) in payloads.iter().enumerate() {
        let (uo, wo) = (u_offsets[k], w_offsets[k]);
        for i in 0..p.m_private() {
            let mut coeffs = sparse_row(uo, p.b_bar.row(i));
            coeffs.extend(sparse_row(wo, p.f_bar.row(i)));
            lp.add_row(coeffs, Relation::Eq, p.c_bar[i], RowGroup::PartyCap(k));
        }
        for (i, &rhs) in p.one_bar.iter().enumerate() {
            lp.add_dense_row(uo, p.g_bar.row(i), Relation::Le, rhs, RowGroup::UpperBound(k));
        }
        for (i, &rhs) in p.eta_bar.iter().enumerate() {
            lp.add_dense_row(uo, p.h_bar.row(i), Relation::Ge, rhs, RowGroup::LowerBound(k));
        }
        for i in 0..p.m_private() {
            lp.add_dense_row(wo, p.l_bar.row(i), Relation::Ge, 0.0, RowGroup::NonNeg(k));
        }
    }
    Ok(MaskedModel {
        lp,
        u_offsets,
        w_offsets,
        c_bar,
    })
}

fn sparse_row(offset: usize, dense: &[f64]) -> Vec<(usize, f64)> {
    dense
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, &v)| (offset + j, v))
        .collect()
}

/// What one party learns from the masked optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recovered {
    pub party: usize,
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_k: Vec<f64>,
    pub z_bar: f64,
    pub z: f64,
}

/// `x_k = D^T u_k - eta_k`, `alpha = gamma`, `alpha_k = F^T gamma_k - xi_k`,
/// `Z = Zbar - sum_k o_k`.
pub fn recover(
    model: &MaskedModel,
    keys: &MaskingKeys,
    solution: &LpSolution,
    offset_total: f64,
) -> Result<Recovered> {
    solution.require_optimal()?;
    let k = keys.party;
    let uo = *model
        .u_offsets
        .get(k)
        .ok_or_else(|| Error::Dimension(format!("no columns for party {k}")))?;
    let u = &solution.primal[uo..uo + keys.s()];
    let shifted = sub(&keys.d.tr_mul_vec(u)?, &keys.eta);
    let x = match &keys.perm {
        Some(p) => {
            let mut x = vec![0.0; shifted.len()];
            for (j, &orig) in p.iter().enumerate() {
                x[orig] = shifted[j];
            }
            x
        }
        None => shifted,
    };
    let gamma_k = solution.duals(RowGroup::PartyCap(k));
    let alpha_k = sub(&keys.f.tr_mul_vec(&gamma_k)?, &keys.xi);
    Ok(Recovered {
        party: k,
        x,
        alpha: solution.duals(RowGroup::SharedCap),
        alpha_k,
        z_bar: solution.objective,
        z: solution.objective - offset_total,
    })
}

/// Private data rebuilt from a payload and leaked `G_k`, `F_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub d: Matrix,
    pub a: Matrix,
    pub h: Matrix,
    pub eta: Vec<f64>,
    pub b: Matrix,
    pub e: Matrix,
    pub xi: Vec<f64>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    pub l: Matrix,
}

/// Inverse of `D^T` from the right: exact when square, `D (D^T D)^{-1}` otherwise.
fn right_inverse_of_transpose(d: &Matrix) -> Result<Matrix> {
    if d.rows() == d.cols() {
        d.transpose().inverse()
    } else {
        d.transpose().right_pseudo_inverse()
    }
}

fn left_inverse(m: &Matrix) -> Result<Matrix> {
    if m.rows() == m.cols() {
        m.inverse()
    } else {
        m.left_pseudo_inverse()
    }
}

pub fn audit_attack(payload: &MaskedPartyData, g: &Matrix, f: &Matrix) -> Result<Reconstruction> {
    let g_inv = g.inverse()?;
    let f_inv = if f.rows() == 0 { Matrix::zeros(0, 0) } else { f.inverse()? };
    let d = g_inv.mul(&payload.g_bar)?.transpose();
    let dt_inv = right_inverse_of_transpose(&d)?;
    let a = payload.a_bar.mul(&dt_inv)?;
    let h = payload.h_bar.mul(&dt_inv)?;
    let eta = h.inverse()?.mul_vec(&payload.eta_bar)?;
    let b = f_inv.mul(&payload.b_bar)?.mul(&dt_inv)?;
    let e = f_inv.mul(&payload.f_bar)?.transpose();
    let xi = if e.cols() == 0 { Vec::new() } else { left_inverse(&e)?.mul_vec(&payload.xi_bar)? };
    let r = sub(&left_inverse(&d)?.mul_vec(&payload.r_bar)?, &b.tr_mul_vec(&xi)?);
    let c = sub(&f_inv.mul_vec(&payload.c_bar)?, &b.mul_vec(&eta)?);
    let l = if e.cols() == 0 {
        Matrix::zeros(0, 0)
    } else {
        payload.l_bar.mul(&right_inverse_of_transpose(&e)?)?
    };
    Ok(Reconstruction {
        d,
        a,
        h,
        eta,
        b,
        e,
        xi,
        r,
        c,
        l,
    })
}

/// Largest entrywise error of a reconstruction against the truth.
pub fn reconstruction_error(rec: &Reconstruction, party: &PartyBlocks, keys: &MaskingKeys) -> Result<f64> {
    let (a, b, r) = permuted(party, keys);
    let mats = [
        (&rec.d, &keys.d),
        (&rec.a, &a),
        (&rec.h, &keys.h),
        (&rec.b, &b),
        (&rec.e, &keys.e),
        (&rec.l, &keys.l),
    ];
    let mut worst: f64 = 0.0;
    for (got, want) in mats {
        if got.shape() != want.shape() {
            return Err(Error::Dimension(format!("{:?} vs {:?}", got.shape(), want.shape())));
        }
        worst = worst.max(got.max_abs_diff(want));
    }
    for (got, want) in [(&rec.eta, &keys.eta), (&rec.xi, &keys.xi), (&rec.r, &r), (&rec.c, &party.c)] {
        if got.len() != want.len() {
            return Err(Error::Dimension("vector length mismatch".into()));
        }
        worst = worst.max(max_abs_diff(got, want));
    }
    Ok(worst)
}

/// With `n_k = s_k = 1`, `G_k = 1bar - Gbar Hbar^{-1} etabar` follows from the payload alone.
pub fn derive_scalar_g(payload: &MaskedPartyData) -> Result<f64> {
    if payload.g_bar.shape() != (1, 1) || payload.h_bar.shape() != (1, 1) {
        return Err(Error::Dimension("scalar derivation needs n = s = 1".into()));
    }
    let h = payload.h_bar[(0, 0)];
    if h == 0.0 {
        return Err(Error::Singular);
    }
    Ok(payload.one_bar[0] - payload.g_bar[(0, 0)] / h * payload.eta_bar[0])
}

/// True when all four left multipliers pass the M-matrix test.
pub fn keys_are_m_matrices(keys: &MaskingKeys) -> bool {
    [&keys.f, &keys.g, &keys.h, &keys.l]
        .into_iter()
        .all(|m| m.rows() == 0 || is_m_matrix(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp;
    use crate::models::solve_collective;
    use crate::netmodel::example_network;
    use crate::seed;

    fn toy() -> crate::netmodel::Blocks {
        example_network([1, 1, 2, 1], [30.0, 20.0, 45.0, 25.0, 40.0, 50.0])
            .assemble_blocks()
            .unwrap()
    }

    #[test]
    fn identity_keys_publish_plaintext() {
        let blocks = toy();
        let p = &blocks.parties[1];
        let keys = MaskingKeys::identity(1, p.n(), p.m_private());
        let data = mask(p, &keys).unwrap();
        assert_eq!(data.r_bar, p.r);
        assert_eq!(data.a_bar, p.a);
        assert_eq!(data.b_bar, p.b);
        assert_eq!(data.c_bar, p.c);
        assert!(data.one_bar.iter().all(|&v| v == 1.0));
        assert!(data.eta_bar.iter().all(|&v| v == 0.0));
        assert_eq!(objective_offset(p, &keys).unwrap(), 0.0);
    }

    #[test]
    fn round_trip_through_masked_model() {
        let blocks = toy();
        let direct = solve_collective(&blocks).unwrap();
        for (i, policy) in [KeyPolicy::default(), KeyPolicy { permute: true, extra_u: 2, extra_w: 1, ..KeyPolicy::default() }]
            .into_iter()
            .enumerate()
        {
            let mut rng = seed::rng(i as u64, "keys");
            let keys: Vec<MaskingKeys> = blocks
                .parties
                .iter()
                .map(|p| generate_keys(p, &mut rng, &policy).unwrap())
                .collect();
            let payloads: Vec<MaskedPartyData> = blocks
                .parties
                .iter()
                .zip(&keys)
                .map(|(p, k)| mask(p, k).unwrap())
                .collect();
            let offset: f64 = blocks
                .parties
                .iter()
                .zip(&keys)
                .map(|(p, k)| objective_offset(p, k).unwrap())
                .sum();
            let model = assemble_masked_model(&payloads, &blocks.c).unwrap();
            let sol = lp::solve(&model.lp).unwrap();
            let rec: Vec<Recovered> = keys.iter().map(|k| recover(&model, k, &sol, offset).unwrap()).collect();
            assert!((rec[0].z - direct.z).abs() < 1e-6, "{} vs {}", rec[0].z, direct.z);
            let x: Vec<Vec<f64>> = rec.iter().map(|r| r.x.clone()).collect();
            let primal = crate::models::check_primal(&blocks, &x).unwrap();
            assert!(primal.residual < 1e-6);
            assert!((primal.objective - direct.z).abs() < 1e-6);
        }
    }

    #[test]
    fn square_leak_reconstructs_everything() {
        let blocks = toy();
        let p = &blocks.parties[0];
        let mut rng = seed::rng(9, "keys");
        let keys = generate_keys(p, &mut rng, &KeyPolicy::default()).unwrap();
        let data = mask(p, &keys).unwrap();
        let rec = audit_attack(&data, &keys.g, &keys.f).unwrap();
        assert!(reconstruction_error(&rec, p, &keys).unwrap() < 1e-6);
    }

    #[test]
    fn scalar_g_from_payload() {
        let mut blocks = toy();
        let p = &mut blocks.parties[0];
        // keep one column only
        p.r.truncate(1);
        p.a = Matrix::from_fn(p.a.rows(), 1, |i, _| p.a[(i, 0)]);
        p.b = Matrix::from_fn(p.b.rows(), 1, |i, _| p.b[(i, 0)]);
        p.columns.truncate(1);
        let mut rng = seed::rng(5, "keys");
        let keys = generate_keys(p, &mut rng, &KeyPolicy::default()).unwrap();
        assert!(key_warnings(p, &keys).contains(&String::from(WARN_SMALL_PARTY)));
        let data = mask(p, &keys).unwrap();
        assert!((derive_scalar_g(&data).unwrap() - keys.g[(0, 0)]).abs() < 1e-12);
    }
}
