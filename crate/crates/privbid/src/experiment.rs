//! Drivers shared by the CLI and the acceptance suite.

use rayon::prelude::*;

use privbid_core::lp::{self, LinearProgram};
use privbid_core::masking::{
    assemble_masked_model, generate_keys_with, mask, sparse_patterns, KeyPolicy, MaskedPartyData, MaskingKeys,
    SparsePatterns,
};
use privbid_core::models::build_collective;
use privbid_core::netmodel::{AllianceInstance, Blocks};
use privbid_core::sim::{ReplicationResult, Simulator};
use privbid_core::sparsity::{measure, SparsityRow};
use privbid_core::{seed, Result};

use crate::clock::{time_ms, WallClock};
use crate::report::TimingRow;

/// Replications in parallel; the result order matches [`Simulator::run_all`].
pub fn simulate_parallel(sim: &Simulator) -> Result<Vec<ReplicationResult>> {
    let per_rep: Vec<Vec<ReplicationResult>> = (0..sim.config().replications)
        .into_par_iter()
        .map(|rep| sim.run_replication(rep, &WallClock::new()))
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

/// One comparison of the collective model against dense- and sparse-key masked models.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRun {
    pub n_paths: usize,
    pub parties: usize,
    pub nnz_cp: usize,
    pub nnz_dense: usize,
    pub nnz_sparse: usize,
    pub cp_ms: f64,
    pub dense_ms: f64,
    pub sparse_ms: f64,
    /// Per-party nonzero counts of the masked incidence blocks, both key kinds.
    pub rows: Vec<SparsityRow>,
}

impl BenchRun {
    pub fn timing_rows(runs: &[BenchRun]) -> Vec<TimingRow> {
        let Some(first) = runs.first() else { return Vec::new() };
        let stat = |f: fn(&BenchRun) -> f64| privbid_core::sim::mean_std(&runs.iter().map(f).collect::<Vec<_>>());
        [
            ("cp", stat(|r| r.cp_ms)),
            ("ccs-sparse", stat(|r| r.sparse_ms)),
            ("ccs-dense", stat(|r| r.dense_ms)),
        ]
        .into_iter()
        .map(|(model, (mean_ms, std_ms))| TimingRow {
            model: model.into(),
            n_paths: first.n_paths,
            parties: first.parties,
            mean_ms,
            std_ms,
        })
        .collect()
    }
}

/// Median wall time of `repeats` optimal solves.
fn solve_ms(lp: &LinearProgram, repeats: usize) -> Result<f64> {
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats.max(1) {
        let (sol, ms) = time_ms(|| lp::solve(lp));
        sol?.require_optimal()?;
        times.push(ms);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

fn keys_for(
    blocks: &Blocks,
    policy: &KeyPolicy,
    patterns: Option<&[SparsePatterns]>,
    master: u64,
    label: &str,
) -> Result<Vec<MaskingKeys>> {
    blocks
        .parties
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = seed::rng(master, &format!("{label}/party-{}", p.party));
            generate_keys_with(p, &mut rng, policy, patterns.map(|ps| &ps[i]))
        })
        .collect()
}

fn masked(blocks: &Blocks, keys: &[MaskingKeys]) -> Result<Vec<MaskedPartyData>> {
    blocks.parties.iter().zip(keys).map(|(p, k)| mask(p, k)).collect()
}

/// Sparsity patterns for every party. Fails with `Error::NonIntegral` if a
/// covering LP returns a fractional vertex.
pub fn patterns_for(blocks: &Blocks, policy: &KeyPolicy) -> Result<Vec<SparsePatterns>> {
    blocks.parties.iter().map(|p| sparse_patterns(p, policy)).collect()
}

/// Builds and solves CP, dense-key and sparse-key masked models for one key draw.
pub fn bench_once(instance: &AllianceInstance, master: u64, repeats: usize) -> Result<BenchRun> {
    let blocks = instance.assemble_blocks()?;
    let dense_policy = KeyPolicy::default();
    let sparse_policy = KeyPolicy::sparse();
    let patterns = patterns_for(&blocks, &sparse_policy)?;
    let dense_keys = keys_for(&blocks, &dense_policy, None, master, "bench/dense")?;
    let sparse_keys = keys_for(&blocks, &sparse_policy, Some(&patterns), master, "bench/sparse")?;

    let mut rows = Vec::new();
    for (p, (dk, sk)) in blocks.parties.iter().zip(dense_keys.iter().zip(&sparse_keys)) {
        rows.push(measure(p.party, "dense", &p.a, &p.b, &dk.d)?);
        rows.push(measure(p.party, "sparse", &p.a, &p.b, &sk.d)?);
    }
    let cp = build_collective(&blocks);
    let dense = assemble_masked_model(&masked(&blocks, &dense_keys)?, &blocks.c)?.lp;
    let sparse = assemble_masked_model(&masked(&blocks, &sparse_keys)?, &blocks.c)?.lp;
    Ok(BenchRun {
        n_paths: instance.paths.len(),
        parties: blocks.parties.len(),
        nnz_cp: cp.nnz(),
        nnz_dense: dense.nnz(),
        nnz_sparse: sparse.nnz(),
        cp_ms: solve_ms(&cp, repeats)?,
        dense_ms: solve_ms(&dense, repeats)?,
        sparse_ms: solve_ms(&sparse, repeats)?,
        rows,
    })
}
