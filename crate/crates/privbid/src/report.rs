//! CSV tables and the text summary.

use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use privbid_core::sim::{describe, mean_std, summarize, ReplicationResult, Strategy};
use privbid_core::sparsity::SparsityRow;
use serde::{Deserialize, Serialize};

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub strategy: Strategy,
    pub replication: usize,
    pub revenue: f64,
    pub accepts: usize,
    pub requests: usize,
    pub solve_ms: Vec<f64>,
}

impl From<&ReplicationResult> for ResultRow {
    fn from(r: &ReplicationResult) -> Self {
        Self {
            strategy: r.strategy,
            replication: r.replication,
            revenue: r.revenue,
            accepts: r.accepts,
            requests: r.requests,
            solve_ms: r.solve_ms.clone(),
        }
    }
}

const RESULT_FIXED: [&str; 5] = ["strategy", "replication", "revenue", "accepts", "requests"];

pub fn write_results<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let segments = rows.iter().map(|r| r.solve_ms.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = RESULT_FIXED.iter().map(|s| s.to_string()).collect();
    header.extend((1..=segments).map(|t| format!("solve_ms_{t}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.strategy.name().to_string(),
            r.replication.to_string(),
            r.revenue.to_string(),
            r.accepts.to_string(),
            r.requests.to_string(),
        ];
        rec.extend((0..segments).map(|t| r.solve_ms.get(t).map_or_else(String::new, |v| v.to_string())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.len() < RESULT_FIXED.len() || header.iter().zip(RESULT_FIXED).any(|(a, b)| a != b) {
        bail!("results.csv header is {:?}", header);
    }
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let ctx = || format!("results.csv row {}", line + 1);
        let solve_ms = rec
            .iter()
            .skip(RESULT_FIXED.len())
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(ctx)?;
        rows.push(ResultRow {
            strategy: rec[0].parse().map_err(anyhow::Error::msg).with_context(ctx)?,
            replication: rec[1].parse().with_context(ctx)?,
            revenue: rec[2].parse().with_context(ctx)?,
            accepts: rec[3].parse().with_context(ctx)?,
            requests: rec[4].parse().with_context(ctx)?,
            solve_ms,
        });
    }
    Ok(rows)
}

/// One line of `timing.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub model: String,
    pub n_paths: usize,
    pub parties: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

pub fn timing_rows(results: &[ReplicationResult], model_names: impl Fn(Strategy) -> String, n_paths: usize, parties: usize) -> Vec<TimingRow> {
    Strategy::ALL
        .iter()
        .filter_map(|&s| {
            let times: Vec<f64> = results
                .iter()
                .filter(|r| r.strategy == s)
                .flat_map(|r| r.solve_ms.iter().copied())
                .collect();
            (!times.is_empty()).then(|| {
                let (mean_ms, std_ms) = mean_std(&times);
                TimingRow {
                    model: model_names(s),
                    n_paths,
                    parties,
                    mean_ms,
                    std_ms,
                }
            })
        })
        .collect()
}

pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

/// `SparsityRow` with the column names used in `sparsity.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityCsvRow {
    pub party: usize,
    pub mode: String,
    #[serde(rename = "nnz_A")]
    pub nnz_a: usize,
    #[serde(rename = "nnz_B")]
    pub nnz_b: usize,
    pub density: f64,
    pub rank_ok: bool,
}

impl From<&SparsityRow> for SparsityCsvRow {
    fn from(r: &SparsityRow) -> Self {
        Self {
            party: r.party,
            mode: r.mode.clone(),
            nnz_a: r.nnz_a,
            nnz_b: r.nnz_b,
            density: r.density,
            rank_ok: r.rank_ok,
        }
    }
}

/// Relative revenues, accept counts and replication counts per strategy.
pub fn summary_text(results: &[ReplicationResult]) -> String {
    let mut out = String::from("strategy summary (rel_cp is mean revenue as a percentage of CP)\n");
    out.push_str(&describe(&summarize(results)));
    out
}

/// Digest of everything in the results that does not depend on wall time.
pub fn result_digest(results: &[ReplicationResult]) -> String {
    let mut text = String::new();
    for r in results {
        let decisions: String = r.decisions.iter().map(|&d| if d { '1' } else { '0' }).collect();
        let leftover: Vec<String> = r.leftover.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
        text.push_str(&format!(
            "{} {} {:016x} {} {} {} {}\n",
            r.strategy,
            r.replication,
            r.revenue.to_bits(),
            r.accepts,
            r.requests,
            decisions,
            leftover.join(",")
        ));
    }
    crate::io::sha256_hex(text.as_bytes())
}
