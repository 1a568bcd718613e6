//! Discrete-event booking simulation comparing centralized planning (CP),
//! coordinated capacity sharing through the masked protocol (CCS) and
//! individual control with pre-split shared legs (IC).
//!
//! The horizon is cut into equal segments; each strategy re-plans at every
//! segment start from the remaining capacities and the expected remaining
//! demand, then answers requests with bid-prices until the next segment.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, RowGroup, SimplexSolver};
use crate::masking::{generate_keys_with, sparse_patterns, KeyPolicy, KeyStructure, SparsePatterns};
use crate::mmatrix::MMatrixMode;
use crate::models::{build_individual, solve_collective};
use crate::netmodel::{assemble_blocks, AllianceInstance, BlockInputs, Blocks, LegOwner};
use crate::protocol::{make_actors, run_on_network, MemoryNetwork};
use crate::seed;

/// Slack added before flooring recovered allocations into seat limits.
pub const LIMIT_EPS: f64 = 1e-6;
/// Relative tolerance of the fare versus bid-price comparison.
pub const BID_TOL: f64 = 1e-9;

/// Wall-clock source; the core crate has none of its own.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Reports zero for every reading.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Cp,
    Ccs,
    Ic,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Cp, Strategy::Ccs, Strategy::Ic];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Cp => "cp",
            Strategy::Ccs => "ccs",
            Strategy::Ic => "ic",
        }
    }
}

impl core::fmt::Display for Strategy {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.pad(self.name())
    }
}

impl core::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cp" => Ok(Strategy::Cp),
            "ccs" => Ok(Strategy::Ccs),
            "ic" => Ok(Strategy::Ic),
            other => Err(Error::Config(format!("unknown strategy {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub load_factor: f64,
    pub segments: usize,
    pub replications: usize,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    pub key_policy: KeyPolicy,
    /// Reject CCS requests beyond the party's recovered allocation of a shared leg.
    pub enforce_ccs_limits: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 1000.0,
            load_factor: 1.2,
            segments: 5,
            replications: 100,
            seed: 1,
            strategies: Strategy::ALL.to_vec(),
            key_policy: KeyPolicy::default(),
            enforce_ccs_limits: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if !(self.load_factor >= 0.0) || !self.load_factor.is_finite() {
            return Err(Error::Config("load factor must be nonnegative".into()));
        }
        if self.segments == 0 || self.replications == 0 {
            return Err(Error::Config("segments and replications must be at least 1".into()));
        }
        if self.strategies.contains(&Strategy::Ccs) && self.key_policy.mode != MMatrixMode::Diagonal {
            return Err(Error::Config("simulated CCS planning uses diagonal multipliers only".into()));
        }
        Ok(())
    }

    pub fn segment_start(&self, tau: usize) -> f64 {
        self.horizon * tau as f64 / self.segments as f64
    }
}

/// `mu_j = rho c_j / (T N_j)` and `lambda_s` the mean of `mu_j` over the legs of `s`.
pub fn arrival_rates(instance: &AllianceInstance, load_factor: f64, horizon: f64) -> Vec<f64> {
    let mut n_using = vec![0usize; instance.legs.len()];
    for p in &instance.paths {
        for &j in &p.legs {
            n_using[j] += 1;
        }
    }
    let mu: Vec<f64> = instance
        .legs
        .iter()
        .zip(&n_using)
        .map(|(l, &n)| {
            if n == 0 {
                0.0
            } else {
                load_factor * f64::from(l.capacity) / (horizon * n as f64)
            }
        })
        .collect();
    instance
        .paths
        .iter()
        .map(|p| {
            if p.legs.is_empty() {
                0.0
            } else {
                p.legs.iter().map(|&j| mu[j]).sum::<f64>() / p.legs.len() as f64
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub path: usize,
    pub product: usize,
}

/// Independent Poisson streams per path, merged and sorted by time.
pub fn generate_arrivals<R: Rng + ?Sized>(
    instance: &AllianceInstance,
    rates: &[f64],
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<Event>> {
    if rates.len() != instance.paths.len() {
        return Err(Error::Dimension("one rate per path expected".into()));
    }
    let mut events = Vec::new();
    for (s, (path, &lambda)) in instance.paths.iter().zip(rates).enumerate() {
        if !(lambda > 0.0) {
            continue;
        }
        let gap = Exp::new(lambda).map_err(|e| Error::Config(format!("{e}")))?;
        let choice = WeightedIndex::new(&path.choice_probs).map_err(|e| Error::Instance(format!("path {s}: {e}")))?;
        let mut t = 0.0;
        loop {
            t += gap.sample(rng);
            if t >= horizon {
                break;
            }
            events.push(Event {
                time: t,
                path: s,
                product: choice.sample(rng),
            });
        }
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.path.cmp(&b.path)));
    Ok(events)
}

/// Integer split of `capacity` proportional to `weights` by largest remainders;
/// ties go to the lower index. All-zero weights split evenly.
pub fn largest_remainder_split(capacity: u32, weights: &[f64]) -> Vec<u32> {
    if weights.is_empty() {
        return Vec::new();
    }
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = if total > 0.0 {
        weights.iter().map(|w| w / total * f64::from(capacity)).collect()
    } else {
        vec![f64::from(capacity) / weights.len() as f64; weights.len()]
    };
    let mut out: Vec<u32> = quotas.iter().map(|q| libm::floor(*q) as u32).collect();
    let assigned: u32 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - libm::floor(quotas[a]);
        let fb = quotas[b] - libm::floor(quotas[b]);
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().take(capacity.saturating_sub(assigned) as usize) {
        out[k] += 1;
    }
    out
}

/// Bid-prices and per-party seat limits in force during one segment.
#[derive(Clone, Debug, PartialEq)]
struct Policy {
    /// `[party][leg]`.
    bids: Vec<Vec<f64>>,
    /// `[party][leg]` remaining seats a party may still sell; `None` pools.
    limits: Option<Vec<Vec<f64>>>,
    solve_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub strategy: Strategy,
    pub replication: usize,
    pub revenue: f64,
    pub accepts: usize,
    pub requests: usize,
    /// Planning time per segment.
    pub solve_ms: Vec<f64>,
    /// Accept/reject per event, in event order.
    pub decisions: Vec<bool>,
    /// Remaining capacity per leg at the end.
    pub leftover: Vec<f64>,
    /// Events whose seats and bid-price test passed but whose allocation limit
    /// did not. They are rejected when limits are enforced and accepted otherwise.
    pub limit_hits: Vec<usize>,
}

/// Per-instance state shared by every replication.
#[derive(Clone, Debug)]
pub struct Simulator {
    instance: AllianceInstance,
    config: SimConfig,
    rates: Vec<f64>,
    breakpoints: Vec<usize>,
    patterns: Option<Vec<SparsePatterns>>,
}

impl Simulator {
    pub fn new(instance: AllianceInstance, config: SimConfig) -> Result<Self> {
        config.validate()?;
        instance.validate()?;
        let rates = arrival_rates(&instance, config.load_factor, config.horizon);
        let breakpoints = instance.breakpoint_counts();
        let patterns = if config.strategies.contains(&Strategy::Ccs) && config.key_policy.structure == KeyStructure::Sparse {
            let blocks = instance.assemble_blocks()?;
            Some(
                blocks
                    .parties
                    .iter()
                    .map(|p| sparse_patterns(p, &config.key_policy))
                    .collect::<Result<_>>()?,
            )
        } else {
            None
        };
        Ok(Self {
            instance,
            config,
            rates,
            breakpoints,
            patterns,
        })
    }

    pub fn instance(&self) -> &AllianceInstance {
        &self.instance
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn events(&self, replication: usize) -> Result<Vec<Event>> {
        let mut rng = seed::rng(self.config.seed, &format!("arrivals/rep-{replication}"));
        generate_arrivals(&self.instance, &self.rates, self.config.horizon, &mut rng)
    }

    /// Expected remaining demand `lambda_s (T - t) p_is`.
    fn inputs(&self, t: f64, capacities: &[f64]) -> BlockInputs {
        let remaining = (self.config.horizon - t).max(0.0);
        BlockInputs {
            capacities: capacities.to_vec(),
            demands: self
                .instance
                .paths
                .iter()
                .zip(&self.rates)
                .map(|(p, &l)| p.choice_probs.iter().map(|q| l * remaining * q).collect())
                .collect(),
            breakpoints: self.breakpoints.clone(),
        }
    }

    /// Expected horizon demand of each party on each leg.
    pub fn leg_demands(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.instance.legs.len()]; self.instance.num_parties()];
        for (p, &l) in self.instance.paths.iter().zip(&self.rates) {
            for &j in &p.legs {
                d[p.party][j] += l * self.config.horizon;
            }
        }
        d
    }

    /// IC seat shares `[party][leg]` of the shared legs; private legs get zero.
    pub fn ic_shares(&self) -> Vec<Vec<u32>> {
        let k_count = self.instance.num_parties();
        let d = self.leg_demands();
        let mut shares = vec![vec![0u32; self.instance.legs.len()]; k_count];
        for leg in &self.instance.legs {
            if leg.owner != LegOwner::Shared {
                continue;
            }
            let users: Vec<usize> = (0..k_count)
                .filter(|&k| self.instance.paths.iter().any(|p| p.party == k && p.legs.contains(&leg.id)))
                .collect();
            let weights: Vec<f64> = users.iter().map(|&k| d[k][leg.id]).collect();
            for (&k, q) in users.iter().zip(largest_remainder_split(leg.capacity, &weights)) {
                shares[k][leg.id] = q;
            }
        }
        shares
    }

    fn leg_bids(&self, blocks: &Blocks, alpha: &[f64], alpha_k: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut bids = vec![vec![0.0; self.instance.legs.len()]; self.instance.num_parties()];
        for (k, row) in bids.iter_mut().enumerate() {
            for (&j, &a) in blocks.shared_legs.iter().zip(alpha) {
                row[j] = a;
            }
            for (&j, &a) in blocks.parties[k].private_legs.iter().zip(&alpha_k[k]) {
                row[j] = a;
            }
        }
        bids
    }

    fn plan_cp(&self, t: f64, capacities: &[f64], clock: &dyn Clock) -> Result<Policy> {
        let start = clock.now_ms();
        let blocks = assemble_blocks(&self.instance, &self.inputs(t, capacities))?;
        let sol = solve_collective(&blocks)?;
        Ok(Policy {
            bids: self.leg_bids(&blocks, &sol.alpha, &sol.alpha_k),
            limits: None,
            solve_ms: clock.now_ms() - start,
        })
    }

    fn plan_ccs(&self, rep: usize, tau: usize, t: f64, capacities: &[f64], clock: &dyn Clock) -> Result<Policy> {
        let start = clock.now_ms();
        let blocks = assemble_blocks(&self.instance, &self.inputs(t, capacities))?;
        let master = seed::sub_seed(self.config.seed, &format!("ccs/rep-{rep}/segment-{tau}"));
        let keys = blocks
            .parties
            .iter()
            .map(|p| {
                let mut rng = seed::rng(master, &format!("keys/party-{}", p.party));
                let pats = self.patterns.as_ref().map(|v| &v[p.party]);
                generate_keys_with(p, &mut rng, &self.config.key_policy, pats)
            })
            .collect::<Result<Vec<_>>>()?;
        let actors = make_actors(&blocks, keys)?;
        let run = run_on_network(actors, &MemoryNetwork::new(blocks.parties.len()), &SimplexSolver::default())?;
        let solve_ms = clock.now_ms() - start;

        let alpha = run.outputs[0].alpha.clone();
        let alpha_k: Vec<Vec<f64>> = run.outputs.iter().map(|o| o.alpha_k.clone()).collect();
        let mut limits = vec![vec![f64::INFINITY; self.instance.legs.len()]; blocks.parties.len()];
        for (k, out) in run.outputs.iter().enumerate() {
            let a = &blocks.parties[k].a;
            for (i, &j) in blocks.shared_legs.iter().enumerate() {
                let alloc: f64 = a.row(i).iter().zip(&out.x).map(|(a, x)| a * x).sum();
                limits[k][j] = libm::floor(alloc + LIMIT_EPS).max(0.0);
            }
        }
        Ok(Policy {
            bids: self.leg_bids(&blocks, &alpha, &alpha_k),
            limits: Some(limits),
            solve_ms,
        })
    }

    fn plan_ic(&self, t: f64, capacities: &[f64], limits: &[Vec<f64>], clock: &dyn Clock) -> Result<Policy> {
        let start = clock.now_ms();
        let blocks = assemble_blocks(&self.instance, &self.inputs(t, capacities))?;
        let mut bids = vec![vec![0.0; self.instance.legs.len()]; blocks.parties.len()];
        for (k, party) in blocks.parties.iter().enumerate() {
            let share: Vec<f64> = blocks.shared_legs.iter().map(|&j| limits[k][j].min(capacities[j])).collect();
            let lp = build_individual(&blocks, k, &share)?;
            let sol = lp::solve(&lp)?;
            sol.require_optimal()?;
            for (&j, a) in blocks.shared_legs.iter().zip(sol.duals(RowGroup::SharedCap)) {
                bids[k][j] = a;
            }
            for (&j, a) in party.private_legs.iter().zip(sol.duals(RowGroup::PartyCap(k))) {
                bids[k][j] = a;
            }
        }
        Ok(Policy {
            bids,
            limits: None,
            solve_ms: clock.now_ms() - start,
        })
    }

    /// Leg bid-prices `[party][leg]` a strategy would post at the start of
    /// segment `tau` given the remaining `capacities`. IC uses its initial shares.
    pub fn segment_bids(&self, strategy: Strategy, replication: usize, tau: usize, capacities: &[f64]) -> Result<Vec<Vec<f64>>> {
        let t = self.config.segment_start(tau);
        let policy = match strategy {
            Strategy::Cp => self.plan_cp(t, capacities, &NullClock)?,
            Strategy::Ccs => self.plan_ccs(replication, tau, t, capacities, &NullClock)?,
            Strategy::Ic => {
                let shares: Vec<Vec<f64>> = self
                    .ic_shares()
                    .into_iter()
                    .map(|row| row.into_iter().map(f64::from).collect())
                    .collect();
                self.plan_ic(t, capacities, &shares, &NullClock)?
            }
        };
        Ok(policy.bids)
    }

    /// One strategy over one event stream.
    pub fn run(&self, strategy: Strategy, replication: usize, events: &[Event], clock: &dyn Clock) -> Result<ReplicationResult> {
        let legs = &self.instance.legs;
        let mut capacities: Vec<f64> = legs.iter().map(|l| f64::from(l.capacity)).collect();
        // IC limits persist over the horizon; CCS limits are replaced every segment.
        let mut ic_limits: Vec<Vec<f64>> = self
            .ic_shares()
            .into_iter()
            .map(|row| row.into_iter().map(f64::from).collect())
            .collect();
        let mut result = ReplicationResult {
            strategy,
            replication,
            revenue: 0.0,
            accepts: 0,
            requests: events.len(),
            solve_ms: Vec::with_capacity(self.config.segments),
            decisions: Vec::with_capacity(events.len()),
            leftover: Vec::new(),
            limit_hits: Vec::new(),
        };
        let mut next = 0;
        for tau in 0..self.config.segments {
            let t0 = self.config.segment_start(tau);
            let t1 = if tau + 1 == self.config.segments {
                f64::INFINITY
            } else {
                self.config.segment_start(tau + 1)
            };
            let mut policy = match strategy {
                Strategy::Cp => self.plan_cp(t0, &capacities, clock)?,
                Strategy::Ccs => self.plan_ccs(replication, tau, t0, &capacities, clock)?,
                Strategy::Ic => self.plan_ic(t0, &capacities, &ic_limits, clock)?,
            };
            result.solve_ms.push(policy.solve_ms);
            while next < events.len() && events[next].time < t1 {
                let ev = events[next];
                next += 1;
                let path = &self.instance.paths[ev.path];
                let k = path.party;
                let fare = path.products[ev.product].fare;
                let bid: f64 = path.legs.iter().map(|&j| policy.bids[k][j]).sum();
                let seats = path.legs.iter().all(|&j| capacities[j] >= 1.0);
                let shared_ok = |lim: &[Vec<f64>]| {
                    path.legs
                        .iter()
                        .all(|&j| legs[j].owner != LegOwner::Shared || lim[k][j] >= 1.0)
                };
                let allowed = match strategy {
                    Strategy::Cp => true,
                    Strategy::Ccs => shared_ok(policy.limits.as_ref().expect("CCS sets limits")),
                    Strategy::Ic => shared_ok(&ic_limits),
                };
                let price_ok = fare >= bid - BID_TOL * (1.0 + fare.abs());
                if seats && price_ok && !allowed {
                    result.limit_hits.push(next - 1);
                }
                let binding = strategy != Strategy::Ccs || self.config.enforce_ccs_limits;
                let accept = seats && price_ok && (allowed || !binding);
                if accept {
                    for &j in &path.legs {
                        capacities[j] -= 1.0;
                        assert!(capacities[j] >= 0.0, "leg {j} capacity went negative");
                        if legs[j].owner == LegOwner::Shared {
                            match strategy {
                                Strategy::Cp => {}
                                Strategy::Ccs => policy.limits.as_mut().expect("CCS sets limits")[k][j] -= 1.0,
                                Strategy::Ic => ic_limits[k][j] -= 1.0,
                            }
                        }
                    }
                    result.revenue += fare;
                    result.accepts += 1;
                }
                result.decisions.push(accept);
            }
        }
        result.leftover = capacities;
        Ok(result)
    }

    /// Every configured strategy on every replication, sequentially.
    pub fn run_all(&self, clock: &dyn Clock) -> Result<Vec<ReplicationResult>> {
        let mut out = Vec::new();
        for rep in 0..self.config.replications {
            out.extend(self.run_replication(rep, clock)?);
        }
        Ok(out)
    }

    /// Every configured strategy on one shared event stream.
    pub fn run_replication(&self, replication: usize, clock: &dyn Clock) -> Result<Vec<ReplicationResult>> {
        let events = self.events(replication)?;
        self.config
            .strategies
            .iter()
            .map(|&s| self.run(s, replication, &events, clock))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub replications: usize,
    pub mean_revenue: f64,
    pub std_revenue: f64,
    /// Mean revenue as a percentage of the CP mean.
    pub relative_to_cp: Option<f64>,
    pub mean_accepts: f64,
    pub mean_solve_ms: f64,
    pub std_solve_ms: f64,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

/// Aggregates per strategy in [`Strategy::ALL`] order; timing is per segment solve.
pub fn summarize(results: &[ReplicationResult]) -> Vec<StrategySummary> {
    let mut rows: Vec<StrategySummary> = Strategy::ALL
        .iter()
        .filter_map(|&s| {
            let mine: Vec<&ReplicationResult> = results.iter().filter(|r| r.strategy == s).collect();
            if mine.is_empty() {
                return None;
            }
            let revenues: Vec<f64> = mine.iter().map(|r| r.revenue).collect();
            let accepts: Vec<f64> = mine.iter().map(|r| r.accepts as f64).collect();
            let times: Vec<f64> = mine.iter().flat_map(|r| r.solve_ms.iter().copied()).collect();
            let (mean_revenue, std_revenue) = mean_std(&revenues);
            let (mean_solve_ms, std_solve_ms) = mean_std(&times);
            Some(StrategySummary {
                strategy: s,
                replications: mine.len(),
                mean_revenue,
                std_revenue,
                relative_to_cp: None,
                mean_accepts: mean_std(&accepts).0,
                mean_solve_ms,
                std_solve_ms,
            })
        })
        .collect();
    let cp = rows.iter().find(|r| r.strategy == Strategy::Cp).map(|r| r.mean_revenue);
    if let Some(cp) = cp.filter(|&v| v > 0.0) {
        for r in &mut rows {
            r.relative_to_cp = Some(if r.strategy == Strategy::Cp {
                100.0
            } else {
                r.mean_revenue / cp * 100.0
            });
        }
    }
    rows
}

/// Index of the first event on which two decision sequences differ.
pub fn first_divergence(a: &[bool], b: &[bool]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x != y).or_else(|| (a.len() != b.len()).then(|| a.len().min(b.len())))
}

pub fn describe(summary: &[StrategySummary]) -> String {
    let mut out = String::new();
    for s in summary {
        let rel = s.relative_to_cp.map_or_else(|| String::from("-"), |v| format!("{v:.2}"));
        out.push_str(&format!(
            "{:<4} reps={:<4} mean={:.2} std={:.2} rel_cp={} accepts={:.1} solve_ms={:.3}\n",
            s.strategy, s.replications, s.mean_revenue, s.std_revenue, rel, s.mean_accepts, s.mean_solve_ms
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{example_network, Leg, Path, Product};

    fn single_leg(capacity: u32, fares: &[f64], paths: usize) -> AllianceInstance {
        let mut inst = example_network([1, 1, 1, 1], [1.0; 6]);
        inst.legs = vec![Leg {
            id: 0,
            capacity,
            owner: LegOwner::Party(0),
        }];
        inst.paths = (0..paths)
            .map(|s| Path {
                id: s,
                party: 0,
                legs: vec![0],
                products: fares.iter().map(|&f| Product { fare: f, mean_demand: 1.0 }).collect(),
                arrival_rate: 0.0,
                choice_probs: vec![1.0 / fares.len() as f64; fares.len()],
            })
            .collect();
        inst.parties = vec![0];
        inst.config.max_breakpoints = 200;
        inst
    }

    #[test]
    fn general_multipliers_are_rejected_for_ccs() {
        let general = KeyPolicy { mode: MMatrixMode::General, ..KeyPolicy::default() };
        let cfg = SimConfig { key_policy: general, ..SimConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cp_only = SimConfig { strategies: vec![Strategy::Cp], ..cfg };
        assert!(cp_only.validate().is_ok());
    }

    #[test]
    fn zero_load_gives_no_events() {
        let inst = example_network([5, 5, 5, 5], [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let rates = arrival_rates(&inst, 0.0, 1000.0);
        let ev = generate_arrivals(&inst, &rates, 1000.0, &mut seed::rng(1, "a")).unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn rates_follow_the_load_formula() {
        let inst = example_network([10, 20, 30, 40], [1.0; 6]);
        let rates = arrival_rates(&inst, 1.2, 1000.0);
        // Leg 1 carries three paths; legs 0 and 2 two each; leg 3 one.
        let mu = [1.2 * 10.0 / 2000.0, 1.2 * 20.0 / 3000.0, 1.2 * 30.0 / 2000.0, 1.2 * 40.0 / 1000.0];
        assert!((rates[0] - mu[0]).abs() < 1e-15);
        assert!((rates[2] - (mu[0] + mu[1]) / 2.0).abs() < 1e-15);
        assert!((rates[4] - mu[3]).abs() < 1e-15);
    }

    #[test]
    fn arrival_count_matches_the_poisson_mean() {
        let inst = single_leg(100, &[10.0], 1);
        let rates = arrival_rates(&inst, 1.2, 1000.0);
        assert!((rates[0] * 1000.0 - 120.0).abs() < 1e-9);
        let counts: Vec<f64> = (0..100)
            .map(|r| {
                let mut rng = seed::rng(7, &format!("arrivals/rep-{r}"));
                generate_arrivals(&inst, &rates, 1000.0, &mut rng).unwrap().len() as f64
            })
            .collect();
        let (mean, _) = mean_std(&counts);
        // Mean of 100 Poisson(120) draws has standard error sqrt(120 / 100).
        assert!((mean - 120.0).abs() <= 3.0 * libm::sqrt(1.2), "mean {mean}");
    }

    #[test]
    fn streams_are_deterministic_and_sorted() {
        let inst = example_network([50, 50, 50, 50], [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let sim = Simulator::new(inst, SimConfig::default()).unwrap();
        let a = sim.events(3).unwrap();
        assert_eq!(a, sim.events(3).unwrap());
        assert_ne!(a, sim.events(4).unwrap());
        assert!(a.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder_split(10, &[1.0, 1.0]), vec![5, 5]);
        assert_eq!(largest_remainder_split(7, &[1.0, 1.0]), vec![4, 3]);
        assert_eq!(largest_remainder_split(10, &[1.0, 2.0, 2.0]), vec![2, 4, 4]);
        assert_eq!(largest_remainder_split(3, &[0.0, 0.0, 0.0]), vec![1, 1, 1]);
        assert_eq!(largest_remainder_split(5, &[0.2, 0.3, 0.5]).iter().sum::<u32>(), 5);
    }

    fn fixed_events(times: &[f64], products: &[usize]) -> Vec<Event> {
        times
            .iter()
            .zip(products)
            .map(|(&time, &product)| Event { time, path: 0, product })
            .collect()
    }

    #[test]
    fn ample_capacity_accepts_everything() {
        let inst = single_leg(100, &[10.0, 5.0], 1);
        let cfg = SimConfig {
            load_factor: 0.01,
            strategies: vec![Strategy::Cp],
            ..SimConfig::default()
        };
        let sim = Simulator::new(inst, cfg).unwrap();
        let ev = fixed_events(&[1.0, 2.0, 500.0], &[1, 0, 1]);
        let r = sim.run(Strategy::Cp, 0, &ev, &NullClock).unwrap();
        assert_eq!(r.decisions, vec![true; 3]);
        assert_eq!(r.revenue, 20.0);
        assert_eq!(r.leftover, vec![97.0]);
    }

    #[test]
    fn zero_capacity_rejects_everything() {
        let inst = single_leg(0, &[10.0], 1);
        let sim = Simulator::new(inst, SimConfig::default()).unwrap();
        let ev = fixed_events(&[1.0, 2.0], &[0, 0]);
        for s in [Strategy::Cp, Strategy::Ic] {
            let r = sim.run(s, 0, &ev, &NullClock).unwrap();
            assert_eq!(r.decisions, vec![false, false]);
            assert_eq!(r.revenue, 0.0);
        }
    }

    #[test]
    fn tight_leg_matches_a_hand_trace() {
        // One leg with 2 seats shared by two paths, fares 100 and 40, expected
        // demand far above capacity: the bid-price sits at the high fare, so
        // only high-fare requests are taken until the seats are gone.
        let inst = single_leg(2, &[100.0, 40.0], 2);
        let cfg = SimConfig {
            load_factor: 20.0,
            segments: 1,
            strategies: vec![Strategy::Cp],
            ..SimConfig::default()
        };
        let sim = Simulator::new(inst, cfg).unwrap();
        let ev = fixed_events(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1, 0, 1, 0, 0]);
        let r = sim.run(Strategy::Cp, 0, &ev, &NullClock).unwrap();
        assert_eq!(r.decisions, vec![false, true, false, true, false]);
        assert_eq!(r.revenue, 200.0);
        assert_eq!(r.leftover, vec![0.0]);
    }

    #[test]
    fn single_party_ic_matches_cp() {
        let inst = single_leg(30, &[100.0, 60.0, 30.0], 2);
        let cfg = SimConfig {
            strategies: vec![Strategy::Cp, Strategy::Ic],
            replications: 3,
            ..SimConfig::default()
        };
        let sim = Simulator::new(inst, cfg).unwrap();
        for rep in 0..3 {
            let rs = sim.run_replication(rep, &NullClock).unwrap();
            assert_eq!(rs[0].decisions, rs[1].decisions);
            assert_eq!(rs[0].revenue, rs[1].revenue);
        }
    }

    #[test]
    fn shared_legs_split_by_expected_demand() {
        // mu = (0.006, 0.008, 0.006, 0.024): party 0 expects 8 + 7 = 15 passengers
        // on the shared leg and party 1 expects 7, so 20 seats split 13.6 / 6.4.
        let inst = example_network([10, 20, 10, 20], [1.0; 6]);
        let sim = Simulator::new(inst, SimConfig::default()).unwrap();
        let shares = sim.ic_shares();
        assert_eq!((shares[0][1], shares[1][1]), (14, 6));
        assert_eq!(shares[0][0], 0);
    }

    #[test]
    fn revenue_is_the_sum_of_accepted_fares() {
        let inst = example_network([15, 25, 15, 20], [90.0, 120.0, 180.0, 80.0, 110.0, 170.0]);
        let cfg = SimConfig {
            load_factor: 1.6,
            replications: 2,
            ..SimConfig::default()
        };
        let sim = Simulator::new(inst, cfg).unwrap();
        for rep in 0..2 {
            let events = sim.events(rep).unwrap();
            for r in sim.run_replication(rep, &NullClock).unwrap() {
                let total: f64 = events
                    .iter()
                    .zip(&r.decisions)
                    .filter(|(_, &d)| d)
                    .map(|(e, _)| sim.instance().paths[e.path].products[e.product].fare)
                    .sum();
                assert_eq!(r.revenue, total);
                assert!(r.leftover.iter().all(|&c| c >= 0.0));
                assert_eq!(r.solve_ms.len(), 5);
            }
        }
    }

    #[test]
    fn summary_reports_cp_as_one_hundred() {
        let mk = |strategy, revenue| ReplicationResult {
            strategy,
            replication: 0,
            revenue,
            accepts: 1,
            requests: 1,
            solve_ms: vec![1.0],
            decisions: vec![true],
            leftover: vec![],
                limit_hits: vec![],
        };
        let rows = summarize(&[mk(Strategy::Cp, 200.0), mk(Strategy::Cp, 100.0), mk(Strategy::Ic, 120.0)]);
        assert_eq!(rows[0].relative_to_cp, Some(100.0));
        assert_eq!(rows[0].mean_revenue, 150.0);
        assert_eq!(rows[1].relative_to_cp, Some(80.0));
        assert_eq!(first_divergence(&[true, false], &[true, true]), Some(1));
        assert_eq!(first_divergence(&[true], &[true]), None);
    }
}
