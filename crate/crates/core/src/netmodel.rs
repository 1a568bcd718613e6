//! Alliance networks, breakpoint expansion and the partitioned LP blocks.
//!
//! A path's revenue as a function of allocated seats is concave and piecewise
//! linear; it is represented by `B_s` unit columns with nonincreasing marginal
//! revenues. Each party's columns are the concatenation of its paths'
//! breakpoint columns, and each incidence column is repeated `B_s` times.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegOwner {
    Shared,
    Party(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub id: usize,
    pub capacity: u32,
    pub owner: LegOwner,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub fare: f64,
    /// Expected requests over the whole horizon.
    pub mean_demand: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub id: usize,
    pub party: usize,
    pub legs: Vec<usize>,
    pub products: Vec<Product>,
    /// Poisson request rate per period.
    pub arrival_rate: f64,
    /// Probability that a request on this path is for each product.
    pub choice_probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub horizon: f64,
    pub load_factor: f64,
    pub max_breakpoints: usize,
    pub seed: u64,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            horizon: 1000.0,
            load_factor: 1.2,
            max_breakpoints: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllianceInstance {
    pub legs: Vec<Leg>,
    pub paths: Vec<Path>,
    pub parties: Vec<usize>,
    pub config: InstanceConfig,
}

/// Marginal revenues `phi(b) - phi(b - 1)` of the single-path DLP
/// `phi(x) = max sum f_i y_i` s.t. `sum y_i <= x`, `0 <= y_i <= d_i`:
/// seats go to the highest fares first and fractional demand is kept.
pub fn marginal_revenues(products: &[Product], cap_bound: usize) -> Result<Vec<f64>> {
    if cap_bound == 0 {
        return Err(Error::ZeroBreakpoints);
    }
    if products.is_empty() {
        return Err(Error::EmptyPath);
    }
    let mut order: Vec<&Product> = products.iter().collect();
    order.sort_by(|a, b| b.fare.total_cmp(&a.fare));
    let mut out = Vec::with_capacity(cap_bound);
    let mut unit = 0.0;
    let mut room = 1.0;
    for p in order {
        let mut left = p.mean_demand.max(0.0);
        while left > 0.0 && out.len() < cap_bound {
            let take = left.min(room);
            unit += take * p.fare;
            left -= take;
            room -= take;
            if room <= 0.0 {
                out.push(unit);
                unit = 0.0;
                room = 1.0;
            }
        }
    }
    if out.len() < cap_bound && room < 1.0 {
        out.push(unit);
    }
    out.resize(cap_bound, 0.0);
    Ok(out)
}

pub fn expand_concave_to_breakpoints(path: &Path, cap_bound: usize) -> Result<Vec<f64>> {
    marginal_revenues(&path.products, cap_bound)
}

/// Per-call inputs to block assembly; the simulator overrides capacities and
/// demands at every reoptimisation.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockInputs {
    pub capacities: Vec<f64>,
    /// Expected demand per path and product.
    pub demands: Vec<Vec<f64>>,
    pub breakpoints: Vec<usize>,
}

impl BlockInputs {
    pub fn initial(instance: &AllianceInstance) -> Self {
        Self {
            capacities: instance.legs.iter().map(|l| f64::from(l.capacity)).collect(),
            demands: instance
                .paths
                .iter()
                .map(|p| p.products.iter().map(|q| q.mean_demand).collect())
                .collect(),
            breakpoints: instance.breakpoint_counts(),
        }
    }
}

/// One party's slice of the collective program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartyBlocks {
    pub party: usize,
    pub r: Vec<f64>,
    /// Shared-leg incidence, `m x n_k`.
    pub a: Matrix,
    /// Private-leg incidence, `m_k x n_k`.
    pub b: Matrix,
    pub c: Vec<f64>,
    /// Leg ids of the rows of `b`.
    pub private_legs: Vec<usize>,
    /// `(path index, breakpoint)` for each column.
    pub columns: Vec<(usize, usize)>,
}

impl PartyBlocks {
    pub fn n(&self) -> usize {
        self.r.len()
    }

    pub fn m_private(&self) -> usize {
        self.c.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blocks {
    /// Leg ids of the shared rows.
    pub shared_legs: Vec<usize>,
    pub c: Vec<f64>,
    pub parties: Vec<PartyBlocks>,
}

impl Blocks {
    pub fn m(&self) -> usize {
        self.c.len()
    }
}

impl AllianceInstance {
    pub fn num_parties(&self) -> usize {
        self.parties.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (k, &p) in self.parties.iter().enumerate() {
            if p != k {
                return Err(Error::Instance(format!("party ids must be 0..K, found {p} at {k}")));
            }
        }
        for (j, leg) in self.legs.iter().enumerate() {
            if leg.id != j {
                return Err(Error::Instance(format!("leg id {} at position {j}", leg.id)));
            }
            if let LegOwner::Party(k) = leg.owner {
                if k >= self.parties.len() {
                    return Err(Error::Instance(format!("leg {j} owned by unknown party {k}")));
                }
            }
        }
        for (s, path) in self.paths.iter().enumerate() {
            if path.id != s {
                return Err(Error::Instance(format!("path id {} at position {s}", path.id)));
            }
            if path.party >= self.parties.len() {
                return Err(Error::Instance(format!("path {s} has unknown party {}", path.party)));
            }
            if path.legs.is_empty() {
                return Err(Error::Instance(format!("path {s} has no legs")));
            }
            let distinct: BTreeSet<usize> = path.legs.iter().copied().collect();
            if distinct.len() != path.legs.len() {
                return Err(Error::Instance(format!("path {s} repeats a leg")));
            }
            if let Some(&j) = path.legs.iter().find(|&&j| j >= self.legs.len()) {
                return Err(Error::Instance(format!("path {s} uses unknown leg {j}")));
            }
            if path.products.is_empty() {
                return Err(Error::EmptyPath);
            }
            for p in &path.products {
                if !(p.fare > 0.0 && p.fare.is_finite()) || !(p.mean_demand >= 0.0) {
                    return Err(Error::Instance(format!("path {s} has an invalid product {p:?}")));
                }
            }
            if path.choice_probs.len() != path.products.len() || !(path.arrival_rate >= 0.0) {
                return Err(Error::Instance(format!("path {s} has inconsistent arrival data")));
            }
            for &j in &path.legs {
                if let LegOwner::Party(k) = self.legs[j].owner {
                    if k != path.party {
                        return Err(Error::CrossPartyPrivateLeg {
                            path: s as u32,
                            party: path.party as u32,
                            leg: j as u32,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Shared legs that fewer than two parties actually use.
    pub fn sharing_warnings(&self) -> Vec<String> {
        self.shared_legs()
            .into_iter()
            .filter_map(|j| {
                let users: BTreeSet<usize> = self
                    .paths
                    .iter()
                    .filter(|p| p.legs.contains(&j))
                    .map(|p| p.party)
                    .collect();
                (users.len() < 2).then(|| format!("shared leg {j} is used by {} parties", users.len()))
            })
            .collect()
    }

    pub fn shared_legs(&self) -> Vec<usize> {
        self.legs
            .iter()
            .filter(|l| l.owner == LegOwner::Shared)
            .map(|l| l.id)
            .collect()
    }

    pub fn private_legs(&self, k: usize) -> Vec<usize> {
        self.legs
            .iter()
            .filter(|l| l.owner == LegOwner::Party(k))
            .map(|l| l.id)
            .collect()
    }

    pub fn paths_of(&self, k: usize) -> Vec<usize> {
        self.paths
            .iter()
            .filter(|p| p.party == k)
            .map(|p| p.id)
            .collect()
    }

    /// `B_s`: the smallest leg capacity on the path, capped at the configured
    /// maximum. Paths through an empty leg get no columns.
    pub fn breakpoint_counts(&self) -> Vec<usize> {
        self.paths
            .iter()
            .map(|p| {
                let cap = p.legs.iter().map(|&j| self.legs[j].capacity).min().unwrap_or(0);
                (cap as usize).min(self.config.max_breakpoints)
            })
            .collect()
    }

    pub fn assemble_blocks(&self) -> Result<Blocks> {
        assemble_blocks(self, &BlockInputs::initial(self))
    }
}

pub fn assemble_blocks(instance: &AllianceInstance, inputs: &BlockInputs) -> Result<Blocks> {
    instance.validate()?;
    let n_legs = instance.legs.len();
    let n_paths = instance.paths.len();
    if inputs.capacities.len() != n_legs
        || inputs.demands.len() != n_paths
        || inputs.breakpoints.len() != n_paths
    {
        return Err(Error::Dimension("block inputs do not match the instance".into()));
    }
    let shared_legs = instance.shared_legs();
    let mut shared_row = vec![usize::MAX; n_legs];
    for (i, &j) in shared_legs.iter().enumerate() {
        shared_row[j] = i;
    }
    let c = shared_legs.iter().map(|&j| inputs.capacities[j]).collect();

    let mut parties = Vec::with_capacity(instance.num_parties());
    for k in 0..instance.num_parties() {
        let private_legs = instance.private_legs(k);
        let mut private_row = vec![usize::MAX; n_legs];
        for (i, &j) in private_legs.iter().enumerate() {
            private_row[j] = i;
        }
        let mut r = Vec::new();
        let mut columns = Vec::new();
        for s in instance.paths_of(k) {
            let path = &instance.paths[s];
            let bs = inputs.breakpoints[s];
            if bs == 0 {
                continue;
            }
            let products: Vec<Product> = path
                .products
                .iter()
                .zip(&inputs.demands[s])
                .map(|(p, &d)| Product {
                    fare: p.fare,
                    mean_demand: d,
                })
                .collect();
            let revenues = marginal_revenues(&products, bs)?;
            for (b, v) in revenues.into_iter().enumerate() {
                r.push(v);
                columns.push((s, b));
            }
        }
        let n = r.len();
        let mut a = Matrix::zeros(shared_legs.len(), n);
        let mut b = Matrix::zeros(private_legs.len(), n);
        for (col, &(s, _)) in columns.iter().enumerate() {
            for &j in &instance.paths[s].legs {
                match instance.legs[j].owner {
                    LegOwner::Shared => a[(shared_row[j], col)] = 1.0,
                    LegOwner::Party(_) => b[(private_row[j], col)] = 1.0,
                }
            }
        }
        let ck = private_legs.iter().map(|&j| inputs.capacities[j]).collect();
        parties.push(PartyBlocks {
            party: k,
            r,
            a,
            b,
            c: ck,
            private_legs,
            columns,
        });
    }
    Ok(Blocks {
        shared_legs,
        c,
        parties,
    })
}

/// Knobs for the synthetic hub-and-spoke generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_paths: usize,
    pub n_parties: usize,
    pub hub_count: usize,
    pub load_factor: f64,
    pub horizon: f64,
    pub max_breakpoints: usize,
    /// Chance that a path borrows a leg operated by another party.
    pub share_prob: f64,
    pub capacity_range: (u32, u32),
    pub products_range: (usize, usize),
    pub dirichlet_alpha: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_paths: 100,
            n_parties: 2,
            hub_count: 3,
            load_factor: 1.2,
            horizon: 1000.0,
            max_breakpoints: 20,
            share_prob: 0.2,
            capacity_range: (30, 120),
            products_range: (2, 4),
            dirichlet_alpha: 1.0,
        }
    }
}

pub fn generate_instance(cfg: &GeneratorConfig) -> Result<AllianceInstance> {
    if cfg.n_parties < 2 || cfg.n_paths < cfg.n_parties {
        return Err(Error::Config(format!(
            "need n_paths >= n_parties >= 2, got {} paths and {} parties",
            cfg.n_paths, cfg.n_parties
        )));
    }
    if cfg.hub_count == 0 || cfg.capacity_range.0 > cfg.capacity_range.1 || cfg.products_range.0 == 0
        || cfg.products_range.0 > cfg.products_range.1 || !(cfg.dirichlet_alpha > 0.0)
        || !(cfg.load_factor >= 0.0) || !(cfg.horizon > 0.0)
    {
        return Err(Error::Config("invalid generator ranges".into()));
    }
    let mut rng = seed::rng(cfg.seed, "instance");
    let k_count = cfg.n_parties;
    let n_legs = (cfg.n_paths / 3).max(2 * k_count).max(cfg.hub_count);

    // Candidate legs: each spoke leg hangs off one hub and is operated by one party.
    let hub: Vec<usize> = (0..n_legs).map(|j| j % cfg.hub_count).collect();
    let mut operator: Vec<usize> = (0..n_legs).map(|j| j % k_count).collect();
    operator.shuffle(&mut rng);
    let base_fare: Vec<f64> = (0..n_legs).map(|_| rng.random_range(80.0..240.0)).collect();

    let legs_of = |k: usize, h: Option<usize>, op: &[usize], same: bool| -> Vec<usize> {
        (0..n_legs)
            .filter(|&j| (op[j] == k) == same && h.is_none_or(|h| hub[j] == h))
            .collect()
    };

    let mut seen: BTreeSet<(usize, Vec<usize>)> = BTreeSet::new();
    let mut raw: Vec<(usize, Vec<usize>)> = Vec::with_capacity(cfg.n_paths);
    let mut attempts = 0usize;
    while raw.len() < cfg.n_paths {
        attempts += 1;
        let party = if raw.len() < k_count { raw.len() } else { rng.random_range(0..k_count) };
        let own = legs_of(party, None, &operator, true);
        let first = if rng.random_bool(cfg.share_prob / 2.0) {
            let other = legs_of(party, None, &operator, false);
            other[rng.random_range(0..other.len())]
        } else {
            own[rng.random_range(0..own.len())]
        };
        let mut legs = vec![first];
        if rng.random_bool(0.5) {
            let h = Some(hub[first]);
            let foreign = rng.random_bool(cfg.share_prob);
            let mut pool: Vec<usize> = legs_of(party, h, &operator, !foreign);
            pool.retain(|&j| j != first);
            if pool.is_empty() {
                pool = (0..n_legs).filter(|&j| hub[j] == hub[first] && j != first).collect();
            }
            if !pool.is_empty() {
                legs.push(pool[rng.random_range(0..pool.len())]);
            }
        }
        let mut key = legs.clone();
        key.sort_unstable();
        if seen.insert((party, key)) || attempts > 50 * cfg.n_paths {
            raw.push((party, legs));
        }
    }

    // Keep used legs only, renumbered; ownership follows the parties that use them.
    let mut users: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_legs];
    for (party, legs) in &raw {
        for &j in legs {
            users[j].insert(*party);
        }
    }
    let mut new_id = vec![usize::MAX; n_legs];
    let mut legs = Vec::new();
    for j in 0..n_legs {
        if users[j].is_empty() {
            continue;
        }
        new_id[j] = legs.len();
        let owner = if users[j].len() >= 2 {
            LegOwner::Shared
        } else {
            LegOwner::Party(*users[j].iter().next().expect("nonempty"))
        };
        legs.push(Leg {
            id: legs.len(),
            capacity: rng.random_range(cfg.capacity_range.0..=cfg.capacity_range.1),
            owner,
        });
    }

    let mut n_using = vec![0usize; legs.len()];
    for (_, path_legs) in &raw {
        for &j in path_legs {
            n_using[new_id[j]] += 1;
        }
    }
    let mu: Vec<f64> = legs
        .iter()
        .map(|l| cfg.load_factor * f64::from(l.capacity) / (cfg.horizon * n_using[l.id] as f64))
        .collect();

    let gamma = Gamma::new(cfg.dirichlet_alpha, 1.0).map_err(|e| Error::Config(format!("{e}")))?;
    let mut paths = Vec::with_capacity(raw.len());
    for (s, (party, old_legs)) in raw.into_iter().enumerate() {
        let path_legs: Vec<usize> = old_legs.iter().map(|&j| new_id[j]).collect();
        let lambda = path_legs.iter().map(|&j| mu[j]).sum::<f64>() / path_legs.len() as f64;
        let discount = if path_legs.len() > 1 { 0.85 } else { 1.0 };
        let mut fare = old_legs.iter().map(|&j| base_fare[j]).sum::<f64>() * discount;
        let count = rng.random_range(cfg.products_range.0..=cfg.products_range.1);
        let mut fares = Vec::with_capacity(count);
        for _ in 0..count {
            fares.push(libm::round(fare));
            fare *= rng.random_range(0.55..0.85);
        }
        let mut probs: Vec<f64> = (0..count).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = probs.iter().sum();
        if total > 0.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        } else {
            probs = vec![1.0 / count as f64; count];
        }
        let products = fares
            .iter()
            .zip(&probs)
            .map(|(&f, &p)| Product {
                fare: f,
                mean_demand: lambda * cfg.horizon * p,
            })
            .collect();
        paths.push(Path {
            id: s,
            party,
            legs: path_legs,
            products,
            arrival_rate: lambda,
            choice_probs: probs,
        });
    }

    let instance = AllianceInstance {
        legs,
        paths,
        parties: (0..k_count).collect(),
        config: InstanceConfig {
            horizon: cfg.horizon,
            load_factor: cfg.load_factor,
            max_breakpoints: cfg.max_breakpoints,
            seed: cfg.seed,
        },
    };
    instance.validate()?;
    Ok(instance)
}

/// Two-party network: party 0 operates legs 1-3 and 3-4, party 1 operates
/// 2-3 and 2-4, and leg 3-4 is shared. Every path has a single product.
pub fn example_network(capacities: [u32; 4], fares: [f64; 6]) -> AllianceInstance {
    // legs: 0 = (1-3), 1 = (3-4) shared, 2 = (2-3), 3 = (2-4)
    let owners = [
        LegOwner::Party(0),
        LegOwner::Shared,
        LegOwner::Party(1),
        LegOwner::Party(1),
    ];
    let legs = (0..4)
        .map(|j| Leg {
            id: j,
            capacity: capacities[j],
            owner: owners[j],
        })
        .collect();
    // party 0: 1->3, 3->4, 1->3->4; party 1: 2->3, 2->4, 2->3->4
    let routes: [(usize, &[usize]); 6] = [
        (0, &[0]),
        (0, &[1]),
        (0, &[0, 1]),
        (1, &[2]),
        (1, &[3]),
        (1, &[2, 1]),
    ];
    let paths = routes
        .iter()
        .enumerate()
        .map(|(s, &(party, legs))| Path {
            id: s,
            party,
            legs: legs.to_vec(),
            products: vec![Product {
                fare: fares[s],
                mean_demand: 1000.0,
            }],
            arrival_rate: 1.0,
            choice_probs: vec![1.0],
        })
        .collect();
    AllianceInstance {
        legs,
        paths,
        parties: vec![0, 1],
        config: InstanceConfig {
            max_breakpoints: 1,
            ..InstanceConfig::default()
        },
    }
}
