use privbid_core::masking::KeyPolicy;
use privbid_core::netmodel::{generate_instance, marginal_revenues, GeneratorConfig, Product};
use privbid_core::seed;
use privbid_core::sim::{generate_arrivals, largest_remainder_split, SimConfig, Simulator, Strategy};
use proptest::prelude::*;

fn config(s: u64, parties: usize) -> GeneratorConfig {
    GeneratorConfig {
        seed: s,
        n_paths: 4 * parties + (s % 5) as usize,
        n_parties: parties,
        hub_count: 2,
        max_breakpoints: 4,
        share_prob: 0.4,
        capacity_range: (3, 12),
        ..GeneratorConfig::default()
    }
}

/// `phi(b)` by filling `b` seats with the highest fares first.
fn greedy_value(products: &[Product], seats: f64) -> f64 {
    let mut sorted = products.to_vec();
    sorted.sort_by(|a, b| b.fare.total_cmp(&a.fare));
    let mut left = seats;
    let mut value = 0.0;
    for p in sorted {
        let take = p.mean_demand.min(left).max(0.0);
        value += take * p.fare;
        left -= take;
    }
    value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_instances_are_valid_and_deterministic(s in 0u64..10_000, parties in 2usize..5) {
        let a = generate_instance(&config(s, parties)).unwrap();
        prop_assert!(a.validate().is_ok());
        prop_assert_eq!(&a, &generate_instance(&config(s, parties)).unwrap());
        for path in &a.paths {
            let total: f64 = path.choice_probs.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(path.choice_probs.iter().all(|&p| p >= 0.0));
            prop_assert!(path.arrival_rate >= 0.0);
        }
    }

    #[test]
    fn marginal_revenues_are_concave_increments(
        fares in prop::collection::vec(1.0f64..500.0, 1..5),
        demands in prop::collection::vec(0.0f64..6.0, 5),
        bound in 1usize..12,
    ) {
        let products: Vec<Product> = fares
            .iter()
            .zip(&demands)
            .map(|(&fare, &mean_demand)| Product { fare, mean_demand })
            .collect();
        let marginals = marginal_revenues(&products, bound).unwrap();
        prop_assert_eq!(marginals.len(), bound);
        prop_assert!(marginals.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        let mut running = 0.0;
        for (b, m) in marginals.iter().enumerate() {
            running += m;
            let want = greedy_value(&products, (b + 1) as f64);
            prop_assert!((running - want).abs() <= 1e-9 * (1.0 + want));
        }
    }

    #[test]
    fn largest_remainder_split_is_exact_and_near_quota(
        capacity in 0u32..500,
        weights in prop::collection::vec(0.0f64..10.0, 1..8),
    ) {
        let split = largest_remainder_split(capacity, &weights);
        prop_assert_eq!(split.iter().sum::<u32>(), capacity);
        let total: f64 = weights.iter().sum();
        for (k, &got) in split.iter().enumerate() {
            let quota = if total > 0.0 {
                weights[k] / total * f64::from(capacity)
            } else {
                f64::from(capacity) / weights.len() as f64
            };
            prop_assert!(f64::from(got) >= quota.floor() - 1e-9 && f64::from(got) <= quota.ceil() + 1e-9);
        }
    }

    #[test]
    fn arrivals_are_sorted_and_inside_the_horizon(s in 0u64..10_000) {
        let instance = generate_instance(&config(s, 2)).unwrap();
        let rates: Vec<f64> = instance.paths.iter().map(|p| p.arrival_rate).collect();
        let events = generate_arrivals(&instance, &rates, 50.0, &mut seed::rng(s, "arrivals")).unwrap();
        prop_assert!(events.windows(2).all(|w| w[0].time <= w[1].time));
        for e in &events {
            prop_assert!(e.time > 0.0 && e.time < 50.0);
            prop_assert!(e.product < instance.paths[e.path].products.len());
        }
    }
}

#[test]
fn identity_keys_post_the_centralized_bids() {
    for s in 0..4u64 {
        let sim = Simulator::new(
            generate_instance(&config(s, 2 + (s as usize) % 2)).unwrap(),
            SimConfig {
                replications: 1,
                segments: 3,
                strategies: vec![Strategy::Cp, Strategy::Ccs],
                key_policy: KeyPolicy::identity(),
                ..SimConfig::default()
            },
        )
        .unwrap();
        let full: Vec<f64> = sim.instance().legs.iter().map(|l| f64::from(l.capacity)).collect();
        let half: Vec<f64> = full.iter().map(|c| (c / 2.0).floor()).collect();
        for (tau, caps) in [(0, &full), (1, &half), (2, &half)] {
            let cp = sim.segment_bids(Strategy::Cp, 0, tau, caps).unwrap();
            let ccs = sim.segment_bids(Strategy::Ccs, 0, tau, caps).unwrap();
            let bits = |b: &Vec<Vec<f64>>| b.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&cp), bits(&ccs), "instance {s}, segment {tau}");
        }
    }
}

#[test]
fn replications_are_reproducible() {
    let sim = Simulator::new(
        generate_instance(&config(3, 2)).unwrap(),
        SimConfig {
            replications: 2,
            horizon: 200.0,
            ..SimConfig::default()
        },
    )
    .unwrap();
    let clock = privbid_core::sim::NullClock;
    let strip = |mut rs: Vec<privbid_core::sim::ReplicationResult>| {
        rs.iter_mut().for_each(|r| r.solve_ms.clear());
        rs
    };
    assert_eq!(strip(sim.run_replication(1, &clock).unwrap()), strip(sim.run_replication(1, &clock).unwrap()));
}
