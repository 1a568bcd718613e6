use privbid_core::linalg::Matrix;
use privbid_core::masking::{assemble_masked_model, generate_keys, mask, KeyPolicy, MaskedPartyData, MaskingKeys};
use privbid_core::mmatrix::{min_inverse_entry, sample_m_matrix, MMatrixMode};
use privbid_core::models::{check_primal, solve_collective};
use privbid_core::netmodel::{generate_instance, Blocks, GeneratorConfig, PartyBlocks};
use privbid_core::protocol::{derive_keys, make_actors, run_on_network, run_protocol, MemoryNetwork};
use privbid_core::lp::SimplexSolver;
use privbid_core::{seed, wire};
use proptest::prelude::*;
use rand::Rng;

fn small_blocks(seed: u64, parties: usize, paths: usize) -> Blocks {
    generate_instance(&GeneratorConfig {
        seed,
        n_paths: paths.max(parties),
        n_parties: parties,
        hub_count: 2,
        max_breakpoints: 3,
        share_prob: 0.4,
        capacity_range: (2, 15),
        ..GeneratorConfig::default()
    })
    .unwrap()
    .assemble_blocks()
    .unwrap()
}

fn get(m: &Matrix, i: usize, j: usize) -> f64 {
    m[(i, j)]
}

/// `X Y` with explicit loops.
fn product(x: &Matrix, y: &Matrix, y_transposed: bool) -> Vec<Vec<f64>> {
    let inner = x.cols();
    let cols = if y_transposed { y.rows() } else { y.cols() };
    (0..x.rows())
        .map(|i| {
            (0..cols)
                .map(|j| {
                    (0..inner)
                        .map(|l| get(x, i, l) * if y_transposed { get(y, j, l) } else { get(y, l, j) })
                        .sum()
                })
                .collect()
        })
        .collect()
}

fn apply(x: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..x.rows()).map(|i| (0..x.cols()).map(|j| get(x, i, j) * v[j]).sum()).collect()
}

fn close_mat(got: &Matrix, want: &[Vec<f64>]) -> bool {
    got.rows() == want.len() && (0..got.rows()).all(|i| (0..got.cols()).all(|j| close(got[(i, j)], want[i][j])))
}

fn close_vec(got: &[f64], want: &[f64]) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(a, b)| close(*a, *b))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

/// Every published block recomputed from its definition.
fn straight_line_matches(p: &PartyBlocks, k: &MaskingKeys, out: &MaskedPartyData) -> bool {
    let n = p.n();
    let bt_xi: Vec<f64> = (0..n).map(|j| (0..p.m_private()).map(|i| p.b[(i, j)] * k.xi[i]).sum()).collect();
    let r_plus: Vec<f64> = (0..n).map(|j| p.r[j] + bt_xi[j]).collect();
    let b_eta = apply(&p.b, &k.eta);
    let c_plus: Vec<f64> = (0..p.m_private()).map(|i| p.c[i] + b_eta[i]).collect();
    let one_eta: Vec<f64> = k.eta.iter().map(|e| 1.0 + e).collect();
    let fb = Matrix::from_rows(&product(&k.f, &p.b, false)).unwrap_or_else(|_| Matrix::zeros(0, n));
    close_vec(&out.r_bar, &apply(&k.d, &r_plus))
        && close_vec(&out.xi_bar, &apply(&k.e, &k.xi))
        && close_mat(&out.a_bar, &product(&p.a, &k.d, true))
        && close_mat(&out.b_bar, &product(&fb, &k.d, true))
        && close_mat(&out.f_bar, &product(&k.f, &k.e, true))
        && close_vec(&out.c_bar, &apply(&k.f, &c_plus))
        && close_mat(&out.g_bar, &product(&k.g, &k.d, true))
        && close_vec(&out.one_bar, &apply(&k.g, &one_eta))
        && close_mat(&out.h_bar, &product(&k.h, &k.d, true))
        && close_vec(&out.eta_bar, &apply(&k.h, &k.eta))
        && close_mat(&out.l_bar, &product(&k.l, &k.e, true))
        && close_vec(&out.a_eta, &apply(&p.a, &k.eta))
}

/// Solves `M y = b` by Gaussian elimination with partial pivoting.
fn solve_dense(m: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).chain([b[i]]).collect()).collect();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..=n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * y[j]).sum();
        y[i] = (a[i][n] - s) / a[i][i];
    }
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mask_matches_the_straight_line_oracle(s in 0u64..10_000, parties in 2usize..4, extra in 0usize..3) {
        let blocks = small_blocks(s, parties, 3 * parties + 2);
        let policy = KeyPolicy { extra_u: extra, extra_w: extra, ..KeyPolicy::default() };
        for p in &blocks.parties {
            let keys = generate_keys(p, &mut seed::rng(s, "oracle"), &policy).unwrap();
            let out = mask(p, &keys).unwrap();
            prop_assert!(straight_line_matches(p, &keys, &out));
        }
    }

    #[test]
    fn diagonal_recovery_matches_the_collective_optimum(s in 0u64..10_000, parties in 2usize..5) {
        let blocks = small_blocks(s, parties, 3 * parties + 1);
        let direct = solve_collective(&blocks).unwrap();
        let run = run_protocol(&blocks, &KeyPolicy::default(), s, &SimplexSolver::default()).unwrap();
        let x: Vec<Vec<f64>> = run.outputs.iter().map(|o| o.x.clone()).collect();
        let check = check_primal(&blocks, &x).unwrap();
        prop_assert!((run.outputs[0].z - direct.z).abs() <= 1e-6 * (1.0 + direct.z.abs()));
        prop_assert!(check.residual <= 1e-6);
    }

    /// GENERAL multipliers only shrink the feasible set: whatever is
    /// recovered is feasible and no better than the collective optimum.
    #[test]
    fn general_recovery_is_feasible_and_bounded(s in 0u64..10_000, parties in 2usize..4) {
        let blocks = small_blocks(s, parties, 3 * parties + 1);
        let policy = KeyPolicy { mode: MMatrixMode::General, ..KeyPolicy::default() };
        let direct = solve_collective(&blocks).unwrap();
        let actors = make_actors(&blocks, derive_keys(&blocks, &policy, s).unwrap()).unwrap();
        let network = MemoryNetwork::new(parties);
        if let Ok(run) = run_on_network(actors, &network, &SimplexSolver::default()) {
            let x: Vec<Vec<f64>> = run.outputs.iter().map(|o| o.x.clone()).collect();
            let check = check_primal(&blocks, &x).unwrap();
            prop_assert!(check.residual <= 1e-6);
            prop_assert!(check.objective <= direct.z + 1e-6 * (1.0 + direct.z.abs()));
            prop_assert!((run.outputs[0].z - check.objective).abs() <= 1e-6 * (1.0 + direct.z.abs()));
        }
    }

    #[test]
    fn certified_general_runs_are_optimal_or_refused(s in 0u64..10_000) {
        let blocks = small_blocks(s, 2, 7);
        let policy = KeyPolicy { mode: MMatrixMode::General, ..KeyPolicy::default() };
        let direct = solve_collective(&blocks).unwrap();
        match run_protocol(&blocks, &policy, s, &SimplexSolver::default()) {
            Ok(run) => prop_assert!((run.outputs[0].z - direct.z).abs() <= 1e-6 * (1.0 + direct.z.abs())),
            Err(e) => prop_assert!(e.to_string().contains("no certified run"), "{}", e),
        }
    }

    #[test]
    fn payload_bytes_round_trip(s in 0u64..10_000, extra_u in 0usize..3, extra_w in 0usize..3) {
        let blocks = small_blocks(s, 2, 6);
        let p = &blocks.parties[(s % 2) as usize];
        let policy = KeyPolicy { extra_u, extra_w, permute: true, ..KeyPolicy::default() };
        let keys = generate_keys(p, &mut seed::rng(s, "wire"), &policy).unwrap();
        let payload = mask(p, &keys).unwrap();
        let bytes = wire::encode_payload(&payload);
        prop_assert_eq!(wire::decode_payload(&bytes).unwrap(), payload);
        let json = serde_json::to_string(&keys).unwrap();
        prop_assert_eq!(serde_json::from_str::<MaskingKeys>(&json).unwrap(), keys);
    }

    #[test]
    fn general_m_matrices_have_nonnegative_inverses(s in 0u64..10_000, dim in 1usize..25) {
        let m = sample_m_matrix(dim, &mut seed::rng(s, "mm"), MMatrixMode::General);
        prop_assert!(min_inverse_entry(&m).unwrap() >= -1e-9);
        for i in 0..dim {
            for j in 0..dim {
                let sign_ok = if i == j { m[(i, j)] > 0.0 } else { m[(i, j)] <= 0.0 };
                prop_assert!(sign_ok);
            }
        }
    }
}

/// With diagonal multipliers the change of variables maps the original
/// feasible set onto the masked one and infeasible points onto infeasible ones.
#[test]
fn diagonal_keys_preserve_feasibility_pointwise() {
    let blocks = small_blocks(42, 2, 8);
    let keys = derive_keys(&blocks, &KeyPolicy::default(), 42).unwrap();
    let payloads: Vec<_> = blocks.parties.iter().zip(&keys).map(|(p, k)| mask(p, k).unwrap()).collect();
    let model = assemble_masked_model(&payloads, &blocks.c).unwrap();
    let mut rng = seed::rng(42, "points");
    let (mut feasible, mut infeasible) = (0, 0);
    while feasible + infeasible < 100 {
        // Scale toward the origin so roughly half the points are feasible.
        let scale = rng.random_range(0.0..1.2);
        let x: Vec<Vec<f64>> = blocks
            .parties
            .iter()
            .map(|p| (0..p.n()).map(|_| scale * rng.random_range(-0.05..1.0)).collect())
            .collect();
        let original = check_primal(&blocks, &x).unwrap().residual;
        if original > 0.0 && original < 1e-6 {
            continue;
        }
        let mut point = vec![0.0; model.lp.num_vars()];
        for (k, (p, key)) in blocks.parties.iter().zip(&keys).enumerate() {
            let shifted: Vec<f64> = x[k].iter().zip(&key.eta).map(|(a, e)| a + e).collect();
            let u = solve_dense(&key.d.transpose(), &shifted);
            let bx = apply(&p.b, &x[k]);
            let slack: Vec<f64> = p.c.iter().zip(&bx).map(|(c, b)| c - b).collect();
            let w = solve_dense(&key.e.transpose(), &slack);
            point[model.u_offsets[k]..model.u_offsets[k] + u.len()].copy_from_slice(&u);
            point[model.w_offsets[k]..model.w_offsets[k] + w.len()].copy_from_slice(&w);
        }
        let masked = model.lp.primal_residual(&point);
        if original > 0.0 {
            infeasible += 1;
            assert!(masked > 1e-9, "infeasible point became feasible: {original} vs {masked}");
        } else {
            feasible += 1;
            assert!(masked <= 1e-7, "feasible point became infeasible: {masked}");
        }
    }
    assert!(feasible >= 10 && infeasible >= 10, "{feasible} feasible, {infeasible} infeasible");
}
