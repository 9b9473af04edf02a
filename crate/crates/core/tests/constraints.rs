mod common;

use fairrank::constraints::{
    auto_sigma, build_bundle, build_c_gaussian, generate_noisy_uniform_instance, preset_group_bounds,
    prefix_group_violation, prefix_to_block_group, prefix_to_block_individual, GroupPreset,
    UncertainUtilityModel,
};
use fairrank::lp::solve_individual_lp;
use fairrank::model::{consecutive_blocks, dcg_discounts};
use fairrank::{Group, Instance, Matrix, RankingMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Standard normal CDF via the Abramowitz-Stegun rational erf approximation
/// (absolute error below 1.5e-7).
fn normal_cdf(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * z.abs());
    let poly = t * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-z * z).exp();
    0.5 * (1.0 + if z >= 0.0 { erf } else { -erf })
}

#[test]
fn noise_free_bounds_are_indicators() {
    let model = UncertainUtilityModel::homoscedastic(vec![0.3, 0.8, 0.1, 0.5, 0.9], 0.0).unwrap();
    let c = build_c_gaussian(&model, &[vec![0, 1], vec![2]], 1.0, 10, 3).unwrap();
    assert_eq!(
        c.to_rows(),
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]
    );
}

#[test]
fn two_item_race_matches_normal_cdf() {
    let model = UncertainUtilityModel::homoscedastic(vec![1.0, 0.5, -10.0], 0.25).unwrap();
    let c = build_c_gaussian(&model, &[vec![0], vec![1]], 1.0, 40_000, 5).unwrap();
    let win = normal_cdf(0.5 / (0.25 * 2f64.sqrt()));
    assert!((win - 0.9214).abs() < 1e-4);
    let want = [[win, 1.0 - win], [1.0 - win, win], [0.0, 0.0]];
    for i in 0..3 {
        for j in 0..2 {
            assert!((c[(i, j)] - want[i][j]).abs() < 0.01, "C[{i}][{j}] = {}", c[(i, j)]);
        }
    }
}

#[test]
fn gamma_scales_linearly() {
    let model = UncertainUtilityModel::homoscedastic(vec![0.2, 0.4, 0.6, 0.8], 0.3).unwrap();
    let blocks = vec![vec![0, 1], vec![2, 3]];
    let full = build_c_gaussian(&model, &blocks, 1.0, 3_000, 8).unwrap();
    let zero = build_c_gaussian(&model, &blocks, 0.0, 3_000, 8).unwrap();
    assert!(zero.as_slice().iter().all(|&x| x == 0.0));
    let part = build_c_gaussian(&model, &blocks, 0.4, 3_000, 8).unwrap();
    let mut scaled = full.clone();
    scaled.scale(0.4);
    assert!(part.max_abs_diff(&scaled) < 1e-12);
    for i in 0..4 {
        assert!((full.row_sum(i) - 1.0).abs() < 1e-12);
    }
    for j in 0..2 {
        assert!((full.col_sum(j) - 2.0).abs() < 1e-12);
    }
}

#[test]
fn result_is_independent_of_thread_count() {
    let model = UncertainUtilityModel::homoscedastic((0..12).map(|i| i as f64 / 12.0).collect(), 0.1).unwrap();
    let blocks = consecutive_blocks(8, 2);
    let many = build_c_gaussian(&model, &blocks, 1.0, 5_500, 21).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let one = pool.install(|| build_c_gaussian(&model, &blocks, 1.0, 5_500, 21).unwrap());
    assert_eq!(many, one);
}

#[test]
fn invalid_arguments_are_rejected() {
    let model = UncertainUtilityModel::homoscedastic(vec![0.1, 0.2], 0.1).unwrap();
    assert!(build_c_gaussian(&model, &[vec![0]], 1.5, 10, 0).is_err());
    assert!(build_c_gaussian(&model, &[vec![0]], 1.0, 0, 0).is_err());
    assert!(build_c_gaussian(&model, &[vec![0, 1, 2]], 1.0, 10, 0).is_err());
    assert!(UncertainUtilityModel::new(vec![0.1], vec![-1.0]).is_err());
    assert!(UncertainUtilityModel::new(vec![0.1], vec![]).is_err());
}

#[test]
fn auto_sigma_examples() {
    assert_eq!(auto_sigma(&[0.4; 5], 3), 0.0);
    assert_eq!(auto_sigma(&[0.0, 1.0, 2.0, 3.0], 2), 1.0);
    assert_eq!(auto_sigma(&[0.5], 1), 0.0);
}

/// Smallest candidate distance at which items have at least `k/2` neighbours
/// on average, found by scanning every candidate.
fn auto_sigma_oracle(mu: &[f64], k: usize) -> f64 {
    let m = mu.len();
    let mut cands: Vec<f64> = (0..m).flat_map(|a| (0..m).filter(move |&b| b != a).map(move |b| (a, b))).map(|(a, b)| (mu[a] - mu[b]).abs()).collect();
    cands.sort_by(f64::total_cmp);
    for &s in &cands {
        let total: usize = (0..m).map(|a| (0..m).filter(|&b| b != a && (mu[a] - mu[b]).abs() <= s).count()).sum();
        if total as f64 / m as f64 >= k as f64 / 2.0 {
            return s;
        }
    }
    cands.last().copied().unwrap_or(0.0)
}

#[test]
fn preset_examples() {
    let groups = vec![Group::new("a", vec![0, 1, 2, 3]), Group::new("b", vec![4, 5, 6, 7])];
    let blocks = consecutive_blocks(4, 2);
    let (l, u) = preset_group_bounds(GroupPreset::Equal, &blocks, &groups, 8).unwrap();
    assert_eq!((l, u), (vec![vec![1, 1]; 2], vec![vec![1, 1]; 2]));

    let (l, u) = preset_group_bounds(GroupPreset::PhiUpper { phi: 2.0 }, &blocks, &groups, 8).unwrap();
    assert_eq!((l, u), (vec![vec![0, 0]; 2], vec![vec![2, 2]; 2]));

    let big = consecutive_blocks(40, 20);
    let (_, u) = preset_group_bounds(GroupPreset::PhiUpper { phi: 1.0 }, &big, &groups, 8).unwrap();
    assert_eq!(u, vec![vec![10, 10]; 2]);
    let (_, u) = preset_group_bounds(GroupPreset::PhiUpper { phi: 1.5 }, &big, &groups, 8).unwrap();
    assert_eq!(u, vec![vec![15, 15]; 2]);

    let uneven = vec![Group::new("a", vec![0]), Group::new("b", vec![1, 2, 3])];
    let (l, u) = preset_group_bounds(GroupPreset::Proportional, &blocks, &uneven, 4).unwrap();
    assert_eq!((l[0].clone(), u[0].clone()), (vec![0, 1], vec![1, 2]));

    assert!(preset_group_bounds(GroupPreset::PhiUpper { phi: 0.5 }, &blocks, &groups, 8).is_err());
    assert!(preset_group_bounds(GroupPreset::PhiUpper { phi: 3.0 }, &blocks, &groups, 8).is_err());
}

#[test]
fn alternating_prefix_bounds_become_equal_blocks() {
    let groups = vec![Group::new("a", vec![0, 2]), Group::new("b", vec![1, 3])];
    let witness = RankingMatrix::new(4, vec![0, 1, 2, 3]).unwrap();
    let counts = vec![vec![1, 0], vec![1, 1], vec![2, 1], vec![2, 2]];
    assert_eq!(prefix_group_violation(&witness, &groups, &counts, &counts), 0);
    let (l, u) = prefix_to_block_group(&counts, &counts, &witness, &groups).unwrap();
    assert_eq!(l, vec![vec![1, 1]; 2]);
    assert_eq!(u, l);

    let bad = RankingMatrix::new(4, vec![0, 2, 1, 3]).unwrap();
    assert_eq!(prefix_group_violation(&bad, &groups, &counts, &counts), 1);
    assert!(prefix_to_block_group(&counts, &counts, &bad, &groups).is_err());
}

#[test]
fn vacuous_prefix_bounds_accept_any_witness() {
    let groups = vec![Group::new("a", vec![0, 1]), Group::new("b", vec![2])];
    let witness = RankingMatrix::new(3, vec![2, 0, 1]).unwrap();
    let lo = vec![vec![0, 0]; 3];
    let hi: Vec<Vec<i64>> = (1..=3).map(|j| vec![j, j]).collect();
    let (l, u) = prefix_to_block_group(&lo, &hi, &witness, &groups).unwrap();
    assert_eq!(l, vec![vec![1, 1], vec![1, 0]]);
    assert_eq!(u, l);
}

#[test]
fn individual_prefix_conversion() {
    let uniform = Matrix::filled(4, 4, 0.25);
    let c = prefix_to_block_individual(&Matrix::zeros(4, 4), &uniform).unwrap();
    assert_eq!(c, Matrix::filled(4, 2, 0.5));

    let id = RankingMatrix::identity(4).to_dense();
    let c_pre = Matrix::from_rows(vec![vec![1.0; 4], vec![0.0, 1.0, 1.0, 1.0], vec![0.0; 4], vec![0.0; 4]]).unwrap();
    let c = prefix_to_block_individual(&c_pre, &id).unwrap();
    assert_eq!(c.to_rows(), vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]);

    let swapped = RankingMatrix::new(4, vec![1, 0, 2, 3]).unwrap().to_dense();
    assert!(prefix_to_block_individual(&c_pre, &swapped).is_err());
}

#[test]
fn generated_uniform_instances() {
    let (inst, model) = generate_noisy_uniform_instance(20, 10, 5, 1.0, 0.0, 4, 200).unwrap();
    assert_eq!((inst.m(), inst.n(), inst.q(), inst.p()), (20, 10, 2, 0));
    assert!(inst.rho.iter().all(|&x| (0.0..1.0).contains(&x)));
    for i in 0..20 {
        let s = inst.c.row_sum(i);
        assert!(s == 0.0 || s == 1.0);
    }
    assert_eq!(model.sigma_max(), 0.0);
    let (again, _) = generate_noisy_uniform_instance(20, 10, 5, 1.0, 0.0, 4, 200).unwrap();
    assert_eq!(again, inst);
    assert!(generate_noisy_uniform_instance(10, 10, 5, 1.0, 0.1, 4, 200).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn auto_sigma_matches_scan(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(2..=15);
        let k = rng.gen_range(1..=m);
        let mu: Vec<f64> = (0..m).map(|_| (rng.gen_range(0..40) as f64) / 8.0).collect();
        prop_assert_eq!(auto_sigma(&mu, k), auto_sigma_oracle(&mu, k));
        let doubled: Vec<f64> = mu.iter().map(|x| 2.0 * x).collect();
        prop_assert_eq!(auto_sigma(&doubled, k), 2.0 * auto_sigma(&mu, k));
    }

    #[test]
    fn generated_bundles_are_feasible(seed in any::<u64>(), gamma in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(1..=10);
        let n = rng.gen_range(1..=m);
        let mu: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sigma: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..0.3)).collect();
        let model = UncertainUtilityModel::new(mu.clone(), sigma).unwrap();
        let inst = Instance::vacuous(mu, dcg_discounts(n), common::random_blocks(n, &mut rng), vec![]);
        let bundle = build_bundle(&inst, &model, None, gamma, 500, seed).unwrap();
        let with = bundle.apply(&inst).unwrap();
        prop_assert!(solve_individual_lp(&with).is_ok());
        for j in 0..inst.q() {
            prop_assert!(bundle.c.col_sum(j) <= inst.blocks[j].len() as f64 + 1e-9);
        }
    }
}
