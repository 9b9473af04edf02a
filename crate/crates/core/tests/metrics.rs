mod common;

use fairrank::metrics::{
    alpha_bound_blocks, alpha_bound_delta, alpha_bound_k, baseline_greedy_group_fair,
    baseline_sjk21_gf_if, baseline_sjk21_if, baseline_unconstrained, chebyshev_gap,
    compute_metrics, compute_metrics_sampled, max_utility, violates_group_bounds,
};
use fairrank::model::{consecutive_blocks, dcg_discounts, utility};
use fairrank::pipeline::Provenance;
use fairrank::{run_main_algorithm, Group, Instance, Matrix, Policy, RankingMatrix, RankingPolicy};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{fixture, permutations, random_blocks, random_laminar_groups};

fn policy(terms: Vec<(f64, RankingMatrix)>) -> RankingPolicy {
    RankingPolicy {
        policy: Policy::new(terms).unwrap(),
        provenance: Provenance::Unconstrained,
        fingerprint: String::new(),
        lp_objective: None,
    }
}

/// Every ranking of `n` out of `m` items.
fn all_rankings(m: usize, n: usize) -> Vec<RankingMatrix> {
    let mut seen = std::collections::BTreeSet::new();
    permutations(m)
        .into_iter()
        .filter(|p| seen.insert(p[..n].to_vec()))
        .map(|p| RankingMatrix::new(m, p[..n].to_vec()).unwrap())
        .collect()
}

fn random_group_instance(rng: &mut ChaCha8Rng) -> Instance {
    let m = rng.gen_range(1..=6);
    let n = rng.gen_range(1..=m);
    let rho: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
    let groups = random_laminar_groups(m, rng);
    let mut inst = Instance::vacuous(rho, dcg_discounts(n), random_blocks(n, rng), groups);
    for j in 0..inst.q() {
        let size = inst.blocks[j].len() as i64;
        for l in 0..inst.p() {
            let cap = size.min(inst.groups[l].len() as i64);
            let lo = rng.gen_range(0..=cap);
            inst.lower[j][l] = if rng.gen_bool(0.5) { 0 } else { lo };
            inst.upper[j][l] = rng.gen_range(inst.lower[j][l]..=size);
        }
    }
    inst
}

#[test]
fn unconstrained_examples() {
    let inst = Instance::vacuous(vec![0.2, 0.9, 0.5], vec![1.0, 0.5], vec![vec![0, 1]], vec![]);
    let pol = baseline_unconstrained(&inst);
    assert_eq!(pol.policy.terms()[0].1.items(), &[1, 2]);
    assert_eq!(max_utility(&inst), 0.9 + 0.25);
    let tie = Instance::vacuous(vec![0.5, 0.5], vec![1.0, 0.5], vec![vec![0, 1]], vec![]);
    assert_eq!(baseline_unconstrained(&tie).policy.terms()[0].1.items(), &[0, 1]);
}

#[test]
fn unconstrained_is_the_brute_force_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..40 {
        let m = rng.gen_range(1..=6);
        let n = rng.gen_range(1..=m);
        let rho: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let inst = Instance::vacuous(rho, dcg_discounts(n), vec![(0..n).collect()], vec![]);
        let best = all_rankings(m, n)
            .iter()
            .map(|r| utility(r, &inst.rho, &inst.v).unwrap())
            .fold(f64::MIN, f64::max);
        assert!((max_utility(&inst) - best).abs() < 1e-12);
        let ours = baseline_unconstrained(&inst);
        let ours = &ours.policy.terms()[0].1;
        assert!((utility(ours, &inst.rho, &inst.v).unwrap() - best).abs() < 1e-12);
    }
}

#[test]
fn greedy_matches_the_best_fair_ranking_on_the_fixture() {
    let inst = fixture("fractional_vertex.json");
    let pol = baseline_greedy_group_fair(&inst).unwrap();
    let r = &pol.policy.terms()[0].1;
    assert!(!violates_group_bounds(r, &inst));
    let best = all_rankings(4, 4)
        .iter()
        .filter(|r| !violates_group_bounds(r, &inst))
        .map(|r| utility(r, &inst.rho, &inst.v).unwrap())
        .fold(f64::MIN, f64::max);
    assert!((utility(r, &inst.rho, &inst.v).unwrap() - best).abs() < 1e-12);
}

#[test]
fn greedy_without_binding_bounds_is_unconstrained() {
    let inst = Instance::vacuous(
        vec![0.3, 0.1, 0.8, 0.6, 0.2],
        dcg_discounts(4),
        vec![vec![0, 1], vec![2, 3]],
        vec![Group::new("a", vec![0, 1]), Group::new("b", vec![2, 3, 4])],
    );
    let greedy = baseline_greedy_group_fair(&inst).unwrap();
    assert_eq!(greedy.policy.terms(), baseline_unconstrained(&inst).policy.terms());
}

#[test]
fn greedy_can_exhaust_items_a_later_block_needs() {
    let mut inst = Instance::vacuous(
        vec![0.75, 0.07, 0.98, 0.35],
        dcg_discounts(3),
        vec![vec![0, 1], vec![2]],
        vec![Group::new("d", vec![3]), Group::new("b", vec![1]), Group::new("a", vec![0]), Group::new("c", vec![2])],
    );
    inst.lower = vec![vec![0, 0, 0, 1], vec![0, 0, 0, 0]];
    inst.upper = vec![vec![1, 0, 2, 2], vec![0, 0, 1, 1]];
    let fair: Vec<_> = all_rankings(4, 3).into_iter().filter(|r| !violates_group_bounds(r, &inst)).collect();
    assert_eq!(fair.len(), 2);
    assert!(matches!(baseline_greedy_group_fair(&inst), Err(fairrank::Error::DeadEnd { position: 3 })));
}

#[test]
fn bvn_with_group_rows_keeps_an_unfair_ranking() {
    let inst = fixture("fractional_vertex.json");
    let pol = baseline_sjk21_gf_if(&inst).unwrap();
    assert!(pol.policy.terms().iter().any(|(_, r)| *r == RankingMatrix::identity(4)));
    let report = compute_metrics(&pol, &inst).unwrap();
    assert!((report.g_violation - 0.5).abs() < 1e-9);
    assert!(report.i_violation.abs() < 1e-9);
}

#[test]
fn bvn_baselines_without_bounds_are_optimal() {
    let inst = Instance::vacuous(vec![0.2, 0.9, 0.5, 0.4], dcg_discounts(3), vec![vec![0], vec![1, 2]], vec![]);
    for pol in [baseline_sjk21_if(&inst).unwrap(), baseline_sjk21_gf_if(&inst).unwrap()] {
        assert!((pol.expected_utility(&inst.rho, &inst.v) - max_utility(&inst)).abs() < 1e-9);
        let rec = pol.marginal();
        let total: f64 = pol.policy.terms().iter().map(|t| t.0).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(rec.rows(), 4);
    }
}

#[test]
fn metrics_examples() {
    let inst = fixture("fractional_vertex.json");
    let main = compute_metrics(&run_main_algorithm(&inst).unwrap(), &inst).unwrap();
    assert_eq!(main.g_violation, 0.0);
    assert!(main.i_violation.abs() < 1e-9);
    for r in [RankingMatrix::identity(4), RankingMatrix::new(4, vec![3, 2, 0, 1]).unwrap()] {
        let g = compute_metrics(&policy(vec![(1.0, r)]), &inst).unwrap().g_violation;
        assert!(g == 0.0 || g == 1.0);
    }

    let mut two = Instance::vacuous(vec![1.0, 0.5], vec![1.0, 0.5], vec![vec![0], vec![1]], vec![]);
    two.c[(0, 0)] = 0.5;
    let id = RankingMatrix::identity(2);
    let swap = RankingMatrix::new(2, vec![1, 0]).unwrap();
    let mixed = compute_metrics(&policy(vec![(0.5, id.clone()), (0.5, swap.clone())]), &two).unwrap();
    assert_eq!(mixed.i_violation, 0.0);
    assert!((mixed.utility_normalized - 1.125 / 1.25).abs() < 1e-12);
    two.c[(0, 0)] = 1.0;
    let only_swap = compute_metrics(&policy(vec![(1.0, swap)]), &two).unwrap();
    assert!((only_swap.i_violation - 0.25).abs() < 1e-12);
    assert_eq!(only_swap.block_probability, Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
}

#[test]
fn sampled_metrics_approach_exact() {
    let inst = fixture("fractional_vertex.json");
    let pol = baseline_sjk21_gf_if(&inst).unwrap();
    let exact = compute_metrics(&pol, &inst).unwrap();
    let est = compute_metrics_sampled(&pol, &inst, 20_000, 4).unwrap();
    assert!((est.g_violation - exact.g_violation).abs() < 0.02);
    assert!((est.utility_normalized - exact.utility_normalized).abs() < 0.02);
    assert!(compute_metrics_sampled(&pol, &inst, 0, 4).is_err());
}

#[test]
fn alpha_examples() {
    let v = dcg_discounts(10);
    assert_eq!(alpha_bound_delta(&v, 4, 0.0), 1.0);
    assert!((alpha_bound_k(&v, 2) - (1.0 + 1.0 / 3f64.log2()) / 2.0).abs() < 1e-12);
    assert_eq!(alpha_bound_k(&v, 1), 1.0);
    assert_eq!(alpha_bound_blocks(&v, &consecutive_blocks(10, 1)), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Greedy output is always fair. With a single block it also finds a
    /// fair ranking whenever one exists.
    #[test]
    fn greedy_is_fair_and_complete_within_one_block(seed in any::<u64>(), one_block in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inst = random_group_instance(&mut rng);
        if one_block {
            let n = inst.n();
            let (l, u) = (inst.lower[0].clone(), inst.upper[0].clone());
            inst.blocks = vec![(0..n).collect()];
            inst.declared_blocks = 1;
            inst.lower = vec![l];
            inst.upper = vec![u.iter().map(|&x| x.max(0)).collect()];
            inst.c = Matrix::zeros(inst.m(), 1);
            inst.a = Matrix::filled(inst.m(), 1, 1.0);
        }
        prop_assume!(inst.ensure_valid().is_ok());
        let exists = all_rankings(inst.m(), inst.n()).iter().any(|r| !violates_group_bounds(r, &inst));
        match baseline_greedy_group_fair(&inst) {
            Ok(pol) => prop_assert!(!violates_group_bounds(&pol.policy.terms()[0].1, &inst)),
            Err(_) => prop_assert!(!exists || !one_block),
        }
    }

    #[test]
    fn delta_bound_dominates_block_bound(k in 1usize..30, delta in 0.0f64..100.0) {
        let v = dcg_discounts(30);
        prop_assert!(alpha_bound_delta(&v, k, delta) >= alpha_bound_k(&v, k) - 1e-12);
    }

    #[test]
    fn equal_blocks_bound_is_the_first_block(n in 1usize..60, k in 1usize..12) {
        prop_assume!(k <= n);
        let v = dcg_discounts(n);
        let blocks = consecutive_blocks(n, k);
        prop_assert!((alpha_bound_blocks(&v, &blocks) - alpha_bound_k(&v, k)).abs() < 1e-12);
    }

    #[test]
    fn metrics_ignore_item_labels(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(2..=8);
        let n = rng.gen_range(1..=m);
        let inst = common::random_feasible_instance(m, n, &mut rng);
        let pol = baseline_sjk21_gf_if(&inst).unwrap();
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let mut moved = inst.clone();
        for i in 0..m {
            moved.rho[perm[i]] = inst.rho[i];
            moved.c.row_mut(perm[i]).copy_from_slice(inst.c.row(i));
            moved.a.row_mut(perm[i]).copy_from_slice(inst.a.row(i));
        }
        moved.groups = inst.groups.iter().map(|g| Group::new(g.id.clone(), g.members.iter().map(|&i| perm[i]).collect())).collect();
        let moved_pol = policy(pol.policy.terms().iter().map(|(w, r)| (*w, RankingMatrix::new(m, r.items().iter().map(|&i| perm[i]).collect()).unwrap())).collect());
        let a = compute_metrics(&pol, &inst).unwrap();
        let b = compute_metrics(&moved_pol, &moved).unwrap();
        prop_assert!((a.g_violation - b.g_violation).abs() < 1e-12);
        prop_assert!((a.i_violation - b.i_violation).abs() < 1e-12);
        prop_assert!((a.utility_normalized - b.utility_normalized).abs() < 1e-12);
    }

    #[test]
    fn similarly_sorted_vectors_have_nonnegative_gap(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = rng.gen_range(1..20);
        let mut x: Vec<f64> = (0..z).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mut y: Vec<f64> = (0..z).map(|_| rng.gen_range(-5.0..5.0)).collect();
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        prop_assert!(chebyshev_gap(&x, &y) >= -1e-9);
        y.reverse();
        prop_assert!(chebyshev_gap(&x, &y) <= 1e-9);
    }
}

