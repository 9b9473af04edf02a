//! Baseline rankers, fairness and utility metrics, and closed-form
//! approximation bounds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{birkhoff_decompose, build_network, LaminarNetwork};
use crate::lp::{solve_individual_lp, solve_fair_lp, LpSolution};
use crate::model::{utility, Instance, Matrix, Policy, RankingMatrix};
use crate::pipeline::{pad_marginal, Provenance, RankingPolicy};

/// Items sorted by nonincreasing utility, ties by lower index.
pub fn utility_order(rho: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.sort_by(|&a, &b| rho[b].total_cmp(&rho[a]).then(a.cmp(&b)));
    order
}

/// Top `n` items by utility in sorted order.
pub fn baseline_unconstrained(inst: &Instance) -> RankingPolicy {
    let order = utility_order(&inst.rho);
    let r = RankingMatrix::new(inst.m(), order[..inst.n()].to_vec()).expect("distinct items");
    RankingPolicy {
        policy: Policy::single(r),
        provenance: Provenance::Unconstrained,
        fingerprint: inst.fingerprint(),
        lp_objective: None,
    }
}

/// Utility of the unconstrained optimum, used to normalize utilities.
pub fn max_utility(inst: &Instance) -> f64 {
    let order = utility_order(&inst.rho);
    inst.v
        .iter()
        .zip(&order)
        .map(|(v, &i)| v * inst.rho[i])
        .sum()
}

/// Per-block group counts of a ranking (`q x p`).
pub fn group_counts(r: &RankingMatrix, inst: &Instance) -> Vec<Vec<i64>> {
    let mut counts = vec![vec![0i64; inst.p()]; inst.q()];
    for (j, block) in inst.blocks.iter().enumerate() {
        for &t in block {
            let i = r.item_at(t);
            for (l, g) in inst.groups.iter().enumerate() {
                if g.contains(i) {
                    counts[j][l] += 1;
                }
            }
        }
    }
    counts
}

/// Whether `r` breaks any `(L, U)` bound.
pub fn violates_group_bounds(r: &RankingMatrix, inst: &Instance) -> bool {
    let counts = group_counts(r, inst);
    (0..inst.q()).any(|j| {
        (0..inst.p()).any(|l| counts[j][l] < inst.lower[j][l] || counts[j][l] > inst.upper[j][l])
    })
}

/// Whether `slots` more items can be added to a block whose current group
/// counts are `counts`, drawing from items not yet placed, while meeting every
/// group's lower and upper bound.
fn completable(
    net: &LaminarNetwork,
    block: usize,
    counts: &[i64],
    available: &[bool],
    slots: i64,
) -> bool {
    let p = net.p();
    // Bottom-up over the laminar tree: smallest groups first.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by_key(|&l| (net.members[l].len(), l));
    let mut min_need = vec![0i64; p];
    let mut max_take = vec![0i64; p];
    let mut child_min = vec![0i64; p];
    let mut child_max = vec![0i64; p];
    let mut direct = vec![0i64; p];
    let mut loose = 0i64;
    for (i, &avail) in available.iter().enumerate() {
        if avail {
            match net.leaf[i] {
                Some(l) => direct[l] += 1,
                None => loose += 1,
            }
        }
    }
    let (mut top_min, mut top_max) = (0i64, loose);
    for &l in &order {
        let lo = (net.lower[block][l] - counts[l]).max(0);
        let hi = net.upper[block][l] - counts[l];
        min_need[l] = lo.max(child_min[l]);
        max_take[l] = hi.min(child_max[l] + direct[l]);
        if min_need[l] > max_take[l] {
            return false;
        }
        match net.parent[l] {
            Some(pl) => {
                child_min[pl] += min_need[l];
                child_max[pl] += max_take[l];
            }
            None => {
                top_min += min_need[l];
                top_max += max_take[l];
            }
        }
    }
    top_min <= slots && slots <= top_max
}

/// Fills positions in order with the best remaining item that keeps the
/// current block's group bounds satisfiable.
pub fn baseline_greedy_group_fair(inst: &Instance) -> Result<RankingPolicy> {
    inst.ensure_valid()?;
    let net = build_network(inst);
    let order = utility_order(&inst.rho);
    let block_of = inst.block_of_position();
    let groups_of: Vec<Vec<usize>> = (0..inst.m()).map(|i| inst.groups_of(i)).collect();
    let mut available = vec![true; inst.m()];
    let mut item_at = Vec::with_capacity(inst.n());
    let mut counts = vec![vec![0i64; inst.p()]; inst.q()];
    let mut filled = vec![0i64; inst.q()];
    for t in 0..inst.n() {
        let j = block_of[t].expect("validated blocks cover positions");
        let size = inst.blocks[j].len() as i64;
        let mut chosen = None;
        for &i in &order {
            if !available[i] {
                continue;
            }
            if groups_of[i].iter().any(|&l| counts[j][l] + 1 > inst.upper[j][l]) {
                continue;
            }
            for &l in &groups_of[i] {
                counts[j][l] += 1;
            }
            available[i] = false;
            let ok = completable(&net, j, &counts[j], &available, size - filled[j] - 1);
            if ok {
                chosen = Some(i);
                break;
            }
            available[i] = true;
            for &l in &groups_of[i] {
                counts[j][l] -= 1;
            }
        }
        let Some(i) = chosen else {
            return Err(Error::DeadEnd { position: t + 1 });
        };
        filled[j] += 1;
        item_at.push(i);
    }
    Ok(RankingPolicy {
        policy: Policy::single(RankingMatrix::new(inst.m(), item_at)?),
        provenance: Provenance::Greedy,
        fingerprint: inst.fingerprint(),
        lp_objective: None,
    })
}

/// Decomposes an LP marginal into permutations truncated to `n` positions.
pub fn bvn_from_lp(inst: &Instance, lp: &LpSolution, provenance: Provenance) -> Result<RankingPolicy> {
    let padded = pad_marginal(&lp.d.0);
    let perms = birkhoff_decompose(&padded)?;
    let n = inst.n();
    let policy = perms.map(|r| r.truncated(n));
    let err = policy.marginal().max_abs_diff(&lp.d.0);
    if err > 1e-6 {
        return Err(Error::Decomposition(format!(
            "permutation decomposition misses the marginal by {err:e}"
        )));
    }
    Ok(RankingPolicy {
        policy,
        provenance,
        fingerprint: inst.fingerprint(),
        lp_objective: Some(lp.objective),
    })
}

/// Individual-fairness LP decomposed into permutations.
pub fn baseline_sjk21_if(inst: &Instance) -> Result<RankingPolicy> {
    let lp = solve_individual_lp(inst)?;
    bvn_from_lp(inst, &lp, Provenance::BvnIndividual)
}

/// Group-and-individual LP decomposed into permutations; group bounds hold
/// only in expectation.
pub fn baseline_sjk21_gf_if(inst: &Instance) -> Result<RankingPolicy> {
    let lp = solve_fair_lp(inst)?;
    bvn_from_lp(inst, &lp, Provenance::BvnGroupIndividual)
}

/// Fairness and utility summary of a policy on an instance.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    /// Probability that a sampled ranking breaks some group bound.
    pub g_violation: f64,
    /// Mean relative shortfall of block probabilities below `C`.
    pub i_violation: f64,
    /// Expected utility divided by `u_max`.
    pub utility_normalized: f64,
    pub expected_utility: f64,
    /// Unconstrained optimum used as the normalizer.
    pub u_max: f64,
    pub terms: usize,
    /// Probability that each item lands in each block (`m x q`).
    pub block_probability: Matrix,
    /// Probability that each (block, group) bound is broken (`q x p`).
    pub group_violation_by_block: Vec<Vec<f64>>,
}

fn i_violation(p: &Matrix, c: &Matrix) -> f64 {
    let (m, q) = (c.rows(), c.cols());
    if m == 0 || q == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..m {
        let mut row = 0.0;
        for j in 0..q {
            let cij = c[(i, j)];
            if cij > 0.0 {
                row += (1.0 - p[(i, j)] / cij).max(0.0);
            }
        }
        total += row / q as f64;
    }
    total / m as f64
}

fn report_from_weighted<'a>(
    inst: &Instance,
    weighted: impl Iterator<Item = (f64, &'a RankingMatrix)>,
    terms: usize,
) -> Result<MetricsReport> {
    let (m, q, p) = (inst.m(), inst.q(), inst.p());
    let mut block_probability = Matrix::zeros(m, q);
    let mut by_block = vec![vec![0.0; p]; q];
    let mut g = 0.0;
    let mut eu = 0.0;
    let block_of = inst.block_of_position();
    for (w, r) in weighted {
        if r.m() != m || r.n() != inst.n() {
            return Err(Error::Dimension(format!(
                "ranking is {}x{}, instance is {m}x{}",
                r.m(),
                r.n(),
                inst.n()
            )));
        }
        for (t, &i) in r.items().iter().enumerate() {
            if let Some(j) = block_of[t] {
                block_probability[(i, j)] += w;
            }
        }
        let counts = group_counts(r, inst);
        let mut bad = false;
        for j in 0..q {
            for l in 0..p {
                if counts[j][l] < inst.lower[j][l] || counts[j][l] > inst.upper[j][l] {
                    by_block[j][l] += w;
                    bad = true;
                }
            }
        }
        if bad {
            g += w;
        }
        eu += w * utility(r, &inst.rho, &inst.v)?;
    }
    let u_max = max_utility(inst);
    Ok(MetricsReport {
        g_violation: g.clamp(0.0, 1.0),
        i_violation: i_violation(&block_probability, &inst.c).clamp(0.0, 1.0),
        utility_normalized: if u_max > 0.0 { (eu / u_max).clamp(0.0, 1.0) } else { 1.0 },
        expected_utility: eu,
        u_max,
        terms,
        block_probability,
        group_violation_by_block: by_block,
    })
}

/// Exact metrics over the policy support.
pub fn compute_metrics(policy: &RankingPolicy, inst: &Instance) -> Result<MetricsReport> {
    let terms = policy.policy.len();
    report_from_weighted(
        inst,
        policy.policy.terms().iter().map(|(w, r)| (*w, r)),
        terms,
    )
}

/// Metrics estimated from `samples` seeded draws, for cross-checking.
pub fn compute_metrics_sampled(
    policy: &RankingPolicy,
    inst: &Instance,
    samples: usize,
    seed: u64,
) -> Result<MetricsReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<&RankingMatrix> = (0..samples).map(|_| policy.sample_with(&mut rng)).collect();
    let w = 1.0 / samples as f64;
    report_from_weighted(inst, draws.into_iter().map(|r| (w, r)), policy.policy.len())
}

/// `min_j sum_{s in B_j} v_s / (|B_j| v_{s(j)})` with `s(j)` the first
/// position of block `j`. Blocks whose first discount is zero are skipped.
pub fn alpha_bound_blocks(v: &[f64], blocks: &[Vec<usize>]) -> f64 {
    blocks
        .iter()
        .filter_map(|b| {
            let first = *b.iter().min()?;
            let v0 = v[first];
            (v0 > 0.0).then(|| b.iter().map(|&s| v[s]).sum::<f64>() / (b.len() as f64 * v0))
        })
        .fold(1.0, f64::min)
}

/// `(v_1 + ... + v_k) / (k v_1)`.
pub fn alpha_bound_k(v: &[f64], k: usize) -> f64 {
    assert!(k >= 1 && k <= v.len(), "k must be in 1..=n");
    v[..k].iter().sum::<f64>() / (k as f64 * v[0])
}

/// `(1 + delta) / (1 + k v_1 delta / (v_1 + ... + v_k))` where `1 + delta`
/// bounds the ratio of largest to smallest utility.
pub fn alpha_bound_delta(v: &[f64], k: usize, delta: f64) -> f64 {
    assert!(delta >= 0.0, "delta must be nonnegative");
    let s: f64 = v[..k].iter().sum();
    (1.0 + delta) / (1.0 + k as f64 * v[0] * delta / s)
}

/// `z * sum x_i y_i - (sum x_i)(sum y_i)` for equal-length vectors; nonnegative
/// when `x` and `y` are sorted the same way.
pub fn chebyshev_gap(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let z = x.len() as f64;
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    z * dot - x.iter().sum::<f64>() * y.iter().sum::<f64>()
}
