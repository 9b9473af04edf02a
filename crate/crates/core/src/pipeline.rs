//! End-to-end main algorithm: solve, pad, project, decompose, refine, sample.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{build_network, decompose_matching};
use crate::lp::{solve_fair_lp, LpSolution};
use crate::model::{Instance, Matching, MatchingMarginal, Matrix, Policy, RankingMatrix};

/// Which procedure produced a policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Group-and-individual LP, matching decomposition, block refinement.
    Main,
    /// Individual LP followed by Birkhoff-von Neumann decomposition.
    BvnIndividual,
    /// Group-and-individual LP followed by Birkhoff-von Neumann decomposition.
    BvnGroupIndividual,
    /// Greedy group-constrained ranking.
    Greedy,
    /// Deterministic sort by utility.
    Unconstrained,
}

/// A distribution over rankings plus where it came from.
#[derive(Clone, Debug)]
pub struct RankingPolicy {
    pub policy: Policy<RankingMatrix>,
    pub provenance: Provenance,
    pub fingerprint: String,
    /// Optimum of the LP the policy was derived from, when there was one.
    pub lp_objective: Option<f64>,
}

impl RankingPolicy {
    pub fn marginal(&self) -> Matrix {
        self.policy.marginal()
    }

    /// Expected utility `rho' (sum_t alpha_t R_t) v`.
    pub fn expected_utility(&self, rho: &[f64], v: &[f64]) -> f64 {
        self.policy
            .terms()
            .iter()
            .map(|(w, r)| {
                w * r
                    .items()
                    .iter()
                    .enumerate()
                    .map(|(j, &i)| rho[i] * v[j])
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> &RankingMatrix {
        let weights: Vec<f64> = self.policy.terms().iter().map(|(w, _)| *w).collect();
        let dist = WeightedIndex::new(&weights).expect("policy weights are positive");
        &self.policy.terms()[dist.sample(rng)].1
    }

    pub fn to_json(&self) -> String {
        let first = &self.policy.terms()[0].1;
        let file = PolicyFile {
            provenance: self.provenance,
            fingerprint: self.fingerprint.clone(),
            lp_objective: self.lp_objective,
            m: first.m(),
            n: first.n(),
            terms: self
                .policy
                .terms()
                .iter()
                .map(|(w, r)| TermFile {
                    weight: *w,
                    entries: r
                        .items()
                        .iter()
                        .enumerate()
                        .map(|(j, &i)| [i + 1, j + 1])
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PolicyFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("policy: {e}")))?;
        let mut terms = Vec::with_capacity(file.terms.len());
        for t in file.terms {
            let mut item_at = vec![usize::MAX; file.n];
            for [i, j] in t.entries {
                if i == 0 || j == 0 || j > file.n {
                    return Err(Error::Parse(format!("policy entry ({i}, {j}) out of range")));
                }
                item_at[j - 1] = i - 1;
            }
            if item_at.contains(&usize::MAX) {
                return Err(Error::Parse("policy term leaves a position empty".into()));
            }
            terms.push((t.weight, RankingMatrix::new(file.m, item_at)?));
        }
        Ok(RankingPolicy {
            policy: Policy::new(terms)?,
            provenance: file.provenance,
            fingerprint: file.fingerprint,
            lp_objective: file.lp_objective,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct TermFile {
    weight: f64,
    /// `[item, position]` pairs, 1-based.
    entries: Vec<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    provenance: Provenance,
    fingerprint: String,
    lp_objective: Option<f64>,
    m: usize,
    n: usize,
    terms: Vec<TermFile>,
}

/// Extends the instance to `m` positions with one trailing block of dummy
/// positions carrying vacuous bounds. Dummy discounts halve from `v_n`.
pub fn pad_instance(inst: &Instance) -> Instance {
    let (m, n) = (inst.m(), inst.n());
    if m == n {
        return inst.clone();
    }
    let mut out = inst.clone();
    let last = inst.v[n - 1];
    out.v.extend((1..=m - n).map(|k| last / 2f64.powi(k as i32)));
    out.blocks.push((n..m).collect());
    out.lower.push(vec![0; inst.p()]);
    out.upper.push(vec![(m - n) as i64; inst.p()]);
    let q = inst.q();
    let mut c = Matrix::zeros(m, q + 1);
    let mut a = Matrix::filled(m, q + 1, 1.0);
    for i in 0..m {
        c.row_mut(i)[..q].copy_from_slice(inst.c.row(i));
        a.row_mut(i)[..q].copy_from_slice(inst.a.row(i));
    }
    out.c = c;
    out.a = a;
    out
}

/// Fills `m - n` dummy columns with each item's leftover mass using the
/// northwest-corner rule, giving an `m x m` doubly stochastic matrix.
pub fn pad_marginal(d: &Matrix) -> Matrix {
    let (m, n) = (d.rows(), d.cols());
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        out.row_mut(i)[..n].copy_from_slice(d.row(i));
    }
    let mut col = n;
    let mut col_room = 1.0;
    for i in 0..m {
        let mut left = (1.0 - d.row_sum(i)).max(0.0);
        while left > 1e-15 && col < m {
            let put = left.min(col_room);
            out[(i, col)] += put;
            left -= put;
            col_room -= put;
            if col_room <= 1e-15 {
                col += 1;
                col_room = 1.0;
            }
        }
    }
    out
}

/// `g(D)_ij = sum_{t in B_j} D_it`.
pub fn project_g(d: &Matrix, blocks: &[Vec<usize>]) -> Matrix {
    let mut out = Matrix::zeros(d.rows(), blocks.len());
    for i in 0..d.rows() {
        for (j, b) in blocks.iter().enumerate() {
            out[(i, j)] = b.iter().map(|&t| d[(i, t)]).sum();
        }
    }
    out
}

/// Places each block's matched items on its positions in nonincreasing
/// utility order, breaking ties by lower item index.
pub fn refine_f(mt: &Matching, rho: &[f64], blocks: &[Vec<usize>]) -> Result<RankingMatrix> {
    let n: usize = blocks.iter().map(Vec::len).sum();
    let mut item_at = vec![usize::MAX; n];
    for (j, b) in blocks.iter().enumerate() {
        let mut items = mt.members(j);
        if items.len() != b.len() {
            return Err(Error::Dimension(format!(
                "block {} holds {} items but has {} positions",
                j + 1,
                items.len(),
                b.len()
            )));
        }
        items.sort_by(|&x, &y| rho[y].total_cmp(&rho[x]).then(x.cmp(&y)));
        for (&t, &i) in b.iter().zip(&items) {
            item_at[t] = i;
        }
    }
    RankingMatrix::new(mt.m(), item_at)
}

/// Diagnostics from one run of the main algorithm.
#[derive(Clone, Debug)]
pub struct MainRun {
    pub policy: RankingPolicy,
    pub lp: LpSolution,
    pub padded: Instance,
    pub matching_marginal: Matrix,
    pub matchings: Policy<Matching>,
    pub tight_counts: Vec<usize>,
}

/// Runs the main algorithm and returns the policy over rankings.
pub fn run_main_algorithm(inst: &Instance) -> Result<RankingPolicy> {
    run_main_detailed(inst).map(|r| r.policy)
}

pub fn run_main_detailed(inst: &Instance) -> Result<MainRun> {
    inst.ensure_valid()?;
    let lp = solve_fair_lp(inst)?;
    let padded = pad_instance(inst);
    let dp = pad_marginal(&lp.d.0);
    let mhat = project_g(&dp, &padded.blocks);
    let net = build_network(&padded);
    let dec = decompose_matching(&net, &MatchingMarginal::new(mhat.clone(), padded.block_sizes())?)?;
    log::debug!(
        "main algorithm: {} matchings, tight counts {:?}",
        dec.policy.len(),
        dec.tight_counts
    );
    let n = inst.n();
    let mut terms = Vec::with_capacity(dec.policy.len());
    for (w, mt) in dec.policy.terms() {
        let full = refine_f(mt, &inst.rho, &padded.blocks)?;
        terms.push((*w, full.truncated(n)));
    }
    let policy = RankingPolicy {
        policy: Policy::new(terms)?,
        provenance: Provenance::Main,
        fingerprint: inst.fingerprint(),
        lp_objective: Some(lp.objective),
    };
    Ok(MainRun {
        policy,
        lp,
        padded,
        matching_marginal: mhat,
        matchings: dec.policy,
        tight_counts: dec.tight_counts,
    })
}

/// Draws one ranking; the same seed always yields the same ranking.
pub fn sample(policy: &RankingPolicy, seed: u64) -> RankingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    policy.sample_with(&mut rng).clone()
}

/// Draws `count` rankings from one seeded stream.
pub fn sample_many(policy: &RankingPolicy, seed: u64, count: usize) -> Vec<RankingMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| policy.sample_with(&mut rng).clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dcg_discounts, Group};

    #[test]
    fn padding_adds_one_vacuous_block() {
        let inst = Instance::vacuous(vec![1.0; 4], vec![1.0, 0.5], vec![vec![0, 1]], vec![]);
        let p = pad_instance(&inst);
        assert_eq!(p.n(), 4);
        assert_eq!(p.blocks, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(p.v, vec![1.0, 0.5, 0.25, 0.125]);
        assert!(p.ensure_valid().is_ok());
        assert_eq!(pad_instance(&p), p);
    }

    #[test]
    fn padded_marginal_is_doubly_stochastic() {
        let d = Matrix::from_rows(vec![vec![0.5, 0.2], vec![0.5, 0.1], vec![0.0, 0.7]]).unwrap();
        let p = pad_marginal(&d);
        for k in 0..3 {
            assert!((p.row_sum(k) - 1.0).abs() < 1e-12);
            assert!((p.col_sum(k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn g_of_identity() {
        let g = project_g(&Matrix::identity(4), &[vec![0, 1], vec![2, 3]]);
        assert_eq!(g.to_rows(), vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn f_sorts_within_blocks() {
        let mt = Matching::new(vec![Some(0), Some(0)], vec![2]).unwrap();
        let r = refine_f(&mt, &[0.2, 0.9], &[vec![0, 1]]).unwrap();
        assert_eq!(r.items(), &[1, 0]);
        let tie = refine_f(&mt, &[0.5, 0.5], &[vec![0, 1]]).unwrap();
        assert_eq!(tie.items(), &[0, 1]);
    }

    #[test]
    fn unconstrained_gives_sorted_ranking() {
        let inst = Instance::vacuous(
            vec![0.3, 0.9, 0.1, 0.5],
            dcg_discounts(3),
            vec![vec![0], vec![1], vec![2]],
            vec![Group::new("g", vec![0, 1])],
        );
        let pol = run_main_algorithm(&inst).unwrap();
        assert_eq!(pol.policy.len(), 1);
        assert_eq!(pol.policy.terms()[0].1.items(), &[1, 3, 0]);
    }

    #[test]
    fn policy_json_round_trip() {
        let r1 = RankingMatrix::new(3, vec![2, 0]).unwrap();
        let r2 = RankingMatrix::new(3, vec![1, 2]).unwrap();
        let pol = RankingPolicy {
            policy: Policy::new(vec![(0.25, r1), (0.75, r2)]).unwrap(),
            provenance: Provenance::Main,
            fingerprint: "abc".into(),
            lp_objective: Some(1.5),
        };
        let back = RankingPolicy::from_json(&pol.to_json()).unwrap();
        assert_eq!(back.policy, pol.policy);
        assert_eq!(back.provenance, Provenance::Main);
    }

    #[test]
    fn sampling_is_deterministic() {
        let r1 = RankingMatrix::new(2, vec![0, 1]).unwrap();
        let r2 = RankingMatrix::new(2, vec![1, 0]).unwrap();
        let pol = RankingPolicy {
            policy: Policy::new(vec![(0.5, r1), (0.5, r2)]).unwrap(),
            provenance: Provenance::Main,
            fingerprint: String::new(),
            lp_objective: None,
        };
        assert_eq!(sample(&pol, 7), sample(&pol, 7));
        assert_eq!(sample_many(&pol, 3, 20), sample_many(&pol, 3, 20));
    }
}
