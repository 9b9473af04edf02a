#![allow(dead_code)]

use std::path::PathBuf;

use fairrank::model::{consecutive_blocks, dcg_discounts, load_instance};
use fairrank::{Group, Instance, Matrix, RankingMatrix};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(name: &str) -> Instance {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    load_instance(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Random laminar family of depth at most three over `m` items.
pub fn random_laminar_groups<R: Rng>(m: usize, rng: &mut R) -> Vec<Group> {
    let mut items: Vec<usize> = (0..m).collect();
    items.shuffle(rng);
    let tops = rng.gen_range(1..=3.min(m));
    let mut cuts: Vec<usize> = (1..m).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(tops).collect();
    cuts.push(m);
    cuts.sort_unstable();
    let mut groups = Vec::new();
    let mut start = 0;
    for (t, &end) in cuts.iter().enumerate() {
        let members: Vec<usize> = items[start..end].to_vec();
        start = end;
        if members.is_empty() || (t == cuts.len() - 1 && rng.gen_bool(0.3)) {
            continue;
        }
        let mut parent = members.clone();
        groups.push(Group::new(format!("g{}", groups.len()), members));
        for _depth in 0..2 {
            if parent.len() < 2 || !rng.gen_bool(0.6) {
                break;
            }
            parent.shuffle(rng);
            let size = rng.gen_range(1..parent.len());
            parent.truncate(size);
            groups.push(Group::new(format!("g{}", groups.len()), parent.clone()));
        }
    }
    groups
}

/// Random blocks of one to four consecutive positions covering `n`.
pub fn random_blocks<R: Rng>(n: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut blocks = Vec::new();
    let mut t = 0;
    while t < n {
        let size = rng.gen_range(1..=4).min(n - t);
        blocks.push((t..t + size).collect());
        t += size;
    }
    blocks
}

/// A feasible instance: group and individual bounds are derived from a
/// hidden mixture of a few random rankings, so that mixture satisfies them.
pub fn random_feasible_instance<R: Rng>(m: usize, n: usize, rng: &mut R) -> Instance {
    let rho: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
    let blocks = if rng.gen_bool(0.3) {
        consecutive_blocks(n, rng.gen_range(1..=3))
    } else {
        random_blocks(n, rng)
    };
    let groups = random_laminar_groups(m, rng);
    let mut inst = Instance::vacuous(rho, dcg_discounts(n), blocks, groups);
    let (q, p) = (inst.q(), inst.p());

    let k = rng.gen_range(1..=4);
    let mut weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut lower = vec![vec![i64::MAX; p]; q];
    let mut upper = vec![vec![i64::MIN; p]; q];
    let mut block_prob = Matrix::zeros(m, q);
    for &w in &weights {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(rng);
        let r = RankingMatrix::new(m, perm[..n].to_vec()).unwrap();
        for (j, b) in inst.blocks.iter().enumerate() {
            for &t in b {
                block_prob[(r.item_at(t), j)] += w;
            }
            for (l, g) in inst.groups.iter().enumerate() {
                let c = b.iter().filter(|&&t| g.contains(r.item_at(t))).count() as i64;
                lower[j][l] = lower[j][l].min(c);
                upper[j][l] = upper[j][l].max(c);
            }
        }
    }
    for j in 0..q {
        for l in 0..p {
            lower[j][l] = (lower[j][l] - rng.gen_range(0..=1)).max(0);
            upper[j][l] += rng.gen_range(0..=1);
        }
    }
    inst.lower = lower;
    inst.upper = upper;
    for i in 0..m {
        for j in 0..q {
            let pr = block_prob[(i, j)];
            inst.c[(i, j)] = if rng.gen_bool(0.3) { 0.0 } else { pr * rng.gen_range(0.0..=1.0) };
            inst.a[(i, j)] = if rng.gen_bool(0.5) { 1.0 } else { (pr + rng.gen_range(0.0..0.5)).min(1.0) };
        }
    }
    inst.ensure_valid().expect("generated instance is valid");
    inst
}

/// Every permutation of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}
