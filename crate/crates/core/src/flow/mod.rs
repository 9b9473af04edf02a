//! Decomposition of item-to-block marginals into integral group-fair
//! matchings, and Birkhoff-von Neumann decomposition of square marginals.
//!
//! The matching polytope is described by a flow network: source to items,
//! items to a per-block tree that mirrors the laminar group family, tree roots
//! to the sink. Every integral feasible flow is a group-fair matching.

pub mod maxflow;

use crate::error::{Error, Result};
use crate::model::{Instance, Matching, MatchingMarginal, Matrix, Policy, RankingMatrix};
use maxflow::{feasible_flow, BoundedArc};

/// Entries within this distance of 0 or 1 are treated as integral.
pub const SNAP_EPS: f64 = 1e-7;
/// Weights below this are dropped before renormalizing.
pub const MIN_WEIGHT: f64 = 1e-10;

/// Flow network for the group-fair matching polytope of an instance.
#[derive(Clone, Debug)]
pub struct LaminarNetwork {
    pub m: usize,
    pub block_sizes: Vec<usize>,
    /// Group members (0-based items).
    pub members: Vec<Vec<usize>>,
    /// Smallest strictly enclosing group of each group, if any.
    pub parent: Vec<Option<usize>>,
    /// Smallest group containing each item, if any.
    pub leaf: Vec<Option<usize>>,
    pub lower: Vec<Vec<i64>>,
    pub upper: Vec<Vec<i64>>,
}

pub fn build_network(inst: &Instance) -> LaminarNetwork {
    let p = inst.p();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by_key(|&l| (inst.groups[l].len(), l));
    let rank: Vec<usize> = {
        let mut r = vec![0; p];
        for (k, &l) in order.iter().enumerate() {
            r[l] = k;
        }
        r
    };
    let contains = |outer: usize, inner: usize| {
        inst.groups[inner]
            .members
            .iter()
            .all(|&i| inst.groups[outer].contains(i))
    };
    let parent = (0..p)
        .map(|l| {
            order[rank[l] + 1..]
                .iter()
                .copied()
                .find(|&o| contains(o, l))
        })
        .collect();
    let leaf = (0..inst.m())
        .map(|i| order.iter().copied().find(|&l| inst.groups[l].contains(i)))
        .collect();
    LaminarNetwork {
        m: inst.m(),
        block_sizes: inst.block_sizes(),
        members: inst.groups.iter().map(|g| g.members.clone()).collect(),
        parent,
        leaf,
        lower: inst.lower.clone(),
        upper: inst.upper.clone(),
    }
}

fn near_int(x: f64) -> Option<i64> {
    let r = x.round();
    ((x - r).abs() <= SNAP_EPS).then_some(r as i64)
}

impl LaminarNetwork {
    pub fn q(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn p(&self) -> usize {
        self.members.len()
    }

    /// `sum_{i in G_l} x_ij` for every block and group.
    pub fn group_sums(&self, x: &Matrix) -> Vec<Vec<f64>> {
        (0..self.q())
            .map(|j| {
                self.members
                    .iter()
                    .map(|g| g.iter().map(|&i| x[(i, j)]).sum())
                    .collect()
            })
            .collect()
    }

    /// Whether an integral matching meets every group bound.
    pub fn is_group_fair(&self, mt: &Matching) -> bool {
        let counts = self.group_sums(&mt.to_dense());
        (0..self.q()).all(|j| {
            (0..self.p()).all(|l| {
                let c = counts[j][l].round() as i64;
                self.lower[j][l] <= c && c <= self.upper[j][l]
            })
        })
    }

    /// Integral group-fair matching agreeing with `x` on every entry and sum
    /// that is already integral, with fractional sums rounded either way.
    pub fn vertex_oracle(&self, x: &Matrix) -> Result<Matching> {
        let (m, q, p) = (self.m, self.q(), self.p());
        if x.rows() != m || x.cols() != q {
            return Err(Error::Dimension(format!(
                "marginal is {}x{}, network expects {m}x{q}",
                x.rows(),
                x.cols()
            )));
        }
        // Nodes: source, sink, items, then per block a root and one node per group.
        let (src, snk) = (0, 1);
        let item_node = |i: usize| 2 + i;
        let root = |j: usize| 2 + m + j * (p + 1);
        let gnode = |j: usize, l: usize| root(j) + 1 + l;
        let nodes = 2 + m + q * (p + 1);

        let mut arcs = Vec::new();
        for i in 0..m {
            let s: f64 = x.row(i).iter().sum();
            let (lo, hi) = match near_int(s) {
                Some(z) => (z, z),
                None => (s.floor() as i64, s.ceil() as i64),
            };
            if lo < 0 || hi > 1 {
                return Err(Error::OutsidePolytope(format!(
                    "item {} has total mass {s}",
                    i + 1
                )));
            }
            arcs.push(BoundedArc {
                from: src,
                to: item_node(i),
                lower: lo,
                upper: hi,
            });
        }
        let mut item_arcs = Vec::with_capacity(m * q);
        for i in 0..m {
            for j in 0..q {
                let e = x[(i, j)];
                if e < -SNAP_EPS || e > 1.0 + SNAP_EPS {
                    return Err(Error::OutsidePolytope(format!(
                        "entry ({}, {}) = {e}",
                        i + 1,
                        j + 1
                    )));
                }
                let (lo, hi) = if e >= 1.0 - SNAP_EPS {
                    (1, 1)
                } else if e <= SNAP_EPS {
                    (0, 0)
                } else {
                    (0, 1)
                };
                let to = match self.leaf[i] {
                    Some(l) => gnode(j, l),
                    None => root(j),
                };
                item_arcs.push(arcs.len());
                arcs.push(BoundedArc {
                    from: item_node(i),
                    to,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        let sums = self.group_sums(x);
        for j in 0..q {
            for l in 0..p {
                let s = sums[j][l];
                let (lo_b, hi_b) = (self.lower[j][l], self.upper[j][l]);
                if s < lo_b as f64 - SNAP_EPS || s > hi_b as f64 + SNAP_EPS {
                    return Err(Error::OutsidePolytope(format!(
                        "block {} group {} sum {s} outside [{lo_b}, {hi_b}]",
                        j + 1,
                        l + 1
                    )));
                }
                let (lo, hi) = match near_int(s) {
                    Some(z) => (z, z),
                    None => (lo_b.max(s.floor() as i64), hi_b.min(s.ceil() as i64)),
                };
                let to = match self.parent[l] {
                    Some(pl) => gnode(j, pl),
                    None => root(j),
                };
                arcs.push(BoundedArc {
                    from: gnode(j, l),
                    to,
                    lower: lo,
                    upper: hi,
                });
            }
            let size = self.block_sizes[j] as i64;
            arcs.push(BoundedArc {
                from: root(j),
                to: snk,
                lower: size,
                upper: size,
            });
        }
        let flow = feasible_flow(nodes, &arcs, src, snk).ok_or_else(|| {
            Error::OutsidePolytope("no integral group-fair matching on the face of the point".into())
        })?;
        let mut block_of = vec![None; m];
        for i in 0..m {
            for j in 0..q {
                if flow[item_arcs[i * q + j]] == 1 {
                    block_of[i] = Some(j);
                }
            }
        }
        Matching::new(block_of, self.block_sizes.clone())
    }

    fn tight_count(&self, x: &Matrix) -> usize {
        let entries = x
            .as_slice()
            .iter()
            .filter(|&&e| e == 0.0 || e == 1.0)
            .count();
        let items = (0..x.rows())
            .filter(|&i| near_int(x.row_sum(i)).is_some())
            .count();
        let groups = self
            .group_sums(x)
            .iter()
            .flatten()
            .filter(|&&s| near_int(s).is_some())
            .count();
        entries + items + groups
    }
}

/// Result of [`decompose_matching`].
#[derive(Clone, Debug)]
pub struct MatchingDecomposition {
    pub policy: Policy<Matching>,
    /// Tight-constraint count before each oracle call; strictly increasing.
    pub tight_counts: Vec<usize>,
}

fn snap(x: &mut Matrix) {
    for i in 0..x.rows() {
        for e in x.row_mut(i) {
            if *e <= SNAP_EPS {
                *e = 0.0;
            } else if *e >= 1.0 - SNAP_EPS {
                *e = 1.0;
            }
        }
    }
}

/// Writes `mhat` as a convex combination of integral group-fair matchings by
/// repeatedly stepping away from a vertex of the current minimal face.
pub fn decompose_matching(net: &LaminarNetwork, mhat: &MatchingMarginal) -> Result<MatchingDecomposition> {
    let (m, q, p) = (net.m, net.q(), net.p());
    if mhat.matrix.rows() != m || mhat.block_sizes != net.block_sizes {
        return Err(Error::Dimension(
            "matching marginal does not match the network".into(),
        ));
    }
    let limit = m * q + q * p + 1;
    let mut x = mhat.matrix.clone();
    let mut terms: Vec<(f64, Matching)> = Vec::new();
    let mut tight_counts = Vec::new();
    let mut remaining = 1.0;

    loop {
        snap(&mut x);
        let tight = net.tight_count(&x);
        if let Some(&prev) = tight_counts.last() {
            if tight <= prev {
                return Err(Error::Decomposition(format!(
                    "face dimension did not drop ({prev} -> {tight} tight constraints)"
                )));
            }
        }
        tight_counts.push(tight);
        let v = net.vertex_oracle(&x)?;
        let vd = v.to_dense();
        if x.max_abs_diff(&vd) == 0.0 {
            terms.push((remaining, v));
            break;
        }
        if terms.len() + 1 >= limit {
            return Err(Error::Decomposition(format!(
                "more than {limit} terms needed"
            )));
        }

        // Largest t keeping x + t (x - v) inside the polytope.
        let mut t_max = f64::INFINITY;
        let mut blocking = Vec::new();
        let consider = |t: f64, what: (usize, usize), t_max: &mut f64, blocking: &mut Vec<(usize, usize)>| {
            if t < *t_max - 1e-15 {
                *t_max = t;
                blocking.clear();
                blocking.push(what);
            } else if t <= *t_max + 1e-15 {
                blocking.push(what);
            }
        };
        for i in 0..m {
            for j in 0..q {
                let d = x[(i, j)] - vd[(i, j)];
                if d > 0.0 {
                    consider((1.0 - x[(i, j)]) / d, (i, j), &mut t_max, &mut blocking);
                } else if d < 0.0 {
                    consider(x[(i, j)] / -d, (i, j), &mut t_max, &mut blocking);
                }
            }
            let s = x.row_sum(i);
            let ds = s - vd.row_sum(i);
            if near_int(s).is_none() && ds > 0.0 {
                consider((1.0 - s) / ds, (usize::MAX, i), &mut t_max, &mut blocking);
            }
        }
        let xs = net.group_sums(&x);
        let vs = net.group_sums(&vd);
        for j in 0..q {
            for l in 0..p {
                let s = xs[j][l];
                if near_int(s).is_some() {
                    continue;
                }
                let ds = s - vs[j][l];
                if ds > 0.0 {
                    consider((net.upper[j][l] as f64 - s) / ds, (usize::MAX - 1, 0), &mut t_max, &mut blocking);
                } else if ds < 0.0 {
                    consider((s - net.lower[j][l] as f64) / -ds, (usize::MAX - 1, 0), &mut t_max, &mut blocking);
                }
            }
        }
        if !t_max.is_finite() || t_max <= 0.0 {
            return Err(Error::Decomposition(format!("degenerate step length {t_max}")));
        }
        let alpha = t_max / (1.0 + t_max);
        terms.push((remaining * alpha, v));
        remaining *= 1.0 - alpha;
        for i in 0..m {
            for j in 0..q {
                let d = x[(i, j)] - vd[(i, j)];
                x[(i, j)] += t_max * d;
            }
        }
        for &(i, j) in &blocking {
            if i < m {
                x[(i, j)] = if x[(i, j)] > 0.5 { 1.0 } else { 0.0 };
            }
        }
    }

    let total: f64 = terms.iter().filter(|(w, _)| *w >= MIN_WEIGHT).map(|(w, _)| w).sum();
    let terms: Vec<_> = terms
        .into_iter()
        .filter(|(w, _)| *w >= MIN_WEIGHT)
        .map(|(w, mt)| (w / total, mt))
        .collect();
    Ok(MatchingDecomposition {
        policy: Policy::new(terms)?,
        tight_counts,
    })
}

/// Perfect matching on the support of a square nonnegative matrix, warm
/// started from `start`; entries at or below `thresh` are ignored.
fn perfect_matching(a: &Matrix, thresh: f64, start: &mut [Option<usize>]) -> bool {
    let n = a.rows();
    // start[i] = column of row i; col_owner inverse.
    let mut col_owner = vec![None; n];
    for i in 0..n {
        if let Some(j) = start[i] {
            if a[(i, j)] > thresh && col_owner[j].is_none() {
                col_owner[j] = Some(i);
            } else {
                start[i] = None;
            }
        }
    }
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| a[(i, j)] > thresh).collect())
        .collect();
    fn augment(
        i: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        row_to: &mut [Option<usize>],
        col_owner: &mut [Option<usize>],
    ) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            let free = match col_owner[j] {
                None => true,
                Some(k) => augment(k, adj, seen, row_to, col_owner),
            };
            if free {
                col_owner[j] = Some(i);
                row_to[i] = Some(j);
                return true;
            }
        }
        false
    }
    for i in 0..n {
        if start[i].is_none() {
            let mut seen = vec![false; n];
            if !augment(i, &adj, &mut seen, start, &mut col_owner) {
                return false;
            }
        }
    }
    true
}

/// Birkhoff-von Neumann decomposition of a doubly stochastic `m x m` matrix
/// into permutations (as rankings of all `m` positions).
pub fn birkhoff_decompose(d: &Matrix) -> Result<Policy<RankingMatrix>> {
    let n = d.rows();
    if d.cols() != n {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            d.rows(),
            d.cols()
        )));
    }
    let tol = 1e-6;
    for i in 0..n {
        if (d.row_sum(i) - 1.0).abs() > tol || (d.col_sum(i) - 1.0).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "matrix is not doubly stochastic at index {}",
                i + 1
            )));
        }
    }
    let thresh = 1e-9;
    let mut rest = d.clone();
    let mut terms: Vec<(f64, RankingMatrix)> = Vec::new();
    let mut row_to = vec![None; n];
    let mut covered = 0.0;
    while covered < 1.0 - thresh {
        if !perfect_matching(&rest, thresh, &mut row_to) {
            break;
        }
        let perm: Vec<usize> = row_to.iter().map(|j| j.expect("perfect")).collect();
        let w = (0..n).map(|i| rest[(i, perm[i])]).fold(f64::INFINITY, f64::min);
        for i in 0..n {
            rest[(i, perm[i])] -= w;
        }
        let mut item_at = vec![0; n];
        for (i, &j) in perm.iter().enumerate() {
            item_at[j] = i;
        }
        terms.push((w, RankingMatrix::new(n, item_at)?));
        covered += w;
        if terms.len() > n * n + 1 {
            return Err(Error::Decomposition("too many permutations".into()));
        }
    }
    if covered < 1.0 - 1e-6 {
        return Err(Error::Decomposition(format!(
            "support ran out of perfect matchings with weight {covered} covered"
        )));
    }
    let terms: Vec<_> = terms.into_iter().filter(|(w, _)| *w >= MIN_WEIGHT).collect();
    let total: f64 = terms.iter().map(|(w, _)| w).sum();
    Policy::new(terms.into_iter().map(|(w, r)| (w / total, r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dcg_discounts, Group};

    fn two_block_instance() -> Instance {
        let mut inst = Instance::vacuous(
            vec![1.0; 4],
            dcg_discounts(4),
            vec![vec![0, 1], vec![2, 3]],
            vec![Group::new("a", vec![0, 1]), Group::new("b", vec![2, 3])],
        );
        for j in 0..2 {
            for l in 0..2 {
                inst.lower[j][l] = 1;
                inst.upper[j][l] = 1;
            }
        }
        inst
    }

    #[test]
    fn oracle_returns_fair_matching() {
        let inst = two_block_instance();
        let net = build_network(&inst);
        let x = Matrix::filled(4, 2, 0.5);
        let v = net.vertex_oracle(&x).unwrap();
        assert!(net.is_group_fair(&v));
    }

    #[test]
    fn oracle_rejects_points_outside() {
        let inst = two_block_instance();
        let net = build_network(&inst);
        let x = Matrix::from_rows(vec![
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        assert!(matches!(net.vertex_oracle(&x), Err(Error::OutsidePolytope(_))));
    }

    #[test]
    fn decomposition_reconstructs() {
        let inst = two_block_instance();
        let net = build_network(&inst);
        let x = Matrix::from_rows(vec![
            vec![0.7, 0.3],
            vec![0.3, 0.7],
            vec![0.4, 0.6],
            vec![0.6, 0.4],
        ])
        .unwrap();
        let mm = MatchingMarginal::new(x.clone(), vec![2, 2]).unwrap();
        let dec = decompose_matching(&net, &mm).unwrap();
        assert!(dec.policy.marginal().max_abs_diff(&x) < 1e-12);
        for (_, mt) in dec.policy.terms() {
            assert!(net.is_group_fair(mt));
        }
        assert!(dec.tight_counts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn nested_groups_parent_links() {
        let inst = Instance::vacuous(
            vec![1.0; 4],
            vec![1.0; 4],
            vec![vec![0, 1, 2, 3]],
            vec![
                Group::new("all", vec![0, 1, 2, 3]),
                Group::new("pair", vec![0, 1]),
                Group::new("one", vec![0]),
            ],
        );
        let net = build_network(&inst);
        assert_eq!(net.parent, vec![None, Some(0), Some(1)]);
        assert_eq!(net.leaf, vec![Some(2), Some(1), Some(0), Some(0)]);
    }

    #[test]
    fn bvn_of_half_half() {
        let d = Matrix::from_rows(vec![
            vec![0.5, 0.5, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 0.5, 0.5],
        ])
        .unwrap();
        let pol = birkhoff_decompose(&d).unwrap();
        assert_eq!(pol.len(), 2);
        assert!(pol.marginal().max_abs_diff(&d) < 1e-12);
    }

    #[test]
    fn bvn_rejects_non_stochastic() {
        let d = Matrix::filled(2, 2, 0.6);
        assert!(birkhoff_decompose(&d).is_err());
    }
}
