//! Dinic max-flow on integer capacities and feasible flows with lower bounds.

use std::collections::VecDeque;

pub const INF: i64 = i64::MAX / 4;

#[derive(Clone, Debug)]
pub struct Dinic {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    pub fn new(nodes: usize) -> Self {
        Dinic {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            level: vec![0; nodes],
            iter: vec![0; nodes],
        }
    }

    /// Adds `u -> v` with capacity `cap`; returns the edge id.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: i64) -> usize {
        let id = self.to.len();
        self.to.push(v);
        self.cap.push(cap);
        self.adj[u].push(id);
        self.to.push(u);
        self.cap.push(0);
        self.adj[v].push(id + 1);
        id
    }

    /// Flow currently routed through edge `id`.
    pub fn flow(&self, id: usize) -> i64 {
        self.cap[id ^ 1]
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if self.cap[e] > 0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: i64) -> i64 {
        if u == t {
            return pushed;
        }
        while self.iter[u] < self.adj[u].len() {
            let e = self.adj[u][self.iter[u]];
            let v = self.to[e];
            if self.cap[e] > 0 && self.level[v] == self.level[u] + 1 {
                let got = self.dfs(v, t, pushed.min(self.cap[e]));
                if got > 0 {
                    self.cap[e] -= got;
                    self.cap[e ^ 1] += got;
                    return got;
                }
            }
            self.iter[u] += 1;
        }
        0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut total = 0;
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|x| *x = 0);
            loop {
                let f = self.dfs(s, t, INF);
                if f == 0 {
                    break;
                }
                total += f;
            }
        }
        total
    }
}

/// Arc with flow bounds `[lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundedArc {
    pub from: usize,
    pub to: usize,
    pub lower: i64,
    pub upper: i64,
}

/// Integral `s-t` flow (any value) meeting every arc's bounds, or `None`.
pub fn feasible_flow(nodes: usize, arcs: &[BoundedArc], s: usize, t: usize) -> Option<Vec<i64>> {
    if arcs.iter().any(|a| a.lower > a.upper) {
        return None;
    }
    let (ss, tt) = (nodes, nodes + 1);
    let mut g = Dinic::new(nodes + 2);
    let mut excess = vec![0i64; nodes];
    let ids: Vec<usize> = arcs
        .iter()
        .map(|a| {
            excess[a.to] += a.lower;
            excess[a.from] -= a.lower;
            g.add_edge(a.from, a.to, a.upper - a.lower)
        })
        .collect();
    g.add_edge(t, s, INF);
    let mut need = 0;
    for (u, &e) in excess.iter().enumerate() {
        if e > 0 {
            g.add_edge(ss, u, e);
            need += e;
        } else if e < 0 {
            g.add_edge(u, tt, -e);
        }
    }
    if g.max_flow(ss, tt) != need {
        return None;
    }
    Some(
        arcs.iter()
            .zip(&ids)
            .map(|(a, &id)| a.lower + g.flow(id))
            .collect(),
    )
}
