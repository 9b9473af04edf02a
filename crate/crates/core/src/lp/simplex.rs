//! Dense revised simplex for `max c'x` subject to sparse linear rows and
//! `x >= 0`.
//!
//! The basis inverse is stored explicitly and updated by elementary row
//! operations after each pivot; it is recomputed from scratch periodically.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct SimplexOptions {
    /// Hard cap on pivots across both phases; `None` picks a size-based cap.
    pub max_iterations: Option<usize>,
    /// Pivots between refactorizations; `None` picks a size-based interval.
    pub refactor_every: Option<usize>,
    pub optimality_tol: f64,
    pub feasibility_tol: f64,
    pub pivot_tol: f64,
    pub harris_delta: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iterations: None,
            refactor_every: None,
            optimality_tol: 1e-9,
            feasibility_tol: 1e-7,
            pivot_tol: 1e-9,
            harris_delta: 1e-9,
            degenerate_limit: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimplexOutcome {
    Optimal {
        x: Vec<f64>,
        objective: f64,
        iterations: usize,
    },
    /// Rows carrying a nonzero multiplier in the phase-one dual.
    Infeasible { certificate: Vec<usize> },
    Unbounded,
    IterationLimit { iterations: usize },
    Singular,
}

enum Stop {
    Unbounded,
    IterationLimit,
    Singular,
}

struct Solver<'a> {
    opts: &'a SimplexOptions,
    r: usize,
    cols: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    first_art: usize,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    fixed: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
    refactor_every: usize,
    since_refactor: usize,
    phase_two: bool,
}

/// Maximizes `cost . x` over `x >= 0` subject to `rows`.
pub fn maximize(
    num_vars: usize,
    cost: &[f64],
    rows: &[LinearRow],
    opts: &SimplexOptions,
) -> SimplexOutcome {
    assert_eq!(cost.len(), num_vars);
    let r = rows.len();

    // Normalize to nonnegative right-hand sides.
    let mut senses = Vec::with_capacity(r);
    let mut b = Vec::with_capacity(r);
    let mut signs = Vec::with_capacity(r);
    for row in rows {
        let flip = row.rhs < 0.0;
        let s = if flip { -1.0 } else { 1.0 };
        signs.push(s);
        b.push(row.rhs * s);
        senses.push(match (row.sense, flip) {
            (Sense::Le, false) | (Sense::Ge, true) => Sense::Le,
            (Sense::Ge, false) | (Sense::Le, true) => Sense::Ge,
            (Sense::Eq, _) => Sense::Eq,
        });
    }

    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_vars];
    for (k, row) in rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            assert!(j < num_vars, "row references variable {j} of {num_vars}");
            if a != 0.0 {
                cols[j].push((k, a * signs[k]));
            }
        }
    }
    let mut basis = vec![usize::MAX; r];
    for (k, s) in senses.iter().enumerate() {
        match s {
            Sense::Le => {
                basis[k] = cols.len();
                cols.push(vec![(k, 1.0)]);
            }
            Sense::Ge => cols.push(vec![(k, -1.0)]),
            Sense::Eq => {}
        }
    }
    let first_art = cols.len();
    for k in 0..r {
        if senses[k] != Sense::Le {
            basis[k] = cols.len();
            cols.push(vec![(k, 1.0)]);
        }
    }
    let ncols = cols.len();
    let mut is_basic = vec![false; ncols];
    for &j in &basis {
        is_basic[j] = true;
    }
    let mut binv = vec![0.0; r * r];
    for k in 0..r {
        binv[k * r + k] = 1.0;
    }

    let max_iterations = opts
        .max_iterations
        .unwrap_or(50 * (r + ncols) + 10_000);
    let refactor_every = opts.refactor_every.unwrap_or((r / 2).max(100));
    let mut s = Solver {
        opts,
        r,
        cols,
        xb: b.clone(),
        b,
        first_art,
        basis,
        is_basic,
        fixed: vec![false; ncols],
        binv,
        iterations: 0,
        max_iterations,
        refactor_every,
        since_refactor: 0,
        phase_two: false,
    };

    // Phase one: minimize the sum of artificials.
    if first_art < ncols {
        let mut c1 = vec![0.0; ncols];
        for c in &mut c1[first_art..] {
            *c = 1.0;
        }
        match s.run(&c1) {
            Ok(()) => {}
            Err(stop) => return s.stop_outcome(stop),
        }
        if s.refactor().is_err() {
            return SimplexOutcome::Singular;
        }
        let infeas: f64 = (0..r)
            .filter(|&i| s.basis[i] >= first_art)
            .map(|i| s.xb[i])
            .sum();
        let scale = s.b.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        if infeas > opts.feasibility_tol * scale {
            let y = s.duals(&c1);
            let certificate = (0..r).filter(|&k| y[k].abs() > 1e-9).collect();
            return SimplexOutcome::Infeasible { certificate };
        }
        s.drive_out_artificials();
        for j in first_art..ncols {
            s.fixed[j] = true;
        }
    }
    s.phase_two = true;

    // Phase two on the original objective (minimizing its negation).
    let mut c2 = vec![0.0; ncols];
    for j in 0..num_vars {
        c2[j] = -cost[j];
    }
    if let Err(stop) = s.run(&c2) {
        return s.stop_outcome(stop);
    }
    if s.refactor().is_err() {
        return SimplexOutcome::Singular;
    }
    // A fresh factorization can expose a few residual improving columns.
    if let Err(stop) = s.run(&c2) {
        return s.stop_outcome(stop);
    }

    let mut x = vec![0.0; num_vars];
    for (i, &j) in s.basis.iter().enumerate() {
        if j < num_vars {
            x[j] = s.xb[i].max(0.0);
        }
    }
    let objective = x.iter().zip(cost).map(|(a, c)| a * c).sum();
    SimplexOutcome::Optimal {
        x,
        objective,
        iterations: s.iterations,
    }
}

impl Solver<'_> {
    fn stop_outcome(&self, stop: Stop) -> SimplexOutcome {
        match stop {
            Stop::Unbounded => SimplexOutcome::Unbounded,
            Stop::IterationLimit => SimplexOutcome::IterationLimit {
                iterations: self.iterations,
            },
            Stop::Singular => SimplexOutcome::Singular,
        }
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let r = self.r;
        let mut y = vec![0.0; r];
        for i in 0..r {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.binv[i * r..(i + 1) * r];
                for (yk, bk) in y.iter_mut().zip(row) {
                    *yk += cb * bk;
                }
            }
        }
        y
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let r = self.r;
        let mut w = vec![0.0; r];
        for &(k, a) in &self.cols[j] {
            for (i, wi) in w.iter_mut().enumerate() {
                *wi += a * self.binv[i * r + k];
            }
        }
        w
    }

    fn refactor(&mut self) -> Result<(), Stop> {
        let r = self.r;
        self.since_refactor = 0;
        if r == 0 {
            return Ok(());
        }
        // Gauss-Jordan on [B | I] with partial pivoting.
        let mut a = vec![0.0; r * r];
        for (i, &j) in self.basis.iter().enumerate() {
            for &(k, v) in &self.cols[j] {
                a[k * r + i] = v;
            }
        }
        let mut inv = vec![0.0; r * r];
        for k in 0..r {
            inv[k * r + k] = 1.0;
        }
        for col in 0..r {
            let mut piv = col;
            let mut best = a[col * r + col].abs();
            for row in col + 1..r {
                let v = a[row * r + col].abs();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            if best < 1e-12 {
                return Err(Stop::Singular);
            }
            if piv != col {
                for c in 0..r {
                    a.swap(piv * r + c, col * r + c);
                    inv.swap(piv * r + c, col * r + c);
                }
            }
            let p = a[col * r + col];
            for c in 0..r {
                a[col * r + c] /= p;
                inv[col * r + c] /= p;
            }
            for row in 0..r {
                if row == col {
                    continue;
                }
                let f = a[row * r + col];
                if f == 0.0 {
                    continue;
                }
                for c in 0..r {
                    a[row * r + c] -= f * a[col * r + c];
                    inv[row * r + c] -= f * inv[col * r + c];
                }
            }
        }
        self.binv = inv;
        for i in 0..r {
            let row = &self.binv[i * r..(i + 1) * r];
            self.xb[i] = row.iter().zip(&self.b).map(|(x, y)| x * y).sum();
        }
        Ok(())
    }

    fn pivot(&mut self, leave: usize, enter: usize, w: &[f64]) {
        let r = self.r;
        let p = w[leave];
        let theta = self.xb[leave] / p;
        let theta = if theta.is_finite() { theta.max(0.0) } else { 0.0 };
        for i in 0..r {
            if i != leave && w[i] != 0.0 {
                self.xb[i] -= theta * w[i];
            }
        }
        self.xb[leave] = theta;

        let (before, rest) = self.binv.split_at_mut(leave * r);
        let (prow, after) = rest.split_at_mut(r);
        for x in prow.iter_mut() {
            *x /= p;
        }
        for (i, row) in before
            .chunks_exact_mut(r)
            .chain(after.chunks_exact_mut(r))
            .enumerate()
        {
            let idx = if i < leave { i } else { i + 1 };
            let f = w[idx];
            if f != 0.0 {
                for (x, pv) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * pv;
                }
            }
        }

        let old = self.basis[leave];
        self.is_basic[old] = false;
        if old >= self.first_art {
            self.fixed[old] = true;
        }
        self.is_basic[enter] = true;
        self.basis[leave] = enter;
        self.since_refactor += 1;
    }

    fn run(&mut self, cost: &[f64]) -> Result<(), Stop> {
        let opts = self.opts;
        let r = self.r;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.since_refactor >= self.refactor_every {
                self.refactor()?;
            }
            let y = self.duals(cost);
            let mut enter = None;
            let mut best = -opts.optimality_tol;
            for j in 0..self.cols.len() {
                if self.is_basic[j] || self.fixed[j] {
                    continue;
                }
                let d = cost[j]
                    - self.cols[j]
                        .iter()
                        .map(|&(k, a)| y[k] * a)
                        .sum::<f64>();
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = enter else {
                return Ok(());
            };
            if self.iterations >= self.max_iterations {
                return Err(Stop::IterationLimit);
            }
            let w = self.ftran(q);

            // Basic artificials left after phase one must stay at zero, so
            // they block in either direction.
            let stuck = |i: usize, s: &Self| s.phase_two && s.basis[i] >= s.first_art;
            let leave = if bland {
                let mut best: Option<(f64, usize, usize)> = None;
                for i in 0..r {
                    let wi = if stuck(i, self) { w[i].abs() } else { w[i] };
                    if wi > opts.pivot_tol {
                        let ratio = self.xb[i].max(0.0) / wi;
                        let cand = (ratio, self.basis[i], i);
                        best = match best {
                            None => Some(cand),
                            Some(b) if ratio < b.0 - 1e-12
                                || (ratio <= b.0 + 1e-12 && cand.1 < b.1) =>
                            {
                                Some(cand)
                            }
                            keep => keep,
                        };
                    }
                }
                best.map(|b| b.2)
            } else {
                let mut theta_max = f64::INFINITY;
                for i in 0..r {
                    let wi = if stuck(i, self) { w[i].abs() } else { w[i] };
                    if wi > opts.pivot_tol {
                        theta_max = theta_max.min((self.xb[i].max(0.0) + opts.harris_delta) / wi);
                    }
                }
                if theta_max.is_infinite() {
                    None
                } else {
                    let mut pick = None;
                    let mut big = 0.0;
                    for i in 0..r {
                        let wi = if stuck(i, self) { w[i].abs() } else { w[i] };
                        if wi > opts.pivot_tol && self.xb[i].max(0.0) / wi <= theta_max && wi > big {
                            big = wi;
                            pick = Some(i);
                        }
                    }
                    pick
                }
            };
            let Some(l) = leave else {
                return Err(Stop::Unbounded);
            };
            let mut w = w;
            if stuck(l, self) && w[l] < 0.0 {
                // Moving a zero-valued artificial: the step length is zero.
                self.xb[l] = 0.0;
            }
            let theta = (self.xb[l] / w[l]).max(0.0);
            if theta < 1e-12 {
                degenerate_run += 1;
                if degenerate_run > opts.degenerate_limit {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
            // Clean tiny entries so updates stay sparse.
            for wi in w.iter_mut() {
                if wi.abs() < 1e-14 {
                    *wi = 0.0;
                }
            }
            self.pivot(l, q, &w);
            self.iterations += 1;
        }
    }

    /// Pivots zero-valued artificials out of the basis where possible.
    fn drive_out_artificials(&mut self) {
        let r = self.r;
        for i in 0..r {
            if self.basis[i] < self.first_art {
                continue;
            }
            let row: Vec<f64> = self.binv[i * r..(i + 1) * r].to_vec();
            let mut best = None;
            let mut big = 1e-7;
            for j in 0..self.first_art {
                if self.is_basic[j] {
                    continue;
                }
                let alpha: f64 = self.cols[j].iter().map(|&(k, a)| row[k] * a).sum();
                if alpha.abs() > big {
                    big = alpha.abs();
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                let w = self.ftran(j);
                self.xb[i] = 0.0;
                self.pivot(i, j, &w);
            }
        }
    }
}
