//! Marginal linear programs over ranking marginals `D` (`m x n`).
//!
//! [`build_individual_lp`] carries the individual bounds only; [`build_fair_lp`]
//! adds per-block group rows. Variables are `D_ij` at index `i * n + j`.

pub mod simplex;

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Instance, MarginalD, Matrix};
use simplex::{LinearRow, Sense, SimplexOptions, SimplexOutcome};

/// Kind of a constraint row, used for naming and counting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    /// Column sum of position `j` equals one.
    Position(usize),
    /// Row sum of item `i` is at most one.
    Item(usize),
    IndividualLower { item: usize, block: usize },
    IndividualUpper { item: usize, block: usize },
    GroupLower { block: usize, group: usize },
    GroupUpper { block: usize, group: usize },
}

impl RowKind {
    /// Human-readable 1-based name, also used in the LP text dump.
    pub fn name(&self) -> String {
        match *self {
            RowKind::Position(j) => format!("pos_{}", j + 1),
            RowKind::Item(i) => format!("item_{}", i + 1),
            RowKind::IndividualLower { item, block } => format!("ind_lo_{}_{}", item + 1, block + 1),
            RowKind::IndividualUpper { item, block } => format!("ind_hi_{}_{}", item + 1, block + 1),
            RowKind::GroupLower { block, group } => format!("grp_lo_{}_{}", block + 1, group + 1),
            RowKind::GroupUpper { block, group } => format!("grp_hi_{}_{}", block + 1, group + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpRow {
    pub kind: RowKind,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `max sum c_ij D_ij` subject to `rows`, `D >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub m: usize,
    pub n: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    /// Row count before vacuous rows were pruned.
    pub unpruned_rows: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub d: MarginalD,
    pub objective: f64,
    pub status: LpStatus,
    /// Whether `d` is a basic (vertex) solution.
    pub basic: bool,
    /// Names of rows in the infeasibility certificate, if infeasible.
    pub certificate: Vec<String>,
    pub iterations: usize,
    pub message: String,
}

impl LpSolution {
    /// Converts a non-optimal status into the corresponding error.
    pub fn into_result(self) -> Result<LpSolution> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            LpStatus::Infeasible => Err(Error::Infeasible {
                rows: self.certificate,
            }),
            LpStatus::NumericalFailure => Err(Error::Numerical(self.message)),
        }
    }
}

fn var(n: usize, i: usize, j: usize) -> usize {
    i * n + j
}

/// Individual-fairness program: objective `rho' D v`, column sums one, row
/// sums at most one, `C_ij <= sum_{t in B_j} D_it <= A_ij`.
pub fn build_individual_lp(inst: &Instance) -> LpProblem {
    let (m, n, q) = (inst.m(), inst.n(), inst.q());
    let mut objective = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            objective[var(n, i, j)] = inst.rho[i] * inst.v[j];
        }
    }
    let mut rows = Vec::new();
    for j in 0..n {
        rows.push(LpRow {
            kind: RowKind::Position(j),
            coeffs: (0..m).map(|i| (var(n, i, j), 1.0)).collect(),
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }
    for i in 0..m {
        rows.push(LpRow {
            kind: RowKind::Item(i),
            coeffs: (0..n).map(|j| (var(n, i, j), 1.0)).collect(),
            sense: Sense::Le,
            rhs: 1.0,
        });
    }
    for i in 0..m {
        for (b, block) in inst.blocks.iter().enumerate() {
            let coeffs: Vec<_> = block.iter().map(|&t| (var(n, i, t), 1.0)).collect();
            let (c, a) = (inst.c[(i, b)], inst.a[(i, b)]);
            if c > 0.0 {
                rows.push(LpRow {
                    kind: RowKind::IndividualLower { item: i, block: b },
                    coeffs: coeffs.clone(),
                    sense: Sense::Ge,
                    rhs: c,
                });
            }
            if a < 1.0 {
                rows.push(LpRow {
                    kind: RowKind::IndividualUpper { item: i, block: b },
                    coeffs,
                    sense: Sense::Le,
                    rhs: a,
                });
            }
        }
    }
    LpProblem {
        m,
        n,
        objective,
        rows,
        unpruned_rows: n + m + 2 * m * q,
    }
}

/// [`build_individual_lp`] plus `L_jl <= sum_{i in G_l} sum_{t in B_j} D_it <= U_jl`.
pub fn build_fair_lp(inst: &Instance) -> LpProblem {
    let mut lp = build_individual_lp(inst);
    let n = inst.n();
    for (b, block) in inst.blocks.iter().enumerate() {
        for (l, g) in inst.groups.iter().enumerate() {
            let coeffs: Vec<_> = g
                .members
                .iter()
                .flat_map(|&i| block.iter().map(move |&t| (var(n, i, t), 1.0)))
                .collect();
            let (lo, hi) = (inst.lower[b][l], inst.upper[b][l]);
            if lo > 0 {
                lp.rows.push(LpRow {
                    kind: RowKind::GroupLower { block: b, group: l },
                    coeffs: coeffs.clone(),
                    sense: Sense::Ge,
                    rhs: lo as f64,
                });
            }
            if hi < block.len().min(g.len()) as i64 {
                lp.rows.push(LpRow {
                    kind: RowKind::GroupUpper { block: b, group: l },
                    coeffs,
                    sense: Sense::Le,
                    rhs: hi as f64,
                });
            }
        }
    }
    lp.unpruned_rows += 2 * inst.q() * inst.p();
    lp
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        self.m * self.n
    }

    /// Largest violation of any row or of nonnegativity at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0f64, |a, &v| a.max(-v));
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let viol = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// CPLEX-style LP text with variables `d_i_j` (1-based).
    pub fn to_lp_text(&self) -> String {
        let name = |k: usize| format!("d_{}_{}", k / self.n + 1, k % self.n + 1);
        let mut out = String::new();
        let _ = writeln!(out, "\\ ranking marginal LP over {} items and {} positions", self.m, self.n);
        out.push_str("Maximize\n obj:");
        let terms: Vec<(usize, f64)> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, c)| (k, *c))
            .collect();
        write_terms(&mut out, &terms, &name);
        if terms.is_empty() {
            out.push_str(" 0 d_1_1");
        }
        out.push_str("\nSubject To\n");
        for row in &self.rows {
            let _ = write!(out, " {}:", row.kind.name());
            write_terms(&mut out, &row.coeffs, &name);
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", row.rhs);
        }
        out.push_str("End\n");
        out
    }
}

fn write_terms(out: &mut String, terms: &[(usize, f64)], name: &dyn Fn(usize) -> String) {
    for (k, &(j, a)) in terms.iter().enumerate() {
        if k > 0 && k % 8 == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        if k == 0 && a >= 0.0 {
            let _ = write!(out, " {} {}", a, name(j));
        } else {
            let _ = write!(out, " {sign} {} {}", a.abs(), name(j));
        }
    }
}

/// Solves `lp` to a basic optimal solution.
///
/// Infeasibility and numerical failure are reported through `status`; use
/// [`LpSolution::into_result`] to turn them into errors.
pub fn solve(lp: &LpProblem) -> LpSolution {
    solve_with(lp, &SimplexOptions::default())
}

pub fn solve_with(lp: &LpProblem, opts: &SimplexOptions) -> LpSolution {
    let rows: Vec<LinearRow> = lp
        .rows
        .iter()
        .map(|r| LinearRow {
            coeffs: r.coeffs.clone(),
            sense: r.sense,
            rhs: r.rhs,
        })
        .collect();
    let empty = |status, message: String, certificate| LpSolution {
        d: MarginalD(Matrix::zeros(lp.m, lp.n)),
        objective: f64::NAN,
        status,
        basic: false,
        certificate,
        iterations: 0,
        message,
    };
    match simplex::maximize(lp.num_vars(), &lp.objective, &rows, opts) {
        SimplexOutcome::Optimal {
            x,
            objective,
            iterations,
        } => {
            let viol = lp.max_violation(&x);
            if viol > 1e-8 {
                return empty(
                    LpStatus::NumericalFailure,
                    format!("solution violates constraints by {viol:e}"),
                    Vec::new(),
                );
            }
            let mut d = Matrix::zeros(lp.m, lp.n);
            for i in 0..lp.m {
                d.row_mut(i).copy_from_slice(&x[i * lp.n..(i + 1) * lp.n]);
            }
            log::debug!(
                "lp solved: {} vars, {} rows, {} pivots, objective {objective}",
                lp.num_vars(),
                lp.rows.len(),
                iterations
            );
            LpSolution {
                d: MarginalD(d),
                objective,
                status: LpStatus::Optimal,
                basic: true,
                certificate: Vec::new(),
                iterations,
                message: String::new(),
            }
        }
        SimplexOutcome::Infeasible { certificate } => {
            let names = certificate.iter().map(|&k| lp.rows[k].kind.name()).collect();
            empty(LpStatus::Infeasible, "infeasible".into(), names)
        }
        SimplexOutcome::Unbounded => empty(
            LpStatus::NumericalFailure,
            "solver reported an unbounded ray on a bounded problem".into(),
            Vec::new(),
        ),
        SimplexOutcome::IterationLimit { iterations } => empty(
            LpStatus::NumericalFailure,
            format!("iteration limit reached after {iterations} pivots"),
            Vec::new(),
        ),
        SimplexOutcome::Singular => empty(
            LpStatus::NumericalFailure,
            "basis became singular".into(),
            Vec::new(),
        ),
    }
}

/// Builds and solves the group-and-individual program, failing on
/// infeasibility or numerical trouble.
pub fn solve_fair_lp(inst: &Instance) -> Result<LpSolution> {
    solve(&build_fair_lp(inst)).into_result()
}

pub fn solve_individual_lp(inst: &Instance) -> Result<LpSolution> {
    solve(&build_individual_lp(inst)).into_result()
}
