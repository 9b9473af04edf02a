use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid instance ({} violation(s)): {}", .0.len(), join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear program is infeasible ({} certificate row(s): {})", .rows.len(), preview(.rows))]
    Infeasible { rows: Vec<String> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("point is outside the group-fair matching polytope: {0}")]
    OutsidePolytope(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("greedy ranking reached a dead end at position {position}")]
    DeadEnd { position: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

fn preview(rows: &[String]) -> String {
    const SHOWN: usize = 6;
    let mut out = rows.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if rows.len() > SHOWN {
        out.push_str(", ...");
    }
    out
}
