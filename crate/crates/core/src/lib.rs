//! Fair ranking under combined individual and group fairness constraints.
//!
//! The library samples rankings from a distribution whose per-block placement
//! probabilities respect individual lower/upper bounds `(C, A)`, while every
//! ranking in the support respects per-block group representation bounds
//! `(L, U)`. The main pipeline is:
//!
//! 1. solve the marginal LP over ranking marginals ([`lp`]),
//! 2. project the marginal to item-to-block assignments ([`pipeline::project_g`]),
//! 3. decompose the assignment marginal into integral group-fair matchings
//!    using a laminar flow network ([`flow`]),
//! 4. refine each matching into a ranking by sorting items inside every block
//!    ([`pipeline::refine_f`]).
//!
//! Baseline rankers, fairness metrics and approximation-bound calculators live
//! in [`metrics`]; constraint construction in [`constraints`]; the synthetic
//! experiment grid in [`experiment`].

pub mod constraints;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod lp;
pub mod metrics;
pub mod model;
pub mod pipeline;

pub use error::{Error, Result};
pub use model::{
    Group, Instance, MarginalD, Matching, MatchingMarginal, Matrix, Policy, RankingMatrix,
    Violation,
};
pub use pipeline::{run_main_algorithm, sample, RankingPolicy};
