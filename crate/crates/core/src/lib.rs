//! Bayesian confirmatory factor analysis with inequality-constrained model
//! selection.
//!
//! The crate follows a four-step workflow:
//!
//! 1. choose the number of common factors by posterior model probabilities
//!    ([`dimension::select_dimension`]), screening out rank-deficient,
//!    overfactored solutions;
//! 2. fit an unrestricted confirmatory factor model (only the minimal
//!    anchor restrictions, see [`UcfmSpec`]) by Gibbs sampling
//!    ([`sampler::gibbs_run`]);
//! 3. write competing loading patterns as inequality constraints
//!    ([`dsl`]);
//! 4. rank those patterns by Bayes factors against the unrestricted model
//!    and posterior model probabilities ([`compare`]).
//!
//! [`report`] renders posterior summaries and reproduced/residual
//! correlations; [`pipeline`] wires the steps to a configuration file and
//! an output bundle.

pub mod compare;
pub mod config;
pub mod dimension;
pub mod dsl;
pub mod error;
pub mod marginal;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    validate_spec, Cell, Column, ComparisonResult, Dataset, FactorParams, PosteriorDraws, PriorDraws,
    UcfmSpec, Violation,
};
