#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Random walks in random environment: potentials and valleys, exact
//! quenched hitting quantities, Monte Carlo estimation, annealed cumulant
//! functions and the continuous-model rate functions.

pub mod chain_exact;
pub mod env_model;
pub mod error;
pub mod mc_sim;
pub mod rate_discrete;
pub mod rng;
pub mod special_cont;
pub mod stats;

pub use error::{Error, ErrorClass, Result};
