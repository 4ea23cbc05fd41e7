use thiserror::Error;

use crate::chain_exact::ChainError;
use crate::env_model::EnvError;
use crate::mc_sim::SimError;
use crate::rate_discrete::RateError;
use crate::special_cont::SpecialError;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input or violated precondition.
    Validation,
    /// A numerical routine did not reach its requested accuracy.
    Convergence,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("env_model: {0}")]
    Env(#[from] EnvError),
    #[error("chain_exact: {0}")]
    Chain(#[from] ChainError),
    #[error("mc_sim: {0}")]
    Sim(#[from] SimError),
    #[error("rate_discrete: {0}")]
    Rate(#[from] RateError),
    #[error("special_cont: {0}")]
    Special(#[from] SpecialError),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Env(e) => e.class(),
            Error::Chain(e) => e.class(),
            Error::Sim(e) => e.class(),
            Error::Rate(e) => e.class(),
            Error::Special(e) => e.class(),
        }
    }

    /// Name of the module whose error this wraps.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Env(_) => "env_model",
            Error::Chain(_) => "chain_exact",
            Error::Sim(_) => "mc_sim",
            Error::Rate(_) => "rate_discrete",
            Error::Special(_) => "special_cont",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
