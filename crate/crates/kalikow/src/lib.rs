//! Simulation and estimation toolkit for sparse space-time spike processes.
//!
//! A binary chain `X_{i,t}` over a (possibly infinite) set of neurons is
//! specified through a Kalikow-type decomposition: at every site the
//! transition probability is a mixture, over finite space-time
//! neighborhoods, of cylindrical kernels. When the mixture puts most of its
//! mass on small, shallow neighborhoods the chain can be sampled *exactly*
//! from its stationary law by resolving the (almost surely finite) backward
//! genealogy of each site.
//!
//! On top of the sampler the crate provides:
//!
//! * model adapters for Markov chains, chains of infinite order,
//!   discrete-time linear Hawkes processes and linear GL neuron models
//!   ([`models`]);
//! * the four standard dictionaries of cylindrical regressors and the
//!   empirical Gram systems built from them ([`dict`], [`gram`]);
//! * an l1-penalized least-squares solver with KKT certificates
//!   ([`lasso`]);
//! * eigenvalue / restricted-eigenvalue checks and explicit concentration
//!   bounds for the Gram matrix ([`gram`], [`concentration`]).
//!
//! All randomness is counter-based: every uniform variate is a pure
//! function of `(seed, stream, neuron, time)`, so results are reproducible
//! bit-for-bit regardless of evaluation order.

pub mod concentration;
pub mod decomp;
pub mod dict;
pub mod gram;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod sim;

pub use decomp::{KalikowModel, Kernel, Neighborhood, NeighborhoodDistribution, Neuron, Site};
pub use sim::SpikeSample;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("degenerate Markov decomposition: mu = {mu}")]
    DegenerateMarkov { mu: f64 },
    #[error("decomposition error: {0}")]
    Decomposition(String),
    #[error("truncation error: {0}")]
    Truncation(String),
    #[error("theta too large for this distribution (phi overflow at theta = {theta})")]
    ThetaOverflow { theta: f64 },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("runaway genealogy: visited more than {cap} sites (cap configurable)")]
    RunawayGenealogy { cap: usize },
    #[error("horizon too short for coupling grid: need B = {grid} <= floor(T/2) = {half}")]
    HorizonTooShort { grid: usize, half: usize },
    #[error("window underrun: {0}")]
    WindowUnderrun(String),
    #[error("matrix is not symmetric within tolerance (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive semidefinite (lambda_min = {0:.3e})")]
    NotPsd(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("divergent sum: {0}")]
    Divergent(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
