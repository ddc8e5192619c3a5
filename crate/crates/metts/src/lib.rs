//! Minimally entangled typical thermal state (METTS) sampling for
//! one-dimensional Bose-Hubbard chains, built on U(1) block-sparse tensors.
//!
//! The crate has three layers:
//!
//! * tensor machinery: [`symtensor`] (charge-labelled block-sparse tensors)
//!   and [`mps`] (matrix product states with an orthogonality center,
//!   projective collapse, and diagonal-observable moments);
//! * physics: [`model`] (Bose-Hubbard bond terms and their even/odd Trotter
//!   split), [`propagator`] (imaginary-time TEBD and the real-time symmetric
//!   unitary built from Trotter gates), and [`sampler`] (the METTS Markov
//!   chain, canonical and hybrid grand-canonical);
//! * verification: [`edref`] (dense exact-diagonalization references,
//!   transition matrices, and their second-largest-magnitude eigenvalue),
//!   [`oracle`] (free-fermion closed forms for hardcore chains), and
//!   [`stats`] (autocorrelation, blocking, jackknife).
//!
//! Everything is generic over the real scalar via [`Real`]; `f64` aliases for
//! the main types are exported at the crate root. Energies are in units of
//! the hopping amplitude J and inverse temperatures in units of 1/J.

pub mod edref;
mod linalg;
pub mod model;
pub mod mps;
pub mod oracle;
pub mod propagator;
pub mod sampler;
mod scalar;
pub mod stats;
pub mod symtensor;

pub use scalar::Real;

/// Crate-wide error type.
///
/// `Structure` covers malformed inputs (index mismatches, charge violations),
/// `Domain` covers arguments outside an operation's contract, and the
/// remaining variants report numerical failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("structure: {0}")]
    Structure(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("all singular values truncated: {0}")]
    DegenerateTruncation(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("numerical failure at step {step}: {msg}")]
    Numerical { step: u64, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

/// `f64` instantiations of the core types.
pub type SymTensor64 = symtensor::SymTensor<f64>;
pub type Mps64 = mps::MatrixProductState<f64>;
pub type ModelSpec64 = model::ModelSpec<f64>;
pub type ChainConfig64 = sampler::ChainConfig<f64>;
pub type TruncationSpec64 = symtensor::TruncationSpec<f64>;
