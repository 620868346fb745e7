//! Simulation laboratory for verifiable delegated variational quantum
//! algorithms in the measurement-based model.

pub mod ansatz;
pub mod attacks;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod hamiltonian;
pub mod mbqc;
pub mod protocol;
pub mod quantum;
pub mod rng;
pub mod verification;

pub use error::{Error, Result};
