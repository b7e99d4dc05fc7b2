//! Fixed-confidence best-arm identification for restless Markov bandits.
//!
//! Every arm is a finite ergodic Markov chain that keeps evolving whether or
//! not it is observed. The set of arm TPMs is known; only their assignment to
//! arm positions is unknown. This crate holds the pure algorithmic pieces:
//!
//! - [`markov`]: TPM validation, ergodicity, stationary laws, d-step kernels, KL.
//! - [`instance`]: problem instances, configurations and alternative sets.
//! - [`delay`]: the delay / last-observed-state MDP truncated at maximum delay `R`.
//! - [`simplex`]: a dense two-phase simplex solver.
//! - [`occupancy`]: occupancy measures, the `T_R*` program, mixtures and sampling rules.
//! - [`llr`]: count tables, the running log-likelihood ledger and the GLR statistic.
//! - [`policy`]: the restless environment and the delay-constrained sampling/stopping policy.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and the
//! parallel experiment harness live in the `rbai` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod delay;
mod error;
mod graph;
pub mod instance;
mod linalg;
pub mod llr;
pub mod markov;
pub mod occupancy;
pub mod policy;
pub mod simplex;

pub use error::{Error, Result};
pub use graph::is_ergodic_graph;
pub use linalg::LuDecomposition;
