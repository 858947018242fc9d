//! Sorted L-one penalized estimation.
//!
//! Start with [`sorted_l1::prox_sorted_l1`] for the prox,
//! [`solver::fista_solve`] to fit a model, [`lambda_seq`] for the
//! regularizing sequences and [`harness::run_experiment`] for simulations.

pub mod amp;
pub mod cli;
pub mod error;
pub mod harness;
pub mod inference;
pub mod io;
pub mod lambda_seq;
pub mod linalg;
pub mod normal;
pub mod rng;
pub mod solver;
pub mod sorted_l1;

pub use error::{Result, SlopeError};
