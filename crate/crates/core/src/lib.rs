//! Gradient grouping: `N` points stepping along their own gradients with step
//! sizes chosen jointly so the moved points cluster as tightly as possible.
//!
//! The crate holds the dense linear algebra the step-size solve needs, the
//! optimizer itself, baseline first-order and quasi-Newton methods, loss
//! oracles and datasets, an experiment harness, and a randomized oracle
//! suite for the underlying algebra.

pub mod baselines;
pub mod error;
pub mod gg;
pub mod harness;
pub mod linalg;
pub mod objectives;
pub mod verify;

pub use error::{Error, Result};
