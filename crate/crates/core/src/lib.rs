//! Distributed online learning with kernelized models.
//!
//! A set of local learners each process their own data stream, updating a
//! local model after every example. A synchronization operator decides when
//! the learners exchange models with a coordinator, which replaces the local
//! models by their average:
//!
//! - [`rkhs`]: kernels, support vector expansions, averaging and divergence
//! - [`learners`]: losses, kernel and linear SGD, truncation and projection
//! - [`protocol`]: continuous, periodic and dynamic synchronization, byte
//!   accounting, and the communication bound checks
//! - [`simulator`]: deterministic data streams, the round loop, comparison
//!   and verification of loss and communication bounds

pub mod error;
pub mod learners;
pub mod protocol;
pub mod rkhs;
pub mod simulator;

pub use error::{Error, Result};
