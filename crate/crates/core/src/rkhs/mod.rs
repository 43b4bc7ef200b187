//! Kernels and support-vector-expansion models.
//!
//! Models are kept in their dual representation `f(·) = Σ α_s k(s, ·)`; the
//! feature map is never materialized. Inner products, distances, averages and
//! the configuration divergence are all computed from kernel evaluations.
//!
//! All sums run left to right over stored support order, so results are
//! reproducible bit for bit on a given platform.

mod kernel;
mod model;

pub use kernel::{kernel_eval, KernelSpec};
pub use model::{
    average, average_models, distance_sq, divergence, inner_product, predict, Birth,
    KernelModel, ModelConfiguration, Point, SupportVector,
};

pub(crate) use kernel::dot;
pub(crate) use model::{distance_sq_unchecked, inner_product_unchecked};
