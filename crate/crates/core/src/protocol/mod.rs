//! Synchronization operators and communication accounting.
//!
//! After every round of local updates, [`sync_step`] applies one of the
//! synchronization strategies:
//!
//! - `continuous` averages every round,
//! - `periodic(b)` averages every `b` rounds,
//! - `dynamic(Δ, check_period)` lets each learner check the local condition
//!   `||f_i - r||² ≤ Δ` against the shared reference model `r` (the last
//!   synchronized average) and averages all learners as soon as one condition
//!   is violated.
//!
//! Byte costs follow the delta-transmission scheme: a learner uploads all its
//! coefficients but only the support vectors the coordinator has not stored
//! since the last synchronization; the coordinator sends back all coefficients
//! of the average and only the support vectors the learner is missing.

mod bounds;
mod coordinator;
mod ledger;

pub use bounds::{
    bound_check_continuous, communication_bound, loss_bound, violation_and_quiescence_report,
    CommBoundInput, Inequality, SyncReport,
};
pub use coordinator::{sync_step, CoordinatorState, SyncOutcome};
pub use ledger::{CommLedger, LearnerSizes, RoundRecord, SyncSizes};

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::learners::LinearModel;
use crate::rkhs::{self, KernelModel, Point};

/// Set of support points, compared bitwise.
pub type SupportSet = HashSet<Point>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyncStrategy {
    /// Never communicate.
    None,
    /// Average every round.
    Continuous,
    /// Average whenever `period` divides the round number.
    Periodic { period: u64 },
    /// Check local conditions whenever `check_period` divides the round number
    /// and average everyone on any violation.
    Dynamic { delta: f64, check_period: u64 },
}

impl SyncStrategy {
    pub fn dynamic(delta: f64) -> Self {
        SyncStrategy::Dynamic {
            delta,
            check_period: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SyncStrategy::Periodic { period: 0 } => Err(Error::InvalidParameter(
                "sync period must be at least 1".into(),
            )),
            SyncStrategy::Dynamic { delta, check_period } => {
                if !(delta > 0.0) || delta.is_nan() {
                    return Err(Error::InvalidParameter(format!(
                        "divergence threshold must be positive, got {delta}"
                    )));
                }
                if check_period == 0 {
                    return Err(Error::InvalidParameter(
                        "check period must be at least 1".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            SyncStrategy::None => "none".into(),
            SyncStrategy::Continuous => "continuous".into(),
            SyncStrategy::Periodic { period } => format!("periodic(b={period})"),
            SyncStrategy::Dynamic {
                delta,
                check_period: 1,
            } => format!("dynamic(delta={delta})"),
            SyncStrategy::Dynamic {
                delta,
                check_period,
            } => format!("dynamic(delta={delta},check_period={check_period})"),
        }
    }
}

/// Transmission sizes in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteCostModel {
    /// Bytes per support vector (`B_x`).
    pub bytes_per_sv: u64,
    /// Bytes per coefficient (`B_α`).
    pub bytes_per_coeff: u64,
    /// Bytes per linear weight vector.
    pub bytes_per_linear_model: u64,
}

impl ByteCostModel {
    /// 8-byte floats: `B_x = 8d`, `B_α = 8`, linear model `8d`.
    pub fn for_dim(d: usize) -> Self {
        let d = d as u64;
        ByteCostModel {
            bytes_per_sv: 8 * d,
            bytes_per_coeff: 8,
            bytes_per_linear_model: 8 * d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bytes_per_sv == 0 || self.bytes_per_coeff == 0 || self.bytes_per_linear_model == 0 {
            return Err(Error::InvalidParameter(
                "byte costs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Model types the protocol can synchronize.
pub trait Synchronizable: Clone + Send + Sync {
    /// Squared distance between two models of the same space.
    fn distance_sq(&self, other: &Self) -> Result<f64>;
    /// Average of a nonempty configuration.
    fn average(models: &[Self]) -> Result<Self>;
    /// Support points of the model; empty for finite-dimensional models.
    fn support_set(&self) -> SupportSet;
    fn support_count(&self) -> usize;
    /// Bytes a learner uploads given how many support vectors are new to the coordinator.
    fn upload_size(&self, new_svs: usize, costs: &ByteCostModel) -> u64;
    /// Bytes the coordinator sends for this (averaged) model given how many
    /// support vectors the receiving learner is missing.
    fn download_size(&self, missing_svs: usize, costs: &ByteCostModel) -> u64;
    /// Whether message sizes are independent of the support set.
    fn fixed_size() -> bool;
}

impl Synchronizable for KernelModel {
    fn distance_sq(&self, other: &Self) -> Result<f64> {
        rkhs::distance_sq(self, other)
    }

    fn average(models: &[Self]) -> Result<Self> {
        rkhs::average_models(models)
    }

    fn support_set(&self) -> SupportSet {
        self.supports().iter().map(|s| s.point.clone()).collect()
    }

    fn support_count(&self) -> usize {
        self.len()
    }

    fn upload_size(&self, new_svs: usize, costs: &ByteCostModel) -> u64 {
        self.len() as u64 * costs.bytes_per_coeff + new_svs as u64 * costs.bytes_per_sv
    }

    fn download_size(&self, missing_svs: usize, costs: &ByteCostModel) -> u64 {
        self.len() as u64 * costs.bytes_per_coeff + missing_svs as u64 * costs.bytes_per_sv
    }

    fn fixed_size() -> bool {
        false
    }
}

impl Synchronizable for LinearModel {
    fn distance_sq(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        let mut acc = 0.0;
        for (a, b) in self.weights().iter().zip(other.weights()) {
            let d = a - b;
            acc += d * d;
        }
        Ok(acc)
    }

    fn average(models: &[Self]) -> Result<Self> {
        let first = models.first().ok_or(Error::EmptyConfiguration)?;
        let d = first.dim();
        if let Some(bad) = models.iter().find(|f| f.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.dim(),
            });
        }
        let m = models.len() as f64;
        let weights = (0..d)
            .map(|j| {
                let w0 = first.weights()[j];
                if models.iter().all(|f| f.weights()[j].to_bits() == w0.to_bits()) {
                    w0
                } else {
                    models.iter().map(|f| f.weights()[j]).sum::<f64>() / m
                }
            })
            .collect();
        LinearModel::new(weights)
    }

    fn support_set(&self) -> SupportSet {
        SupportSet::new()
    }

    fn support_count(&self) -> usize {
        0
    }

    fn upload_size(&self, _new_svs: usize, costs: &ByteCostModel) -> u64 {
        costs.bytes_per_linear_model
    }

    fn download_size(&self, _missing_svs: usize, costs: &ByteCostModel) -> u64 {
        costs.bytes_per_linear_model
    }

    fn fixed_size() -> bool {
        true
    }
}

/// `||f - r||² ≤ Δ`.
pub fn local_condition<M: Synchronizable>(f: &M, reference: &M, delta: f64) -> Result<bool> {
    Ok(f.distance_sq(reference)? <= delta)
}

/// Divergence `(1/m) Σ ||f_i - f̄||²` for any synchronizable model type.
pub fn divergence_of<M: Synchronizable>(models: &[M]) -> Result<f64> {
    let avg = M::average(models)?;
    let mut acc = 0.0;
    for f in models {
        acc += f.distance_sq(&avg)?;
    }
    Ok(acc / models.len() as f64)
}

/// Learner → coordinator bytes: `|S_i| B_α + |S_i \ known| B_x`.
pub fn message_size_up(
    learner_supports: &SupportSet,
    known_at_coordinator: &SupportSet,
    costs: &ByteCostModel,
) -> u64 {
    let new = learner_supports
        .iter()
        .filter(|p| !known_at_coordinator.contains(*p))
        .count() as u64;
    learner_supports.len() as u64 * costs.bytes_per_coeff + new * costs.bytes_per_sv
}

/// Coordinator → learner bytes: `|S̄| B_α + |S̄ \ S_i| B_x`.
pub fn message_size_down(
    union_supports: &SupportSet,
    learner_supports: &SupportSet,
    costs: &ByteCostModel,
) -> u64 {
    let missing = union_supports
        .iter()
        .filter(|p| !learner_supports.contains(*p))
        .count() as u64;
    union_supports.len() as u64 * costs.bytes_per_coeff + missing * costs.bytes_per_sv
}
