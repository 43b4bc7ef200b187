//! Online learners: loss functions, SGD update rules for kernel and linear
//! models, and model compression.
//!
//! The kernel update is the NORMA-style step
//! `f' = (1 - ηλ) f - η ∂ℓ(f(x), y) k(x, ·)`, optionally followed by a
//! compression step that keeps the model size bounded. Every update reports the
//! RKHS norm of the change it made (`drift`) and the error introduced by
//! compression, which the protocol bound checks consume.

mod compression;
mod kernel_sgd;
mod linear;

pub use compression::{project_newest, project_onto, truncate, Projection, PROJECTION_JITTER};
pub use kernel_sgd::{kernel_sgd_update, update_with_compression};
pub use linear::{linear_sgd_update, LinearModel};

use crate::error::{Error, Result};
use crate::rkhs::KernelModel;

/// Anything that maps an input to a real-valued score.
pub trait Predict {
    fn predict(&self, x: &[f64]) -> Result<f64>;
}

impl Predict for KernelModel {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        KernelModel::predict(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSpec {
    /// `max(0, 1 - y f(x))` for labels in {-1, +1}.
    Hinge,
    /// `(f(x) - y)²` for real labels.
    Squared,
}

impl LossSpec {
    pub fn check_label(&self, y: f64) -> Result<()> {
        match self {
            LossSpec::Hinge if y != 1.0 && y != -1.0 => Err(Error::InvalidLabel(y, "hinge")),
            LossSpec::Squared if !y.is_finite() => Err(Error::InvalidLabel(y, "squared")),
            _ => Ok(()),
        }
    }

    /// Loss of a prediction `p` against label `y`.
    pub fn value(&self, p: f64, y: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(match self {
            LossSpec::Hinge => (1.0 - y * p).max(0.0),
            LossSpec::Squared => (p - y) * (p - y),
        })
    }

    /// Derivative of the loss with respect to the prediction. At the hinge
    /// kink (`y p = 1`) this is 0, so a zero loss never moves the model.
    pub fn subgradient(&self, p: f64, y: f64) -> f64 {
        match self {
            LossSpec::Hinge => {
                if y * p < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            LossSpec::Squared => 2.0 * (p - y),
        }
    }
}

/// `ℓ(f, x, y)`.
pub fn loss_eval<M: Predict>(loss: LossSpec, f: &M, x: &[f64], y: f64) -> Result<f64> {
    loss.check_label(y)?;
    let p = f.predict(x)?;
    loss.value(p, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Compression {
    None,
    /// Keep at most `budget` support vectors, dropping the oldest.
    Truncate { budget: usize },
    /// Fold a new support vector into the span of the others when the fold
    /// moves the model by at most `tolerance`.
    Project { tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerParams {
    pub learn_rate: f64,
    pub reg: f64,
    pub compression: Compression,
}

impl LearnerParams {
    pub fn new(learn_rate: f64, reg: f64, compression: Compression) -> Result<Self> {
        let p = LearnerParams {
            learn_rate,
            reg,
            compression,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learn_rate.is_finite() && self.learn_rate >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learn_rate must be a nonnegative finite number, got {}",
                self.learn_rate
            )));
        }
        if !(self.reg.is_finite() && self.reg >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reg must be nonnegative, got {}",
                self.reg
            )));
        }
        if self.learn_rate * self.reg > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "learn_rate * reg must not exceed 1, got {}",
                self.learn_rate * self.reg
            )));
        }
        match self.compression {
            Compression::Truncate { budget: 0 } => Err(Error::InvalidParameter(
                "truncation budget must be at least 1".into(),
            )),
            Compression::Project { tolerance } if !(tolerance.is_finite() && tolerance > 0.0) => {
                Err(Error::InvalidParameter(format!(
                    "projection tolerance must be positive, got {tolerance}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Per-step coefficient decay factor `1 - ηλ`.
    pub fn shrink(&self) -> f64 {
        1.0 - self.learn_rate * self.reg
    }
}

/// Result of one learner update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome<M> {
    pub model: M,
    /// Prediction of the model before the update.
    pub prediction: f64,
    /// Loss of the model before the update.
    pub loss: f64,
    /// Norm of the change `||f_before - f_after||`.
    pub drift: f64,
    /// Whether the update added a new support vector (before compression).
    pub added_sv: bool,
    /// Norm of the change introduced by the compression step.
    pub compression_error: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_values() {
        assert_eq!(LossSpec::Hinge.value(2.0, 1.0).unwrap(), 0.0);
        assert_eq!(LossSpec::Hinge.value(0.0, 1.0).unwrap(), 1.0);
        assert_eq!(LossSpec::Hinge.value(0.5, -1.0).unwrap(), 1.5);
        assert_eq!(LossSpec::Hinge.subgradient(1.0, 1.0), 0.0);
        assert_eq!(LossSpec::Hinge.subgradient(0.99, 1.0), -1.0);
    }

    #[test]
    fn squared_values() {
        assert_eq!(LossSpec::Squared.value(0.5, 1.0).unwrap(), 0.25);
        assert_eq!(LossSpec::Squared.subgradient(0.5, 1.0), -1.0);
    }

    #[test]
    fn hinge_rejects_non_binary_labels() {
        assert!(matches!(
            LossSpec::Hinge.value(0.0, 0.5),
            Err(Error::InvalidLabel(..))
        ));
        assert!(LossSpec::Squared.value(0.0, 0.5).is_ok());
    }

    #[test]
    fn loss_eval_on_empty_model() {
        let f = KernelModel::new(crate::rkhs::KernelSpec::gaussian(1.0).unwrap());
        assert_eq!(loss_eval(LossSpec::Hinge, &f, &[0.3, 0.1], 1.0).unwrap(), 1.0);
    }

    #[test]
    fn params_validation() {
        assert!(LearnerParams::new(0.1, 0.0, Compression::None).is_ok());
        assert!(LearnerParams::new(0.0, 0.0, Compression::None).is_ok());
        assert!(LearnerParams::new(-0.1, 0.0, Compression::None).is_err());
        assert!(LearnerParams::new(0.1, -1.0, Compression::None).is_err());
        assert!(LearnerParams::new(2.0, 1.0, Compression::None).is_err());
        assert!(LearnerParams::new(0.1, 0.0, Compression::Truncate { budget: 0 }).is_err());
        assert!(LearnerParams::new(0.1, 0.0, Compression::Project { tolerance: 0.0 }).is_err());
    }
}
