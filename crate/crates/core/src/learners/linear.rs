use super::{LearnerParams, LossSpec, Predict, UpdateOutcome};
use crate::error::{Error, Result};
use crate::rkhs::dot;

/// A linear model `f(x) = <w, x>`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        LinearModel {
            weights: vec![0.0; dim],
        }
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("linear weights"));
        }
        Ok(LinearModel { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

impl Predict for LinearModel {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(dot(&self.weights, x))
    }
}

/// `w' = (1 - ηλ) w - η g x`, with `g` the loss subgradient at `<w, x>`.
pub fn linear_sgd_update(
    f: &LinearModel,
    x: &[f64],
    y: f64,
    params: &LearnerParams,
    loss: LossSpec,
) -> Result<UpdateOutcome<LinearModel>> {
    f.check_dim(x)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input"));
    }
    let p = dot(&f.weights, x);
    let loss_value = loss.value(p, y)?;
    let g = loss.subgradient(p, y);
    let s = params.shrink();
    let step = params.learn_rate * g;

    let weights: Vec<f64> = f
        .weights
        .iter()
        .zip(x)
        .map(|(w, xi)| s * w - step * xi)
        .collect();
    let mut drift_sq = 0.0;
    for (a, b) in weights.iter().zip(&f.weights) {
        let d = a - b;
        drift_sq += d * d;
    }
    Ok(UpdateOutcome {
        model: LinearModel { weights },
        prediction: p,
        loss: loss_value,
        drift: drift_sq.sqrt(),
        added_sv: false,
        compression_error: 0.0,
    })
}
