use crate::error::{Error, Result};

/// A positive semi-definite kernel function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// k(x, x') = exp(-||x - x'||² / (2σ²))
    Gaussian { bandwidth: f64 },
    /// k(x, x') = <x, x'>
    Linear,
    /// k(x, x') = (<x, x'> + offset)^degree
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        let spec = KernelSpec::Gaussian { bandwidth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        let spec = KernelSpec::Polynomial { degree, offset };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                if !(bandwidth.is_finite() && bandwidth > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gaussian bandwidth must be positive, got {bandwidth}"
                    )));
                }
            }
            KernelSpec::Linear => {}
            KernelSpec::Polynomial { degree, offset } => {
                if degree == 0 {
                    return Err(Error::InvalidParameter(
                        "polynomial degree must be at least 1".into(),
                    ));
                }
                if !(offset.is_finite() && offset >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "polynomial offset must be nonnegative, got {offset}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Evaluates the kernel, checking dimensions.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Evaluates the kernel on points of equal dimension.
    ///
    /// Both the squared distance and the dot product are accumulated left to
    /// right with commutative per-coordinate terms, so swapping the arguments
    /// yields a bitwise-identical result.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                let mut sq = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let d = a - b;
                    sq += d * d;
                }
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Polynomial { degree, offset } => {
                (dot(x, y) + offset).powi(degree as i32)
            }
        }
    }
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

/// Kernel evaluation as a free function.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.eval(x, y)
}
