use super::compression::{project_newest, truncate};
use super::{Compression, LearnerParams, LossSpec, UpdateOutcome};
use crate::error::{Error, Result};
use crate::rkhs::{distance_sq_unchecked, Birth, KernelModel, SupportVector};

/// One stochastic gradient step on a kernel model, without compression.
///
/// Scales all coefficients by `1 - ηλ`, then appends `x` with coefficient
/// `-η g` when the loss subgradient `g` at `f(x)` is nonzero. The new support
/// vector carries `birth` as its identity tag.
pub fn kernel_sgd_update(
    f: &KernelModel,
    x: &[f64],
    y: f64,
    birth: Birth,
    params: &LearnerParams,
    loss: LossSpec,
) -> Result<UpdateOutcome<KernelModel>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input"));
    }
    f.check_dim(x)?;
    let p = f.predict_unchecked(x);
    let loss_value = loss.value(p, y)?;
    let g = loss.subgradient(p, y);
    let s = params.shrink();
    let c = -params.learn_rate * g;

    if s == 1.0 && c == 0.0 {
        return Ok(UpdateOutcome {
            model: f.clone(),
            prediction: p,
            loss: loss_value,
            drift: 0.0,
            added_sv: false,
            compression_error: 0.0,
        });
    }

    // ||f' - f||² = (s-1)²||f||² + 2(s-1)c f(x) + c² k(x,x)
    let kxx = f.kernel().eval_unchecked(x, x);
    let (norm_f, scaled) = if s == 1.0 {
        (None, f.clone())
    } else {
        let n = f.norm_sq();
        (Some(n), f.scaled(s))
    };
    let (model, added_sv) = if c != 0.0 {
        let sv = SupportVector::new(x.to_vec(), birth)?;
        scaled.with_term(sv, c)?
    } else {
        (scaled, false)
    };

    let sm1 = s - 1.0;
    let nf = norm_f.unwrap_or(0.0);
    let drift_sq = sm1 * sm1 * nf + 2.0 * sm1 * c * p + c * c * kxx;
    if let Some(n) = norm_f.or_else(|| f.norm_sq_if_cached()) {
        model.set_norm_sq_hint(s * s * n + 2.0 * s * c * p + c * c * kxx);
    }

    Ok(UpdateOutcome {
        model,
        prediction: p,
        loss: loss_value,
        drift: drift_sq.max(0.0).sqrt(),
        added_sv,
        compression_error: 0.0,
    })
}

/// SGD step followed by the configured compression.
///
/// Compression only runs when the SGD step changed the model: truncation after
/// any active step, projection only when a support vector was added (it targets
/// the newest one). A passive step therefore leaves the model untouched.
pub fn update_with_compression(
    f: &KernelModel,
    x: &[f64],
    y: f64,
    birth: Birth,
    params: &LearnerParams,
    loss: LossSpec,
) -> Result<UpdateOutcome<KernelModel>> {
    let step = kernel_sgd_update(f, x, y, birth, params, loss)?;
    let active = step.drift > 0.0 || step.added_sv;
    let (compressed, eps) = match params.compression {
        Compression::None => return Ok(step),
        Compression::Truncate { budget } if active => truncate(&step.model, budget),
        Compression::Project { tolerance } if step.added_sv => {
            project_newest(&step.model, tolerance)
        }
        _ => return Ok(step),
    };
    if compressed.len() == step.model.len() && eps == 0.0 && compressed == step.model {
        return Ok(step);
    }
    let drift = distance_sq_unchecked(f, &compressed).sqrt();
    Ok(UpdateOutcome {
        model: compressed,
        prediction: step.prediction,
        loss: step.loss,
        drift,
        added_sv: step.added_sv,
        compression_error: eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rkhs::{distance_sq, KernelSpec};

    fn params(lr: f64, reg: f64) -> LearnerParams {
        LearnerParams::new(lr, reg, Compression::None).unwrap()
    }

    fn gauss() -> KernelSpec {
        KernelSpec::gaussian(1.0).unwrap()
    }

    #[test]
    fn passive_on_zero_loss() {
        let f = KernelModel::new(gauss());
        let (f, _) = f
            .with_term(SupportVector::new(vec![0.0, 0.0], Birth::new(0, 1)).unwrap(), 3.0)
            .unwrap();
        let out = kernel_sgd_update(&f, &[0.0, 0.0], 1.0, Birth::new(0, 2), &params(0.5, 0.0), LossSpec::Hinge)
            .unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.drift, 0.0);
        assert!(!out.added_sv);
        assert_eq!(out.model, f);
    }

    #[test]
    fn first_step_from_empty() {
        let f = KernelModel::new(gauss());
        let out = kernel_sgd_update(&f, &[0.2, 0.4], 1.0, Birth::new(0, 1), &params(0.5, 0.0), LossSpec::Hinge)
            .unwrap();
        assert_eq!(out.loss, 1.0);
        assert!(out.added_sv);
        assert_eq!(out.model.coeffs(), &[0.5]);
        assert_eq!(out.drift, 0.5);
    }

    #[test]
    fn zero_learn_rate_keeps_model_empty() {
        let f = KernelModel::new(gauss());
        let out = kernel_sgd_update(&f, &[0.2, 0.4], 1.0, Birth::new(0, 1), &params(0.0, 0.0), LossSpec::Hinge)
            .unwrap();
        assert!(out.model.is_empty());
        assert!(!out.added_sv);
        assert_eq!(out.drift, 0.0);
    }

    #[test]
    fn regularized_drift_matches_distance() {
        let mut f = KernelModel::new(gauss());
        let p = params(0.3, 0.2);
        let xs = [[0.1, 0.2], [-0.4, 0.9], [1.2, -0.3], [0.0, 0.5], [0.7, 0.7]];
        for (t, x) in xs.iter().enumerate() {
            let y = if t % 2 == 0 { 1.0 } else { -1.0 };
            let out = kernel_sgd_update(&f, x, y, Birth::new(0, t as u64), &p, LossSpec::Squared).unwrap();
            let exact = distance_sq(&f, &out.model).unwrap().sqrt();
            assert!((out.drift - exact).abs() < 1e-10, "{} vs {}", out.drift, exact);
            f = out.model;
        }
    }

    #[test]
    fn duplicate_input_merges_without_adding() {
        let f = KernelModel::new(gauss());
        let p = params(0.2, 0.0);
        let a = kernel_sgd_update(&f, &[0.5, 0.5], 1.0, Birth::new(0, 1), &p, LossSpec::Hinge).unwrap();
        let b = kernel_sgd_update(&a.model, &[0.5, 0.5], 1.0, Birth::new(0, 2), &p, LossSpec::Hinge).unwrap();
        assert!(!b.added_sv);
        assert_eq!(b.model.len(), 1);
        assert!((b.model.coeffs()[0] - 0.4).abs() < 1e-15);
        assert_eq!(b.model.supports()[0].birth, Birth::new(0, 1));
    }

    #[test]
    fn rejects_non_finite_input() {
        let f = KernelModel::new(gauss());
        assert!(kernel_sgd_update(&f, &[f64::NAN], 1.0, Birth::default(), &params(0.1, 0.0), LossSpec::Hinge).is_err());
    }

    #[test]
    fn none_compression_is_plain_sgd() {
        let f = KernelModel::new(gauss());
        let p = params(0.4, 0.1);
        let a = kernel_sgd_update(&f, &[0.5, 0.1], -1.0, Birth::new(0, 1), &p, LossSpec::Hinge).unwrap();
        let b = update_with_compression(&f, &[0.5, 0.1], -1.0, Birth::new(0, 1), &p, LossSpec::Hinge).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_skipped_on_passive_step() {
        let p = LearnerParams::new(0.5, 0.0, Compression::Truncate { budget: 2 }).unwrap();
        let f = KernelModel::from_parts(
            gauss(),
            (0..4)
                .map(|i| SupportVector::new(vec![i as f64 * 3.0], Birth::new(0, i)).unwrap())
                .collect(),
            vec![2.0; 4],
        )
        .unwrap();
        // margin 2 at the first support vector: zero hinge loss
        let out = update_with_compression(&f, &[0.0], 1.0, Birth::new(0, 9), &p, LossSpec::Hinge).unwrap();
        assert_eq!(out.model, f);
        assert_eq!(out.compression_error, 0.0);
    }
}
