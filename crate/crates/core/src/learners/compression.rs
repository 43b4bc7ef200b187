use crate::rkhs::{inner_product_unchecked, KernelModel, SupportVector};

/// Diagonal jitter added to the Gram matrix before the projection solve.
pub const PROJECTION_JITTER: f64 = 1e-10;

/// Keeps the `budget` youngest support vectors.
///
/// Support vectors are ranked by birth tag (ties by stored position) and the
/// oldest are dropped. Returns the truncated model and the RKHS norm of the
/// dropped component. Models within budget are returned unchanged with error 0.
pub fn truncate(f: &KernelModel, budget: usize) -> (KernelModel, f64) {
    let n = f.len();
    if n <= budget {
        return (f.clone(), 0.0);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (f.supports()[i].birth, i));
    let mut drop = vec![false; n];
    for &i in &order[..n - budget] {
        drop[i] = true;
    }

    let mut keep_s = Vec::with_capacity(budget);
    let mut keep_c = Vec::with_capacity(budget);
    let mut drop_s = Vec::with_capacity(n - budget);
    let mut drop_c = Vec::with_capacity(n - budget);
    for (i, (sv, a)) in f.iter().enumerate() {
        if drop[i] {
            drop_s.push(sv.clone());
            drop_c.push(a);
        } else {
            keep_s.push(sv.clone());
            keep_c.push(a);
        }
    }
    let dropped = KernelModel::from_unique(*f.kernel(), drop_s, drop_c);
    let eps = inner_product_unchecked(&dropped, &dropped).max(0.0).sqrt();
    (KernelModel::from_unique(*f.kernel(), keep_s, keep_c), eps)
}

/// Outcome of projecting one weighted support vector onto a basis model.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Coefficients to add to the basis support vectors.
    pub beta: Vec<f64>,
    /// `||α k(s,·) - α Σ β_j k(b_j,·)||`, the error of replacing the term.
    pub error: f64,
}

/// Projects `alpha · k(point, ·)` onto the span of the basis support vectors.
///
/// Solves `(K_B + jitter I) β = k_B(s)` and reports the exact RKHS norm of the
/// residual, scaled by `|alpha|`. A point bitwise equal to a basis point is its
/// own projection with error 0. Returns `None` for an empty basis or when the
/// Gram system cannot be factorized.
pub fn project_onto(basis: &KernelModel, point: &SupportVector, alpha: f64) -> Option<Projection> {
    let n = basis.len();
    if n == 0 {
        return None;
    }
    if let Some(j) = basis.position(&point.point) {
        let mut beta = vec![0.0; n];
        beta[j] = 1.0;
        return Some(Projection { beta, error: 0.0 });
    }
    let kernel = basis.kernel();
    let pts: Vec<&[f64]> = basis.supports().iter().map(|s| s.coords()).collect();
    let s = point.coords();

    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval_unchecked(pts[i], pts[j]);
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    let rhs: Vec<f64> = pts.iter().map(|p| kernel.eval_unchecked(p, s)).collect();

    let mut jittered = gram.clone();
    for i in 0..n {
        jittered[i * n + i] += PROJECTION_JITTER;
    }
    let beta = cholesky_solve(&mut jittered, n, &rhs)?;

    // ||k(s,·) - Σ β_j k(b_j,·)||² = k(s,s) - 2 βᵀk_B + βᵀ K_B β
    let kss = kernel.eval_unchecked(s, s);
    let mut cross = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        cross += beta[i] * rhs[i];
        let mut row = 0.0;
        for j in 0..n {
            row += gram[i * n + j] * beta[j];
        }
        quad += beta[i] * row;
    }
    let residual_sq = (kss - 2.0 * cross + quad).max(0.0);
    Some(Projection {
        beta,
        error: alpha.abs() * residual_sq.sqrt(),
    })
}

/// Folds the newest support vector into the span of the others when the
/// resulting model change is at most `tolerance`.
///
/// The newest support vector is the one with the latest birth tag (ties go to
/// the later stored position). Returns the possibly folded model and the error
/// of the fold, which is 0 when nothing was folded.
pub fn project_newest(f: &KernelModel, tolerance: f64) -> (KernelModel, f64) {
    if f.len() < 2 {
        return (f.clone(), 0.0);
    }
    let newest = (0..f.len())
        .max_by_key(|&i| (f.supports()[i].birth, i))
        .expect("nonempty");
    let mut basis_s = Vec::with_capacity(f.len() - 1);
    let mut basis_c = Vec::with_capacity(f.len() - 1);
    for (i, (sv, a)) in f.iter().enumerate() {
        if i != newest {
            basis_s.push(sv.clone());
            basis_c.push(a);
        }
    }
    let basis = KernelModel::from_unique(*f.kernel(), basis_s, basis_c);
    let alpha = f.coeffs()[newest];
    let candidate = &f.supports()[newest];
    match project_onto(&basis, candidate, alpha) {
        Some(proj) if proj.error <= tolerance => {
            let (kernel, supports, mut coeffs) = basis.into_parts();
            for (c, b) in coeffs.iter_mut().zip(&proj.beta) {
                *c += alpha * b;
            }
            (KernelModel::from_unique(kernel, supports, coeffs), proj.error)
        }
        _ => (f.clone(), 0.0),
    }
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, n×n),
/// overwriting `A` with its Cholesky factor. Returns `None` if `A` is not
/// numerically positive definite.
fn cholesky_solve(a: &mut [f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    // L y = b
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * y[k];
        }
        y[i] = v / a[i * n + i];
    }
    // Lᵀ x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= a[k * n + i] * x[k];
        }
        x[i] = v / a[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rkhs::{distance_sq, Birth, KernelSpec};

    fn gauss() -> KernelSpec {
        KernelSpec::gaussian(1.0).unwrap()
    }

    fn sv(x: f64, round: u64) -> SupportVector {
        SupportVector::new(vec![x, 0.0], Birth::new(0, round)).unwrap()
    }

    #[test]
    fn within_budget_is_unchanged() {
        let f = KernelModel::from_parts(gauss(), vec![sv(0.0, 1), sv(1.0, 2)], vec![1.0, 2.0]).unwrap();
        let (g, eps) = truncate(&f, 2);
        assert_eq!(g, f);
        assert_eq!(eps, 0.0);
    }

    #[test]
    fn drops_the_oldest() {
        // stored order differs from birth order
        let f = KernelModel::from_parts(gauss(), vec![sv(0.0, 7), sv(1.0, 3)], vec![1.0, -2.5]).unwrap();
        let (g, eps) = truncate(&f, 1);
        assert_eq!(g.len(), 1);
        assert_eq!(g.supports()[0].birth.round, 7);
        assert!((eps - 2.5).abs() < 1e-15);
    }

    #[test]
    fn cholesky_small_system() {
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&mut a, 2, &[2.0, 1.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15);
        assert!(x[1].abs() < 1e-15);
        let mut singular = vec![1.0, 1.0, 1.0, 1.0];
        assert!(cholesky_solve(&mut singular, 2, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn duplicate_point_projects_exactly() {
        let basis = KernelModel::from_parts(gauss(), vec![sv(0.0, 1), sv(1.0, 2)], vec![1.0, 1.0]).unwrap();
        let proj = project_onto(&basis, &sv(1.0, 9), 0.7).unwrap();
        assert_eq!(proj.error, 0.0);
        assert_eq!(proj.beta, vec![0.0, 1.0]);
    }

    #[test]
    fn empty_basis_is_not_projected() {
        let basis = KernelModel::new(gauss());
        assert!(project_onto(&basis, &sv(1.0, 9), 0.7).is_none());
        let f = KernelModel::from_parts(gauss(), vec![sv(0.0, 1)], vec![1.0]).unwrap();
        let (g, eps) = project_newest(&f, 10.0);
        assert_eq!(g, f);
        assert_eq!(eps, 0.0);
    }

    #[test]
    fn nearby_point_folds_with_exact_error() {
        let f = KernelModel::from_parts(
            gauss(),
            vec![sv(0.0, 1), sv(0.5, 2), sv(0.51, 3)],
            vec![1.0, -0.5, 0.3],
        )
        .unwrap();
        let (g, eps) = project_newest(&f, 0.1);
        assert_eq!(g.len(), 2);
        assert!(eps > 0.0);
        let true_dist = distance_sq(&f, &g).unwrap().sqrt();
        assert!((true_dist - eps).abs() < 1e-8);
    }

    #[test]
    fn far_point_is_kept() {
        let f = KernelModel::from_parts(gauss(), vec![sv(0.0, 1), sv(10.0, 2)], vec![1.0, 1.0]).unwrap();
        let (g, eps) = project_newest(&f, 0.1);
        assert_eq!(g, f);
        assert_eq!(eps, 0.0);
    }
}
