use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock};

use super::kernel::KernelSpec;
use crate::error::{Error, Result};

/// An input point used as a support vector.
///
/// Equality is bitwise equality of the coordinates; the hash is precomputed
/// from the bit patterns so union and set-difference operations stay cheap.
#[derive(Clone)]
pub struct Point {
    coords: Arc<[f64]>,
    fingerprint: u64,
}

impl Point {
    pub fn new(coords: impl Into<Arc<[f64]>>) -> Result<Self> {
        let coords = coords.into();
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("support vector coordinates"));
        }
        Ok(Self::from_finite(coords))
    }

    pub(crate) fn from_finite(coords: Arc<[f64]>) -> Self {
        // FNV-1a over the raw bit patterns
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for c in coords.iter() {
            for byte in c.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        Point {
            coords,
            fingerprint: h,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint
            && self.coords.len() == other.coords.len()
            && self
                .coords
                .iter()
                .zip(other.coords.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for Point {}

impl Hash for Point {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.fingerprint);
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.coords.iter()).finish()
    }
}

/// Identity tag recording which learner created a support vector and when.
///
/// Orders by round first, then learner, so older support vectors sort first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Birth {
    pub round: u64,
    pub learner: u32,
}

impl Birth {
    pub fn new(learner: u32, round: u64) -> Self {
        Birth { round, learner }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportVector {
    pub point: Point,
    pub birth: Birth,
}

impl SupportVector {
    pub fn new(coords: impl Into<Arc<[f64]>>, birth: Birth) -> Result<Self> {
        Ok(SupportVector {
            point: Point::new(coords)?,
            birth,
        })
    }

    pub fn coords(&self) -> &[f64] {
        self.point.coords()
    }
}

/// A function in the RKHS stored by its support vector expansion
/// `f(·) = Σ α_s k(s, ·)`.
///
/// Entries with bitwise-identical points are merged on construction by summing
/// their coefficients. Zero coefficients are kept unless [`KernelModel::compact`]
/// is called explicitly.
#[derive(Debug, Clone)]
pub struct KernelModel {
    kernel: KernelSpec,
    supports: Vec<SupportVector>,
    coeffs: Vec<f64>,
    norm_sq: OnceLock<f64>,
}

impl PartialEq for KernelModel {
    fn eq(&self, other: &Self) -> bool {
        self.kernel == other.kernel
            && self.supports == other.supports
            && self.coeffs.len() == other.coeffs.len()
            && self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl KernelModel {
    /// The zero function.
    pub fn new(kernel: KernelSpec) -> Self {
        let norm_sq = OnceLock::new();
        let _ = norm_sq.set(0.0);
        KernelModel {
            kernel,
            supports: Vec::new(),
            coeffs: Vec::new(),
            norm_sq,
        }
    }

    pub fn from_parts(
        kernel: KernelSpec,
        supports: Vec<SupportVector>,
        coeffs: Vec<f64>,
    ) -> Result<Self> {
        kernel.validate()?;
        if supports.len() != coeffs.len() {
            return Err(Error::InvalidParameter(format!(
                "{} support vectors but {} coefficients",
                supports.len(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("model coefficients"));
        }
        if let Some(first) = supports.first() {
            let d = first.point.dim();
            if let Some(bad) = supports.iter().find(|s| s.point.dim() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: bad.point.dim(),
                });
            }
        }
        Ok(Self::merged(kernel, supports, coeffs))
    }

    /// Builds a model, merging duplicate points. Inputs must already be valid.
    pub(crate) fn merged(
        kernel: KernelSpec,
        supports: Vec<SupportVector>,
        coeffs: Vec<f64>,
    ) -> Self {
        let mut index: HashMap<Point, usize> = HashMap::with_capacity(supports.len());
        let mut out_s: Vec<SupportVector> = Vec::with_capacity(supports.len());
        let mut out_c: Vec<f64> = Vec::with_capacity(coeffs.len());
        for (sv, c) in supports.into_iter().zip(coeffs) {
            match index.get(&sv.point) {
                Some(&j) => {
                    out_c[j] += c;
                    if sv.birth < out_s[j].birth {
                        out_s[j].birth = sv.birth;
                    }
                }
                None => {
                    index.insert(sv.point.clone(), out_s.len());
                    out_s.push(sv);
                    out_c.push(c);
                }
            }
        }
        Self::from_unique(kernel, out_s, out_c)
    }

    /// Builds a model from parts already known to be duplicate-free.
    pub(crate) fn from_unique(
        kernel: KernelSpec,
        supports: Vec<SupportVector>,
        coeffs: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(supports.len(), coeffs.len());
        KernelModel {
            kernel,
            supports,
            coeffs,
            norm_sq: OnceLock::new(),
        }
    }

    pub(crate) fn norm_sq_if_cached(&self) -> Option<f64> {
        self.norm_sq.get().copied()
    }

    pub(crate) fn set_norm_sq_hint(&self, value: f64) {
        let _ = self.norm_sq.set(value.max(0.0));
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn supports(&self) -> &[SupportVector] {
        &self.supports
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.supports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    /// Dimension of the support vectors, `None` for an empty model.
    pub fn dim(&self) -> Option<usize> {
        self.supports.first().map(|s| s.point.dim())
    }

    pub fn position(&self, point: &Point) -> Option<usize> {
        self.supports.iter().position(|s| &s.point == point)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SupportVector, f64)> {
        self.supports.iter().zip(self.coeffs.iter().copied())
    }

    pub fn into_parts(self) -> (KernelSpec, Vec<SupportVector>, Vec<f64>) {
        (self.kernel, self.supports, self.coeffs)
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        match self.dim() {
            Some(d) if d != x.len() => Err(Error::DimensionMismatch {
                expected: d,
                actual: x.len(),
            }),
            _ => Ok(()),
        }
    }

    /// `f(x) = Σ α_s k(s, x)` summed in stored support order.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (sv, a) in self.supports.iter().zip(&self.coeffs) {
            acc += a * self.kernel.eval_unchecked(sv.coords(), x);
        }
        acc
    }

    /// `<f, f>`, cached after the first evaluation.
    pub fn norm_sq(&self) -> f64 {
        *self
            .norm_sq
            .get_or_init(|| quadratic_form(&self.kernel, &self.supports, &self.coeffs))
    }

    /// Returns `s · f`.
    pub fn scaled(&self, s: f64) -> KernelModel {
        let coeffs = self.coeffs.iter().map(|a| a * s).collect();
        let out = Self::from_unique(self.kernel, self.supports.clone(), coeffs);
        if let Some(n) = self.norm_sq.get() {
            out.set_norm_sq_hint(s * s * n);
        }
        out
    }

    /// Drops entries whose coefficient is exactly zero. Never called implicitly.
    pub fn compact(&self) -> KernelModel {
        let (supports, coeffs) = self
            .iter()
            .filter(|(_, a)| *a != 0.0)
            .map(|(s, a)| (s.clone(), a))
            .unzip();
        Self::from_unique(self.kernel, supports, coeffs)
    }

    /// Adds `coeff · k(sv, ·)`, merging with an existing identical point.
    /// Returns the new model and whether the support set grew.
    pub fn with_term(&self, sv: SupportVector, coeff: f64) -> Result<(KernelModel, bool)> {
        self.check_dim(sv.coords())?;
        if !coeff.is_finite() {
            return Err(Error::NonFinite("model coefficients"));
        }
        let mut supports = self.supports.clone();
        let mut coeffs = self.coeffs.clone();
        let grew = match self.position(&sv.point) {
            Some(j) => {
                coeffs[j] += coeff;
                if sv.birth < supports[j].birth {
                    supports[j].birth = sv.birth;
                }
                false
            }
            None => {
                supports.push(sv);
                coeffs.push(coeff);
                true
            }
        };
        Ok((Self::from_unique(self.kernel, supports, coeffs), grew))
    }
}

/// `Σ_i Σ_j c_i c_j k(s_i, s_j)` using the symmetric half of the Gram matrix.
pub(crate) fn quadratic_form(kernel: &KernelSpec, supports: &[SupportVector], coeffs: &[f64]) -> f64 {
    let pts: Vec<&[f64]> = supports.iter().map(|s| s.coords()).collect();
    quadratic_form_points(kernel, &pts, coeffs)
}

pub(crate) fn quadratic_form_points(kernel: &KernelSpec, pts: &[&[f64]], coeffs: &[f64]) -> f64 {
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..pts.len() {
        let ci = coeffs[i];
        diag += ci * ci * kernel.eval_unchecked(pts[i], pts[i]);
        let mut row = 0.0;
        for j in (i + 1)..pts.len() {
            row += coeffs[j] * kernel.eval_unchecked(pts[i], pts[j]);
        }
        off += ci * row;
    }
    diag + 2.0 * off
}

/// The tuple of local models held by the learners at one point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfiguration {
    models: Vec<KernelModel>,
}

impl ModelConfiguration {
    pub fn new(models: Vec<KernelModel>) -> Result<Self> {
        check_configuration(&models)?;
        Ok(ModelConfiguration { models })
    }

    pub fn models(&self) -> &[KernelModel] {
        &self.models
    }

    pub fn into_models(self) -> Vec<KernelModel> {
        self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn average(&self) -> KernelModel {
        average_unchecked(&self.models)
    }

    pub fn divergence(&self) -> f64 {
        divergence_unchecked(&self.models)
    }
}

fn check_configuration(models: &[KernelModel]) -> Result<()> {
    let first = models.first().ok_or(Error::EmptyConfiguration)?;
    let mut dim = first.dim();
    for m in &models[1..] {
        if m.kernel != first.kernel {
            return Err(Error::KernelMismatch(first.kernel, m.kernel));
        }
        match (dim, m.dim()) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::DimensionMismatch {
                    expected: a,
                    actual: b,
                })
            }
            (None, Some(b)) => dim = Some(b),
            _ => {}
        }
    }
    Ok(())
}

fn same_kernel(f: &KernelModel, g: &KernelModel) -> Result<()> {
    if f.kernel != g.kernel {
        return Err(Error::KernelMismatch(f.kernel, g.kernel));
    }
    if let (Some(a), Some(b)) = (f.dim(), g.dim()) {
        if a != b {
            return Err(Error::DimensionMismatch {
                expected: a,
                actual: b,
            });
        }
    }
    Ok(())
}

pub fn predict(f: &KernelModel, x: &[f64]) -> Result<f64> {
    f.predict(x)
}

/// `<f, g> = Σ_i Σ_j α_i β_j k(x_i, y_j)`.
pub fn inner_product(f: &KernelModel, g: &KernelModel) -> Result<f64> {
    same_kernel(f, g)?;
    Ok(inner_product_unchecked(f, g))
}

pub(crate) fn inner_product_unchecked(f: &KernelModel, g: &KernelModel) -> f64 {
    let mut acc = 0.0;
    for (sf, a) in f.iter() {
        let mut row = 0.0;
        for (sg, b) in g.iter() {
            row += b * f.kernel.eval_unchecked(sf.coords(), sg.coords());
        }
        acc += a * row;
    }
    acc
}

/// `||f - g||²`, clamped to be nonnegative.
///
/// Evaluated as the quadratic form of the merged difference expansion. Points
/// shared by both models with bitwise-equal coefficients cancel exactly and are
/// skipped, so comparing a model against a slightly perturbed copy of itself
/// only touches the perturbed terms.
pub fn distance_sq(f: &KernelModel, g: &KernelModel) -> Result<f64> {
    same_kernel(f, g)?;
    Ok(distance_sq_unchecked(f, g))
}

pub(crate) fn distance_sq_unchecked(f: &KernelModel, g: &KernelModel) -> f64 {
    let (pts, coeffs) = difference_terms(f, g);
    quadratic_form_points(&f.kernel, &pts, &coeffs).max(0.0)
}

/// Nonzero terms of `f - g` over the union of support points, in first-seen order.
pub(crate) fn difference_terms<'a>(
    f: &'a KernelModel,
    g: &'a KernelModel,
) -> (Vec<&'a [f64]>, Vec<f64>) {
    let mut index: HashMap<&Point, usize> = HashMap::with_capacity(f.len() + g.len());
    let mut pts: Vec<&[f64]> = Vec::with_capacity(f.len() + g.len());
    let mut coeffs: Vec<f64> = Vec::with_capacity(f.len() + g.len());
    for (sv, a) in f.iter() {
        index.insert(&sv.point, pts.len());
        pts.push(sv.coords());
        coeffs.push(a);
    }
    for (sv, b) in g.iter() {
        match index.get(&sv.point) {
            Some(&j) => coeffs[j] -= b,
            None => {
                pts.push(sv.coords());
                coeffs.push(-b);
            }
        }
    }
    let mut out_p = Vec::with_capacity(pts.len());
    let mut out_c = Vec::with_capacity(pts.len());
    for (p, c) in pts.into_iter().zip(coeffs) {
        if c != 0.0 {
            out_p.push(p);
            out_c.push(c);
        }
    }
    (out_p, out_c)
}

/// Average of a configuration on the union support set, with each coefficient
/// the mean of the augmented (zero-filled) coefficients.
pub fn average(config: &ModelConfiguration) -> KernelModel {
    config.average()
}

/// Like [`average`] but on a plain slice of models.
pub fn average_models(models: &[KernelModel]) -> Result<KernelModel> {
    check_configuration(models)?;
    Ok(average_unchecked(models))
}

struct UnionEntry {
    sum: f64,
    first: f64,
    present: usize,
    uniform: bool,
}

pub(crate) fn average_unchecked(models: &[KernelModel]) -> KernelModel {
    let m = models.len();
    let kernel = models[0].kernel;
    let cap = models.iter().map(|f| f.len()).max().unwrap_or(0);
    let mut index: HashMap<&Point, usize> = HashMap::with_capacity(cap * 2);
    let mut supports: Vec<SupportVector> = Vec::with_capacity(cap);
    let mut entries: Vec<UnionEntry> = Vec::with_capacity(cap);
    for f in models {
        for (sv, a) in f.iter() {
            match index.get(&sv.point) {
                Some(&j) => {
                    let e = &mut entries[j];
                    e.sum += a;
                    e.present += 1;
                    e.uniform &= a.to_bits() == e.first.to_bits();
                    if sv.birth < supports[j].birth {
                        supports[j].birth = sv.birth;
                    }
                }
                None => {
                    index.insert(&sv.point, supports.len());
                    supports.push(sv.clone());
                    entries.push(UnionEntry {
                        sum: a,
                        first: a,
                        present: 1,
                        uniform: true,
                    });
                }
            }
        }
    }
    // A coefficient shared bitwise by every learner averages to itself exactly.
    let coeffs = entries
        .iter()
        .map(|e| {
            if e.present == m && e.uniform {
                e.first
            } else {
                e.sum / m as f64
            }
        })
        .collect();
    KernelModel::from_unique(kernel, supports, coeffs)
}

/// Model divergence: mean squared distance of the local models to their average.
pub fn divergence(config: &ModelConfiguration) -> f64 {
    config.divergence()
}

pub(crate) fn divergence_unchecked(models: &[KernelModel]) -> f64 {
    let avg = average_unchecked(models);
    let mut acc = 0.0;
    for f in models {
        acc += distance_sq_unchecked(f, &avg);
    }
    acc / models.len() as f64
}
