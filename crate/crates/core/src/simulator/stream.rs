use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Rows used to fit the min-max normalization of csv features.
pub const NORMALIZATION_ROWS: usize = 200;

/// Rejection sampling attempts for the hyperplane margin.
const MAX_MARGIN_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    /// Row `(t-1)·m + i` goes to learner `i` in round `t`.
    RoundRobin,
    /// Learner `i` reads the `i`-th of `m` equal consecutive blocks.
    Contiguous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSpec {
    pub path: PathBuf,
    /// Zero-based column holding the label.
    pub label_column: usize,
    pub partition: Partition,
    pub normalize: bool,
    pub has_header: bool,
    /// Label value mapped to +1.
    pub positive_label: String,
    /// Label value mapped to -1; any other value when `None`.
    pub negative_label: Option<String>,
}

/// Labeled rows of a csv file, features already normalized if requested.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub dim: usize,
    pub rows: Vec<(Vec<f64>, f64)>,
}

impl CsvData {
    pub fn load(spec: &CsvSpec) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(spec.has_header)
            .trim(csv::Trim::All)
            .from_path(&spec.path)
            .map_err(|e| Error::Data(format!("{}: {e}", spec.path.display())))?;
        let mut rows = Vec::new();
        let mut dim = None;
        for (n, rec) in reader.records().enumerate() {
            let line = n + 1 + spec.has_header as usize;
            let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", spec.path.display())))?;
            if spec.label_column >= rec.len() {
                return Err(Error::Data(format!(
                    "{}:{line}: label column {} out of range",
                    spec.path.display(),
                    spec.label_column
                )));
            }
            let raw = &rec[spec.label_column];
            let y = if raw == spec.positive_label {
                1.0
            } else {
                match &spec.negative_label {
                    Some(neg) if raw != neg => {
                        return Err(Error::Data(format!(
                            "{}:{line}: unmapped label {raw:?}",
                            spec.path.display()
                        )))
                    }
                    _ => -1.0,
                }
            };
            let mut x = Vec::with_capacity(rec.len() - 1);
            for (j, field) in rec.iter().enumerate() {
                if j == spec.label_column {
                    continue;
                }
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!(
                        "{}:{line}: column {j} is not numeric: {field:?}",
                        spec.path.display()
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "{}:{line}: column {j} is not finite",
                        spec.path.display()
                    )));
                }
                x.push(v);
            }
            match dim {
                None => dim = Some(x.len()),
                Some(d) if d != x.len() => {
                    return Err(Error::Data(format!(
                        "{}:{line}: expected {d} features, found {}",
                        spec.path.display(),
                        x.len()
                    )))
                }
                _ => {}
            }
            rows.push((x, y));
        }
        let dim = dim.filter(|&d| d > 0).ok_or_else(|| {
            Error::Data(format!("{}: no feature rows", spec.path.display()))
        })?;
        let mut data = CsvData { dim, rows };
        if spec.normalize {
            data.normalize();
        }
        Ok(data)
    }

    /// Min-max scaling to [-1, 1] fitted on the first rows. Constant features map to 0.
    fn normalize(&mut self) {
        let fit = self.rows.len().min(NORMALIZATION_ROWS);
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for (x, _) in &self.rows[..fit] {
            for j in 0..self.dim {
                lo[j] = lo[j].min(x[j]);
                hi[j] = hi[j].max(x[j]);
            }
        }
        for (x, _) in &mut self.rows {
            for j in 0..self.dim {
                let span = hi[j] - lo[j];
                x[j] = if span > 0.0 {
                    2.0 * (x[j] - lo[j]) / span - 1.0
                } else {
                    0.0
                };
            }
        }
    }

    /// Row index for learner `i` in round `t`, if the data lasts that long.
    fn index(&self, partition: Partition, m: usize, i: usize, t: u64) -> Option<usize> {
        let t = usize::try_from(t.checked_sub(1)?).ok()?;
        let idx = match partition {
            Partition::RoundRobin => t.checked_mul(m)?.checked_add(i)?,
            Partition::Contiguous => {
                let block = self.rows.len() / m;
                if t >= block {
                    return None;
                }
                i * block + t
            }
        };
        (idx < self.rows.len()).then_some(idx)
    }

    /// Number of complete rounds the data supports for `m` learners.
    pub fn rounds(&self, m: usize) -> u64 {
        (self.rows.len() / m) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamKind {
    /// Four Gaussian clusters at `(±1, ±1)` labeled by the sign of the
    /// coordinate product. The centers rotate by `drift_rate` radians per round.
    GaussianXor {
        dim: usize,
        cluster_sd: f64,
        drift_rate: f64,
    },
    /// Uniform inputs in `[-1, 1]^d` labeled by the side of the hyperplane
    /// with normal `(cos ωt, sin ωt, 0, ...)`, at least `margin` away from it.
    /// Labels flip with probability `noise`.
    RotatingHyperplane {
        dim: usize,
        angular_rate: f64,
        margin: f64,
        noise: f64,
    },
    /// Two overlapping Gaussian classes in the spirit of the SUSY benchmark:
    /// background `N(-s/2·u, I)`, signal `N(s/2·u, 1.5² I)` with `u` the
    /// normalized all-ones vector and `s` the separation.
    SusyLike { dim: usize, separation: f64 },
    Csv {
        spec: CsvSpec,
        data: Arc<CsvData>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub kind: StreamKind,
    pub seed: u64,
    /// Every learner observes the examples of learner 0.
    pub replicate: bool,
}

/// One observation `z = (x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: f64,
}

impl StreamSpec {
    pub fn gaussian_xor(dim: usize, cluster_sd: f64, drift_rate: f64, seed: u64) -> Result<Self> {
        let s = StreamSpec {
            kind: StreamKind::GaussianXor {
                dim,
                cluster_sd,
                drift_rate,
            },
            seed,
            replicate: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn rotating_hyperplane(
        dim: usize,
        angular_rate: f64,
        margin: f64,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        let s = StreamSpec {
            kind: StreamKind::RotatingHyperplane {
                dim,
                angular_rate,
                margin,
                noise,
            },
            seed,
            replicate: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn susy_like(dim: usize, separation: f64, seed: u64) -> Result<Self> {
        let s = StreamSpec {
            kind: StreamKind::SusyLike { dim, separation },
            seed,
            replicate: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn csv(spec: CsvSpec, seed: u64) -> Result<Self> {
        let data = Arc::new(CsvData::load(&spec)?);
        Ok(StreamSpec {
            kind: StreamKind::Csv { spec, data },
            seed,
            replicate: false,
        })
    }

    pub fn replicated(self) -> Self {
        StreamSpec {
            replicate: true,
            ..self
        }
    }

    pub fn csv_path(&self) -> Option<&Path> {
        match &self.kind {
            StreamKind::Csv { spec, .. } => Some(&spec.path),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self.kind {
            StreamKind::GaussianXor {
                dim,
                cluster_sd,
                drift_rate,
            } => {
                if dim < 2 {
                    return bad(format!("gaussian_xor needs dimension >= 2, got {dim}"));
                }
                if !(cluster_sd >= 0.0) || !cluster_sd.is_finite() {
                    return bad(format!("cluster_sd must be finite and >= 0, got {cluster_sd}"));
                }
                if !drift_rate.is_finite() {
                    return bad("drift_rate must be finite".into());
                }
            }
            StreamKind::RotatingHyperplane {
                dim,
                angular_rate,
                margin,
                noise,
            } => {
                if dim < 2 {
                    return bad(format!("rotating_hyperplane needs dimension >= 2, got {dim}"));
                }
                if !angular_rate.is_finite() {
                    return bad("angular_rate must be finite".into());
                }
                if !(0.0..0.5).contains(&margin) {
                    return bad(format!("margin must lie in [0, 0.5), got {margin}"));
                }
                if !(0.0..=0.5).contains(&noise) {
                    return bad(format!("noise must lie in [0, 0.5], got {noise}"));
                }
            }
            StreamKind::SusyLike { dim, separation } => {
                if dim < 1 {
                    return bad("susy_like needs dimension >= 1".into());
                }
                if !separation.is_finite() {
                    return bad("separation must be finite".into());
                }
            }
            StreamKind::Csv { .. } => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            StreamKind::GaussianXor { dim, .. }
            | StreamKind::RotatingHyperplane { dim, .. }
            | StreamKind::SusyLike { dim, .. } => *dim,
            StreamKind::Csv { data, .. } => data.dim,
        }
    }

    /// Rounds available for `m` learners; `None` for unbounded streams.
    pub fn available_rounds(&self, m: usize) -> Option<u64> {
        match &self.kind {
            StreamKind::Csv { data, .. } => Some(data.rounds(if self.replicate { 1 } else { m })),
            _ => None,
        }
    }
}

/// Seeds the generator of learner `i` in round `t`.
fn example_seed(seed: u64, i: usize, t: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ i as u64);
    splitmix64(h ^ t)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Example of learner `i` (zero-based) in round `t` (one-based) out of `m`.
///
/// A pure function of `(spec, m, i, t)`. `m` only matters for csv
/// partitioning. Returns `None` once a csv stream is exhausted.
pub fn generate_example(spec: &StreamSpec, m: usize, i: usize, t: u64) -> Result<Option<Example>> {
    if i >= m {
        return Err(Error::InvalidParameter(format!(
            "learner {i} out of range for {m} learners"
        )));
    }
    let (i, readers) = if spec.replicate { (0, 1) } else { (i, m) };
    let mut rng = ChaCha8Rng::seed_from_u64(example_seed(spec.seed, i, t));
    let ex = match &spec.kind {
        StreamKind::GaussianXor {
            dim,
            cluster_sd,
            drift_rate,
        } => {
            let q: u32 = rng.random_range(0..4);
            let (cx, cy) = match q {
                0 => (1.0, 1.0),
                1 => (-1.0, -1.0),
                2 => (1.0, -1.0),
                _ => (-1.0, 1.0),
            };
            let y = if q < 2 { 1.0 } else { -1.0 };
            let (sin, cos) = (drift_rate * t as f64).sin_cos();
            let mut x = Vec::with_capacity(*dim);
            x.push(cos * cx - sin * cy);
            x.push(sin * cx + cos * cy);
            x.resize(*dim, 0.0);
            for v in &mut x {
                let z: f64 = rng.sample(StandardNormal);
                *v += cluster_sd * z;
            }
            Example { x, y }
        }
        StreamKind::RotatingHyperplane {
            dim,
            angular_rate,
            margin,
            noise,
        } => {
            let (sin, cos) = (angular_rate * t as f64).sin_cos();
            let mut x = vec![0.0; *dim];
            let mut score = 0.0;
            let mut found = false;
            for _ in 0..MAX_MARGIN_ATTEMPTS {
                for v in &mut x {
                    *v = rng.random_range(-1.0..1.0);
                }
                score = cos * x[0] + sin * x[1];
                if score.abs() >= *margin && score != 0.0 {
                    found = true;
                    break;
                }
            }
            if !found {
                return Err(Error::NumericFailure {
                    round: t,
                    learner: i,
                    what: "could not sample an input outside the margin".into(),
                });
            }
            let mut y = if score > 0.0 { 1.0 } else { -1.0 };
            if rng.random::<f64>() < *noise {
                y = -y;
            }
            Example { x, y }
        }
        StreamKind::SusyLike { dim, separation } => {
            let signal = rng.random::<bool>();
            let (y, shift, sd) = if signal {
                (1.0, 0.5 * separation, 1.5)
            } else {
                (-1.0, -0.5 * separation, 1.0)
            };
            let offset = shift / (*dim as f64).sqrt();
            let x = (0..*dim)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    offset + sd * z
                })
                .collect();
            Example { x, y }
        }
        StreamKind::Csv { spec: csv, data } => match data.index(csv.partition, readers, i, t) {
            Some(idx) => {
                let (x, y) = &data.rows[idx];
                Example { x: x.clone(), y: *y }
            }
            None => return Ok(None),
        },
    };
    Ok(Some(ex))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn deterministic() {
        let s = StreamSpec::gaussian_xor(3, 0.2, 0.01, 7).unwrap();
        let a = generate_example(&s, 4, 2, 17).unwrap().unwrap();
        let b = generate_example(&s, 4, 2, 17).unwrap().unwrap();
        assert_eq!(a, b);
        let c = generate_example(&s, 4, 3, 17).unwrap().unwrap();
        assert_ne!(a, c);
        assert_eq!(a.x.len(), 3);
    }

    #[test]
    fn xor_without_drift_is_stationary() {
        let s = StreamSpec::gaussian_xor(2, 0.05, 0.0, 1).unwrap();
        for t in [1, 1000] {
            for i in 0..4 {
                let e = generate_example(&s, 4, i, t).unwrap().unwrap();
                let quadrant_label = (e.x[0] * e.x[1]).signum();
                assert_eq!(quadrant_label, e.y);
            }
        }
    }

    #[test]
    fn hyperplane_labels_follow_the_angle() {
        let s = StreamSpec::rotating_hyperplane(3, 0.01, 0.1, 0.0, 5).unwrap();
        for t in [1u64, 50, 333] {
            let e = generate_example(&s, 2, 1, t).unwrap().unwrap();
            let a = 0.01 * t as f64;
            let score = a.cos() * e.x[0] + a.sin() * e.x[1];
            assert!(score.abs() >= 0.1);
            assert_eq!(score.signum(), e.y);
        }
    }

    #[test]
    fn susy_like_labels_are_balanced() {
        let s = StreamSpec::susy_like(8, 1.0, 3).unwrap();
        let pos = (1..=2000)
            .filter(|&t| generate_example(&s, 1, 0, t).unwrap().unwrap().y > 0.0)
            .count();
        assert!((900..1100).contains(&pos), "{pos}");
    }

    #[test]
    fn invalid_streams() {
        assert!(StreamSpec::gaussian_xor(1, 0.1, 0.0, 0).is_err());
        assert!(StreamSpec::rotating_hyperplane(2, 0.1, 0.7, 0.0, 0).is_err());
        assert!(StreamSpec::rotating_hyperplane(2, 0.1, 0.1, 0.9, 0).is_err());
    }

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn csv_spec(path: &Path, partition: Partition, normalize: bool) -> CsvSpec {
        CsvSpec {
            path: path.to_path_buf(),
            label_column: 2,
            partition,
            normalize,
            has_header: true,
            positive_label: "yes".into(),
            negative_label: Some("no".into()),
        }
    }

    #[test]
    fn csv_partitions() {
        let f = write_csv("a,b,label\n1,10,yes\n2,20,no\n3,30,yes\n4,40,no\n5,50,yes\n");
        let rr = StreamSpec::csv(csv_spec(f.path(), Partition::RoundRobin, false), 0).unwrap();
        assert_eq!(rr.dim(), 2);
        let e = generate_example(&rr, 2, 1, 2).unwrap().unwrap();
        assert_eq!(e.x, vec![4.0, 40.0]);
        assert_eq!(e.y, -1.0);
        assert!(generate_example(&rr, 2, 0, 3).unwrap().is_some());
        assert!(generate_example(&rr, 2, 1, 3).unwrap().is_none());
        assert_eq!(rr.available_rounds(2), Some(2));

        let ct = StreamSpec::csv(csv_spec(f.path(), Partition::Contiguous, false), 0).unwrap();
        let e = generate_example(&ct, 2, 1, 1).unwrap().unwrap();
        assert_eq!(e.x, vec![3.0, 30.0]);
        assert!(generate_example(&ct, 2, 0, 3).unwrap().is_none());
    }

    #[test]
    fn csv_normalization() {
        let f = write_csv("a,b,label\n0,5,yes\n10,5,no\n5,5,yes\n");
        let s = StreamSpec::csv(csv_spec(f.path(), Partition::RoundRobin, true), 0).unwrap();
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|i| generate_example(&s, 3, i, 1).unwrap().unwrap().x)
            .collect();
        assert_eq!(xs, vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn csv_errors() {
        let f = write_csv("a,b,label\n1,x,yes\n");
        assert!(matches!(
            StreamSpec::csv(csv_spec(f.path(), Partition::RoundRobin, false), 0),
            Err(Error::Data(_))
        ));
        let f = write_csv("a,b,label\n1,2,maybe\n");
        assert!(StreamSpec::csv(csv_spec(f.path(), Partition::RoundRobin, false), 0).is_err());
    }
}
