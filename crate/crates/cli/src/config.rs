//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Keys use dotted sections, e.g.
//! `stream.kind` or `strategy.delta`. Every problem found is reported with
//! its line number; unknown keys and keys that do not apply to the chosen
//! kinds are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use driftsync_core::learners::{Compression, LearnerParams, LossSpec};
use driftsync_core::protocol::{ByteCostModel, SyncStrategy};
use driftsync_core::rkhs::KernelSpec;
use driftsync_core::simulator::{CsvSpec, ExperimentConfig, ModelSpec, Partition, StreamSpec};

/// All problems found in a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub diagnostics: Vec<String>,
}

impl ConfigError {
    pub fn single(msg: impl Into<String>) -> Self {
        ConfigError {
            diagnostics: vec![msg.into()],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, d) in self.diagnostics.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// A parsed config with its normalized key-value listing.
#[derive(Debug, Clone)]
pub struct Config {
    pub experiment: ExperimentConfig,
    /// Entries sorted by key, as written in the file.
    pub entries: Vec<(String, String)>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::single(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text. Relative csv paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut fields = Fields::read(text);
        let experiment = build(&mut fields, base_dir);
        fields.finish()?;
        let experiment = experiment.ok_or_else(|| ConfigError::single("invalid configuration"))?;
        let entries = fields
            .entries
            .iter()
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect();
        Ok(Config {
            experiment,
            entries,
        })
    }
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Fields {
    entries: BTreeMap<String, Entry>,
    diags: Vec<String>,
}

impl Fields {
    fn read(text: &str) -> Self {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        let mut diags = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                diags.push(format!("line {line}: expected `key = value`, found {content:?}"));
                continue;
            };
            let key = key.trim();
            let value = unquote(value.trim());
            if key.is_empty() {
                diags.push(format!("line {line}: missing key before `=`"));
                continue;
            }
            if let Some(prev) = entries.get(key) {
                diags.push(format!(
                    "line {line}: duplicate key '{key}' (first set on line {})",
                    prev.line
                ));
                continue;
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                    used: false,
                },
            );
        }
        Fields { entries, diags }
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let e = self.entries.get_mut(key)?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    fn parse_value<T: FromStr>(&mut self, key: &str, what: &str) -> Option<Option<T>> {
        let (value, line) = self.take(key)?;
        match value.parse() {
            Ok(v) => Some(Some(v)),
            Err(_) => {
                self.diags.push(format!(
                    "line {line}: invalid value for '{key}': expected {what}, found {value:?}"
                ));
                Some(None)
            }
        }
    }

    fn required<T: FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        match self.parse_value(key, what) {
            Some(v) => v,
            None => {
                self.diags.push(format!("missing required key '{key}' ({what})"));
                None
            }
        }
    }

    fn optional<T: FromStr>(&mut self, key: &str, what: &str, default: T) -> Option<T> {
        match self.parse_value(key, what) {
            Some(v) => v,
            None => Some(default),
        }
    }

    fn choice(&mut self, key: &str, options: &[&str], default: Option<&str>) -> Option<String> {
        let listed = options.join(", ");
        let Some((value, line)) = self.take(key) else {
            if default.is_none() {
                self.diags.push(format!("missing required key '{key}' (one of {listed})"));
            }
            return default.map(str::to_string);
        };
        if options.contains(&value.as_str()) {
            Some(value)
        } else {
            self.diags.push(format!(
                "line {line}: invalid value for '{key}': expected one of {listed}, found {value:?}"
            ));
            None
        }
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    fn invalid(&mut self, key: &str, msg: impl fmt::Display) {
        match self.line_of(key) {
            Some(line) => self.diags.push(format!("line {line}: {msg}")),
            None => self.diags.push(msg.to_string()),
        }
    }

    fn finish(&mut self) -> Result<(), ConfigError> {
        // after other errors, keys of sections that were never reached are not suspicious
        let strict = self.diags.is_empty();
        for (key, e) in &self.entries {
            if !e.used && (strict || !KNOWN_KEYS.contains(&key.as_str())) {
                self.diags.push(format!(
                    "line {}: unknown key '{key}' (or not applicable to the chosen kinds)",
                    e.line
                ));
            }
        }
        if self.diags.is_empty() {
            return Ok(());
        }
        // report in file order; key-level diagnostics without a line go last
        let mut diags = std::mem::take(&mut self.diags);
        diags.sort_by_key(|d| line_number(d).unwrap_or(usize::MAX));
        Err(ConfigError { diagnostics: diags })
    }
}

fn line_number(diag: &str) -> Option<usize> {
    diag.strip_prefix("line ")?.split(':').next()?.parse().ok()
}

fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (k, &b) in bytes.iter().enumerate() {
        if b == b'#' && (k == 0 || bytes[k - 1].is_ascii_whitespace()) {
            return &line[..k];
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

const KNOWN_KEYS: &[&str] = &[
    "m",
    "rounds",
    "seed",
    "metrics_every",
    "model",
    "stream.kind",
    "stream.replicate",
    "stream.dim",
    "stream.cluster_sd",
    "stream.drift_rate",
    "stream.angular_rate",
    "stream.margin",
    "stream.noise",
    "stream.separation",
    "stream.path",
    "stream.label_column",
    "stream.partition",
    "stream.normalize",
    "stream.header",
    "stream.positive_label",
    "stream.negative_label",
    "kernel.kind",
    "kernel.bandwidth",
    "kernel.degree",
    "kernel.offset",
    "learner.loss",
    "learner.learn_rate",
    "learner.reg",
    "learner.compression",
    "learner.budget",
    "learner.proj_tolerance",
    "strategy.kind",
    "strategy.period",
    "strategy.delta",
    "strategy.check_period",
    "costs.bytes_per_sv",
    "costs.bytes_per_coeff",
    "costs.bytes_per_linear_model",
];

const POS_INT: &str = "a positive integer";
const NONNEG_INT: &str = "a nonnegative integer";
const REAL: &str = "a real number";
const BOOL: &str = "true or false";

fn build(f: &mut Fields, base_dir: &Path) -> Option<ExperimentConfig> {
    let m: Option<usize> = f.required("m", POS_INT);
    let rounds: Option<u64> = f.required("rounds", POS_INT);
    let seed: Option<u64> = f.required("seed", NONNEG_INT);
    let metrics_every: Option<u64> = f.optional("metrics_every", POS_INT, 1);

    let stream = build_stream(f, seed.unwrap_or(0), base_dir);
    let model = build_model(f);
    let learner = build_learner(f);
    let loss = f
        .choice("learner.loss", &["hinge", "squared"], None)
        .map(|l| if l == "hinge" { LossSpec::Hinge } else { LossSpec::Squared });
    let strategy = build_strategy(f);

    let stream = stream?;
    let dim = stream.dim();
    let defaults = ByteCostModel::for_dim(dim);
    let costs = ByteCostModel {
        bytes_per_sv: f.optional("costs.bytes_per_sv", POS_INT, defaults.bytes_per_sv)?,
        bytes_per_coeff: f.optional("costs.bytes_per_coeff", POS_INT, defaults.bytes_per_coeff)?,
        bytes_per_linear_model: f.optional(
            "costs.bytes_per_linear_model",
            POS_INT,
            defaults.bytes_per_linear_model,
        )?,
    };

    let cfg = ExperimentConfig {
        m: m?,
        rounds: rounds?,
        stream,
        model: model?,
        learner: learner?,
        loss: loss?,
        strategy: strategy?,
        costs,
        metrics_every: metrics_every?,
    };
    if let Err(e) = cfg.validate() {
        f.diags.push(format!("invalid configuration: {e}"));
        return None;
    }
    Some(cfg)
}

fn build_stream(f: &mut Fields, seed: u64, base_dir: &Path) -> Option<StreamSpec> {
    let kind = f.choice(
        "stream.kind",
        &["gaussian_xor", "rotating_hyperplane", "susy_like", "csv"],
        None,
    );
    let replicate: Option<bool> = f.optional("stream.replicate", BOOL, false);
    let spec = match kind?.as_str() {
        "gaussian_xor" => {
            let dim = f.optional("stream.dim", POS_INT, 2)?;
            let sd = f.optional("stream.cluster_sd", REAL, 0.25)?;
            let rate = f.optional("stream.drift_rate", REAL, 0.0)?;
            StreamSpec::gaussian_xor(dim, sd, rate, seed)
        }
        "rotating_hyperplane" => {
            let dim = f.optional("stream.dim", POS_INT, 2)?;
            let rate = f.optional("stream.angular_rate", REAL, 0.0)?;
            let margin = f.optional("stream.margin", REAL, 0.0)?;
            let noise = f.optional("stream.noise", REAL, 0.0)?;
            StreamSpec::rotating_hyperplane(dim, rate, margin, noise, seed)
        }
        "susy_like" => {
            let dim = f.optional("stream.dim", POS_INT, 8)?;
            let sep = f.optional("stream.separation", REAL, 1.0)?;
            StreamSpec::susy_like(dim, sep, seed)
        }
        _ => {
            let path: String = f.required("stream.path", "a file path")?;
            let label_column = f.required("stream.label_column", NONNEG_INT)?;
            let partition =
                match f.choice("stream.partition", &["round_robin", "contiguous"], Some("round_robin"))?.as_str() {
                    "contiguous" => Partition::Contiguous,
                    _ => Partition::RoundRobin,
                };
            let normalize = f.optional("stream.normalize", BOOL, false)?;
            let has_header = f.optional("stream.header", BOOL, true)?;
            let positive_label = f.optional("stream.positive_label", "a label value", "1".to_string())?;
            let negative_label = f.parse_value::<String>("stream.negative_label", "a label value").flatten();
            let mut path = PathBuf::from(path);
            if path.is_relative() {
                path = base_dir.join(path);
            }
            StreamSpec::csv(
                CsvSpec {
                    path,
                    label_column,
                    partition,
                    normalize,
                    has_header,
                    positive_label,
                    negative_label,
                },
                seed,
            )
        }
    };
    match spec {
        Ok(s) => Some(if replicate? { s.replicated() } else { s }),
        Err(e) => {
            f.invalid("stream.kind", format!("invalid stream: {e}"));
            None
        }
    }
}

fn build_model(f: &mut Fields) -> Option<ModelSpec> {
    match f.choice("model", &["kernel", "linear"], None)?.as_str() {
        "linear" => Some(ModelSpec::Linear),
        _ => {
            let kernel = match f
                .choice("kernel.kind", &["gaussian", "linear", "polynomial"], Some("gaussian"))?
                .as_str()
            {
                "gaussian" => KernelSpec::gaussian(f.optional("kernel.bandwidth", REAL, 1.0)?),
                "polynomial" => KernelSpec::polynomial(
                    f.required("kernel.degree", POS_INT)?,
                    f.optional("kernel.offset", REAL, 1.0)?,
                ),
                _ => Ok(KernelSpec::Linear),
            };
            match kernel {
                Ok(k) => Some(ModelSpec::Kernel(k)),
                Err(e) => {
                    f.invalid("kernel.kind", format!("invalid kernel: {e}"));
                    None
                }
            }
        }
    }
}

fn build_learner(f: &mut Fields) -> Option<LearnerParams> {
    let learn_rate: Option<f64> = f.required("learner.learn_rate", REAL);
    let reg: Option<f64> = f.optional("learner.reg", REAL, 0.0);
    let compression = match f
        .choice("learner.compression", &["none", "truncate", "project"], Some("none"))?
        .as_str()
    {
        "truncate" => Compression::Truncate {
            budget: f.required("learner.budget", POS_INT)?,
        },
        "project" => Compression::Project {
            tolerance: f.required("learner.proj_tolerance", REAL)?,
        },
        _ => Compression::None,
    };
    match LearnerParams::new(learn_rate?, reg?, compression) {
        Ok(p) => Some(p),
        Err(e) => {
            f.invalid("learner.learn_rate", format!("invalid learner: {e}"));
            None
        }
    }
}

fn build_strategy(f: &mut Fields) -> Option<SyncStrategy> {
    let s = match f
        .choice("strategy.kind", &["none", "continuous", "periodic", "dynamic"], None)?
        .as_str()
    {
        "none" => SyncStrategy::None,
        "continuous" => SyncStrategy::Continuous,
        "periodic" => SyncStrategy::Periodic {
            period: f.required("strategy.period", POS_INT)?,
        },
        _ => {
            let delta = f.required("strategy.delta", REAL);
            let check_period = f.optional("strategy.check_period", POS_INT, 1);
            SyncStrategy::Dynamic {
                delta: delta?,
                check_period: check_period?,
            }
        }
    };
    if let Err(e) = s.validate() {
        f.invalid("strategy.kind", format!("invalid strategy: {e}"));
        return None;
    }
    Some(s)
}
