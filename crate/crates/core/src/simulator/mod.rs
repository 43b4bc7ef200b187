//! Deterministic multi-learner streaming simulation.
//!
//! Every round each learner observes one example, suffers the loss of its
//! current model (prequential evaluation), updates, and then the configured
//! synchronization operator runs. Examples are a pure function of the stream
//! seed, the learner and the round, so runs are reproducible bit for bit.

mod stream;
mod verify;

pub use stream::{
    generate_example, CsvData, CsvSpec, Example, Partition, StreamKind, StreamSpec,
    NORMALIZATION_ROWS,
};
pub use verify::{compare, verify, verify_run, Comparison, ComparisonRow};

use crate::error::{Error, Result};
use crate::learners::{
    linear_sgd_update, update_with_compression, Compression, LearnerParams, LinearModel, LossSpec,
    Predict, UpdateOutcome,
};
use crate::protocol::{
    divergence_of, sync_step, violation_and_quiescence_report, ByteCostModel, CommLedger,
    CoordinatorState, SupportSet, SyncReport, SyncStrategy, Synchronizable,
};
use crate::rkhs::{Birth, KernelModel, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Kernel(KernelSpec),
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m: usize,
    pub rounds: u64,
    pub stream: StreamSpec,
    pub model: ModelSpec,
    pub learner: LearnerParams,
    pub loss: LossSpec,
    pub strategy: SyncStrategy,
    pub costs: ByteCostModel,
    /// Spacing of the recorded metric series.
    pub metrics_every: u64,
}

impl ExperimentConfig {
    /// Config with default byte costs for the stream dimension and a metric
    /// point every round.
    pub fn new(
        m: usize,
        rounds: u64,
        stream: StreamSpec,
        model: ModelSpec,
        learner: LearnerParams,
        loss: LossSpec,
        strategy: SyncStrategy,
    ) -> Result<Self> {
        let costs = ByteCostModel::for_dim(stream.dim());
        let cfg = ExperimentConfig {
            m,
            rounds,
            stream,
            model,
            learner,
            loss,
            strategy,
            costs,
            metrics_every: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("need at least one learner".into()));
        }
        if self.m > u32::MAX as usize {
            return Err(Error::InvalidParameter("too many learners".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("need at least one round".into()));
        }
        if self.metrics_every == 0 {
            return Err(Error::InvalidParameter("metrics_every must be at least 1".into()));
        }
        self.stream.validate()?;
        self.learner.validate()?;
        self.strategy.validate()?;
        self.costs.validate()?;
        match self.model {
            ModelSpec::Kernel(k) => k.validate()?,
            ModelSpec::Linear => {
                if self.learner.compression != Compression::None {
                    return Err(Error::InvalidParameter(
                        "compression applies to kernel models only".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn with_strategy(&self, strategy: SyncStrategy) -> Self {
        ExperimentConfig {
            strategy,
            ..self.clone()
        }
    }
}

/// Extra recording that is too costly to keep by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record the divergence of the configuration after every round.
    pub track_divergence: bool,
}

/// Metrics at one point of the series. Window fields cover the rounds since
/// the previous point.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub t: u64,
    /// A synchronization happened in the window.
    pub theta: bool,
    pub violations: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub cum_loss: f64,
    pub cum_error: u64,
    pub cum_bytes: u64,
    pub cum_syncs: u64,
    pub mean_sv_count: f64,
    /// Pre-synchronization divergence if round `t` was a check round.
    pub divergence_at_check: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub t: u64,
    pub violations: usize,
    pub divergence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FinalModels {
    Kernel(Vec<KernelModel>),
    Linear(Vec<LinearModel>),
}

impl FinalModels {
    pub fn predict_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            FinalModels::Kernel(ms) => ms.iter().map(|f| f.predict(x)).collect(),
            FinalModels::Linear(ms) => ms.iter().map(|f| f.predict(x)).collect(),
        }
    }

    pub fn predict_average(&self, x: &[f64]) -> Result<f64> {
        match self {
            FinalModels::Kernel(ms) => KernelModel::average(ms)?.predict(x),
            FinalModels::Linear(ms) => LinearModel::average(ms)?.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub m: usize,
    /// Rounds actually executed.
    pub rounds: u64,
    /// The stream ran out before the configured number of rounds.
    pub shortened: bool,
    pub series: Vec<SeriesPoint>,
    /// Loss per round, summed over learners.
    pub round_loss: Vec<f64>,
    /// Misclassifications per round.
    pub round_errors: Vec<u32>,
    /// `learner_loss[i][t-1]`.
    pub learner_loss: Vec<Vec<f64>>,
    /// `drift[i][t-1]`.
    pub drift: Vec<Vec<f64>>,
    pub checks: Vec<CheckRecord>,
    pub ledger: CommLedger,
    /// `|S̄_T|` of the union of the final local models.
    pub final_union_size: usize,
    pub final_sv_counts: Vec<usize>,
    pub max_compression_error: f64,
    pub sum_compression_error: f64,
    pub divergence: Option<Vec<f64>>,
    pub final_models: FinalModels,
}

impl RunResult {
    /// `L(T, m)`.
    pub fn cum_loss(&self) -> f64 {
        self.round_loss.iter().sum()
    }

    pub fn cum_error(&self) -> u64 {
        self.round_errors.iter().map(|&e| e as u64).sum()
    }

    /// `C(T, m)`.
    pub fn cum_bytes(&self) -> u64 {
        self.ledger.total_bytes()
    }

    /// `V(T)`.
    pub fn syncs(&self) -> u64 {
        self.ledger.sync_count()
    }

    /// Mean compression error over all `m·T` update steps.
    pub fn mean_compression_error(&self) -> f64 {
        let steps = self.m as f64 * self.rounds as f64;
        if steps == 0.0 {
            0.0
        } else {
            self.sum_compression_error / steps
        }
    }

    pub fn drift_sum(&self) -> f64 {
        self.drift.iter().flat_map(|d| d.iter()).sum()
    }

    pub fn report(&self, strategy: &SyncStrategy) -> SyncReport {
        violation_and_quiescence_report(&self.ledger, &self.round_loss, &self.drift, strategy)
    }

    pub fn is_fixed_size(&self) -> bool {
        matches!(self.final_models, FinalModels::Linear(_))
    }
}

/// Model types a simulated learner can hold.
trait LocalModel: Synchronizable + Predict + Sized {
    fn step(
        &self,
        x: &[f64],
        y: f64,
        birth: Birth,
        params: &LearnerParams,
        loss: LossSpec,
    ) -> Result<UpdateOutcome<Self>>;
    fn wrap(models: Vec<Self>) -> FinalModels;
}

impl LocalModel for KernelModel {
    fn step(
        &self,
        x: &[f64],
        y: f64,
        birth: Birth,
        params: &LearnerParams,
        loss: LossSpec,
    ) -> Result<UpdateOutcome<Self>> {
        update_with_compression(self, x, y, birth, params, loss)
    }

    fn wrap(models: Vec<Self>) -> FinalModels {
        FinalModels::Kernel(models)
    }
}

impl LocalModel for LinearModel {
    fn step(
        &self,
        x: &[f64],
        y: f64,
        _birth: Birth,
        params: &LearnerParams,
        loss: LossSpec,
    ) -> Result<UpdateOutcome<Self>> {
        linear_sgd_update(self, x, y, params, loss)
    }

    fn wrap(models: Vec<Self>) -> FinalModels {
        FinalModels::Linear(models)
    }
}

pub fn run(config: &ExperimentConfig) -> Result<RunResult> {
    run_with(config, RunOptions::default())
}

pub fn run_with(config: &ExperimentConfig, options: RunOptions) -> Result<RunResult> {
    config.validate()?;
    match config.model {
        ModelSpec::Kernel(k) => run_models(config, KernelModel::new(k), options),
        ModelSpec::Linear => run_models(config, LinearModel::zeros(config.stream.dim()), options),
    }
}

fn run_models<M: LocalModel>(
    config: &ExperimentConfig,
    initial: M,
    options: RunOptions,
) -> Result<RunResult> {
    let m = config.m;
    let mut models = vec![initial.clone(); m];
    let mut coord = CoordinatorState::new(m, initial, config.costs)?;
    let mut ledger = CommLedger::new();

    let mut rounds = config.rounds;
    let mut shortened = false;
    if let Some(avail) = config.stream.available_rounds(m) {
        if avail < rounds {
            rounds = avail;
            shortened = true;
        }
    }
    let cap = rounds as usize;
    let mut round_loss = Vec::with_capacity(cap);
    let mut round_errors = Vec::with_capacity(cap);
    let mut learner_loss = vec![Vec::with_capacity(cap); m];
    let mut drift = vec![Vec::with_capacity(cap); m];
    let mut checks = Vec::new();
    let mut series = Vec::with_capacity(cap / config.metrics_every as usize);
    let mut divergence = options.track_divergence.then(|| Vec::with_capacity(cap));
    let mut max_eps = 0.0f64;
    let mut sum_eps = 0.0;

    let mut cum_loss = 0.0;
    let mut cum_error = 0u64;
    let mut window = Window::default();

    let mut examples = Vec::with_capacity(m);
    for t in 1..=rounds {
        examples.clear();
        for i in 0..m {
            match generate_example(&config.stream, m, i, t)? {
                Some(e) => examples.push(e),
                None => break,
            }
        }
        if examples.len() < m {
            rounds = t - 1;
            shortened = true;
            break;
        }

        let mut loss_t = 0.0;
        let mut errors_t = 0u32;
        for (i, (f, ex)) in models.iter_mut().zip(&examples).enumerate() {
            let birth = Birth::new(i as u32, t);
            let out = f
                .step(&ex.x, ex.y, birth, &config.learner, config.loss)
                .map_err(|e| numeric(e, t, i))?;
            if !(out.prediction.is_finite() && out.loss.is_finite() && out.drift.is_finite()) {
                return Err(Error::NumericFailure {
                    round: t,
                    learner: i,
                    what: format!(
                        "prediction {}, loss {}, drift {}",
                        out.prediction, out.loss, out.drift
                    ),
                });
            }
            // sign(0) counts as an error
            if out.prediction * ex.y <= 0.0 {
                errors_t += 1;
            }
            loss_t += out.loss;
            learner_loss[i].push(out.loss);
            drift[i].push(out.drift);
            max_eps = max_eps.max(out.compression_error);
            sum_eps += out.compression_error;
            *f = out.model;
        }

        let outcome = sync_step(&config.strategy, t, &mut models, &mut coord, &mut ledger)
            .map_err(|e| numeric(e, t, 0))?;
        if let Some(div) = outcome.divergence_at_check {
            checks.push(CheckRecord {
                t,
                violations: outcome.violations,
                divergence: div,
            });
        }
        if let Some(series) = divergence.as_mut() {
            series.push(divergence_of(&models)?);
        }

        cum_loss += loss_t;
        cum_error += errors_t as u64;
        round_loss.push(loss_t);
        round_errors.push(errors_t);
        let rec = ledger.records().last().expect("sync_step appends a record");
        window.add(rec.synced, rec.violations as u64, rec.bytes_up, rec.bytes_down);

        if t % config.metrics_every == 0 {
            let mean_sv = models.iter().map(|f| f.support_count()).sum::<usize>() as f64 / m as f64;
            series.push(SeriesPoint {
                t,
                theta: window.theta,
                violations: window.violations,
                bytes_up: window.bytes_up,
                bytes_down: window.bytes_down,
                cum_loss,
                cum_error,
                cum_bytes: ledger.total_bytes(),
                cum_syncs: ledger.sync_count(),
                mean_sv_count: mean_sv,
                divergence_at_check: outcome.divergence_at_check,
            });
            window = Window::default();
        }
    }

    let mut union = SupportSet::new();
    for f in &models {
        union.extend(f.support_set());
    }

    Ok(RunResult {
        m,
        rounds,
        shortened,
        series,
        round_loss,
        round_errors,
        learner_loss,
        drift,
        checks,
        ledger,
        final_union_size: union.len(),
        final_sv_counts: models.iter().map(|f| f.support_count()).collect(),
        max_compression_error: max_eps,
        sum_compression_error: sum_eps,
        divergence,
        final_models: M::wrap(models),
    })
}

fn numeric(e: Error, round: u64, learner: usize) -> Error {
    match e {
        Error::NonFinite(what) => Error::NumericFailure {
            round,
            learner,
            what: format!("non-finite {what}"),
        },
        other => other,
    }
}

#[derive(Debug, Default)]
struct Window {
    theta: bool,
    violations: u64,
    bytes_up: u64,
    bytes_down: u64,
}

impl Window {
    fn add(&mut self, synced: bool, violations: u64, up: u64, down: u64) {
        self.theta |= synced;
        self.violations += violations;
        self.bytes_up += up;
        self.bytes_down += down;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::kernel_sgd_update;

    fn xor_config(m: usize, rounds: u64, strategy: SyncStrategy) -> ExperimentConfig {
        ExperimentConfig::new(
            m,
            rounds,
            StreamSpec::gaussian_xor(2, 0.3, 0.0, 11).unwrap(),
            ModelSpec::Kernel(KernelSpec::gaussian(1.0).unwrap()),
            LearnerParams::new(0.3, 0.0, Compression::None).unwrap(),
            LossSpec::Hinge,
            strategy,
        )
        .unwrap()
    }

    #[test]
    fn single_learner_matches_serial_loop() {
        let cfg = xor_config(1, 60, SyncStrategy::None);
        let res = run(&cfg).unwrap();
        let mut f = KernelModel::new(KernelSpec::gaussian(1.0).unwrap());
        for t in 1..=60 {
            let ex = generate_example(&cfg.stream, 1, 0, t).unwrap().unwrap();
            let out = kernel_sgd_update(&f, &ex.x, ex.y, Birth::new(0, t), &cfg.learner, cfg.loss).unwrap();
            assert_eq!(out.loss.to_bits(), res.learner_loss[0][t as usize - 1].to_bits());
            f = out.model;
        }
        assert_eq!(res.final_models, FinalModels::Kernel(vec![f]));
    }

    #[test]
    fn single_learner_ignores_strategy() {
        let none = run(&xor_config(1, 50, SyncStrategy::None)).unwrap();
        for s in [SyncStrategy::Continuous, SyncStrategy::Periodic { period: 3 }, SyncStrategy::dynamic(0.01)] {
            let other = run(&xor_config(1, 50, s)).unwrap();
            assert_eq!(other.round_loss, none.round_loss, "{}", s.name());
        }
    }

    #[test]
    fn deterministic() {
        let cfg = xor_config(3, 40, SyncStrategy::dynamic(0.2));
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    }

    #[test]
    fn replicated_streams_stay_identical() {
        let mut cfg = xor_config(3, 40, SyncStrategy::Continuous);
        cfg.stream = cfg.stream.replicated();
        let res = run_with(&cfg, RunOptions { track_divergence: true }).unwrap();
        assert!(res.divergence.unwrap().iter().all(|&d| d == 0.0));
        let FinalModels::Kernel(ms) = &res.final_models else { unreachable!() };
        assert!(ms.iter().all(|f| f == &ms[0]));
    }

    #[test]
    fn zero_learn_rate_never_sends_supports() {
        let mut cfg = xor_config(2, 20, SyncStrategy::Continuous);
        cfg.learner.learn_rate = 0.0;
        let res = run(&cfg).unwrap();
        assert_eq!(res.cum_loss(), 40.0);
        assert_eq!(res.final_union_size, 0);
        // empty models: coefficient-only messages of size zero
        assert_eq!(res.cum_bytes(), 0);
        assert_eq!(res.syncs(), 20);
    }

    #[test]
    fn series_layout() {
        let mut cfg = xor_config(2, 25, SyncStrategy::Periodic { period: 4 });
        cfg.metrics_every = 5;
        let res = run(&cfg).unwrap();
        assert_eq!(res.series.len(), 5);
        assert_eq!(res.series.last().unwrap().cum_bytes, res.cum_bytes());
        let window_bytes: u64 = res.series.iter().map(|p| p.bytes_up + p.bytes_down).sum();
        assert_eq!(window_bytes, res.cum_bytes());
        for w in res.series.windows(2) {
            assert!(w[1].cum_loss >= w[0].cum_loss);
            assert!(w[1].cum_bytes >= w[0].cum_bytes);
        }
    }

    #[test]
    fn continuous_supports_are_all_loss_examples() {
        let cfg = xor_config(3, 30, SyncStrategy::Continuous);
        let res = run(&cfg).unwrap();
        let mut expected = SupportSet::new();
        for t in 1..=30u64 {
            for i in 0..3 {
                if res.learner_loss[i][t as usize - 1] > 0.0 {
                    let ex = generate_example(&cfg.stream, 3, i, t).unwrap().unwrap();
                    expected.insert(crate::rkhs::Point::new(ex.x).unwrap());
                }
            }
        }
        let FinalModels::Kernel(ms) = &res.final_models else { unreachable!() };
        for f in ms {
            assert_eq!(f.support_set(), expected);
        }
    }

    #[test]
    fn divergence_aborts_with_diagnostic() {
        let mut cfg = xor_config(1, 2000, SyncStrategy::None);
        cfg.loss = LossSpec::Squared;
        cfg.learner.learn_rate = 5.0;
        match run(&cfg) {
            Err(Error::NumericFailure { round, learner: 0, .. }) => assert!(round > 1),
            other => panic!("expected a numeric failure, got {other:?}"),
        }
    }

    #[test]
    fn linear_rejects_compression() {
        let mut cfg = xor_config(1, 5, SyncStrategy::None);
        cfg.model = ModelSpec::Linear;
        cfg.learner.compression = Compression::Truncate { budget: 3 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn verify_battery_passes_on_dynamic_run() {
        let cfg = xor_config(3, 80, SyncStrategy::dynamic(0.3));
        for check in verify(&cfg).unwrap() {
            assert!(check.holds(), "{check}");
        }
    }
}
