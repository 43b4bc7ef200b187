use super::{generate_example, run, ExperimentConfig, RunResult};
use crate::error::Result;
use crate::protocol::{communication_bound, loss_bound, CommBoundInput, Inequality, SyncStrategy};

/// Probe inputs used for the averaging check.
const AVERAGING_PROBES: u64 = 16;

/// Tolerance of the averaging check.
pub const AVERAGING_TOLERANCE: f64 = 1e-9;

/// One strategy's totals in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub strategy: SyncStrategy,
    pub cum_loss: f64,
    pub cum_error: u64,
    pub cum_bytes: u64,
    pub syncs: u64,
    pub quiescence_round: u64,
    pub max_compression_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Loss bound of every dynamic row against every periodic or continuous row.
    pub loss_bounds: Vec<Inequality>,
}

impl Comparison {
    pub fn all_bounds_hold(&self) -> bool {
        self.loss_bounds.iter().all(Inequality::holds)
    }
}

/// Runs `base` once per strategy on the same stream and learner.
pub fn compare(base: &ExperimentConfig, strategies: &[SyncStrategy]) -> Result<Comparison> {
    let mut rows = Vec::with_capacity(strategies.len());
    for s in strategies {
        let r = run(&base.with_strategy(*s))?;
        rows.push(ComparisonRow {
            strategy: *s,
            cum_loss: r.cum_loss(),
            cum_error: r.cum_error(),
            cum_bytes: r.cum_bytes(),
            syncs: r.syncs(),
            quiescence_round: r.ledger.quiescence_round(),
            max_compression_error: r.max_compression_error,
        });
    }
    let mut loss_bounds = Vec::new();
    for d in &rows {
        let SyncStrategy::Dynamic { delta, .. } = d.strategy else {
            continue;
        };
        for p in &rows {
            if !matches!(
                p.strategy,
                SyncStrategy::Periodic { .. } | SyncStrategy::Continuous
            ) {
                continue;
            }
            let eps = d.max_compression_error.max(p.max_compression_error);
            let mut b = loss_bound(d.cum_loss, p.cum_loss, base.rounds, base.learner.learn_rate, delta, eps);
            b.name = format!("loss bound {} vs {}", d.strategy.name(), p.strategy.name());
            loss_bounds.push(b);
        }
    }
    Ok(Comparison { rows, loss_bounds })
}

/// Runs `config` (plus the continuous companion for dynamic strategies) and
/// returns the full bound-check battery.
pub fn verify(config: &ExperimentConfig) -> Result<Vec<Inequality>> {
    let result = run(config)?;
    let companion = match config.strategy {
        SyncStrategy::Dynamic { .. } => Some(run(&config.with_strategy(SyncStrategy::Periodic { period: 1 }))?),
        _ => None,
    };
    verify_run(config, &result, companion.as_ref())
}

/// Bound checks on a completed run.
///
/// `companion` is a periodic run with the same stream and learner; when it is
/// given and the strategy is dynamic, the loss bound is checked as well.
pub fn verify_run(
    config: &ExperimentConfig,
    result: &RunResult,
    companion: Option<&RunResult>,
) -> Result<Vec<Inequality>> {
    let ledger = &result.ledger;
    let recs = ledger.records();
    let mut checks = Vec::new();

    let summed: u64 = recs.iter().map(|r| r.bytes()).sum();
    checks.push(Inequality::new(
        "ledger totals equal the sum of rounds",
        summed.abs_diff(ledger.total_bytes()) as f64,
        0.0,
    ));
    let replay = ledger.replay(&config.costs);
    let mismatched = recs
        .iter()
        .filter(|r| match &r.sizes {
            Some(s) => s.bytes(&config.costs) != (r.bytes_up, r.bytes_down),
            None => r.bytes() != 0,
        })
        .count();
    checks.push(Inequality::new(
        "ledger replay reproduces every round",
        (mismatched as u64 + replay.abs_diff(ledger.total_bytes())) as f64,
        0.0,
    ));
    let quiet_bytes: u64 = recs.iter().filter(|r| !r.synced).map(|r| r.bytes()).sum();
    checks.push(Inequality::new("rounds without sync carry no bytes", quiet_bytes as f64, 0.0));

    let decreases = result
        .series
        .windows(2)
        .filter(|w| {
            w[1].cum_loss < w[0].cum_loss
                || w[1].cum_error < w[0].cum_error
                || w[1].cum_bytes < w[0].cum_bytes
                || w[1].cum_syncs < w[0].cum_syncs
        })
        .count();
    checks.push(Inequality::new("cumulative series are nondecreasing", decreases as f64, 0.0));

    let drift_sum = result.drift_sum();
    let input = CommBoundInput {
        strategy: config.strategy,
        total_bytes: ledger.total_bytes(),
        final_union_size: result.final_union_size,
        rounds: result.rounds,
        m: result.m,
        costs: config.costs,
        fixed_size: result.is_fixed_size(),
        drift_sum,
    };
    match communication_bound(&input) {
        Some(b) => checks.push(b),
        None => checks.push(Inequality::new(
            "silent strategy communicates nothing",
            ledger.total_bytes() as f64,
            0.0,
        )),
    }

    if result.is_fixed_size() {
        let per_sync = 2 * result.m as u64 * config.costs.bytes_per_linear_model;
        let off = recs.iter().filter(|r| r.synced && r.bytes() != per_sync).count();
        checks.push(Inequality::new(
            format!("every linear sync costs {per_sync} bytes"),
            off as f64,
            0.0,
        ));
    }

    if let SyncStrategy::Dynamic { delta, .. } = config.strategy {
        if let Some(b) = result.report(&config.strategy).sync_bound {
            checks.push(b);
        }
        let worst_quiet = result
            .checks
            .iter()
            .filter(|c| c.violations == 0)
            .map(|c| c.divergence)
            .fold(0.0, f64::max);
        checks.push(Inequality::new(
            "divergence within threshold when no condition is violated",
            worst_quiet,
            delta,
        ));
        checks.push(Inequality::new(
            "no bytes once every learner stops drifting",
            bytes_after_quiescence(result) as f64,
            0.0,
        ));
        if let Some(p) = companion {
            let eps = result.max_compression_error.max(p.max_compression_error);
            checks.push(loss_bound(
                result.cum_loss(),
                p.cum_loss(),
                result.rounds,
                config.learner.learn_rate,
                delta,
                eps,
            ));
        }
    }

    let mut worst = 0.0f64;
    for t in 1..=AVERAGING_PROBES {
        if let Some(ex) = generate_example(&config.stream, config.m, 0, t)? {
            let preds = result.final_models.predict_all(&ex.x)?;
            let mean = preds.iter().sum::<f64>() / preds.len() as f64;
            let avg = result.final_models.predict_average(&ex.x)?;
            worst = worst.max((avg - mean).abs());
        }
    }
    checks.push(Inequality::new(
        "average predicts the mean prediction",
        worst,
        AVERAGING_TOLERANCE,
    ));
    Ok(checks)
}

/// Bytes sent after the first check round at or after the last round in
/// which some learner drifted.
fn bytes_after_quiescence(result: &RunResult) -> u64 {
    let last_drift = (0..result.rounds as usize)
        .rev()
        .find(|&k| result.drift.iter().any(|d| d[k] > 0.0))
        .map_or(0, |k| k as u64 + 1);
    let Some(settled) = result.checks.iter().map(|c| c.t).find(|&t| t >= last_drift.max(1)) else {
        return 0;
    };
    result
        .ledger
        .records()
        .iter()
        .filter(|r| r.t > settled)
        .map(|r| r.bytes())
        .sum()
}
