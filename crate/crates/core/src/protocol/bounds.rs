use super::ledger::CommLedger;
use super::{ByteCostModel, SyncStrategy};

/// A checked inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Inequality {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl Inequality {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Inequality {
            name: name.into(),
            lhs,
            rhs,
        }
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }

    /// `rhs - lhs`.
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

impl std::fmt::Display for Inequality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.holds() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {} <= {}", self.name, self.lhs, self.rhs)
    }
}

/// Inputs of the closed-form communication bounds.
#[derive(Debug, Clone)]
pub struct CommBoundInput {
    pub strategy: SyncStrategy,
    /// `C(T, m)` from the ledger.
    pub total_bytes: u64,
    /// `|S̄_T|`, support size of the union of the final local models.
    pub final_union_size: usize,
    pub rounds: u64,
    pub m: usize,
    pub costs: ByteCostModel,
    /// Fixed-size messages (linear models).
    pub fixed_size: bool,
    /// `Σ_t Σ_i drift(t, i)`.
    pub drift_sum: f64,
}

impl CommBoundInput {
    /// Per-synchronization cost `2m|S̄|B_α`, or `2m·L` for fixed-size models.
    fn per_sync(&self) -> f64 {
        let m = self.m as f64;
        if self.fixed_size {
            2.0 * m * self.costs.bytes_per_linear_model as f64
        } else {
            2.0 * m * self.final_union_size as f64 * self.costs.bytes_per_coeff as f64
        }
    }

    /// One-off support vector cost `m|S̄|B_x`, 0 for fixed-size models.
    fn sv_total(&self) -> f64 {
        if self.fixed_size {
            0.0
        } else {
            self.m as f64 * self.final_union_size as f64 * self.costs.bytes_per_sv as f64
        }
    }
}

/// Closed-form communication bound for the strategy of `input`.
///
/// - continuous: `C ≤ T·2m|S̄_T|B_α + m|S̄_T|B_x`
/// - periodic: `C ≤ (T/b)·2m|S̄_T|B_α + m|S̄_T|B_x`
/// - dynamic: `C ≤ (Σdrift/√Δ)·2m|S̄_T|B_α + m|S̄_T|B_x`
///
/// Fixed-size models replace `2m|S̄_T|B_α` by `2m` model sizes and drop the
/// support vector term. `None` for the silent strategy.
pub fn communication_bound(input: &CommBoundInput) -> Option<Inequality> {
    let t = input.rounds as f64;
    let (name, syncs) = match input.strategy {
        SyncStrategy::None => return None,
        SyncStrategy::Continuous => ("continuous communication bound", t),
        SyncStrategy::Periodic { period } => ("periodic communication bound", t / period as f64),
        SyncStrategy::Dynamic { delta, .. } => {
            ("dynamic communication bound", input.drift_sum / delta.sqrt())
        }
    };
    Some(Inequality::new(
        name,
        input.total_bytes as f64,
        syncs * input.per_sync() + input.sv_total(),
    ))
}

/// `C ≤ T·2m|S̄_T|B_α + m|S̄_T|B_x` for a continuous run.
pub fn bound_check_continuous(
    ledger: &CommLedger,
    final_union_size: usize,
    rounds: u64,
    m: usize,
    costs: &ByteCostModel,
) -> bool {
    communication_bound(&CommBoundInput {
        strategy: SyncStrategy::Continuous,
        total_bytes: ledger.total_bytes(),
        final_union_size,
        rounds,
        m,
        costs: *costs,
        fixed_size: false,
        drift_sum: 0.0,
    })
    .is_some_and(|b| b.holds())
}

/// Synchronization and quiescence summary of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncReport {
    /// `V(T)`.
    pub syncs: u64,
    pub violations: u64,
    pub false_alarms: u64,
    pub drift_sum: f64,
    /// `V(T)·√Δ ≤ Σ_t Σ_i drift(t, i)`, dynamic runs only.
    pub sync_bound: Option<Inequality>,
    /// Last round with nonzero model-channel bytes, 0 if none.
    pub quiescence_round: u64,
    pub total_bytes: u64,
    pub peak_bytes: u64,
    pub total_loss: f64,
    /// `C / (m·L)`, undefined for a run without loss.
    pub adaptivity_ratio: Option<f64>,
}

/// Summarizes synchronizations, quiescence and the drift inequality.
///
/// `losses` holds the per-round loss summed over learners and
/// `drift[i][t]` the drift of learner `i` in round `t`. Both sums run in
/// storage order.
pub fn violation_and_quiescence_report(
    ledger: &CommLedger,
    losses: &[f64],
    drift: &[Vec<f64>],
    strategy: &SyncStrategy,
) -> SyncReport {
    let drift_sum: f64 = drift.iter().flat_map(|d| d.iter()).sum();
    let total_loss: f64 = losses.iter().sum();
    let syncs = ledger.sync_count();
    let sync_bound = match *strategy {
        SyncStrategy::Dynamic { delta, .. } => Some(Inequality::new(
            "synchronization count bound",
            syncs as f64 * delta.sqrt(),
            drift_sum,
        )),
        _ => None,
    };
    let m = drift.len().max(1) as f64;
    let total_bytes = ledger.total_bytes();
    SyncReport {
        syncs,
        violations: ledger.violation_count(),
        false_alarms: ledger.false_alarms(),
        drift_sum,
        sync_bound,
        quiescence_round: ledger.quiescence_round(),
        total_bytes,
        peak_bytes: ledger.peak_bytes(),
        total_loss,
        adaptivity_ratio: (total_loss > 0.0).then(|| total_bytes as f64 / (m * total_loss)),
    }
}

/// `L_D ≤ L_P + (T/γ²)(Δ + 2ε²)` comparing a dynamic run with a periodic one.
pub fn loss_bound(
    dynamic_loss: f64,
    periodic_loss: f64,
    rounds: u64,
    learn_rate: f64,
    delta: f64,
    eps: f64,
) -> Inequality {
    let slack = rounds as f64 / (learn_rate * learn_rate) * (delta + 2.0 * eps * eps);
    Inequality::new("loss bound", dynamic_loss, periodic_loss + slack)
}
