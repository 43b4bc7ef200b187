use std::sync::Arc;

use super::ledger::{CommLedger, LearnerSizes, RoundRecord, SyncSizes};
use super::{divergence_of, ByteCostModel, SupportSet, SyncStrategy, Synchronizable};
use crate::error::{Error, Result};

/// Coordinator view shared by all learners.
#[derive(Debug, Clone)]
pub struct CoordinatorState<M> {
    reference: M,
    cached_union: Arc<SupportSet>,
    known: Vec<Arc<SupportSet>>,
    costs: ByteCostModel,
}

impl<M: Synchronizable> CoordinatorState<M> {
    /// Fresh coordinator for `m` learners that all start from `initial`.
    pub fn new(m: usize, initial: M, costs: ByteCostModel) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyConfiguration);
        }
        costs.validate()?;
        let set = Arc::new(initial.support_set());
        Ok(CoordinatorState {
            reference: initial,
            known: vec![Arc::clone(&set); m],
            cached_union: set,
            costs,
        })
    }

    /// `r_t`, the last synchronized average.
    pub fn reference(&self) -> &M {
        &self.reference
    }

    /// `S̄` of the last synchronization, as stored at the coordinator.
    pub fn cached_union(&self) -> &SupportSet {
        &self.cached_union
    }

    /// Support vectors learner `i` assumes the coordinator holds.
    pub fn known(&self, i: usize) -> &SupportSet {
        &self.known[i]
    }

    pub fn costs(&self) -> &ByteCostModel {
        &self.costs
    }

    pub fn learners(&self) -> usize {
        self.known.len()
    }

    /// Test hook for corrupting the coordinator cache.
    #[doc(hidden)]
    pub fn cached_union_mut(&mut self) -> &mut SupportSet {
        Arc::make_mut(&mut self.cached_union)
    }
}

/// What happened in one call to [`sync_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyncOutcome {
    pub synced: bool,
    /// Local conditions were evaluated this round.
    pub checked: bool,
    pub violations: usize,
    /// Divergence of the configuration before synchronization, on check rounds.
    pub divergence_at_check: Option<f64>,
    pub false_alarm: bool,
    pub bytes: u64,
}

impl SyncOutcome {
    fn quiet() -> Self {
        SyncOutcome {
            synced: false,
            checked: false,
            violations: 0,
            divergence_at_check: None,
            false_alarm: false,
            bytes: 0,
        }
    }
}

/// Applies the synchronization operator for round `t` to the local models.
///
/// Must be called once per round after all local updates. Appends exactly
/// one record to `ledger`. On a full synchronization every model is replaced
/// by the average, which also becomes the new reference.
pub fn sync_step<M: Synchronizable>(
    strategy: &SyncStrategy,
    t: u64,
    models: &mut [M],
    coord: &mut CoordinatorState<M>,
    ledger: &mut CommLedger,
) -> Result<SyncOutcome> {
    if models.len() != coord.learners() {
        return Err(Error::InvalidParameter(format!(
            "coordinator expects {} learners, got {}",
            coord.learners(),
            models.len()
        )));
    }
    let mut outcome = SyncOutcome::quiet();
    let mut record = RoundRecord::quiet(t);
    if t == 0 {
        ledger.push(record);
        return Ok(outcome);
    }

    let full_sync = match *strategy {
        SyncStrategy::None => false,
        SyncStrategy::Continuous => true,
        SyncStrategy::Periodic { period } => t.is_multiple_of(period),
        SyncStrategy::Dynamic {
            delta,
            check_period,
        } => {
            if t.is_multiple_of(check_period) {
                outcome.checked = true;
                let mut violations = 0;
                for f in models.iter() {
                    if f.distance_sq(&coord.reference)? > delta {
                        violations += 1;
                    }
                }
                let div = divergence_of(models)?;
                outcome.violations = violations;
                outcome.divergence_at_check = Some(div);
                outcome.false_alarm = violations > 0 && div <= delta;
                record.violations = violations as u32;
                record.false_alarm = outcome.false_alarm;
                if violations > 0 {
                    // notifications plus the coordinator's sync requests
                    record.control_messages = (violations + models.len()) as u32;
                }
                violations > 0
            } else {
                false
            }
        }
    };

    if full_sync {
        let sizes = synchronize(t, models, coord)?;
        let (up, down) = sizes.bytes(&coord.costs);
        record.bytes_up = up;
        record.bytes_down = down;
        record.messages_up = models.len() as u32;
        record.messages_down = models.len() as u32;
        record.synced = true;
        record.sizes = Some(sizes);
        outcome.synced = true;
        outcome.bytes = up + down;
    }
    ledger.push(record);
    Ok(outcome)
}

fn synchronize<M: Synchronizable>(
    t: u64,
    models: &mut [M],
    coord: &mut CoordinatorState<M>,
) -> Result<SyncSizes> {
    let fixed = M::fixed_size();
    let sets: Vec<SupportSet> = models.iter().map(|f| f.support_set()).collect();
    let mut learners = Vec::with_capacity(models.len());
    for (i, set) in sets.iter().enumerate() {
        let mut new_svs = 0;
        for p in set {
            if coord.known[i].contains(p) {
                // the coordinator must be able to resolve every point it is not sent
                if !coord.cached_union.contains(p) {
                    return Err(Error::InconsistentCache {
                        round: t,
                        learner: i,
                    });
                }
            } else {
                new_svs += 1;
            }
        }
        learners.push(LearnerSizes {
            support_len: set.len(),
            new_svs,
            missing_svs: 0,
        });
    }

    let avg = M::average(models)?;
    let union = avg.support_set();
    for (l, set) in learners.iter_mut().zip(&sets) {
        l.missing_svs = union.iter().filter(|p| !set.contains(*p)).count();
    }
    let union_len = if fixed { 0 } else { union.len() };

    let union = Arc::new(union);
    for (f, known) in models.iter_mut().zip(coord.known.iter_mut()) {
        *f = avg.clone();
        *known = Arc::clone(&union);
    }
    coord.cached_union = union;
    coord.reference = avg;
    Ok(SyncSizes {
        union_len,
        fixed_size: fixed,
        learners,
    })
}
