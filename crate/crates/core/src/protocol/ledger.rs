use super::ByteCostModel;

/// Set sizes one learner reported during a synchronization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LearnerSizes {
    /// `|S_i|` at upload.
    pub support_len: usize,
    /// `|S_i \ known_i|`.
    pub new_svs: usize,
    /// `|S̄ \ S_i|`.
    pub missing_svs: usize,
}

/// Everything needed to recompute the bytes of one synchronization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncSizes {
    /// `|S̄|` of the broadcast average.
    pub union_len: usize,
    /// Messages are one fixed-size model each way (linear path).
    pub fixed_size: bool,
    pub learners: Vec<LearnerSizes>,
}

impl SyncSizes {
    /// Bytes up and down according to the size formulas.
    pub fn bytes(&self, costs: &ByteCostModel) -> (u64, u64) {
        if self.fixed_size {
            let m = self.learners.len() as u64;
            let b = m * costs.bytes_per_linear_model;
            return (b, b);
        }
        let mut up = 0;
        let mut down = 0;
        for l in &self.learners {
            up += l.support_len as u64 * costs.bytes_per_coeff + l.new_svs as u64 * costs.bytes_per_sv;
            down += self.union_len as u64 * costs.bytes_per_coeff
                + l.missing_svs as u64 * costs.bytes_per_sv;
        }
        (up, down)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub messages_up: u32,
    pub messages_down: u32,
    /// θ(t): a synchronization happened this round.
    pub synced: bool,
    /// Number of violated local conditions.
    pub violations: u32,
    /// Violation notifications and sync requests; not part of the byte count.
    pub control_messages: u32,
    /// Synchronized although the true divergence was within the threshold.
    pub false_alarm: bool,
    pub sizes: Option<SyncSizes>,
}

impl RoundRecord {
    pub fn quiet(t: u64) -> Self {
        RoundRecord {
            t,
            bytes_up: 0,
            bytes_down: 0,
            messages_up: 0,
            messages_down: 0,
            synced: false,
            violations: 0,
            control_messages: 0,
            false_alarm: false,
            sizes: None,
        }
    }

    pub fn bytes(&self) -> u64 {
        self.bytes_up + self.bytes_down
    }
}

/// Per-round communication records with running totals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommLedger {
    records: Vec<RoundRecord>,
    total_up: u64,
    total_down: u64,
    peak: u64,
    syncs: u64,
    violations: u64,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: RoundRecord) {
        self.total_up += record.bytes_up;
        self.total_down += record.bytes_down;
        self.peak = self.peak.max(record.bytes());
        self.syncs += record.synced as u64;
        self.violations += record.violations as u64;
        self.records.push(record);
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    /// Test hook: mutable access that bypasses the running totals.
    #[doc(hidden)]
    pub fn records_mut(&mut self) -> &mut Vec<RoundRecord> {
        &mut self.records
    }

    pub fn total_up(&self) -> u64 {
        self.total_up
    }

    pub fn total_down(&self) -> u64 {
        self.total_down
    }

    /// `C(T, m)`.
    pub fn total_bytes(&self) -> u64 {
        self.total_up + self.total_down
    }

    /// Largest byte count of a single round.
    pub fn peak_bytes(&self) -> u64 {
        self.peak
    }

    /// `V(T) = Σ θ(t)`.
    pub fn sync_count(&self) -> u64 {
        self.syncs
    }

    pub fn violation_count(&self) -> u64 {
        self.violations
    }

    pub fn false_alarms(&self) -> u64 {
        self.records.iter().filter(|r| r.false_alarm).count() as u64
    }

    pub fn control_messages(&self) -> u64 {
        self.records.iter().map(|r| r.control_messages as u64).sum()
    }

    /// Last round with nonzero model-channel bytes, 0 if there was none.
    pub fn quiescence_round(&self) -> u64 {
        self.records
            .iter()
            .rev()
            .find(|r| r.bytes() > 0)
            .map_or(0, |r| r.t)
    }

    /// Cumulative bytes after each round.
    pub fn cumulative_bytes(&self) -> Vec<u64> {
        let mut acc = 0;
        self.records
            .iter()
            .map(|r| {
                acc += r.bytes();
                acc
            })
            .collect()
    }

    /// Totals equal the sum of the records, and rounds without a
    /// synchronization carry no bytes.
    pub fn is_consistent(&self) -> bool {
        let up: u64 = self.records.iter().map(|r| r.bytes_up).sum();
        let down: u64 = self.records.iter().map(|r| r.bytes_down).sum();
        let syncs = self.records.iter().filter(|r| r.synced).count() as u64;
        up == self.total_up
            && down == self.total_down
            && syncs == self.syncs
            && self.records.iter().all(|r| r.synced || r.bytes() == 0)
    }

    /// Recomputes the total bytes from the logged set sizes.
    pub fn replay(&self, costs: &ByteCostModel) -> u64 {
        self.records
            .iter()
            .filter_map(|r| r.sizes.as_ref())
            .map(|s| {
                let (u, d) = s.bytes(costs);
                u + d
            })
            .sum()
    }

    /// Replay agrees with every record and with the totals.
    pub fn replay_matches(&self, costs: &ByteCostModel) -> bool {
        let per_round = self.records.iter().all(|r| match &r.sizes {
            Some(s) => s.bytes(costs) == (r.bytes_up, r.bytes_down),
            None => r.bytes() == 0,
        });
        per_round && self.replay(costs) == self.total_bytes()
    }
}
