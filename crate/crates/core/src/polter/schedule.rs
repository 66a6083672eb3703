use serde::{Deserialize, Serialize};

use super::PolterError;

/// Strictly increasing pretraining steps at which the actor is snapshotted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotSchedule {
    entries: Vec<u64>,
}

impl SnapshotSchedule {
    pub fn new(entries: Vec<u64>) -> Result<Self, PolterError> {
        if entries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PolterError::Schedule(format!(
                "entries must be strictly increasing: {entries:?}"
            )));
        }
        Ok(Self { entries })
    }

    /// `{25k, 50k, 100k, 200k, 400k, 800k, 1.6M}` for 2M pretraining steps.
    pub fn paper() -> Self {
        Self {
            entries: vec![
                25_000, 50_000, 100_000, 200_000, 400_000, 800_000, 1_600_000,
            ],
        }
    }

    /// The same geometric schedule for 200k pretraining steps.
    pub fn desk() -> Self {
        Self::paper()
            .scaled(0.1)
            .expect("scaling the default schedule keeps it increasing")
    }

    /// Every entry multiplied by `ratio` and rounded.
    pub fn scaled(&self, ratio: f64) -> Result<Self, PolterError> {
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(PolterError::Schedule(format!("bad scaling ratio {ratio}")));
        }
        Self::new(
            self.entries
                .iter()
                .map(|&e| (e as f64 * ratio).round() as u64)
                .collect(),
        )
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries `≤ step`.
    pub fn count_at(&self, step: u64) -> usize {
        self.entries.partition_point(|&e| e <= step)
    }
}

/// Consumption state over a schedule: which entries have already produced a snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleCursor {
    schedule: SnapshotSchedule,
    next: usize,
}

impl ScheduleCursor {
    pub fn new(schedule: SnapshotSchedule) -> Self {
        Self { schedule, next: 0 }
    }

    pub fn schedule(&self) -> &SnapshotSchedule {
        &self.schedule
    }

    pub fn consumed(&self) -> usize {
        self.next
    }

    /// Marks every not-yet-consumed entry `≤ step` as consumed and returns them.
    pub fn take_due(&mut self, step: u64) -> Vec<u64> {
        let end = self.schedule.count_at(step).max(self.next);
        let due = self.schedule.entries[self.next..end].to_vec();
        self.next = end;
        due
    }
}
