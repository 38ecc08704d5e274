//! Shared on-chip bus between the cores and the L2.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::arbiter::Arbiter;
use crate::error::SimError;
use crate::resource::{Attribution, GrantInfo, Owned, SharedResource};
use crate::types::{Cycle, MasterId, OpKind, Transaction};

impl Owned for Transaction {
    fn owner(&self) -> MasterId {
        self.owner
    }
}

/// One explicit `(kind, size) -> cycles` override.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyEntry {
    pub kind: OpKind,
    pub size: u32,
    pub cycles: Cycle,
}

/// Bus cycles held per transaction, keyed by `(kind, size)`.
///
/// Sizes without an explicit entry use the base cost for 8 bytes (read 5,
/// write 3) plus one cycle per additional 8-byte beat.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OccupancyTable {
    entries: BTreeMap<(OpKind, u32), Cycle>,
}

impl OccupancyTable {
    pub const READ_BASE: Cycle = 5;
    pub const WRITE_BASE: Cycle = 3;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: &[OccupancyEntry]) -> Self {
        let mut t = Self::new();
        for e in entries {
            t.set(e.kind, e.size, e.cycles);
        }
        t
    }

    pub fn set(&mut self, kind: OpKind, size: u32, cycles: Cycle) {
        assert!(cycles >= 1, "occupancy must be at least one cycle");
        self.entries.insert((kind, size), cycles);
    }

    pub fn lookup(&self, kind: OpKind, size: u32) -> Cycle {
        if let Some(&c) = self.entries.get(&(kind, size)) {
            return c;
        }
        let base = match kind {
            OpKind::Read => Self::READ_BASE,
            OpKind::Write => Self::WRITE_BASE,
        };
        base + u64::from(size / 8).saturating_sub(1)
    }

    /// Largest occupancy over every legal request size.
    pub fn max(&self) -> Cycle {
        [OpKind::Read, OpKind::Write]
            .into_iter()
            .flat_map(|k| [4u32, 8, 16, 32, 64].map(|s| self.lookup(k, s)))
            .max()
            .unwrap_or(1)
    }
}

#[derive(Debug)]
pub struct Bus {
    pub inner: SharedResource<Transaction>,
    pub table: OccupancyTable,
    attached: Vec<bool>,
}

impl Bus {
    /// `attached[m]` says whether master `m` is a core on this bus.
    pub fn new(arbiter: Arbiter, table: OccupancyTable, attached: Vec<bool>) -> Self {
        Self {
            inner: SharedResource::new("bus", arbiter),
            table,
            attached,
        }
    }

    /// Place `txn` in its owner's request register.
    pub fn request(&mut self, txn: Transaction, now: Cycle) -> Result<(), SimError> {
        let m = txn.owner;
        if !self.attached.get(m.index()).copied().unwrap_or(false) {
            return Err(SimError::NotOnBus(m));
        }
        if self.inner.queued(m) > 0 {
            return Err(SimError::DuplicateRequest {
                master: m,
                resource: "bus".into(),
            });
        }
        self.inner.enqueue(txn, now);
        Ok(())
    }

    pub fn register_free(&self, m: MasterId) -> bool {
        self.inner.queued(m) == 0
    }

    pub fn arbitrate(&mut self, now: Cycle) -> Option<(GrantInfo, &mut Transaction)> {
        let table = &self.table;
        self.inner.arbitrate(now, |t| table.lookup(t.kind, t.size))
    }

    pub fn finish(&mut self, now: Cycle) -> Option<Transaction> {
        self.inner.take_finished(now)
    }

    pub fn apply_stall(&mut self, mask: &[bool], now: Cycle) {
        self.inner.arbiter.state.apply_stall(mask, now);
    }

    pub fn accrue(&mut self, now: Cycle, out: &mut Vec<Attribution>) {
        self.inner.accrue(now, out);
    }

    pub fn max_occupancy(&self) -> Cycle {
        self.table.max()
    }
}
