//! Interference-aware statistics unit.
//!
//! Every shared resource reports contention cycles as `(causer, sufferer)`
//! pairs. The unit keeps one causer-by-sufferer matrix per resource and meters
//! the cycles each core *causes* against its per-period quota, summed over all
//! monitored resources. On the first crossing within a period the unit either
//! raises an interrupt or asserts the stall line towards the arbiters.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::types::{Cycle, MasterId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnforcementMode {
    #[default]
    Interrupt,
    HwStall,
}

/// What the modeled monitoring task does once an interrupt is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandlerAction {
    #[default]
    LogOnly,
    ThrottleSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentionMatrix {
    pub resource: String,
    pub size: usize,
    /// Row-major, `cells[causer * size + sufferer]`.
    pub cells: Vec<u64>,
}

impl ContentionMatrix {
    pub fn new(resource: impl Into<String>, size: usize) -> Self {
        Self {
            resource: resource.into(),
            size,
            cells: vec![0; size * size],
        }
    }

    pub fn get(&self, causer: MasterId, sufferer: MasterId) -> u64 {
        self.cells[causer.index() * self.size + sufferer.index()]
    }

    fn add(&mut self, causer: MasterId, sufferer: MasterId, cycles: u64) {
        self.cells[causer.index() * self.size + sufferer.index()] += cycles;
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    /// Contention caused by `m` on everyone else.
    pub fn caused(&self, m: MasterId) -> u64 {
        let r = m.index() * self.size;
        self.cells[r..r + self.size].iter().sum()
    }

    /// Contention suffered by `m`.
    pub fn suffered(&self, m: MasterId) -> u64 {
        (0..self.size).map(|c| self.cells[c * self.size + m.index()]).sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.cells.chunks(self.size.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotaState {
    pub quota_cycles: u64,
    pub used_cycles: u64,
    pub period: Cycle,
    pub mode: EnforcementMode,
    pub exhausted: bool,
    /// Stall line currently asserted (hardware stall or throttle).
    pub stall_held: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuotaEventKind {
    InterruptRaised,
    /// Monitoring task ran and only logged.
    InterruptHandled,
    /// Monitoring task ran and stalled the source.
    ThrottleApplied,
    StallAsserted,
    StallReleased,
}

impl QuotaEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QuotaEventKind::InterruptRaised => "interrupt_raised",
            QuotaEventKind::InterruptHandled => "interrupt_handled",
            QuotaEventKind::ThrottleApplied => "throttle_applied",
            QuotaEventKind::StallAsserted => "stall_asserted",
            QuotaEventKind::StallReleased => "stall_released",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotaEvent {
    pub cycle: Cycle,
    pub core: MasterId,
    pub kind: QuotaEventKind,
    pub used_at_event: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub matrices: Vec<ContentionMatrix>,
    pub quotas: Vec<Option<QuotaState>>,
}

impl CounterSnapshot {
    /// Contention caused by `m` summed over every resource.
    pub fn caused_total(&self, m: MasterId) -> u64 {
        self.matrices.iter().map(|x| x.caused(m)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplenishTarget {
    All,
    Core(MasterId),
}

#[derive(Debug, Clone)]
pub struct SafeSu {
    matrices: Vec<ContentionMatrix>,
    quotas: Vec<Option<QuotaState>>,
    events: Vec<QuotaEvent>,
    /// Caused cycles per master per period index.
    caused_by_period: Vec<Vec<u64>>,
    period: Option<Cycle>,
}

impl SafeSu {
    /// `resources` names the monitored resources; matrices are `num_masters` square.
    pub fn new(resources: &[String], num_masters: usize) -> Self {
        Self {
            matrices: resources
                .iter()
                .map(|r| ContentionMatrix::new(r.clone(), num_masters))
                .collect(),
            quotas: vec![None; num_masters],
            events: Vec::new(),
            caused_by_period: vec![Vec::new(); num_masters],
            period: None,
        }
    }

    /// Give `core` a budget of `quota_cycles` caused cycles per `period`.
    pub fn set_quota(&mut self, core: MasterId, quota_cycles: u64, period: Cycle, mode: EnforcementMode) {
        self.period = Some(period);
        self.quotas[core.index()] = Some(QuotaState {
            quota_cycles,
            used_cycles: 0,
            period,
            mode,
            exhausted: false,
            stall_held: false,
        });
    }

    pub fn resource_index(&self, name: &str) -> Option<usize> {
        self.matrices.iter().position(|m| m.resource == name)
    }

    /// Add `cycles` of contention caused by `causer` on `sufferer` at `resource`.
    pub fn record_contention(
        &mut self,
        now: Cycle,
        resource: usize,
        causer: MasterId,
        sufferer: MasterId,
        cycles: u64,
    ) -> Result<Option<QuotaEvent>, SimError> {
        if causer == sufferer {
            return Err(SimError::SelfContention {
                master: causer,
                resource: self.matrices[resource].resource.clone(),
            });
        }
        if cycles == 0 {
            return Ok(None);
        }
        self.matrices[resource].add(causer, sufferer, cycles);
        let period_idx = self.period.map_or(0, |p| (now / p) as usize);
        let per = &mut self.caused_by_period[causer.index()];
        if per.len() <= period_idx {
            per.resize(period_idx + 1, 0);
        }
        per[period_idx] += cycles;
        if let Some(q) = self.quotas[causer.index()].as_mut() {
            q.used_cycles += cycles;
            return Ok(self.check_quota(now, causer));
        }
        Ok(None)
    }

    /// Fire the exhaustion event on the first crossing within the period.
    pub fn check_quota(&mut self, now: Cycle, core: MasterId) -> Option<QuotaEvent> {
        let q = self.quotas[core.index()].as_mut()?;
        if q.exhausted || q.used_cycles < q.quota_cycles {
            return None;
        }
        q.exhausted = true;
        let kind = match q.mode {
            EnforcementMode::Interrupt => QuotaEventKind::InterruptRaised,
            EnforcementMode::HwStall => {
                q.stall_held = true;
                QuotaEventKind::StallAsserted
            }
        };
        let ev = QuotaEvent {
            cycle: now,
            core,
            kind,
            used_at_event: q.used_cycles,
        };
        self.events.push(ev);
        Some(ev)
    }

    /// Monitoring-task completion for an interrupt raised earlier.
    pub fn handle_interrupt(
        &mut self,
        now: Cycle,
        core: MasterId,
        action: HandlerAction,
        still_current: bool,
    ) -> Option<QuotaEvent> {
        let q = self.quotas[core.index()].as_mut()?;
        let kind = if action == HandlerAction::ThrottleSource && still_current {
            q.stall_held = true;
            QuotaEventKind::ThrottleApplied
        } else {
            QuotaEventKind::InterruptHandled
        };
        let ev = QuotaEvent {
            cycle: now,
            core,
            kind,
            used_at_event: q.used_cycles,
        };
        self.events.push(ev);
        Some(ev)
    }

    /// Reset budgets; any held stall is released with a `stall_released` event.
    pub fn replenish(&mut self, now: Cycle, target: ReplenishTarget) -> Vec<QuotaEvent> {
        let mut out = vec![];
        for (i, slot) in self.quotas.iter_mut().enumerate() {
            let core = MasterId(i as u16);
            if matches!(target, ReplenishTarget::Core(c) if c != core) {
                continue;
            }
            let Some(q) = slot.as_mut() else { continue };
            if q.stall_held {
                out.push(QuotaEvent {
                    cycle: now,
                    core,
                    kind: QuotaEventKind::StallReleased,
                    used_at_event: q.used_cycles,
                });
            }
            q.used_cycles = 0;
            q.exhausted = false;
            q.stall_held = false;
        }
        self.events.extend_from_slice(&out);
        out
    }

    pub fn stall_lines(&self) -> Vec<bool> {
        self.quotas.iter().map(|q| q.is_some_and(|q| q.stall_held)).collect()
    }

    pub fn exhausted_flags(&self) -> Vec<bool> {
        self.quotas.iter().map(|q| q.is_some_and(|q| q.exhausted)).collect()
    }

    pub fn read_counters(&self) -> CounterSnapshot {
        CounterSnapshot {
            matrices: self.matrices.clone(),
            quotas: self.quotas.clone(),
        }
    }

    pub fn matrices(&self) -> &[ContentionMatrix] {
        &self.matrices
    }

    pub fn quota(&self, core: MasterId) -> Option<&QuotaState> {
        self.quotas[core.index()].as_ref()
    }

    pub fn events(&self) -> &[QuotaEvent] {
        &self.events
    }

    pub fn caused_by_period(&self, core: MasterId) -> &[u64] {
        &self.caused_by_period[core.index()]
    }

    pub fn period(&self) -> Option<Cycle> {
        self.period
    }
}
