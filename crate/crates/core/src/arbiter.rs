//! Grant selection shared by the bus and every NoC output port.
//!
//! A stalled master is ineligible except through its starvation guard: the
//! cycles after the stall is asserted are cut into windows of `guard_cycles`
//! and the master may win at most one grant per window.

use serde::{Deserialize, Serialize};

use crate::types::{Cycle, MasterId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    RoundRobin,
    FixedPriority,
    QuotaAware,
}

/// Pluggable selection rule. `candidates` is non-empty and sorted by id.
pub trait Arbitrate: Send {
    fn select(&mut self, state: &ArbiterState, candidates: &[MasterId]) -> Option<MasterId>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Guard {
    anchor: Cycle,
    used_window: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ArbiterState {
    pub policy: Policy,
    pub last_granted: Option<MasterId>,
    /// Rank per master, lower wins under `FixedPriority`.
    pub priorities: Vec<u32>,
    pub stall_mask: Vec<bool>,
    /// Quota exhaustion flags, consulted by `QuotaAware` regardless of enforcement mode.
    pub over_quota: Vec<bool>,
    /// Guard window length; 0 disables the guard.
    pub guard_cycles: Cycle,
    guards: Vec<Guard>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub master: MasterId,
    /// Granted while stalled, through the starvation guard.
    pub via_guard: bool,
}

impl ArbiterState {
    pub fn new(policy: Policy, num_masters: usize, guard_cycles: Cycle) -> Self {
        Self {
            policy,
            last_granted: None,
            priorities: (0..num_masters as u32).collect(),
            stall_mask: vec![false; num_masters],
            over_quota: vec![false; num_masters],
            guard_cycles,
            guards: vec![
                Guard {
                    anchor: 0,
                    used_window: None
                };
                num_masters
            ],
        }
    }

    pub fn num_masters(&self) -> usize {
        self.stall_mask.len()
    }

    fn window(&self, m: MasterId, now: Cycle) -> u64 {
        (now.saturating_sub(self.guards[m.index()].anchor)) / self.guard_cycles
    }

    /// True if `m` is stalled but has not yet used its grant in the current guard window.
    pub fn guard_open(&self, m: MasterId, now: Cycle) -> bool {
        self.stall_mask[m.index()]
            && self.guard_cycles > 0
            && self.guards[m.index()].used_window != Some(self.window(m, now))
    }

    pub fn is_eligible(&self, m: MasterId, now: Cycle) -> bool {
        !self.stall_mask[m.index()] || self.guard_open(m, now)
    }

    /// Replace the stall mask. Newly stalled masters start guard windows at `now`.
    pub fn apply_stall(&mut self, mask: &[bool], now: Cycle) {
        for (i, (&new, old)) in mask.iter().zip(self.stall_mask.iter_mut()).enumerate() {
            if new && !*old {
                self.guards[i] = Guard {
                    anchor: now,
                    used_window: None,
                };
            }
            *old = new;
        }
    }

    /// First candidate strictly after `last_granted` in cyclic id order.
    pub fn round_robin_pick(&self, candidates: &[MasterId]) -> Option<MasterId> {
        let n = self.num_masters();
        let start = self.last_granted.map_or(0, |l| (l.index() + 1) % n);
        candidates.iter().copied().min_by_key(|c| (c.index() + n - start) % n)
    }

    pub fn priority_pick(&self, candidates: &[MasterId]) -> Option<MasterId> {
        candidates
            .iter()
            .copied()
            .min_by_key(|c| (self.priorities[c.index()], c.0))
    }

    fn policy_pick(&self, candidates: &[MasterId]) -> Option<MasterId> {
        match self.policy {
            Policy::RoundRobin => self.round_robin_pick(candidates),
            Policy::FixedPriority => self.priority_pick(candidates),
            Policy::QuotaAware => {
                let under: Vec<MasterId> = candidates
                    .iter()
                    .copied()
                    .filter(|m| !self.stall_mask[m.index()] && !self.over_quota[m.index()])
                    .collect();
                if under.is_empty() {
                    self.round_robin_pick(candidates)
                } else {
                    self.round_robin_pick(&under)
                }
            }
        }
    }

    fn record_grant(&mut self, m: MasterId, now: Cycle) -> Grant {
        let via_guard = self.stall_mask[m.index()];
        if via_guard {
            let w = self.window(m, now);
            self.guards[m.index()].used_window = Some(w);
        }
        self.last_granted = Some(m);
        Grant { master: m, via_guard }
    }
}

/// Arbiter state plus an optional replacement selection rule.
pub struct Arbiter {
    pub state: ArbiterState,
    custom: Option<Box<dyn Arbitrate>>,
}

impl std::fmt::Debug for Arbiter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Arbiter")
            .field("state", &self.state)
            .field("custom", &self.custom.is_some())
            .finish()
    }
}

impl Arbiter {
    pub fn new(state: ArbiterState) -> Self {
        Self { state, custom: None }
    }

    pub fn set_custom(&mut self, rule: Box<dyn Arbitrate>) {
        self.custom = Some(rule);
    }

    /// Pick one requester among the eligible ones and update rotation and guard state.
    ///
    /// `requesters` must be sorted by id.
    pub fn arbitrate(&mut self, now: Cycle, requesters: &[MasterId]) -> Option<Grant> {
        let eligible: Vec<MasterId> = requesters
            .iter()
            .copied()
            .filter(|&m| self.state.is_eligible(m, now))
            .collect();
        if eligible.is_empty() {
            return None;
        }
        let pick = match self.custom.as_mut() {
            Some(rule) => rule.select(&self.state, &eligible),
            None => self.state.policy_pick(&eligible),
        }?;
        debug_assert!(eligible.contains(&pick), "arbitration picked an ineligible master");
        Some(self.state.record_grant(pick, now))
    }
}
