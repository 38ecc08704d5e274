//! A shared, non-preemptive resource guarded by an [`Arbiter`].
//!
//! Requests wait in per-master queues; only queue heads compete. While the
//! resource is held, every other master with a waiting request accrues one
//! cycle of contention per cycle, blamed on the holder. A waiter that is
//! stalled by quota enforcement (and has no open guard window) logs the cycle
//! as self-inflicted instead.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::arbiter::{Arbiter, Grant, Policy};
use crate::types::{Cycle, MasterId};

/// Anything that can sit in a resource queue.
pub trait Owned {
    fn owner(&self) -> MasterId;
}

/// One cycle of contention: `sufferer` waited while `causer` held the resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attribution {
    pub causer: MasterId,
    pub sufferer: MasterId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaitRecord {
    pub master: MasterId,
    pub wait: Cycle,
    pub started: Cycle,
    /// The master was stalled by quota enforcement at some point during the wait.
    pub stalled: bool,
}

/// Tracks how long each master's head-of-line request waits for service.
#[derive(Debug, Clone)]
pub struct WaitTracker {
    since: Vec<Option<Cycle>>,
    stalled: Vec<bool>,
    longest: Vec<Option<WaitRecord>>,
}

impl WaitTracker {
    pub fn new(num_masters: usize) -> Self {
        Self {
            since: vec![None; num_masters],
            stalled: vec![false; num_masters],
            longest: vec![None; num_masters],
        }
    }

    pub fn start(&mut self, m: MasterId, now: Cycle) {
        let slot = &mut self.since[m.index()];
        if slot.is_none() {
            *slot = Some(now);
            self.stalled[m.index()] = false;
        }
    }

    pub fn is_waiting(&self, m: MasterId) -> bool {
        self.since[m.index()].is_some()
    }

    pub fn note_stalled(&mut self, m: MasterId) {
        if self.since[m.index()].is_some() {
            self.stalled[m.index()] = true;
        }
    }

    /// Close the wait of `m`; returns its length.
    pub fn served(&mut self, m: MasterId, now: Cycle) -> Cycle {
        let Some(started) = self.since[m.index()].take() else {
            return 0;
        };
        let rec = WaitRecord {
            master: m,
            wait: now - started,
            started,
            stalled: self.stalled[m.index()],
        };
        let wait = rec.wait;
        let slot = &mut self.longest[m.index()];
        if slot.as_ref().is_none_or(|r| rec.wait > r.wait) {
            *slot = Some(rec);
        }
        wait
    }

    pub fn longest(&self) -> impl Iterator<Item = &WaitRecord> {
        self.longest.iter().flatten()
    }

    /// Waits still open at `now`.
    pub fn open(&self, now: Cycle) -> Vec<WaitRecord> {
        self.since
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                s.map(|started| WaitRecord {
                    master: MasterId(i as u16),
                    wait: now - started,
                    started,
                    stalled: self.stalled[i],
                })
            })
            .collect()
    }
}

/// A lower-ranked master was granted while a better-ranked eligible one waited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InversionRecord {
    pub cycle: Cycle,
    pub granted: MasterId,
    pub waiting: MasterId,
    pub waited: Cycle,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceCounters {
    pub grants: Vec<u64>,
    pub guard_grants: Vec<u64>,
    /// Cycles each master held the resource (including backpressure extension).
    pub busy_cycles: Vec<u64>,
    /// Transactions that finished their occupancy and left.
    pub traversed: Vec<u64>,
    /// Contention cycles handed to the statistics unit, logged by the resource itself.
    pub attributed_wait_cycles: u64,
    pub self_inflicted_wait_cycles: u64,
}

impl ResourceCounters {
    pub fn new(n: usize) -> Self {
        Self {
            grants: vec![0; n],
            guard_grants: vec![0; n],
            busy_cycles: vec![0; n],
            traversed: vec![0; n],
            attributed_wait_cycles: 0,
            self_inflicted_wait_cycles: 0,
        }
    }
}

#[derive(Debug)]
struct Held<T> {
    item: T,
    owner: MasterId,
    done_at: Cycle,
    blocked: bool,
}

#[derive(Debug)]
pub struct SharedResource<T> {
    pub name: String,
    pub arbiter: Arbiter,
    queues: Vec<VecDeque<T>>,
    held: Option<Held<T>>,
    pub counters: ResourceCounters,
    pub waits: WaitTracker,
    pub inversions: Vec<InversionRecord>,
}

/// Outcome of a successful arbitration round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrantInfo {
    pub grant: Grant,
    pub done_at: Cycle,
    pub waited: Cycle,
}

impl<T: Owned> SharedResource<T> {
    pub fn new(name: impl Into<String>, arbiter: Arbiter) -> Self {
        let n = arbiter.state.num_masters();
        Self {
            name: name.into(),
            arbiter,
            queues: (0..n).map(|_| VecDeque::new()).collect(),
            held: None,
            counters: ResourceCounters::new(n),
            waits: WaitTracker::new(n),
            inversions: Vec::new(),
        }
    }

    pub fn num_masters(&self) -> usize {
        self.queues.len()
    }

    pub fn enqueue(&mut self, item: T, now: Cycle) {
        let m = item.owner();
        self.queues[m.index()].push_back(item);
        self.waits.start(m, now);
    }

    pub fn queued(&self, m: MasterId) -> usize {
        self.queues[m.index()].len()
    }

    pub fn has_waiting(&self) -> bool {
        self.queues.iter().any(|q| !q.is_empty())
    }

    pub fn is_held(&self) -> bool {
        self.held.is_some()
    }

    pub fn holder(&self) -> Option<MasterId> {
        self.held.as_ref().map(|h| h.owner)
    }

    pub fn is_blocked(&self) -> bool {
        self.held.as_ref().is_some_and(|h| h.blocked)
    }

    /// Masters whose queue is non-empty, in id order.
    pub fn requesters(&self) -> Vec<MasterId> {
        self.queues
            .iter()
            .enumerate()
            .filter(|(_, q)| !q.is_empty())
            .map(|(i, _)| MasterId(i as u16))
            .collect()
    }

    /// Grant the free resource to one waiting master. `occupancy` gives the hold time.
    ///
    /// Arbitration runs only at free instants; a held resource is never preempted.
    pub fn arbitrate(&mut self, now: Cycle, occupancy: impl Fn(&T) -> Cycle) -> Option<(GrantInfo, &mut T)> {
        if self.held.is_some() {
            return None;
        }
        let requesters = self.requesters();
        let grant = self.arbiter.arbitrate(now, &requesters)?;
        let m = grant.master;
        if self.arbiter.state.policy == Policy::FixedPriority {
            self.check_inversion(now, m, &requesters);
        }
        let item = self.queues[m.index()]
            .pop_front()
            .expect("granted master has a queued request");
        let waited = self.waits.served(m, now);
        if !self.queues[m.index()].is_empty() {
            self.waits.start(m, now);
        }
        let occ = occupancy(&item).max(1);
        self.counters.grants[m.index()] += 1;
        if grant.via_guard {
            self.counters.guard_grants[m.index()] += 1;
        }
        let done_at = now + occ;
        self.held = Some(Held {
            item,
            owner: m,
            done_at,
            blocked: false,
        });
        let info = GrantInfo { grant, done_at, waited };
        Some((info, &mut self.held.as_mut().unwrap().item))
    }

    fn check_inversion(&mut self, now: Cycle, granted: MasterId, requesters: &[MasterId]) {
        let state = &self.arbiter.state;
        let granted_rank = state.priorities[granted.index()];
        for &w in requesters {
            if w != granted && state.priorities[w.index()] < granted_rank && state.is_eligible(w, now) {
                let waited = self
                    .waits
                    .open(now)
                    .iter()
                    .find(|r| r.master == w)
                    .map_or(0, |r| r.wait);
                self.inversions.push(InversionRecord {
                    cycle: now,
                    granted,
                    waiting: w,
                    waited,
                });
            }
        }
    }

    /// Release the holder if its occupancy ends at or before `now`.
    pub fn take_finished(&mut self, now: Cycle) -> Option<T> {
        match &self.held {
            Some(h) if h.done_at <= now && !h.blocked => {}
            _ => return None,
        }
        let h = self.held.take().unwrap();
        self.counters.traversed[h.owner.index()] += 1;
        Some(h.item)
    }

    /// Put a finished item back as holder because the downstream cannot accept it.
    pub fn hold_blocked(&mut self, item: T) {
        let owner = item.owner();
        self.counters.traversed[owner.index()] -= 1;
        self.held = Some(Held {
            item,
            owner,
            done_at: 0,
            blocked: true,
        });
    }

    pub fn peek_held(&self) -> Option<&T> {
        self.held.as_ref().map(|h| &h.item)
    }

    /// Take the blocked holder for a delivery retry.
    pub fn take_blocked(&mut self) -> Option<T> {
        if self.is_blocked() {
            let h = self.held.take().unwrap();
            self.counters.traversed[h.owner.index()] += 1;
            Some(h.item)
        } else {
            None
        }
    }

    /// Account cycle `now`: busy time for the holder, contention for waiters.
    pub fn accrue(&mut self, now: Cycle, out: &mut Vec<Attribution>) {
        for m in 0..self.queues.len() {
            let id = MasterId(m as u16);
            if self.arbiter.state.stall_mask[m] && self.waits.is_waiting(id) {
                self.waits.note_stalled(id);
            }
        }
        let Some(h) = &self.held else {
            return;
        };
        let causer = h.owner;
        self.counters.busy_cycles[causer.index()] += 1;
        for (m, q) in self.queues.iter().enumerate() {
            let id = MasterId(m as u16);
            if q.is_empty() || id == causer {
                continue;
            }
            let state = &self.arbiter.state;
            if state.stall_mask[m] && !state.guard_open(id, now) {
                self.counters.self_inflicted_wait_cycles += 1;
            } else {
                self.counters.attributed_wait_cycles += 1;
                out.push(Attribution { causer, sufferer: id });
            }
        }
    }
}
