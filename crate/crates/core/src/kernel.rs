//! Deterministic discrete-event engine.
//!
//! Events are ordered by `(time, component_rank, seq)`. `seq` is assigned by
//! the queue at scheduling time, so two runs that schedule the same events in
//! the same order dequeue them identically regardless of payload contents.
//!
//! A [`Model`] is driven in two phases per visited cycle: every event due at
//! that cycle is handled, then the model is ticked once. While the model
//! reports in-progress work the clock advances one cycle at a time; otherwise
//! it jumps to the next queued event.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::SimError;
use crate::types::Cycle;

/// Total order over component instances, assigned in topology declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComponentRank(pub u32);

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub time: Cycle,
    pub rank: ComponentRank,
    pub seq: u64,
    pub payload: P,
}

impl<P> Event<P> {
    fn key(&self) -> (Cycle, ComponentRank, u64) {
        (self.time, self.rank, self.seq)
    }
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Event<P> {}

impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Event<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimClock {
    now: Cycle,
}

impl SimClock {
    pub fn now(&self) -> Cycle {
        self.now
    }

    fn advance_to(&mut self, t: Cycle) {
        assert!(t >= self.now, "clock moved backwards: {} -> {}", self.now, t);
        self.now = t;
    }
}

/// Priority queue of pending events plus the global clock.
#[derive(Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<Reverse<Event<P>>>,
    clock: SimClock,
    next_seq: u64,
    // Earliest time the current phase may schedule at.
    floor: Cycle,
    scheduled: u64,
    processed: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            clock: SimClock::default(),
            next_seq: 0,
            floor: 0,
            scheduled: 0,
            processed: 0,
        }
    }

    pub fn now(&self) -> Cycle {
        self.clock.now()
    }

    /// Queue `payload` to fire at `time`.
    ///
    /// Scheduling before the current cycle is an internal error. During a
    /// tick phase the current cycle is also closed, since its events have
    /// already been drained.
    pub fn schedule(&mut self, time: Cycle, rank: ComponentRank, payload: P) -> Result<(), SimError> {
        if time < self.floor {
            return Err(SimError::ScheduleInPast {
                at: time,
                now: self.clock.now(),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.scheduled += 1;
        self.heap.push(Reverse(Event {
            time,
            rank,
            seq,
            payload,
        }));
        Ok(())
    }

    pub fn peek_time(&self) -> Option<Cycle> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    /// Remove the earliest event, advancing the clock to its time.
    pub fn pop(&mut self) -> Option<Event<P>> {
        let Reverse(ev) = self.heap.pop()?;
        self.clock.advance_to(ev.time);
        self.floor = self.floor.max(ev.time);
        self.processed += 1;
        Some(ev)
    }

    fn pop_due(&mut self, now: Cycle) -> Option<Event<P>> {
        match self.peek_time() {
            Some(t) if t <= now => self.pop(),
            _ => None,
        }
    }

    fn advance_to(&mut self, t: Cycle) {
        self.clock.advance_to(t);
        self.floor = self.floor.max(t);
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn scheduled_count(&self) -> u64 {
        self.scheduled
    }

    pub fn processed_count(&self) -> u64 {
        self.processed
    }
}

/// A simulated system driven by [`run`].
pub trait Model {
    type Payload;

    fn handle(
        &mut self,
        now: Cycle,
        payload: Self::Payload,
        queue: &mut EventQueue<Self::Payload>,
    ) -> Result<(), SimError>;

    /// Per-cycle step, called once after all events of `now` were handled.
    /// Events scheduled from here must lie strictly in the future.
    fn tick(&mut self, now: Cycle, queue: &mut EventQueue<Self::Payload>) -> Result<(), SimError>;

    /// True while some resource is busy or some request waits, so the next
    /// cycle must be stepped even without a queued event.
    fn needs_tick(&self) -> bool;

    /// True once every workload is exhausted and nothing is in flight.
    fn drained(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub final_cycle: Cycle,
    pub drained: bool,
    pub horizon_hit: bool,
}

/// Drive `model` until it drains or the inclusive horizon `until` passes.
pub fn run<M: Model>(model: &mut M, queue: &mut EventQueue<M::Payload>, until: Cycle) -> Result<RunSummary, SimError> {
    let mut now = queue.now();
    let mut last = now;
    loop {
        if now > until {
            return Ok(RunSummary {
                final_cycle: last,
                drained: false,
                horizon_hit: true,
            });
        }
        queue.advance_to(now);
        last = now;
        while let Some(ev) = queue.pop_due(now) {
            model.handle(now, ev.payload, queue)?;
        }
        queue.floor = now + 1;
        model.tick(now, queue)?;
        queue.floor = now;

        if model.drained() && !model.needs_tick() {
            return Ok(RunSummary {
                final_cycle: now,
                drained: true,
                horizon_hit: false,
            });
        }
        now = if model.needs_tick() {
            now + 1
        } else {
            match queue.peek_time() {
                Some(t) => t,
                None => {
                    return Ok(RunSummary {
                        final_cycle: now,
                        drained: model.drained(),
                        horizon_hit: false,
                    })
                }
            }
        };
    }
}
