//! The assembled SoC: traffic sources, bus, L2 (or bridge), crossbar, memory
//! controller and the statistics unit, driven by the event kernel.
//!
//! Request path of a core: issue queue, bus register, bus occupancy, L2 lookup
//! (`hit_latency`), then on a miss the fill (and writeback) travel over the
//! crossbar (`routing_latency`, then port transfer) into the memory controller.
//! The response returns after `response_latency` on a contention-free path.
//! Accelerators skip the bus and L2 and inject straight into the crossbar.
//!
//! Within one cycle the order is: due events, then a tick that issues new
//! requests, starts memory services, retries blocked deliveries, arbitrates
//! the crossbar ports and the bus, and finally accrues contention.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::arbiter::{Arbiter, ArbiterState, Arbitrate, Policy};
use crate::bus::{Bus, OccupancyTable};
use crate::config::{Experiment, SimConfig};
use crate::error::{Error, SimError};
use crate::kernel::{self, ComponentRank, EventQueue, Model, RunSummary};
use crate::l2::{Access, Downstream, L2Cache};
use crate::memctrl::MemoryController;
use crate::noc::{carry_id, Crossbar, IdField, Packet, Reply, SlaveKind};
use crate::report::{
    BackpressureLog, CompletionLog, DeadlineMiss, EventCounts, GrantLog, IdIntegrity, IdMismatch, LatencySummary,
    MasterStats, MemCtrlReport, QuotaReport, ResourceReport, RunLog, RunOutput, StallEpisode, StatsReport,
    REPORT_SCHEMA_VERSION,
};
use crate::resource::Attribution;
use crate::safesu::{QuotaEvent, QuotaEventKind, ReplenishTarget, SafeSu};
use crate::types::{Cycle, MasterClass, MasterId, Transaction, TxnId};
use crate::verify::verify_properties;
use crate::workload::{Source, SyntheticGen, Workload};

#[derive(Debug)]
pub enum Ev {
    Wake,
    BusDone,
    Complete(TxnId),
    NocArrive { port: usize, pkt: Packet },
    NocDone(usize),
    MemDone,
    Respond { reply: Reply, txn: TxnId },
    Replenish,
    HandlerDone { core: MasterId, raised: Cycle },
}

#[derive(Debug, Clone, Default)]
struct LatencyAcc {
    issued: u64,
    completed: u64,
    sum: u64,
    min: Cycle,
    max: Cycle,
    hist: Vec<u64>,
}

impl LatencyAcc {
    fn record(&mut self, lat: Cycle) {
        if self.completed == 0 || lat < self.min {
            self.min = lat;
        }
        self.max = self.max.max(lat);
        self.completed += 1;
        self.sum += lat;
        let bucket = (63 - lat.max(1).leading_zeros()) as usize;
        if self.hist.len() <= bucket {
            self.hist.resize(bucket + 1, 0);
        }
        self.hist[bucket] += 1;
    }
}

pub struct Simulation {
    config: SimConfig,
    n: usize,
    cores: usize,
    workload: Workload,
    bus: Bus,
    l2: Option<L2Cache>,
    xbar: Crossbar,
    memctrl: MemoryController,
    safesu: SafeSu,
    queue: EventQueue<Ev>,
    core_queue: Vec<VecDeque<Transaction>>,
    inflight: BTreeMap<TxnId, Transaction>,
    origin: BTreeMap<TxnId, MasterId>,
    next_txn: u64,
    packets_out: u64,
    wakes: BTreeSet<Cycle>,
    stall_lines: Vec<bool>,
    attrs: Vec<Attribution>,
    acc: Vec<LatencyAcc>,
    ids: IdIntegrity,
    log: RunLog,
}

impl Simulation {
    pub fn new(exp: &Experiment) -> Result<Self, Error> {
        let config = exp.config.clone();
        let n = config.num_masters();
        let cores = config.topology.cores;
        let guard = config.quota.guard_cycles;

        let mut workload = Workload::new();
        for m in 0..n {
            let id = MasterId(m as u16);
            let b = config
                .binding(id)
                .ok_or_else(|| SimError::Internal(format!("master {id} unbound")))?;
            let source = match (&b.synthetic, exp.traces.get(&id)) {
                (Some(p), _) => Source::Synthetic(Box::new(SyntheticGen::new(p.clone(), id, config.seed))),
                (None, Some(ops)) => Source::Trace(ops.iter().copied().collect()),
                (None, None) => Source::Trace(VecDeque::new()),
            };
            workload.attach(source, b.outstanding_limit);
        }

        let arbiter = |policy: Policy, priorities: &Option<Vec<u32>>| {
            let mut s = ArbiterState::new(policy, n, guard);
            if let Some(p) = priorities {
                s.priorities = p.clone();
            }
            Arbiter::new(s)
        };
        let bus = Bus::new(
            arbiter(config.bus.policy, &config.bus.priorities),
            OccupancyTable::from_entries(&config.bus.occupancy),
            (0..n).map(|m| m < cores).collect(),
        );
        let l2 = config
            .l2
            .enabled
            .then(|| L2Cache::new(config.l2.geometry(), cores, &config.l2.partition_map()));
        let xbar = Crossbar::new(
            config.noc.ports.clone(),
            config
                .noc
                .ports
                .iter()
                .map(|_| arbiter(config.noc.policy, &config.noc.priorities)),
            config.noc.routing_latency,
            config.noc.response_latency,
        );
        let memctrl = MemoryController::new(config.memctrl, n);

        let mut names = vec!["bus".to_string()];
        names.extend(xbar.ports.iter().map(|p| p.resource_name()));
        names.push("memctrl".into());
        let mut safesu = SafeSu::new(&names, n);
        let mut queue = EventQueue::new();
        for b in &config.quota.budgets {
            safesu.set_quota(b.master, b.cycles, config.quota.period, config.quota.mode);
        }
        if !config.quota.budgets.is_empty() {
            queue.schedule(config.quota.period, ComponentRank(0), Ev::Replenish)?;
        }

        Ok(Self {
            n,
            cores,
            workload,
            bus,
            l2,
            xbar,
            memctrl,
            safesu,
            queue,
            core_queue: vec![VecDeque::new(); n],
            inflight: BTreeMap::new(),
            origin: BTreeMap::new(),
            next_txn: 0,
            packets_out: 0,
            wakes: BTreeSet::new(),
            stall_lines: vec![false; n],
            attrs: vec![],
            acc: vec![LatencyAcc::default(); n],
            ids: IdIntegrity::default(),
            log: RunLog::default(),
            config,
        })
    }

    /// Replace the bus selection rule, e.g. with an instrumented or faulty one.
    pub fn set_bus_arbitration(&mut self, rule: Box<dyn Arbitrate>) {
        self.bus.inner.arbiter.set_custom(rule);
    }

    pub fn set_port_arbitration(&mut self, port: usize, rule: Box<dyn Arbitrate>) {
        self.xbar.ports[port].inner.arbiter.set_custom(rule);
    }

    pub fn l2_mut(&mut self) -> Option<&mut L2Cache> {
        self.l2.as_mut()
    }

    pub fn safesu(&self) -> &SafeSu {
        &self.safesu
    }

    // Ranks follow topology declaration order: statistics unit, masters, bus, L2, ports, memory.
    fn rank_master(&self, m: MasterId) -> ComponentRank {
        ComponentRank(1 + m.0 as u32)
    }
    fn rank_bus(&self) -> ComponentRank {
        ComponentRank(1 + self.n as u32)
    }
    fn rank_l2(&self) -> ComponentRank {
        ComponentRank(2 + self.n as u32)
    }
    fn rank_port(&self, p: usize) -> ComponentRank {
        ComponentRank(3 + (self.n + p) as u32)
    }
    fn rank_mem(&self) -> ComponentRank {
        ComponentRank(3 + (self.n + self.xbar.ports.len()) as u32)
    }

    fn res_port(&self, p: usize) -> usize {
        1 + p
    }
    fn res_mem(&self) -> usize {
        1 + self.xbar.ports.len()
    }

    fn new_txn_id(&mut self) -> TxnId {
        let id = TxnId(self.next_txn);
        self.next_txn += 1;
        id
    }

    fn inject(&self, owner: MasterId) -> Result<IdField, SimError> {
        IdField::inject(owner, self.config.topology.id_width)
    }

    fn issue(&mut self, now: Cycle, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        for m in 0..self.n {
            let id = MasterId(m as u16);
            while let Some(op) = self.workload.next_request(id, now) {
                let tid = self.new_txn_id();
                let txn = Transaction::new(tid, id, op.kind, op.address, op.size, now);
                let port = self.xbar.route(tid, op.address)?;
                self.origin.insert(tid, id);
                self.acc[m].issued += 1;
                self.inflight.insert(tid, txn.clone());
                if m < self.cores {
                    self.core_queue[m].push_back(txn);
                } else {
                    let pkt = Packet {
                        id: self.inject(id)?,
                        txn,
                        reply: Reply::Accelerator,
                    };
                    self.packets_out += 1;
                    q.schedule(
                        now + self.xbar.routing_latency,
                        self.rank_master(id),
                        Ev::NocArrive { port, pkt },
                    )?;
                }
            }
            if m < self.cores && self.bus.register_free(id) {
                if let Some(txn) = self.core_queue[m].pop_front() {
                    self.bus.request(txn, now)?;
                }
            }
            if self.workload.can_issue(id) {
                if let Some(t) = self.workload.next_issue_time(id, now + 1) {
                    if t > now && self.wakes.insert(t) {
                        q.schedule(t, self.rank_master(id), Ev::Wake)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn send_downstream(
        &mut self,
        d: Downstream,
        reply: Reply,
        cause: TxnId,
        at: Cycle,
        now: Cycle,
        q: &mut EventQueue<Ev>,
    ) -> Result<(), SimError> {
        let tid = self.new_txn_id();
        let port = self.xbar.route(tid, d.address)?;
        if let Some(&o) = self.origin.get(&cause) {
            self.origin.insert(tid, o);
        }
        let pkt = Packet {
            id: self.inject(d.owner)?,
            txn: Transaction::new(tid, d.owner, d.kind, d.address, d.size, now),
            reply,
        };
        self.packets_out += 1;
        q.schedule(at, self.rank_l2(), Ev::NocArrive { port, pkt })
    }

    fn on_bus_done(&mut self, now: Cycle, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let txn = self
            .bus
            .finish(now)
            .ok_or_else(|| SimError::Internal(format!("bus completion at {now} without a finished holder")))?;
        let routing = self.xbar.routing_latency;
        let cacheable = self.xbar.is_cacheable(txn.address);
        match self.l2.as_mut().filter(|_| cacheable) {
            Some(l2) => {
                let hit = l2.geometry().hit_latency;
                match l2.access(&txn) {
                    Access::Hit => q.schedule(now + hit, self.rank_l2(), Ev::Complete(txn.id))?,
                    Access::Miss { fill, writeback } => {
                        self.send_downstream(fill, Reply::Core(txn.id), txn.id, now + hit + routing, now, q)?;
                        if let Some(wb) = writeback {
                            self.send_downstream(wb, Reply::Writeback, txn.id, now + hit + routing, now, q)?;
                        }
                    }
                }
            }
            None => {
                let d = Downstream {
                    owner: txn.owner,
                    kind: txn.kind,
                    address: txn.address,
                    size: txn.size,
                };
                let at = now + self.config.l2.bridge_latency + routing;
                self.send_downstream(d, Reply::Core(txn.id), txn.id, at, now, q)?;
            }
        }
        Ok(())
    }

    fn on_noc_done(&mut self, p: usize, now: Cycle, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let pkt = self.xbar.ports[p]
            .inner
            .take_finished(now)
            .ok_or_else(|| SimError::Internal(format!("port {p} completion at {now} without a finished holder")))?;
        let pkt = carry_id(pkt);
        let cfg = &self.xbar.ports[p].config;
        match cfg.kind {
            SlaveKind::Peripheral => {
                let at = now + cfg.latency + self.xbar.response_latency;
                q.schedule(
                    at,
                    self.rank_port(p),
                    Ev::Respond {
                        reply: pkt.reply,
                        txn: pkt.txn.id,
                    },
                )?;
            }
            SlaveKind::Memory => {
                let owner = pkt.id.value();
                match self.memctrl.enqueue(pkt, now) {
                    Ok(()) => self.log.mem_enqueues.push((now, owner)),
                    Err(pkt) => {
                        self.log.backpressure.push(BackpressureLog {
                            cycle: now,
                            port: p,
                            master: owner,
                        });
                        self.xbar.ports[p].inner.hold_blocked(pkt);
                    }
                }
            }
        }
        Ok(())
    }

    fn retry_blocked(&mut self, now: Cycle) {
        for p in 0..self.xbar.ports.len() {
            let inner = &mut self.xbar.ports[p].inner;
            let ready = inner.is_blocked() && inner.peek_held().is_some_and(|pkt| self.memctrl.can_accept(pkt));
            if ready {
                let pkt = inner.take_blocked().expect("blocked holder present");
                let owner = pkt.id.value();
                if self.memctrl.enqueue(pkt, now).is_ok() {
                    self.log.mem_enqueues.push((now, owner));
                }
            }
        }
    }

    fn mem_schedule(&mut self, now: Cycle, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let Some(rec) = self.memctrl.schedule_next(now).copied() else {
            return Ok(());
        };
        self.ids.checked += 1;
        let expected = self.origin.get(&rec.txn_id).copied();
        if expected != Some(rec.owner) {
            self.ids.mismatches += 1;
            self.ids.first_mismatch.get_or_insert(IdMismatch {
                txn: rec.txn_id,
                expected,
                seen: rec.owner,
            });
        }
        q.schedule(rec.end_cycle, self.rank_mem(), Ev::MemDone)
    }

    fn noc_arbitrate(&mut self, now: Cycle, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        for p in 0..self.xbar.ports.len() {
            let Some((info, pkt)) = self.xbar.ports[p].arbitrate(now) else {
                continue;
            };
            pkt.txn.grant(now);
            let (tid, reply) = (pkt.txn.id, pkt.reply);
            if reply == Reply::Accelerator {
                if let Some(t) = self.inflight.get_mut(&tid) {
                    t.grant(now);
                }
            }
            self.log.grants.push(GrantLog {
                cycle: now,
                resource: self.res_port(p),
                master: info.grant.master,
                txn: tid,
                done_at: info.done_at,
                waited: info.waited,
                via_guard: info.grant.via_guard,
            });
            q.schedule(info.done_at, self.rank_port(p), Ev::NocDone(p))?;
        }
        Ok(())
    }

    fn bus_arbitrate(&mut self, now: Cycle, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let Some((info, txn)) = self.bus.arbitrate(now) else {
            return Ok(());
        };
        txn.grant(now);
        let tid = txn.id;
        if let Some(t) = self.inflight.get_mut(&tid) {
            t.grant(now);
        }
        self.log.grants.push(GrantLog {
            cycle: now,
            resource: 0,
            master: info.grant.master,
            txn: tid,
            done_at: info.done_at,
            waited: info.waited,
            via_guard: info.grant.via_guard,
        });
        q.schedule(info.done_at, self.rank_bus(), Ev::BusDone)
    }

    fn deliver(&mut self, now: Cycle, resource: usize, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let mut attrs = std::mem::take(&mut self.attrs);
        for a in attrs.drain(..) {
            if let Some(ev) = self.safesu.record_contention(now, resource, a.causer, a.sufferer, 1)? {
                self.on_quota_event(ev, now, q)?;
            }
        }
        self.attrs = attrs;
        Ok(())
    }

    fn accrue(&mut self, now: Cycle, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        self.bus.accrue(now, &mut self.attrs);
        self.deliver(now, 0, q)?;
        for p in 0..self.xbar.ports.len() {
            self.xbar.ports[p].accrue(now, &mut self.attrs);
            self.deliver(now, self.res_port(p), q)?;
        }
        self.memctrl.accrue(&mut self.attrs);
        self.deliver(now, self.res_mem(), q)
    }

    fn on_quota_event(&mut self, ev: QuotaEvent, now: Cycle, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        if ev.kind == QuotaEventKind::InterruptRaised {
            q.schedule(
                now + self.config.quota.handler_latency,
                ComponentRank(0),
                Ev::HandlerDone {
                    core: ev.core,
                    raised: now,
                },
            )?;
        }
        Ok(())
    }

    /// Push stall lines and quota flags from the statistics unit to every arbiter.
    fn sync_enforcement(&mut self, now: Cycle) {
        let lines = self.safesu.stall_lines();
        if lines != self.stall_lines {
            self.bus.apply_stall(&lines, now);
            self.xbar.apply_stall(&lines, now);
            self.stall_lines = lines;
        }
        let over = self.safesu.exhausted_flags();
        self.bus.inner.arbiter.state.over_quota.clone_from(&over);
        for p in &mut self.xbar.ports {
            p.inner.arbiter.state.over_quota.clone_from(&over);
        }
    }

    fn complete(&mut self, id: TxnId, now: Cycle) -> Result<(), SimError> {
        let mut t = self
            .inflight
            .remove(&id)
            .ok_or_else(|| SimError::Internal(format!("completion of unknown transaction {id}")))?;
        t.complete(now);
        self.origin.remove(&id);
        self.workload.complete(t.owner);
        let lat = now - t.t_issued;
        self.acc[t.owner.index()].record(lat);
        self.log.completions.push(CompletionLog {
            txn: id,
            master: t.owner,
            kind: t.kind,
            t_issued: t.t_issued,
            t_granted: t.t_granted,
            t_completed: now,
        });
        Ok(())
    }

    pub fn run(mut self) -> Result<RunOutput, Error> {
        let mut q = std::mem::take(&mut self.queue);
        let horizon = self.config.horizon;
        let summary = kernel::run(&mut self, &mut q, horizon)?;
        Ok(self.finish(summary, &q))
    }

    fn stall_episodes(&self, final_cycle: Cycle) -> Vec<StallEpisode> {
        let g = self.config.quota.guard_cycles;
        let mut open: BTreeMap<MasterId, Cycle> = BTreeMap::new();
        let mut spans = vec![];
        for e in self.safesu.events() {
            match e.kind {
                QuotaEventKind::StallAsserted | QuotaEventKind::ThrottleApplied => {
                    open.entry(e.core).or_insert(e.cycle);
                }
                QuotaEventKind::StallReleased => {
                    if let Some(s) = open.remove(&e.core) {
                        spans.push((e.core, s, Some(e.cycle)));
                    }
                }
                _ => {}
            }
        }
        spans.extend(open.into_iter().map(|(c, s)| (c, s, None)));
        spans
            .into_iter()
            .map(|(core, start, end)| {
                let stop = end.unwrap_or(final_cycle + 1);
                let windows = (stop - start).checked_div(g).unwrap_or(0);
                let mut counts = vec![0u64; windows as usize];
                for c in self.log.completions.iter().filter(|c| c.master == core) {
                    if c.t_completed >= start && g > 0 {
                        let k = (c.t_completed - start) / g;
                        if k < windows {
                            counts[k as usize] += 1;
                        }
                    }
                }
                StallEpisode {
                    core,
                    start,
                    end,
                    window: g,
                    completions_per_window: counts,
                }
            })
            .collect()
    }

    fn deadline_misses(&self, final_cycle: Cycle) -> Vec<DeadlineMiss> {
        let mut out = vec![];
        for d in &self.config.deadlines {
            let due_of = |issued: Cycle| {
                let job = issued / d.period;
                (job, job * d.period + d.deadline)
            };
            for c in self.log.completions.iter().filter(|c| c.master == d.master) {
                let (job, due) = due_of(c.t_issued);
                if c.t_completed > due {
                    out.push(DeadlineMiss {
                        master: d.master,
                        job,
                        due,
                        txn: c.txn,
                        completed: Some(c.t_completed),
                    });
                }
            }
            for t in self.inflight.values().filter(|t| t.owner == d.master) {
                let (job, due) = due_of(t.t_issued);
                if due < final_cycle {
                    out.push(DeadlineMiss {
                        master: d.master,
                        job,
                        due,
                        txn: t.id,
                        completed: None,
                    });
                }
            }
        }
        out.sort_by_key(|m| (m.due, m.master, m.txn));
        out
    }

    fn finish(mut self, summary: RunSummary, q: &EventQueue<Ev>) -> RunOutput {
        let final_cycle = summary.final_cycle;
        let counters = self.safesu.read_counters();
        let line = self.config.l2.line_bytes.max(64);
        let mut resources = vec![];
        let bus_in = &self.bus.inner;
        resources.push(ResourceReport {
            name: "bus".into(),
            policy: Some(bus_in.arbiter.state.policy),
            max_occupancy: self.bus.max_occupancy(),
            counters: bus_in.counters.clone(),
            in_progress: u64::from(bus_in.is_held()),
            contention: counters.matrices[0].clone(),
            longest_waits: bus_in.waits.longest().cloned().collect(),
            open_waits: bus_in.waits.open(final_cycle),
            inversions: bus_in.inversions.clone(),
        });
        for (p, port) in self.xbar.ports.iter().enumerate() {
            let inner = &port.inner;
            resources.push(ResourceReport {
                name: port.resource_name(),
                policy: Some(inner.arbiter.state.policy),
                max_occupancy: port.max_occupancy(line),
                counters: inner.counters.clone(),
                in_progress: u64::from(inner.is_held()),
                contention: counters.matrices[1 + p].clone(),
                longest_waits: inner.waits.longest().cloned().collect(),
                open_waits: inner.waits.open(final_cycle),
                inversions: inner.inversions.clone(),
            });
        }
        let mc = &self.memctrl;
        resources.push(ResourceReport {
            name: "memctrl".into(),
            policy: None,
            max_occupancy: mc.config.max_latency(),
            counters: mc.counters.clone(),
            in_progress: u64::from(mc.is_busy()),
            contention: counters.matrices[1 + self.xbar.ports.len()].clone(),
            longest_waits: mc.waits.longest().cloned().collect(),
            open_waits: mc.waits.open(final_cycle),
            inversions: vec![],
        });

        let masters = (0..self.n)
            .map(|m| {
                let a = &self.acc[m];
                MasterStats {
                    id: MasterId(m as u16),
                    class: if m < self.cores {
                        MasterClass::Core
                    } else {
                        MasterClass::Accelerator
                    },
                    issued: a.issued,
                    completed: a.completed,
                    latency: (a.completed > 0).then(|| LatencySummary {
                        min: a.min,
                        mean: a.sum as f64 / a.completed as f64,
                        max: a.max,
                    }),
                    histogram: a.hist.clone(),
                    grants: resources
                        .iter()
                        .map(|r| (r.name.clone(), r.counters.grants[m]))
                        .collect(),
                }
            })
            .collect();

        let stall_episodes = self.stall_episodes(final_cycle);
        let deadline_misses = self.deadline_misses(final_cycle);
        self.log.services = std::mem::take(&mut self.memctrl.services);
        let mc = &self.memctrl;
        let mut report = StatsReport {
            schema_version: REPORT_SCHEMA_VERSION,
            seed: self.config.seed,
            horizon: self.config.horizon,
            final_cycle,
            drained: summary.drained,
            events: EventCounts {
                scheduled: q.scheduled_count(),
                processed: q.processed_count(),
                pending: q.len() as u64,
            },
            config: self.config.clone(),
            masters,
            resources,
            memctrl: MemCtrlReport {
                services: self.log.services.len() as u64,
                backpressure_events: mc.backpressure_events,
                enqueued: mc.enqueued(),
                dequeued: mc.dequeued(),
                pending_at_end: mc.contention_snapshot(),
            },
            l2: self.l2.as_ref().map(|c| c.stats),
            quota: QuotaReport {
                states: counters.quotas,
                events: self.safesu.events().to_vec(),
                caused_by_period: (0..self.n)
                    .map(|m| self.safesu.caused_by_period(MasterId(m as u16)).to_vec())
                    .collect(),
            },
            stall_episodes,
            deadline_misses,
            id_integrity: self.ids.clone(),
            verdicts: vec![],
        };
        report.verdicts = verify_properties(&report, &self.config);
        RunOutput { report, log: self.log }
    }
}

impl Model for Simulation {
    type Payload = Ev;

    fn handle(&mut self, now: Cycle, ev: Ev, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        match ev {
            Ev::Wake => {
                self.wakes.remove(&now);
            }
            Ev::BusDone => self.on_bus_done(now, q)?,
            Ev::Complete(id) => self.complete(id, now)?,
            Ev::NocArrive { port, pkt } => self.xbar.ports[port].inner.enqueue(pkt, now),
            Ev::NocDone(p) => self.on_noc_done(p, now, q)?,
            Ev::MemDone => {
                let (pkt, _) = self.memctrl.finish(now).ok_or_else(|| {
                    SimError::Internal(format!("memory completion at {now} without an active service"))
                })?;
                q.schedule(
                    now + self.xbar.response_latency,
                    self.rank_mem(),
                    Ev::Respond {
                        reply: pkt.reply,
                        txn: pkt.txn.id,
                    },
                )?;
            }
            Ev::Respond { reply, txn } => {
                self.packets_out -= 1;
                self.origin.remove(&txn);
                match reply {
                    Reply::Core(id) => self.complete(id, now)?,
                    Reply::Accelerator => self.complete(txn, now)?,
                    Reply::Writeback => {}
                }
            }
            Ev::Replenish => {
                self.safesu.replenish(now, ReplenishTarget::All);
                q.schedule(now + self.config.quota.period, ComponentRank(0), Ev::Replenish)?;
            }
            Ev::HandlerDone { core, raised } => {
                let period = self.config.quota.period;
                let current = now / period == raised / period;
                self.safesu
                    .handle_interrupt(now, core, self.config.quota.action, current);
            }
        }
        Ok(())
    }

    fn tick(&mut self, now: Cycle, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        self.sync_enforcement(now);
        self.issue(now, q)?;
        self.mem_schedule(now, q)?;
        self.retry_blocked(now);
        self.mem_schedule(now, q)?;
        self.noc_arbitrate(now, q)?;
        self.bus_arbitrate(now, q)?;
        self.accrue(now, q)?;
        self.sync_enforcement(now);
        Ok(())
    }

    fn needs_tick(&self) -> bool {
        self.core_queue.iter().any(|c| !c.is_empty())
            || self.bus.inner.is_held()
            || self.bus.inner.has_waiting()
            || self
                .xbar
                .ports
                .iter()
                .any(|p| p.inner.is_held() || p.inner.has_waiting())
            || self.memctrl.is_busy()
            || self.memctrl.has_pending()
    }

    fn drained(&self) -> bool {
        self.workload.drained() && self.inflight.is_empty() && self.packets_out == 0
    }
}

/// Build and run one experiment.
pub fn run_experiment(exp: &Experiment) -> Result<RunOutput, Error> {
    Simulation::new(exp)?.run()
}
