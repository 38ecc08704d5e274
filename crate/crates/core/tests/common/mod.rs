//! Helpers shared by the integration tests: building experiments from inline
//! TOML and rebuilding contention from the run logs alone.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use soc_qos::report::{GrantLog, RunOutput};
use soc_qos::{Experiment, MasterId};

pub fn experiment(toml: &str) -> Experiment {
    Experiment::from_toml(toml, Path::new(".")).unwrap_or_else(|e| panic!("bad test config: {e}\n{toml}"))
}

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// One reconstructed contention cycle: at `cycle`, `sufferer` waited while `causer` held the resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Blame {
    pub cycle: u64,
    pub causer: MasterId,
    pub sufferer: MasterId,
}

/// Rebuild the waiting cycles of an arbitrated resource (bus or a crossbar port)
/// from its grant log: each grant holds `[cycle, done_at)` and its requester
/// waited over `[cycle - waited, cycle)`. Only valid without backpressure,
/// which would stretch a port holder past `done_at`. Stalled waits are included.
pub fn arbitrated_blame(out: &RunOutput, resource: usize) -> Vec<Blame> {
    let grants: Vec<&GrantLog> = out.log.grants.iter().filter(|g| g.resource == resource).collect();
    let holder_at = |c: u64| -> Option<MasterId> {
        let i = grants.partition_point(|g| g.cycle <= c);
        let g = grants.get(i.checked_sub(1)?)?;
        (c < g.done_at).then_some(g.master)
    };
    let mut out_v = vec![];
    for g in &grants {
        for c in g.cycle - g.waited..g.cycle {
            if let Some(h) = holder_at(c) {
                if h != g.master {
                    out_v.push(Blame {
                        cycle: c,
                        causer: h,
                        sufferer: g.master,
                    });
                }
            }
        }
    }
    out_v.sort();
    out_v
}

/// Rebuild memory-controller contention from the enqueue and service logs:
/// an initiator with more enqueues than service starts so far has work
/// pending, and suffers whenever another initiator is being served.
pub fn memctrl_blame(out: &RunOutput) -> Vec<Blame> {
    let n = out.report.config.num_masters();
    let last = out.report.final_cycle;
    let mut enq = vec![vec![]; n];
    for &(c, m) in &out.log.mem_enqueues {
        enq[m.index()].push(c);
    }
    let mut starts = vec![vec![]; n];
    for s in &out.log.services {
        starts[s.owner.index()].push(s.start_cycle);
    }
    for v in enq.iter_mut().chain(starts.iter_mut()) {
        v.sort_unstable();
    }
    let mut services = out.log.services.clone();
    services.sort_by_key(|s| s.start_cycle);
    let active_at = |c: u64| -> Option<MasterId> {
        let i = services.partition_point(|s| s.start_cycle <= c);
        let s = services.get(i.checked_sub(1)?)?;
        (c < s.end_cycle).then_some(s.owner)
    };
    let mut v = vec![];
    for c in 0..=last {
        let Some(h) = active_at(c) else { continue };
        for m in 0..n {
            if m == h.index() {
                continue;
            }
            let e = enq[m].partition_point(|&x| x <= c);
            let s = starts[m].partition_point(|&x| x <= c);
            if e > s {
                v.push(Blame {
                    cycle: c,
                    causer: h,
                    sufferer: MasterId(m as u16),
                });
            }
        }
    }
    v
}

/// Reconstructed blame for every monitored resource, in report order.
pub fn all_blame(out: &RunOutput) -> Vec<Vec<Blame>> {
    let r = out.report.resources.len();
    let mut v: Vec<Vec<Blame>> = (0..r - 1).map(|i| arbitrated_blame(out, i)).collect();
    v.push(memctrl_blame(out));
    v
}

pub fn blame_matrix(blame: &[Blame], n: usize) -> Vec<u64> {
    let mut m = vec![0; n * n];
    for b in blame {
        m[b.causer.index() * n + b.sufferer.index()] += 1;
    }
    m
}

/// Per-master totals of a counter keyed by master.
pub fn per_master<I: IntoIterator<Item = (MasterId, u64)>>(items: I) -> BTreeMap<MasterId, u64> {
    let mut m = BTreeMap::new();
    for (k, v) in items {
        *m.entry(k).or_insert(0) += v;
    }
    m
}
