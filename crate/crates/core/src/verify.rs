//! Automated property checks over a finished run.

use serde::{Deserialize, Serialize};

use crate::arbiter::Policy;
use crate::config::SimConfig;
use crate::report::StatsReport;
use crate::safesu::{EnforcementMode, HandlerAction};
use crate::types::{Cycle, MasterId};

/// Cap on evidence entries kept per verdict.
const MAX_EVIDENCE: usize = 32;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub cycle: Option<Cycle>,
    pub master: Option<MasterId>,
    pub resource: Option<String>,
    pub measured: Option<u64>,
    pub bound: Option<u64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyVerdict {
    pub name: String,
    pub pass: bool,
    pub summary: String,
    pub evidence: Vec<Evidence>,
    /// Violations found, including any beyond the evidence cap.
    pub violations: u64,
}

impl PropertyVerdict {
    fn from_evidence(name: &str, mut evidence: Vec<Evidence>, pass_summary: String) -> Self {
        let violations = evidence.len() as u64;
        evidence.truncate(MAX_EVIDENCE);
        Self {
            name: name.into(),
            pass: violations == 0,
            summary: if violations == 0 {
                pass_summary
            } else {
                format!("{violations} violation(s)")
            },
            evidence,
            violations,
        }
    }
}

pub const STARVATION: &str = "starvation";
pub const DEADLINES: &str = "deadlines";
pub const PRIORITY_INVERSION: &str = "priority_inversion";
pub const QUOTA_ADHERENCE: &str = "quota_adherence";

/// Run every check; the result order is fixed.
pub fn verify_properties(report: &StatsReport, config: &SimConfig) -> Vec<PropertyVerdict> {
    vec![
        starvation(report, config),
        deadlines(report),
        priority_inversion(report),
        quota_adherence(report, config),
    ]
}

/// Starvation window used at a resource with the given max occupancy.
pub fn starvation_window(config: &SimConfig, max_occupancy: Cycle) -> Cycle {
    config.check.starvation_window.unwrap_or(10 * max_occupancy)
}

fn starvation(report: &StatsReport, config: &SimConfig) -> PropertyVerdict {
    let guard = config.quota.guard_cycles;
    let mut ev = vec![];
    let mut worst = 0;
    for r in &report.resources {
        let w = starvation_window(config, r.max_occupancy);
        for rec in r.longest_waits.iter().chain(&r.open_waits) {
            // A stalled master is served once per guard window, on top of the normal wait.
            let allowed = if rec.stalled { w + guard } else { w };
            worst = worst.max(rec.wait);
            if rec.wait > allowed {
                ev.push(Evidence {
                    cycle: Some(rec.started),
                    master: Some(rec.master),
                    resource: Some(r.name.clone()),
                    measured: Some(rec.wait),
                    bound: Some(allowed),
                    detail: format!(
                        "waited {} cycles from cycle {} (window {allowed})",
                        rec.wait, rec.started
                    ),
                });
            }
        }
    }
    PropertyVerdict::from_evidence(STARVATION, ev, format!("longest wait {worst} cycles"))
}

fn deadlines(report: &StatsReport) -> PropertyVerdict {
    let ev = report
        .deadline_misses
        .iter()
        .map(|m| Evidence {
            cycle: Some(m.due),
            master: Some(m.master),
            resource: None,
            measured: m.completed,
            bound: Some(m.due),
            detail: match m.completed {
                Some(c) => format!("job {} txn {} completed at {c}, due {}", m.job, m.txn, m.due),
                None => format!("job {} txn {} not completed, due {}", m.job, m.txn, m.due),
            },
        })
        .collect();
    let summary = if report.config.deadlines.is_empty() {
        "no deadline specs".to_string()
    } else {
        "all jobs met their deadlines".to_string()
    };
    PropertyVerdict::from_evidence(DEADLINES, ev, summary)
}

fn priority_inversion(report: &StatsReport) -> PropertyVerdict {
    let c = &report.config;
    let default_ranks: Vec<u32> = (0..c.num_masters() as u32).collect();
    let mut ev = vec![];
    let mut checked = 0;
    for r in &report.resources {
        if r.policy != Some(Policy::FixedPriority) {
            continue;
        }
        checked += 1;
        for inv in &r.inversions {
            ev.push(Evidence {
                cycle: Some(inv.cycle),
                master: Some(inv.waiting),
                resource: Some(r.name.clone()),
                measured: Some(inv.waited),
                bound: Some(r.max_occupancy),
                detail: format!(
                    "master {} granted while higher-priority master {} waited",
                    inv.granted, inv.waiting
                ),
            });
        }
        let ranks = if r.name == "bus" {
            &c.bus.priorities
        } else {
            &c.noc.priorities
        };
        let ranks = ranks.as_ref().unwrap_or(&default_ranks);
        let active: Vec<usize> = (0..r.counters.grants.len())
            .filter(|&m| r.counters.grants[m] > 0 || r.open_waits.iter().any(|w| w.master.index() == m))
            .collect();
        let Some(&top) = active
            .iter()
            .min_by_key(|&&m| (ranks.get(m).copied().unwrap_or(u32::MAX), m))
        else {
            continue;
        };
        for rec in r.longest_waits.iter().chain(&r.open_waits) {
            if rec.master.index() == top && !rec.stalled && rec.wait > r.max_occupancy {
                ev.push(Evidence {
                    cycle: Some(rec.started),
                    master: Some(rec.master),
                    resource: Some(r.name.clone()),
                    measured: Some(rec.wait),
                    bound: Some(r.max_occupancy),
                    detail: format!("highest-priority master waited {} cycles (> one occupancy)", rec.wait),
                });
            }
        }
    }
    let summary = if checked == 0 {
        "no fixed_priority resource".to_string()
    } else {
        format!("{checked} fixed_priority resource(s) clean")
    };
    PropertyVerdict::from_evidence(PRIORITY_INVERSION, ev, summary)
}

/// Per-period limit on contention caused by a core with budget `quota`.
///
/// Once the stall is up the core can still finish one occupancy already in
/// progress and win one guard grant per window, each hurting at most every
/// other master for the largest occupancy of any monitored resource. The
/// software path adds the handler latency before the stall lands.
pub fn quota_bound(report: &StatsReport, config: &SimConfig, quota: u64) -> Option<u64> {
    let q = &config.quota;
    let handler = match (q.mode, q.action) {
        (EnforcementMode::HwStall, _) => 0,
        (EnforcementMode::Interrupt, HandlerAction::ThrottleSource) => q.handler_latency,
        (EnforcementMode::Interrupt, HandlerAction::LogOnly) => return None,
    };
    let max_occ = report.resources.iter().map(|r| r.max_occupancy).max().unwrap_or(1);
    let victims = (config.num_masters() as u64).saturating_sub(1).max(1);
    let guard_grants = if q.guard_cycles == 0 {
        0
    } else {
        q.period.div_ceil(q.guard_cycles)
    };
    Some(quota + victims * (handler + (1 + guard_grants) * max_occ))
}

fn quota_adherence(report: &StatsReport, config: &SimConfig) -> PropertyVerdict {
    let q = &config.quota;
    if q.budgets.is_empty() {
        return PropertyVerdict::from_evidence(QUOTA_ADHERENCE, vec![], "no quotas configured".into());
    }
    let mut ev = vec![];
    let mut worst: Option<(u64, u64)> = None;
    for b in &q.budgets {
        let Some(bound) = quota_bound(report, config, b.cycles) else {
            return PropertyVerdict::from_evidence(QUOTA_ADHERENCE, vec![], "log_only: quotas are not enforced".into());
        };
        let per = report
            .quota
            .caused_by_period
            .get(b.master.index())
            .map_or(&[][..], |v| v.as_slice());
        for (k, &caused) in per.iter().enumerate() {
            if worst.is_none_or(|(c, _)| caused > c) {
                worst = Some((caused, bound));
            }
            if caused > bound {
                ev.push(Evidence {
                    cycle: Some(k as u64 * q.period),
                    master: Some(b.master),
                    resource: None,
                    measured: Some(caused),
                    bound: Some(bound),
                    detail: format!("period {k}: caused {caused} > bound {bound}"),
                });
            }
        }
    }
    let summary = match worst {
        Some((c, b)) => format!("max caused per period {c} <= bound {b}"),
        None => "no contention caused".into(),
    };
    PropertyVerdict::from_evidence(QUOTA_ADHERENCE, ev, summary)
}
