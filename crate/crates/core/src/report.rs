//! Run statistics and their on-disk formats.
//!
//! * `report.json`: the full [`StatsReport`], pretty-printed, stable field order.
//! * `contention_<resource>.csv`: one matrix per resource. The header row lists
//!   master IDs; row `i` holds the cycles master `i` caused to each master.
//!   A `:` in the resource name becomes `_` in the file name.
//! * `events.log`: one event per line, `<cycle> <kind> <core> <detail>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arbiter::Policy;
use crate::config::SimConfig;
use crate::error::Error;
use crate::l2::CacheStats;
use crate::memctrl::{InitiatorSnapshot, ServiceRecord};
use crate::resource::{InversionRecord, ResourceCounters, WaitRecord};
use crate::safesu::{ContentionMatrix, QuotaEvent, QuotaState};
use crate::types::{Cycle, MasterClass, MasterId, OpKind, TxnId};
use crate::verify::PropertyVerdict;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub min: Cycle,
    pub mean: f64,
    pub max: Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterStats {
    pub id: MasterId,
    pub class: MasterClass,
    pub issued: u64,
    pub completed: u64,
    pub latency: Option<LatencySummary>,
    /// `histogram[i]` counts latencies in `[2^i, 2^(i+1))`.
    pub histogram: Vec<u64>,
    pub grants: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub name: String,
    /// `None` for the memory controller, which has its own scheduler.
    pub policy: Option<Policy>,
    pub max_occupancy: Cycle,
    pub counters: ResourceCounters,
    /// 1 if an occupancy was still running at the end of the run.
    pub in_progress: u64,
    pub contention: ContentionMatrix,
    pub longest_waits: Vec<WaitRecord>,
    pub open_waits: Vec<WaitRecord>,
    pub inversions: Vec<InversionRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemCtrlReport {
    pub services: u64,
    pub backpressure_events: u64,
    pub enqueued: u64,
    pub dequeued: u64,
    pub pending_at_end: Vec<InitiatorSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotaReport {
    pub states: Vec<Option<QuotaState>>,
    pub events: Vec<QuotaEvent>,
    /// Caused contention per master per period, summed over all resources.
    pub caused_by_period: Vec<Vec<u64>>,
}

/// A stretch during which a core's stall line was held.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallEpisode {
    pub core: MasterId,
    pub start: Cycle,
    /// Release cycle; `None` if still held when the run ended.
    pub end: Option<Cycle>,
    pub window: Cycle,
    /// Completions of the core in each full guard window from `start`.
    pub completions_per_window: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlineMiss {
    pub master: MasterId,
    pub job: u64,
    pub due: Cycle,
    pub txn: TxnId,
    pub completed: Option<Cycle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMismatch {
    pub txn: TxnId,
    pub expected: Option<MasterId>,
    pub seen: MasterId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdIntegrity {
    /// Requests checked at the memory controller.
    pub checked: u64,
    pub mismatches: u64,
    pub first_mismatch: Option<IdMismatch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub scheduled: u64,
    pub processed: u64,
    pub pending: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema_version: u32,
    pub seed: u64,
    pub horizon: Cycle,
    pub final_cycle: Cycle,
    pub drained: bool,
    pub events: EventCounts,
    pub config: SimConfig,
    pub masters: Vec<MasterStats>,
    pub resources: Vec<ResourceReport>,
    pub memctrl: MemCtrlReport,
    pub l2: Option<CacheStats>,
    pub quota: QuotaReport,
    pub stall_episodes: Vec<StallEpisode>,
    pub deadline_misses: Vec<DeadlineMiss>,
    pub id_integrity: IdIntegrity,
    pub verdicts: Vec<PropertyVerdict>,
}

impl StatsReport {
    pub fn resource(&self, name: &str) -> Option<&ResourceReport> {
        self.resources.iter().find(|r| r.name == name)
    }

    pub fn verdict(&self, name: &str) -> Option<&PropertyVerdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantLog {
    pub cycle: Cycle,
    /// Index into `StatsReport::resources`.
    pub resource: usize,
    pub master: MasterId,
    pub txn: TxnId,
    pub done_at: Cycle,
    pub waited: Cycle,
    pub via_guard: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionLog {
    pub txn: TxnId,
    pub master: MasterId,
    pub kind: OpKind,
    pub t_issued: Cycle,
    pub t_granted: Option<Cycle>,
    pub t_completed: Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackpressureLog {
    pub cycle: Cycle,
    pub port: usize,
    pub master: MasterId,
}

/// Per-event records kept alongside the report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLog {
    pub grants: Vec<GrantLog>,
    pub completions: Vec<CompletionLog>,
    /// `(cycle, initiator)` of every accepted memory-controller enqueue.
    pub mem_enqueues: Vec<(Cycle, MasterId)>,
    pub services: Vec<ServiceRecord>,
    pub backpressure: Vec<BackpressureLog>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: StatsReport,
    pub log: RunLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

pub fn report_json(report: &StatsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn csv_file_name(resource: &str) -> String {
    format!("contention_{}.csv", resource.replace(':', "_"))
}

pub fn contention_csv(m: &ContentionMatrix) -> String {
    let mut s = String::new();
    let header: Vec<String> = (0..m.size).map(|i| i.to_string()).collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// The event log text: grants, services, completions, quota events and backpressure.
pub fn events_log(out: &RunOutput) -> String {
    let names: Vec<&str> = out.report.resources.iter().map(|r| r.name.as_str()).collect();
    let port_names: Vec<&str> = out.report.config.noc.ports.iter().map(|p| p.name.as_str()).collect();
    let mut lines: Vec<(Cycle, u8, String)> = vec![];
    for g in &out.log.grants {
        lines.push((
            g.cycle,
            1,
            format!(
                "{} grant {} resource={} txn={} done_at={} waited={} guard={}",
                g.cycle,
                g.master,
                names[g.resource],
                g.txn,
                g.done_at,
                g.waited,
                u8::from(g.via_guard)
            ),
        ));
    }
    for s in &out.log.services {
        lines.push((
            s.start_cycle,
            2,
            format!(
                "{} service {} txn={} kind={} addr={:#x} end={}",
                s.start_cycle,
                s.owner,
                s.txn_id,
                s.kind.letter(),
                s.address,
                s.end_cycle
            ),
        ));
    }
    for b in &out.log.backpressure {
        lines.push((
            b.cycle,
            3,
            format!("{} backpressure {} port=noc:{}", b.cycle, b.master, port_names[b.port]),
        ));
    }
    for c in &out.log.completions {
        lines.push((
            c.t_completed,
            4,
            format!(
                "{} complete {} txn={} issued={} latency={}",
                c.t_completed,
                c.master,
                c.txn,
                c.t_issued,
                c.t_completed - c.t_issued
            ),
        ));
    }
    for e in &out.report.quota.events {
        lines.push((
            e.cycle,
            5,
            format!("{} {} {} used={}", e.cycle, e.kind.as_str(), e.core, e.used_at_event),
        ));
    }
    lines.sort_by_key(|(c, k, _)| (*c, *k));
    let mut s = String::new();
    for (_, _, l) in lines {
        let _ = writeln!(s, "{l}");
    }
    s
}

fn write(path: PathBuf, body: &str, written: &mut Vec<PathBuf>) -> Result<(), Error> {
    std::fs::write(&path, body).map_err(|source| Error::Output {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

/// Write the requested formats (and the event log if asked) into `dir`.
pub fn emit_report(
    out: &RunOutput,
    dir: &Path,
    formats: &[OutputFormat],
    log_events: bool,
) -> Result<Vec<PathBuf>, Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Output {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = vec![];
    if formats.contains(&OutputFormat::Json) {
        write(dir.join("report.json"), &report_json(&out.report), &mut written)?;
    }
    if formats.contains(&OutputFormat::Csv) {
        for r in &out.report.resources {
            write(
                dir.join(csv_file_name(&r.name)),
                &contention_csv(&r.contention),
                &mut written,
            )?;
        }
    }
    if log_events {
        write(dir.join("events.log"), &events_log(out), &mut written)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_square_body() {
        let mut m = ContentionMatrix::new("noc:mem", 3);
        m.cells[1] = 5;
        let csv = contention_csv(&m);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, ["0,1,2", "0,5,0", "0,0,0", "0,0,0"]);
        assert_eq!(csv_file_name(&m.resource), "contention_noc_mem.csv");
    }
}
