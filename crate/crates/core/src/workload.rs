//! Per-master request streams: replayed traces or synthetic generators.
//!
//! Trace format, one record per line, fields separated by single spaces:
//!
//! ```text
//! <cycle> <master_id> <R|W> <0xHEXADDR> <size_bytes>
//! ```
//!
//! Lines starting with `#` are comments and empty lines are ignored.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::types::{valid_op_size, Cycle, MasterId, OpKind};

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemOp {
    pub issue_time: Cycle,
    pub master: MasterId,
    pub kind: OpKind,
    pub address: u64,
    pub size: u32,
}

fn trace_err(line: usize, message: impl Into<String>) -> TraceError {
    TraceError {
        line,
        message: message.into(),
    }
}

fn parse_line(line_no: usize, line: &str) -> Result<MemOp, TraceError> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 5 {
        return Err(trace_err(
            line_no,
            format!("expected 5 space-separated fields, found {}", fields.len()),
        ));
    }
    let issue_time = fields[0]
        .parse::<Cycle>()
        .map_err(|_| trace_err(line_no, format!("bad cycle `{}`", fields[0])))?;
    let master = fields[1]
        .parse::<u16>()
        .map_err(|_| trace_err(line_no, format!("bad master id `{}`", fields[1])))?;
    let kind = match fields[2] {
        "R" => OpKind::Read,
        "W" => OpKind::Write,
        other => return Err(trace_err(line_no, format!("bad kind `{other}` (expected R or W)"))),
    };
    let address = fields[3]
        .strip_prefix("0x")
        .filter(|h| !h.is_empty())
        .and_then(|h| u64::from_str_radix(h, 16).ok())
        .ok_or_else(|| trace_err(line_no, format!("bad address `{}`", fields[3])))?;
    let size = fields[4]
        .parse::<u32>()
        .map_err(|_| trace_err(line_no, format!("bad size `{}`", fields[4])))?;
    if !valid_op_size(size) {
        return Err(trace_err(
            line_no,
            format!("size {size} is not a power of two in [4, 64]"),
        ));
    }
    Ok(MemOp {
        issue_time,
        master: MasterId(master),
        kind,
        address,
        size,
    })
}

/// Parse a trace, validating that issue times never decrease within a master's stream.
pub fn parse_trace(text: &str) -> Result<Vec<MemOp>, TraceError> {
    let mut ops = Vec::new();
    let mut last_time: Vec<Option<Cycle>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let op = parse_line(line_no, line)?;
        let m = op.master.index();
        if last_time.len() <= m {
            last_time.resize(m + 1, None);
        }
        if let Some(prev) = last_time[m] {
            if op.issue_time < prev {
                return Err(trace_err(
                    line_no,
                    format!(
                        "master {} issue time {} precedes earlier {}",
                        op.master, op.issue_time, prev
                    ),
                ));
            }
        }
        last_time[m] = Some(op.issue_time);
        ops.push(op);
    }
    Ok(ops)
}

pub fn emit_trace(ops: &[MemOp]) -> String {
    let mut out = String::new();
    for op in ops {
        let _ = writeln!(
            out,
            "{} {} {} {:#x} {}",
            op.issue_time,
            op.master,
            op.kind.letter(),
            op.address,
            op.size
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficMode {
    /// Never issues anything.
    Idle,
    /// Issues whenever the outstanding limit allows.
    Saturating,
    /// One op every `period` cycles.
    Periodic,
    /// Saturating for `burst_len` cycles, silent for `burst_gap`, repeating.
    Bursty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddressPattern {
    #[default]
    Sequential,
    Random,
}

fn default_read_fraction() -> f64 {
    1.0
}
fn default_size() -> u32 {
    8
}
fn default_stride() -> u64 {
    64
}
fn default_footprint() -> u64 {
    1 << 20
}
fn default_base() -> u64 {
    0x8000_0000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProfile {
    pub mode: TrafficMode,
    #[serde(default)]
    pub period: Cycle,
    #[serde(default)]
    pub burst_len: Cycle,
    #[serde(default)]
    pub burst_gap: Cycle,
    /// Fraction of reads in `[0, 1]`.
    #[serde(default = "default_read_fraction")]
    pub kind_mix: f64,
    #[serde(default = "default_stride")]
    pub address_stride: u64,
    #[serde(default = "default_footprint")]
    pub footprint: u64,
    #[serde(default = "default_base")]
    pub base: u64,
    #[serde(default = "default_size")]
    pub size: u32,
    #[serde(default)]
    pub pattern: AddressPattern,
    /// First cycle the stream may issue at.
    #[serde(default)]
    pub start: Cycle,
    /// Stop after this many ops.
    #[serde(default)]
    pub count: Option<u64>,
}

impl SyntheticProfile {
    pub fn new(mode: TrafficMode) -> Self {
        Self {
            mode,
            period: 0,
            burst_len: 0,
            burst_gap: 0,
            kind_mix: default_read_fraction(),
            address_stride: default_stride(),
            footprint: default_footprint(),
            base: default_base(),
            size: default_size(),
            pattern: AddressPattern::Sequential,
            start: 0,
            count: None,
        }
    }

    /// Problems with this profile, as human-readable messages.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.mode {
            TrafficMode::Periodic if self.period < 1 => out.push("periodic mode requires period >= 1".into()),
            TrafficMode::Bursty if self.burst_len < 1 => out.push("bursty mode requires burst_len >= 1".into()),
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.kind_mix) {
            out.push(format!("kind_mix {} outside [0, 1]", self.kind_mix));
        }
        if !valid_op_size(self.size) {
            out.push(format!("size {} is not a power of two in [4, 64]", self.size));
        }
        if self.footprint < self.size as u64 {
            out.push(format!(
                "footprint {} smaller than op size {}",
                self.footprint, self.size
            ));
        }
        if valid_op_size(self.size) && !self.base.is_multiple_of(u64::from(self.size)) {
            out.push(format!("base {:#x} not aligned to op size {}", self.base, self.size));
        }
        out
    }
}

/// Deterministic generator for one master.
#[derive(Debug, Clone)]
pub struct SyntheticGen {
    profile: SyntheticProfile,
    master: MasterId,
    rng: ChaCha8Rng,
    generated: u64,
}

impl SyntheticGen {
    pub fn new(profile: SyntheticProfile, master: MasterId, seed: u64) -> Self {
        let stream = seed ^ (u64::from(master.0).wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Self {
            profile,
            master,
            rng: ChaCha8Rng::seed_from_u64(stream),
            generated: 0,
        }
    }

    fn exhausted(&self) -> bool {
        self.profile.mode == TrafficMode::Idle || self.profile.count.is_some_and(|c| self.generated >= c)
    }

    /// Earliest cycle `>= now` at which the next op becomes available.
    pub fn next_time(&self, now: Cycle) -> Option<Cycle> {
        if self.exhausted() {
            return None;
        }
        let p = &self.profile;
        let now = now.max(p.start);
        Some(match p.mode {
            TrafficMode::Idle => unreachable!(),
            TrafficMode::Saturating => now,
            // Backlogged periodic ops keep their nominal release time.
            TrafficMode::Periodic => p.start + self.generated * p.period,
            TrafficMode::Bursty => {
                let cycle_len = p.burst_len + p.burst_gap;
                let phase = (now - p.start) % cycle_len;
                if phase < p.burst_len {
                    now
                } else {
                    now + (cycle_len - phase)
                }
            }
        })
    }

    fn next_op(&mut self, issue_time: Cycle) -> MemOp {
        let p = &self.profile;
        let size = u64::from(p.size);
        let slots = (p.footprint / size).max(1);
        let offset = match p.pattern {
            AddressPattern::Sequential => (self.generated.wrapping_mul(p.address_stride) % p.footprint) / size * size,
            AddressPattern::Random => self.rng.gen_range(0..slots) * size,
        };
        let kind = if self.rng.gen::<f64>() < p.kind_mix {
            OpKind::Read
        } else {
            OpKind::Write
        };
        self.generated += 1;
        MemOp {
            issue_time,
            master: self.master,
            kind,
            address: p.base + offset,
            size: p.size,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    Trace(VecDeque<MemOp>),
    Synthetic(Box<SyntheticGen>),
}

impl Source {
    fn next_time(&self, now: Cycle) -> Option<Cycle> {
        match self {
            Source::Trace(ops) => ops.front().map(|op| op.issue_time.max(now)),
            Source::Synthetic(g) => g.next_time(now),
        }
    }

    fn take(&mut self, now: Cycle) -> Option<MemOp> {
        match self {
            Source::Trace(ops) => {
                if ops.front()?.issue_time <= now {
                    ops.pop_front()
                } else {
                    None
                }
            }
            Source::Synthetic(g) => {
                let t = g.next_time(now)?;
                (t <= now).then(|| g.next_op(t))
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Stream {
    source: Source,
    outstanding_limit: u32,
    in_flight: u32,
}

/// All traffic sources of a simulation, indexed by master.
#[derive(Debug, Clone, Default)]
pub struct Workload {
    streams: Vec<Stream>,
}

impl Workload {
    pub fn new() -> Self {
        Self::default()
    }

    /// Attach `source` to the next master index.
    pub fn attach(&mut self, source: Source, outstanding_limit: u32) -> MasterId {
        let id = MasterId(self.streams.len() as u16);
        self.streams.push(Stream {
            source,
            outstanding_limit: outstanding_limit.max(1),
            in_flight: 0,
        });
        id
    }

    pub fn num_masters(&self) -> usize {
        self.streams.len()
    }

    /// Next op with `issue_time <= now`, if the master's outstanding limit allows one.
    pub fn next_request(&mut self, master: MasterId, now: Cycle) -> Option<MemOp> {
        let s = &mut self.streams[master.index()];
        if s.in_flight >= s.outstanding_limit {
            return None;
        }
        let op = s.source.take(now)?;
        s.in_flight += 1;
        Some(op)
    }

    /// When the master could next issue, ignoring its outstanding limit.
    pub fn next_issue_time(&self, master: MasterId, now: Cycle) -> Option<Cycle> {
        self.streams[master.index()].source.next_time(now)
    }

    pub fn can_issue(&self, master: MasterId) -> bool {
        let s = &self.streams[master.index()];
        s.in_flight < s.outstanding_limit
    }

    pub fn complete(&mut self, master: MasterId) {
        let s = &mut self.streams[master.index()];
        debug_assert!(s.in_flight > 0);
        s.in_flight = s.in_flight.saturating_sub(1);
    }

    pub fn in_flight(&self, master: MasterId) -> u32 {
        self.streams[master.index()].in_flight
    }

    /// Every source exhausted and nothing outstanding.
    pub fn drained(&self) -> bool {
        self.streams
            .iter()
            .all(|s| s.in_flight == 0 && s.source.next_time(0).is_none())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_record() {
        let ops = parse_trace("100 2 R 0x80001000 8\n").unwrap();
        assert_eq!(
            ops,
            vec![MemOp {
                issue_time: 100,
                master: MasterId(2),
                kind: OpKind::Read,
                address: 0x8000_1000,
                size: 8
            }]
        );
    }

    #[test]
    fn empty_and_comment_only_traces_parse_to_nothing() {
        assert!(parse_trace("").unwrap().is_empty());
        assert!(parse_trace("# header\n\n# more\n").unwrap().is_empty());
    }

    #[test]
    fn rejects_non_power_of_two_size() {
        let err = parse_trace("100 2 R 0x80001000 7").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.message.contains("power of two"));
    }

    #[test]
    fn rejects_malformed_lines_with_line_numbers() {
        assert_eq!(parse_trace("# c\n1 0 R 0x10 8\n2 0 X 0x10 8").unwrap_err().line, 3);
        assert_eq!(parse_trace("1 0 R 10 8").unwrap_err().line, 1);
        assert_eq!(parse_trace("1  0 R 0x10 8").unwrap_err().line, 1);
        assert_eq!(parse_trace("1 0 R 0x10").unwrap_err().line, 1);
    }

    #[test]
    fn rejects_time_going_backwards_within_a_master() {
        let err = parse_trace("10 0 R 0x10 8\n5 1 R 0x10 8\n4 0 W 0x10 8\n").unwrap_err();
        assert_eq!(err.line, 3);
    }

    fn stream(profile: SyntheticProfile, limit: u32) -> Workload {
        let mut w = Workload::new();
        w.attach(
            Source::Synthetic(Box::new(SyntheticGen::new(profile, MasterId(0), 7))),
            limit,
        );
        w
    }

    #[test]
    fn saturating_issues_on_every_call_when_nothing_in_flight() {
        let mut w = stream(SyntheticProfile::new(TrafficMode::Saturating), 1);
        for now in 0..10 {
            assert!(w.next_request(MasterId(0), now).is_some());
            w.complete(MasterId(0));
        }
    }

    #[test]
    fn periodic_issues_on_the_period_grid() {
        let mut p = SyntheticProfile::new(TrafficMode::Periodic);
        p.period = 10;
        let mut w = stream(p, 1);
        let mut times = vec![];
        for now in 0..35 {
            if let Some(op) = w.next_request(MasterId(0), now) {
                times.push(op.issue_time);
                w.complete(MasterId(0));
            }
        }
        assert_eq!(times, vec![0, 10, 20, 30]);
    }

    #[test]
    fn outstanding_limit_blocks_issue() {
        let mut w = stream(SyntheticProfile::new(TrafficMode::Saturating), 1);
        assert!(w.next_request(MasterId(0), 0).is_some());
        assert!(w.next_request(MasterId(0), 1).is_none());
        w.complete(MasterId(0));
        assert!(w.next_request(MasterId(0), 2).is_some());
    }

    #[test]
    fn bursty_alternates_bursts_and_gaps() {
        let mut p = SyntheticProfile::new(TrafficMode::Bursty);
        p.burst_len = 2;
        p.burst_gap = 3;
        let mut w = stream(p, 4);
        let issued: Vec<bool> = (0..10).map(|t| w.next_request(MasterId(0), t).is_some()).collect();
        assert_eq!(
            issued,
            [true, true, false, false, false, true, true, false, false, false]
        );
        assert_eq!(w.next_issue_time(MasterId(0), 2), Some(5));
    }

    #[test]
    fn count_bounds_the_stream_and_drains() {
        let mut p = SyntheticProfile::new(TrafficMode::Saturating);
        p.count = Some(2);
        let mut w = stream(p, 4);
        assert!(w.next_request(MasterId(0), 0).is_some());
        assert!(w.next_request(MasterId(0), 0).is_some());
        assert!(w.next_request(MasterId(0), 0).is_none());
        assert!(!w.drained());
        w.complete(MasterId(0));
        w.complete(MasterId(0));
        assert!(w.drained());
    }

    #[test]
    fn profile_problems_are_reported() {
        let mut p = SyntheticProfile::new(TrafficMode::Periodic);
        p.kind_mix = 1.5;
        p.size = 12;
        let problems = p.problems();
        assert_eq!(problems.len(), 3, "{problems:?}");
    }
}
