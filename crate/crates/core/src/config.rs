//! Simulation configuration: TOML schema, defaults and validation.
//!
//! Syntax errors and unknown keys stop at the first problem (the TOML reader
//! reports line and key). Everything else is collected so a single `validate`
//! run lists every issue with the key path it concerns.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arbiter::Policy;
use crate::bus::OccupancyEntry;
use crate::error::{ConfigError, ValidationIssue};
use crate::l2::{partition_problems, CacheGeometry, PartitionMap};
use crate::memctrl::MemCtrlConfig;
use crate::noc::{id_width_fits, port_problems, PortConfig, SlaveKind, DEFAULT_ID_WIDTH};
use crate::safesu::{EnforcementMode, HandlerAction};
use crate::types::{valid_op_size, Cycle, MasterClass, MasterId};
use crate::workload::{parse_trace, MemOp, SyntheticProfile};

pub const SCHEMA_VERSION: u32 = 1;

fn one() -> Cycle {
    1
}
fn one_u32() -> u32 {
    1
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: Cycle,
    #[serde(default)]
    pub topology: Topology,
    #[serde(default)]
    pub bus: BusConfig,
    #[serde(default)]
    pub l2: L2Config,
    #[serde(default)]
    pub noc: NocConfig,
    #[serde(default)]
    pub memctrl: MemCtrlConfig,
    #[serde(default)]
    pub quota: QuotaConfig,
    #[serde(default)]
    pub masters: Vec<MasterBinding>,
    #[serde(default)]
    pub deadlines: Vec<DeadlineSpec>,
    #[serde(default)]
    pub check: CheckConfig,
}

fn default_horizon() -> Cycle {
    100_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Topology {
    pub cores: usize,
    pub accelerators: usize,
    pub id_width: u8,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            cores: 1,
            accelerators: 0,
            id_width: DEFAULT_ID_WIDTH,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BusConfig {
    pub policy: Policy,
    /// Rank per master (lower wins); defaults to the master id.
    pub priorities: Option<Vec<u32>>,
    pub occupancy: Vec<OccupancyEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionEntry {
    pub master: MasterId,
    pub ways: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L2Config {
    /// `false` replaces the cache with a plain bridge onto the NoC.
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_l2_size")]
    pub size_bytes: u64,
    #[serde(default = "default_line")]
    pub line_bytes: u32,
    #[serde(default = "default_ways")]
    pub ways: usize,
    #[serde(default = "default_hit_latency")]
    pub hit_latency: Cycle,
    #[serde(default = "one")]
    pub bridge_latency: Cycle,
    /// Absent means every core shares every way.
    #[serde(default)]
    pub partition: Option<Vec<PartitionEntry>>,
}

fn default_l2_size() -> u64 {
    CacheGeometry::default().size_bytes
}
fn default_line() -> u32 {
    CacheGeometry::default().line_bytes
}
fn default_ways() -> usize {
    CacheGeometry::default().ways
}
fn default_hit_latency() -> Cycle {
    CacheGeometry::default().hit_latency
}

impl Default for L2Config {
    fn default() -> Self {
        Self {
            enabled: true,
            size_bytes: default_l2_size(),
            line_bytes: default_line(),
            ways: default_ways(),
            hit_latency: default_hit_latency(),
            bridge_latency: 1,
            partition: None,
        }
    }
}

impl L2Config {
    pub fn geometry(&self) -> CacheGeometry {
        CacheGeometry {
            size_bytes: self.size_bytes,
            line_bytes: self.line_bytes,
            ways: self.ways,
            hit_latency: self.hit_latency,
        }
    }

    pub fn partition_map(&self) -> PartitionMap {
        self.partition.as_ref().map(|entries| {
            let mut map: BTreeMap<MasterId, Vec<usize>> = BTreeMap::new();
            for e in entries {
                map.entry(e.master).or_default().extend(&e.ways);
            }
            map
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NocConfig {
    #[serde(default = "one")]
    pub routing_latency: Cycle,
    #[serde(default = "one")]
    pub response_latency: Cycle,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub priorities: Option<Vec<u32>>,
    #[serde(default = "default_ports")]
    pub ports: Vec<PortConfig>,
}

pub fn default_ports() -> Vec<PortConfig> {
    vec![
        PortConfig {
            name: "mem".into(),
            kind: SlaveKind::Memory,
            base: 0x8000_0000,
            limit: 0x1_0000_0000,
            width_bytes: 16,
            latency: 10,
            cacheable: None,
        },
        PortConfig {
            name: "periph".into(),
            kind: SlaveKind::Peripheral,
            base: 0x1000_0000,
            limit: 0x2000_0000,
            width_bytes: 4,
            latency: 10,
            cacheable: None,
        },
    ]
}

impl Default for NocConfig {
    fn default() -> Self {
        Self {
            routing_latency: 1,
            response_latency: 1,
            policy: Policy::RoundRobin,
            priorities: None,
            ports: default_ports(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotaBudget {
    pub master: MasterId,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuotaConfig {
    pub period: Cycle,
    pub mode: EnforcementMode,
    pub handler_latency: Cycle,
    pub action: HandlerAction,
    /// Starvation guard window for stalled masters; 0 disables it.
    pub guard_cycles: Cycle,
    pub budgets: Vec<QuotaBudget>,
}

impl Default for QuotaConfig {
    fn default() -> Self {
        Self {
            period: 10_000,
            mode: EnforcementMode::Interrupt,
            handler_latency: 200,
            action: HandlerAction::LogOnly,
            guard_cycles: 100,
            budgets: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasterBinding {
    pub id: MasterId,
    #[serde(default = "one_u32")]
    pub outstanding_limit: u32,
    /// Trace file, relative to the config file.
    #[serde(default)]
    pub trace: Option<PathBuf>,
    /// Inline trace records in the trace file format.
    #[serde(default)]
    pub trace_text: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeadlineSpec {
    pub master: MasterId,
    /// Job `k` covers ops issued in `[k*period, (k+1)*period)`.
    pub period: Cycle,
    /// Every op of job `k` must complete by `k*period + deadline`.
    pub deadline: Cycle,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    /// Starvation window; defaults to ten times the resource's max occupancy.
    pub starvation_window: Option<Cycle>,
}

impl SimConfig {
    pub fn num_masters(&self) -> usize {
        self.topology.cores + self.topology.accelerators
    }

    pub fn class_of(&self, m: MasterId) -> MasterClass {
        if m.index() < self.topology.cores {
            MasterClass::Core
        } else {
            MasterClass::Accelerator
        }
    }

    pub fn binding(&self, m: MasterId) -> Option<&MasterBinding> {
        self.masters.iter().find(|b| b.id == m)
    }

    /// Parse TOML text without validating it.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        match table.get("schema_version") {
            None => {
                return Err(ConfigError::Invalid(vec![ValidationIssue::new(
                    "schema_version",
                    "missing",
                )]))
            }
            Some(v) => {
                let found = v.as_integer().unwrap_or(-1);
                if found != i64::from(SCHEMA_VERSION) {
                    return Err(ConfigError::SchemaVersion {
                        found: u32::try_from(found).unwrap_or(u32::MAX),
                        expected: SCHEMA_VERSION,
                    });
                }
            }
        }
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))
    }

    /// Every semantic problem in this config.
    pub fn validate(&self) -> Vec<ValidationIssue> {
        let mut out = vec![];
        let mut bad = |loc: String, msg: String| out.push(ValidationIssue::new(loc, msg));
        let n = self.num_masters();
        let t = &self.topology;

        if self.horizon < 1 {
            bad("horizon".into(), "must be >= 1".into());
        }
        if n == 0 {
            bad("topology".into(), "at least one master is required".into());
        }
        if n > usize::from(u16::MAX) {
            bad("topology".into(), format!("{n} masters is too many"));
        }
        if !id_width_fits(n, t.id_width) {
            bad(
                "topology.id_width".into(),
                format!(
                    "{n} masters do not fit in a {}-bit ID field (max {})",
                    t.id_width,
                    1u64 << t.id_width.min(63)
                ),
            );
        }

        let ranks = |loc: &str, p: &Option<Vec<u32>>, bad: &mut dyn FnMut(String, String)| {
            if let Some(p) = p {
                if p.len() != n {
                    bad(loc.into(), format!("expected {n} entries, found {}", p.len()));
                }
            }
        };
        ranks("bus.priorities", &self.bus.priorities, &mut bad);
        for (i, e) in self.bus.occupancy.iter().enumerate() {
            if e.cycles < 1 {
                bad(format!("bus.occupancy[{i}].cycles"), "must be >= 1".into());
            }
            if !valid_op_size(e.size) {
                bad(
                    format!("bus.occupancy[{i}].size"),
                    format!("{} is not a power of two in [4, 64]", e.size),
                );
            }
        }

        let l2 = &self.l2;
        if l2.bridge_latency < 1 {
            bad("l2.bridge_latency".into(), "must be >= 1".into());
        }
        if l2.enabled {
            let geom = l2.geometry();
            let geom_problems = geom.problems();
            let geom_ok = geom_problems.is_empty();
            for p in geom_problems {
                bad("l2".into(), p);
            }
            if let Some(entries) = &l2.partition {
                let mut seen = BTreeSet::new();
                for e in entries {
                    if !seen.insert(e.master) {
                        bad("l2.partition".into(), format!("master {} listed twice", e.master));
                    }
                }
                if geom_ok {
                    for p in partition_problems(&l2.partition_map(), l2.ways, t.cores) {
                        bad("l2.partition".into(), p);
                    }
                }
            }
        }

        let noc = &self.noc;
        if noc.routing_latency < 1 {
            bad("noc.routing_latency".into(), "must be >= 1".into());
        }
        if noc.response_latency < 1 {
            bad("noc.response_latency".into(), "must be >= 1".into());
        }
        ranks("noc.priorities", &noc.priorities, &mut bad);
        for p in port_problems(&noc.ports) {
            bad("noc.ports".into(), p);
        }
        if noc.ports.iter().filter(|p| p.kind == SlaveKind::Memory).count() > 1 {
            bad("noc.ports".into(), "only one memory port is supported".into());
        }

        let mc = &self.memctrl;
        if mc.read_cycles < 1 || mc.write_cycles < 1 {
            bad("memctrl".into(), "read_cycles and write_cycles must be >= 1".into());
        }
        if mc.fifo_capacity < 1 {
            bad("memctrl.fifo_capacity".into(), "must be >= 1".into());
        }

        let q = &self.quota;
        if q.period < 1 {
            bad("quota.period".into(), "must be >= 1".into());
        }
        if q.handler_latency < 1 {
            bad("quota.handler_latency".into(), "must be >= 1".into());
        }
        let mut budgeted = BTreeSet::new();
        for (i, b) in q.budgets.iter().enumerate() {
            let loc = format!("quota.budgets[{i}]");
            if b.master.index() >= t.cores {
                bad(loc.clone(), format!("master {} is not a core", b.master));
            }
            if b.cycles < 1 {
                bad(loc.clone(), "cycles must be >= 1".into());
            }
            if !budgeted.insert(b.master) {
                bad(loc, format!("master {} has two budgets", b.master));
            }
        }

        let mut bound = BTreeSet::new();
        for (i, b) in self.masters.iter().enumerate() {
            let loc = format!("masters[{i}]");
            if b.id.index() >= n {
                bad(
                    format!("{loc}.id"),
                    format!("master {} does not exist ({n} masters)", b.id),
                );
            }
            if !bound.insert(b.id) {
                bad(format!("{loc}.id"), format!("master {} bound twice", b.id));
            }
            if b.outstanding_limit < 1 {
                bad(format!("{loc}.outstanding_limit"), "must be >= 1".into());
            }
            let sources = usize::from(b.trace.is_some())
                + usize::from(b.trace_text.is_some())
                + usize::from(b.synthetic.is_some());
            if sources != 1 {
                bad(
                    loc.clone(),
                    "exactly one of trace, trace_text, synthetic is required".into(),
                );
            }
            if let Some(s) = &b.synthetic {
                for p in s.problems() {
                    bad(format!("{loc}.synthetic"), p);
                }
            }
        }
        for m in 0..n {
            let id = MasterId(m as u16);
            if !bound.contains(&id) {
                bad("masters".into(), format!("master {id} has no workload binding"));
            }
        }

        for (i, d) in self.deadlines.iter().enumerate() {
            let loc = format!("deadlines[{i}]");
            if d.master.index() >= n {
                bad(loc.clone(), format!("master {} does not exist", d.master));
            }
            if d.period < 1 || d.deadline < 1 {
                bad(loc, "period and deadline must be >= 1".into());
            }
        }
        if self.check.starvation_window == Some(0) {
            bad("check.starvation_window".into(), "must be >= 1".into());
        }
        out
    }
}

/// A validated configuration with its trace files read.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: SimConfig,
    /// Trace records per traced master.
    pub traces: BTreeMap<MasterId, Vec<MemOp>>,
}

impl Experiment {
    /// Parse, validate and resolve traces relative to `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let config = SimConfig::parse(text)?;
        Self::new(config, base_dir)
    }

    pub fn new(config: SimConfig, base_dir: &Path) -> Result<Self, ConfigError> {
        let issues = config.validate();
        if !issues.is_empty() {
            return Err(ConfigError::Invalid(issues));
        }
        let mut traces = BTreeMap::new();
        for b in &config.masters {
            let ops = if let Some(p) = &b.trace {
                let path = base_dir.join(p);
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                parse_trace(&text).map_err(|source| ConfigError::Trace { path, source })?
            } else if let Some(text) = &b.trace_text {
                parse_trace(text).map_err(|source| ConfigError::Trace {
                    path: PathBuf::from(format!("masters[id={}].trace_text", b.id)),
                    source,
                })?
            } else {
                continue;
            };
            traces.insert(b.id, ops.into_iter().filter(|op| op.master == b.id).collect());
        }
        Ok(Self { config, traces })
    }
}

/// Read, parse and validate the config at `path`.
pub fn load_config(path: &Path) -> Result<Experiment, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Experiment::from_toml(&text, base)
}
