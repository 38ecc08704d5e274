//! Crossbar between NoC masters (the L2 or bridge, accelerators) and slave ports.
//!
//! Each output port arbitrates on its own, so transfers to different slaves
//! overlap freely. Requests are queued per initiator ID as carried in the
//! packet's ID field; the crossbar never rewrites that field.

use serde::{Deserialize, Serialize};

use crate::arbiter::Arbiter;
use crate::error::SimError;
use crate::resource::{Attribution, GrantInfo, Owned, SharedResource};
use crate::types::{Cycle, MasterId, Transaction, TxnId};

pub const DEFAULT_ID_WIDTH: u8 = 4;

/// Initiator ID as carried in the interconnect's QoS/ID bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IdField {
    width: u8,
    value: u16,
}

impl IdField {
    /// Encode `owner` into a `width`-bit field.
    pub fn inject(owner: MasterId, width: u8) -> Result<Self, SimError> {
        if width >= 16 || u32::from(owner.0) < (1u32 << width) {
            Ok(Self { width, value: owner.0 })
        } else {
            Err(SimError::IdOverflow { owner, width })
        }
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn value(&self) -> MasterId {
        MasterId(self.value)
    }
}

/// True if `num_masters` distinct IDs fit in `width` bits.
pub fn id_width_fits(num_masters: usize, width: u8) -> bool {
    width >= 16 || num_masters as u64 <= 1u64 << width
}

/// How a completed downstream request is turned into a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reply {
    /// Completes a core transaction that missed in (or bypassed) the L2.
    Core(TxnId),
    /// Completes the accelerator's own transaction.
    Accelerator,
    /// Dirty eviction; nobody waits for it.
    Writeback,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub txn: Transaction,
    pub id: IdField,
    pub reply: Reply,
}

impl Owned for Packet {
    fn owner(&self) -> MasterId {
        self.id.value()
    }
}

/// Identity transport: what leaves the crossbar is what entered.
pub fn carry_id(pkt: Packet) -> Packet {
    pkt
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlaveKind {
    Memory,
    Peripheral,
}

fn default_width() -> u32 {
    16
}
fn default_latency() -> Cycle {
    10
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortConfig {
    pub name: String,
    pub kind: SlaveKind,
    /// Inclusive lower bound of the owned address range.
    pub base: u64,
    /// Exclusive upper bound.
    pub limit: u64,
    #[serde(default = "default_width")]
    pub width_bytes: u32,
    /// Fixed service time of a peripheral slave.
    #[serde(default = "default_latency")]
    pub latency: Cycle,
    /// Whether the L2 may cache this range; defaults to true for memory only.
    #[serde(default)]
    pub cacheable: Option<bool>,
}

impl PortConfig {
    pub fn contains(&self, address: u64) -> bool {
        (self.base..self.limit).contains(&address)
    }

    pub fn is_cacheable(&self) -> bool {
        self.cacheable.unwrap_or(self.kind == SlaveKind::Memory)
    }

    /// Transfer occupancy: one cycle per port-width beat, at least one.
    pub fn transfer_cycles(&self, size: u32) -> Cycle {
        u64::from(size / self.width_bytes.max(1)).max(1)
    }
}

/// Problems with a port map: empty or overlapping ranges, zero width.
pub fn port_problems(ports: &[PortConfig]) -> Vec<String> {
    let mut out = vec![];
    if ports.is_empty() {
        out.push("at least one slave port is required".into());
    }
    if !ports.iter().any(|p| p.kind == SlaveKind::Memory) {
        out.push("no memory port defined".into());
    }
    for (i, p) in ports.iter().enumerate() {
        if p.base >= p.limit {
            out.push(format!(
                "port `{}`: empty range [{:#x}, {:#x})",
                p.name, p.base, p.limit
            ));
        }
        if p.width_bytes == 0 {
            out.push(format!("port `{}`: width_bytes must be >= 1", p.name));
        }
        if p.kind == SlaveKind::Peripheral && p.latency < 1 {
            out.push(format!("port `{}`: latency must be >= 1", p.name));
        }
        for q in &ports[i + 1..] {
            if p.base < q.limit && q.base < p.limit {
                out.push(format!("ports `{}` and `{}` overlap", p.name, q.name));
            }
            if p.name == q.name {
                out.push(format!("duplicate port name `{}`", p.name));
            }
        }
    }
    out
}

#[derive(Debug)]
pub struct OutputPort {
    pub config: PortConfig,
    pub inner: SharedResource<Packet>,
}

impl OutputPort {
    pub fn resource_name(&self) -> String {
        format!("noc:{}", self.config.name)
    }

    pub fn max_occupancy(&self, max_size: u32) -> Cycle {
        self.config.transfer_cycles(max_size)
    }

    pub fn arbitrate(&mut self, now: Cycle) -> Option<(GrantInfo, &mut Packet)> {
        let cfg = &self.config;
        self.inner.arbitrate(now, |p| cfg.transfer_cycles(p.txn.size))
    }

    pub fn accrue(&mut self, now: Cycle, out: &mut Vec<Attribution>) {
        self.inner.accrue(now, out);
    }
}

#[derive(Debug)]
pub struct Crossbar {
    pub ports: Vec<OutputPort>,
    pub routing_latency: Cycle,
    pub response_latency: Cycle,
}

impl Crossbar {
    /// `arbiters` supplies one arbiter per port, in port order.
    pub fn new(
        configs: Vec<PortConfig>,
        arbiters: impl IntoIterator<Item = Arbiter>,
        routing_latency: Cycle,
        response_latency: Cycle,
    ) -> Self {
        let ports = configs
            .into_iter()
            .zip(arbiters)
            .map(|(config, arb)| OutputPort {
                inner: SharedResource::new(format!("noc:{}", config.name), arb),
                config,
            })
            .collect();
        Self {
            ports,
            routing_latency,
            response_latency,
        }
    }

    /// Index of the unique port owning `address`.
    pub fn route(&self, txn: TxnId, address: u64) -> Result<usize, SimError> {
        self.ports
            .iter()
            .position(|p| p.config.contains(address))
            .ok_or(SimError::Unmapped { txn, address })
    }

    pub fn is_cacheable(&self, address: u64) -> bool {
        self.ports
            .iter()
            .find(|p| p.config.contains(address))
            .is_some_and(|p| p.config.is_cacheable())
    }

    pub fn apply_stall(&mut self, mask: &[bool], now: Cycle) {
        for p in &mut self.ports {
            p.inner.arbiter.state.apply_stall(mask, now);
        }
    }
}
