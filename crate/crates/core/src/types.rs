//! Identifiers and the transaction record shared by every component.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Simulation time in abstract clock cycles.
pub type Cycle = u64;

/// Identifier of a traffic source (core or accelerator).
///
/// Cores occupy `0..cores`, accelerators follow them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MasterId(pub u16);

impl MasterId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for MasterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MasterClass {
    Core,
    Accelerator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Read,
    Write,
}

impl OpKind {
    pub fn letter(self) -> char {
        match self {
            OpKind::Read => 'R',
            OpKind::Write => 'W',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxnId(pub u64);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Sizes accepted on the request path: powers of two in `[4, 64]`.
pub fn valid_op_size(size: u32) -> bool {
    size.is_power_of_two() && (4..=64).contains(&size)
}

/// One memory operation as it travels through the shared resources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub id: TxnId,
    pub owner: MasterId,
    pub kind: OpKind,
    pub address: u64,
    pub size: u32,
    pub t_issued: Cycle,
    pub t_granted: Option<Cycle>,
    pub t_completed: Option<Cycle>,
}

impl Transaction {
    pub fn new(id: TxnId, owner: MasterId, kind: OpKind, address: u64, size: u32, now: Cycle) -> Self {
        Self {
            id,
            owner,
            kind,
            address,
            size,
            t_issued: now,
            t_granted: None,
            t_completed: None,
        }
    }

    pub fn grant(&mut self, now: Cycle) {
        debug_assert!(now >= self.t_issued);
        self.t_granted = Some(now);
    }

    pub fn complete(&mut self, now: Cycle) {
        debug_assert!(self.t_granted.is_none_or(|g| g <= now));
        self.t_completed = Some(now);
    }

    pub fn latency(&self) -> Option<Cycle> {
        self.t_completed.map(|c| c - self.t_issued)
    }
}
