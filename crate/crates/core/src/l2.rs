//! Shared, way-partitionable L2 cache.
//!
//! Write-back, write-allocate, LRU within the requesting core's partition.
//! A line is allocated when the miss is detected; the fill travels downstream
//! carrying the requester's ID. A dirty victim produces a writeback owned by
//! the core whose access evicted it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::{MasterId, OpKind, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheGeometry {
    pub size_bytes: u64,
    pub line_bytes: u32,
    pub ways: usize,
    pub hit_latency: u64,
}

impl Default for CacheGeometry {
    fn default() -> Self {
        Self {
            size_bytes: 256 * 1024,
            line_bytes: 64,
            ways: 16,
            hit_latency: 10,
        }
    }
}

impl CacheGeometry {
    pub fn problems(&self) -> Vec<String> {
        let mut out = vec![];
        if self.ways < 1 {
            out.push("ways must be >= 1".into());
        }
        if !self.line_bytes.is_power_of_two() || self.line_bytes < 4 {
            out.push(format!("line_bytes {} must be a power of two >= 4", self.line_bytes));
        }
        let set_bytes = u64::from(self.line_bytes) * self.ways.max(1) as u64;
        if self.size_bytes == 0 || !self.size_bytes.is_multiple_of(set_bytes) {
            out.push(format!(
                "size_bytes {} is not a positive multiple of line_bytes * ways = {}",
                self.size_bytes, set_bytes
            ));
        }
        if self.hit_latency < 1 {
            out.push("hit_latency must be >= 1".into());
        }
        out
    }

    pub fn num_sets(&self) -> usize {
        (self.size_bytes / (u64::from(self.line_bytes) * self.ways as u64)) as usize
    }
}

/// Way sets per core. `None` means every core may use every way.
pub type PartitionMap = Option<BTreeMap<MasterId, Vec<usize>>>;

/// Problems with `map` for a cache of `ways` ways shared by `cores` cores.
pub fn partition_problems(map: &PartitionMap, ways: usize, cores: usize) -> Vec<String> {
    let Some(map) = map else {
        return vec![];
    };
    let mut out = vec![];
    let mut owner_of: Vec<Option<MasterId>> = vec![None; ways];
    for (&m, set) in map {
        if m.index() >= cores {
            out.push(format!("master {m} is not a core"));
        }
        for &w in set {
            if w >= ways {
                out.push(format!("master {m}: way {w} out of range [0, {ways})"));
                continue;
            }
            match owner_of[w] {
                Some(prev) if prev != m => out.push(format!("way {w} assigned to both master {prev} and master {m}")),
                _ => owner_of[w] = Some(m),
            }
        }
    }
    for c in 0..cores {
        let id = MasterId(c as u16);
        if map.get(&id).is_none_or(|s| s.is_empty()) {
            out.push(format!("core {id} has an empty partition"));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheLineState {
    /// Line number (address / line_bytes).
    pub tag: u64,
    pub valid: bool,
    pub dirty: bool,
    pub lru_rank: u64,
    pub filled_by: MasterId,
}

impl CacheLineState {
    const EMPTY: Self = Self {
        tag: 0,
        valid: false,
        dirty: false,
        lru_rank: 0,
        filled_by: MasterId(0),
    };
}

/// A request the cache sends towards memory, before ID injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Downstream {
    pub owner: MasterId,
    pub kind: OpKind,
    pub address: u64,
    pub size: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Hit,
    Miss {
        fill: Downstream,
        writeback: Option<Downstream>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub writebacks: u64,
    pub evictions: u64,
    /// Evictions of a line that a different core had filled.
    pub cross_core_evictions: u64,
    /// Evictions from a way outside the evicting core's partition.
    pub cross_partition_evictions: u64,
}

#[derive(Debug, Clone)]
pub struct L2Cache {
    geom: CacheGeometry,
    num_sets: usize,
    lines: Vec<CacheLineState>,
    ways_of: Vec<Vec<usize>>,
    clock: u64,
    pub stats: CacheStats,
}

impl L2Cache {
    /// Build a cache for `cores` cores. Geometry and partition must already be valid.
    pub fn new(geom: CacheGeometry, cores: usize, partition: &PartitionMap) -> Self {
        let num_sets = geom.num_sets();
        let mut c = Self {
            geom,
            num_sets,
            lines: vec![CacheLineState::EMPTY; num_sets * geom.ways],
            ways_of: vec![],
            clock: 0,
            stats: CacheStats::default(),
        };
        c.resolve(cores, partition);
        c
    }

    fn resolve(&mut self, cores: usize, partition: &PartitionMap) {
        self.ways_of = (0..cores)
            .map(|c| match partition {
                None => (0..self.geom.ways).collect(),
                Some(map) => {
                    let mut w = map.get(&MasterId(c as u16)).cloned().unwrap_or_default();
                    w.sort_unstable();
                    w.dedup();
                    w
                }
            })
            .collect();
    }

    /// Swap in a new partition map; resident lines outside a core's ways become invisible to it.
    pub fn configure_partition(&mut self, partition: &PartitionMap) -> Result<(), Vec<String>> {
        let cores = self.ways_of.len();
        let problems = partition_problems(partition, self.geom.ways, cores);
        if !problems.is_empty() {
            return Err(problems);
        }
        self.resolve(cores, partition);
        Ok(())
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geom
    }

    pub fn line_of(&self, address: u64) -> u64 {
        address / u64::from(self.geom.line_bytes)
    }

    fn slot(&self, set: usize, way: usize) -> usize {
        set * self.geom.ways + way
    }

    /// Look up `txn` within its owner's partition, allocating on a miss.
    pub fn access(&mut self, txn: &Transaction) -> Access {
        self.clock += 1;
        let owner = txn.owner;
        let line = self.line_of(txn.address);
        let set = (line % self.num_sets as u64) as usize;
        let ways = &self.ways_of[owner.index()];

        for &w in ways {
            let i = set * self.geom.ways + w;
            let l = &mut self.lines[i];
            if l.valid && l.tag == line {
                l.lru_rank = self.clock;
                if txn.kind == OpKind::Write {
                    l.dirty = true;
                }
                self.stats.hits += 1;
                return Access::Hit;
            }
        }

        self.stats.misses += 1;
        let victim_way = ways
            .iter()
            .copied()
            .find(|&w| !self.lines[self.slot(set, w)].valid)
            .or_else(|| {
                ways.iter()
                    .copied()
                    .min_by_key(|&w| self.lines[self.slot(set, w)].lru_rank)
            })
            .expect("core partition is non-empty");
        let in_partition = ways.contains(&victim_way);
        let i = self.slot(set, victim_way);
        let line_bytes = self.geom.line_bytes;
        let victim = self.lines[i];
        let mut writeback = None;
        if victim.valid {
            self.stats.evictions += 1;
            if victim.filled_by != owner {
                self.stats.cross_core_evictions += 1;
            }
            if !in_partition {
                self.stats.cross_partition_evictions += 1;
            }
            if victim.dirty {
                self.stats.writebacks += 1;
                writeback = Some(Downstream {
                    owner,
                    kind: OpKind::Write,
                    address: victim.tag * u64::from(line_bytes),
                    size: line_bytes,
                });
            }
        }
        self.lines[i] = CacheLineState {
            tag: line,
            valid: true,
            dirty: txn.kind == OpKind::Write,
            lru_rank: self.clock,
            filled_by: owner,
        };
        Access::Miss {
            fill: Downstream {
                owner,
                kind: OpKind::Read,
                address: line * u64::from(line_bytes),
                size: line_bytes,
            },
            writeback,
        }
    }

    /// State of a resident line visible anywhere in the cache, for inspection.
    pub fn probe(&self, address: u64) -> Vec<(usize, CacheLineState)> {
        let line = self.line_of(address);
        let set = (line % self.num_sets as u64) as usize;
        (0..self.geom.ways)
            .map(|w| (w, self.lines[self.slot(set, w)]))
            .filter(|(_, l)| l.valid && l.tag == line)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TxnId;

    // 4 sets x 4 ways x 64 B
    fn geom() -> CacheGeometry {
        CacheGeometry {
            size_bytes: 4 * 4 * 64,
            line_bytes: 64,
            ways: 4,
            hit_latency: 2,
        }
    }

    fn txn(m: u16, kind: OpKind, addr: u64) -> Transaction {
        Transaction::new(TxnId(0), MasterId(m), kind, addr, 8, 0)
    }

    fn two_way_split() -> PartitionMap {
        Some(BTreeMap::from([(MasterId(0), vec![0, 1]), (MasterId(1), vec![2, 3])]))
    }

    // Addresses mapping to set 0: multiples of 4 lines.
    fn set0(k: u64) -> u64 {
        k * 4 * 64
    }

    #[test]
    fn cold_read_misses_with_one_line_fill() {
        let mut c = L2Cache::new(geom(), 2, &None);
        let a = 0x8000_0048;
        match c.access(&txn(0, OpKind::Read, a)) {
            Access::Miss { fill, writeback } => {
                assert_eq!(fill.owner, MasterId(0));
                assert_eq!(fill.kind, OpKind::Read);
                assert_eq!(fill.address, 0x8000_0040);
                assert_eq!(fill.size, 64);
                assert!(writeback.is_none());
            }
            Access::Hit => panic!("cold cache hit"),
        }
        assert_eq!(c.access(&txn(0, OpKind::Read, a)), Access::Hit);
    }

    #[test]
    fn victim_comes_from_own_partition() {
        let mut c = L2Cache::new(geom(), 2, &two_way_split());
        c.access(&txn(1, OpKind::Read, set0(10)));
        c.access(&txn(0, OpKind::Read, set0(1)));
        c.access(&txn(0, OpKind::Read, set0(2)));
        c.access(&txn(0, OpKind::Read, set0(3)));
        // A (set0(1)) was LRU in core 0's ways and got evicted; core 1's line survives.
        assert!(c.probe(set0(1)).is_empty());
        assert_eq!(c.probe(set0(10))[0].0, 2);
        assert_eq!(c.stats.cross_core_evictions, 0);
        assert_eq!(c.stats.cross_partition_evictions, 0);
        assert_eq!(c.stats.evictions, 1);
    }

    #[test]
    fn dirty_victim_writeback_is_owned_by_the_evictor() {
        let mut c = L2Cache::new(geom(), 2, &None);
        for k in 0..4 {
            c.access(&txn(1, OpKind::Write, set0(k)));
        }
        match c.access(&txn(0, OpKind::Read, set0(9))) {
            Access::Miss {
                writeback: Some(wb), ..
            } => {
                assert_eq!(wb.owner, MasterId(0));
                assert_eq!(wb.address, set0(0));
                assert_eq!(wb.kind, OpKind::Write);
            }
            other => panic!("expected writeback, got {other:?}"),
        }
        assert_eq!(c.stats.cross_core_evictions, 1);
    }

    #[test]
    fn lines_outside_partition_are_invisible() {
        let mut c = L2Cache::new(geom(), 2, &None);
        c.access(&txn(0, OpKind::Read, set0(0)));
        let way = c.probe(set0(0))[0].0;
        let mut map = BTreeMap::new();
        map.insert(MasterId(0), vec![(way + 1) % 4]);
        map.insert(MasterId(1), vec![way]);
        c.configure_partition(&Some(map)).unwrap();
        assert!(matches!(c.access(&txn(0, OpKind::Read, set0(0))), Access::Miss { .. }));
        assert_eq!(c.access(&txn(1, OpKind::Read, set0(0))), Access::Hit);
    }

    #[test]
    fn overlapping_partitions_are_rejected() {
        let bad = Some(BTreeMap::from([(MasterId(0), vec![0, 1]), (MasterId(1), vec![1, 2])]));
        let p = partition_problems(&bad, 4, 2);
        assert_eq!(p.len(), 1, "{p:?}");
        let empty = Some(BTreeMap::from([(MasterId(0), vec![0])]));
        assert!(partition_problems(&empty, 4, 2)[0].contains("empty partition"));
        let mut c = L2Cache::new(geom(), 2, &None);
        assert!(c.configure_partition(&bad).is_err());
    }

    #[test]
    fn geometry_validation() {
        let mut g = geom();
        assert!(g.problems().is_empty());
        g.size_bytes = 1000;
        assert_eq!(g.problems().len(), 1);
    }
}
