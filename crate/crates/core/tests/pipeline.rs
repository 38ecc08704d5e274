//! End-to-end latency of single uncontended transactions, against hand sums
//! of the configured stage latencies.

mod common;

use common::experiment;
use soc_qos::run_experiment;

// bus read(8)=7, write(8)=4; L2 hit 4, bridge 5; routing 2, response 3;
// memory port 8 bytes wide, peripheral port 4 bytes wide with latency 10;
// memory read 25, write 20.
const BASE: &str = r#"
schema_version = 1
horizon = 10000

[topology]
cores = 1
accelerators = 1

[bus]
occupancy = [{ kind = "read", size = 8, cycles = 7 }, { kind = "write", size = 8, cycles = 4 }]

[l2]
hit_latency = 4
bridge_latency = 5
line_bytes = 64

[noc]
routing_latency = 2
response_latency = 3

[[noc.ports]]
name = "mem"
kind = "memory"
base = 0x80000000
limit = 0x100000000
width_bytes = 8

[[noc.ports]]
name = "periph"
kind = "peripheral"
base = 0x10000000
limit = 0x20000000
width_bytes = 4
latency = 10

[memctrl]
read_cycles = 25
write_cycles = 20
"#;

fn latencies(core_trace: &str, accel_trace: &str) -> Vec<(u16, u64, u64)> {
    let toml = format!(
        "{BASE}\n[[masters]]\nid = 0\ntrace_text = \"\"\"\n{core_trace}\"\"\"\n\n[[masters]]\nid = 1\ntrace_text = \"\"\"\n{accel_trace}\"\"\"\n"
    );
    let out = run_experiment(&experiment(&toml)).unwrap();
    assert!(out.report.drained);
    let mut v: Vec<_> = out
        .log
        .completions
        .iter()
        .map(|c| (c.master.0, c.t_issued, c.t_completed - c.t_issued))
        .collect();
    v.sort();
    v
}

#[test]
fn read_miss_pays_every_stage_once() {
    // bus 7 + hit 4 + routing 2 + 64-byte fill over 8 bytes/cycle 8 + memory 25 + response 3
    assert_eq!(latencies("10 0 R 0x80000040 8\n", ""), vec![(0, 10, 49)]);
}

#[test]
fn second_read_of_a_line_hits() {
    // First: 49 as above; second issues on completion at 49 and pays bus 7 + hit 4.
    assert_eq!(
        latencies("0 0 R 0x80000000 8\n0 0 R 0x80000020 8\n", ""),
        vec![(0, 0, 49), (0, 49, 11)]
    );
}

#[test]
fn write_miss_fetches_the_line() {
    // bus write 4 + hit 4 + routing 2 + fill 8 + memory read 25 + response 3
    assert_eq!(latencies("0 0 W 0x80000000 8\n", ""), vec![(0, 0, 46)]);
}

#[test]
fn disabled_l2_uses_the_bridge() {
    // bus 7 + bridge 5 + routing 2 + 8 bytes over 8 bytes/cycle 1 + memory 25 + response 3
    let toml = BASE.replace("hit_latency = 4", "enabled = false\nhit_latency = 4");
    let toml = format!(
        "{toml}\n[[masters]]\nid = 0\ntrace_text = \"0 0 R 0x80000000 8\"\n\n[[masters]]\nid = 1\ntrace_text = \"\"\n"
    );
    let out = run_experiment(&experiment(&toml)).unwrap();
    let c = &out.log.completions[0];
    assert_eq!(c.t_completed - c.t_issued, 43);
}

#[test]
fn peripheral_reads_bypass_the_cache() {
    // bus 7 + bridge 5 + routing 2 + 8 bytes over 4 bytes/cycle 2 + device 10 + response 3
    assert_eq!(latencies("0 0 R 0x10000000 8\n", ""), vec![(0, 0, 29)]);
}

#[test]
fn accelerators_inject_straight_into_the_crossbar() {
    // routing 2 + 64 bytes over 8 bytes/cycle 8 + memory 25 + response 3
    assert_eq!(latencies("", "5 1 R 0x80000000 64\n"), vec![(1, 5, 38)]);
    // writes use the write service time: 2 + 1 + 20 + 3
    assert_eq!(latencies("", "0 1 W 0x80000000 8\n"), vec![(1, 0, 26)]);
}

#[test]
fn idle_system_finishes_at_cycle_zero() {
    let out = run_experiment(&experiment(&format!(
        "{BASE}\n[[masters]]\nid = 0\ntrace_text = \"\"\n\n[[masters]]\nid = 1\nsynthetic = {{ mode = \"idle\" }}\n"
    )))
    .unwrap();
    let r = &out.report;
    assert!(r.drained);
    assert_eq!(r.final_cycle, 0);
    assert_eq!(r.events.processed, 0);
    assert!(r.all_pass());
}

#[test]
fn saturating_run_stops_at_the_horizon() {
    let out = run_experiment(&experiment(&format!(
        "{}\n[[masters]]\nid = 0\nsynthetic = {{ mode = \"saturating\" }}\n\n[[masters]]\nid = 1\ntrace_text = \"\"\n",
        BASE.replace("horizon = 10000", "horizon = 2000")
    )))
    .unwrap();
    let r = &out.report;
    assert!(!r.drained);
    assert_eq!(r.final_cycle, 2000);
    assert!(out.log.completions.iter().all(|c| c.t_completed <= 2000));
    assert_eq!(r.masters[0].issued, r.masters[0].completed + 1);
}
