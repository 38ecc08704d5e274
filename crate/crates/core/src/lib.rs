//! Transaction-level simulator of a multicore SoC with per-pair contention
//! accounting and quota enforcement.
//!
//! Cores and accelerators are traffic sources. Their requests cross a shared
//! bus, a way-partitionable L2, a crossbar and a memory controller; every
//! shared resource reports who waited for whom to the statistics unit
//! ([`safesu`]), which meters caused contention against per-core quotas and
//! either raises an interrupt or stalls the offender at the arbiters.
//!
//! ```no_run
//! use soc_qos::{load_config, run_experiment};
//! let exp = load_config("configs/two_core.toml".as_ref()).unwrap();
//! let out = run_experiment(&exp).unwrap();
//! println!("{}", out.report.resources[0].contention.total());
//! ```

pub mod arbiter;
pub mod bus;
pub mod config;
pub mod error;
pub mod kernel;
pub mod l2;
pub mod memctrl;
pub mod noc;
pub mod report;
pub mod resource;
pub mod safesu;
pub mod soc;
pub mod types;
pub mod verify;
pub mod workload;

pub use config::{load_config, Experiment, SimConfig};
pub use error::{ConfigError, Error, SimError};
pub use report::{emit_report, OutputFormat, RunOutput, StatsReport};
pub use soc::{run_experiment, Simulation};
pub use types::{Cycle, MasterId, OpKind, Transaction, TxnId};
