use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use soc_qos::config::SimConfig;
use soc_qos::workload::parse_trace;
use soc_qos::{emit_report, load_config, run_experiment, ConfigError, OutputFormat, RunOutput};

#[derive(Parser)]
#[command(name = "soc-qos", version, about = "Multicore SoC contention and quota simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one or more experiments; several configs run in parallel.
    Run {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the horizon (inclusive, in cycles).
        #[arg(long)]
        cycles: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Output format; both when omitted.
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Exit with status 2 if any property check fails.
        #[arg(long)]
        check: bool,
        /// Also write events.log.
        #[arg(long)]
        log_events: bool,
    },
    /// Load and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a trace file against the trace format.
    TraceLint { path: PathBuf },
}

struct RunOpts {
    seed: Option<u64>,
    cycles: Option<u64>,
    formats: Vec<OutputFormat>,
    log_events: bool,
}

fn run_one(config: &Path, out: &Path, opts: &RunOpts) -> Result<RunOutput> {
    let mut exp = load_config(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(s) = opts.seed {
        exp.config.seed = s;
    }
    if let Some(c) = opts.cycles {
        exp.config.horizon = c;
    }
    let result = run_experiment(&exp).with_context(|| format!("running {}", config.display()))?;
    emit_report(&result, out, &opts.formats, opts.log_events)?;
    Ok(result)
}

fn print_summary(config: &Path, out: &Path, r: &RunOutput) {
    let rep = &r.report;
    println!(
        "{}: final cycle {}, {}, outputs in {}",
        config.display(),
        rep.final_cycle,
        if rep.drained { "drained" } else { "horizon reached" },
        out.display()
    );
    for v in &rep.verdicts {
        println!("  {} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.summary);
        for e in v.evidence.iter().take(3) {
            println!("    {}", e.detail);
        }
    }
}

fn cmd_run(configs: &[PathBuf], out: &Path, opts: RunOpts, check: bool) -> Result<bool> {
    let dirs: Vec<PathBuf> = if configs.len() == 1 {
        vec![out.to_path_buf()]
    } else {
        configs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let stem = c
                    .file_stem()
                    .map_or_else(|| format!("run{i}"), |s| s.to_string_lossy().into_owned());
                out.join(format!("{i:02}_{stem}"))
            })
            .collect()
    };
    let results: Vec<Result<RunOutput>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .zip(&dirs)
            .map(|(c, d)| s.spawn(|| run_one(c, d, &opts)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut all_pass = true;
    let mut failed = false;
    for ((c, d), r) in configs.iter().zip(&dirs).zip(results) {
        match r {
            Ok(r) => {
                print_summary(c, d, &r);
                all_pass &= r.report.all_pass();
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                failed = true;
            }
        }
    }
    if failed {
        bail!("one or more experiments failed");
    }
    Ok(!check || all_pass)
}

fn cmd_validate(path: &Path) -> Result<bool> {
    match load_config(path) {
        Ok(exp) => {
            let c: &SimConfig = &exp.config;
            println!(
                "{}: ok ({} cores, {} accelerators, {} ports, horizon {})",
                path.display(),
                c.topology.cores,
                c.topology.accelerators,
                c.noc.ports.len(),
                c.horizon
            );
            Ok(true)
        }
        Err(ConfigError::Invalid(issues)) => {
            for i in &issues {
                eprintln!("{}: {i}", path.display());
            }
            Ok(false)
        }
        Err(e) => Err(e).with_context(|| format!("loading {}", path.display())),
    }
}

fn cmd_trace_lint(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match parse_trace(&text) {
        Ok(ops) => {
            let masters: std::collections::BTreeSet<_> = ops.iter().map(|o| o.master).collect();
            println!(
                "{}: ok, {} records, {} masters",
                path.display(),
                ops.len(),
                masters.len()
            );
            Ok(true)
        }
        Err(e) => {
            eprintln!("{}:{e}", path.display());
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run {
            configs,
            seed,
            cycles,
            out,
            format,
            check,
            log_events,
        } => {
            let formats = match format {
                Some(Format::Json) => vec![OutputFormat::Json],
                Some(Format::Csv) => vec![OutputFormat::Csv],
                None => vec![OutputFormat::Json, OutputFormat::Csv],
            };
            let opts = RunOpts {
                seed,
                cycles,
                formats,
                log_events,
            };
            cmd_run(&configs, &out, opts, check).map(|ok| if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Cmd::Validate { config } => {
            cmd_validate(&config).map(|ok| if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::TraceLint { path } => {
            cmd_trace_lint(&path).map(|ok| if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
