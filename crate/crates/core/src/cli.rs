//! Command-line front end.
//!
//! `run` writes four artifacts to its output directory: `trace.csv`,
//! `metrics.csv`, `verdict.txt`, and one `node<i>.log` dump per server.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use crate::node::Protocol;
use crate::scenario::Scenario;
use crate::sim::{LatencyModel, SimConfig, SimError, Simulation};
use crate::workload::{compare_runs, verify_trace_text, MetricsReport, RunSummary, VerdictReport};

/// Environment variable that sets log verbosity (`error` .. `trace`).
pub const LOG_ENV: &str = "LCR_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "lcr",
    version,
    about = "Simulate and check leader confirmation replication"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write trace, metrics, verdict and log dumps.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario protocol.
        #[arg(long)]
        protocol: Option<Protocol>,
    },
    /// Check a trace file and print the verdict.
    Verify { trace: PathBuf },
    /// Compare two run directories of the same scenario.
    Compare { a: PathBuf, b: PathBuf },
    /// Run a scenario under both protocols at each one-way latency (ms).
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        latencies: Vec<f64>,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Files produced by one run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub trace: String,
    pub metrics_csv: String,
    pub verdict: VerdictReport,
    pub node_logs: Vec<String>,
}

/// Run a configuration to completion. A deadlock still returns the trace
/// recorded so far, together with the error.
pub fn execute(cfg: SimConfig) -> Result<RunArtifacts, (SimError, String)> {
    let end = cfg.duration_us + cfg.quiesce_us;
    let mut sim = Simulation::new(cfg).map_err(|e| (e, String::new()))?;
    if let Err(e) = sim.run_until(end) {
        return Err((e, sim.trace().as_str().to_string()));
    }
    let out = sim.finish();
    let verdict = verify_trace_text(&out.trace).expect("simulator writes well-formed traces");
    Ok(RunArtifacts {
        metrics_csv: out.metrics.report().to_csv(),
        node_logs: out.nodes.iter().map(|n| n.log_dump.clone()).collect(),
        trace: out.trace,
        verdict,
    })
}

pub fn write_artifacts(dir: &Path, a: &RunArtifacts) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("trace.csv"), &a.trace)?;
    std::fs::write(dir.join("metrics.csv"), &a.metrics_csv)?;
    std::fs::write(dir.join("verdict.txt"), a.verdict.to_string())?;
    for (i, log) in a.node_logs.iter().enumerate() {
        std::fs::write(dir.join(format!("node{i}.log")), log)?;
    }
    Ok(())
}

fn cmd_run(path: &Path, out: &Path, seed: Option<u64>, protocol: Option<Protocol>) -> Result<bool> {
    let mut scenario = Scenario::load(path)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    if let Some(p) = protocol {
        scenario.protocol = p;
    }
    info!(
        "running {} (seed {}, {})",
        path.display(),
        scenario.seed,
        scenario.protocol.as_str()
    );
    match execute(scenario.sim_config()) {
        Ok(a) => {
            write_artifacts(out, &a)?;
            print!("{}", a.verdict);
            Ok(a.verdict.passed())
        }
        Err((e, prefix)) => {
            std::fs::create_dir_all(out)?;
            std::fs::write(out.join("trace.csv"), prefix)?;
            bail!("run aborted: {e}")
        }
    }
}

fn cmd_verify(path: &Path) -> Result<bool> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let verdict = verify_trace_text(&text)?;
    print!("{verdict}");
    Ok(verdict.passed())
}

fn load_summary(dir: &Path) -> Result<RunSummary> {
    let p = dir.join("metrics.csv");
    let csv = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    RunSummary::from_csv(&csv).with_context(|| p.display().to_string())
}

fn cmd_compare(a: &Path, b: &Path) -> Result<()> {
    let report = compare_runs(&load_summary(a)?, &load_summary(b)?)?;
    print!("{report}");
    Ok(())
}

/// One row of a latency sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub latency_ms: f64,
    pub lcr: RunSummary,
    pub raft: RunSummary,
}

pub fn sweep(scenario: &Scenario, latencies_ms: &[f64]) -> Result<Vec<SweepPoint>> {
    let runs: Vec<(f64, Protocol)> = latencies_ms
        .iter()
        .flat_map(|l| [(*l, Protocol::Lcr), (*l, Protocol::Raft)])
        .collect();
    let results: Vec<Result<MetricsReport>> = runs
        .par_iter()
        .map(|(ms, p)| {
            let mut s = scenario.clone();
            s.protocol = *p;
            s.latency = LatencyModel {
                mean_us: (ms * 1000.0).round() as u64,
                ..s.latency
            };
            let out = Simulation::new(s.sim_config())?.run()?;
            let verdict = verify_trace_text(&out.trace)?;
            if !verdict.passed() {
                warn!("{} at {ms} ms failed verification:\n{verdict}", p.as_str());
            }
            Ok(out.metrics.report())
        })
        .collect();
    let mut points = Vec::new();
    for (pair, ms) in results.chunks(2).zip(latencies_ms) {
        let lcr = pair[0].as_ref().map_err(|e| anyhow::anyhow!("{e:#}"))?;
        let raft = pair[1].as_ref().map_err(|e| anyhow::anyhow!("{e:#}"))?;
        points.push(SweepPoint {
            latency_ms: *ms,
            lcr: RunSummary::from_report(lcr),
            raft: RunSummary::from_report(raft),
        });
    }
    Ok(points)
}

pub fn sweep_table(points: &[SweepPoint]) -> String {
    let mut out = String::from(
        "latency_ms,lcr_tps,raft_tps,tps_ratio,lcr_tx_mean_us,raft_tx_mean_us,lcr_leader_bytes_per_request,raft_leader_bytes_per_request\n",
    );
    for p in points {
        let _ = writeln!(
            out,
            "{},{:.3},{:.3},{:.4},{:.1},{:.1},{:.1},{:.1}",
            p.latency_ms,
            p.lcr.tps,
            p.raft.tps,
            p.lcr.tps / p.raft.tps,
            p.lcr.tx_mean_us,
            p.raft.tx_mean_us,
            p.lcr.leader_bytes_per_request,
            p.raft.leader_bytes_per_request
        );
    }
    out
}

fn cmd_sweep(path: &Path, latencies: &[f64], out: Option<&Path>) -> Result<()> {
    let scenario = Scenario::load(path)?;
    if let Some(bad) = latencies.iter().find(|l| !l.is_finite() || **l <= 0.0) {
        bail!("latency {bad} must be a positive number");
    }
    let table = sweep_table(&sweep(&scenario, latencies)?);
    match out {
        Some(p) => std::fs::write(p, table)?,
        None => print!("{table}"),
    }
    Ok(())
}

/// Entry point shared by the binary and tests.
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            protocol,
        } => cmd_run(&scenario, &out, seed, protocol),
        Command::Verify { trace } => cmd_verify(&trace),
        Command::Compare { a, b } => cmd_compare(&a, &b).map(|_| true),
        Command::Sweep {
            scenario,
            latencies,
            out,
        } => cmd_sweep(&scenario, &latencies, out.as_deref()).map(|_| true),
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arguments_parse() {
        let c = Cli::try_parse_from([
            "lcr",
            "run",
            "s.toml",
            "--out",
            "o",
            "--protocol",
            "raft",
            "--seed",
            "9",
        ])
        .unwrap();
        match c.command {
            Command::Run { seed, protocol, .. } => {
                assert_eq!(seed, Some(9));
                assert_eq!(protocol, Some(Protocol::Raft));
            }
            other => panic!("{other:?}"),
        }
        let c = Cli::try_parse_from(["lcr", "sweep", "s.toml", "--latencies", "2,5,10"]).unwrap();
        match c.command {
            Command::Sweep { latencies, .. } => assert_eq!(latencies, vec![2.0, 5.0, 10.0]),
            other => panic!("{other:?}"),
        }
        assert!(
            Cli::try_parse_from(["lcr", "run", "s.toml", "--out", "o", "--protocol", "paxos"])
                .is_err()
        );
    }

    #[test]
    fn sweep_emits_one_row_per_point() {
        let s = Scenario::from_toml(
            "seed = 2\nnodes = 3\nduration_seconds = 7\n[workload]\nclients = 4\nwarmup_ms = 200",
        )
        .unwrap();
        let table = sweep_table(&sweep(&s, &[2.0, 5.0]).unwrap());
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("2,"));
        assert!(lines[2].starts_with("5,"));
    }
}
