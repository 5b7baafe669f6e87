//! Scenario files.
//!
//! A scenario is a TOML document describing one experiment. Every table is
//! optional except that `seed` must be given; unknown keys are rejected.
//!
//! ```toml
//! seed = 42
//! nodes = 5
//! protocol = "lcr"            # or "raft"
//! duration_seconds = 20
//! quiesce_ms = 5000           # extra time after clients stop; default covers
//!                             # two step timeouts so trailing gaps get filled
//! trace_messages = false      # record every send, not only protocol events
//! joins_at_ms = [9000]        # add one server at each time
//!
//! [latency]                   # one-way node-to-node delay
//! mean_us = 5000
//! fluctuation_us = 100
//! probability = 0.3
//! client_us = 0
//!
//! [timers]
//! election_timeout_ms = 5000
//! election_jitter_ms = 500
//! heartbeat_ms = 500
//! max_await_timeout_ms = 1000
//!
//! [limits]
//! max_flying_requests = 16
//! max_entries_per_request = 5000
//!
//! [lcr]
//! window_size = 100
//! open_window_count = 2
//! step_threshold = 400
//! step_timeout_ms = 1000
//! reconcile_on_election = true
//!
//! [cost]                      # simulated handler time on the receiving node
//! client_request_us = 50
//! replication_response_us = 50
//! message_send_us = 0
//!
//! [size]
//! message_header_bytes = 48
//! entry_header_bytes = 24
//!
//! [workload]
//! clients = 40
//! nt_ratio = 0.4
//! payload_bytes = 80
//! target = "uniform_random_node"  # or "leader_only", or { node = 2 }
//! start_ms = 6000
//! warmup_ms = 2000
//!
//! [[faults]]
//! at_ms = 10000
//! action = "crash"            # crash | restart | partition | heal
//! target = "random_follower"  # leader | random_follower | last_crashed | { node = 1 }
//!
//! [[faults]]
//! at_ms = 12000
//! action = "partition"
//! groups = [[0, 1], [2, 3, 4]]
//! ```

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::log::WindowConfig;
use crate::node::{NodeConfig, Protocol};
use crate::sim::{
    default_quiesce_us, CostModel, FaultAction, FaultTarget, LatencyModel, ScheduledFault,
    SimConfig, SizeModel,
};
use crate::workload::WorkloadConfig;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    #[serde(default = "default_duration")]
    pub duration_seconds: u64,
    pub quiesce_ms: Option<u64>,
    #[serde(default)]
    pub trace_messages: bool,
    #[serde(default)]
    pub joins_at_ms: Vec<u64>,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default)]
    pub timers: Timers,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub lcr: LcrSettings,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub size: SizeModel,
    #[serde(default)]
    pub workload: WorkloadConfig,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

fn default_nodes() -> usize {
    5
}

fn default_protocol() -> Protocol {
    Protocol::Lcr
}

fn default_duration() -> u64 {
    20
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Timers {
    pub election_timeout_ms: u64,
    pub election_jitter_ms: u64,
    pub heartbeat_ms: u64,
    pub max_await_timeout_ms: u64,
}

impl Default for Timers {
    fn default() -> Self {
        Timers {
            election_timeout_ms: 5000,
            election_jitter_ms: 500,
            heartbeat_ms: 500,
            max_await_timeout_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    pub max_flying_requests: usize,
    pub max_entries_per_request: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_flying_requests: 16,
            max_entries_per_request: 5000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LcrSettings {
    pub window_size: u64,
    pub open_window_count: usize,
    /// Defaults to four windows.
    pub step_threshold: Option<u64>,
    pub step_timeout_ms: u64,
    pub reconcile_on_election: bool,
}

impl Default for LcrSettings {
    fn default() -> Self {
        LcrSettings {
            window_size: 100,
            open_window_count: 2,
            step_threshold: None,
            step_timeout_ms: 1000,
            reconcile_on_election: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Crash,
    Restart,
    Partition,
    Heal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub at_ms: u64,
    pub action: FaultKind,
    pub target: Option<FaultTarget>,
    pub groups: Option<(Vec<u64>, Vec<u64>)>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.nodes < 3 || self.nodes.is_multiple_of(2) {
            return Err(invalid("nodes", "nodes must be odd and at least 3"));
        }
        let positive = [
            (
                "timers.election_timeout_ms",
                self.timers.election_timeout_ms,
            ),
            ("timers.heartbeat_ms", self.timers.heartbeat_ms),
            (
                "timers.max_await_timeout_ms",
                self.timers.max_await_timeout_ms,
            ),
            ("lcr.step_timeout_ms", self.lcr.step_timeout_ms),
            ("lcr.window_size", self.lcr.window_size),
            (
                "limits.max_flying_requests",
                self.limits.max_flying_requests as u64,
            ),
            (
                "limits.max_entries_per_request",
                self.limits.max_entries_per_request as u64,
            ),
            ("latency.mean_us", self.latency.mean_us),
            ("duration_seconds", self.duration_seconds),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(invalid(field, "must be positive"));
            }
        }
        if self.lcr.open_window_count == 0 {
            return Err(invalid("lcr.open_window_count", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.latency.probability) {
            return Err(invalid("latency.probability", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.workload.nt_ratio) {
            return Err(invalid("workload.nt_ratio", "must lie in [0, 1]"));
        }
        if let crate::workload::TargetSelection::Node(n) = self.workload.target {
            if n as usize >= self.nodes {
                return Err(invalid(
                    "workload.target",
                    format!("node {n} does not exist"),
                ));
            }
        }
        for (i, f) in self.faults.iter().enumerate() {
            self.fault_action(f)
                .map_err(|reason| invalid(&format!("faults[{i}]"), reason))?;
        }
        Ok(())
    }

    fn fault_action(&self, f: &FaultSpec) -> Result<FaultAction, String> {
        let target = || {
            let t = f.target.ok_or("crash and restart need a target")?;
            if let FaultTarget::Node(n) = t {
                if n as usize >= self.nodes + self.joins_at_ms.len() {
                    return Err(format!("node {n} does not exist"));
                }
            }
            Ok(t)
        };
        Ok(match f.action {
            FaultKind::Crash => FaultAction::Crash(target()?),
            FaultKind::Restart => FaultAction::Restart(target()?),
            FaultKind::Partition => {
                let (a, b) = f.groups.clone().ok_or("partition needs groups")?;
                FaultAction::Partition(a, b)
            }
            FaultKind::Heal => FaultAction::Heal,
        })
    }

    pub fn sim_config(&self) -> SimConfig {
        let window = WindowConfig {
            size: self.lcr.window_size,
            open_count: self.lcr.open_window_count,
        };
        let node = NodeConfig {
            protocol: self.protocol,
            election_timeout_us: self.timers.election_timeout_ms * 1000,
            election_jitter_us: self.timers.election_jitter_ms * 1000,
            heartbeat_us: self.timers.heartbeat_ms * 1000,
            max_await_us: self.timers.max_await_timeout_ms * 1000,
            max_flying: self.limits.max_flying_requests,
            max_entries: self.limits.max_entries_per_request,
            step_threshold: self.lcr.step_threshold.unwrap_or(4 * window.size),
            window,
            step_timeout_us: self.lcr.step_timeout_ms * 1000,
            reconcile_on_election: self.lcr.reconcile_on_election,
            entry_header_bytes: self.size.entry_header_bytes,
        };
        let mut faults: Vec<ScheduledFault> = self
            .faults
            .iter()
            .map(|f| ScheduledFault {
                at_us: f.at_ms * 1000,
                action: self.fault_action(f).expect("validated"),
            })
            .collect();
        faults.sort_by_key(|f| f.at_us);
        if self
            .quiesce_ms
            .is_some_and(|q| q < self.lcr.step_timeout_ms)
        {
            log::warn!("quiesce_ms is shorter than the step timeout; trailing future entries may stay unapplied");
        }
        SimConfig {
            nodes: self.nodes,
            quiesce_us: self
                .quiesce_ms
                .map_or(default_quiesce_us(&node), |ms| ms * 1000),
            node,
            latency: self.latency,
            size: self.size,
            cost: self.cost,
            workload: self.workload.clone(),
            faults,
            joins_at_us: self.joins_at_ms.iter().map(|ms| ms * 1000).collect(),
            seed: self.seed,
            duration_us: self.duration_seconds * 1_000_000,
            trace_messages: self.trace_messages,
        }
    }
}
