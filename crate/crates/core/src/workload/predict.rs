//! Closed-form latency model for both request kinds.

use serde::{Deserialize, Serialize};

/// Delay components, all in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyPrediction {
    /// Client to node, one way.
    pub delta_c: u64,
    /// Node to node, one way.
    pub delta_n: u64,
    /// Leader processing.
    pub eta_l: u64,
    /// Follower (data-leader) processing.
    pub eta_f: u64,
    /// Wait for the confirming signal before apply.
    pub eta_w: u64,
    /// State machine write.
    pub iota: u64,
}

/// Transactional requests arriving at a follower: relay to the leader,
/// replicate, and return through the follower.
pub fn predict_latency_transactional(p: &LatencyPrediction) -> u64 {
    2 * p.delta_c + 4 * p.delta_n + p.eta_l + p.iota
}

/// Non-transactional requests: the data-leader replicates directly.
pub fn predict_latency_nontransactional(p: &LatencyPrediction) -> u64 {
    2 * p.delta_c + 2 * p.delta_n + p.eta_f + p.eta_w + p.iota
}
