//! Closed-loop clients.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::log::{RequestId, ServerId};
use crate::node::{ClientRequest, Command, TxKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSelection {
    UniformRandomNode,
    LeaderOnly,
    /// Always the given server.
    Node(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadConfig {
    pub clients: u64,
    /// Fraction of requests that are non-transactional.
    pub nt_ratio: f64,
    pub payload_bytes: usize,
    pub target: TargetSelection,
    /// Accounts touched by transfers.
    pub accounts: u64,
    /// Clients start issuing requests at this time.
    pub start_ms: u64,
    /// Metrics ignore the first part of the run after `start_ms`.
    pub warmup_ms: u64,
    pub request_timeout_ms: u64,
    pub retry_backoff_ms: u64,
    /// Stop each client after this many completed requests.
    pub max_requests_per_client: Option<u64>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            clients: 40,
            nt_ratio: 0.4,
            payload_bytes: 80,
            target: TargetSelection::UniformRandomNode,
            accounts: 16,
            start_ms: 6_000,
            warmup_ms: 2_000,
            request_timeout_ms: 1_000,
            retry_backoff_ms: 20,
            max_requests_per_client: None,
        }
    }
}

/// The request a client is waiting on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outstanding {
    pub request: ClientRequest,
    pub first_sent_us: u64,
    pub attempt: u64,
    pub target: ServerId,
}

#[derive(Debug, Clone)]
pub struct Client {
    pub id: u64,
    next_seq: u64,
    pub outstanding: Option<Outstanding>,
    pub leader_hint: Option<ServerId>,
    pub completed: u64,
}

impl Client {
    pub fn new(id: u64) -> Self {
        Client {
            id,
            next_seq: 0,
            outstanding: None,
            leader_hint: None,
            completed: 0,
        }
    }

    pub fn done(&self, cfg: &WorkloadConfig) -> bool {
        cfg.max_requests_per_client
            .is_some_and(|m| self.completed >= m)
    }

    /// Draw the next request. The kind is non-transactional with
    /// probability `nt_ratio`.
    pub fn next_request<R: Rng>(&mut self, rng: &mut R, cfg: &WorkloadConfig) -> ClientRequest {
        debug_assert!(self.outstanding.is_none(), "closed loop");
        let request_id = RequestId::new(self.id, self.next_seq);
        self.next_seq += 1;
        let (kind, cmd) = if rng.gen_bool(cfg.nt_ratio.clamp(0.0, 1.0)) {
            let cmd = Command::Insert {
                key: rng.gen(),
                value: rng.gen_range(0..1_000_000),
            };
            (TxKind::NonTransactional, cmd)
        } else {
            let accounts = cfg.accounts.max(2);
            let from = rng.gen_range(0..accounts);
            let to = (from + rng.gen_range(1..accounts)) % accounts;
            let cmd = Command::Transfer {
                from,
                to,
                amount: rng.gen_range(1..=10),
            };
            (TxKind::Transactional, cmd)
        };
        ClientRequest {
            request_id,
            kind,
            payload: cmd.encode(cfg.payload_bytes),
        }
    }

    pub fn pick_target<R: Rng>(
        &self,
        rng: &mut R,
        cfg: &WorkloadConfig,
        nodes: &[ServerId],
    ) -> ServerId {
        match (cfg.target, self.leader_hint) {
            (TargetSelection::LeaderOnly, Some(l)) => l,
            (TargetSelection::Node(n), _) => ServerId(n),
            _ => *nodes.choose(rng).expect("at least one node"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fraction_nt(ratio: f64, n: usize) -> f64 {
        let cfg = WorkloadConfig {
            nt_ratio: ratio,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut c = Client::new(0);
        let nt = (0..n)
            .filter(|_| c.next_request(&mut rng, &cfg).kind == TxKind::NonTransactional)
            .count();
        nt as f64 / n as f64
    }

    #[test]
    fn ratio_zero_is_all_transactional() {
        assert_eq!(fraction_nt(0.0, 1000), 0.0);
        assert_eq!(fraction_nt(1.0, 1000), 1.0);
    }

    #[test]
    fn ratio_concentrates() {
        let f = fraction_nt(0.25, 100_000);
        assert!((f - 0.25).abs() < 0.01, "{f}");
    }

    #[test]
    fn request_ids_are_unique_and_payload_sized() {
        let cfg = WorkloadConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = Client::new(3);
        let a = c.next_request(&mut rng, &cfg);
        let b = c.next_request(&mut rng, &cfg);
        assert_ne!(a.request_id, b.request_id);
        assert_eq!(a.payload.len(), 80);
        assert!(Command::decode(&a.payload).is_some());
    }

    #[test]
    fn leader_only_uses_hint() {
        let cfg = WorkloadConfig {
            target: TargetSelection::LeaderOnly,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = Client::new(0);
        c.leader_hint = Some(ServerId(4));
        let nodes: Vec<ServerId> = (0..5).map(ServerId).collect();
        assert_eq!(c.pick_target(&mut rng, &cfg, &nodes), ServerId(4));
    }
}
