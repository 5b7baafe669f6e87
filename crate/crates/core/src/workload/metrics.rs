//! Run accounting and the derived report.

use std::fmt::Write as _;

use crate::log::{RequestId, ServerId};
use crate::node::TxKind;

/// Raw counters for one node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    /// Bytes sent while this node was leader, inside the measurement window.
    pub window_leader_bytes_sent: u64,
    /// Bytes sent while not leader, inside the measurement window.
    pub window_follower_bytes_sent: u64,
    pub messages_sent: u64,
    /// Handler invocations (the CPU proxy).
    pub handler_invocations: u64,
    /// Peak staged future bytes (the memory proxy).
    pub peak_stage_bytes: u64,
    pub retransmit_entries: u64,
    pub retransmit_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AckRecord {
    pub time_us: u64,
    pub kind: TxKind,
    pub latency_us: u64,
    pub request_id: RequestId,
    pub node: ServerId,
}

/// Everything a run measured.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunMetrics {
    pub protocol: String,
    /// Identifies the scenario with the protocol choice left out.
    pub scenario_fingerprint: u64,
    pub nodes: Vec<NodeStats>,
    pub client_bytes_sent: u64,
    pub client_bytes_received: u64,
    pub dropped_bytes: u64,
    pub in_flight_bytes: u64,
    pub acks: Vec<AckRecord>,
    /// Apply time minus ack time for non-transactional requests at the node
    /// that acknowledged them.
    pub apply_lag_us: Vec<u64>,
    pub requests_issued: u64,
    pub attempts: u64,
    pub window_start_us: u64,
    pub window_end_us: u64,
}

impl RunMetrics {
    pub fn total_sent(&self) -> u64 {
        self.nodes.iter().map(|n| n.bytes_sent).sum::<u64>() + self.client_bytes_sent
    }

    pub fn total_received(&self) -> u64 {
        self.nodes.iter().map(|n| n.bytes_received).sum::<u64>() + self.client_bytes_received
    }

    /// Sent bytes are all received, dropped, or still in flight.
    pub fn conserved(&self) -> bool {
        self.total_sent() == self.total_received() + self.dropped_bytes + self.in_flight_bytes
    }

    fn window_acks(&self) -> impl Iterator<Item = &AckRecord> {
        self.acks
            .iter()
            .filter(|a| a.time_us >= self.window_start_us && a.time_us < self.window_end_us)
    }

    pub fn report(&self) -> MetricsReport {
        let seconds = (self.window_end_us.saturating_sub(self.window_start_us)) as f64 / 1e6;
        let committed = self.window_acks().count() as u64;
        let mut tps_series = Vec::new();
        let end_s = self.window_end_us.div_ceil(1_000_000);
        for s in 0..end_s {
            let (a, b) = (s * 1_000_000, (s + 1) * 1_000_000);
            tps_series.push(
                self.acks
                    .iter()
                    .filter(|x| x.time_us >= a && x.time_us < b)
                    .count() as u64,
            );
        }
        let latency = |kind: TxKind| {
            let mut v: Vec<u64> = self
                .window_acks()
                .filter(|a| a.kind == kind)
                .map(|a| a.latency_us)
                .collect();
            LatencyStats::from_samples(&mut v)
        };
        let leader_bytes: u64 = self.nodes.iter().map(|n| n.window_leader_bytes_sent).sum();
        let follower_bytes: u64 = self
            .nodes
            .iter()
            .map(|n| n.window_follower_bytes_sent)
            .sum();
        let per = |b: u64| {
            if committed == 0 {
                0.0
            } else {
                b as f64 / committed as f64
            }
        };
        let mut lag = self.apply_lag_us.clone();
        MetricsReport {
            protocol: self.protocol.clone(),
            scenario_fingerprint: self.scenario_fingerprint,
            tps: if seconds > 0.0 {
                committed as f64 / seconds
            } else {
                0.0
            },
            tps_series,
            committed,
            tx_latency: latency(TxKind::Transactional),
            ntx_latency: latency(TxKind::NonTransactional),
            leader_bytes_per_request: per(leader_bytes),
            follower_bytes_per_request: per(follower_bytes),
            retransmit_bytes: self.nodes.iter().map(|n| n.retransmit_bytes).sum(),
            apply_lag: LatencyStats::from_samples(&mut lag),
            nodes: self.nodes.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_us: f64,
    pub p50_us: u64,
    pub p99_us: u64,
}

impl LatencyStats {
    pub fn from_samples(v: &mut [u64]) -> Self {
        if v.is_empty() {
            return Self::default();
        }
        v.sort_unstable();
        let pick = |q: f64| v[(((v.len() - 1) as f64) * q).round() as usize];
        LatencyStats {
            count: v.len() as u64,
            mean_us: v.iter().sum::<u64>() as f64 / v.len() as f64,
            p50_us: pick(0.5),
            p99_us: pick(0.99),
        }
    }
}

/// Derived figures for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub protocol: String,
    pub scenario_fingerprint: u64,
    /// Acknowledged requests per second over the measurement window.
    pub tps: f64,
    /// Acknowledged requests in each whole second since time zero.
    pub tps_series: Vec<u64>,
    pub committed: u64,
    pub tx_latency: LatencyStats,
    pub ntx_latency: LatencyStats,
    pub leader_bytes_per_request: f64,
    pub follower_bytes_per_request: f64,
    pub retransmit_bytes: u64,
    pub apply_lag: LatencyStats,
    pub nodes: Vec<NodeStats>,
}

impl MetricsReport {
    /// CSV with the `metric,kind,node,window_start_s,value` columns followed
    /// by a summary block of the same shape. Rows are in a fixed order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,kind,node,window_start_s,value\n");
        let mut row = |m: &str, k: &str, n: &str, w: &str, v: String| {
            let _ = writeln!(out, "{m},{k},{n},{w},{v}");
        };
        for (s, c) in self.tps_series.iter().enumerate() {
            row("tps", "all", "-", &s.to_string(), c.to_string());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let id = format!("n{i}");
            row("bytes_sent", "-", &id, "-", n.bytes_sent.to_string());
            row(
                "bytes_received",
                "-",
                &id,
                "-",
                n.bytes_received.to_string(),
            );
            row("messages_sent", "-", &id, "-", n.messages_sent.to_string());
            row(
                "cpu_proxy",
                "-",
                &id,
                "-",
                n.handler_invocations.to_string(),
            );
            row(
                "memory_proxy",
                "-",
                &id,
                "-",
                n.peak_stage_bytes.to_string(),
            );
            row(
                "retransmit_bytes",
                "-",
                &id,
                "-",
                n.retransmit_bytes.to_string(),
            );
        }
        out.push_str("# summary\n");
        let mut sum = |m: &str, k: &str, v: String| {
            let _ = writeln!(out, "{m},{k},-,-,{v}");
        };
        sum("protocol", "-", self.protocol.clone());
        sum(
            "scenario",
            "-",
            format!("{:016x}", self.scenario_fingerprint),
        );
        sum("tps", "all", format!("{:.3}", self.tps));
        sum("committed", "all", self.committed.to_string());
        for (k, l) in [
            ("tx", &self.tx_latency),
            ("ntx", &self.ntx_latency),
            ("apply_lag", &self.apply_lag),
        ] {
            let metric = if k == "apply_lag" {
                "apply_lag"
            } else {
                "response_time"
            };
            let kind = if k == "apply_lag" { "ntx" } else { k };
            sum(&format!("{metric}_count"), kind, l.count.to_string());
            sum(
                &format!("{metric}_mean_us"),
                kind,
                format!("{:.3}", l.mean_us),
            );
            sum(&format!("{metric}_p50_us"), kind, l.p50_us.to_string());
            sum(&format!("{metric}_p99_us"), kind, l.p99_us.to_string());
        }
        sum(
            "leader_bytes_per_request",
            "all",
            format!("{:.3}", self.leader_bytes_per_request),
        );
        sum(
            "follower_bytes_per_request",
            "all",
            format!("{:.3}", self.follower_bytes_per_request),
        );
        sum("retransmit_bytes", "all", self.retransmit_bytes.to_string());
        sum(
            "note",
            "-",
            "cpu_proxy counts handler invocations and is not a CPU percentage".to_string(),
        );
        out
    }

    /// Read back the summary block written by [`MetricsReport::to_csv`].
    pub fn summary_from_csv(csv: &str) -> Vec<(String, String, String)> {
        csv.lines()
            .skip_while(|l| *l != "# summary")
            .skip(1)
            .filter_map(|l| {
                let c: Vec<&str> = l.splitn(5, ',').collect();
                (c.len() == 5).then(|| (c[0].to_string(), c[1].to_string(), c[4].to_string()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ack(t: u64, kind: TxKind, lat: u64) -> AckRecord {
        AckRecord {
            time_us: t,
            kind,
            latency_us: lat,
            request_id: RequestId::new(0, t),
            node: ServerId(0),
        }
    }

    #[test]
    fn latency_stats() {
        let mut v = vec![5, 1, 3, 2, 4];
        let s = LatencyStats::from_samples(&mut v);
        assert_eq!(s.count, 5);
        assert_eq!(s.mean_us, 3.0);
        assert_eq!(s.p50_us, 3);
        assert_eq!(s.p99_us, 5);
        assert_eq!(LatencyStats::from_samples(&mut []), LatencyStats::default());
    }

    #[test]
    fn tps_counts_window_acks_only() {
        let m = RunMetrics {
            protocol: "lcr".into(),
            acks: vec![
                ack(500_000, TxKind::Transactional, 10),
                ack(1_500_000, TxKind::Transactional, 20),
                ack(1_600_000, TxKind::NonTransactional, 30),
                ack(2_500_000, TxKind::Transactional, 40),
            ],
            window_start_us: 1_000_000,
            window_end_us: 2_000_000,
            ..Default::default()
        };
        let r = m.report();
        assert_eq!(r.committed, 2);
        assert_eq!(r.tps, 2.0);
        assert_eq!(r.tps_series, vec![1, 2]);
        assert_eq!(r.tx_latency.mean_us, 20.0);
        assert_eq!(r.ntx_latency.mean_us, 30.0);
    }

    #[test]
    fn csv_summary_round_trip() {
        let m = RunMetrics {
            protocol: "raft".into(),
            window_end_us: 1_000_000,
            ..Default::default()
        };
        let csv = m.report().to_csv();
        assert!(csv.starts_with("metric,kind,node,window_start_s,value\n"));
        let s = MetricsReport::summary_from_csv(&csv);
        assert!(s.contains(&("protocol".into(), "-".into(), "raft".into())));
    }

    #[test]
    fn conservation() {
        let m = RunMetrics {
            nodes: vec![NodeStats {
                bytes_sent: 100,
                bytes_received: 40,
                ..Default::default()
            }],
            client_bytes_sent: 10,
            client_bytes_received: 20,
            dropped_bytes: 30,
            in_flight_bytes: 20,
            ..Default::default()
        };
        assert!(m.conserved());
    }
}
