use super::*;
use crate::workload::{verify_trace_text, TargetSelection};

fn small(seed: u64) -> SimConfig {
    SimConfig {
        nodes: 3,
        seed,
        duration_us: 9_000_000,
        quiesce_us: 2_000_000,
        workload: WorkloadConfig {
            clients: 6,
            start_ms: 6_000,
            warmup_ms: 500,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn exact(target: TargetSelection, nt_ratio: f64) -> SimConfig {
    SimConfig {
        nodes: 5,
        seed: 3,
        latency: LatencyModel::fixed(5_000),
        cost: CostModel::zero(),
        duration_us: 8_000_000,
        quiesce_us: 1_000_000,
        workload: WorkloadConfig {
            clients: 1,
            nt_ratio,
            target,
            max_requests_per_client: Some(20),
            ..Default::default()
        },
        ..Default::default()
    }
}

fn leader_before_clients(cfg: &SimConfig) -> ServerId {
    let mut probe = cfg.clone();
    probe.workload.clients = 0;
    let mut sim = Simulation::new(probe).unwrap();
    sim.run_until(cfg.workload.start_ms * 1000 - 1).unwrap();
    sim.leader().expect("a leader by the time clients start")
}

fn latencies(out: &RunOutput, kind: TxKind) -> Vec<u64> {
    out.metrics
        .acks
        .iter()
        .filter(|a| a.kind == kind)
        .map(|a| a.latency_us)
        .collect()
}

#[test]
fn same_seed_same_bytes() {
    let a = Simulation::new(small(7)).unwrap().run().unwrap();
    let b = Simulation::new(small(7)).unwrap().run().unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.metrics.report().to_csv(), b.metrics.report().to_csv());
    let c = Simulation::new(small(8)).unwrap().run().unwrap();
    assert_ne!(a.trace, c.trace);
}

#[test]
fn healthy_run_commits_and_verifies() {
    let out = Simulation::new(small(1)).unwrap().run().unwrap();
    assert!(
        out.metrics.acks.len() > 50,
        "{} acks",
        out.metrics.acks.len()
    );
    let v = verify_trace_text(&out.trace).unwrap();
    assert!(v.passed(), "{v}");
    let applied: Vec<u64> = out.nodes.iter().map(|n| n.last_applied).collect();
    assert!(applied.iter().all(|a| *a == applied[0]), "{applied:?}");
    let digests: Vec<u64> = out.nodes.iter().map(|n| n.kv_digest).collect();
    assert!(digests.iter().all(|d| *d == digests[0]));
}

#[test]
fn bytes_are_conserved() {
    let mut cfg = small(2);
    cfg.faults = vec![ScheduledFault {
        at_us: 7_000_000,
        action: FaultAction::Crash(FaultTarget::RandomFollower),
    }];
    let out = Simulation::new(cfg).unwrap().run().unwrap();
    assert!(out.metrics.conserved());
    assert!(
        out.metrics.dropped_bytes > 0,
        "crashed node drops its inbound"
    );
}

#[test]
fn raft_baseline_runs() {
    let mut cfg = small(4);
    cfg.node.protocol = Protocol::Raft;
    let out = Simulation::new(cfg).unwrap().run().unwrap();
    assert!(out.metrics.acks.len() > 50);
    assert!(!out.trace.contains(",alloc,"));
    assert!(verify_trace_text(&out.trace).unwrap().passed());
}

#[test]
fn fingerprint_ignores_protocol_only() {
    let a = small(1);
    let mut b = a.clone();
    b.node.protocol = Protocol::Raft;
    assert_eq!(scenario_fingerprint(&a), scenario_fingerprint(&b));
    b.seed = 2;
    assert_ne!(scenario_fingerprint(&a), scenario_fingerprint(&b));
}

#[test]
fn idle_cluster_commits_only_the_leader_noop() {
    let mut cfg = small(5);
    cfg.workload.clients = 0;
    let out = Simulation::new(cfg).unwrap().run().unwrap();
    for n in &out.nodes {
        assert_eq!(n.commit_index, 1, "node {}", n.id);
    }
}

#[test]
fn minority_side_cannot_commit() {
    let mut cfg = small(6);
    cfg.nodes = 5;
    cfg.workload.clients = 0;
    let probe_leader = leader_before_clients(&cfg);
    let others: Vec<u64> = (0..5).filter(|i| *i != probe_leader.0).collect();
    let minority = vec![probe_leader.0, others[0]];
    let majority = others[1..].to_vec();
    cfg.faults = vec![ScheduledFault {
        at_us: 5_000_000,
        action: FaultAction::Partition(minority, majority.clone()),
    }];
    cfg.workload.clients = 4;
    cfg.workload.target = TargetSelection::Node(probe_leader.0);
    let mut sim = Simulation::new(cfg).unwrap();
    sim.run_until(5_000_000).unwrap();
    let before = sim.node(probe_leader).commit_index();
    sim.run_until(8_000_000).unwrap();
    assert_eq!(sim.node(probe_leader).commit_index(), before);
    let new_leader = sim.leader().unwrap();
    assert!(majority.contains(&new_leader.0));
}

#[test]
fn restart_of_live_node_is_an_error() {
    let mut cfg = small(1);
    cfg.faults = vec![ScheduledFault {
        at_us: 1_000,
        action: FaultAction::Restart(FaultTarget::Node(0)),
    }];
    let err = Simulation::new(cfg).unwrap().run().unwrap_err();
    assert_eq!(err, SimError::RestartNotCrashed { node: 0 });
}

#[test]
fn crash_then_restart_catches_up() {
    let mut cfg = small(9);
    cfg.faults = vec![
        ScheduledFault {
            at_us: 6_500_000,
            action: FaultAction::Crash(FaultTarget::RandomFollower),
        },
        ScheduledFault {
            at_us: 7_500_000,
            action: FaultAction::Restart(FaultTarget::LastCrashed),
        },
    ];
    let out = Simulation::new(cfg).unwrap().run().unwrap();
    assert!(out.nodes.iter().all(|n| n.alive));
    let applied: Vec<u64> = out.nodes.iter().map(|n| n.last_applied).collect();
    assert!(applied.iter().all(|a| *a == applied[0]), "{applied:?}");
    assert!(verify_trace_text(&out.trace).unwrap().passed());
}

#[test]
fn fixed_latency_is_exact() {
    let probe = exact(TargetSelection::LeaderOnly, 0.0);
    let leader = leader_before_clients(&probe);
    let follower = (leader.0 + 1) % 5;

    let via_leader = Simulation::new(exact(TargetSelection::Node(leader.0), 0.0))
        .unwrap()
        .run()
        .unwrap();
    let l = latencies(&via_leader, TxKind::Transactional);
    assert_eq!(l.len(), 20);
    assert!(l.iter().all(|x| *x == 10_000), "{l:?}");

    let via_follower = Simulation::new(exact(TargetSelection::Node(follower), 0.0))
        .unwrap()
        .run()
        .unwrap();
    let l = latencies(&via_follower, TxKind::Transactional);
    assert_eq!(l.len(), 20);
    assert!(l.iter().all(|x| *x == 20_000), "{l:?}");

    let nt = Simulation::new(exact(TargetSelection::Node(follower), 1.0))
        .unwrap()
        .run()
        .unwrap();
    let l = latencies(&nt, TxKind::NonTransactional);
    assert_eq!(l.len(), 20);
    assert!(l.iter().all(|x| *x == 10_000), "{l:?}");
}
