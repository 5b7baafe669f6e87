//! Deterministic discrete-event network simulator.
//!
//! Nodes, clients, timers, and faults share one virtual clock in integer
//! microseconds. Events are processed in `(time, seq)` order, and every
//! random draw comes from a single seeded generator, so a run is a pure
//! function of its configuration and seed.

mod event;
mod fault;
mod latency;
mod size;
mod trace;

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{RequestId, ServerId};
use crate::node::{
    ClientResponse, Endpoint, Input, Message, Node, NodeConfig, Outcome, Output, Protocol,
    ProtocolEvent, Role, TxKind,
};
use crate::workload::{AckRecord, Client, NodeStats, RunMetrics, WorkloadConfig};

pub use event::{Event, EventKind, EventQueue};
pub use fault::{FaultAction, FaultTarget, Partition};
pub use latency::LatencyModel;
pub use size::SizeModel;
pub use trace::{parse_trace, Trace, TraceParseError, TraceRecord};

/// Handler cost charged to the node that processes a message. While a node
/// is busy, later events for it wait.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    pub client_request_us: u64,
    pub replication_response_us: u64,
    /// Charged once per message a handler sends to another node.
    pub message_send_us: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            client_request_us: 50,
            replication_response_us: 50,
            message_send_us: 0,
        }
    }
}

impl CostModel {
    pub fn zero() -> Self {
        CostModel {
            client_request_us: 0,
            replication_response_us: 0,
            message_send_us: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledFault {
    pub at_us: u64,
    pub action: FaultAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub nodes: usize,
    pub node: NodeConfig,
    pub latency: LatencyModel,
    pub size: SizeModel,
    pub cost: CostModel,
    pub workload: WorkloadConfig,
    pub faults: Vec<ScheduledFault>,
    /// Servers to add, one at a time, at the given times.
    pub joins_at_us: Vec<u64>,
    pub seed: u64,
    /// Clients stop issuing new requests at this time.
    pub duration_us: u64,
    /// Extra simulated time after `duration_us` so in-flight work settles.
    pub quiesce_us: u64,
    /// Record every message send in the trace, not only protocol events.
    pub trace_messages: bool,
}

/// Settling time long enough for trailing gaps in the log to be filled
/// after the last client request.
pub fn default_quiesce_us(node: &NodeConfig) -> u64 {
    (10 * node.heartbeat_us).max(2 * node.step_timeout_us)
}

impl Default for SimConfig {
    fn default() -> Self {
        let node = NodeConfig::default();
        SimConfig {
            nodes: 5,
            quiesce_us: default_quiesce_us(&node),
            node,
            latency: LatencyModel::default(),
            size: SizeModel::default(),
            cost: CostModel::default(),
            workload: WorkloadConfig::default(),
            faults: Vec::new(),
            joins_at_us: Vec::new(),
            seed: 1,
            duration_us: 20_000_000,
            trace_messages: false,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("event queue drained at {at_us} us with clients still active")]
    Deadlock { at_us: u64 },
    #[error("restart of node {node} which is not crashed")]
    RestartNotCrashed { node: u64 },
    #[error("fault target {0:?} does not name a node")]
    UnknownTarget(FaultTarget),
    #[error("cluster must have at least one node")]
    NoNodes,
}

struct SimNode {
    node: Node,
    alive: bool,
    incarnation: u64,
    busy_until: u64,
}

/// Final state of one node, recorded at the end of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSummary {
    pub id: ServerId,
    pub alive: bool,
    pub role: Role,
    pub commit_index: u64,
    pub last_applied: u64,
    pub generation: u64,
    pub kv_digest: u64,
    pub log_dump: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: String,
    pub metrics: RunMetrics,
    pub nodes: Vec<NodeSummary>,
}

pub struct Simulation {
    cfg: SimConfig,
    now: u64,
    queue: EventQueue,
    rng: ChaCha8Rng,
    nodes: Vec<SimNode>,
    initial_members: BTreeSet<ServerId>,
    clients: Vec<Client>,
    partition: Option<Partition>,
    last_crashed: Option<ServerId>,
    trace: Trace,
    metrics: RunMetrics,
    /// First acknowledgement of each non-transactional request: time, node.
    nt_acks: HashMap<RequestId, (u64, ServerId)>,
    pending_joins: Vec<ServerId>,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        if cfg.nodes == 0 {
            return Err(SimError::NoNodes);
        }
        let members: BTreeSet<ServerId> = (0..cfg.nodes as u64).map(ServerId).collect();
        let mut node_cfg = cfg.node.clone();
        node_cfg.entry_header_bytes = cfg.size.entry_header_bytes;
        let nodes = members
            .iter()
            .map(|id| SimNode {
                node: Node::new(*id, node_cfg.clone(), members.clone(), cfg.seed),
                alive: true,
                incarnation: 0,
                busy_until: 0,
            })
            .collect();
        let clients = (0..cfg.workload.clients).map(Client::new).collect();
        let window_start_us = (cfg.workload.start_ms + cfg.workload.warmup_ms) * 1000;
        let metrics = RunMetrics {
            protocol: cfg.node.protocol.as_str().to_string(),
            scenario_fingerprint: scenario_fingerprint(&cfg),
            nodes: vec![NodeStats::default(); cfg.nodes],
            window_start_us,
            window_end_us: cfg.duration_us.max(window_start_us),
            ..Default::default()
        };
        let mut sim = Simulation {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            now: 0,
            queue: EventQueue::new(),
            nodes,
            initial_members: members,
            clients,
            partition: None,
            last_crashed: None,
            trace: Trace::new(),
            metrics,
            nt_acks: HashMap::new(),
            pending_joins: Vec::new(),
            cfg,
        };
        for f in sim.cfg.faults.clone() {
            sim.queue.schedule(f.at_us, EventKind::Fault(f.action));
        }
        for (k, at) in sim.cfg.joins_at_us.clone().into_iter().enumerate() {
            let node = ServerId((sim.cfg.nodes + k) as u64);
            sim.queue.schedule(at, EventKind::Join { node });
        }
        let start = sim.cfg.workload.start_ms * 1000;
        for c in 0..sim.cfg.workload.clients {
            sim.queue
                .schedule(start, EventKind::ClientWake { client: c });
        }
        for i in 0..sim.nodes.len() {
            sim.step_node(ServerId(i as u64), Input::Start, 0);
        }
        Ok(sim)
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn node(&self, id: ServerId) -> &Node {
        &self.nodes[id.0 as usize].node
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_alive(&self, id: ServerId) -> bool {
        self.nodes[id.0 as usize].alive
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    /// Live node in the leader role with the highest term.
    pub fn leader(&self) -> Option<ServerId> {
        self.nodes
            .iter()
            .filter(|n| n.alive && n.node.role() == Role::Leader)
            .max_by_key(|n| n.node.term())
            .map(|n| n.node.id())
    }

    /// Run the whole configured schedule and collect the results.
    pub fn run(mut self) -> Result<RunOutput, SimError> {
        let end = self.cfg.duration_us + self.cfg.quiesce_us;
        self.run_until(end)?;
        Ok(self.finish())
    }

    /// Process every event with time at most `t_end`.
    pub fn run_until(&mut self, t_end: u64) -> Result<(), SimError> {
        while let Some(t) = self.queue.peek_time() {
            if t > t_end {
                self.now = t_end;
                return Ok(());
            }
            let ev = self.queue.pop().expect("peeked");
            self.now = ev.time;
            self.handle(ev)?;
        }
        let clients_active = self.now < self.cfg.duration_us
            && self.clients.iter().any(|c| !c.done(&self.cfg.workload));
        if clients_active {
            return Err(SimError::Deadlock { at_us: self.now });
        }
        self.now = t_end;
        Ok(())
    }

    /// Close the run: account undelivered bytes and record final state.
    pub fn finish(mut self) -> RunOutput {
        self.metrics.in_flight_bytes = self
            .queue
            .pending()
            .map(|k| match k {
                EventKind::Deliver { bytes, .. } => *bytes,
                _ => 0,
            })
            .sum();
        let mut summaries = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let node = &n.node;
            let s = NodeSummary {
                id: ServerId(i as u64),
                alive: n.alive,
                role: node.role(),
                commit_index: node.commit_index().get(),
                last_applied: node.last_applied().get(),
                generation: node.generation().get(),
                kv_digest: node.kv().digest(),
                log_dump: node.log().dump(),
            };
            self.trace.record(
                self.now,
                "final",
                &Endpoint::Node(s.id),
                &"-",
                "-",
                0,
                &format!(
                    "alive={};role={};term={};commit={};applied={};gen={};kv={:016x};stage={}",
                    u8::from(s.alive),
                    s.role.as_str(),
                    node.term(),
                    s.commit_index,
                    s.last_applied,
                    s.generation,
                    s.kv_digest,
                    node.stage().len()
                ),
            );
            summaries.push(s);
        }
        RunOutput {
            trace: self.trace.into_string(),
            metrics: self.metrics,
            nodes: summaries,
        }
    }

    fn handle(&mut self, ev: Event) -> Result<(), SimError> {
        let t = ev.time;
        match ev.kind {
            EventKind::Deliver {
                from,
                to,
                msg,
                bytes,
            } => match to {
                Endpoint::Node(id) => {
                    let n = &self.nodes[id.0 as usize];
                    if !n.alive || self.cut(from, to) {
                        self.drop_msg(from, to, &msg, bytes);
                        return Ok(());
                    }
                    if n.busy_until > t {
                        let at = n.busy_until;
                        self.queue.schedule(
                            at,
                            EventKind::Deliver {
                                from,
                                to,
                                msg,
                                bytes,
                            },
                        );
                        return Ok(());
                    }
                    self.metrics.nodes[id.0 as usize].bytes_received += bytes;
                    let cost = if msg.is_client_request() {
                        self.cfg.cost.client_request_us
                    } else if msg.is_replication_response() {
                        self.cfg.cost.replication_response_us
                    } else {
                        0
                    };
                    self.step_node(id, Input::Message { from, msg }, cost);
                }
                Endpoint::Client(c) => {
                    self.metrics.client_bytes_received += bytes;
                    if let Message::ClientResponse(resp) = msg {
                        self.client_response(c, from, resp);
                    }
                }
            },
            EventKind::Timer {
                node,
                kind,
                incarnation,
                at,
            } => {
                let n = &self.nodes[node.0 as usize];
                if !n.alive || n.incarnation != incarnation {
                    return Ok(());
                }
                if n.busy_until > t {
                    let when = n.busy_until;
                    self.queue.schedule(
                        when,
                        EventKind::Timer {
                            node,
                            kind,
                            incarnation,
                            at,
                        },
                    );
                    return Ok(());
                }
                self.step_node(node, Input::Timer { kind, at }, 0);
            }
            EventKind::Fault(action) => self.fault(action)?,
            EventKind::ClientWake { client } => self.client_issue(client),
            EventKind::ClientTimeout { client, attempt } => {
                let c = &self.clients[client as usize];
                if c.outstanding.as_ref().is_some_and(|o| o.attempt == attempt) {
                    self.client_retry(client, None);
                }
            }
            EventKind::ClientRetry { client, attempt } => {
                let c = &self.clients[client as usize];
                if c.outstanding.as_ref().is_some_and(|o| o.attempt == attempt) {
                    self.client_send(client);
                }
            }
            EventKind::Join { node } => self.join(node),
            EventKind::AddMember { node } => self.add_member(node),
        }
        Ok(())
    }

    fn cut(&self, from: Endpoint, to: Endpoint) -> bool {
        match (from, to, &self.partition) {
            (Endpoint::Node(a), Endpoint::Node(b), Some(p)) => p.separates(a, b),
            _ => false,
        }
    }

    fn drop_msg(&mut self, from: Endpoint, to: Endpoint, msg: &Message, bytes: u64) {
        self.metrics.dropped_bytes += bytes;
        if self.cfg.trace_messages {
            self.trace
                .record(self.now, "drop", &from, &to, msg.kind_str(), bytes, "");
        }
    }

    /// Run one handler on a node and route everything it produced.
    fn step_node(&mut self, id: ServerId, input: Input, cost: u64) {
        let idx = id.0 as usize;
        let now = self.now;
        let outputs = self.nodes[idx].node.step(now, input);
        let stats = &mut self.metrics.nodes[idx];
        stats.handler_invocations += 1;
        stats.peak_stage_bytes = stats
            .peak_stage_bytes
            .max(self.nodes[idx].node.stage().bytes());
        let sends = outputs
            .iter()
            .filter(|o| {
                matches!(
                    o,
                    Output::Send {
                        to: Endpoint::Node(_),
                        ..
                    }
                )
            })
            .count() as u64;
        let done = now + cost + sends * self.cfg.cost.message_send_us;
        self.nodes[idx].busy_until = done;
        let is_leader = self.nodes[idx].node.role() == Role::Leader;
        let incarnation = self.nodes[idx].incarnation;
        for out in outputs {
            match out {
                Output::Send { to, msg } => self.send_from_node(id, is_leader, to, msg, done),
                Output::Timer { kind, at } => {
                    self.queue.schedule(
                        at.max(done),
                        EventKind::Timer {
                            node: id,
                            kind,
                            incarnation,
                            at,
                        },
                    );
                }
                Output::Event(ev) => self.protocol_event(id, ev, done),
            }
        }
    }

    fn send_from_node(
        &mut self,
        id: ServerId,
        is_leader: bool,
        to: Endpoint,
        msg: Message,
        at: u64,
    ) {
        let bytes = self.cfg.size.message_bytes(&msg);
        let from = Endpoint::Node(id);
        let in_window = at >= self.metrics.window_start_us && at < self.metrics.window_end_us;
        let stats = &mut self.metrics.nodes[id.0 as usize];
        stats.bytes_sent += bytes;
        stats.messages_sent += 1;
        if in_window {
            if is_leader {
                stats.window_leader_bytes_sent += bytes;
            } else {
                stats.window_follower_bytes_sent += bytes;
            }
        }
        if self.cfg.trace_messages {
            self.trace
                .record(at, "send", &from, &to, msg.kind_str(), bytes, "");
        }
        match to {
            Endpoint::Node(dst) => {
                if self.cut(from, to) || !self.nodes[dst.0 as usize].alive {
                    self.drop_msg(from, to, &msg, bytes);
                    return;
                }
                let delay = self.cfg.latency.sample(&mut self.rng);
                self.queue.schedule(
                    at + delay,
                    EventKind::Deliver {
                        from,
                        to,
                        msg,
                        bytes,
                    },
                );
            }
            Endpoint::Client(_) => {
                let delay = self.cfg.latency.client_us;
                self.queue.schedule(
                    at + delay,
                    EventKind::Deliver {
                        from,
                        to,
                        msg,
                        bytes,
                    },
                );
            }
        }
    }

    fn protocol_event(&mut self, id: ServerId, ev: ProtocolEvent, at: u64) {
        let from = Endpoint::Node(id);
        let (kind, msg_kind, detail) = match ev {
            ProtocolEvent::Applied {
                index,
                kind,
                request_id,
                digest,
                outcome,
            } => {
                if let Some((ack_at, node)) = self.nt_acks.get(&request_id) {
                    if *node == id {
                        self.metrics.apply_lag_us.push(at.saturating_sub(*ack_at));
                    }
                }
                (
                    "apply",
                    kind.as_str(),
                    format!(
                        "index={index};rid={request_id};digest={digest:016x};outcome={}",
                        apply_outcome_str(outcome)
                    ),
                )
            }
            ProtocolEvent::Allocated {
                index,
                generation,
                request_id,
                digest,
            } => (
                "alloc",
                "future",
                format!("index={index};gen={generation};rid={request_id};digest={digest:016x}"),
            ),
            ProtocolEvent::Materialized {
                index,
                origin,
                generation,
                request_id,
                digest,
            } => (
                "materialize",
                "future",
                format!(
                    "index={index};origin={origin};gen={generation};rid={request_id};digest={digest:016x}"
                ),
            ),
            ProtocolEvent::Window(w) => (
                "window",
                "-",
                format!(
                    "gen={};start={};end={};state={}",
                    w.generation,
                    w.start,
                    w.end,
                    if w.is_open() { "open" } else { "closed" }
                ),
            ),
            ProtocolEvent::RoleChanged { role, term } => {
                ("role", "-", format!("role={};term={term}", role.as_str()))
            }
            ProtocolEvent::GenerationChanged { from: a, to: b } => {
                ("genchange", "-", format!("from={a};to={b}"))
            }
            ProtocolEvent::Conflict { index, request_id } => {
                ("conflict", "future", format!("index={index};rid={request_id}"))
            }
            ProtocolEvent::Retransmitted { entries, bytes } => {
                let s = &mut self.metrics.nodes[id.0 as usize];
                s.retransmit_entries += entries;
                s.retransmit_bytes += bytes;
                ("retransmit", "append", format!("entries={entries};bytes={bytes}"))
            }
            ProtocolEvent::StepFill { from: a, to: b } => {
                ("stepfill", "noop", format!("from={a};to={b}"))
            }
        };
        self.trace
            .record(at, kind, &from, &"-", msg_kind, 0, &detail);
    }

    fn fault(&mut self, action: FaultAction) -> Result<(), SimError> {
        match &action {
            FaultAction::Crash(target) => {
                let Some(id) = self.resolve(*target, true)? else {
                    self.trace
                        .record(self.now, "fault", &"-", &"-", "crash", 0, "skipped=1");
                    return Ok(());
                };
                let n = &mut self.nodes[id.0 as usize];
                let was_leader = n.node.role() == Role::Leader;
                n.alive = false;
                n.incarnation += 1;
                n.busy_until = 0;
                self.last_crashed = Some(id);
                self.trace.record(
                    self.now,
                    "fault",
                    &"-",
                    &Endpoint::Node(id),
                    "crash",
                    0,
                    &format!("leader={}", u8::from(was_leader)),
                );
            }
            FaultAction::Restart(target) => {
                let id = self
                    .resolve(*target, false)?
                    .ok_or(SimError::UnknownTarget(*target))?;
                let n = &mut self.nodes[id.0 as usize];
                if n.alive {
                    return Err(SimError::RestartNotCrashed { node: id.0 });
                }
                n.alive = true;
                n.busy_until = self.now;
                let inc = n.incarnation;
                n.node.restart(inc);
                self.trace.record(
                    self.now,
                    "fault",
                    &"-",
                    &Endpoint::Node(id),
                    "restart",
                    0,
                    "",
                );
                self.step_node(id, Input::Start, 0);
            }
            FaultAction::Partition(a, b) => {
                self.partition = Some(Partition::new(a, b));
                let d = format!(
                    "a={};b={}",
                    a.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
                    b.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
                );
                self.trace
                    .record(self.now, "fault", &"-", &"-", "partition", 0, &d);
            }
            FaultAction::Heal => {
                self.partition = None;
                self.trace
                    .record(self.now, "fault", &"-", &"-", "heal", 0, "");
            }
        }
        Ok(())
    }

    /// Map a fault target to a node id. `None` when no node matches (for
    /// instance no leader at that moment).
    fn resolve(&mut self, target: FaultTarget, crash: bool) -> Result<Option<ServerId>, SimError> {
        Ok(match target {
            FaultTarget::Node(i) => {
                if i as usize >= self.nodes.len() {
                    return Err(SimError::UnknownTarget(target));
                }
                let id = ServerId(i);
                (!crash || self.is_alive(id)).then_some(id)
            }
            FaultTarget::Leader => self.leader(),
            FaultTarget::RandomFollower => {
                let leader = self.leader();
                let candidates: Vec<ServerId> = self
                    .nodes
                    .iter()
                    .filter(|n| n.alive && Some(n.node.id()) != leader)
                    .map(|n| n.node.id())
                    .collect();
                candidates.choose(&mut self.rng).copied()
            }
            FaultTarget::LastCrashed => self.last_crashed,
        })
    }

    fn join(&mut self, id: ServerId) {
        let mut cfg = self.cfg.node.clone();
        cfg.entry_header_bytes = self.cfg.size.entry_header_bytes;
        let node = Node::new(id, cfg, self.initial_members.clone(), self.cfg.seed);
        debug_assert_eq!(id.0 as usize, self.nodes.len());
        self.nodes.push(SimNode {
            node,
            alive: true,
            incarnation: 0,
            busy_until: self.now,
        });
        self.metrics.nodes.push(NodeStats::default());
        self.trace
            .record(self.now, "fault", &"-", &Endpoint::Node(id), "join", 0, "");
        self.step_node(id, Input::Start, 0);
        self.pending_joins.push(id);
        self.add_member(id);
    }

    /// Hand a join to the current leader, and keep checking until a leader
    /// carries the new server in its membership.
    fn add_member(&mut self, id: ServerId) {
        match self.leader() {
            Some(l) if self.node(l).membership().contains(&id) => {
                self.pending_joins.retain(|j| *j != id);
                return;
            }
            Some(l) => self.step_node(l, Input::AddMember(id), 0),
            None => {}
        }
        self.queue
            .schedule(self.now + 100_000, EventKind::AddMember { node: id });
    }

    fn targets(&self) -> Vec<ServerId> {
        let joined = self.nodes.len() - self.pending_joins.len();
        (0..joined as u64).map(ServerId).collect()
    }

    fn client_issue(&mut self, c: u64) {
        let ci = c as usize;
        if self.now >= self.cfg.duration_us
            || self.clients[ci].outstanding.is_some()
            || self.clients[ci].done(&self.cfg.workload)
        {
            return;
        }
        let req = self.clients[ci].next_request(&mut self.rng, &self.cfg.workload);
        self.metrics.requests_issued += 1;
        let targets = self.targets();
        let target = self.clients[ci].pick_target(&mut self.rng, &self.cfg.workload, &targets);
        self.clients[ci].outstanding = Some(crate::workload::Outstanding {
            request: req,
            first_sent_us: self.now,
            attempt: 0,
            target,
        });
        self.client_send(c);
    }

    /// Send the outstanding request of client `c` to its current target.
    fn client_send(&mut self, c: u64) {
        let ci = c as usize;
        let o = self.clients[ci]
            .outstanding
            .as_ref()
            .expect("outstanding request");
        let (req, target, attempt) = (o.request.clone(), o.target, o.attempt);
        self.metrics.attempts += 1;
        let to = Endpoint::Node(target);
        let from = Endpoint::Client(c);
        let timeout = self.now + self.cfg.workload.request_timeout_ms * 1000;
        self.queue
            .schedule(timeout, EventKind::ClientTimeout { client: c, attempt });
        if !self.nodes[target.0 as usize].alive {
            if self.cfg.trace_messages {
                self.trace
                    .record(self.now, "refused", &from, &to, req.kind.as_str(), 0, "");
            }
            self.client_refused(c, target);
            return;
        }
        let msg = Message::ClientRequest(req);
        let bytes = self.cfg.size.message_bytes(&msg);
        self.metrics.client_bytes_sent += bytes;
        if self.cfg.trace_messages {
            self.trace
                .record(self.now, "send", &from, &to, msg.kind_str(), bytes, "");
        }
        self.queue.schedule(
            self.now + self.cfg.latency.client_us,
            EventKind::Deliver {
                from,
                to,
                msg,
                bytes,
            },
        );
    }

    /// The connection to `refused` failed at once, so the client tries
    /// another server without waiting.
    fn client_refused(&mut self, c: u64, refused: ServerId) {
        let ci = c as usize;
        if self.clients[ci].leader_hint == Some(refused) {
            self.clients[ci].leader_hint = None;
        }
        let targets: Vec<ServerId> = self
            .targets()
            .into_iter()
            .filter(|t| *t != refused && self.nodes[t.0 as usize].alive)
            .collect();
        let target = if targets.is_empty() {
            refused
        } else {
            self.clients[ci].pick_target(&mut self.rng, &self.cfg.workload, &targets)
        };
        let o = self.clients[ci]
            .outstanding
            .as_mut()
            .expect("outstanding request");
        o.attempt += 1;
        o.target = target;
        let attempt = o.attempt;
        let delay = if target == refused {
            self.cfg.workload.retry_backoff_ms * 1000
        } else {
            self.cfg.latency.client_us
        };
        self.queue.schedule(
            self.now + delay,
            EventKind::ClientRetry { client: c, attempt },
        );
    }

    /// New attempt for the same request id, after a short backoff unless a
    /// redirect named the node to use.
    fn client_retry(&mut self, c: u64, hint: Option<ServerId>) {
        let ci = c as usize;
        let targets = self.targets();
        let target = match hint {
            Some(h) if (h.0 as usize) < self.nodes.len() => h,
            _ => self.clients[ci].pick_target(&mut self.rng, &self.cfg.workload, &targets),
        };
        let o = self.clients[ci]
            .outstanding
            .as_mut()
            .expect("outstanding request");
        o.attempt += 1;
        o.target = target;
        let attempt = o.attempt;
        if hint.is_some() {
            self.client_send(c);
        } else {
            let at = self.now + self.cfg.workload.retry_backoff_ms * 1000;
            self.queue
                .schedule(at, EventKind::ClientRetry { client: c, attempt });
        }
    }

    fn client_response(&mut self, c: u64, from: Endpoint, resp: ClientResponse) {
        let ci = c as usize;
        let Some(o) = self.clients[ci].outstanding.as_ref() else {
            return;
        };
        if o.request.request_id != resp.request_id {
            return;
        }
        if let Some(h) = resp.leader_hint {
            self.clients[ci].leader_hint = Some(h);
        }
        match resp.outcome {
            Outcome::Ok => {
                let o = self.clients[ci].outstanding.take().expect("checked");
                let node = match from {
                    Endpoint::Node(n) => n,
                    Endpoint::Client(_) => ServerId(u64::MAX),
                };
                let latency_us = self.now - o.first_sent_us;
                let kind = o.request.kind;
                self.metrics.acks.push(AckRecord {
                    time_us: self.now,
                    kind,
                    latency_us,
                    request_id: o.request.request_id,
                    node,
                });
                if kind == TxKind::NonTransactional {
                    self.nt_acks
                        .entry(o.request.request_id)
                        .or_insert((self.now, node));
                }
                self.trace.record(
                    self.now,
                    "client_ack",
                    &from,
                    &Endpoint::Client(c),
                    kind.as_str(),
                    0,
                    &format!("rid={};latency_us={latency_us}", o.request.request_id),
                );
                self.clients[ci].completed += 1;
                self.client_issue(c);
            }
            Outcome::Redirected => self.client_retry(c, resp.leader_hint),
            Outcome::Rejected | Outcome::Timeout => self.client_retry(c, None),
        }
    }
}

/// Hash of everything in a configuration except the protocol, so two runs
/// of one scenario under different protocols share a fingerprint.
pub fn scenario_fingerprint(cfg: &SimConfig) -> u64 {
    let mut c = cfg.clone();
    c.node.protocol = Protocol::Lcr;
    format!("{c:?}")
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
        })
}

fn apply_outcome_str(o: crate::node::ApplyOutcome) -> &'static str {
    use crate::node::ApplyOutcome::*;
    match o {
        Applied => "applied",
        Refused => "refused",
        Duplicate => "duplicate",
        Malformed => "malformed",
    }
}

#[cfg(test)]
mod tests;
