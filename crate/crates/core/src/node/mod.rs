//! Per-node protocol state machine.
//!
//! A [`Node`] is a deterministic event handler: every call to
//! [`Node::step`] takes one input (a delivered message, a fired timer, or an
//! operator command) and returns the messages, timer requests, and protocol
//! events it produced. The node owns no clock and does no I/O.
//!
//! With [`Protocol::Raft`] the node behaves as a plain pipelined Raft
//! replica: followers relay every client request to the leader. With
//! [`Protocol::Lcr`] a follower that receives a non-transactional request
//! becomes its data-leader, places it at a future index, and replicates it
//! to every member itself; the leader later confirms the slot by sending a
//! header-only signal in place of the payload.

mod election;
mod follower;
mod future;
mod kv;
mod leader;
mod message;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::log::{
    Entry, EntryKind, FutureStage, Generation, LogIndex, RequestId, ServerId, Term, UnifiedLog,
    Window, WindowConfig, WindowSet,
};

pub use kv::{ApplyOutcome, Command, KvStateMachine, OPENING_BALANCE};
pub use message::{
    AppendEntriesRequest, AppendEntriesResponse, ClientRequest, ClientResponse, Endpoint,
    FutureReplicateRequest, FutureReplicateResponse, FutureSyncRequest, FutureSyncResponse,
    FutureVerdict, Message, Outcome, RequestVoteRequest, RequestVoteResponse, TxKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Lcr,
    /// Baseline: every request is ordered by the leader.
    Raft,
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lcr" => Ok(Protocol::Lcr),
            "raft" => Ok(Protocol::Raft),
            other => Err(format!("unknown protocol {other:?}, expected lcr or raft")),
        }
    }
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Lcr => "lcr",
            Protocol::Raft => "raft",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Follower,
    Candidate,
    Leader,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Follower => "follower",
            Role::Candidate => "candidate",
            Role::Leader => "leader",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub protocol: Protocol,
    pub election_timeout_us: u64,
    /// Upper bound of the uniform extra delay added to each election timeout.
    pub election_jitter_us: u64,
    pub heartbeat_us: u64,
    pub max_await_us: u64,
    /// Outstanding append requests per follower.
    pub max_flying: usize,
    pub max_entries: usize,
    pub window: WindowConfig,
    /// Future-index lead over the contiguous prefix that triggers gap filling.
    pub step_threshold: u64,
    /// Age of the oldest integrated future entry that triggers gap filling.
    pub step_timeout_us: u64,
    pub reconcile_on_election: bool,
    /// Used for staged-bytes accounting.
    pub entry_header_bytes: u64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        let window = WindowConfig::default();
        NodeConfig {
            protocol: Protocol::Lcr,
            election_timeout_us: 5_000_000,
            election_jitter_us: 500_000,
            heartbeat_us: 500_000,
            max_await_us: 1_000_000,
            max_flying: 16,
            max_entries: 5000,
            step_threshold: 4 * window.size,
            window,
            step_timeout_us: 1_000_000,
            reconcile_on_election: true,
            entry_header_bytes: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimerKind {
    Election,
    Heartbeat,
    FutureRetry,
    Step,
    Reconcile,
}

const TIMER_KINDS: usize = 5;

impl TimerKind {
    fn slot(self) -> usize {
        match self {
            TimerKind::Election => 0,
            TimerKind::Heartbeat => 1,
            TimerKind::FutureRetry => 2,
            TimerKind::Step => 3,
            TimerKind::Reconcile => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimerKind::Election => "election",
            TimerKind::Heartbeat => "heartbeat",
            TimerKind::FutureRetry => "future_retry",
            TimerKind::Step => "step",
            TimerKind::Reconcile => "reconcile",
        }
    }
}

/// Protocol-level facts recorded in the trace for verification and metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolEvent {
    Applied {
        index: LogIndex,
        kind: EntryKind,
        request_id: RequestId,
        digest: u64,
        outcome: ApplyOutcome,
    },
    /// A data-leader placed (or re-placed) a request at a future index.
    Allocated {
        index: LogIndex,
        generation: Generation,
        request_id: RequestId,
        digest: u64,
    },
    /// A staged future entry was resolved into the log.
    Materialized {
        index: LogIndex,
        origin: ServerId,
        generation: Generation,
        request_id: RequestId,
        digest: u64,
    },
    Window(Window),
    RoleChanged {
        role: Role,
        term: Term,
    },
    GenerationChanged {
        from: Generation,
        to: Generation,
    },
    /// The data-leader lost its slot and must reallocate.
    Conflict {
        index: LogIndex,
        request_id: RequestId,
    },
    Retransmitted {
        entries: u64,
        bytes: u64,
    },
    StepFill {
        from: LogIndex,
        to: LogIndex,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Send { to: Endpoint, msg: Message },
    Timer { kind: TimerKind, at: u64 },
    Event(ProtocolEvent),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    /// Arm the initial timers.
    Start,
    Message {
        from: Endpoint,
        msg: Message,
    },
    /// A timer fired; carries the instant it was armed for, which may be
    /// earlier than the delivery time when the node was busy.
    Timer {
        kind: TimerKind,
        at: u64,
    },
    /// Operator request to the leader: add a server to the membership.
    AddMember(ServerId),
}

#[derive(Debug, Clone, Copy, Default)]
struct TimerSlot {
    armed: Option<u64>,
    deadline: Option<u64>,
}

/// Leader-side view of one follower.
#[derive(Debug, Clone, Default)]
pub struct FollowerTracker {
    pub next_index: LogIndex,
    pub match_index: LogIndex,
    /// Highest future index the follower reported staged.
    pub last_future_ack: LogIndex,
    send_next: LogIndex,
    max_sent: LogIndex,
    inflight: BTreeMap<u64, LogIndex>,
    next_seq: u64,
    reset_seq: u64,
    /// Last time the pipeline to this follower made progress.
    progress_at: u64,
    /// Future entries up to here go out with full content. Raised when a
    /// signal misses, which means the follower has not staged them.
    full_until: LogIndex,
}

/// A future entry whose data-leader is this node and that has not yet been
/// resolved into its own log.
#[derive(Debug, Clone)]
struct PendingFuture {
    index: LogIndex,
    acks: BTreeSet<ServerId>,
    leader_acked: bool,
    client: Option<Endpoint>,
    client_acked: bool,
    sent_at: u64,
}

pub struct Node {
    id: ServerId,
    cfg: NodeConfig,
    rng: ChaCha8Rng,

    // Survives crashes.
    term: Term,
    voted_for: Option<ServerId>,
    generation: Generation,
    initial_membership: BTreeSet<ServerId>,
    membership: BTreeSet<ServerId>,
    log: UnifiedLog,
    stage: FutureStage,
    windows: WindowSet,
    kv: KvStateMachine,
    last_applied: LogIndex,
    future_last: LogIndex,
    future_seen: LogIndex,

    // Volatile.
    role: Role,
    leader_hint: Option<ServerId>,
    commit_index: LogIndex,
    votes: BTreeSet<ServerId>,
    followers: BTreeMap<ServerId, FollowerTracker>,
    forwards: HashMap<RequestId, Endpoint>,
    waiting: BTreeMap<u64, (RequestId, Endpoint)>,
    pending: BTreeMap<RequestId, PendingFuture>,
    integrated_at: BTreeMap<u64, u64>,
    reconcile: Option<BTreeSet<ServerId>>,
    queued: Vec<(Endpoint, ClientRequest)>,
    timers: [TimerSlot; TIMER_KINDS],
    now: u64,
    out: Vec<Output>,
}

impl Node {
    pub fn new(id: ServerId, cfg: NodeConfig, membership: BTreeSet<ServerId>, seed: u64) -> Self {
        let generation = Generation(membership.len().max(1) as u64);
        let windows = WindowSet::new(cfg.window, generation);
        Node {
            id,
            rng: ChaCha8Rng::seed_from_u64(seed ^ (id.0.wrapping_mul(0x9e37_79b9_7f4a_7c15))),
            cfg,
            term: Term(0),
            voted_for: None,
            generation,
            initial_membership: membership.clone(),
            membership,
            log: UnifiedLog::new(),
            stage: FutureStage::new(),
            windows,
            kv: KvStateMachine::new(),
            last_applied: LogIndex::ZERO,
            future_last: LogIndex::ZERO,
            future_seen: LogIndex::ZERO,
            role: Role::Follower,
            leader_hint: None,
            commit_index: LogIndex::ZERO,
            votes: BTreeSet::new(),
            followers: BTreeMap::new(),
            forwards: HashMap::new(),
            waiting: BTreeMap::new(),
            pending: BTreeMap::new(),
            integrated_at: BTreeMap::new(),
            reconcile: None,
            queued: Vec::new(),
            timers: [TimerSlot::default(); TIMER_KINDS],
            now: 0,
            out: Vec::new(),
        }
    }

    pub fn id(&self) -> ServerId {
        self.id
    }
    pub fn role(&self) -> Role {
        self.role
    }
    pub fn term(&self) -> Term {
        self.term
    }
    pub fn generation(&self) -> Generation {
        self.generation
    }
    pub fn membership(&self) -> &BTreeSet<ServerId> {
        &self.membership
    }
    pub fn log(&self) -> &UnifiedLog {
        &self.log
    }
    pub fn stage(&self) -> &FutureStage {
        &self.stage
    }
    pub fn windows(&self) -> &[Window] {
        self.windows.windows()
    }
    pub fn kv(&self) -> &KvStateMachine {
        &self.kv
    }
    pub fn commit_index(&self) -> LogIndex {
        self.commit_index
    }
    pub fn last_applied(&self) -> LogIndex {
        self.last_applied
    }
    pub fn leader_hint(&self) -> Option<ServerId> {
        self.leader_hint
    }
    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }
    pub fn follower(&self, id: ServerId) -> Option<&FollowerTracker> {
        self.followers.get(&id)
    }
    /// Highest future index this node allocated or staged.
    pub fn future_last_index(&self) -> LogIndex {
        self.future_last.max(self.stage.last_index())
    }
    /// Own staged future entries not yet resolved into the log.
    pub fn pending_future_count(&self) -> usize {
        self.stage.owned_by(self.id).count()
    }

    /// Handle one input and return everything it produced.
    pub fn step(&mut self, now: u64, input: Input) -> Vec<Output> {
        self.now = now;
        match input {
            Input::Start => self.reset_election_timer(),
            Input::Message { from, msg } => self.on_message(from, msg),
            Input::Timer { kind, at } => self.on_timer(kind, at),
            Input::AddMember(id) => self.propose_add_member(id),
        }
        std::mem::take(&mut self.out)
    }

    /// Drop all volatile state, as after a process restart. Log, stage,
    /// windows, term, vote, generation, and the applied state machine
    /// survive.
    pub fn restart(&mut self, incarnation: u64) {
        self.role = Role::Follower;
        self.leader_hint = None;
        self.commit_index = self.last_applied;
        self.votes.clear();
        self.followers.clear();
        self.forwards.clear();
        self.waiting.clear();
        self.pending.clear();
        self.integrated_at.clear();
        self.reconcile = None;
        self.queued.clear();
        self.timers = [TimerSlot::default(); TIMER_KINDS];
        self.out.clear();
        self.rng = ChaCha8Rng::seed_from_u64(self.rng.gen::<u64>() ^ incarnation);
        // A crashed leader may hold integrated-but-unconfirmed entries above
        // its contiguous prefix; they go back to the stage.
        self.detach_to_stage();
    }

    fn on_message(&mut self, from: Endpoint, msg: Message) {
        match msg {
            Message::ClientRequest(req) => self.handle_client_request(from, req),
            Message::Forward(req) => self.handle_client_request(from, req),
            Message::ForwardReply(resp) => self.handle_forward_reply(resp),
            Message::ClientResponse(_) => {}
            Message::AppendEntries(req) => {
                if let Endpoint::Node(leader) = from {
                    let resp = self.handle_append_entries(req);
                    self.send(Endpoint::Node(leader), Message::AppendEntriesResponse(resp));
                }
            }
            Message::AppendEntriesResponse(resp) => {
                if let Endpoint::Node(f) = from {
                    self.handle_append_response(f, resp);
                }
            }
            Message::FutureReplicate(req) => {
                if let Endpoint::Node(dl) = from {
                    let resp = self.handle_future_replicate(req);
                    self.send(Endpoint::Node(dl), Message::FutureReplicateResponse(resp));
                }
            }
            Message::FutureReplicateResponse(resp) => {
                if let Endpoint::Node(f) = from {
                    self.handle_future_ack(f, resp);
                }
            }
            Message::RequestVote(req) => {
                if let Endpoint::Node(c) = from {
                    let resp = self.handle_request_vote(req);
                    self.send(Endpoint::Node(c), Message::RequestVoteResponse(resp));
                }
            }
            Message::RequestVoteResponse(resp) => {
                if let Endpoint::Node(v) = from {
                    self.handle_vote_response(v, resp);
                }
            }
            Message::FutureSync(req) => {
                if let Endpoint::Node(l) = from {
                    if let Some(resp) = self.handle_future_sync(req) {
                        self.send(Endpoint::Node(l), Message::FutureSyncResponse(resp));
                    }
                }
            }
            Message::FutureSyncResponse(resp) => {
                if let Endpoint::Node(f) = from {
                    self.handle_future_sync_response(f, resp);
                }
            }
        }
    }

    fn on_timer(&mut self, kind: TimerKind, at: u64) {
        let slot = &mut self.timers[kind.slot()];
        if slot.armed != Some(at) {
            return;
        }
        slot.armed = None;
        match slot.deadline {
            None => return,
            Some(d) if d > self.now => {
                self.arm_at(kind, d);
                return;
            }
            Some(_) => slot.deadline = None,
        }
        match kind {
            TimerKind::Election => self.on_election_timeout(),
            TimerKind::Heartbeat => self.on_heartbeat(),
            TimerKind::FutureRetry => self.on_future_retry(),
            TimerKind::Step => self.step_fill(),
            TimerKind::Reconcile => self.finish_reconcile(),
        }
    }

    fn arm_at(&mut self, kind: TimerKind, at: u64) {
        let slot = &mut self.timers[kind.slot()];
        slot.deadline = Some(at);
        if slot.armed.is_none_or(|a| a > at) {
            slot.armed = Some(at);
            self.out.push(Output::Timer { kind, at });
        }
    }

    fn disarm(&mut self, kind: TimerKind) {
        self.timers[kind.slot()].deadline = None;
    }

    fn timer_deadline(&self, kind: TimerKind) -> Option<u64> {
        self.timers[kind.slot()].deadline
    }

    fn reset_election_timer(&mut self) {
        let jitter = if self.cfg.election_jitter_us > 0 {
            self.rng.gen_range(0..=self.cfg.election_jitter_us)
        } else {
            0
        };
        let at = self.now + self.cfg.election_timeout_us + jitter;
        self.arm_at(TimerKind::Election, at);
    }

    fn send(&mut self, to: Endpoint, msg: Message) {
        self.out.push(Output::Send { to, msg });
    }

    fn emit(&mut self, ev: ProtocolEvent) {
        self.out.push(Output::Event(ev));
    }

    fn majority(&self) -> usize {
        self.membership.len() / 2 + 1
    }

    fn peers(&self) -> Vec<ServerId> {
        self.membership
            .iter()
            .copied()
            .filter(|p| *p != self.id)
            .collect()
    }

    fn is_member(&self) -> bool {
        self.membership.contains(&self.id)
    }

    /// Highest index of the leader-ordered part of the local log.
    fn normal_last(&self) -> LogIndex {
        self.log.last_contiguous()
    }

    fn maintain_windows(&mut self) {
        let normal_last = self.normal_last();
        for w in self.windows.maintain(normal_last) {
            self.emit(ProtocolEvent::Window(w));
        }
    }

    fn set_role(&mut self, role: Role) {
        if self.role != role {
            self.role = role;
            self.emit(ProtocolEvent::RoleChanged {
                role,
                term: self.term,
            });
        }
    }

    /// Adopt a newer term and fall back to follower.
    fn become_follower(&mut self, term: Term) {
        if term > self.term {
            self.term = term;
            self.voted_for = None;
        }
        if self.role == Role::Leader {
            self.step_down_cleanup();
        }
        self.set_role(Role::Follower);
        self.votes.clear();
        self.reset_election_timer();
    }

    fn step_down_cleanup(&mut self) {
        self.disarm(TimerKind::Heartbeat);
        self.disarm(TimerKind::Step);
        self.disarm(TimerKind::Reconcile);
        self.followers.clear();
        self.integrated_at.clear();
        self.reconcile = None;
        let waiting = std::mem::take(&mut self.waiting);
        for (_, (rid, to)) in waiting {
            self.reply(to, rid, Outcome::Rejected);
        }
        for (to, req) in std::mem::take(&mut self.queued) {
            self.reply(to, req.request_id, Outcome::Rejected);
        }
        self.detach_to_stage();
    }

    /// Move log entries above the contiguous prefix back to the stage.
    fn detach_to_stage(&mut self) {
        let detached: Vec<LogIndex> = self.log.detached().map(|e| e.index).collect();
        for idx in detached {
            if let Ok(Some(mut e)) = self.log.remove(idx) {
                if e.kind == EntryKind::Future && e.generation >= self.generation {
                    e.kind = EntryKind::Future;
                    self.stage
                        .stage(e, self.generation, self.cfg.entry_header_bytes);
                }
            }
        }
    }

    /// Respond to a client or to the follower that relayed the request.
    fn reply(&mut self, to: Endpoint, request_id: RequestId, outcome: Outcome) {
        let resp = ClientResponse {
            request_id,
            outcome,
            leader_hint: self.leader_hint,
        };
        match to {
            Endpoint::Client(_) => self.send(to, Message::ClientResponse(resp)),
            Endpoint::Node(n) if n == self.id => {}
            Endpoint::Node(_) => self.send(to, Message::ForwardReply(resp)),
        }
    }

    fn handle_forward_reply(&mut self, resp: ClientResponse) {
        if let Some(client) = self.forwards.remove(&resp.request_id) {
            let mut resp = resp;
            if resp.leader_hint.is_none() {
                resp.leader_hint = self.leader_hint;
            }
            self.send(client, Message::ClientResponse(resp));
        }
    }

    /// Membership implied by the newest configuration entry in the log.
    fn membership_from_log(&self) -> BTreeSet<ServerId> {
        self.log
            .iter()
            .rfind(|e| e.kind == EntryKind::Config)
            .map(|e| decode_members(&e.payload))
            .unwrap_or_else(|| self.initial_membership.clone())
    }

    fn apply_config(&mut self, members: BTreeSet<ServerId>) {
        let new_gen = Generation(members.len() as u64);
        self.membership = members;
        if self.role == Role::Leader {
            let next = self.log.last_contiguous().next();
            for p in self.peers() {
                self.followers.entry(p).or_insert_with(|| FollowerTracker {
                    next_index: next,
                    send_next: next,
                    ..Default::default()
                });
            }
        }
        if new_gen > self.generation {
            self.change_generation(new_gen);
        }
    }
}

pub fn encode_members(members: &BTreeSet<ServerId>) -> Vec<u8> {
    members.iter().flat_map(|m| m.0.to_le_bytes()).collect()
}

pub fn decode_members(bytes: &[u8]) -> BTreeSet<ServerId> {
    bytes
        .chunks_exact(8)
        .map(|c| ServerId(u64::from_le_bytes(c.try_into().expect("chunk of 8"))))
        .collect()
}
