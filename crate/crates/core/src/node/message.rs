//! Wire messages exchanged between nodes and clients.

use crate::log::{Entry, Generation, LogIndex, RequestId, ServerId, Term};

/// Address of a simulated actor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Node(ServerId),
    Client(u64),
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Node(id) => write!(f, "n{id}"),
            Endpoint::Client(c) => write!(f, "c{c}"),
        }
    }
}

impl std::str::FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad endpoint {s:?}");
        if let Some(rest) = s.strip_prefix('n') {
            rest.parse()
                .map(|n| Endpoint::Node(ServerId(n)))
                .map_err(|_| bad())
        } else if let Some(rest) = s.strip_prefix('c') {
            rest.parse().map(Endpoint::Client).map_err(|_| bad())
        } else {
            Err(bad())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxKind {
    /// Depends on prior state; ordered by the leader, acked after apply.
    Transactional,
    /// Insert-style record; replicated by a follower acting as data-leader.
    NonTransactional,
}

impl TxKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TxKind::Transactional => "tx",
            TxKind::NonTransactional => "ntx",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientRequest {
    pub request_id: RequestId,
    pub kind: TxKind,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Redirected,
    Rejected,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientResponse {
    pub request_id: RequestId,
    pub outcome: Outcome,
    pub leader_hint: Option<ServerId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppendEntriesRequest {
    pub term: Term,
    pub generation: Generation,
    pub leader_id: ServerId,
    pub prev_log_index: LogIndex,
    pub prev_log_term: Term,
    pub entries: Vec<Entry>,
    pub leader_commit: LogIndex,
    /// Per-follower pipeline sequence; 0 marks a heartbeat probe.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppendEntriesResponse {
    pub term: Term,
    pub generation: Generation,
    /// Term and previous-entry checks passed.
    pub success: bool,
    /// How far the follower's contiguous log reaches after processing. Less
    /// than the last index carried by the request when a signal could not be
    /// resolved.
    pub last_applied_report: LogIndex,
    /// Highest future index the follower has staged.
    pub last_future_index: LogIndex,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FutureReplicateRequest {
    pub term: Term,
    pub generation: Generation,
    pub data_leader: ServerId,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FutureVerdict {
    Accepted,
    /// Slot already holds a different entry.
    Conflict,
    /// Sender term or generation is behind.
    Stale,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FutureReplicateResponse {
    pub term: Term,
    pub generation: Generation,
    pub accepted: bool,
    pub last_future_index: LogIndex,
    /// Responder was the leader when it answered.
    pub from_leader: bool,
    pub results: Vec<(LogIndex, RequestId, FutureVerdict)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestVoteRequest {
    pub term: Term,
    pub candidate: ServerId,
    pub last_log_index: LogIndex,
    pub last_log_term: Term,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestVoteResponse {
    pub term: Term,
    pub granted: bool,
}

/// New leader asking followers for their staged future entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FutureSyncRequest {
    pub term: Term,
    pub leader_id: ServerId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FutureSyncResponse {
    pub term: Term,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    ClientRequest(ClientRequest),
    ClientResponse(ClientResponse),
    /// Follower relaying a client request to the leader.
    Forward(ClientRequest),
    /// Leader's answer to a relayed request.
    ForwardReply(ClientResponse),
    AppendEntries(AppendEntriesRequest),
    AppendEntriesResponse(AppendEntriesResponse),
    FutureReplicate(FutureReplicateRequest),
    FutureReplicateResponse(FutureReplicateResponse),
    RequestVote(RequestVoteRequest),
    RequestVoteResponse(RequestVoteResponse),
    FutureSync(FutureSyncRequest),
    FutureSyncResponse(FutureSyncResponse),
}

impl Message {
    pub fn kind_str(&self) -> &'static str {
        match self {
            Message::ClientRequest(_) => "client_req",
            Message::ClientResponse(_) => "client_resp",
            Message::Forward(_) => "forward",
            Message::ForwardReply(_) => "forward_reply",
            Message::AppendEntries(_) => "append",
            Message::AppendEntriesResponse(_) => "append_resp",
            Message::FutureReplicate(_) => "future",
            Message::FutureReplicateResponse(_) => "future_resp",
            Message::RequestVote(_) => "vote",
            Message::RequestVoteResponse(_) => "vote_resp",
            Message::FutureSync(_) => "future_sync",
            Message::FutureSyncResponse(_) => "future_sync_resp",
        }
    }

    /// Entries carried, if any.
    pub fn entries(&self) -> &[Entry] {
        match self {
            Message::AppendEntries(r) => &r.entries,
            Message::FutureReplicate(r) => &r.entries,
            Message::FutureSyncResponse(r) => &r.entries,
            _ => &[],
        }
    }

    /// Application payload bytes outside of entries.
    pub fn client_payload_len(&self) -> usize {
        match self {
            Message::ClientRequest(r) | Message::Forward(r) => r.payload.len(),
            _ => 0,
        }
    }

    /// Replication responses count towards the handler cost model.
    pub fn is_replication_response(&self) -> bool {
        matches!(
            self,
            Message::AppendEntriesResponse(_) | Message::FutureReplicateResponse(_)
        )
    }

    pub fn is_client_request(&self) -> bool {
        matches!(self, Message::ClientRequest(_) | Message::Forward(_))
    }
}
