//! Index, identity, and entry types shared by the unified log and the
//! protocol messages.

use std::fmt;

/// Position in the unified index space. `LogIndex::ZERO` is the empty-log
/// sentinel; real entries start at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LogIndex(pub u64);

impl LogIndex {
    pub const ZERO: LogIndex = LogIndex(0);

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn next(self) -> LogIndex {
        LogIndex(self.0 + 1)
    }

    /// Previous index, saturating at the sentinel.
    pub fn prev(self) -> LogIndex {
        LogIndex(self.0.saturating_sub(1))
    }
}

impl fmt::Display for LogIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Consecutive server number, starting at 0 within a membership set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ServerId(pub u64);

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Cluster generation. Equal to the cluster size, so it is always strictly
/// greater than every server id in the membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Generation(pub u64);

impl Generation {
    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for Generation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Election term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Term(pub u64);

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Globally unique client request identifier: client number plus that
/// client's sequence number. Retries reuse the same id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RequestId {
    pub client: u64,
    pub seq: u64,
}

impl RequestId {
    pub fn new(client: u64, seq: u64) -> Self {
        RequestId { client, seq }
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.client, self.seq)
    }
}

impl std::str::FromStr for RequestId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (c, q) = s
            .split_once(':')
            .ok_or_else(|| format!("bad request id {s:?}"))?;
        let client = c.parse().map_err(|_| format!("bad request id {s:?}"))?;
        let seq = q.parse().map_err(|_| format!("bad request id {s:?}"))?;
        Ok(RequestId { client, seq })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryKind {
    /// Leader-ordered entry.
    Normal,
    /// Follower-originated entry at a pre-allocated future index, carrying
    /// its full payload.
    Future,
    /// Header-only confirmation of a future entry; resolved from the
    /// receiver's stage.
    Signal,
    /// Gap filler appended by the leader's stepping mechanism.
    NoOpFill,
    /// Membership configuration. The payload lists the member ids.
    Config,
}

impl EntryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::Normal => "normal",
            EntryKind::Future => "future",
            EntryKind::Signal => "signal",
            EntryKind::NoOpFill => "noop",
            EntryKind::Config => "config",
        }
    }

    pub fn parse(s: &str) -> Option<EntryKind> {
        Some(match s {
            "normal" => EntryKind::Normal,
            "future" => EntryKind::Future,
            "signal" => EntryKind::Signal,
            "noop" => EntryKind::NoOpFill,
            "config" => EntryKind::Config,
            _ => return None,
        })
    }

    /// Whether entries of this kind carry no payload on the wire.
    pub fn is_header_only(self) -> bool {
        matches!(self, EntryKind::Signal | EntryKind::NoOpFill)
    }
}

/// One slot of the unified log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub index: LogIndex,
    pub term: Term,
    pub generation: Generation,
    pub kind: EntryKind,
    /// Data-leader for future and signal entries, the leader otherwise.
    pub origin: ServerId,
    pub request_id: RequestId,
    pub payload: Vec<u8>,
}

impl Entry {
    /// Same client request, data-leader, and generation. Used to match a
    /// signal against a staged future entry.
    pub fn same_identity(&self, other: &Entry) -> bool {
        self.request_id == other.request_id
            && self.origin == other.origin
            && self.generation == other.generation
    }

    /// Header-only copy that stands in for this future entry.
    pub fn to_signal(&self) -> Entry {
        Entry {
            kind: EntryKind::Signal,
            payload: Vec::new(),
            ..self.clone()
        }
    }

    /// Payload digest recorded in traces so replicas can be compared
    /// without shipping payloads around.
    pub fn digest(&self) -> u64 {
        fnv1a(&self.payload)
    }

    /// One line of the debug dump:
    /// `index,term,generation,kind,origin,requestId,payloadBytesHex`.
    pub fn dump_line(&self) -> String {
        let mut hex = String::with_capacity(self.payload.len() * 2);
        for b in &self.payload {
            hex.push_str(&format!("{b:02x}"));
        }
        format!(
            "{},{},{},{},{},{},{}",
            self.index,
            self.term,
            self.generation,
            self.kind.as_str(),
            self.origin,
            self.request_id,
            hex
        )
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_id_round_trips_through_display() {
        let id = RequestId::new(7, 42);
        assert_eq!(id.to_string(), "7:42");
        assert_eq!("7:42".parse::<RequestId>().unwrap(), id);
        assert!("742".parse::<RequestId>().is_err());
    }

    #[test]
    fn dump_line_format() {
        let e = Entry {
            index: LogIndex(17),
            term: Term(2),
            generation: Generation(5),
            kind: EntryKind::Future,
            origin: ServerId(2),
            request_id: RequestId::new(3, 9),
            payload: vec![0xab, 0x01],
        };
        assert_eq!(e.dump_line(), "17,2,5,future,2,3:9,ab01");
        let s = e.to_signal();
        assert!(s.payload.is_empty());
        assert!(s.same_identity(&e));
    }

    #[test]
    fn fnv_known_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
