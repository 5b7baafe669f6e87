//! Key-value application state machine.
//!
//! Non-transactional requests are inserts of sensor-style readings.
//! Transactional requests are transfers between accounts; a transfer that
//! would overdraw its source is still applied, as a recorded rejection, so
//! every replica ends in the same state.

use std::collections::{BTreeMap, HashSet};

use crate::log::{fnv1a, RequestId};

/// Balance of an account that has never been written.
pub const OPENING_BALANCE: i64 = 100;

const TAG_INSERT: u8 = 1;
const TAG_TRANSFER: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Insert { key: u64, value: i64 },
    Transfer { from: u64, to: u64, amount: i64 },
}

impl Command {
    /// Encode, zero-padded to at least `size` bytes.
    pub fn encode(&self, size: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(size.max(25));
        match *self {
            Command::Insert { key, value } => {
                out.push(TAG_INSERT);
                out.extend_from_slice(&key.to_le_bytes());
                out.extend_from_slice(&value.to_le_bytes());
            }
            Command::Transfer { from, to, amount } => {
                out.push(TAG_TRANSFER);
                out.extend_from_slice(&from.to_le_bytes());
                out.extend_from_slice(&to.to_le_bytes());
                out.extend_from_slice(&amount.to_le_bytes());
            }
        }
        if out.len() < size {
            out.resize(size, 0);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Command> {
        let word = |at: usize| -> Option<[u8; 8]> { bytes.get(at..at + 8)?.try_into().ok() };
        match *bytes.first()? {
            TAG_INSERT => Some(Command::Insert {
                key: u64::from_le_bytes(word(1)?),
                value: i64::from_le_bytes(word(9)?),
            }),
            TAG_TRANSFER => Some(Command::Transfer {
                from: u64::from_le_bytes(word(1)?),
                to: u64::from_le_bytes(word(9)?),
                amount: i64::from_le_bytes(word(17)?),
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Applied,
    /// Transfer refused for insufficient balance; still consumes the id.
    Refused,
    /// Request id already applied; skipped.
    Duplicate,
    /// Payload did not decode; recorded as a no-op.
    Malformed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvStateMachine {
    store: BTreeMap<u64, i64>,
    applied: HashSet<RequestId>,
    refused: u64,
}

impl KvStateMachine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply(&mut self, request_id: RequestId, payload: &[u8]) -> ApplyOutcome {
        if !self.applied.insert(request_id) {
            return ApplyOutcome::Duplicate;
        }
        match Command::decode(payload) {
            Some(Command::Insert { key, value }) => {
                self.store.insert(key, value);
                ApplyOutcome::Applied
            }
            Some(Command::Transfer { from, to, amount }) => {
                let src = self.balance(from);
                if amount < 0 || src < amount || from == to {
                    self.refused += 1;
                    return ApplyOutcome::Refused;
                }
                let dst = self.balance(to);
                self.store.insert(from, src - amount);
                self.store.insert(to, dst + amount);
                ApplyOutcome::Applied
            }
            None => ApplyOutcome::Malformed,
        }
    }

    pub fn balance(&self, key: u64) -> i64 {
        self.store.get(&key).copied().unwrap_or(OPENING_BALANCE)
    }

    pub fn get(&self, key: u64) -> Option<i64> {
        self.store.get(&key).copied()
    }

    pub fn is_applied(&self, request_id: &RequestId) -> bool {
        self.applied.contains(request_id)
    }

    pub fn applied_count(&self) -> usize {
        self.applied.len()
    }

    pub fn refused_count(&self) -> u64 {
        self.refused
    }

    /// Order-independent digest of the store contents.
    pub fn digest(&self) -> u64 {
        let mut buf = Vec::with_capacity(self.store.len() * 16);
        for (k, v) in &self.store {
            buf.extend_from_slice(&k.to_le_bytes());
            buf.extend_from_slice(&v.to_le_bytes());
        }
        fnv1a(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commands_round_trip_with_padding() {
        let c = Command::Transfer {
            from: 1,
            to: 2,
            amount: 5,
        };
        let bytes = c.encode(80);
        assert_eq!(bytes.len(), 80);
        assert_eq!(Command::decode(&bytes), Some(c));
        assert_eq!(Command::decode(&[9]), None);
    }

    #[test]
    fn identical_sequences_give_identical_stores() {
        let ops = [
            (RequestId::new(0, 1), Command::Insert { key: 1, value: 7 }),
            (RequestId::new(0, 2), Command::Insert { key: 2, value: 9 }),
            (
                RequestId::new(1, 1),
                Command::Transfer {
                    from: 10,
                    to: 11,
                    amount: 5,
                },
            ),
        ];
        let mut a = KvStateMachine::new();
        let mut b = KvStateMachine::new();
        for (id, op) in ops {
            a.apply(id, &op.encode(80));
            b.apply(id, &op.encode(80));
        }
        assert_eq!(a, b);
        assert_eq!(a.get(1), Some(7));
        assert_eq!(a.balance(10), OPENING_BALANCE - 5);
        assert_eq!(a.balance(11), OPENING_BALANCE + 5);
    }

    #[test]
    fn duplicate_request_is_skipped() {
        let mut kv = KvStateMachine::new();
        let id = RequestId::new(3, 3);
        let op = Command::Transfer {
            from: 1,
            to: 2,
            amount: 10,
        }
        .encode(32);
        assert_eq!(kv.apply(id, &op), ApplyOutcome::Applied);
        assert_eq!(kv.apply(id, &op), ApplyOutcome::Duplicate);
        assert_eq!(kv.balance(1), OPENING_BALANCE - 10);
    }

    #[test]
    fn overdraw_is_refused_deterministically() {
        let mut kv = KvStateMachine::new();
        let op = Command::Transfer {
            from: 1,
            to: 2,
            amount: OPENING_BALANCE + 1,
        }
        .encode(32);
        assert_eq!(kv.apply(RequestId::new(0, 0), &op), ApplyOutcome::Refused);
        assert_eq!(kv.balance(1), OPENING_BALANCE);
        assert_eq!(kv.refused_count(), 1);
    }
}
