//! Wire-size accounting.

use serde::{Deserialize, Serialize};

use crate::log::Entry;
use crate::node::Message;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizeModel {
    pub message_header_bytes: u64,
    pub entry_header_bytes: u64,
}

impl Default for SizeModel {
    fn default() -> Self {
        SizeModel {
            message_header_bytes: 48,
            entry_header_bytes: 24,
        }
    }
}

impl SizeModel {
    /// Signal and no-op entries carry no payload, so they cost the header.
    pub fn entry_bytes(&self, e: &Entry) -> u64 {
        self.entry_header_bytes + e.payload.len() as u64
    }

    pub fn message_bytes(&self, msg: &Message) -> u64 {
        self.message_header_bytes
            + msg.client_payload_len() as u64
            + msg
                .entries()
                .iter()
                .map(|e| self.entry_bytes(e))
                .sum::<u64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::{EntryKind, Generation, LogIndex, RequestId, ServerId, Term};
    use crate::node::{ClientRequest, FutureReplicateRequest, TxKind};

    fn fe(payload: usize) -> Entry {
        Entry {
            index: LogIndex(7),
            term: Term(1),
            generation: Generation(5),
            kind: EntryKind::Future,
            origin: ServerId(2),
            request_id: RequestId::new(1, 1),
            payload: vec![0; payload],
        }
    }

    #[test]
    fn client_request_counts_payload_and_header() {
        let m = SizeModel::default();
        let msg = Message::ClientRequest(ClientRequest {
            request_id: RequestId::new(0, 0),
            kind: TxKind::Transactional,
            payload: vec![0; 100],
        });
        assert_eq!(m.message_bytes(&msg), 148);
    }

    #[test]
    fn signals_cost_header_only() {
        let m = SizeModel::default();
        let full = fe(80);
        let sig = full.to_signal();
        assert_eq!(m.entry_bytes(&full), 104);
        assert_eq!(m.entry_bytes(&sig), 24);
        let msg = Message::FutureReplicate(FutureReplicateRequest {
            term: Term(1),
            generation: Generation(5),
            data_leader: ServerId(2),
            entries: vec![full, sig],
        });
        assert_eq!(m.message_bytes(&msg), 48 + 104 + 24);
    }
}
