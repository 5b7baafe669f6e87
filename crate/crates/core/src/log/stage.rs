//! Future entries received or created but not yet resolved into the
//! leader-confirmed sequence.

use std::collections::BTreeMap;

use super::types::{Entry, EntryKind, Generation, LogIndex, ServerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Staged,
    /// The identical entry is already staged.
    Duplicate,
    /// The sender is behind; carries the local generation.
    StaleGeneration(Generation),
    /// A different entry of the same generation holds the slot.
    Conflict,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FutureStage {
    pending: BTreeMap<u64, Entry>,
    bytes: u64,
}

impl FutureStage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stage(
        &mut self,
        entry: Entry,
        local: Generation,
        entry_header_bytes: u64,
    ) -> StageOutcome {
        debug_assert_eq!(entry.kind, EntryKind::Future);
        if entry.generation < local {
            return StageOutcome::StaleGeneration(local);
        }
        let i = entry.index.get();
        if let Some(existing) = self.pending.get(&i) {
            if existing.same_identity(&entry) && existing.payload == entry.payload {
                return StageOutcome::Duplicate;
            }
            if existing.generation >= entry.generation {
                return StageOutcome::Conflict;
            }
            self.take(entry.index, entry_header_bytes);
        }
        self.bytes += entry.payload.len() as u64 + entry_header_bytes;
        self.pending.insert(i, entry);
        StageOutcome::Staged
    }

    pub fn get(&self, index: LogIndex) -> Option<&Entry> {
        self.pending.get(&index.get())
    }

    pub fn take(&mut self, index: LogIndex, entry_header_bytes: u64) -> Option<Entry> {
        let e = self.pending.remove(&index.get())?;
        self.bytes -= e.payload.len() as u64 + entry_header_bytes;
        Some(e)
    }

    /// Highest staged index, or zero.
    pub fn last_index(&self) -> LogIndex {
        LogIndex(self.pending.keys().next_back().copied().unwrap_or(0))
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Payload plus header bytes held.
    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn iter(&self) -> impl Iterator<Item = &Entry> {
        self.pending.values()
    }

    /// Staged entries originated by `origin`.
    pub fn owned_by(&self, origin: ServerId) -> impl Iterator<Item = &Entry> {
        self.pending.values().filter(move |e| e.origin == origin)
    }

    /// Drop and return every entry at or below `index`.
    pub fn drain_through(&mut self, index: LogIndex, entry_header_bytes: u64) -> Vec<Entry> {
        let rest = self.pending.split_off(&(index.get() + 1));
        let gone = std::mem::replace(&mut self.pending, rest);
        let out: Vec<Entry> = gone.into_values().collect();
        for e in &out {
            self.bytes -= e.payload.len() as u64 + entry_header_bytes;
        }
        out
    }
}
