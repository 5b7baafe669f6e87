//! Index-ordered storage for normal, future, and filler entries.

use std::collections::BTreeMap;

use thiserror::Error;

use super::types::{Entry, LogIndex, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("index 0 is reserved")]
    ZeroIndex,
    #[error("index {0} is already occupied")]
    Occupied(u64),
    #[error("refusing to mutate committed index {index} (commit guard {guard})")]
    Committed { index: u64, guard: u64 },
}

/// One store for the normal log and the future log. Gaps are allowed above
/// the contiguous prefix: they are slots reserved by future entries that
/// sit further ahead.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnifiedLog {
    entries: BTreeMap<u64, Entry>,
    contiguous: u64,
    committed_guard: u64,
}

impl UnifiedLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Highest occupied index.
    pub fn last_index(&self) -> LogIndex {
        LogIndex(self.entries.keys().next_back().copied().unwrap_or(0))
    }

    /// Highest index with no gap at or below it.
    pub fn last_contiguous(&self) -> LogIndex {
        LogIndex(self.contiguous)
    }

    pub fn get(&self, index: LogIndex) -> Option<&Entry> {
        self.entries.get(&index.get())
    }

    pub fn contains(&self, index: LogIndex) -> bool {
        self.entries.contains_key(&index.get())
    }

    pub fn term_at(&self, index: LogIndex) -> Option<Term> {
        if index == LogIndex::ZERO {
            return Some(Term(0));
        }
        self.get(index).map(|e| e.term)
    }

    /// Indices at or below the guard are committed and immutable.
    pub fn set_commit_guard(&mut self, index: LogIndex) {
        debug_assert!(index.get() <= self.contiguous);
        self.committed_guard = self.committed_guard.max(index.get());
    }

    pub fn commit_guard(&self) -> LogIndex {
        LogIndex(self.committed_guard)
    }

    pub fn append(&mut self, entry: Entry) -> Result<(), LogError> {
        let i = entry.index.get();
        if i == 0 {
            return Err(LogError::ZeroIndex);
        }
        if i <= self.committed_guard {
            return Err(LogError::Committed {
                index: i,
                guard: self.committed_guard,
            });
        }
        if self.entries.contains_key(&i) {
            return Err(LogError::Occupied(i));
        }
        self.entries.insert(i, entry);
        while self.entries.contains_key(&(self.contiguous + 1)) {
            self.contiguous += 1;
        }
        Ok(())
    }

    /// Remove every entry at or above `from`.
    pub fn truncate_from(&mut self, from: LogIndex) -> Result<Vec<Entry>, LogError> {
        let f = from.get().max(1);
        if f <= self.committed_guard && self.entries.range(f..).next().is_some() {
            return Err(LogError::Committed {
                index: f,
                guard: self.committed_guard,
            });
        }
        let tail = self.entries.split_off(&f);
        self.contiguous = self.contiguous.min(f - 1);
        Ok(tail.into_values().collect())
    }

    /// Remove a single uncommitted entry.
    pub fn remove(&mut self, index: LogIndex) -> Result<Option<Entry>, LogError> {
        let i = index.get();
        if i <= self.committed_guard && self.entries.contains_key(&i) {
            return Err(LogError::Committed {
                index: i,
                guard: self.committed_guard,
            });
        }
        let e = self.entries.remove(&i);
        if e.is_some() && i <= self.contiguous {
            self.contiguous = i - 1;
        }
        Ok(e)
    }

    /// Entries in `[from, to]`, in index order.
    pub fn range(&self, from: LogIndex, to: LogIndex) -> impl Iterator<Item = &Entry> {
        let (a, b) = (from.get().max(1), to.get());
        let r = if a <= b { a..b + 1 } else { a..a };
        self.entries.range(r).map(|(_, e)| e)
    }

    /// Entries strictly above the contiguous prefix.
    pub fn detached(&self) -> impl Iterator<Item = &Entry> {
        self.entries.range(self.contiguous + 1..).map(|(_, e)| e)
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &Entry> {
        self.entries.values()
    }

    /// Line-delimited debug dump, one entry per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in self.entries.values() {
            out.push_str(&e.dump_line());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::types::{EntryKind, Generation, RequestId, ServerId};

    fn e(i: u64) -> Entry {
        Entry {
            index: LogIndex(i),
            term: Term(1),
            generation: Generation(5),
            kind: EntryKind::Normal,
            origin: ServerId(0),
            request_id: RequestId::new(0, i),
            payload: vec![i as u8],
        }
    }

    #[test]
    fn gap_below_first_entry() {
        let mut log = UnifiedLog::new();
        log.append(e(5)).unwrap();
        assert_eq!(log.last_index(), LogIndex(5));
        assert_eq!(log.last_contiguous(), LogIndex(0));
    }

    #[test]
    fn consecutive_appends_are_contiguous() {
        let mut log = UnifiedLog::new();
        for i in 1..=5 {
            log.append(e(i)).unwrap();
        }
        assert_eq!(log.last_contiguous(), LogIndex(5));
    }

    #[test]
    fn filling_gap_extends_contiguous_past_future_slot() {
        let mut log = UnifiedLog::new();
        log.append(e(1)).unwrap();
        log.append(e(3)).unwrap();
        assert_eq!(log.last_contiguous(), LogIndex(1));
        log.append(e(2)).unwrap();
        assert_eq!(log.last_contiguous(), LogIndex(3));
    }

    #[test]
    fn truncate_drops_tail() {
        let mut log = UnifiedLog::new();
        for i in 5..=8 {
            log.append(e(i)).unwrap();
        }
        let tail = log.truncate_from(LogIndex(7)).unwrap();
        assert_eq!(tail.len(), 2);
        let kept: Vec<u64> = log.iter().map(|x| x.index.get()).collect();
        assert_eq!(kept, vec![5, 6]);
    }

    #[test]
    fn committed_entries_are_immutable() {
        let mut log = UnifiedLog::new();
        for i in 1..=4 {
            log.append(e(i)).unwrap();
        }
        log.set_commit_guard(LogIndex(3));
        assert!(matches!(
            log.truncate_from(LogIndex(2)),
            Err(LogError::Committed { .. })
        ));
        assert!(matches!(
            log.remove(LogIndex(3)),
            Err(LogError::Committed { .. })
        ));
        assert!(log.truncate_from(LogIndex(4)).is_ok());
        assert_eq!(
            log.append(e(2)),
            Err(LogError::Committed { index: 2, guard: 3 })
        );
    }

    #[test]
    fn occupied_and_zero_rejected() {
        let mut log = UnifiedLog::new();
        log.append(e(1)).unwrap();
        assert_eq!(log.append(e(1)), Err(LogError::Occupied(1)));
        assert_eq!(log.append(e(0)), Err(LogError::ZeroIndex));
    }

    #[test]
    fn remove_reopens_gap() {
        let mut log = UnifiedLog::new();
        for i in 1..=4 {
            log.append(e(i)).unwrap();
        }
        log.remove(LogIndex(2)).unwrap();
        assert_eq!(log.last_contiguous(), LogIndex(1));
        assert_eq!(log.detached().count(), 2);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Append(u64),
        Remove(u64),
        Truncate(u64),
    }

    fn op() -> impl proptest::strategy::Strategy<Value = Op> {
        use proptest::prelude::*;
        prop_oneof![
            4 => (1u64..40).prop_map(Op::Append),
            1 => (1u64..40).prop_map(Op::Remove),
            1 => (1u64..40).prop_map(Op::Truncate),
        ]
    }

    proptest::proptest! {
        /// The cached contiguous prefix always matches a recount from the
        /// occupied index set.
        #[test]
        fn contiguous_prefix_matches_recount(ops in proptest::collection::vec(op(), 0..200)) {
            let mut log = UnifiedLog::new();
            let mut model = std::collections::BTreeSet::new();
            for op in ops {
                match op {
                    Op::Append(i) => {
                        let fresh = model.insert(i);
                        proptest::prop_assert_eq!(log.append(e(i)).is_ok(), fresh);
                    }
                    Op::Remove(i) => {
                        let had = model.remove(&i);
                        proptest::prop_assert_eq!(log.remove(LogIndex(i)).unwrap().is_some(), had);
                    }
                    Op::Truncate(i) => {
                        model.retain(|x| *x < i);
                        log.truncate_from(LogIndex(i)).unwrap();
                    }
                }
                let recount = (1..).take_while(|i| model.contains(i)).count() as u64;
                proptest::prop_assert_eq!(log.last_contiguous(), LogIndex(recount));
                proptest::prop_assert_eq!(log.len(), model.len());
                proptest::prop_assert_eq!(log.last_index(), LogIndex(model.last().copied().unwrap_or(0)));
            }
        }
    }
}
