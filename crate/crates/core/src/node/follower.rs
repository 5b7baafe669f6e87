//! Follower side of log replication.

use super::*;

impl Node {
    pub(super) fn handle_append_entries(
        &mut self,
        req: AppendEntriesRequest,
    ) -> AppendEntriesResponse {
        if req.term < self.term {
            return self.append_response(false, LogIndex::ZERO, req.seq);
        }
        if req.term > self.term || self.role != Role::Follower {
            self.become_follower(req.term);
        } else {
            self.reset_election_timer();
        }
        self.leader_hint = Some(req.leader_id);
        if req.generation > self.generation {
            self.change_generation(req.generation);
        }

        let prev = req.prev_log_index;
        if prev > self.log.last_contiguous() || self.log.term_at(prev) != Some(req.prev_log_term) {
            let hint = self.log.last_contiguous().min(prev.prev());
            return self.append_response(false, hint, req.seq);
        }

        let mut processed = prev;
        for e in req.entries {
            let idx = e.index;
            if let Some(existing) = self.log.get(idx) {
                if existing.term == e.term {
                    processed = idx;
                    continue;
                }
                if !self.truncate_divergent(idx) {
                    break;
                }
            }
            if !self.write_replicated(e) {
                break;
            }
            processed = idx;
        }

        let commit = req.leader_commit.min(processed);
        if commit > self.commit_index {
            self.commit_index = commit;
            self.log.set_commit_guard(commit);
            self.apply_committed();
        }
        self.sweep_stage();
        self.maintain_windows();
        self.append_response(true, processed, req.seq)
    }

    fn append_response(&self, success: bool, report: LogIndex, seq: u64) -> AppendEntriesResponse {
        AppendEntriesResponse {
            term: self.term,
            generation: self.generation,
            success,
            last_applied_report: report,
            last_future_index: self.stage.last_index().max(self.future_seen),
            seq,
        }
    }

    /// Drop a conflicting suffix. Future entries in it go back to the stage
    /// so a later signal can still resolve them.
    fn truncate_divergent(&mut self, from: LogIndex) -> bool {
        let Ok(removed) = self.log.truncate_from(from) else {
            return false;
        };
        let mut config_removed = false;
        for e in removed {
            match e.kind {
                EntryKind::Future if e.generation >= self.generation => {
                    self.stage
                        .stage(e, self.generation, self.cfg.entry_header_bytes);
                }
                EntryKind::Config => config_removed = true,
                _ => {}
            }
        }
        if config_removed {
            self.membership = self.membership_from_log();
        }
        true
    }

    /// Write one leader-ordered entry at the end of the log. Returns false
    /// when a signal cannot be resolved locally.
    fn write_replicated(&mut self, e: Entry) -> bool {
        let idx = e.index;
        let hdr = self.cfg.entry_header_bytes;
        match e.kind {
            EntryKind::Signal => {
                let hit = self.stage.get(idx).is_some_and(|s| s.same_identity(&e));
                if !hit {
                    return false;
                }
                let mut staged = self.stage.take(idx, hdr).expect("checked present");
                staged.term = e.term;
                staged.kind = EntryKind::Future;
                self.materialize(staged);
            }
            EntryKind::Future => {
                if let Some(s) = self.stage.take(idx, hdr) {
                    if !s.same_identity(&e) {
                        self.displaced(s);
                    }
                }
                self.materialize(e);
            }
            _ => {
                if let Some(s) = self.stage.take(idx, hdr) {
                    self.displaced(s);
                }
                let config = (e.kind == EntryKind::Config).then(|| decode_members(&e.payload));
                self.log.append(e).expect("append at end of contiguous log");
                if let Some(members) = config {
                    self.apply_config(members);
                }
            }
        }
        true
    }

    fn materialize(&mut self, e: Entry) {
        self.emit(ProtocolEvent::Materialized {
            index: e.index,
            origin: e.origin,
            generation: e.generation,
            request_id: e.request_id,
            digest: e.digest(),
        });
        self.log.append(e).expect("append at end of contiguous log");
    }

    /// A staged entry lost its slot to a different leader-ordered entry.
    fn displaced(&mut self, staged: Entry) {
        if staged.origin == self.id && !self.kv.is_applied(&staged.request_id) {
            self.reallocate_own(staged);
        }
    }

    /// Discard staged entries the contiguous log has overtaken.
    pub(super) fn sweep_stage(&mut self) {
        let c = self.log.last_contiguous();
        for s in self.stage.drain_through(c, self.cfg.entry_header_bytes) {
            let resolved = self.log.get(s.index).is_some_and(|e| e.same_identity(&s));
            if !resolved {
                self.displaced(s);
            }
        }
    }
}
