//! Leader duties: ordering client requests, pipelined replication,
//! commitment, gap filling, and membership growth.

use super::*;

impl Node {
    pub(super) fn handle_client_request(&mut self, from: Endpoint, req: ClientRequest) {
        if self.kv.is_applied(&req.request_id) {
            self.reply(from, req.request_id, Outcome::Ok);
            return;
        }
        let data_leader_path = self.cfg.protocol == Protocol::Lcr
            && req.kind == TxKind::NonTransactional
            && self.role != Role::Leader
            && matches!(from, Endpoint::Client(_));
        if data_leader_path {
            self.start_future(from, req);
            return;
        }
        match self.role {
            Role::Leader => self.order_request(from, req),
            _ => match (self.leader_hint, from) {
                (Some(leader), Endpoint::Client(_)) if leader != self.id => {
                    self.forwards.insert(req.request_id, from);
                    self.send(Endpoint::Node(leader), Message::Forward(req));
                }
                (hint, _) => {
                    let outcome = if hint.is_some() {
                        Outcome::Redirected
                    } else {
                        Outcome::Rejected
                    };
                    self.reply(from, req.request_id, outcome);
                }
            },
        }
    }

    /// Append a client request at the next normal index and start
    /// replicating it.
    fn order_request(&mut self, from: Endpoint, req: ClientRequest) {
        if self.reconcile.is_some() {
            self.queued.push((from, req));
            return;
        }
        if let Some((_, (_, to))) = self
            .waiting
            .iter_mut()
            .find(|(_, (rid, _))| *rid == req.request_id)
        {
            *to = from;
            return;
        }
        let index = self.next_normal_index();
        let entry = Entry {
            index,
            term: self.term,
            generation: self.generation,
            kind: EntryKind::Normal,
            origin: self.id,
            request_id: req.request_id,
            payload: req.payload,
        };
        self.log.append(entry).expect("next normal index is free");
        self.waiting.insert(index.get(), (req.request_id, from));
        self.after_leader_append();
    }

    /// First free slot at or after the contiguous prefix. Integrated future
    /// entries above it are left in place.
    pub fn next_normal_index(&self) -> LogIndex {
        self.log.last_contiguous().next()
    }

    fn after_leader_append(&mut self) {
        self.maintain_windows();
        self.forget_integrated_below_contiguous();
        if self.membership.len() == 1 {
            self.advance_commit();
        }
        self.pump_all();
    }

    /// Place a future entry into the leader's log. Called for entries sent
    /// by data-leaders and for entries recovered at election time.
    pub(super) fn integrate_future(&mut self, mut entry: Entry) -> FutureVerdict {
        if entry.generation < self.generation {
            return FutureVerdict::Stale;
        }
        if let Some(existing) = self.log.get(entry.index) {
            return if existing.same_identity(&entry) {
                FutureVerdict::Accepted
            } else {
                FutureVerdict::Conflict
            };
        }
        if entry.index <= self.log.commit_guard() {
            return FutureVerdict::Conflict;
        }
        entry.term = self.term;
        entry.kind = EntryKind::Future;
        let (index, origin, generation, request_id, digest) = (
            entry.index,
            entry.origin,
            entry.generation,
            entry.request_id,
            entry.digest(),
        );
        self.stage.take(index, self.cfg.entry_header_bytes);
        self.log.append(entry).expect("slot checked free");
        self.emit(ProtocolEvent::Materialized {
            index,
            origin,
            generation,
            request_id,
            digest,
        });
        if index > self.log.last_contiguous() {
            self.integrated_at.insert(index.get(), self.now);
            let at = self.now + self.cfg.step_timeout_us;
            self.arm_min(TimerKind::Step, at);
        }
        FutureVerdict::Accepted
    }

    pub(super) fn arm_min(&mut self, kind: TimerKind, at: u64) {
        match self.timer_deadline(kind) {
            Some(d) if d <= at => {}
            _ => self.arm_at(kind, at),
        }
    }

    fn forget_integrated_below_contiguous(&mut self) {
        let c = self.log.last_contiguous().get();
        self.integrated_at = self.integrated_at.split_off(&(c + 1));
    }

    pub(super) fn pump_all(&mut self) {
        if self.role != Role::Leader {
            return;
        }
        let ids: Vec<ServerId> = self.followers.keys().copied().collect();
        for f in ids {
            self.pump(f);
        }
    }

    /// Send as many append requests to `f` as the pipeline allows.
    fn pump(&mut self, f: ServerId) {
        let last = self.log.last_contiguous();
        loop {
            let Some(t) = self.followers.get(&f) else {
                return;
            };
            if t.inflight.len() >= self.cfg.max_flying || t.send_next > last {
                return;
            }
            let from = t.send_next;
            let to = LogIndex(last.get().min(from.get() + self.cfg.max_entries as u64 - 1));
            let req = self.package_append_entries(f, from, to);
            let t = self.followers.get_mut(&f).expect("tracker exists");
            t.next_seq += 1;
            if t.inflight.is_empty() {
                t.progress_at = self.now;
            }
            let seq = t.next_seq;
            t.inflight.insert(seq, to);
            t.send_next = to.next();
            let mut req = req;
            req.seq = seq;
            self.account_retransmit(f, &req.entries);
            self.send(Endpoint::Node(f), Message::AppendEntries(req));
        }
    }

    /// Build an append request for `f` covering `[from, to]`. A future
    /// entry the follower already reported staged goes out as a header-only
    /// signal unless the follower asked for its content.
    pub fn package_append_entries(
        &self,
        f: ServerId,
        from: LogIndex,
        to: LogIndex,
    ) -> AppendEntriesRequest {
        let t = self.followers.get(&f);
        let signal_ok = |e: &Entry| {
            self.cfg.protocol == Protocol::Lcr
                && e.kind == EntryKind::Future
                && t.is_some_and(|t| t.last_future_ack >= e.index && e.index > t.full_until)
        };
        let entries = self
            .log
            .range(from, to)
            .map(|e| {
                if signal_ok(e) {
                    e.to_signal()
                } else {
                    e.clone()
                }
            })
            .collect();
        let prev = from.prev();
        AppendEntriesRequest {
            term: self.term,
            generation: self.generation,
            leader_id: self.id,
            prev_log_index: prev,
            prev_log_term: self.log.term_at(prev).unwrap_or(Term(0)),
            entries,
            leader_commit: self.commit_index,
            seq: 0,
        }
    }

    fn account_retransmit(&mut self, f: ServerId, entries: &[Entry]) {
        let hdr = self.cfg.entry_header_bytes;
        let Some(t) = self.followers.get_mut(&f) else {
            return;
        };
        let (mut n, mut bytes) = (0u64, 0u64);
        for e in entries {
            if e.index <= t.max_sent {
                n += 1;
                bytes += hdr + e.payload.len() as u64;
            }
        }
        if let Some(last) = entries.last() {
            t.max_sent = t.max_sent.max(last.index);
        }
        if n > 0 {
            self.emit(ProtocolEvent::Retransmitted { entries: n, bytes });
        }
    }

    pub(super) fn on_heartbeat(&mut self) {
        if self.role != Role::Leader {
            return;
        }
        let ids: Vec<ServerId> = self.followers.keys().copied().collect();
        for f in ids {
            let t = &self.followers[&f];
            if t.inflight.is_empty() && t.send_next > self.log.last_contiguous() {
                let last = self.log.last_contiguous();
                let mut req = self.package_append_entries(f, last.next(), last);
                req.seq = 0;
                self.send(Endpoint::Node(f), Message::AppendEntries(req));
            } else if !t.inflight.is_empty() && t.progress_at + self.cfg.max_await_us <= self.now {
                // No response for a while, so requests may have been lost.
                // Restart the pipeline from the last confirmed point.
                self.reset_pipeline(f);
            }
            self.pump(f);
        }
        let at = self.now + self.cfg.heartbeat_us;
        self.arm_at(TimerKind::Heartbeat, at);
    }

    fn reset_pipeline(&mut self, f: ServerId) {
        if let Some(t) = self.followers.get_mut(&f) {
            t.reset_seq = t.next_seq;
            t.inflight.clear();
            t.send_next = t.match_index.next();
            t.next_index = t.send_next;
        }
    }

    pub(super) fn handle_append_response(&mut self, f: ServerId, resp: AppendEntriesResponse) {
        if resp.term > self.term {
            self.become_follower(resp.term);
            return;
        }
        if self.role != Role::Leader || resp.term < self.term {
            return;
        }
        let Some(t) = self.followers.get_mut(&f) else {
            return;
        };
        t.last_future_ack = t.last_future_ack.max(resp.last_future_index);
        let stale = resp.seq != 0 && resp.seq <= t.reset_seq;
        let sent_last = if resp.seq == 0 {
            // A heartbeat confirms the log up to its previous index.
            Some(resp.last_applied_report)
        } else {
            t.inflight.remove(&resp.seq)
        };
        if resp.seq != 0 && sent_last.is_some() {
            t.progress_at = self.now;
        }
        if resp.success {
            // Stale pipelined responses were dropped from `inflight` by the
            // last reset and are ignored here.
            if let Some(s) = sent_last {
                let confirmed = resp.last_applied_report.min(s);
                if confirmed > t.match_index {
                    t.match_index = confirmed;
                    t.next_index = confirmed.next();
                }
                if resp.last_applied_report < s {
                    // A signal could not be resolved. The follower may have
                    // missed more than this slot (for example after a
                    // restart), so everything written so far goes in full.
                    t.full_until = t.full_until.max(self.log.last_contiguous());
                    self.reset_pipeline(f);
                }
            }
        } else if !stale {
            let hint = resp.last_applied_report;
            let t = self.followers.get_mut(&f).expect("tracker exists");
            let back = hint.next().min(t.send_next).max(t.match_index.next());
            t.reset_seq = t.next_seq;
            t.inflight.clear();
            t.send_next = back;
            t.next_index = back;
        }
        self.advance_commit();
        self.pump(f);
    }

    /// Commit the highest current-term index replicated on a majority.
    pub(super) fn advance_commit(&mut self) {
        if self.role != Role::Leader {
            return;
        }
        let mut matches: Vec<LogIndex> = self
            .membership
            .iter()
            .map(|m| {
                if *m == self.id {
                    self.log.last_contiguous()
                } else {
                    self.followers
                        .get(m)
                        .map_or(LogIndex::ZERO, |t| t.match_index)
                }
            })
            .collect();
        matches.sort_unstable_by(|a, b| b.cmp(a));
        let n = matches[self.majority() - 1];
        if n > self.commit_index && self.log.term_at(n) == Some(self.term) {
            self.commit_index = n;
            self.log.set_commit_guard(n);
            self.apply_committed();
        }
    }

    pub(super) fn apply_committed(&mut self) {
        while self.last_applied < self.commit_index {
            let idx = self.last_applied.next();
            let entry = self
                .log
                .get(idx)
                .expect("committed entries are present")
                .clone();
            self.last_applied = idx;
            let outcome = match entry.kind {
                EntryKind::Normal | EntryKind::Future => {
                    self.kv.apply(entry.request_id, &entry.payload)
                }
                _ => ApplyOutcome::Applied,
            };
            self.emit(ProtocolEvent::Applied {
                index: idx,
                kind: entry.kind,
                request_id: entry.request_id,
                digest: entry.digest(),
                outcome,
            });
            if let Some((rid, to)) = self.waiting.remove(&idx.get()) {
                if rid == entry.request_id {
                    self.reply(to, rid, Outcome::Ok);
                } else {
                    self.reply(to, rid, Outcome::Rejected);
                }
            }
            if let Some(p) = self.pending.remove(&entry.request_id) {
                if !p.client_acked {
                    if let Some(c) = p.client {
                        self.reply(c, entry.request_id, Outcome::Ok);
                    }
                }
            }
        }
    }

    /// Fill gaps below integrated future entries with no-ops once they have
    /// waited too long or run too far ahead.
    pub(super) fn step_fill(&mut self) {
        if self.role != Role::Leader {
            return;
        }
        let mut filled = false;
        loop {
            let contiguous = self.log.last_contiguous();
            let Some(first) = self.log.detached().next().map(|e| e.index) else {
                break;
            };
            let lead = self.log.last_index().get() - contiguous.get();
            // Entries integrated before this node led carry no timestamp
            // and count as overdue.
            let timeout = self.cfg.step_timeout_us;
            let first_overdue = self
                .integrated_at
                .get(&first.get())
                .is_none_or(|t| self.now.saturating_sub(*t) >= timeout);
            let any_overdue = self
                .integrated_at
                .range(contiguous.get() + 1..)
                .any(|(_, t)| self.now.saturating_sub(*t) >= timeout);
            if lead <= self.cfg.step_threshold && !first_overdue && !any_overdue {
                break;
            }
            let from = contiguous.next();
            for i in from.get()..first.get() {
                let fill = Entry {
                    index: LogIndex(i),
                    term: self.term,
                    generation: self.generation,
                    kind: EntryKind::NoOpFill,
                    origin: self.id,
                    request_id: RequestId::new(u64::MAX, i),
                    payload: Vec::new(),
                };
                self.log.append(fill).expect("gap slot is free");
            }
            self.emit(ProtocolEvent::StepFill {
                from,
                to: first.prev(),
            });
            filled = true;
        }
        self.forget_integrated_below_contiguous();
        if let Some(oldest) = self.integrated_at.values().min().copied() {
            self.arm_at(TimerKind::Step, oldest + self.cfg.step_timeout_us);
        } else {
            self.disarm(TimerKind::Step);
        }
        if filled {
            self.after_leader_append();
        }
    }

    /// Check the lead threshold right after integrating future entries.
    pub(super) fn maybe_step_fill(&mut self) {
        let lead = self.log.last_index().get() - self.log.last_contiguous().get();
        if lead > self.cfg.step_threshold {
            self.step_fill();
        }
    }

    pub(super) fn propose_add_member(&mut self, id: ServerId) {
        if self.role != Role::Leader || self.membership.contains(&id) {
            return;
        }
        let mut members = self.membership.clone();
        members.insert(id);
        let index = self.next_normal_index();
        let entry = Entry {
            index,
            term: self.term,
            generation: Generation(members.len() as u64),
            kind: EntryKind::Config,
            origin: self.id,
            request_id: RequestId::new(u64::MAX - 1, index.get()),
            payload: encode_members(&members),
        };
        self.log.append(entry).expect("next normal index is free");
        self.apply_config(members);
        self.after_leader_append();
    }
}
