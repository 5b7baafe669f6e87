//! Data-leader duties: future-index allocation, direct replication of
//! non-transactional requests, acknowledgement, and reallocation.

use super::*;
use crate::log::{allocate_future_index, reallocate_index, StageOutcome};

impl Node {
    /// Take a non-transactional client request as its data-leader.
    pub(super) fn start_future(&mut self, from: Endpoint, req: ClientRequest) {
        if let Some(p) = self.pending.get_mut(&req.request_id) {
            // Client retry of a request already in flight.
            p.client = Some(from);
            if p.client_acked {
                self.reply(from, req.request_id, Outcome::Ok);
            }
            return;
        }
        if !self.is_member() {
            self.reply(from, req.request_id, Outcome::Rejected);
            return;
        }
        let Some(index) = self.allocate() else {
            self.reply(from, req.request_id, Outcome::Rejected);
            return;
        };
        let entry = Entry {
            index,
            term: self.term,
            generation: self.generation,
            kind: EntryKind::Future,
            origin: self.id,
            request_id: req.request_id,
            payload: req.payload,
        };
        self.pending.insert(
            req.request_id,
            PendingFuture {
                index,
                acks: BTreeSet::from([self.id]),
                leader_acked: false,
                client: Some(from),
                client_acked: false,
                sent_at: self.now,
            },
        );
        self.stage_own(entry);
    }

    /// Next free future index for this node, if any window is open.
    pub fn allocate(&mut self) -> Option<LogIndex> {
        self.maintain_windows();
        let last = self.future_last.max(self.stage.last_index());
        allocate_future_index(self.id, self.generation, last, self.windows.windows()).ok()
    }

    /// Stage an entry this node leads and replicate it to every peer.
    fn stage_own(&mut self, entry: Entry) {
        self.future_last = self.future_last.max(entry.index);
        self.emit(ProtocolEvent::Allocated {
            index: entry.index,
            generation: entry.generation,
            request_id: entry.request_id,
            digest: entry.digest(),
        });
        let copy = entry.clone();
        self.stage
            .stage(entry, self.generation, self.cfg.entry_header_bytes);
        self.broadcast_future(vec![copy]);
        let at = self.now + self.cfg.max_await_us;
        self.arm_min(TimerKind::FutureRetry, at);
    }

    fn broadcast_future(&mut self, entries: Vec<Entry>) {
        if entries.is_empty() {
            return;
        }
        let req = FutureReplicateRequest {
            term: self.term,
            generation: self.generation,
            data_leader: self.id,
            entries,
        };
        let peers = self.peers();
        if self.role == Role::Leader {
            // The leader integrates its own future entries directly.
            for e in req.entries.clone() {
                self.integrate_future(e);
            }
        }
        for p in peers {
            self.send(Endpoint::Node(p), Message::FutureReplicate(req.clone()));
        }
    }

    /// Give an own entry that lost its slot a fresh index.
    pub(super) fn reallocate_own(&mut self, mut entry: Entry) {
        let old = entry.index;
        self.emit(ProtocolEvent::Conflict {
            index: old,
            request_id: entry.request_id,
        });
        let Some(index) = self.allocate() else {
            if let Some(p) = self.pending.remove(&entry.request_id) {
                if let (Some(c), false) = (p.client, p.client_acked) {
                    self.reply(c, entry.request_id, Outcome::Rejected);
                }
            }
            return;
        };
        entry.index = index;
        entry.generation = self.generation;
        entry.term = self.term;
        let p = self
            .pending
            .entry(entry.request_id)
            .or_insert_with(|| PendingFuture {
                index,
                acks: BTreeSet::new(),
                leader_acked: false,
                client: None,
                client_acked: true,
                sent_at: 0,
            });
        p.index = index;
        p.acks = BTreeSet::from([self.id]);
        p.leader_acked = false;
        p.sent_at = self.now;
        self.stage_own(entry);
    }

    pub(super) fn handle_future_replicate(
        &mut self,
        req: FutureReplicateRequest,
    ) -> FutureReplicateResponse {
        if req.generation > self.generation {
            self.change_generation(req.generation);
        }
        let hdr = self.cfg.entry_header_bytes;
        let mut results = Vec::with_capacity(req.entries.len());
        let mut integrated = false;
        for e in req.entries {
            let (idx, rid) = (e.index, e.request_id);
            self.future_seen = self.future_seen.max(idx);
            let verdict = if e.generation < self.generation {
                FutureVerdict::Stale
            } else if idx <= self.log.last_contiguous() {
                match self.log.get(idx) {
                    Some(x) if x.same_identity(&e) => FutureVerdict::Accepted,
                    _ => FutureVerdict::Conflict,
                }
            } else if self.role == Role::Leader {
                integrated = true;
                self.integrate_future(e)
            } else {
                match self.stage.stage(e, self.generation, hdr) {
                    StageOutcome::Staged | StageOutcome::Duplicate => FutureVerdict::Accepted,
                    StageOutcome::Conflict => FutureVerdict::Conflict,
                    StageOutcome::StaleGeneration(_) => FutureVerdict::Stale,
                }
            };
            results.push((idx, rid, verdict));
        }
        if integrated {
            self.maybe_step_fill();
            self.after_integrate();
        }
        FutureReplicateResponse {
            term: self.term,
            generation: self.generation,
            accepted: results.iter().all(|r| r.2 == FutureVerdict::Accepted),
            last_future_index: self.stage.last_index().max(self.future_seen),
            from_leader: self.role == Role::Leader,
            results,
        }
    }

    fn after_integrate(&mut self) {
        self.maintain_windows();
        self.pump_all();
    }

    pub(super) fn handle_future_ack(&mut self, from: ServerId, resp: FutureReplicateResponse) {
        if resp.generation > self.generation {
            self.change_generation(resp.generation);
        }
        if resp.from_leader {
            self.leader_hint = Some(from);
        }
        let majority = self.majority();
        for (idx, rid, verdict) in resp.results {
            let Some(p) = self.pending.get_mut(&rid) else {
                continue;
            };
            if p.index != idx {
                continue;
            }
            match verdict {
                FutureVerdict::Accepted => {
                    p.acks.insert(from);
                    p.leader_acked |= resp.from_leader;
                    if !p.client_acked && p.leader_acked && p.acks.len() >= majority {
                        p.client_acked = true;
                        if let Some(c) = p.client {
                            self.reply(c, rid, Outcome::Ok);
                        }
                    }
                }
                FutureVerdict::Conflict if resp.from_leader => {
                    if let Some(e) = self.stage.take(idx, self.cfg.entry_header_bytes) {
                        self.reallocate_own(e);
                    }
                }
                _ => {}
            }
        }
    }

    /// Resend own entries that have not been resolved in time.
    pub(super) fn on_future_retry(&mut self) {
        let due: Vec<RequestId> = self
            .pending
            .iter()
            .filter(|(_, p)| p.sent_at + self.cfg.max_await_us <= self.now)
            .map(|(rid, _)| *rid)
            .collect();
        let mut resend = Vec::new();
        for rid in due {
            let idx = self.pending[&rid].index;
            match self.stage.get(idx) {
                Some(e) if e.request_id == rid => {
                    resend.push(e.clone());
                    self.pending.get_mut(&rid).expect("listed").sent_at = self.now;
                }
                // Resolved into the log; it will be acknowledged on apply.
                _ if self.log.get(idx).is_some_and(|e| e.request_id == rid) => {}
                _ => {
                    self.pending.remove(&rid);
                }
            }
        }
        self.broadcast_future(resend);
        if let Some(next) = self.pending.values().map(|p| p.sent_at).min() {
            let at = next.max(self.now) + self.cfg.max_await_us;
            self.arm_at(TimerKind::FutureRetry, at.max(self.now + 1));
        }
    }

    /// Move to a larger generation. Own staged entries above the log are
    /// remapped to the new residue grid and replicated again.
    pub fn change_generation(&mut self, new: Generation) {
        if new <= self.generation {
            return;
        }
        let old = self.generation;
        self.generation = new;
        self.emit(ProtocolEvent::GenerationChanged { from: old, to: new });
        let normal_last = self.normal_last();
        for w in self.windows.reset(new, normal_last) {
            self.emit(ProtocolEvent::Window(w));
        }
        let hdr = self.cfg.entry_header_bytes;
        let last = self.log.last_index();
        let own: Vec<LogIndex> = self
            .stage
            .owned_by(self.id)
            .filter(|e| e.index > last)
            .map(|e| e.index)
            .collect();
        let mut moved = Vec::new();
        for idx in own {
            let mut e = self.stage.take(idx, hdr).expect("listed");
            let Ok(new_idx) = reallocate_index(idx, e.generation, new, self.id) else {
                continue;
            };
            e.index = new_idx;
            e.generation = new;
            self.future_last = self.future_last.max(new_idx);
            let p = self
                .pending
                .entry(e.request_id)
                .or_insert_with(|| PendingFuture {
                    index: new_idx,
                    acks: BTreeSet::new(),
                    leader_acked: false,
                    client: None,
                    client_acked: true,
                    sent_at: 0,
                });
            p.index = new_idx;
            p.acks = BTreeSet::from([self.id]);
            p.leader_acked = false;
            p.sent_at = self.now;
            self.emit(ProtocolEvent::Allocated {
                index: new_idx,
                generation: new,
                request_id: e.request_id,
                digest: e.digest(),
            });
            moved.push(e);
        }
        for e in &moved {
            self.stage.stage(e.clone(), new, hdr);
        }
        self.broadcast_future(moved);
        if !self.pending.is_empty() {
            let at = self.now + self.cfg.max_await_us;
            self.arm_min(TimerKind::FutureRetry, at);
        }
    }
}
