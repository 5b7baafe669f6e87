//! Leader election and recovery of staged future entries by a new leader.

use super::*;

impl Node {
    pub(super) fn on_election_timeout(&mut self) {
        if self.role == Role::Leader {
            return;
        }
        self.reset_election_timer();
        if !self.is_member() {
            return;
        }
        self.term = Term(self.term.0 + 1);
        self.voted_for = Some(self.id);
        self.votes = BTreeSet::from([self.id]);
        self.leader_hint = None;
        self.set_role(Role::Candidate);
        if self.votes.len() >= self.majority() {
            self.become_leader();
            return;
        }
        let last = self.log.last_contiguous();
        let req = RequestVoteRequest {
            term: self.term,
            candidate: self.id,
            last_log_index: last,
            last_log_term: self.log.term_at(last).unwrap_or(Term(0)),
        };
        for p in self.peers() {
            self.send(Endpoint::Node(p), Message::RequestVote(req.clone()));
        }
    }

    pub(super) fn handle_request_vote(&mut self, req: RequestVoteRequest) -> RequestVoteResponse {
        if req.term > self.term {
            if self.role == Role::Leader {
                self.step_down_cleanup();
            }
            self.term = req.term;
            self.voted_for = None;
            self.set_role(Role::Follower);
            self.votes.clear();
        }
        let last = self.log.last_contiguous();
        let mine = (self.log.term_at(last).unwrap_or(Term(0)), last);
        let up_to_date = (req.last_log_term, req.last_log_index) >= mine;
        let granted = req.term == self.term
            && self.voted_for.is_none_or(|v| v == req.candidate)
            && up_to_date;
        if granted {
            self.voted_for = Some(req.candidate);
            self.reset_election_timer();
        }
        RequestVoteResponse {
            term: self.term,
            granted,
        }
    }

    pub(super) fn handle_vote_response(&mut self, voter: ServerId, resp: RequestVoteResponse) {
        if resp.term > self.term {
            self.become_follower(resp.term);
            return;
        }
        if self.role != Role::Candidate || resp.term != self.term || !resp.granted {
            return;
        }
        if self.membership.contains(&voter) {
            self.votes.insert(voter);
        }
        if self.votes.len() >= self.majority() {
            self.become_leader();
        }
    }

    pub(super) fn become_leader(&mut self) {
        self.set_role(Role::Leader);
        self.leader_hint = Some(self.id);
        self.disarm(TimerKind::Election);
        self.detach_to_stage();
        let next = self.log.last_contiguous().next();
        self.followers = self
            .peers()
            .into_iter()
            .map(|p| {
                (
                    p,
                    FollowerTracker {
                        next_index: next,
                        send_next: next,
                        ..Default::default()
                    },
                )
            })
            .collect();
        let noop = Entry {
            index: next,
            term: self.term,
            generation: self.generation,
            kind: EntryKind::NoOpFill,
            origin: self.id,
            request_id: RequestId::new(u64::MAX, next.get()),
            payload: Vec::new(),
        };
        self.log
            .append(noop)
            .expect("slot above contiguous prefix is free");

        // Own staged entries and, when enabled, the followers' staged
        // entries are placed into the log before new requests are ordered.
        let staged: Vec<Entry> = self
            .stage
            .iter()
            .filter(|e| e.generation == self.generation && e.index > next)
            .cloned()
            .collect();
        for e in staged {
            self.integrate_future(e);
        }
        if self.cfg.protocol == Protocol::Lcr && self.cfg.reconcile_on_election {
            self.reconcile = Some(BTreeSet::from([self.id]));
            let req = FutureSyncRequest {
                term: self.term,
                leader_id: self.id,
            };
            for p in self.peers() {
                self.send(Endpoint::Node(p), Message::FutureSync(req.clone()));
            }
            let at = self.now + self.cfg.max_await_us;
            self.arm_at(TimerKind::Reconcile, at);
            if self
                .reconcile
                .as_ref()
                .is_some_and(|r| r.len() >= self.majority())
            {
                self.finish_reconcile();
            }
        }
        self.on_heartbeat();
        self.maybe_step_fill();
    }

    pub(super) fn handle_future_sync(
        &mut self,
        req: FutureSyncRequest,
    ) -> Option<FutureSyncResponse> {
        if req.term < self.term {
            return None;
        }
        if req.term > self.term || self.role != Role::Follower {
            self.become_follower(req.term);
        }
        self.leader_hint = Some(req.leader_id);
        let entries = self
            .stage
            .iter()
            .filter(|e| e.generation == self.generation)
            .cloned()
            .collect();
        Some(FutureSyncResponse {
            term: self.term,
            entries,
        })
    }

    pub(super) fn handle_future_sync_response(&mut self, from: ServerId, resp: FutureSyncResponse) {
        if resp.term > self.term {
            self.become_follower(resp.term);
            return;
        }
        if self.role != Role::Leader || resp.term != self.term {
            return;
        }
        let c = self.log.last_contiguous();
        for e in resp.entries {
            if e.index > c {
                self.integrate_future(e);
            }
        }
        let majority = self.majority();
        let done = match self.reconcile.as_mut() {
            Some(r) => {
                r.insert(from);
                r.len() >= majority
            }
            None => false,
        };
        if done {
            self.finish_reconcile();
        } else {
            self.maybe_step_fill();
            self.pump_all();
        }
    }

    /// Stop waiting for staged entries and order the queued requests.
    pub(super) fn finish_reconcile(&mut self) {
        if self.reconcile.take().is_none() {
            return;
        }
        self.disarm(TimerKind::Reconcile);
        for (from, req) in std::mem::take(&mut self.queued) {
            self.handle_client_request(from, req);
        }
        self.maybe_step_fill();
        self.maintain_windows();
        self.pump_all();
    }
}
