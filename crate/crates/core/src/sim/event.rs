//! Time-ordered event queue.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::log::ServerId;
use crate::node::{Endpoint, Message, TimerKind};

use super::fault::FaultAction;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Deliver {
        from: Endpoint,
        to: Endpoint,
        msg: Message,
        bytes: u64,
    },
    Timer {
        node: ServerId,
        kind: TimerKind,
        /// Incarnation that armed the timer; stale after a crash.
        incarnation: u64,
        /// Instant the node asked for, passed back so it can match its slot.
        at: u64,
    },
    Fault(FaultAction),
    /// Client issues its next request.
    ClientWake {
        client: u64,
    },
    /// Client gives up waiting on an attempt.
    ClientTimeout {
        client: u64,
        attempt: u64,
    },
    /// Client re-sends after a backoff.
    ClientRetry {
        client: u64,
        attempt: u64,
    },
    /// Bring a new server up and ask the leader to add it.
    Join {
        node: ServerId,
    },
    /// Retry handing a pending join to the leader.
    AddMember {
        node: ServerId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: u64,
    pub seq: u64,
    pub kind: EventKind,
}

/// Min-heap on `(time, seq)`; `seq` is assigned at schedule time so equal
/// timestamps pop in scheduling order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<(u64, u64)>>,
    slots: std::collections::HashMap<u64, EventKind>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: u64, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse((time, seq)));
        self.slots.insert(seq, kind);
        seq
    }

    pub fn pop(&mut self) -> Option<Event> {
        let Reverse((time, seq)) = self.heap.pop()?;
        let kind = self.slots.remove(&seq).expect("slot for every heap key");
        Some(Event { time, seq, kind })
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|Reverse((t, _))| *t)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Events still queued, in no particular order.
    pub fn pending(&self) -> impl Iterator<Item = &EventKind> {
        self.slots.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_by_time_then_seq() {
        let mut q = EventQueue::new();
        q.schedule(10, EventKind::ClientWake { client: 1 });
        q.schedule(5, EventKind::ClientWake { client: 2 });
        q.schedule(10, EventKind::ClientWake { client: 3 });
        let order: Vec<u64> = std::iter::from_fn(|| q.pop())
            .map(|e| match e.kind {
                EventKind::ClientWake { client } => client,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(order, vec![2, 1, 3]);
    }
}
