//! Fault injection actions.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::log::ServerId;

/// Which node a crash or restart applies to, resolved when it fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultTarget {
    Node(u64),
    Leader,
    RandomFollower,
    /// The node crashed most recently.
    LastCrashed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultAction {
    Crash(FaultTarget),
    Restart(FaultTarget),
    Partition(Vec<u64>, Vec<u64>),
    Heal,
}

impl fmt::Display for FaultAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultAction::Crash(_) => write!(f, "crash"),
            FaultAction::Restart(_) => write!(f, "restart"),
            FaultAction::Partition(..) => write!(f, "partition"),
            FaultAction::Heal => write!(f, "heal"),
        }
    }
}

/// Active network cut. Messages between the two sides are dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    side_a: BTreeSet<ServerId>,
    side_b: BTreeSet<ServerId>,
}

impl Partition {
    pub fn new(a: &[u64], b: &[u64]) -> Self {
        Partition {
            side_a: a.iter().map(|i| ServerId(*i)).collect(),
            side_b: b.iter().map(|i| ServerId(*i)).collect(),
        }
    }

    pub fn separates(&self, x: ServerId, y: ServerId) -> bool {
        (self.side_a.contains(&x) && self.side_b.contains(&y))
            || (self.side_b.contains(&x) && self.side_a.contains(&y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_is_symmetric() {
        let p = Partition::new(&[0, 1], &[2, 3, 4]);
        assert!(p.separates(ServerId(0), ServerId(3)));
        assert!(p.separates(ServerId(4), ServerId(1)));
        assert!(!p.separates(ServerId(0), ServerId(1)));
        assert!(!p.separates(ServerId(2), ServerId(4)));
    }
}
