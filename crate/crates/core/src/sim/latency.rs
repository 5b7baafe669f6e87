//! Per-link delay sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Link delay: a fixed mean plus, with probability `probability`, an extra
/// delay drawn uniformly from `[0, fluctuation_us]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyModel {
    /// Node-to-node mean one-way delay.
    pub mean_us: u64,
    pub fluctuation_us: u64,
    pub probability: f64,
    /// Client-to-node one-way delay.
    pub client_us: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            mean_us: 5_000,
            fluctuation_us: 100,
            probability: 0.3,
            client_us: 0,
        }
    }
}

impl LatencyModel {
    /// Fixed delay with no fluctuation.
    pub fn fixed(mean_us: u64) -> Self {
        LatencyModel {
            mean_us,
            fluctuation_us: 0,
            probability: 0.0,
            client_us: 0,
        }
    }

    /// One node-to-node delay. Never zero, so a reply can not overtake the
    /// request that caused it.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let mut d = self.mean_us;
        if self.fluctuation_us > 0
            && self.probability > 0.0
            && rng.gen_bool(self.probability.min(1.0))
        {
            d += rng.gen_range(0..=self.fluctuation_us);
        }
        d.max(1)
    }
}
