//! Future-index arithmetic.
//!
//! Every future index a server allocates has residue `server id` modulo the
//! generation, so two servers of the same generation can never pick the
//! same slot. On a generation change a pending index is remapped so that it
//! keeps its residue under the new modulus and never moves backwards.

use thiserror::Error;

use super::types::{Generation, LogIndex, ServerId};
use super::window::Window;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocError {
    #[error("no open window can host an index with residue {residue} mod {generation}")]
    NoOpenWindow { residue: u64, generation: u64 },
    #[error("server {server} is not below generation {generation}")]
    ServerOutOfRange { server: u64, generation: u64 },
    #[error("index {index} does not belong to server {server} under generation {generation}")]
    NotOwner {
        index: u64,
        server: u64,
        generation: u64,
    },
    #[error("generation cannot decrease ({old} -> {new})")]
    GenerationDecrease { old: u64, new: u64 },
}

/// Data-leader of the future entry at `index`.
pub fn owner_of(index: LogIndex, generation: Generation) -> ServerId {
    assert!(generation.get() >= 1);
    ServerId(index.get() % generation.get())
}

/// The raw next-slot formula:
/// `self + gen + last - (last mod gen)`.
pub fn next_future_slot(
    self_id: ServerId,
    generation: Generation,
    future_last: LogIndex,
) -> LogIndex {
    let g = generation.get();
    let last = future_last.get();
    LogIndex(self_id.0 + g + last - last % g)
}

/// Allocate the next future index for `self_id`.
///
/// Starts from [`next_future_slot`] and, if that slot is not inside an open
/// window, advances in steps of the generation to the first slot inside one.
pub fn allocate_future_index(
    self_id: ServerId,
    generation: Generation,
    future_last: LogIndex,
    windows: &[Window],
) -> Result<LogIndex, AllocError> {
    let g = generation.get();
    if self_id.0 >= g {
        return Err(AllocError::ServerOutOfRange {
            server: self_id.0,
            generation: g,
        });
    }
    let floor = next_future_slot(self_id, generation, future_last).get();
    let mut open: Vec<&Window> = windows.iter().filter(|w| w.is_open()).collect();
    open.sort_by_key(|w| w.start);
    for w in open {
        let (start, end) = (w.start.get(), w.end.get());
        if end < floor {
            continue;
        }
        let candidate = if floor >= start {
            floor
        } else {
            start + (self_id.0 + g - start % g) % g
        };
        if candidate <= end {
            return Ok(LogIndex(candidate));
        }
    }
    Err(AllocError::NoOpenWindow {
        residue: self_id.0,
        generation: g,
    })
}

/// Remap a pending future index to a new generation:
/// `floor(index / old) * new + self`.
pub fn reallocate_index(
    index: LogIndex,
    old: Generation,
    new: Generation,
    self_id: ServerId,
) -> Result<LogIndex, AllocError> {
    if new < old {
        return Err(AllocError::GenerationDecrease {
            old: old.get(),
            new: new.get(),
        });
    }
    if owner_of(index, old) != self_id {
        return Err(AllocError::NotOwner {
            index: index.get(),
            server: self_id.0,
            generation: old.get(),
        });
    }
    Ok(LogIndex((index.get() / old.get()) * new.get() + self_id.0))
}
