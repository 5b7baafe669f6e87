//! Unified log storage and future-index allocation.

mod alloc;
mod stage;
mod types;
mod unified;
mod window;

pub use alloc::{allocate_future_index, next_future_slot, owner_of, reallocate_index, AllocError};
pub use stage::{FutureStage, StageOutcome};
pub use types::{fnv1a, Entry, EntryKind, Generation, LogIndex, RequestId, ServerId, Term};
pub use unified::{LogError, UnifiedLog};
pub use window::{maintain_windows, Window, WindowConfig, WindowSet, WindowState};
