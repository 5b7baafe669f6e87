//! Allocation windows.
//!
//! A window is a contiguous index range in which a node may place the future
//! entries it originates. A window closes for good once the node's normal
//! log reaches its start, which keeps every new future index ahead of the
//! leader-ordered part of the log.

use super::types::{Generation, LogIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowState {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub generation: Generation,
    pub start: LogIndex,
    pub end: LogIndex,
    pub state: WindowState,
}

impl Window {
    pub fn is_open(&self) -> bool {
        self.state == WindowState::Open
    }

    pub fn contains(&self, index: LogIndex) -> bool {
        self.start <= index && index <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    /// Number of indices per window.
    pub size: u64,
    /// Open windows kept ahead of the normal log.
    pub open_count: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            size: 100,
            open_count: 2,
        }
    }
}

/// Close every window the normal log has reached and append fresh open
/// windows, tagged `generation`, until `config.open_count` are open.
///
/// Windows sit on the `1 (mod size)` grid. When the list is empty the first
/// new window is the first grid window starting after `normal_last`.
pub fn maintain_windows(
    normal_last: LogIndex,
    windows: &[Window],
    generation: Generation,
    config: &WindowConfig,
) -> Vec<Window> {
    assert!(config.size > 0, "window size must be positive");
    let mut out: Vec<Window> = windows.to_vec();
    for w in &mut out {
        if w.start <= normal_last {
            w.state = WindowState::Closed;
        }
    }
    let mut next_start = match out.last() {
        Some(w) => w.end.get() + 1,
        None => {
            let size = config.size;
            let mut s = (normal_last.get() / size) * size + 1;
            if s <= normal_last.get() {
                s += size;
            }
            s
        }
    };
    while out.iter().filter(|w| w.is_open()).count() < config.open_count {
        let start = LogIndex(next_start);
        let end = LogIndex(next_start + config.size - 1);
        let state = if start <= normal_last {
            WindowState::Closed
        } else {
            WindowState::Open
        };
        out.push(Window {
            generation,
            start,
            end,
            state,
        });
        next_start += config.size;
    }
    out
}

/// A node's window list together with its layout configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSet {
    pub config: WindowConfig,
    pub generation: Generation,
    windows: Vec<Window>,
}

impl WindowSet {
    pub fn new(config: WindowConfig, generation: Generation) -> Self {
        WindowSet {
            config,
            generation,
            windows: Vec::new(),
        }
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    /// Apply the close/extend rule. Returns windows that changed state or
    /// were created, for tracing.
    pub fn maintain(&mut self, normal_last: LogIndex) -> Vec<Window> {
        let before = self.windows.clone();
        self.windows = maintain_windows(normal_last, &self.windows, self.generation, &self.config);
        // Closed windows are never consulted again; keep a short tail so the
        // list stays bounded on long runs.
        let changed: Vec<Window> = self
            .windows
            .iter()
            .enumerate()
            .filter(|(i, w)| before.get(*i) != Some(w))
            .map(|(_, w)| *w)
            .collect();
        let closed = self.windows.iter().filter(|w| !w.is_open()).count();
        if closed > 4 {
            self.windows.drain(..closed - 4);
        }
        changed
    }

    /// Drop every window and start over under `generation`.
    pub fn reset(&mut self, generation: Generation, normal_last: LogIndex) -> Vec<Window> {
        self.windows.clear();
        self.generation = generation;
        self.maintain(normal_last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(start: u64, end: u64, open: bool) -> Window {
        Window {
            generation: Generation(5),
            start: LogIndex(start),
            end: LogIndex(end),
            state: if open {
                WindowState::Open
            } else {
                WindowState::Closed
            },
        }
    }

    #[test]
    fn closes_windows_reached_by_normal_log() {
        let cfg = WindowConfig {
            size: 5,
            open_count: 2,
        };
        let out = maintain_windows(
            LogIndex(6),
            &[w(1, 5, true), w(6, 10, true)],
            Generation(5),
            &cfg,
        );
        assert_eq!(
            out,
            vec![
                w(1, 5, false),
                w(6, 10, false),
                w(11, 15, true),
                w(16, 20, true)
            ]
        );
    }

    #[test]
    fn bootstrap_layout() {
        let cfg = WindowConfig::default();
        let out = maintain_windows(LogIndex::ZERO, &[], Generation(5), &cfg);
        assert_eq!(out, vec![w(1, 100, true), w(101, 200, true)]);
    }

    #[test]
    fn partial_close_in_hundred_block_layout() {
        let cfg = WindowConfig::default();
        let out = maintain_windows(
            LogIndex(850),
            &[w(801, 900, true), w(901, 1000, true)],
            Generation(5),
            &cfg,
        );
        assert_eq!(
            out,
            vec![w(801, 900, false), w(901, 1000, true), w(1001, 1100, true)]
        );
    }

    #[test]
    fn empty_list_starts_after_normal_log() {
        let cfg = WindowConfig::default();
        let out = maintain_windows(LogIndex(850), &[], Generation(5), &cfg);
        assert_eq!(out[0].start, LogIndex(901));
        let out = maintain_windows(LogIndex(800), &[], Generation(5), &cfg);
        assert_eq!(out[0].start, LogIndex(801));
    }

    #[test]
    fn window_set_trims_closed_tail() {
        let mut set = WindowSet::new(WindowConfig::default(), Generation(3));
        for last in (0..5000).step_by(37) {
            set.maintain(LogIndex(last));
        }
        assert!(set.windows().len() <= 6);
        assert_eq!(set.windows().iter().filter(|w| w.is_open()).count(), 2);
    }

    proptest::proptest! {
        /// As the normal log grows, a closed window never reopens, exactly
        /// `open_count` windows stay open, and every open window lies
        /// wholly above the normal log on the grid.
        #[test]
        fn maintenance_keeps_grid_and_never_reopens(
            size in 1u64..50,
            open_count in 1usize..4,
            steps in proptest::collection::vec(0u64..120, 1..40),
        ) {
            let mut set = WindowSet::new(WindowConfig { size, open_count }, Generation(3));
            let mut normal_last = 0;
            for step in steps {
                normal_last += step;
                let before = set.windows().to_vec();
                set.maintain(LogIndex(normal_last));
                for w in set.windows() {
                    if let Some(old) = before.iter().find(|o| o.start == w.start) {
                        proptest::prop_assert!(old.is_open() || !w.is_open());
                    }
                    proptest::prop_assert_eq!(w.start.get() % size, 1 % size);
                    proptest::prop_assert_eq!(w.end.get() - w.start.get() + 1, size);
                    if w.is_open() {
                        proptest::prop_assert!(w.start.get() > normal_last);
                    }
                }
                let open = set.windows().iter().filter(|w| w.is_open()).count();
                proptest::prop_assert_eq!(open, open_count);
            }
        }
    }
}
