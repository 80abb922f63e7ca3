//! Counters for PDE solves, reconciled against the per-method cost table.

use core::sync::atomic::{AtomicUsize, Ordering};

/// Thread-safe tally of forward (state) solves and linearized solves.
#[derive(Debug, Default)]
pub struct SolveLedger {
    state: AtomicUsize,
    linear: AtomicUsize,
}

/// Plain snapshot of a [`SolveLedger`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveCounts {
    pub state: usize,
    pub linear: usize,
}

impl core::ops::Add for SolveCounts {
    type Output = SolveCounts;
    fn add(self, rhs: SolveCounts) -> SolveCounts {
        SolveCounts {
            state: self.state + rhs.state,
            linear: self.linear + rhs.linear,
        }
    }
}

impl core::ops::Sub for SolveCounts {
    type Output = SolveCounts;
    fn sub(self, rhs: SolveCounts) -> SolveCounts {
        SolveCounts {
            state: self.state - rhs.state,
            linear: self.linear - rhs.linear,
        }
    }
}

impl SolveLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_state(&self) {
        self.state.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_linear(&self) {
        self.linear.fetch_add(1, Ordering::Relaxed);
    }

    pub fn counts(&self) -> SolveCounts {
        SolveCounts {
            state: self.state.load(Ordering::Relaxed),
            linear: self.linear.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.state.store(0, Ordering::Relaxed);
        self.linear.store(0, Ordering::Relaxed);
    }
}
