//! Time windows during which a spin-dependent linear potential acts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::Axis;

/// `V = −force · σ_axis · q` for `start ≤ t < end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    pub axis: Axis,
    pub force: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialSchedule {
    windows: Vec<Window>,
}

impl PotentialSchedule {
    pub fn new(mut windows: Vec<Window>) -> Result<Self> {
        for w in &windows {
            if !(w.start < w.end) || !w.start.is_finite() || !w.end.is_finite() || !w.force.is_finite() {
                return Err(Error::EmptyWindow { start: w.start, end: w.end });
            }
        }
        windows.sort_by(|a, b| a.start.total_cmp(&b.start));
        for pair in windows.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::OverlappingWindows(pair[0].start, pair[0].end, pair[1].start, pair[1].end));
            }
        }
        Ok(PotentialSchedule { windows })
    }

    pub fn free() -> Self {
        PotentialSchedule::default()
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    /// Sorted, deduplicated window edges.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.windows.iter().flat_map(|w| [w.start, w.end]).collect();
        b.dedup();
        b
    }

    pub fn next_boundary_after(&self, t: f64) -> Option<f64> {
        self.windows.iter().flat_map(|w| [w.start, w.end]).find(|&b| b > t)
    }

    pub fn last_boundary_before(&self, t: f64) -> Option<f64> {
        self.windows.iter().rev().flat_map(|w| [w.end, w.start]).find(|&b| b < t)
    }

    /// The window containing the open interval `(lo, hi)`, if any. The
    /// interval must not straddle a boundary.
    pub fn window_over(&self, lo: f64, hi: f64) -> Option<&Window> {
        let mid = 0.5 * (lo + hi);
        self.windows.iter().find(|w| w.start <= mid && mid < w.end)
    }

    /// The same windows with every time reduced by `tau`.
    pub fn shifted(&self, tau: f64) -> PotentialSchedule {
        PotentialSchedule {
            windows: self
                .windows
                .iter()
                .map(|w| Window { start: w.start - tau, end: w.end - tau, ..*w })
                .collect(),
        }
    }
}
