use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::Decision;
use crate::error::{Error, Result};

/// About one second of queries at 30 Hz.
pub const DEFAULT_WINDOW: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub answered: bool,
    pub confidence: f64,
}

impl From<&Decision> for QueryRecord {
    fn from(d: &Decision) -> Self {
        Self {
            answered: d.answered(),
            confidence: d.confidence,
        }
    }
}

/// Fraction of queries answered without the fallback.
pub fn competence(window: &[QueryRecord]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::Empty("competence window"));
    }
    Ok(window.iter().filter(|r| r.answered).count() as f64 / window.len() as f64)
}

/// Mean share of the matched key's counts held by the chosen action, with
/// fallback queries contributing zero.
pub fn confidence(window: &[QueryRecord]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::Empty("confidence window"));
    }
    Ok(window.iter().map(|r| r.confidence).sum::<f64>() / window.len() as f64)
}

/// Sliding window of recent queries.
#[derive(Debug, Clone)]
pub struct Telemetry {
    window: usize,
    recent: VecDeque<QueryRecord>,
    seen: u64,
}

impl Default for Telemetry {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW)
    }
}

impl Telemetry {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            recent: VecDeque::with_capacity(window.max(1)),
            seen: 0,
        }
    }

    /// Records a query; returns true when a full window has just completed.
    pub fn record(&mut self, r: QueryRecord) -> bool {
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(r);
        self.seen += 1;
        self.seen.is_multiple_of(self.window as u64)
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn window(&self) -> Vec<QueryRecord> {
        self.recent.iter().copied().collect()
    }

    pub fn competence(&self) -> Result<f64> {
        competence(&self.window())
    }

    pub fn confidence(&self) -> Result<f64> {
        confidence(&self.window())
    }
}
