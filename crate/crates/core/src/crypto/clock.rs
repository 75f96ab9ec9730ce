use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::Timestamp;

/// Wall clock or a manually advanced simulated clock.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Clock {
    Real,
    Simulated(Timestamp),
}

impl Clock {
    pub fn simulated(at: u64) -> Self {
        Clock::Simulated(Timestamp(at))
    }

    pub fn now(&self) -> Timestamp {
        match self {
            Clock::Real => {
                let d = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
                Timestamp(d.as_millis() as u64)
            }
            Clock::Simulated(t) => *t,
        }
    }

    /// Moves a simulated clock forward; a real clock ignores this.
    pub fn advance(&mut self, ms: u64) {
        if let Clock::Simulated(t) = self {
            *t = t.plus(ms);
        }
    }

    /// Another principal's view of the same instant, shifted by `skew_ms`.
    pub fn skewed(&self, skew_ms: i64) -> Clock {
        let now = self.now().0;
        let shifted = if skew_ms >= 0 {
            now.saturating_add(skew_ms as u64)
        } else {
            now.saturating_sub(skew_ms.unsigned_abs())
        };
        Clock::Simulated(Timestamp(shifted))
    }
}

/// Maximum accepted distance between a message timestamp and its receipt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreshnessWindow(pub u64);

impl FreshnessWindow {
    pub const DEFAULT_MS: u64 = 2000;

    pub fn admits(&self, sent: Timestamp, received: Timestamp) -> bool {
        sent.abs_diff(received) <= self.0
    }
}

impl Default for FreshnessWindow {
    fn default() -> Self {
        FreshnessWindow(Self::DEFAULT_MS)
    }
}
