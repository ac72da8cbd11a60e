//! Time sources. The engine never reads the wall clock itself; callers pick
//! one of these and pass timestamps down.

use crate::{Error, Result, Timestamp};
use serde::{Deserialize, Serialize};

pub trait Clock {
    fn now(&self) -> Timestamp;
}

/// Deterministic clock that only moves when told to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualClock {
    now: Timestamp,
}

impl VirtualClock {
    pub fn starting_at(now: Timestamp) -> Self {
        Self { now }
    }

    /// Moves the clock forward. Going backwards is a conflict; staying put is allowed.
    pub fn advance_to(&mut self, t: Timestamp) -> Result<()> {
        if t < self.now {
            return Err(Error::Conflict(format!(
                "cannot move virtual clock back from {} to {t}",
                self.now
            )));
        }
        self.now = t;
        Ok(())
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Timestamp {
        self.now
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WallClock;

impl Clock for WallClock {
    fn now(&self) -> Timestamp {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs() as Timestamp)
            .unwrap_or_default()
    }
}
