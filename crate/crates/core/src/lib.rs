//! Context-aware, pet-mediated notification engine for walking tourists.
//!
//! The crate is organised the same way the runtime pipeline is:
//!
//! - [`envmodel`] classifies sensor readings and forecasts into verdicts.
//! - [`geo`] answers distance, nearest-sensor and radius queries.
//! - [`context`] turns location fixes into activity state and timer events.
//! - [`profile`] ranks nearby points of interest for a user.
//! - [`notify`] owns notification types, message templates and the pet dialog.
//! - [`feed`] parses sensor entities, forecasts and replay traces.
//! - [`engine`] wires everything into per-user sessions and a replay simulator.
//! - [`evalstats`] holds the evaluation statistics (exact Wilcoxon, effect sizes).
//!
//! Every clock reading flows in through timestamps, so replaying a trace is
//! fully deterministic.

pub mod clock;
pub mod config;
pub mod context;
pub mod engine;
pub mod envmodel;
mod error;
pub mod evalstats;
pub mod feed;
pub mod geo;
pub mod notify;
pub mod par;
pub mod profile;
pub mod scenario;

pub use error::{Error, Result};

/// Seconds since the Unix epoch. All engine time is expressed in this unit.
pub type Timestamp = i64;

/// Calendar day (UTC) that contains `t`.
pub fn day_of(t: Timestamp) -> chrono::NaiveDate {
    chrono::DateTime::from_timestamp(t, 0)
        .map(|dt| dt.date_naive())
        .unwrap_or_default()
}
