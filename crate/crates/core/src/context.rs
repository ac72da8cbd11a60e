//! Context detection: activity from location fixes, the walking and
//! stationary timers, and poll scheduling.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::ContextConfig;
use crate::geo::{haversine_km, GeoPoint};
use crate::{Error, Result, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationFix {
    pub user_id: String,
    pub point: GeoPoint,
    pub t: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivityState {
    Stationary,
    Walking,
    Vehicle,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetReason {
    Stationary,
    Vehicle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextEvent {
    WalkThresholdReached,
    WalkReset(ResetReason),
    EnvPollDue,
    ForecastPollDue,
}

pub fn classify_speed(speed_mps: f64, config: &ContextConfig) -> Result<ActivityState> {
    crate::error::check_non_negative("speed", speed_mps)?;
    Ok(if speed_mps < config.stationary_max_mps {
        ActivityState::Stationary
    } else if speed_mps <= config.walking_max_mps {
        ActivityState::Walking
    } else {
        ActivityState::Vehicle
    })
}

/// Per-user activity state machine. Callers must serialize [`WalkTracker::update`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkTracker {
    pub state: ActivityState,
    /// Seconds of consecutive walking since the last trigger or reset.
    pub walk_accum: i64,
    /// Seconds of the current stationary spell.
    pub stationary_accum: i64,
    stationary_reset_sent: bool,
    recent: VecDeque<(GeoPoint, Timestamp)>,
    pub last_env_poll: Option<Timestamp>,
    pub last_forecast_poll: Option<Timestamp>,
    pub config: ContextConfig,
}

impl WalkTracker {
    pub fn new(config: ContextConfig) -> Self {
        Self {
            state: ActivityState::Unknown,
            walk_accum: 0,
            stationary_accum: 0,
            stationary_reset_sent: false,
            recent: VecDeque::new(),
            last_env_poll: None,
            last_forecast_poll: None,
            config,
        }
    }

    pub fn last_fix(&self) -> Option<(GeoPoint, Timestamp)> {
        self.recent.back().copied()
    }

    /// Average speed over the smoothing window, if at least two fixes are known.
    pub fn smoothed_speed(&self) -> Option<f64> {
        let (first, last) = (self.recent.front()?, self.recent.back()?);
        if self.recent.len() < 2 {
            return None;
        }
        let path_m: f64 = self
            .recent
            .iter()
            .zip(self.recent.iter().skip(1))
            .map(|(a, b)| haversine_km(a.0, b.0) * 1000.0)
            .sum();
        Some(path_m / (last.1 - first.1) as f64)
    }

    pub fn update(&mut self, fix: &LocationFix) -> Result<Vec<ContextEvent>> {
        let previous = self.last_fix();
        if let Some((_, prev_t)) = previous {
            if fix.t <= prev_t {
                return Err(Error::Ordering {
                    line: 0,
                    t: fix.t,
                    previous: prev_t,
                });
            }
        }
        self.recent.push_back((fix.point, fix.t));
        while self.recent.len() > self.config.smoothing_window {
            self.recent.pop_front();
        }

        let mut events = Vec::new();
        if let (Some((_, prev_t)), Some(speed)) = (previous, self.smoothed_speed()) {
            let dt = fix.t - prev_t;
            let next = classify_speed(speed, &self.config)?;
            self.advance_timers(next, dt, &mut events);
            self.state = next;
        }

        if self.state == ActivityState::Walking && due(self.last_env_poll, fix.t, self.config.env_poll_s) {
            self.last_env_poll = Some(fix.t);
            events.push(ContextEvent::EnvPollDue);
        }
        // Forecast polls wait out vehicle spells like every other alert.
        if self.state != ActivityState::Vehicle && due(self.last_forecast_poll, fix.t, self.config.forecast_poll_s) {
            self.last_forecast_poll = Some(fix.t);
            events.push(ContextEvent::ForecastPollDue);
        }
        Ok(events)
    }

    fn advance_timers(&mut self, next: ActivityState, dt: i64, events: &mut Vec<ContextEvent>) {
        match next {
            ActivityState::Walking => {
                self.stationary_accum = 0;
                self.stationary_reset_sent = false;
                self.walk_accum += dt;
                if self.walk_accum >= self.config.walk_trigger_s {
                    events.push(ContextEvent::WalkThresholdReached);
                    self.walk_accum = 0;
                }
            }
            ActivityState::Stationary => {
                self.stationary_accum += dt;
                if self.stationary_accum > self.config.stationary_reset_s && !self.stationary_reset_sent {
                    self.stationary_reset_sent = true;
                    self.walk_accum = 0;
                    events.push(ContextEvent::WalkReset(ResetReason::Stationary));
                }
            }
            ActivityState::Vehicle => {
                self.walk_accum = 0;
                self.stationary_accum = 0;
                self.stationary_reset_sent = false;
                if self.state != ActivityState::Vehicle {
                    events.push(ContextEvent::WalkReset(ResetReason::Vehicle));
                }
            }
            ActivityState::Unknown => {}
        }
    }

    /// Forecast polls that fall due on a clock tick without a new fix.
    /// Only users that have reported at least one fix, and are not in a
    /// vehicle, are polled.
    pub fn tick(&mut self, now: Timestamp) -> Vec<ContextEvent> {
        if self.recent.is_empty() || self.state == ActivityState::Vehicle {
            return Vec::new();
        }
        if due(self.last_forecast_poll, now, self.config.forecast_poll_s) {
            self.last_forecast_poll = Some(now);
            vec![ContextEvent::ForecastPollDue]
        } else {
            Vec::new()
        }
    }
}

fn due(last: Option<Timestamp>, now: Timestamp, period: i64) -> bool {
    last.is_none_or(|last| now - last >= period)
}
