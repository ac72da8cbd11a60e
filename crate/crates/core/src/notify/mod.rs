//! Notification model, message rendering and the per-user scenario state
//! machine (proximity suggestions, real-time environmental alerts with the
//! shelter dialog, and excursion forecast alerts).

mod scenarios;
mod templates;

use serde::{Deserialize, Serialize};

pub use scenarios::{Dialog, DialogPhase, Excursion, ForecastStore, NotifyCtx, NotifyState, ShelterRetry, Tapped};
pub use templates::Templates;

use crate::context::ActivityState;
use crate::profile::Pet;
use crate::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "S1_Proximity")]
    Proximity,
    #[serde(rename = "S2_Environment")]
    Environment,
    #[serde(rename = "S3_Forecast")]
    Forecast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Push,
    PetPopup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionKind {
    OpenPopup,
    RespondYes,
    RespondNo,
    Navigate { url: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub label: String,
    #[serde(flatten)]
    pub kind: ActionKind,
}

impl Action {
    pub fn new(label: &str, kind: ActionKind) -> Self {
        Self {
            label: label.to_string(),
            kind,
        }
    }
}

/// Alert family used for cooldowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Air,
    Noise,
    Precipitation,
    Forecast,
}

/// One measured value that triggered an alert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub kind: ConditionKind,
    /// What was measured, e.g. `PM2.5`, `AQI`, `LAeq`, `rain`.
    pub dimension: String,
    pub value: f64,
    pub threshold: f64,
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRef {
    pub id: String,
    pub name: String,
    pub indoor: bool,
    /// Meters, one decimal.
    pub distance_m: f64,
    /// Four decimals.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionRef {
    pub excursion_id: String,
    pub district: String,
    pub date: chrono::NaiveDate,
    pub severity: crate::envmodel::Severity,
    pub dominant: crate::envmodel::ForecastDimension,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Related {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poi: Option<PoiRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excursion: Option<ExcursionRef>,
}

/// Field order here is the order fields appear in the notification log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub id: u64,
    pub user_id: String,
    pub scenario: Scenario,
    pub channel: Channel,
    pub created_at: Timestamp,
    pub pet: Pet,
    pub title: String,
    pub body: String,
    pub justification: String,
    pub actions: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub related: Option<Related>,
}

impl Notification {
    pub fn navigate_url(&self) -> Option<&str> {
        self.actions.iter().find_map(|a| match &a.kind {
            ActionKind::Navigate { url } => Some(url.as_str()),
            _ => None,
        })
    }

    pub fn conditions(&self) -> &[Condition] {
        self.related.as_ref().map_or(&[], |r| r.conditions.as_slice())
    }
}

/// True when S1/S2 notifications must not be generated.
pub fn suppression_gate(state: ActivityState) -> bool {
    state == ActivityState::Vehicle
}

/// Compact decimal rendering: integers without a fraction, otherwise at most
/// two decimals with trailing zeros trimmed.
pub fn fmt_value(v: f64) -> String {
    let s = format!("{:.2}", round_to(v, 2));
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Meters with one decimal.
pub fn fmt_distance_m(km: f64) -> String {
    format!("{:.1}", km * 1000.0)
}

pub fn round_to(v: f64, places: i32) -> f64 {
    let scale = 10f64.powi(places);
    (v * scale).round() / scale
}

pub fn maps_url(lat: f64, lon: f64) -> String {
    format!("https://www.google.com/maps/dir/?api=1&destination={lat:.6},{lon:.6}")
}
