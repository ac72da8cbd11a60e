//! Artifact-wide configuration.
//!
//! Loaded from a TOML file whose sections mirror the modules: `[thresholds]`,
//! `[severity]`, `[context]`, `[profile]`, `[notify]`, `[feed]` and
//! `[service]`. Every key is optional; missing keys take the defaults below.
//! Classification code reads only these values, never literals.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envmodel::Severity;
use crate::profile::Trait;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub thresholds: Thresholds,
    pub severity: SeverityBands,
    pub context: ContextConfig,
    pub profile: ProfileConfig,
    pub notify: NotifyConfig,
    pub feed: FeedConfig,
    pub service: ServiceConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        for (key, v) in [
            ("thresholds.pm25_ugm3", t.pm25_ugm3),
            ("thresholds.pm10_ugm3", t.pm10_ugm3),
            ("thresholds.no2_ppb", t.no2_ppb),
            ("thresholds.o3_ppb", t.o3_ppb),
            ("thresholds.co_ppm", t.co_ppm),
            ("thresholds.noise_dba", t.noise_dba),
            ("thresholds.aqi_healthy_max", t.aqi_healthy_max),
        ] {
            positive(key, v)?;
        }
        increasing(
            "thresholds.rain_*_min",
            &[t.rain_moderate_min, t.rain_heavy_min, t.rain_violent_min],
        )?;
        positive("thresholds.rain_moderate_min", t.rain_moderate_min)?;

        let s = &self.severity;
        increasing("severity.precip_mmh", &s.precip_mmh)?;
        increasing("severity.wind_kmh", &s.wind_kmh)?;
        let nested = s.temp_high[0] <= s.temp_medium[0]
            && s.temp_medium[0] <= s.temp_low[0]
            && s.temp_low[0] <= s.temp_low[1]
            && s.temp_low[1] <= s.temp_medium[1]
            && s.temp_medium[1] <= s.temp_high[1];
        if !nested {
            return Err(Error::Config(
                "severity temperature bands must nest: high ⊇ medium ⊇ low".into(),
            ));
        }

        let c = &self.context;
        for (key, v) in [
            ("context.walk_trigger_s", c.walk_trigger_s as f64),
            ("context.stationary_reset_s", c.stationary_reset_s as f64),
            ("context.env_poll_s", c.env_poll_s as f64),
            ("context.forecast_poll_s", c.forecast_poll_s as f64),
            ("context.stationary_max_mps", c.stationary_max_mps),
            ("context.walking_max_mps", c.walking_max_mps),
        ] {
            positive(key, v)?;
        }
        if c.walking_max_mps < c.stationary_max_mps {
            return Err(Error::Config(
                "context.walking_max_mps must be >= context.stationary_max_mps".into(),
            ));
        }
        if c.smoothing_window < 2 {
            return Err(Error::Config("context.smoothing_window must be >= 2".into()));
        }

        let n = &self.notify;
        for (key, v) in [
            ("notify.radius_poi_m", n.radius_poi_m),
            ("notify.radius_shelter_rain_m", n.radius_shelter_rain_m),
            ("notify.radius_shelter_airnoise_m", n.radius_shelter_airnoise_m),
        ] {
            positive(key, v)?;
        }
        if n.dialog_ttl_s <= 0 || n.s2_cooldown_s < 0 {
            return Err(Error::Config(
                "notify.dialog_ttl_s must be > 0 and notify.s2_cooldown_s >= 0".into(),
            ));
        }

        let p = &self.profile;
        for link in &p.trait_links {
            if !p.categories.contains(&link.category) {
                return Err(Error::Config(format!(
                    "profile.trait_links references unknown category `{}`",
                    link.category
                )));
            }
        }
        if !(0.0..=1.0).contains(&p.preference_bonus) {
            return Err(Error::Config("profile.preference_bonus must be in [0, 1]".into()));
        }
        Ok(())
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} must be a positive number, got {v}")))
    }
}

fn increasing(key: &str, edges: &[f64]) -> Result<()> {
    let ok = edges.iter().all(|v| v.is_finite()) && edges.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} must be strictly increasing")))
    }
}

/// Health and comfort limits. A reading is unsafe when it strictly exceeds its limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub pm25_ugm3: f64,
    pub pm10_ugm3: f64,
    pub no2_ppb: f64,
    pub o3_ppb: f64,
    pub co_ppm: f64,
    pub noise_dba: f64,
    pub aqi_healthy_max: f64,
    /// Lower edge of the moderate-rain band; everything below (and above zero) is light rain.
    pub rain_moderate_min: f64,
    pub rain_heavy_min: f64,
    pub rain_violent_min: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            pm25_ugm3: 35.0,
            pm10_ugm3: 150.0,
            no2_ppb: 100.0,
            o3_ppb: 120.0,
            co_ppm: 9.0,
            noise_dba: 55.0,
            aqi_healthy_max: 50.0,
            rain_moderate_min: 2.5,
            rain_heavy_min: 10.0,
            rain_violent_min: 50.0,
        }
    }
}

/// Band edges for forecast severity.
///
/// `precip_mmh` and `wind_kmh` hold the lower edges of MEDIUM, HIGH and
/// CRITICAL. Temperature bands are closed intervals nested inside each other;
/// anything outside `temp_high` is CRITICAL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityBands {
    pub precip_mmh: [f64; 3],
    pub wind_kmh: [f64; 3],
    pub temp_low: [f64; 2],
    pub temp_medium: [f64; 2],
    pub temp_high: [f64; 2],
    /// Weather-type token (case-insensitive) to severity. Unknown tokens are LOW.
    pub weather_types: BTreeMap<String, Severity>,
}

impl Default for SeverityBands {
    fn default() -> Self {
        use Severity::*;
        let weather_types = [
            ("Light rain", Low),
            ("Cloudy", Low),
            ("Light snow", Low),
            ("Moderate rain", Medium),
            ("Snow", Medium),
            ("Light fog", Medium),
            ("Heavy rain", High),
            ("Heavy snow", High),
            ("Dense fog", High),
            ("Storms", Critical),
            ("Extreme winds", Critical),
            ("Extreme temperatures", Critical),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            precip_mmh: [2.5, 10.0, 25.0],
            wind_kmh: [30.0, 50.0, 80.0],
            temp_low: [5.0, 30.0],
            temp_medium: [0.0, 35.0],
            temp_high: [-10.0, 40.0],
            weather_types,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextConfig {
    pub walk_trigger_s: i64,
    pub stationary_reset_s: i64,
    pub env_poll_s: i64,
    pub forecast_poll_s: i64,
    pub stationary_max_mps: f64,
    pub walking_max_mps: f64,
    /// Number of most recent fixes the speed estimate spans (2 = latest segment only).
    pub smoothing_window: usize,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            walk_trigger_s: 300,
            stationary_reset_s: 60,
            env_poll_s: 600,
            forecast_poll_s: 86_400,
            stationary_max_mps: 0.4,
            walking_max_mps: 2.5,
            smoothing_window: 2,
        }
    }
}

/// Links a category weight to one Big Five trait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraitLink {
    pub category: String,
    #[serde(rename = "trait")]
    pub governing: Trait,
    /// Weight falls as the trait rises.
    #[serde(default)]
    pub inverse: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictWhen {
    /// Conflict when the POI carries the tag.
    Present,
    /// Conflict when the POI lacks the tag.
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConflictRule {
    pub constraint: String,
    pub tag: String,
    pub when: ConflictWhen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub categories: Vec<String>,
    pub trait_links: Vec<TraitLink>,
    pub conflicts: Vec<ConflictRule>,
    pub preference_bonus: f64,
    /// When set, equal-score candidates are ordered by a seeded shuffle
    /// instead of by distance.
    pub random_tiebreak_seed: Option<u64>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        let categories = [
            "cultural",
            "social_event",
            "nature",
            "gastronomy",
            "shopping",
            "sport",
            "relaxation",
        ]
        .map(String::from)
        .to_vec();
        let link = |category: &str, governing, inverse| TraitLink {
            category: category.into(),
            governing,
            inverse,
        };
        Self {
            categories,
            trait_links: vec![
                link("cultural", Trait::Openness, false),
                link("social_event", Trait::Extraversion, false),
                link("relaxation", Trait::Agreeableness, false),
                link("sport", Trait::Neuroticism, true),
            ],
            conflicts: vec![
                ConflictRule {
                    constraint: "fear-of-heights".into(),
                    tag: "high-altitude".into(),
                    when: ConflictWhen::Present,
                },
                ConflictRule {
                    constraint: "wheelchair-access-needed".into(),
                    tag: "wheelchair-accessible".into(),
                    when: ConflictWhen::Absent,
                },
                ConflictRule {
                    constraint: "claustrophobia".into(),
                    tag: "enclosed-space".into(),
                    when: ConflictWhen::Present,
                },
            ],
            preference_bonus: 0.25,
            random_tiebreak_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NotifyConfig {
    pub radius_poi_m: f64,
    pub radius_shelter_rain_m: f64,
    pub radius_shelter_airnoise_m: f64,
    pub s2_cooldown_s: i64,
    pub dialog_ttl_s: i64,
    pub s3_min_severity: Severity,
    pub forecast_window_days: i64,
    /// Optional path to a template file; the built-in English set is used otherwise.
    pub templates: Option<String>,
}

impl Default for NotifyConfig {
    fn default() -> Self {
        Self {
            radius_poi_m: 500.0,
            radius_shelter_rain_m: 500.0,
            radius_shelter_airnoise_m: 1000.0,
            s2_cooldown_s: 1800,
            dialog_ttl_s: 900,
            s3_min_severity: Severity::Medium,
            forecast_window_days: 5,
            templates: None,
        }
    }
}

/// IPMA weather-type class id (as a string key) to weather-type token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedConfig {
    pub weather_type_ids: BTreeMap<String, String>,
}

impl Default for FeedConfig {
    fn default() -> Self {
        Self {
            weather_type_ids: crate::feed::default_weather_type_ids(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: Option<String>,
    /// POI catalog loaded at startup.
    pub pois: Option<String>,
    /// Events between persisted snapshots.
    pub snapshot_every: Option<u64>,
    /// Starting time of the virtual clock.
    pub virtual_start: Option<i64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let config = Config::from_toml_str("").unwrap();
        assert_eq!(config, Config::default());
        assert_eq!(config.thresholds.pm25_ugm3, 35.0);
        assert_eq!(config.context.walk_trigger_s, 300);
        assert_eq!(config.notify.radius_shelter_airnoise_m, 1000.0);
    }

    #[test]
    fn partial_override() {
        let config = Config::from_toml_str(
            "[thresholds]\npm25_ugm3 = 25.0\n[notify]\ns3_min_severity = \"HIGH\"\n",
        )
        .unwrap();
        assert_eq!(config.thresholds.pm25_ugm3, 25.0);
        assert_eq!(config.thresholds.pm10_ugm3, 150.0);
        assert_eq!(config.notify.s3_min_severity, Severity::High);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Config::from_toml_str("[thresholds]\npm26 = 1.0\n").is_err());
        assert!(Config::from_toml_str("[thresholds]\nnoise_dba = -1.0\n").is_err());
        assert!(Config::from_toml_str("[severity]\nwind_kmh = [50.0, 30.0, 80.0]\n").is_err());
        assert!(Config::from_toml_str("[context]\nsmoothing_window = 1\n").is_err());
    }

    #[test]
    fn default_config_round_trips_through_toml() {
        let text = toml::to_string(&Config::default()).unwrap();
        assert_eq!(Config::from_toml_str(&text).unwrap(), Config::default());
    }
}
