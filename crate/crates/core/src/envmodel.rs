//! Classification of environmental measurements and forecasts.
//!
//! All classifiers are pure functions of their input and the configured
//! [`Thresholds`] / [`SeverityBands`]. Unsafe means *strictly above* a limit
//! for pollutants, AQI and noise.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::config::{SeverityBands, Thresholds};
use crate::error::check_non_negative;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PollutantKind {
    #[serde(rename = "PM2.5")]
    PM25,
    #[serde(rename = "PM10")]
    PM10,
    #[serde(rename = "NO2")]
    NO2,
    #[serde(rename = "O3")]
    O3,
    #[serde(rename = "CO")]
    CO,
}

impl PollutantKind {
    pub const ALL: [PollutantKind; 5] = [Self::PM25, Self::PM10, Self::NO2, Self::O3, Self::CO];

    pub fn label(self) -> &'static str {
        match self {
            Self::PM25 => "PM2.5",
            Self::PM10 => "PM10",
            Self::NO2 => "NO2",
            Self::O3 => "O3",
            Self::CO => "CO",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Self::PM25 | Self::PM10 => "µg/m³",
            Self::NO2 | Self::O3 => "ppb",
            Self::CO => "ppm",
        }
    }

    pub fn threshold(self, t: &Thresholds) -> f64 {
        match self {
            Self::PM25 => t.pm25_ugm3,
            Self::PM10 => t.pm10_ugm3,
            Self::NO2 => t.no2_ppb,
            Self::O3 => t.o3_ppb,
            Self::CO => t.co_ppm,
        }
    }
}

impl fmt::Display for PollutantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AirVerdict {
    Healthy,
    Unhealthy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseVerdict {
    Safe,
    Prejudicial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TravelSafety {
    Safe,
    Unsafe,
}

/// One air-quality observation. Absent fields were not measured.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AirSample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pm25: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pm10: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub co: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aqi: Option<f64>,
}

impl AirSample {
    pub fn get(&self, kind: PollutantKind) -> Option<f64> {
        match kind {
            PollutantKind::PM25 => self.pm25,
            PollutantKind::PM10 => self.pm10,
            PollutantKind::NO2 => self.no2,
            PollutantKind::O3 => self.o3,
            PollutantKind::CO => self.co,
        }
    }

    pub fn set(&mut self, kind: PollutantKind, value: Option<f64>) {
        let slot = match kind {
            PollutantKind::PM25 => &mut self.pm25,
            PollutantKind::PM10 => &mut self.pm10,
            PollutantKind::NO2 => &mut self.no2,
            PollutantKind::O3 => &mut self.o3,
            PollutantKind::CO => &mut self.co,
        };
        *slot = value;
    }

    pub fn is_empty(&self) -> bool {
        PollutantKind::ALL.iter().all(|k| self.get(*k).is_none()) && self.aqi.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("air sample", "no measurement present"));
        }
        for kind in PollutantKind::ALL {
            if let Some(v) = self.get(kind) {
                check_non_negative(kind.label(), v)?;
            }
        }
        if let Some(aqi) = self.aqi {
            check_non_negative("aqi", aqi)?;
        }
        Ok(())
    }
}

/// A dimension of an air sample that can be over its limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AirDimension {
    Pollutant(PollutantKind),
    Aqi,
}

impl AirDimension {
    pub fn label(self) -> &'static str {
        match self {
            Self::Pollutant(k) => k.label(),
            Self::Aqi => "AQI",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Self::Pollutant(k) => k.unit(),
            Self::Aqi => "",
        }
    }
}

/// A measured value that broke its limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub dimension: AirDimension,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirAssessment {
    pub verdict: AirVerdict,
    /// Pollutants in enum order, AQI last.
    pub offending: Vec<Exceedance>,
}

impl AirAssessment {
    pub fn dimensions(&self) -> Vec<AirDimension> {
        self.offending.iter().map(|e| e.dimension).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AqiCategory {
    Good,
    Moderate,
    UnhealthySensitive,
    Unhealthy,
    VeryUnhealthy,
    Hazardous,
}

impl AqiCategory {
    pub const ALL: [AqiCategory; 6] = [
        Self::Good,
        Self::Moderate,
        Self::UnhealthySensitive,
        Self::Unhealthy,
        Self::VeryUnhealthy,
        Self::Hazardous,
    ];

    /// Inclusive integer bounds; `None` upper bound means open-ended.
    pub fn range(self) -> (u32, Option<u32>) {
        match self {
            Self::Good => (0, Some(50)),
            Self::Moderate => (51, Some(100)),
            Self::UnhealthySensitive => (101, Some(150)),
            Self::Unhealthy => (151, Some(200)),
            Self::VeryUnhealthy => (201, Some(300)),
            Self::Hazardous => (301, None),
        }
    }

    pub fn color(self) -> &'static str {
        match self {
            Self::Good => "green",
            Self::Moderate => "yellow",
            Self::UnhealthySensitive => "orange",
            Self::Unhealthy => "red",
            Self::VeryUnhealthy => "purple",
            Self::Hazardous => "maroon",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RainCategory {
    NoRain,
    Light,
    Moderate,
    Heavy,
    Violent,
}

impl RainCategory {
    pub fn safety(self) -> TravelSafety {
        match self {
            Self::NoRain | Self::Light => TravelSafety::Safe,
            Self::Moderate | Self::Heavy | Self::Violent => TravelSafety::Unsafe,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::NoRain => "no rain",
            Self::Light => "light rain",
            Self::Moderate => "moderate rain",
            Self::Heavy => "heavy rain",
            Self::Violent => "violent rain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
}

impl Severity {
    pub fn label(self) -> &'static str {
        match self {
            Self::Low => "LOW",
            Self::Medium => "MEDIUM",
            Self::High => "HIGH",
            Self::Critical => "CRITICAL",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDay {
    pub date: NaiveDate,
    /// mm/h
    pub precipitation: f64,
    /// km/h
    pub wind_speed: f64,
    pub temp_min: f64,
    pub temp_max: f64,
    pub weather_type: String,
}

impl ForecastDay {
    pub fn validate(&self) -> Result<()> {
        check_non_negative("precipitation", self.precipitation)?;
        check_non_negative("wind_speed", self.wind_speed)?;
        for (field, v) in [("temp_min", self.temp_min), ("temp_max", self.temp_max)] {
            if !v.is_finite() {
                return Err(Error::invalid(field, format!("{v} is not finite")));
            }
        }
        if self.temp_min > self.temp_max {
            return Err(Error::invalid(
                "temp_min",
                format!("{} exceeds temp_max {}", self.temp_min, self.temp_max),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastDimension {
    Precipitation,
    Wind,
    Temperature,
    WeatherType,
}

impl ForecastDimension {
    pub fn label(self) -> &'static str {
        match self {
            Self::Precipitation => "precipitation",
            Self::Wind => "wind",
            Self::Temperature => "temperature",
            Self::WeatherType => "weather type",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contributors {
    pub precipitation: Severity,
    pub wind: Severity,
    pub temperature: Severity,
    pub weather_type: Severity,
}

impl Contributors {
    pub fn iter(&self) -> impl Iterator<Item = (ForecastDimension, Severity)> {
        [
            (ForecastDimension::Precipitation, self.precipitation),
            (ForecastDimension::Wind, self.wind),
            (ForecastDimension::Temperature, self.temperature),
            (ForecastDimension::WeatherType, self.weather_type),
        ]
        .into_iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastSeverity {
    pub severity: Severity,
    pub contributors: Contributors,
}

impl ForecastSeverity {
    /// First dimension (in declaration order) that reaches the overall severity.
    pub fn dominant(&self) -> ForecastDimension {
        self.contributors
            .iter()
            .find(|(_, s)| *s == self.severity)
            .map(|(d, _)| d)
            .unwrap_or(ForecastDimension::Precipitation)
    }
}

impl Thresholds {
    pub fn classify_pollutant(&self, kind: PollutantKind, value: f64) -> Result<AirVerdict> {
        check_non_negative(kind.label(), value)?;
        Ok(if value > kind.threshold(self) {
            AirVerdict::Unhealthy
        } else {
            AirVerdict::Healthy
        })
    }

    pub fn aqi_binary(&self, aqi: f64) -> Result<AirVerdict> {
        check_non_negative("aqi", aqi)?;
        Ok(if aqi > self.aqi_healthy_max {
            AirVerdict::Unhealthy
        } else {
            AirVerdict::Healthy
        })
    }

    pub fn assess_air(&self, sample: &AirSample) -> Result<AirAssessment> {
        sample.validate()?;
        let mut offending = Vec::new();
        for kind in PollutantKind::ALL {
            if let Some(value) = sample.get(kind) {
                if self.classify_pollutant(kind, value)? == AirVerdict::Unhealthy {
                    offending.push(Exceedance {
                        dimension: AirDimension::Pollutant(kind),
                        value,
                        threshold: kind.threshold(self),
                    });
                }
            }
        }
        if let Some(aqi) = sample.aqi {
            if self.aqi_binary(aqi)? == AirVerdict::Unhealthy {
                offending.push(Exceedance {
                    dimension: AirDimension::Aqi,
                    value: aqi,
                    threshold: self.aqi_healthy_max,
                });
            }
        }
        let verdict = if offending.is_empty() {
            AirVerdict::Healthy
        } else {
            AirVerdict::Unhealthy
        };
        Ok(AirAssessment { verdict, offending })
    }

    pub fn classify_rainfall(&self, rate: f64) -> Result<RainCategory> {
        check_non_negative("rainfall rate", rate)?;
        Ok(if rate == 0.0 {
            RainCategory::NoRain
        } else if rate < self.rain_moderate_min {
            RainCategory::Light
        } else if rate < self.rain_heavy_min {
            RainCategory::Moderate
        } else if rate < self.rain_violent_min {
            RainCategory::Heavy
        } else {
            RainCategory::Violent
        })
    }

    pub fn assess_noise(&self, level: f64) -> Result<NoiseVerdict> {
        check_non_negative("noise level", level)?;
        Ok(if level > self.noise_dba {
            NoiseVerdict::Prejudicial
        } else {
            NoiseVerdict::Safe
        })
    }
}

/// AQI category whose inclusive range contains `aqi`. Non-integer values
/// falling between two ranges (e.g. 50.5) belong to the upper one.
pub fn aqi_category(aqi: f64) -> Result<AqiCategory> {
    check_non_negative("aqi", aqi)?;
    Ok(AqiCategory::ALL
        .into_iter()
        .rev()
        .find(|c| aqi > c.range().0 as f64 - 1.0)
        .unwrap_or(AqiCategory::Good))
}

impl SeverityBands {
    fn band(edges: &[f64; 3], value: f64) -> Severity {
        if value >= edges[2] {
            Severity::Critical
        } else if value >= edges[1] {
            Severity::High
        } else if value >= edges[0] {
            Severity::Medium
        } else {
            Severity::Low
        }
    }

    pub fn precipitation(&self, mmh: f64) -> Severity {
        Self::band(&self.precip_mmh, mmh)
    }

    pub fn wind(&self, kmh: f64) -> Severity {
        Self::band(&self.wind_kmh, kmh)
    }

    pub fn temperature(&self, celsius: f64) -> Severity {
        let within = |band: &[f64; 2]| band[0] <= celsius && celsius <= band[1];
        if within(&self.temp_low) {
            Severity::Low
        } else if within(&self.temp_medium) {
            Severity::Medium
        } else if within(&self.temp_high) {
            Severity::High
        } else {
            Severity::Critical
        }
    }

    pub fn weather_type(&self, token: &str) -> Severity {
        let found = self
            .weather_types
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(token.trim()))
            .map(|(_, v)| *v);
        match found {
            Some(s) => s,
            None => {
                tracing::debug!(token, "unknown weather type, treating as LOW");
                Severity::Low
            }
        }
    }

    pub fn forecast_severity(&self, day: &ForecastDay) -> Result<ForecastSeverity> {
        day.validate()?;
        let contributors = Contributors {
            precipitation: self.precipitation(day.precipitation),
            wind: self.wind(day.wind_speed),
            temperature: self.temperature(day.temp_min).max(self.temperature(day.temp_max)),
            weather_type: self.weather_type(&day.weather_type),
        };
        let severity = contributors
            .iter()
            .map(|(_, s)| s)
            .max()
            .unwrap_or(Severity::Low);
        Ok(ForecastSeverity {
            severity,
            contributors,
        })
    }

    /// Measured value and the band edge it reached, for message justification.
    pub fn evidence(&self, day: &ForecastDay, dim: ForecastDimension, at: Severity) -> (String, String) {
        let edge = |edges: &[f64; 3]| match at {
            Severity::Low => 0.0,
            Severity::Medium => edges[0],
            Severity::High => edges[1],
            Severity::Critical => edges[2],
        };
        match dim {
            ForecastDimension::Precipitation => (
                format!("{} mm/h", crate::notify::fmt_value(day.precipitation)),
                format!("{} mm/h", crate::notify::fmt_value(edge(&self.precip_mmh))),
            ),
            ForecastDimension::Wind => (
                format!("{} km/h", crate::notify::fmt_value(day.wind_speed)),
                format!("{} km/h", crate::notify::fmt_value(edge(&self.wind_kmh))),
            ),
            ForecastDimension::Temperature => {
                let (value, low_side) = if self.temperature(day.temp_max) >= self.temperature(day.temp_min) {
                    (day.temp_max, false)
                } else {
                    (day.temp_min, true)
                };
                let band = match at {
                    Severity::Low => self.temp_low,
                    Severity::Medium => self.temp_low,
                    Severity::High => self.temp_medium,
                    Severity::Critical => self.temp_high,
                };
                let limit = if low_side { band[0] } else { band[1] };
                (
                    format!("{} °C", crate::notify::fmt_value(value)),
                    format!("{} °C", crate::notify::fmt_value(limit)),
                )
            }
            ForecastDimension::WeatherType => {
                (format!("\"{}\"", day.weather_type), format!("{} class", at.label()))
            }
        }
    }
}
