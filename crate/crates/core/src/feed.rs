//! Ingestion of sensor entities, forecasts and replay traces, plus the
//! simulated sensor grid.
//!
//! Entity coordinates follow the GeoJSON convention `[lon, lat]`. Everything
//! else in this crate (traces, config, the HTTP API) uses `lat`/`lon` fields.

use std::collections::BTreeMap;
use std::io::BufRead;

use chrono::{DateTime, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::FeedConfig;
use crate::envmodel::{AirSample, ForecastDay, PollutantKind};
use crate::error::check_non_negative;
use crate::geo::{GeoPoint, Located};
use crate::{Error, Result, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Air,
    Noise,
    Precipitation,
}

impl SensorKind {
    pub fn entity_type(self) -> &'static str {
        match self {
            SensorKind::Air => "AirQualityObserved",
            SensorKind::Noise => "NoiseLevelObserved",
            SensorKind::Precipitation => "WeatherObserved",
        }
    }

    fn from_entity_type(t: &str) -> Option<Self> {
        match t {
            "AirQualityObserved" => Some(SensorKind::Air),
            "NoiseLevelObserved" => Some(SensorKind::Noise),
            "WeatherObserved" => Some(SensorKind::Precipitation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Air(AirSample),
    /// dB(A)
    Noise { laeq: f64 },
    /// mm/h
    Rain { mmh: f64 },
}

impl Payload {
    pub fn kind(&self) -> SensorKind {
        match self {
            Payload::Air(_) => SensorKind::Air,
            Payload::Noise { .. } => SensorKind::Noise,
            Payload::Rain { .. } => SensorKind::Precipitation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub sensor_id: String,
    pub kind: SensorKind,
    pub location: GeoPoint,
    pub observed_at: Timestamp,
    pub payload: Payload,
}

impl SensorReading {
    pub fn validate(&self) -> Result<()> {
        if self.payload.kind() != self.kind {
            return Err(Error::invalid("payload", "does not match the sensor kind"));
        }
        match &self.payload {
            Payload::Air(s) => s.validate(),
            Payload::Noise { laeq } => check_non_negative("LAeq", *laeq),
            Payload::Rain { mmh } => check_non_negative("precipitation", *mmh),
        }
    }
}

impl Located for SensorReading {
    fn id(&self) -> &str {
        &self.sensor_id
    }

    fn location(&self) -> GeoPoint {
        self.location
    }
}

/// Latest reading per sensor.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorSnapshot {
    pub readings: BTreeMap<String, SensorReading>,
    pub snapshot_at: Timestamp,
}

impl SensorSnapshot {
    /// Last-writer-wins by observation time; on equal times the newcomer wins.
    /// Returns whether the reading was stored.
    pub fn apply(&mut self, reading: SensorReading) -> bool {
        if let Some(old) = self.readings.get(&reading.sensor_id) {
            if reading.observed_at < old.observed_at {
                return false;
            }
        }
        self.snapshot_at = if self.readings.is_empty() {
            reading.observed_at
        } else {
            self.snapshot_at.max(reading.observed_at)
        };
        self.readings.insert(reading.sensor_id.clone(), reading);
        true
    }

    pub fn of_kind(&self, kind: SensorKind) -> Vec<&SensorReading> {
        self.readings.values().filter(|r| r.kind == kind).collect()
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }
}

const AIR_FIELDS: [(&str, Option<PollutantKind>); 6] = [
    ("pm25", Some(PollutantKind::PM25)),
    ("pm10", Some(PollutantKind::PM10)),
    ("no2", Some(PollutantKind::NO2)),
    ("o3", Some(PollutantKind::O3)),
    ("co", Some(PollutantKind::CO)),
    ("aqi", None),
];

fn entity_err(id: Option<&str>, field: &str, reason: impl Into<String>) -> Error {
    let location = match id {
        Some(id) => format!("entity `{id}` field `{field}`"),
        None => format!("entity field `{field}`"),
    };
    Error::parse(location, reason)
}

/// Property value given either bare or as `{"type": "Property", "value": ...}`.
fn property(v: &Value) -> &Value {
    match v {
        Value::Object(m) => m.get("value").unwrap_or(v),
        _ => v,
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn parse_instant(v: &Value) -> Option<Timestamp> {
    match property(v) {
        Value::Number(n) => n.as_i64(),
        Value::String(s) => DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp()),
        _ => None,
    }
}

pub fn format_instant(t: Timestamp) -> String {
    match DateTime::from_timestamp(t, 0) {
        Some(d) => d.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => t.to_string(),
    }
}

/// Parses one NGSI-LD style observation entity.
pub fn parse_sensor_entity(doc: &Value) -> Result<SensorReading> {
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::parse("entity", "expected a JSON object"))?;
    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.as_str(),
        Some(_) => return Err(entity_err(None, "id", "must be a non-empty string")),
        None => return Err(entity_err(None, "id", "missing")),
    };
    let some_id = Some(id);
    let kind = match obj.get("type") {
        Some(Value::String(t)) => SensorKind::from_entity_type(t).ok_or_else(|| Error::UnsupportedType(t.clone()))?,
        Some(_) => return Err(entity_err(some_id, "type", "must be a string")),
        None => return Err(entity_err(some_id, "type", "missing")),
    };
    let location = obj
        .get("location")
        .ok_or_else(|| entity_err(some_id, "location", "missing"))?;
    let geometry = property(location);
    let coords = geometry
        .get("coordinates")
        .and_then(Value::as_array)
        .ok_or_else(|| entity_err(some_id, "location", "expected a GeoJSON Point with coordinates"))?;
    let (lon, lat) = match coords.as_slice() {
        [lon, lat] => (
            lon.as_f64()
                .ok_or_else(|| entity_err(some_id, "location", "longitude is not a number"))?,
            lat.as_f64()
                .ok_or_else(|| entity_err(some_id, "location", "latitude is not a number"))?,
        ),
        _ => return Err(entity_err(some_id, "location", "coordinates must be [lon, lat]")),
    };
    let location = GeoPoint::new(lat, lon).map_err(|e| entity_err(some_id, "location", e.to_string()))?;
    let observed_at = obj
        .get("dateObserved")
        .ok_or_else(|| entity_err(some_id, "dateObserved", "missing"))
        .and_then(|v| parse_instant(v).ok_or_else(|| entity_err(some_id, "dateObserved", "not an RFC 3339 instant")))?;

    let measure = |field: &str| -> Result<Option<f64>> {
        match obj.get(field) {
            None => Ok(None),
            Some(v) => {
                let x = number(property(v)).ok_or_else(|| entity_err(some_id, field, "not a number"))?;
                check_non_negative(field, x).map_err(|e| entity_err(some_id, field, e.to_string()))?;
                Ok(Some(x))
            }
        }
    };
    let payload = match kind {
        SensorKind::Air => {
            let mut sample = AirSample::default();
            for (field, pollutant) in AIR_FIELDS {
                let v = measure(field)?;
                match pollutant {
                    Some(p) => sample.set(p, v),
                    None => sample.aqi = v,
                }
            }
            if sample.is_empty() {
                return Err(entity_err(some_id, "pm25", "no air-quality measurement present"));
            }
            Payload::Air(sample)
        }
        SensorKind::Noise => Payload::Noise {
            laeq: measure("LAeq")?.ok_or_else(|| entity_err(some_id, "LAeq", "missing"))?,
        },
        SensorKind::Precipitation => Payload::Rain {
            mmh: measure("precipitation")?.ok_or_else(|| entity_err(some_id, "precipitation", "missing"))?,
        },
    };
    Ok(SensorReading {
        sensor_id: id.to_string(),
        kind,
        location,
        observed_at,
        payload,
    })
}

fn prop(v: f64) -> Value {
    json!({"type": "Property", "value": v})
}

/// Canonical entity form: fixed key order, properties wrapped, UTC instant.
pub fn sensor_entity(reading: &SensorReading) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), Value::String(reading.sensor_id.clone()));
    m.insert("type".into(), Value::String(reading.kind.entity_type().into()));
    m.insert("dateObserved".into(), Value::String(format_instant(reading.observed_at)));
    m.insert(
        "location".into(),
        json!({
            "type": "GeoProperty",
            "value": {"type": "Point", "coordinates": [reading.location.lon, reading.location.lat]}
        }),
    );
    match &reading.payload {
        Payload::Air(s) => {
            for (field, pollutant) in AIR_FIELDS {
                let v = match pollutant {
                    Some(p) => s.get(p),
                    None => s.aqi,
                };
                if let Some(v) = v {
                    m.insert(field.into(), prop(v));
                }
            }
        }
        Payload::Noise { laeq } => {
            m.insert("LAeq".into(), prop(*laeq));
        }
        Payload::Rain { mmh } => {
            m.insert("precipitation".into(), prop(*mmh));
        }
    }
    Value::Object(m)
}

/// The IPMA weather-type class table shipped with the crate.
pub fn default_weather_type_ids() -> BTreeMap<String, String> {
    toml::from_str(include_str!("../data/weather_types.toml")).expect("bundled weather type table is valid")
}

/// Parses a per-district forecast document: either one `{district, data}`
/// object or an array of them.
pub fn parse_forecast(doc: &Value, config: &FeedConfig) -> Result<Vec<(String, ForecastDay)>> {
    let districts: Vec<&Value> = match doc {
        Value::Array(items) => items.iter().collect(),
        Value::Object(_) => vec![doc],
        _ => return Err(Error::parse("forecast", "expected an object or an array")),
    };
    let mut out = Vec::new();
    for (d, entry) in districts.into_iter().enumerate() {
        let at = |field: &str| format!("forecast[{d}].{field}");
        let district = entry
            .get("district")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(at("district"), "missing or not a string"))?;
        let records = entry
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse(at("data"), "missing or not an array"))?;
        for (i, record) in records.iter().enumerate() {
            let location = format!("forecast[{d}].data[{i}]");
            let day = parse_forecast_record(record, config).map_err(|reason| Error::parse(&location, reason))?;
            out.push((district.to_string(), day));
        }
    }
    Ok(out)
}

fn parse_forecast_record(record: &Value, config: &FeedConfig) -> std::result::Result<ForecastDay, String> {
    let field = |name: &str| -> std::result::Result<f64, String> {
        let v = record.get(name).ok_or_else(|| format!("`{name}` missing"))?;
        number(v).ok_or_else(|| format!("`{name}` is not a number"))
    };
    let date = record
        .get("forecastDate")
        .and_then(Value::as_str)
        .ok_or("`forecastDate` missing")?;
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|e| format!("`forecastDate`: {e}"))?;
    let weather_type = match (record.get("weatherType"), record.get("idWeatherType")) {
        (Some(Value::String(token)), _) => token.clone(),
        (_, Some(id)) => {
            let key = match id {
                Value::Number(n) => n.to_string(),
                Value::String(s) => s.trim().to_string(),
                _ => return Err("`idWeatherType` is not an id".into()),
            };
            config
                .weather_type_ids
                .get(&key)
                .cloned()
                .unwrap_or_else(|| "unknown".to_string())
        }
        _ => return Err("`idWeatherType` missing".into()),
    };
    let day = ForecastDay {
        date,
        precipitation: field("precipIntensity")?,
        wind_speed: field("windSpeed")?,
        temp_min: field("tMin")?,
        temp_max: field("tMax")?,
        weather_type,
    };
    day.validate().map_err(|e| e.to_string())?;
    Ok(day)
}

/// Latitude/longitude rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BBox {
    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Result<Self> {
        GeoPoint::new(min_lat, min_lon)?;
        GeoPoint::new(max_lat, max_lon)?;
        if min_lat >= max_lat || min_lon >= max_lon {
            return Err(Error::invalid("bbox", "minimum corner must be strictly below the maximum corner"));
        }
        Ok(Self {
            min_lat,
            min_lon,
            max_lat,
            max_lon,
        })
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat) && (self.min_lon..=self.max_lon).contains(&p.lon)
    }
}

impl std::str::FromStr for BBox {
    type Err = Error;

    /// `min_lat,min_lon,max_lat,max_lon`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid("bbox", e.to_string()))?;
        match parts.as_slice() {
            [a, b, c, d] => BBox::new(*a, *b, *c, *d),
            _ => Err(Error::invalid("bbox", "expected min_lat,min_lon,max_lat,max_lon")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorDescriptor {
    pub sensor_id: String,
    pub kind: SensorKind,
    pub location: GeoPoint,
}

impl SensorDescriptor {
    pub fn reading(&self, payload: Payload, observed_at: Timestamp) -> SensorReading {
        SensorReading {
            sensor_id: self.sensor_id.clone(),
            kind: self.kind,
            location: self.location,
            observed_at,
            payload,
        }
    }
}

/// Uniformly placed sensors; a pure function of its arguments.
pub fn gen_sensor_grid(seed: u64, bbox: BBox, n_air: usize, n_noise: usize, n_precip: usize) -> Result<Vec<SensorDescriptor>> {
    let bbox = BBox::new(bbox.min_lat, bbox.min_lon, bbox.max_lat, bbox.max_lon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_air + n_noise + n_precip);
    for (kind, prefix, n) in [
        (SensorKind::Air, "air", n_air),
        (SensorKind::Noise, "noise", n_noise),
        (SensorKind::Precipitation, "rain", n_precip),
    ] {
        for i in 0..n {
            let lat = rng.gen_range(bbox.min_lat..bbox.max_lat);
            let lon = rng.gen_range(bbox.min_lon..bbox.max_lon);
            out.push(SensorDescriptor {
                sensor_id: format!("{prefix}-{:04}", i + 1),
                kind,
                location: GeoPoint::new(lat, lon)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceBody {
    Location {
        user_id: String,
        point: GeoPoint,
    },
    Sensor(SensorReading),
    Forecast(Vec<(String, ForecastDay)>),
    /// A tap when `accepted` is absent, otherwise an answer to the open dialog.
    Response {
        user_id: String,
        notification_id: Option<u64>,
        accepted: Option<bool>,
    },
    Excursion(ExcursionRequest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcursionRequest {
    pub user_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excursion_id: Option<String>,
    pub district: String,
    pub lat: f64,
    pub lon: f64,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    /// 1-based line number in the source.
    pub line: usize,
    pub t: Timestamp,
    pub body: TraceBody,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    t: Timestamp,
    kind: String,
    body: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLocation {
    user_id: String,
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResponse {
    user_id: String,
    #[serde(default)]
    notification_id: Option<u64>,
    #[serde(default)]
    accepted: Option<bool>,
}

/// Parses a single trace line (without ordering checks).
pub fn parse_trace_line(text: &str, line: usize, config: &FeedConfig) -> Result<TraceEvent> {
    let at = format!("line {line}");
    let raw: RawLine = serde_json::from_str(text).map_err(|e| Error::parse(&at, e.to_string()))?;
    let body = match raw.kind.as_str() {
        "location" => {
            let b: RawLocation = serde_json::from_value(raw.body).map_err(|e| Error::parse(&at, e.to_string()))?;
            TraceBody::Location {
                user_id: b.user_id,
                point: GeoPoint::new(b.lat, b.lon).map_err(|e| Error::parse(&at, e.to_string()))?,
            }
        }
        "sensor" => TraceBody::Sensor(parse_sensor_entity(&raw.body).map_err(|e| Error::parse(&at, e.to_string()))?),
        "forecast" => TraceBody::Forecast(parse_forecast(&raw.body, config).map_err(|e| Error::parse(&at, e.to_string()))?),
        "response" => {
            let b: RawResponse = serde_json::from_value(raw.body).map_err(|e| Error::parse(&at, e.to_string()))?;
            TraceBody::Response {
                user_id: b.user_id,
                notification_id: b.notification_id,
                accepted: b.accepted,
            }
        }
        "excursion" => {
            let b: ExcursionRequest =
                serde_json::from_value(raw.body).map_err(|e| Error::parse(&at, e.to_string()))?;
            GeoPoint::new(b.lat, b.lon).map_err(|e| Error::parse(&at, e.to_string()))?;
            TraceBody::Excursion(b)
        }
        other => return Err(Error::parse(&at, format!("unknown event kind `{other}`"))),
    };
    Ok(TraceEvent { line, t: raw.t, body })
}

/// Reads a whole trace. Blank lines and lines starting with `#` are skipped.
pub fn parse_trace(reader: impl BufRead, config: &FeedConfig) -> Result<Vec<TraceEvent>> {
    let mut events: Vec<TraceEvent> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::parse(format!("line {n}"), e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let event = parse_trace_line(trimmed, n, config)?;
        if let Some(prev) = events.last() {
            if event.t < prev.t {
                return Err(Error::Ordering {
                    line: n,
                    t: event.t,
                    previous: prev.t,
                });
            }
        }
        events.push(event);
    }
    Ok(events)
}

/// Serializes a trace event back to its line form.
pub fn trace_line(t: Timestamp, body: &TraceBody) -> Value {
    let (kind, body) = match body {
        TraceBody::Location { user_id, point } => (
            "location",
            json!({"user_id": user_id, "lat": point.lat, "lon": point.lon}),
        ),
        TraceBody::Sensor(r) => ("sensor", sensor_entity(r)),
        TraceBody::Forecast(days) => {
            // grouped by district in order of first appearance
            let mut by_district: Vec<(&str, Vec<Value>)> = Vec::new();
            for (district, d) in days {
                let slot = match by_district.iter().position(|(name, _)| name == district) {
                    Some(i) => i,
                    None => {
                        by_district.push((district, Vec::new()));
                        by_district.len() - 1
                    }
                };
                by_district[slot].1.push(json!({
                    "forecastDate": d.date.to_string(),
                    "precipIntensity": d.precipitation,
                    "windSpeed": d.wind_speed,
                    "tMin": d.temp_min,
                    "tMax": d.temp_max,
                    "weatherType": d.weather_type,
                }));
            }
            let docs: Vec<Value> = by_district
                .into_iter()
                .map(|(district, data)| json!({"district": district, "data": data}))
                .collect();
            ("forecast", Value::Array(docs))
        }
        TraceBody::Response {
            user_id,
            notification_id,
            accepted,
        } => {
            let mut m = Map::new();
            m.insert("user_id".into(), json!(user_id));
            if let Some(id) = notification_id {
                m.insert("notification_id".into(), json!(id));
            }
            if let Some(a) = accepted {
                m.insert("accepted".into(), json!(a));
            }
            ("response", Value::Object(m))
        }
        TraceBody::Excursion(x) => ("excursion", serde_json::to_value(x).expect("excursion serializes")),
    };
    json!({"t": t, "kind": kind, "body": body})
}
