//! Canned demonstration traces and a random trace generator.
//!
//! All traces are built around [`START`] and the demo catalog shipped under
//! `fixtures/`. The seed only adds sub-meter GPS jitter to canned traces, so
//! every seed produces the same notifications.

use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envmodel::{AirSample, ForecastDay};
use crate::feed::{trace_line, ExcursionRequest, Payload, SensorKind, SensorReading, TraceBody, TraceEvent};
use crate::geo::GeoPoint;
use crate::{day_of, Error, Result, Timestamp};

/// 2024-05-01T08:00:00Z
pub const BASE_T: Timestamp = 1_714_550_400;
/// Walk start used by every canned trace.
pub const START: GeoPoint = GeoPoint {
    lat: 41.145,
    lon: -8.611,
};
const M_PER_DEG_LAT: f64 = 111_194.926_644_558_73;

/// Point `north_m`/`east_m` meters away from `origin` (local flat approximation).
pub fn offset(origin: GeoPoint, north_m: f64, east_m: f64) -> GeoPoint {
    let lat = origin.lat + north_m / M_PER_DEG_LAT;
    let lon = origin.lon + east_m / (M_PER_DEG_LAT * origin.lat.to_radians().cos());
    GeoPoint {
        lat: lat.clamp(-90.0, 90.0),
        lon: ((lon + 180.0).rem_euclid(360.0)) - 180.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Canned {
    /// Five minutes of walking, then a tap on the suggestion.
    S1,
    /// Bad air near the walk start; the user accepts shelter.
    S2,
    /// Three excursions: one alerting, one calm, one beyond the window.
    S3,
    /// Driving through bad air.
    Vehicle,
}

impl FromStr for Canned {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s1" => Ok(Canned::S1),
            "s2" => Ok(Canned::S2),
            "s3" => Ok(Canned::S3),
            "vehicle" => Ok(Canned::Vehicle),
            other => Err(Error::invalid("scenario", format!("unknown scenario `{other}`"))),
        }
    }
}

struct Builder {
    events: Vec<(Timestamp, TraceBody)>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn new(seed: u64) -> Self {
        Self {
            events: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn push(&mut self, t: Timestamp, body: TraceBody) {
        self.events.push((t, body));
    }

    /// Straight walk north from `START + north0`, one fix every `step` seconds.
    fn walk(&mut self, user: &str, t0: Timestamp, north0: f64, speed: f64, duration: i64, step: i64) -> (Timestamp, f64) {
        let (mut t, mut north) = (t0, north0);
        self.fix(user, t, north);
        let end = t0 + duration;
        while t < end {
            let dt = step.min(end - t);
            t += dt;
            north += speed * dt as f64;
            self.fix(user, t, north);
        }
        (t, north)
    }

    fn fix(&mut self, user: &str, t: Timestamp, north: f64) {
        let jitter = self.rng.gen_range(-0.5..0.5);
        self.push(
            t,
            TraceBody::Location {
                user_id: user.to_string(),
                point: offset(START, north, jitter),
            },
        );
    }

    fn finish(mut self) -> Vec<TraceEvent> {
        self.events.sort_by_key(|(t, _)| *t);
        self.events
            .into_iter()
            .enumerate()
            .map(|(i, (t, body))| TraceEvent { line: i + 1, t, body })
            .collect()
    }
}

fn air(id: &str, at: GeoPoint, t: Timestamp, pm25: f64) -> TraceBody {
    TraceBody::Sensor(SensorReading {
        sensor_id: id.to_string(),
        kind: SensorKind::Air,
        location: at,
        observed_at: t,
        payload: Payload::Air(AirSample {
            pm25: Some(pm25),
            ..Default::default()
        }),
    })
}

fn noise(id: &str, at: GeoPoint, t: Timestamp, laeq: f64) -> TraceBody {
    TraceBody::Sensor(SensorReading {
        sensor_id: id.to_string(),
        kind: SensorKind::Noise,
        location: at,
        observed_at: t,
        payload: Payload::Noise { laeq },
    })
}

fn rain(id: &str, at: GeoPoint, t: Timestamp, mmh: f64) -> TraceBody {
    TraceBody::Sensor(SensorReading {
        sensor_id: id.to_string(),
        kind: SensorKind::Precipitation,
        location: at,
        observed_at: t,
        payload: Payload::Rain { mmh },
    })
}

fn forecast(district: &str, date: NaiveDate, precip: f64, wind: f64, tmin: f64, tmax: f64, kind: &str) -> (String, ForecastDay) {
    (
        district.to_string(),
        ForecastDay {
            date,
            precipitation: precip,
            wind_speed: wind,
            temp_min: tmin,
            temp_max: tmax,
            weather_type: kind.to_string(),
        },
    )
}

fn excursion(user: &str, id: &str, district: &str, at: GeoPoint, date: NaiveDate) -> TraceBody {
    TraceBody::Excursion(ExcursionRequest {
        user_id: user.to_string(),
        excursion_id: Some(id.to_string()),
        district: district.to_string(),
        lat: at.lat,
        lon: at.lon,
        date,
    })
}

pub fn canned_trace(which: Canned, seed: u64) -> Vec<TraceEvent> {
    let mut b = Builder::new(seed);
    let t0 = BASE_T;
    match which {
        Canned::S1 => {
            let (end, _) = b.walk("u1", t0, 0.0, 1.2, 330, 5);
            b.push(
                end + 5,
                TraceBody::Response {
                    user_id: "u1".into(),
                    notification_id: Some(1),
                    accepted: None,
                },
            );
        }
        Canned::S2 => {
            b.push(t0, air("air-near", offset(START, 10.0, 30.0), t0, 40.0));
            b.push(t0, air("air-far", offset(START, 2_500.0, 0.0), t0, 8.0));
            b.push(t0, noise("noise-near", offset(START, 0.0, 60.0), t0, 48.0));
            b.push(t0, rain("rain-near", offset(START, -50.0, 0.0), t0, 0.0));
            b.walk("u1", t0, 0.0, 1.2, 120, 5);
            b.push(
                t0 + 20,
                TraceBody::Response {
                    user_id: "u1".into(),
                    notification_id: None,
                    accepted: Some(true),
                },
            );
        }
        Canned::S3 => {
            let today = day_of(t0);
            let in3 = today + Duration::days(3);
            let in7 = today + Duration::days(7);
            b.push(t0, excursion("u1", "porto-walk", "Porto", offset(START, 500.0, 0.0), in3));
            b.push(t0, excursion("u1", "braga-visit", "Braga", GeoPoint { lat: 41.5454, lon: -8.4265 }, in3));
            b.push(t0, excursion("u1", "lisboa-trip", "Lisboa", GeoPoint { lat: 38.7223, lon: -9.1393 }, in7));
            b.push(
                t0,
                TraceBody::Forecast(vec![
                    forecast("Porto", in3, 15.0, 20.0, 12.0, 18.0, "Heavy rain"),
                    forecast("Braga", in3, 1.0, 10.0, 15.0, 22.0, "Cloudy"),
                    forecast("Lisboa", in7, 30.0, 60.0, 10.0, 16.0, "Storms"),
                ]),
            );
            b.fix("u1", t0 + 60, 0.0);
            b.fix("u1", t0 + 120, 0.0);
        }
        Canned::Vehicle => {
            for (i, north) in [200.0, 1_000.0, 2_000.0, 4_000.0, 6_000.0].into_iter().enumerate() {
                b.push(t0, air(&format!("air-road-{}", i + 1), offset(START, north, 20.0), t0, 80.0));
                b.push(t0, noise(&format!("noise-road-{}", i + 1), offset(START, north, -20.0), t0, 75.0));
            }
            b.walk("u1", t0, 0.0, 15.0, 600, 5);
        }
    }
    b.finish()
}

/// Random multi-user trace for fuzzing the pipeline. Users are `u1`, `u2`.
pub fn random_trace(seed: u64) -> Vec<TraceEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events: Vec<(Timestamp, TraceBody)> = Vec::new();
    let t0 = BASE_T + rng.gen_range(0..86_400);
    let today = day_of(t0);

    for i in 0..rng.gen_range(4..16) {
        let at = offset(START, rng.gen_range(-1_500.0..1_500.0), rng.gen_range(-1_500.0..1_500.0));
        let id = format!("s{i}");
        let body = match rng.gen_range(0..3) {
            0 => air(&id, at, t0, rng.gen_range(0.0..80.0)),
            1 => noise(&id, at, t0, rng.gen_range(35.0..75.0)),
            _ => rain(&id, at, t0, *[0.0, 1.0, 2.5, 8.0, 20.0, 60.0].choose(&mut rng).unwrap()),
        };
        events.push((t0, body));
    }

    let districts = ["Porto", "Braga", "Aveiro"];
    let mut days = Vec::new();
    for d in districts {
        for k in 0..8 {
            let tmin = rng.gen_range(-15.0..30.0);
            days.push(forecast(
                d,
                today + Duration::days(k),
                rng.gen_range(0.0..40.0),
                rng.gen_range(0.0..100.0),
                tmin,
                tmin + rng.gen_range(0.0..15.0),
                ["Cloudy", "Light rain", "Heavy rain", "Storms", "Dense fog", "Clear sky"]
                    .choose(&mut rng)
                    .unwrap(),
            ));
        }
    }
    events.push((t0, TraceBody::Forecast(days)));

    for user in ["u1", "u2"] {
        for k in 0..rng.gen_range(0..3) {
            let district = districts.choose(&mut rng).unwrap();
            let date = today + Duration::days(rng.gen_range(0..9));
            events.push((t0, excursion(user, &format!("{user}-x{k}"), district, START, date)));
        }

        let (mut north, mut east) = (rng.gen_range(-800.0..800.0), rng.gen_range(-800.0..800.0));
        let mut t = t0 + rng.gen_range(0..30);
        events.push((t, location(user, north, east)));
        for _ in 0..rng.gen_range(3..10) {
            let speed = *[0.0, 0.1, 1.0, 1.3, 2.2, 6.0, 15.0].choose(&mut rng).unwrap();
            let heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let step = *[1, 5, 10, 30].choose(&mut rng).unwrap();
            let duration = rng.gen_range(20..900);
            let end = t + duration;
            while t < end {
                let dt = step.min(end - t);
                t += dt;
                north += speed * dt as f64 * heading.cos();
                east += speed * dt as f64 * heading.sin();
                events.push((t, location(user, north, east)));
                if rng.gen_bool(0.03) {
                    let accepted = *[None, Some(true), Some(false)].choose(&mut rng).unwrap();
                    let notification_id = rng.gen_bool(0.3).then(|| rng.gen_range(1..8));
                    events.push((
                        t,
                        TraceBody::Response {
                            user_id: user.to_string(),
                            notification_id,
                            accepted,
                        },
                    ));
                }
                if rng.gen_bool(0.01) {
                    let at = offset(START, north, east + rng.gen_range(-50.0..50.0));
                    events.push((t, air(&format!("{user}-mobile"), at, t, rng.gen_range(0.0..80.0))));
                }
            }
        }
    }

    events.sort_by_key(|(t, _)| *t);
    events
        .into_iter()
        .enumerate()
        .map(|(i, (t, body))| TraceEvent { line: i + 1, t, body })
        .collect()
}

fn location(user: &str, north: f64, east: f64) -> TraceBody {
    TraceBody::Location {
        user_id: user.to_string(),
        point: offset(START, north, east),
    }
}

/// Line-delimited trace text.
pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&trace_line(e.t, &e.body).to_string());
        out.push('\n');
    }
    out
}
