//! Great-circle distances and linear-scan proximity queries.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{par, Error, Result};

/// Mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = Error;

    fn try_from(raw: RawPoint) -> Result<Self> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::invalid("lat", format!("{lat} outside [-90, 90]")));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::invalid("lon", format!("{lon} outside [-180, 180]")));
        }
        Ok(Self { lat, lon })
    }
}

pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Anything with an id and a position that proximity queries can rank.
pub trait Located {
    fn id(&self) -> &str;
    fn location(&self) -> GeoPoint;
}

impl<T: Located + ?Sized> Located for &T {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn location(&self) -> GeoPoint {
        (**self).location()
    }
}

impl Located for (String, GeoPoint) {
    fn id(&self) -> &str {
        &self.0
    }

    fn location(&self) -> GeoPoint {
        self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<'a, T> {
    pub item: &'a T,
    pub distance_km: f64,
}

impl<T: Located> Hit<'_, T> {
    pub fn id(&self) -> &str {
        self.item.id()
    }
}

fn by_distance_then_id<T: Located>(a: &Hit<'_, T>, b: &Hit<'_, T>) -> Ordering {
    a.distance_km
        .total_cmp(&b.distance_km)
        .then_with(|| a.item.id().cmp(b.item.id()))
}

/// Closest item passing `filter`; ties go to the smallest id.
pub fn nearest<'a, T, F>(point: GeoPoint, items: &'a [T], filter: F) -> Option<Hit<'a, T>>
where
    T: Located + Sync,
    F: Fn(&T) -> bool + Sync + Send,
{
    par::min_by(
        items,
        |item| {
            filter(item).then(|| Hit {
                item,
                distance_km: haversine_km(point, item.location()),
            })
        },
        by_distance_then_id,
    )
}

/// Single-threaded [`nearest`], kept for benchmarking the two paths.
pub fn nearest_seq<'a, T, F>(point: GeoPoint, items: &'a [T], filter: F) -> Option<Hit<'a, T>>
where
    T: Located,
    F: Fn(&T) -> bool,
{
    items
        .iter()
        .filter(|item| filter(item))
        .map(|item| Hit {
            item,
            distance_km: haversine_km(point, item.location()),
        })
        .min_by(by_distance_then_id)
}

/// Items within `radius_m` (inclusive) that pass `filter`, sorted by (distance, id).
pub fn within_radius<'a, T, F>(
    point: GeoPoint,
    items: &'a [T],
    radius_m: f64,
    filter: F,
) -> Result<Vec<Hit<'a, T>>>
where
    T: Located + Sync,
    F: Fn(&T) -> bool + Sync + Send,
{
    check_radius(radius_m)?;
    let radius_km = radius_m / 1000.0;
    let mut hits = par::filter_map(items, |item| {
        if !filter(item) {
            return None;
        }
        let distance_km = haversine_km(point, item.location());
        (distance_km <= radius_km).then_some(Hit { item, distance_km })
    });
    hits.sort_by(by_distance_then_id);
    Ok(hits)
}

pub fn within_radius_seq<'a, T, F>(
    point: GeoPoint,
    items: &'a [T],
    radius_m: f64,
    filter: F,
) -> Result<Vec<Hit<'a, T>>>
where
    T: Located,
    F: Fn(&T) -> bool,
{
    check_radius(radius_m)?;
    let radius_km = radius_m / 1000.0;
    let mut hits: Vec<_> = items
        .iter()
        .filter(|item| filter(item))
        .map(|item| Hit {
            item,
            distance_km: haversine_km(point, item.location()),
        })
        .filter(|h| h.distance_km <= radius_km)
        .collect();
    hits.sort_by(by_distance_then_id);
    Ok(hits)
}

fn check_radius(radius_m: f64) -> Result<()> {
    if radius_m.is_finite() && radius_m > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("radius_m", format!("{radius_m} must be > 0")))
    }
}
