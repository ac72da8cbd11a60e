use petwalk_core::geo::{haversine_km, nearest, nearest_seq, within_radius, within_radius_seq, GeoPoint, Located};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct Site {
    id: String,
    at: GeoPoint,
    keep: bool,
}

impl Located for Site {
    fn id(&self) -> &str {
        &self.id
    }
    fn location(&self) -> GeoPoint {
        self.at
    }
}

/// Great-circle distance through the spherical law of cosines, in the
/// numerically stable atan2 form. Independent of the haversine code path.
fn oracle_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dl = (b.lon - a.lon).to_radians();
    let y = ((p2.cos() * dl.sin()).powi(2) + (p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos()).powi(2)).sqrt();
    let x = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    6371.0 * y.atan2(x)
}

fn random_instance(rng: &mut ChaCha8Rng) -> (GeoPoint, Vec<Site>, f64) {
    let center = GeoPoint::new(rng.gen_range(-60.0..60.0), rng.gen_range(-179.0..179.0)).unwrap();
    let spread = [0.001, 0.01, 0.1, 1.0][rng.gen_range(0..4)];
    let n = rng.gen_range(0..60);
    let sites = (0..n)
        .map(|i| Site {
            id: format!("s{:03}", rng.gen_range(0..1000) * 100 + i),
            at: GeoPoint::new(
                center.lat + rng.gen_range(-spread..spread),
                center.lon + rng.gen_range(-spread..spread),
            )
            .unwrap(),
            keep: rng.gen_bool(0.7),
        })
        .collect();
    let query = GeoPoint::new(
        center.lat + rng.gen_range(-spread..spread),
        center.lon + rng.gen_range(-spread..spread),
    )
    .unwrap();
    let radius_m = spread * 111_000.0 * rng.gen_range(0.05..1.0);
    (query, sites, radius_m)
}

#[test]
fn identity_and_one_degree() {
    let p = GeoPoint::new(41.15, -8.61).unwrap();
    assert_eq!(haversine_km(p, p), 0.0);
    let d = haversine_km(GeoPoint::new(0.0, 0.0).unwrap(), GeoPoint::new(0.0, 1.0).unwrap());
    // 2 * pi * 6371 / 360
    assert!((d - 111.194_926_644_558_73).abs() < 1e-9, "{d}");
    assert!((d - 111.195).abs() <= 0.001);
}

#[test]
fn search_matches_brute_force_on_1000_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for case in 0..1000 {
        let (q, sites, radius_m) = random_instance(&mut rng);

        let mut expected: Vec<(f64, &str)> = sites
            .iter()
            .filter(|s| s.keep)
            .map(|s| (oracle_km(q, s.at), s.id.as_str()))
            .collect();
        expected.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));

        let got = nearest(q, &sites, |s| s.keep);
        match (got, expected.first()) {
            (None, None) => {}
            (Some(hit), Some((d, id))) => {
                assert_eq!(hit.id(), *id, "case {case}");
                assert!((hit.distance_km - d).abs() < 1e-9, "case {case}");
            }
            (g, e) => panic!("case {case}: {:?} vs {e:?}", g.map(|h| h.id().to_string())),
        }

        let radius_km = radius_m / 1000.0;
        // Sites within a rounding hair of the boundary cannot be judged by a second formula.
        if expected.iter().any(|(d, _)| (d - radius_km).abs() < 1e-9) {
            continue;
        }
        let want: Vec<&str> = expected.iter().filter(|(d, _)| *d <= radius_km).map(|e| e.1).collect();
        let hits = within_radius(q, &sites, radius_m, |s| s.keep).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.id()).collect();
        assert_eq!(ids, want, "case {case}");
    }
}

#[test]
fn parallel_path_agrees_on_large_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sites: Vec<Site> = (0..20_000)
        .map(|i| Site {
            id: format!("s{i:05}"),
            at: GeoPoint::new(rng.gen_range(41.0..41.3), rng.gen_range(-8.8..-8.4)).unwrap(),
            keep: i % 3 != 0,
        })
        .collect();
    for _ in 0..20 {
        let q = GeoPoint::new(rng.gen_range(41.0..41.3), rng.gen_range(-8.8..-8.4)).unwrap();
        let key = |h: &petwalk_core::geo::Hit<'_, Site>| (h.id().to_string(), h.distance_km);
        assert_eq!(
            nearest(q, &sites, |s| s.keep).as_ref().map(key),
            nearest_seq(q, &sites, |s| s.keep).as_ref().map(key)
        );
        let par: Vec<_> = within_radius(q, &sites, 800.0, |s| s.keep).unwrap().iter().map(key).collect();
        let seq: Vec<_> = within_radius_seq(q, &sites, 800.0, |s| s.keep).unwrap().iter().map(key).collect();
        assert!(!seq.is_empty());
        assert_eq!(par, seq);
    }
}

#[test]
fn bad_radius_is_rejected() {
    let sites: Vec<Site> = Vec::new();
    let q = GeoPoint::new(0.0, 0.0).unwrap();
    assert!(within_radius(q, &sites, -1.0, |_| true).is_err());
    assert!(within_radius(q, &sites, f64::NAN, |_| true).is_err());
    assert!(nearest(q, &sites, |_| true).is_none());
}

fn point() -> impl Strategy<Value = GeoPoint> {
    (-89.0..89.0f64, -179.0..179.0f64).prop_map(|(lat, lon)| GeoPoint::new(lat, lon).unwrap())
}

proptest! {
    #[test]
    fn symmetric_and_bounded(a in point(), b in point()) {
        let d = haversine_km(a, b);
        prop_assert!((d - haversine_km(b, a)).abs() < 1e-9);
        prop_assert!(d >= 0.0);
        prop_assert!(d <= std::f64::consts::PI * 6371.0 + 1e-9);
    }

    #[test]
    fn triangle_inequality(a in point(), b in point(), c in point()) {
        prop_assert!(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-6);
    }

    #[test]
    fn out_of_range_coordinates_rejected(lat in 90.0001..1000.0f64, lon in 180.0001..1000.0f64) {
        prop_assert!(GeoPoint::new(lat, 0.0).is_err());
        prop_assert!(GeoPoint::new(-lat, 0.0).is_err());
        prop_assert!(GeoPoint::new(0.0, lon).is_err());
    }
}
