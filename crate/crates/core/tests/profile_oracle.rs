use std::collections::BTreeSet;

use petwalk_core::config::ProfileConfig;
use petwalk_core::geo::{haversine_km, GeoPoint};
use petwalk_core::profile::{category_weights, recommend_nearby, BigFive, NearbyQuery, Pet, Poi, UserProfile};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CATEGORIES: [&str; 7] = ["cultural", "social_event", "nature", "gastronomy", "shopping", "sport", "relaxation"];
const TAGS: [&str; 3] = ["high-altitude", "wheelchair-accessible", "enclosed-space"];
const CONSTRAINTS: [&str; 3] = ["fear-of-heights", "wheelchair-access-needed", "claustrophobia"];

/// Category weight written out from the default trait table.
fn oracle_weight(bf: &BigFive, category: &str) -> f64 {
    let n = |s: f64| (s - 1.0) / 4.0;
    match category {
        "cultural" => n(bf.openness),
        "social_event" => n(bf.extraversion),
        "relaxation" => n(bf.agreeableness),
        "sport" => 1.0 - n(bf.neuroticism),
        _ => 0.5,
    }
}

fn oracle_admissible(user: &UserProfile, poi: &Poi) -> bool {
    let has = |t: &str| poi.constraint_tags.contains(t);
    let needs = |c: &str| user.constraints.contains(c);
    !(needs("fear-of-heights") && has("high-altitude")
        || needs("wheelchair-access-needed") && !has("wheelchair-accessible")
        || needs("claustrophobia") && has("enclosed-space"))
}

fn oracle_score(user: &UserProfile, poi: &Poi) -> f64 {
    let base = poi
        .categories
        .iter()
        .map(|c| oracle_weight(&user.bigfive, c))
        .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.max(w))))
        .unwrap_or(0.5);
    if poi.categories.iter().any(|c| user.preferred_categories.contains(c)) {
        (base + 0.25).min(1.0)
    } else {
        base
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, from: &[&'a str], p: f64) -> BTreeSet<String> {
    from.iter().filter(|_| rng.gen_bool(p)).map(|s| s.to_string()).collect()
}

fn random_case(rng: &mut ChaCha8Rng) -> (UserProfile, Vec<Poi>, GeoPoint, f64, bool) {
    // Quarter-point steps make equal weights, and so score ties, common.
    let mut score = || rng.gen_range(4..=20) as f64 / 4.0;
    let bigfive = BigFive {
        openness: score(),
        conscientiousness: score(),
        extraversion: score(),
        agreeableness: score(),
        neuroticism: score(),
    };
    let user = UserProfile {
        user_id: "u".into(),
        pet: *[Pet::Panda, Pet::Lynx].choose(rng).unwrap(),
        bigfive,
        preferred_categories: pick(rng, &CATEGORIES, 0.2),
        constraints: pick(rng, &CONSTRAINTS, 0.3),
    };
    let center = GeoPoint::new(41.15, -8.61).unwrap();
    let n = rng.gen_range(0..40);
    let catalog = (0..n)
        .map(|i| Poi {
            poi_id: format!("p{i:02}"),
            name: format!("Place {i}"),
            location: GeoPoint::new(center.lat + rng.gen_range(-0.01..0.01), center.lon + rng.gen_range(-0.01..0.01))
                .unwrap(),
            categories: pick(rng, &CATEGORIES, 0.25),
            indoor: rng.gen_bool(0.5),
            constraint_tags: pick(rng, &TAGS, 0.3),
        })
        .collect();
    (user, catalog, center, rng.gen_range(100.0..1500.0), rng.gen_bool(0.3))
}

#[test]
fn ranking_matches_brute_force_on_300_catalogs() {
    let config = ProfileConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for case in 0..300 {
        let (user, catalog, q, radius_m, indoor_only) = random_case(&mut rng);
        let exclude: BTreeSet<String> = catalog.iter().filter(|_| rng.gen_bool(0.1)).map(|p| p.poi_id.clone()).collect();

        let mut want: Vec<(f64, f64, &str)> = catalog
            .iter()
            .filter(|p| !indoor_only || p.indoor)
            .filter(|p| !exclude.contains(&p.poi_id))
            .filter(|p| oracle_admissible(&user, p))
            .map(|p| (oracle_score(&user, p), haversine_km(q, p.location), p.poi_id.as_str()))
            .filter(|(_, d, _)| *d * 1000.0 <= radius_m)
            .collect();
        want.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(b.2)));

        let query = NearbyQuery {
            point: q,
            radius_m,
            indoor_only,
            exclude: &exclude,
        };
        let got = recommend_nearby(&user, &query, &catalog, &config).unwrap();
        let got: Vec<(f64, f64, &str)> = got.iter().map(|r| (r.score, r.distance_km, r.poi.poi_id.as_str())).collect();
        assert_eq!(got.len(), want.len(), "case {case}");
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.2, w.2, "case {case}");
            assert!((g.0 - w.0).abs() < 1e-12, "case {case}");
        }
    }
}

#[test]
fn weights_follow_trait_table() {
    let config = ProfileConfig::default();
    let bf = BigFive {
        openness: 5.0,
        conscientiousness: 1.0,
        extraversion: 3.0,
        agreeableness: 2.0,
        neuroticism: 5.0,
    };
    let w = category_weights(&bf, &config).unwrap();
    for c in CATEGORIES {
        assert_eq!(w[c], oracle_weight(&bf, c), "{c}");
    }
    assert_eq!(w["cultural"], 1.0);
    assert_eq!(w["sport"], 0.0);
}

#[test]
fn out_of_range_traits_rejected() {
    let mut bf = BigFive::uniform(3.0);
    bf.openness = 5.5;
    assert!(category_weights(&bf, &ProfileConfig::default()).is_err());
}

#[test]
fn seeded_tiebreak_is_reproducible() {
    let config = ProfileConfig {
        random_tiebreak_seed: Some(11),
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (user, catalog, q, _, _) = random_case(&mut rng);
    let exclude = BTreeSet::new();
    let query = NearbyQuery {
        point: q,
        radius_m: 5000.0,
        indoor_only: false,
        exclude: &exclude,
    };
    let ids = |v: Vec<petwalk_core::profile::Ranked<'_>>| v.iter().map(|r| r.poi.poi_id.clone()).collect::<Vec<_>>();
    let a = ids(recommend_nearby(&user, &query, &catalog, &config).unwrap());
    let b = ids(recommend_nearby(&user, &query, &catalog, &config).unwrap());
    assert_eq!(a, b);
}
