//! User profiles and nearby-POI ranking.
//!
//! This is a rule-based surrogate for a full personality-driven recommender:
//! each category weight is the normalised score of one governing trait,
//! constraints veto POIs through a conflict table, and candidates are ranked
//! by (score desc, distance asc, id asc).

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConflictWhen, ProfileConfig};
use crate::geo::{within_radius, GeoPoint, Located};
use crate::{Error, Result};

/// Weight given to categories no trait governs.
pub const UNMAPPED_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trait {
    Openness,
    Conscientiousness,
    Extraversion,
    Agreeableness,
    Neuroticism,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pet {
    Panda,
    Lynx,
}

impl Pet {
    pub fn name(self) -> &'static str {
        match self {
            Pet::Panda => "Panda",
            Pet::Lynx => "Lynx",
        }
    }
}

/// Big Five scores, each in [1, 5].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigFive {
    pub openness: f64,
    pub conscientiousness: f64,
    pub extraversion: f64,
    pub agreeableness: f64,
    pub neuroticism: f64,
}

impl BigFive {
    pub fn uniform(score: f64) -> Self {
        Self {
            openness: score,
            conscientiousness: score,
            extraversion: score,
            agreeableness: score,
            neuroticism: score,
        }
    }

    pub fn score(&self, t: Trait) -> f64 {
        match t {
            Trait::Openness => self.openness,
            Trait::Conscientiousness => self.conscientiousness,
            Trait::Extraversion => self.extraversion,
            Trait::Agreeableness => self.agreeableness,
            Trait::Neuroticism => self.neuroticism,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in [
            Trait::Openness,
            Trait::Conscientiousness,
            Trait::Extraversion,
            Trait::Agreeableness,
            Trait::Neuroticism,
        ] {
            let v = self.score(t);
            if !(1.0..=5.0).contains(&v) {
                return Err(Error::invalid(format!("bigfive.{t:?}").to_lowercase(), format!("{v} outside [1, 5]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub pet: Pet,
    pub bigfive: BigFive,
    #[serde(default)]
    pub preferred_categories: BTreeSet<String>,
    #[serde(default)]
    pub constraints: BTreeSet<String>,
}

impl UserProfile {
    pub fn validate(&self, config: &ProfileConfig) -> Result<()> {
        if self.user_id.trim().is_empty() {
            return Err(Error::invalid("user_id", "must not be empty"));
        }
        self.bigfive.validate()?;
        for c in &self.preferred_categories {
            if !config.categories.contains(c) {
                return Err(Error::invalid("preferred_categories", format!("unknown category `{c}`")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    #[serde(rename = "id")]
    pub poi_id: String,
    pub name: String,
    #[serde(flatten)]
    pub location: GeoPoint,
    #[serde(default)]
    pub categories: BTreeSet<String>,
    #[serde(default)]
    pub indoor: bool,
    #[serde(default, rename = "tags")]
    pub constraint_tags: BTreeSet<String>,
}

impl Located for Poi {
    fn id(&self) -> &str {
        &self.poi_id
    }

    fn location(&self) -> GeoPoint {
        self.location
    }
}

/// Parses and validates a POI catalog (JSON array).
pub fn load_catalog(json: &str, config: &ProfileConfig) -> Result<Vec<Poi>> {
    let pois: Vec<Poi> = serde_json::from_str(json).map_err(|e| Error::parse("poi catalog", e.to_string()))?;
    let mut seen = BTreeSet::new();
    for poi in &pois {
        if !seen.insert(poi.poi_id.as_str()) {
            return Err(Error::invalid("poi catalog", format!("duplicate id `{}`", poi.poi_id)));
        }
        if let Some(c) = poi.categories.iter().find(|c| !config.categories.contains(c)) {
            return Err(Error::invalid(
                "poi catalog",
                format!("POI `{}` has unknown category `{c}`", poi.poi_id),
            ));
        }
    }
    Ok(pois)
}

/// Parses one profile object or an array of them.
pub fn load_profiles(json: &str, config: &ProfileConfig) -> Result<Vec<UserProfile>> {
    let value: serde_json::Value = serde_json::from_str(json).map_err(|e| Error::parse("profiles", e.to_string()))?;
    let profiles: Vec<UserProfile> = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|p| vec![p])
    }
    .map_err(|e| Error::parse("profiles", e.to_string()))?;
    for p in &profiles {
        p.validate(config)?;
    }
    Ok(profiles)
}

fn normalized(score: f64) -> f64 {
    (score - 1.0) / 4.0
}

pub fn category_weights(bf: &BigFive, config: &ProfileConfig) -> Result<BTreeMap<String, f64>> {
    bf.validate()?;
    let mut weights: BTreeMap<String, f64> = config
        .categories
        .iter()
        .map(|c| (c.clone(), UNMAPPED_WEIGHT))
        .collect();
    for link in &config.trait_links {
        let n = normalized(bf.score(link.governing));
        weights.insert(link.category.clone(), if link.inverse { 1.0 - n } else { n });
    }
    Ok(weights)
}

pub fn admissible(profile: &UserProfile, poi: &Poi, config: &ProfileConfig) -> bool {
    !config.conflicts.iter().any(|rule| {
        profile.constraints.contains(&rule.constraint)
            && match rule.when {
                ConflictWhen::Present => poi.constraint_tags.contains(&rule.tag),
                ConflictWhen::Absent => !poi.constraint_tags.contains(&rule.tag),
            }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked<'a> {
    pub poi: &'a Poi,
    pub distance_km: f64,
    pub score: f64,
    /// Category that produced the score, preferring ones the user listed.
    pub reason: Option<String>,
}

/// Score of a POI and the category responsible for it.
pub fn score_poi(poi: &Poi, profile: &UserProfile, weights: &BTreeMap<String, f64>, bonus: f64) -> (f64, Option<String>) {
    let best = poi
        .categories
        .iter()
        .map(|c| (weights.get(c).copied().unwrap_or(UNMAPPED_WEIGHT), c))
        .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)));
    let base = best.map_or(UNMAPPED_WEIGHT, |(w, _)| w);
    let preferred = poi.categories.iter().find(|c| profile.preferred_categories.contains(*c));
    match preferred {
        Some(c) => ((base + bonus).min(1.0), Some(c.clone())),
        None => (base, best.map(|(_, c)| c.clone())),
    }
}

pub struct NearbyQuery<'q> {
    pub point: GeoPoint,
    pub radius_m: f64,
    pub indoor_only: bool,
    pub exclude: &'q BTreeSet<String>,
}

pub fn recommend_nearby<'a>(
    profile: &UserProfile,
    query: &NearbyQuery<'_>,
    catalog: &'a [Poi],
    config: &ProfileConfig,
) -> Result<Vec<Ranked<'a>>> {
    let weights = category_weights(&profile.bigfive, config)?;
    let hits = within_radius(query.point, catalog, query.radius_m, |poi| {
        (!query.indoor_only || poi.indoor) && !query.exclude.contains(&poi.poi_id) && admissible(profile, poi, config)
    })?;
    let mut ranked: Vec<Ranked<'a>> = hits
        .into_iter()
        .map(|hit| {
            let (score, reason) = score_poi(hit.item, profile, &weights, config.preference_bonus);
            Ranked {
                poi: hit.item,
                distance_km: hit.distance_km,
                score,
                reason,
            }
        })
        .collect();

    match config.random_tiebreak_seed {
        None => ranked.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.distance_km.total_cmp(&b.distance_km))
                .then_with(|| a.poi.poi_id.cmp(&b.poi.poi_id))
        }),
        Some(seed) => {
            // Shuffle a canonical order, then stable-sort by score so equal
            // scores keep the seeded order.
            ranked.sort_by(|a, b| a.poi.poi_id.cmp(&b.poi.poi_id));
            ranked.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
        }
    }
    Ok(ranked)
}
