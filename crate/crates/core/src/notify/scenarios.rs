use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{
    fmt_distance_m, fmt_value, maps_url, round_to, suppression_gate, Action, ActionKind, Channel, Condition,
    ConditionKind, ExcursionRef, Notification, PoiRef, Related, Scenario, Templates,
};
use crate::config::Config;
use crate::context::ActivityState;
use crate::envmodel::{AirDimension, ForecastDay, NoiseVerdict, TravelSafety};
use crate::feed::{Payload, SensorKind, SensorSnapshot};
use crate::geo::{nearest, GeoPoint};
use crate::profile::{recommend_nearby, NearbyQuery, Poi, Ranked, UserProfile};
use crate::{day_of, Error, Result, Timestamp};

/// Popups remembered for idempotent taps on S1/S3 pushes.
const POPUP_MEMORY: usize = 256;

/// Read-only inputs every scenario handler needs.
#[derive(Clone, Copy)]
pub struct NotifyCtx<'a> {
    pub config: &'a Config,
    pub templates: &'a Templates,
    pub profile: &'a UserProfile,
    pub catalog: &'a [Poi],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogPhase {
    AwaitingTap,
    AwaitingResponse,
}

/// The single open environmental-alert dialog of a user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialog {
    pub push_id: u64,
    pub conditions: Vec<Condition>,
    pub issued_at: Timestamp,
    pub phase: DialogPhase,
    pub popup: Option<Notification>,
}

impl Dialog {
    fn matches(&self, id: u64) -> bool {
        self.push_id == id || self.popup.as_ref().is_some_and(|p| p.id == id)
    }
}

/// Set after the user accepted shelter but none was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShelterRetry {
    pub reply_to: u64,
    pub conditions: Vec<Condition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub excursion_id: String,
    pub user_id: String,
    pub district: String,
    pub destination: GeoPoint,
    pub date: NaiveDate,
}

/// Latest forecast per district and day.
pub type ForecastStore = BTreeMap<String, BTreeMap<NaiveDate, ForecastDay>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredPopup {
    popup: Notification,
    emitted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tapped {
    pub popup: Notification,
    /// False when the popup had already been produced by an earlier tap.
    pub new: bool,
}

/// Per-user orchestration state. Callers serialize access per user.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NotifyState {
    next_id: u64,
    pub dialog: Option<Dialog>,
    /// Last alert time per condition kind.
    pub cooldowns: BTreeMap<ConditionKind, Timestamp>,
    suggested_day: Option<NaiveDate>,
    suggested: BTreeSet<String>,
    s3_sent: BTreeMap<String, Timestamp>,
    popups: BTreeMap<u64, StoredPopup>,
    pub shelter_retry: Option<ShelterRetry>,
}

impl NotifyState {
    pub fn last_id(&self) -> u64 {
        self.next_id
    }

    fn take_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn remember_popup(&mut self, push_id: u64, popup: Notification, emitted: bool) {
        self.popups.insert(push_id, StoredPopup { popup, emitted });
        while self.popups.len() > POPUP_MEMORY {
            self.popups.pop_first();
        }
    }

    /// Proximity suggestion after sustained walking.
    pub fn on_walk_threshold(&mut self, ctx: &NotifyCtx<'_>, point: GeoPoint, now: Timestamp) -> Result<Option<Notification>> {
        let today = day_of(now);
        if self.suggested_day != Some(today) {
            self.suggested_day = Some(today);
            self.suggested.clear();
        }
        let query = NearbyQuery {
            point,
            radius_m: ctx.config.notify.radius_poi_m,
            indoor_only: false,
            exclude: &self.suggested,
        };
        let ranked = recommend_nearby(ctx.profile, &query, ctx.catalog, &ctx.config.profile)?;
        let Some(top) = ranked.first() else {
            return Ok(None);
        };
        let poi_ref = poi_ref(top);
        let distance = fmt_distance_m(top.distance_km);
        let pet = ctx.profile.pet.name();
        let reason = reason_text(ctx, top);
        let justification = ctx.templates.render(
            "s1_reason",
            &[("poi_name", &top.poi.name), ("distance", &distance), ("reason", &reason)],
        )?;
        self.suggested.insert(top.poi.poi_id.clone());

        let push_id = self.take_id();
        let push = Notification {
            id: push_id,
            user_id: ctx.profile.user_id.clone(),
            scenario: Scenario::Proximity,
            channel: Channel::Push,
            created_at: now,
            pet: ctx.profile.pet,
            title: ctx.templates.render("s1_push_title", &[("pet", pet)])?,
            body: ctx.templates.render("s1_push_body", &[("pet", pet)])?,
            justification: justification.clone(),
            actions: vec![Action::new("Open", ActionKind::OpenPopup)],
            in_reply_to: None,
            related: Some(Related {
                poi: Some(poi_ref.clone()),
                ..Related::default()
            }),
        };
        let popup = Notification {
            id: 0,
            channel: Channel::PetPopup,
            title: ctx.templates.render("s1_popup_title", &[("pet", pet)])?,
            body: ctx.templates.render(
                "s1_popup_body",
                &[("pet", pet), ("poi_name", &top.poi.name), ("distance", &distance)],
            )?,
            actions: vec![Action::new(
                "Take me there",
                ActionKind::Navigate {
                    url: maps_url(top.poi.location.lat, top.poi.location.lon),
                },
            )],
            in_reply_to: Some(push_id),
            ..push.clone()
        };
        self.remember_popup(push_id, popup, false);
        Ok(Some(push))
    }

    /// Real-time environmental check at the user's position.
    pub fn on_env_poll(
        &mut self,
        ctx: &NotifyCtx<'_>,
        point: GeoPoint,
        snapshot: &SensorSnapshot,
        activity: ActivityState,
        now: Timestamp,
    ) -> Result<Vec<Notification>> {
        if suppression_gate(activity) {
            return Ok(Vec::new());
        }
        let unsafe_now = sample_conditions(ctx, point, snapshot)?;
        let unsafe_kinds: BTreeSet<ConditionKind> = unsafe_now.iter().map(|c| c.kind).collect();
        let mut out = Vec::new();

        if let Some(retry) = self.shelter_retry.take() {
            let still_bad: Vec<Condition> = unsafe_now
                .iter()
                .filter(|c| retry.conditions.iter().any(|r| r.kind == c.kind))
                .cloned()
                .collect();
            if !still_bad.is_empty() {
                match self.shelter_popup(ctx, point, &still_bad, retry.reply_to, now)? {
                    Some(popup) => out.push(popup),
                    None => self.shelter_retry = Some(retry),
                }
            }
        }

        if let Some(d) = &self.dialog {
            if now - d.issued_at > ctx.config.notify.dialog_ttl_s {
                self.dialog = None;
            }
        }

        let cooldown = ctx.config.notify.s2_cooldown_s;
        let fresh_kinds: BTreeSet<ConditionKind> = unsafe_kinds
            .into_iter()
            .filter(|k| self.cooldowns.get(k).is_none_or(|last| now - last >= cooldown))
            .collect();
        if fresh_kinds.is_empty() {
            return Ok(out);
        }
        for k in &fresh_kinds {
            self.cooldowns.insert(*k, now);
        }
        let fresh: Vec<Condition> = unsafe_now.into_iter().filter(|c| fresh_kinds.contains(&c.kind)).collect();

        if let Some(dialog) = &mut self.dialog {
            dialog.conditions.extend(fresh);
            return Ok(out);
        }

        let pet = ctx.profile.pet.name();
        let justification = conditions_reason(ctx, &fresh)?;
        let push_id = self.take_id();
        let push = Notification {
            id: push_id,
            user_id: ctx.profile.user_id.clone(),
            scenario: Scenario::Environment,
            channel: Channel::Push,
            created_at: now,
            pet: ctx.profile.pet,
            title: ctx.templates.render("s2_push_title", &[("conditions", &condition_labels(&fresh))])?,
            body: ctx.templates.render("s2_push_body", &[("pet", pet)])?,
            justification,
            actions: vec![Action::new("Open", ActionKind::OpenPopup)],
            in_reply_to: None,
            related: Some(Related {
                conditions: fresh.clone(),
                ..Related::default()
            }),
        };
        self.dialog = Some(Dialog {
            push_id,
            conditions: fresh,
            issued_at: now,
            phase: DialogPhase::AwaitingTap,
            popup: None,
        });
        out.push(push);
        Ok(out)
    }

    /// Opens the popup behind a push. Tapping again returns the same popup.
    pub fn on_notification_tap(&mut self, ctx: &NotifyCtx<'_>, notification_id: u64, now: Timestamp) -> Result<Tapped> {
        if self.dialog.as_ref().is_some_and(|d| d.matches(notification_id)) {
            self.check_dialog_ttl(ctx, now)?;
            let Some(dialog) = self.dialog.clone() else {
                unreachable!("dialog checked above");
            };
            if let Some(popup) = dialog.popup {
                return Ok(Tapped { popup, new: false });
            }
            let pet = ctx.profile.pet.name();
            let justification = conditions_reason(ctx, &dialog.conditions)?;
            let popup = Notification {
                id: self.take_id(),
                user_id: ctx.profile.user_id.clone(),
                scenario: Scenario::Environment,
                channel: Channel::PetPopup,
                created_at: now,
                pet: ctx.profile.pet,
                title: ctx.templates.render("s2_popup_title", &[("pet", pet)])?,
                body: ctx
                    .templates
                    .render("s2_popup_body", &[("pet", pet), ("justification", &justification)])?,
                justification,
                actions: vec![
                    Action::new("Yes", ActionKind::RespondYes),
                    Action::new("No", ActionKind::RespondNo),
                ],
                in_reply_to: Some(dialog.push_id),
                related: Some(Related {
                    conditions: dialog.conditions.clone(),
                    ..Related::default()
                }),
            };
            if let Some(d) = &mut self.dialog {
                d.phase = DialogPhase::AwaitingResponse;
                d.popup = Some(popup.clone());
            }
            return Ok(Tapped { popup, new: true });
        }

        let stored = self
            .popups
            .iter()
            .find(|(push_id, s)| **push_id == notification_id || (s.emitted && s.popup.id == notification_id))
            .map(|(k, s)| (*k, s.clone()));
        let Some((push_id, stored)) = stored else {
            return Err(Error::NotFound(format!("notification {notification_id}")));
        };
        if stored.emitted {
            return Ok(Tapped {
                popup: stored.popup,
                new: false,
            });
        }
        let mut popup = stored.popup;
        popup.id = self.take_id();
        popup.created_at = now;
        self.popups.insert(
            push_id,
            StoredPopup {
                popup: popup.clone(),
                emitted: true,
            },
        );
        Ok(Tapped { popup, new: true })
    }

    fn check_dialog_ttl(&mut self, ctx: &NotifyCtx<'_>, now: Timestamp) -> Result<()> {
        if let Some(d) = &self.dialog {
            if now - d.issued_at > ctx.config.notify.dialog_ttl_s {
                let id = d.push_id;
                self.dialog = None;
                return Err(Error::Expired(format!("notification {id}")));
            }
        }
        Ok(())
    }

    /// Yes/no answer to the shelter question.
    pub fn on_prompt_response(
        &mut self,
        ctx: &NotifyCtx<'_>,
        notification_id: u64,
        accepted: bool,
        point: GeoPoint,
        now: Timestamp,
    ) -> Result<Option<Notification>> {
        if !self.dialog.as_ref().is_some_and(|d| d.matches(notification_id)) {
            return Err(Error::NotFound(format!("no open dialog for notification {notification_id}")));
        }
        self.check_dialog_ttl(ctx, now)?;
        let Some(dialog) = self.dialog.take() else {
            unreachable!("dialog checked above");
        };
        if dialog.phase == DialogPhase::AwaitingTap {
            self.dialog = Some(dialog);
            return Err(Error::Conflict(format!("notification {notification_id} has not been opened yet")));
        }
        if !accepted {
            return Ok(None);
        }
        let reply_to = dialog.popup.as_ref().map_or(dialog.push_id, |p| p.id);
        if let Some(popup) = self.shelter_popup(ctx, point, &dialog.conditions, reply_to, now)? {
            return Ok(Some(popup));
        }

        let radius = shelter_radius(ctx, &dialog.conditions);
        let reason = conditions_reason(ctx, &dialog.conditions)?;
        let popup = Notification {
            id: self.take_id(),
            user_id: ctx.profile.user_id.clone(),
            scenario: Scenario::Environment,
            channel: Channel::PetPopup,
            created_at: now,
            pet: ctx.profile.pet,
            title: ctx.templates.render("s2_walk_more_title", &[])?,
            body: ctx.templates.render("s2_walk_more_body", &[])?,
            justification: ctx.templates.render(
                "s2_walk_more_reason",
                &[("radius", &fmt_value(radius)), ("conditions_reason", &reason)],
            )?,
            actions: Vec::new(),
            in_reply_to: Some(reply_to),
            related: Some(Related {
                conditions: dialog.conditions.clone(),
                ..Related::default()
            }),
        };
        self.shelter_retry = Some(ShelterRetry {
            reply_to,
            conditions: dialog.conditions,
        });
        Ok(Some(popup))
    }

    fn shelter_popup(
        &mut self,
        ctx: &NotifyCtx<'_>,
        point: GeoPoint,
        conditions: &[Condition],
        reply_to: u64,
        now: Timestamp,
    ) -> Result<Option<Notification>> {
        let none = BTreeSet::new();
        let query = NearbyQuery {
            point,
            radius_m: shelter_radius(ctx, conditions),
            indoor_only: true,
            exclude: &none,
        };
        let ranked = recommend_nearby(ctx.profile, &query, ctx.catalog, &ctx.config.profile)?;
        let Some(top) = ranked.first() else {
            return Ok(None);
        };
        let distance = fmt_distance_m(top.distance_km);
        let reason = reason_text(ctx, top);
        let conditions_reason = conditions_reason(ctx, conditions)?;
        Ok(Some(Notification {
            id: self.take_id(),
            user_id: ctx.profile.user_id.clone(),
            scenario: Scenario::Environment,
            channel: Channel::PetPopup,
            created_at: now,
            pet: ctx.profile.pet,
            title: ctx.templates.render("s2_shelter_title", &[])?,
            body: ctx
                .templates
                .render("s2_shelter_body", &[("poi_name", &top.poi.name), ("distance", &distance)])?,
            justification: ctx.templates.render(
                "s2_shelter_reason",
                &[
                    ("poi_name", &top.poi.name),
                    ("distance", &distance),
                    ("reason", &reason),
                    ("conditions_reason", &conditions_reason),
                ],
            )?,
            actions: vec![Action::new(
                "Open in Google Maps",
                ActionKind::Navigate {
                    url: maps_url(top.poi.location.lat, top.poi.location.lon),
                },
            )],
            in_reply_to: Some(reply_to),
            related: Some(Related {
                conditions: conditions.to_vec(),
                poi: Some(poi_ref(top)),
                excursion: None,
            }),
        }))
    }

    /// Forecast check for the user's upcoming excursions.
    pub fn on_forecast_poll(
        &mut self,
        ctx: &NotifyCtx<'_>,
        excursions: &[Excursion],
        forecasts: &ForecastStore,
        now: Timestamp,
    ) -> Result<Vec<Notification>> {
        let today = day_of(now);
        let horizon = today + chrono::Duration::days(ctx.config.notify.forecast_window_days);
        let bands = &ctx.config.severity;
        let mut out = Vec::new();
        for excursion in excursions {
            if excursion.date < today || excursion.date > horizon {
                continue;
            }
            let Some(day) = forecasts.get(&excursion.district).and_then(|d| d.get(&excursion.date)) else {
                tracing::debug!(excursion = %excursion.excursion_id, "no forecast for excursion date");
                continue;
            };
            let assessed = bands.forecast_severity(day)?;
            if assessed.severity < ctx.config.notify.s3_min_severity {
                continue;
            }
            let recent = self
                .s3_sent
                .get(&excursion.excursion_id)
                .is_some_and(|last| now - last < ctx.config.context.forecast_poll_s);
            if recent {
                continue;
            }
            self.s3_sent.insert(excursion.excursion_id.clone(), now);

            let dominant = assessed.dominant();
            let (value, threshold) = bands.evidence(day, dominant, assessed.severity);
            let severity = assessed.severity.label();
            let date = excursion.date.to_string();
            let pet = ctx.profile.pet.name();
            let justification = ctx.templates.render(
                "s3_reason",
                &[
                    ("dimension", dominant.label()),
                    ("value", &value),
                    ("severity", severity),
                    ("threshold", &threshold),
                ],
            )?;
            let related = Related {
                excursion: Some(ExcursionRef {
                    excursion_id: excursion.excursion_id.clone(),
                    district: excursion.district.clone(),
                    date: excursion.date,
                    severity: assessed.severity,
                    dominant,
                }),
                ..Related::default()
            };
            let push_id = self.take_id();
            let push = Notification {
                id: push_id,
                user_id: ctx.profile.user_id.clone(),
                scenario: Scenario::Forecast,
                channel: Channel::Push,
                created_at: now,
                pet: ctx.profile.pet,
                title: ctx.templates.render("s3_push_title", &[("district", &excursion.district)])?,
                body: ctx.templates.render("s3_push_body", &[("pet", pet), ("date", &date)])?,
                justification: justification.clone(),
                actions: vec![Action::new("Open", ActionKind::OpenPopup)],
                in_reply_to: None,
                related: Some(related.clone()),
            };
            let popup = Notification {
                id: self.take_id(),
                channel: Channel::PetPopup,
                title: ctx.templates.render("s3_popup_title", &[("date", &date)])?,
                body: ctx.templates.render(
                    "s3_popup_body",
                    &[
                        ("pet", pet),
                        ("district", &excursion.district),
                        ("date", &date),
                        ("severity", severity),
                        ("justification", &justification),
                    ],
                )?,
                actions: Vec::new(),
                in_reply_to: Some(push_id),
                ..push.clone()
            };
            self.remember_popup(push_id, popup.clone(), true);
            out.push(push);
            out.push(popup);
        }
        Ok(out)
    }
}

fn shelter_radius(ctx: &NotifyCtx<'_>, conditions: &[Condition]) -> f64 {
    let n = &ctx.config.notify;
    if conditions
        .iter()
        .any(|c| matches!(c.kind, ConditionKind::Air | ConditionKind::Noise))
    {
        n.radius_shelter_airnoise_m
    } else {
        n.radius_shelter_rain_m
    }
}

fn poi_ref(r: &Ranked<'_>) -> PoiRef {
    PoiRef {
        id: r.poi.poi_id.clone(),
        name: r.poi.name.clone(),
        indoor: r.poi.indoor,
        distance_m: round_to(r.distance_km * 1000.0, 1),
        score: round_to(r.score, 4),
    }
}

fn reason_text(ctx: &NotifyCtx<'_>, r: &Ranked<'_>) -> String {
    let Some(category) = &r.reason else {
        return "it is the closest option nearby".to_string();
    };
    if ctx.profile.preferred_categories.contains(category) {
        return format!("it matches your preference for {category}");
    }
    let link = ctx.config.profile.trait_links.iter().find(|l| &l.category == category);
    match link {
        Some(link) => {
            let name = format!("{:?}", link.governing).to_lowercase();
            let score = fmt_value(ctx.profile.bigfive.score(link.governing));
            format!("your {name} score ({score}/5) suggests you enjoy {category} places")
        }
        None => format!("it is a nearby {category} spot"),
    }
}

/// Nearest sensor of each kind, classified; returns every unsafe value.
fn sample_conditions(ctx: &NotifyCtx<'_>, point: GeoPoint, snapshot: &SensorSnapshot) -> Result<Vec<Condition>> {
    let th = &ctx.config.thresholds;
    let mut out = Vec::new();
    for kind in [SensorKind::Air, SensorKind::Noise, SensorKind::Precipitation] {
        let readings = snapshot.of_kind(kind);
        let Some(hit) = nearest(point, &readings, |_| true) else {
            continue;
        };
        let reading = *hit.item;
        let sensor_id = Some(reading.sensor_id.clone());
        match &reading.payload {
            Payload::Air(sample) => {
                for e in th.assess_air(sample)?.offending {
                    out.push(Condition {
                        kind: ConditionKind::Air,
                        dimension: e.dimension.label().to_string(),
                        value: e.value,
                        threshold: e.threshold,
                        unit: e.dimension.unit().to_string(),
                        sensor_id: sensor_id.clone(),
                        category: None,
                    });
                }
            }
            Payload::Noise { laeq } => {
                if th.assess_noise(*laeq)? == NoiseVerdict::Prejudicial {
                    out.push(Condition {
                        kind: ConditionKind::Noise,
                        dimension: "LAeq".into(),
                        value: *laeq,
                        threshold: th.noise_dba,
                        unit: "dB(A)".into(),
                        sensor_id,
                        category: None,
                    });
                }
            }
            Payload::Rain { mmh } => {
                let category = th.classify_rainfall(*mmh)?;
                if category.safety() == TravelSafety::Unsafe {
                    out.push(Condition {
                        kind: ConditionKind::Precipitation,
                        dimension: "rain".into(),
                        value: *mmh,
                        threshold: th.rain_moderate_min,
                        unit: "mm/h".into(),
                        sensor_id,
                        category: Some(category.label().to_string()),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn condition_labels(conditions: &[Condition]) -> String {
    let mut labels: Vec<&str> = Vec::new();
    for c in conditions {
        let label = match c.kind {
            ConditionKind::Air => "air quality",
            ConditionKind::Noise => "noise",
            ConditionKind::Precipitation => "rain",
            ConditionKind::Forecast => "forecast",
        };
        if !labels.contains(&label) {
            labels.push(label);
        }
    }
    labels.join(", ")
}

fn conditions_reason(ctx: &NotifyCtx<'_>, conditions: &[Condition]) -> Result<String> {
    let t = ctx.templates;
    let mut parts = Vec::with_capacity(conditions.len());
    for c in conditions {
        let value = fmt_value(c.value);
        let threshold = fmt_value(c.threshold);
        let text = match c.kind {
            ConditionKind::Air if c.dimension == AirDimension::Aqi.label() => {
                t.render("s2_reason_aqi", &[("value", &value), ("threshold", &threshold)])?
            }
            ConditionKind::Air => t.render(
                "s2_reason_air",
                &[
                    ("pollutant", &c.dimension),
                    ("value", &value),
                    ("unit", &c.unit),
                    ("threshold", &threshold),
                ],
            )?,
            ConditionKind::Noise => t.render("s2_reason_noise", &[("value", &value), ("threshold", &threshold)])?,
            ConditionKind::Precipitation => t.render(
                "s2_reason_rain",
                &[
                    ("value", &value),
                    ("threshold", &threshold),
                    ("category", c.category.as_deref().unwrap_or("rain")),
                ],
            )?,
            ConditionKind::Forecast => format!("{} {value} {} (limit {threshold})", c.dimension, c.unit),
        };
        parts.push(text);
    }
    Ok(parts.join(" "))
}
