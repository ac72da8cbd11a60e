//! Wires context detection, feeds and the scenario state machines together:
//! per-user sessions and the deterministic trace replayer.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, VirtualClock};
use crate::config::Config;
use crate::context::{ActivityState, ContextEvent, LocationFix, WalkTracker};
use crate::feed::{ExcursionRequest, SensorSnapshot, TraceBody, TraceEvent};
use crate::geo::GeoPoint;
use crate::notify::{
    suppression_gate, DialogPhase, Excursion, ForecastStore, Notification, NotifyCtx, NotifyState, Tapped, Templates,
};
use crate::profile::{Poi, UserProfile};
use crate::envmodel::ForecastDay;
use crate::{day_of, par, Error, Result, Timestamp};

/// Inputs that stay fixed for the lifetime of a run.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: Config,
    pub templates: Templates,
    pub catalog: Vec<Poi>,
}

impl Setup {
    pub fn new(config: Config, templates: Templates, catalog: Vec<Poi>) -> Result<Arc<Self>> {
        config.validate()?;
        Ok(Arc::new(Self {
            config,
            templates,
            catalog,
        }))
    }
}

fn ctx<'a>(setup: &'a Setup, profile: &'a UserProfile) -> NotifyCtx<'a> {
    NotifyCtx {
        config: &setup.config,
        templates: &setup.templates,
        profile,
        catalog: &setup.catalog,
    }
}

pub fn store_forecast(store: &mut ForecastStore, days: Vec<(String, ForecastDay)>) {
    for (district, day) in days {
        store.entry(district).or_default().insert(day.date, day);
    }
}

/// Everything the engine keeps for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSession {
    pub profile: UserProfile,
    pub tracker: WalkTracker,
    pub notify: NotifyState,
    pub excursions: Vec<Excursion>,
    /// Append-only.
    pub log: Vec<Notification>,
}

impl UserSession {
    pub fn new(profile: UserProfile, config: &Config) -> Result<Self> {
        profile.validate(&config.profile)?;
        Ok(Self {
            profile,
            tracker: WalkTracker::new(config.context.clone()),
            notify: NotifyState::default(),
            excursions: Vec::new(),
            log: Vec::new(),
        })
    }

    pub fn position(&self) -> Option<GeoPoint> {
        self.tracker.last_fix().map(|(p, _)| p)
    }

    pub fn activity(&self) -> ActivityState {
        self.tracker.state
    }

    fn record(&mut self, out: &[Notification]) {
        self.log.extend_from_slice(out);
    }

    pub fn on_fix(
        &mut self,
        setup: &Setup,
        sensors: &SensorSnapshot,
        forecasts: &ForecastStore,
        point: GeoPoint,
        t: Timestamp,
    ) -> Result<Vec<Notification>> {
        let fix = LocationFix {
            user_id: self.profile.user_id.clone(),
            point,
            t,
        };
        let events = self.tracker.update(&fix)?;
        let state = self.tracker.state;
        let c = ctx(setup, &self.profile);
        let mut out = Vec::new();
        for event in events {
            match event {
                ContextEvent::WalkThresholdReached if !suppression_gate(state) => {
                    out.extend(self.notify.on_walk_threshold(&c, point, t)?);
                }
                ContextEvent::EnvPollDue => {
                    out.extend(self.notify.on_env_poll(&c, point, sensors, state, t)?);
                }
                ContextEvent::ForecastPollDue => {
                    out.extend(self.notify.on_forecast_poll(&c, &self.excursions, forecasts, t)?);
                }
                ContextEvent::WalkThresholdReached | ContextEvent::WalkReset(_) => {}
            }
        }
        self.record(&out);
        Ok(out)
    }

    /// Clock advance without a fix: only forecast polls can fall due.
    pub fn tick(&mut self, setup: &Setup, forecasts: &ForecastStore, now: Timestamp) -> Result<Vec<Notification>> {
        let mut out = Vec::new();
        for event in self.tracker.tick(now) {
            if event == ContextEvent::ForecastPollDue {
                let c = ctx(setup, &self.profile);
                out.extend(self.notify.on_forecast_poll(&c, &self.excursions, forecasts, now)?);
            }
        }
        self.record(&out);
        Ok(out)
    }

    pub fn tap(&mut self, setup: &Setup, notification_id: u64, now: Timestamp) -> Result<Tapped> {
        let c = ctx(setup, &self.profile);
        let tapped = self.notify.on_notification_tap(&c, notification_id, now)?;
        if tapped.new {
            self.record(std::slice::from_ref(&tapped.popup));
        }
        Ok(tapped)
    }

    pub fn respond(
        &mut self,
        setup: &Setup,
        notification_id: u64,
        accepted: bool,
        now: Timestamp,
    ) -> Result<Option<Notification>> {
        let point = self
            .position()
            .ok_or_else(|| Error::Conflict("no location reported yet".into()))?;
        let c = ctx(setup, &self.profile);
        let out = self.notify.on_prompt_response(&c, notification_id, accepted, point, now)?;
        if let Some(n) = &out {
            self.record(std::slice::from_ref(n));
        }
        Ok(out)
    }

    /// Tap (when needed) and answer the open environmental dialog, or just tap
    /// a given notification when `accepted` is absent.
    pub fn interact(
        &mut self,
        setup: &Setup,
        notification_id: Option<u64>,
        accepted: Option<bool>,
        now: Timestamp,
    ) -> Result<Vec<Notification>> {
        let dialog = self.notify.dialog.as_ref().map(|d| (d.push_id, d.phase));
        let id = match (notification_id, dialog) {
            (Some(id), _) => id,
            (None, Some((push_id, _))) => push_id,
            (None, None) => return Err(Error::NotFound("no open dialog".into())),
        };
        let mut out = Vec::new();
        let needs_tap = match accepted {
            None => true,
            Some(_) => dialog.is_some_and(|(push_id, phase)| push_id == id && phase == DialogPhase::AwaitingTap),
        };
        if needs_tap {
            let tapped = self.tap(setup, id, now)?;
            if tapped.new {
                out.push(tapped.popup);
            }
        }
        if let Some(accepted) = accepted {
            out.extend(self.respond(setup, id, accepted, now)?);
        }
        Ok(out)
    }

    pub fn add_excursion(&mut self, req: &ExcursionRequest, now: Timestamp) -> Result<Excursion> {
        if req.user_id != self.profile.user_id {
            return Err(Error::invalid("user_id", "does not match the session"));
        }
        if req.district.trim().is_empty() {
            return Err(Error::invalid("district", "must not be empty"));
        }
        let destination = GeoPoint::new(req.lat, req.lon)?;
        let today = day_of(now);
        if req.date < today {
            return Err(Error::invalid("date", format!("{} is before {today}", req.date)));
        }
        let excursion_id = match &req.excursion_id {
            Some(id) => {
                if self.excursions.iter().any(|x| &x.excursion_id == id) {
                    return Err(Error::Conflict(format!("excursion `{id}` already exists")));
                }
                id.clone()
            }
            None => format!("{}-x{}", self.profile.user_id, self.excursions.len() + 1),
        };
        let excursion = Excursion {
            excursion_id,
            user_id: self.profile.user_id.clone(),
            district: req.district.clone(),
            destination,
            date: req.date,
        };
        self.excursions.push(excursion.clone());
        Ok(excursion)
    }
}

/// A trace response that could not be applied (stale, unknown or expired dialog).
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub line: usize,
    pub error: Error,
}

/// Deterministic single-threaded replay over a virtual clock.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub setup: Arc<Setup>,
    pub sensors: SensorSnapshot,
    pub forecasts: ForecastStore,
    pub users: BTreeMap<String, UserSession>,
    pub clock: VirtualClock,
    pub rejected: Vec<Rejection>,
}

fn at_line(line: usize, e: Error) -> Error {
    match e {
        Error::Ordering { t, previous, .. } => Error::Ordering { line, t, previous },
        other => Error::parse(format!("line {line}"), other.to_string()),
    }
}

impl Simulator {
    pub fn new(setup: Arc<Setup>, profiles: Vec<UserProfile>, start: Timestamp) -> Result<Self> {
        let mut users = BTreeMap::new();
        for p in profiles {
            let id = p.user_id.clone();
            if users.insert(id.clone(), UserSession::new(p, &setup.config)?).is_some() {
                return Err(Error::invalid("profiles", format!("duplicate user `{id}`")));
            }
        }
        Ok(Self {
            setup,
            sensors: SensorSnapshot::default(),
            forecasts: ForecastStore::new(),
            users,
            clock: VirtualClock::starting_at(start),
            rejected: Vec::new(),
        })
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// Moves the clock forward, firing forecast polls that fall due.
    pub fn advance_to(&mut self, t: Timestamp) -> Result<Vec<Notification>> {
        self.clock.advance_to(t)?;
        let mut out = Vec::new();
        for session in self.users.values_mut() {
            out.extend(session.tick(&self.setup, &self.forecasts, t)?);
        }
        Ok(out)
    }

    fn user(&mut self, id: &str) -> Result<&mut UserSession> {
        self.users
            .get_mut(id)
            .ok_or_else(|| Error::NotFound(format!("user `{id}`")))
    }

    pub fn apply(&mut self, event: &TraceEvent) -> Result<Vec<Notification>> {
        let mut out = self.advance_to(event.t).map_err(|e| at_line(event.line, e))?;
        let t = event.t;
        let step = match &event.body {
            TraceBody::Location { user_id, point } => {
                let setup = Arc::clone(&self.setup);
                let (sensors, forecasts) = (&self.sensors, &self.forecasts);
                match self.users.get_mut(user_id) {
                    Some(s) => s.on_fix(&setup, sensors, forecasts, *point, t),
                    None => Err(Error::NotFound(format!("user `{user_id}`"))),
                }
            }
            TraceBody::Sensor(reading) => {
                reading.validate().map(|_| {
                    self.sensors.apply(reading.clone());
                    Vec::new()
                })
            }
            TraceBody::Forecast(days) => {
                store_forecast(&mut self.forecasts, days.clone());
                Ok(Vec::new())
            }
            TraceBody::Excursion(req) => self.user(&req.user_id).and_then(|s| s.add_excursion(req, t)).map(|_| Vec::new()),
            TraceBody::Response {
                user_id,
                notification_id,
                accepted,
            } => {
                let setup = Arc::clone(&self.setup);
                let session = self.user(user_id).map_err(|e| at_line(event.line, e))?;
                match session.interact(&setup, *notification_id, *accepted, t) {
                    Ok(v) => Ok(v),
                    Err(error @ (Error::NotFound(_) | Error::Expired(_) | Error::Conflict(_))) => {
                        tracing::warn!(line = event.line, %error, "response not applied");
                        self.rejected.push(Rejection { line: event.line, error });
                        Ok(Vec::new())
                    }
                    Err(e) => Err(e),
                }
            }
        };
        out.extend(step.map_err(|e| at_line(event.line, e))?);
        Ok(out)
    }

    pub fn run(&mut self, events: &[TraceEvent]) -> Result<()> {
        for e in events {
            self.apply(e)?;
        }
        Ok(())
    }

    /// All notifications ordered by (created_at, user_id, id).
    pub fn log(&self) -> Vec<&Notification> {
        let mut all: Vec<&Notification> = self.users.values().flat_map(|s| s.log.iter()).collect();
        all.sort_by(|a, b| {
            (a.created_at, &a.user_id, a.id).cmp(&(b.created_at, &b.user_id, b.id))
        });
        all
    }

    pub fn log_jsonl(&self) -> String {
        log_jsonl(self.log())
    }
}

/// One JSON object per line, field order as declared on [`Notification`].
pub fn log_jsonl<'a>(notifications: impl IntoIterator<Item = &'a Notification>) -> String {
    let mut out = String::new();
    for n in notifications {
        out.push_str(&serde_json::to_string(n).expect("notification serializes"));
        out.push('\n');
    }
    out
}

/// Replays one trace from a fresh state; the clock starts at the first event.
pub fn replay(setup: Arc<Setup>, profiles: &[UserProfile], events: &[TraceEvent]) -> Result<Simulator> {
    let start = setup
        .config
        .service
        .virtual_start
        .or_else(|| events.first().map(|e| e.t))
        .unwrap_or(0);
    let mut sim = Simulator::new(setup, profiles.to_vec(), start)?;
    sim.run(events)?;
    Ok(sim)
}

/// Independent replays, fanned out over threads when `parallel` is on.
/// Each trace gets its own state, so results match [`replay_batch_seq`].
pub fn replay_batch(setup: &Arc<Setup>, profiles: &[UserProfile], traces: &[Vec<TraceEvent>]) -> Vec<Result<String>> {
    par::map(traces, |events| {
        replay(Arc::clone(setup), profiles, events).map(|s| s.log_jsonl())
    })
}

pub fn replay_batch_seq(setup: &Arc<Setup>, profiles: &[UserProfile], traces: &[Vec<TraceEvent>]) -> Vec<Result<String>> {
    traces
        .iter()
        .map(|events| replay(Arc::clone(setup), profiles, events).map(|s| s.log_jsonl()))
        .collect()
}
