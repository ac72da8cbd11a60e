//! Session store shared by all request handlers.
//!
//! Locking contract: per-user commands take the ordering lock for reading
//! and the user's own mutex; commands touching shared state (users, sensors,
//! forecasts, the clock) take the ordering lock for writing. Each command is
//! journaled while its locks are held, so replaying the journal applies
//! commands in an order equivalent to the live one.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dashmap::DashMap;
use parking_lot::{Mutex, RwLock};
use petwalk_core::context::ActivityState;
use petwalk_core::clock::{Clock, VirtualClock, WallClock};
use petwalk_core::engine::{store_forecast, Setup, UserSession};
use petwalk_core::envmodel::ForecastDay;
use petwalk_core::feed::{ExcursionRequest, SensorReading, SensorSnapshot};
use petwalk_core::geo::GeoPoint;
use petwalk_core::notify::{Dialog, Excursion, ForecastStore, Notification};
use petwalk_core::profile::UserProfile;
use petwalk_core::{Error, Result, Timestamp};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Virtual,
    Wall,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "virtual" => Ok(Mode::Virtual),
            "wall" => Ok(Mode::Wall),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected virtual or wall)"))),
        }
    }
}

/// A state mutation, as journaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Command {
    CreateUser { profile: UserProfile },
    Location { user_id: String, point: GeoPoint, t: Timestamp },
    Excursion { request: ExcursionRequest, t: Timestamp },
    Sensors { readings: Vec<SensorReading> },
    Forecast { days: Vec<(String, ForecastDay)> },
    Tap { user_id: String, notification_id: u64, t: Timestamp },
    Respond { user_id: String, notification_id: u64, accepted: bool, t: Timestamp },
    Tick { to_t: Timestamp },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Created,
    Notifications(Vec<Notification>),
    Popup(Notification),
    Reply(Option<Notification>),
    Excursion(Excursion),
    Ingested(usize),
}

#[derive(Serialize, Deserialize)]
struct JournalLine {
    seq: u64,
    #[serde(flatten)]
    command: Command,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    clock: VirtualClock,
    sensors: SensorSnapshot,
    forecasts: ForecastStore,
    sessions: BTreeMap<String, UserSession>,
}

struct Journal {
    dir: PathBuf,
    file: File,
    seq: u64,
    snapshot_every: u64,
}

impl Journal {
    fn append(&mut self, command: &Command) -> Result<u64> {
        self.seq += 1;
        let line = serde_json::to_string(&JournalLine {
            seq: self.seq,
            command: command.clone(),
        })
        .map_err(|e| Error::Config(e.to_string()))?;
        writeln!(self.file, "{line}").map_err(|e| Error::Config(format!("journal write: {e}")))?;
        self.file.flush().map_err(|e| Error::Config(format!("journal flush: {e}")))?;
        Ok(self.seq)
    }
}

pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const JOURNAL_FILE: &str = "events.jsonl";

pub struct AppState {
    pub setup: Arc<Setup>,
    pub mode: Mode,
    order: RwLock<()>,
    clock: Mutex<VirtualClock>,
    sessions: DashMap<String, Arc<Mutex<UserSession>>>,
    sensors: RwLock<Arc<SensorSnapshot>>,
    forecasts: RwLock<Arc<ForecastStore>>,
    journal: Option<Mutex<Journal>>,
    changed: watch::Sender<u64>,
}

impl AppState {
    /// In-memory state (nothing persisted).
    pub fn new(setup: Arc<Setup>, mode: Mode) -> Arc<Self> {
        let start = setup.config.service.virtual_start.unwrap_or(0);
        Arc::new(Self::blank(setup, mode, start))
    }

    fn blank(setup: Arc<Setup>, mode: Mode, start: Timestamp) -> Self {
        Self {
            setup,
            mode,
            order: RwLock::new(()),
            clock: Mutex::new(VirtualClock::starting_at(start)),
            sessions: DashMap::new(),
            sensors: RwLock::new(Arc::new(SensorSnapshot::default())),
            forecasts: RwLock::new(Arc::new(ForecastStore::new())),
            journal: None,
            changed: watch::channel(0).0,
        }
    }

    /// State persisted under `dir`: restores the last snapshot, replays the
    /// journal tail and keeps journaling.
    pub fn open(setup: Arc<Setup>, mode: Mode, dir: impl AsRef<Path>) -> Result<Arc<Self>> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
        let start = setup.config.service.virtual_start.unwrap_or(0);
        let mut state = Self::blank(setup, mode, start);

        let mut seq = 0;
        let snap_path = dir.join(SNAPSHOT_FILE);
        if snap_path.exists() {
            let text = fs::read_to_string(&snap_path).map_err(|e| Error::Config(format!("{}: {e}", snap_path.display())))?;
            let snap: Snapshot = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", snap_path.display())))?;
            seq = snap.seq;
            *state.clock.get_mut() = snap.clock;
            *state.sensors.get_mut() = Arc::new(snap.sensors);
            *state.forecasts.get_mut() = Arc::new(snap.forecasts);
            for (id, s) in snap.sessions {
                state.sessions.insert(id, Arc::new(Mutex::new(s)));
            }
        }

        let journal_path = dir.join(JOURNAL_FILE);
        if journal_path.exists() {
            let file = File::open(&journal_path).map_err(|e| Error::Config(format!("{}: {e}", journal_path.display())))?;
            let lines: Vec<String> = BufReader::new(file)
                .lines()
                .collect::<std::io::Result<_>>()
                .map_err(|e| Error::Config(e.to_string()))?;
            let count = lines.len();
            for (i, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: JournalLine = match serde_json::from_str(&line) {
                    Ok(e) => e,
                    // a torn final write from a crash is dropped
                    Err(e) if i + 1 == count => {
                        tracing::warn!(line = i + 1, error = %e, "ignoring incomplete journal tail");
                        break;
                    }
                    Err(e) => return Err(Error::Config(format!("journal line {}: {e}", i + 1))),
                };
                if entry.seq <= seq {
                    continue;
                }
                seq = entry.seq;
                if let Err(e) = state.execute(&entry.command) {
                    tracing::debug!(seq, error = %e, "journaled command failed again on replay");
                }
            }
        }

        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(|e| Error::Config(format!("{}: {e}", journal_path.display())))?;
        let snapshot_every = state.setup.config.service.snapshot_every.unwrap_or(500).max(1);
        state.journal = Some(Mutex::new(Journal {
            dir,
            file,
            seq,
            snapshot_every,
        }));
        Ok(Arc::new(state))
    }

    pub fn now(&self) -> Timestamp {
        match self.mode {
            Mode::Virtual => self.clock.lock().now(),
            Mode::Wall => WallClock.now(),
        }
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.changed.subscribe()
    }

    fn session(&self, user_id: &str) -> Result<Arc<Mutex<UserSession>>> {
        self.sessions
            .get(user_id)
            .map(|s| Arc::clone(s.value()))
            .ok_or_else(|| Error::NotFound(format!("user `{user_id}`")))
    }

    pub fn user_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.iter().map(|e| e.key().clone()).collect();
        ids.sort();
        ids
    }

    pub fn profile(&self, user_id: &str) -> Result<UserProfile> {
        Ok(self.session(user_id)?.lock().profile.clone())
    }

    pub fn activity(&self, user_id: &str) -> Result<ActivityState> {
        Ok(self.session(user_id)?.lock().activity())
    }

    pub fn dialog(&self, user_id: &str) -> Result<Option<Dialog>> {
        Ok(self.session(user_id)?.lock().notify.dialog.clone())
    }

    pub fn notifications_since(&self, user_id: &str, since_id: u64) -> Result<Vec<Notification>> {
        let session = self.session(user_id)?;
        let s = session.lock();
        Ok(s.log.iter().filter(|n| n.id > since_id).cloned().collect())
    }

    pub fn sensors(&self) -> Arc<SensorSnapshot> {
        Arc::clone(&self.sensors.read())
    }

    /// Applies and journals a command.
    pub fn apply(&self, command: Command) -> Result<Outcome> {
        let (result, seq) = {
            let shared = matches!(
                command,
                Command::CreateUser { .. } | Command::Sensors { .. } | Command::Forecast { .. } | Command::Tick { .. }
            );
            let _w;
            let _r;
            if shared {
                _w = self.order.write();
            } else {
                _r = self.order.read();
            }
            let result = self.execute(&command);
            let seq = match &self.journal {
                Some(j) => Some(j.lock().append(&command)?),
                None => None,
            };
            (result, seq)
        };
        if let (Some(seq), Some(j)) = (seq, &self.journal) {
            let every = j.lock().snapshot_every;
            if seq % every == 0 {
                self.write_snapshot()?;
            }
        }
        if matches!(&result, Ok(o) if produced(o)) {
            self.changed.send_modify(|v| *v += 1);
        }
        result
    }

    /// Writes a consistent snapshot of the whole store.
    pub fn write_snapshot(&self) -> Result<()> {
        let Some(journal) = &self.journal else {
            return Ok(());
        };
        let _w = self.order.write();
        let j = journal.lock();
        let sessions = self
            .sessions
            .iter()
            .map(|e| (e.key().clone(), e.value().lock().clone()))
            .collect();
        let snap = Snapshot {
            seq: j.seq,
            clock: *self.clock.lock(),
            sensors: (**self.sensors.read()).clone(),
            forecasts: (**self.forecasts.read()).clone(),
            sessions,
        };
        let text = serde_json::to_string(&snap).map_err(|e| Error::Config(e.to_string()))?;
        let tmp = j.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, text).map_err(|e| Error::Config(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, j.dir.join(SNAPSHOT_FILE)).map_err(|e| Error::Config(format!("snapshot rename: {e}")))?;
        Ok(())
    }

    fn execute(&self, command: &Command) -> Result<Outcome> {
        let setup = &self.setup;
        match command {
            Command::CreateUser { profile } => {
                if self.sessions.contains_key(&profile.user_id) {
                    return Err(Error::Conflict(format!("user `{}` already exists", profile.user_id)));
                }
                let session = UserSession::new(profile.clone(), &setup.config)?;
                self.sessions
                    .insert(profile.user_id.clone(), Arc::new(Mutex::new(session)));
                Ok(Outcome::Created)
            }
            Command::Location { user_id, point, t } => {
                let session = self.session(user_id)?;
                let sensors = self.sensors();
                let forecasts = Arc::clone(&self.forecasts.read());
                let out = session.lock().on_fix(setup, &sensors, &forecasts, *point, *t)?;
                Ok(Outcome::Notifications(out))
            }
            Command::Excursion { request, t } => {
                let session = self.session(&request.user_id)?;
                let x = session.lock().add_excursion(request, *t)?;
                Ok(Outcome::Excursion(x))
            }
            Command::Sensors { readings } => {
                let mut next = (**self.sensors.read()).clone();
                for r in readings {
                    next.apply(r.clone());
                }
                *self.sensors.write() = Arc::new(next);
                Ok(Outcome::Ingested(readings.len()))
            }
            Command::Forecast { days } => {
                let mut next = (**self.forecasts.read()).clone();
                store_forecast(&mut next, days.clone());
                *self.forecasts.write() = Arc::new(next);
                Ok(Outcome::Ingested(days.len()))
            }
            Command::Tap {
                user_id,
                notification_id,
                t,
            } => {
                let session = self.session(user_id)?;
                let tapped = session.lock().tap(setup, *notification_id, *t)?;
                Ok(Outcome::Popup(tapped.popup))
            }
            Command::Respond {
                user_id,
                notification_id,
                accepted,
                t,
            } => {
                let session = self.session(user_id)?;
                let reply = session.lock().respond(setup, *notification_id, *accepted, *t)?;
                Ok(Outcome::Reply(reply))
            }
            Command::Tick { to_t } => {
                self.clock.lock().advance_to(*to_t)?;
                let forecasts = Arc::clone(&self.forecasts.read());
                let mut out = Vec::new();
                for id in self.user_ids() {
                    let session = self.session(&id)?;
                    out.extend(session.lock().tick(setup, &forecasts, *to_t)?);
                }
                Ok(Outcome::Notifications(out))
            }
        }
    }
}

fn produced(o: &Outcome) -> bool {
    match o {
        Outcome::Notifications(v) => !v.is_empty(),
        Outcome::Popup(_) => true,
        Outcome::Reply(r) => r.is_some(),
        _ => false,
    }
}
