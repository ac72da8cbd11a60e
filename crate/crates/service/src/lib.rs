//! HTTP facade over the notification engine.
//!
//! Bodies are JSON. Every error is `{"error", "field"?, "reason"}` with
//! 400 for malformed input, 404 for unknown ids, 409 for conflicts (clock
//! going backwards, ticks in wall mode, fixes from the future) and 410 for
//! expired dialogs. See `docs/api.md` for the endpoint table.

mod error;
mod state;

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use petwalk_core::engine::Setup;
use petwalk_core::feed::{parse_forecast, parse_sensor_entity, ExcursionRequest};
use petwalk_core::geo::{within_radius, GeoPoint};
use petwalk_core::notify::round_to;
use petwalk_core::profile::{BigFive, Pet, Poi, UserProfile};
use petwalk_core::{Error, Timestamp};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use error::{ApiError, ErrorBody};
pub use state::{AppState, Command, Mode, Outcome, JOURNAL_FILE, SNAPSHOT_FILE};

type ApiResult<T> = Result<T, ApiError>;
pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// Longest accepted long-poll wait.
pub const MAX_WAIT_S: u64 = 60;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        let msg = e.to_string();
        // serde reports `missing field `x`` / `unknown field `x``
        let field = msg.split('`').nth(1).map(str::to_string);
        ApiError::bad_request(field.as_deref(), msg)
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/users", post(create_user))
        .route("/users/{id}", get(get_user))
        .route("/users/{id}/dialog", get(get_dialog))
        .route("/users/{id}/locations", post(post_location))
        .route("/users/{id}/excursions", post(post_excursion))
        .route("/users/{id}/notifications", get(get_notifications))
        .route("/users/{id}/notifications/{nid}/tap", post(post_tap))
        .route("/users/{id}/notifications/{nid}/response", post(post_response))
        .route("/ingest/sensors", post(ingest_sensors))
        .route("/ingest/forecast", post(ingest_forecast))
        .route("/pois", get(get_pois))
        .route("/admin/tick", post(post_tick))
        .with_state(state)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewUser {
    #[serde(default)]
    user_id: Option<String>,
    pet: Pet,
    bigfive: BigFive,
    #[serde(default)]
    preferred_categories: BTreeSet<String>,
    #[serde(default)]
    constraints: BTreeSet<String>,
}

async fn create_user(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: NewUser = parse_body(&body)?;
    let user_id = match req.user_id {
        Some(id) => id,
        None => {
            let taken = state.user_ids();
            (1..)
                .map(|n| format!("user-{n}"))
                .find(|id| !taken.contains(id))
                .expect("unbounded id space")
        }
    };
    let profile = UserProfile {
        user_id: user_id.clone(),
        pet: req.pet,
        bigfive: req.bigfive,
        preferred_categories: req.preferred_categories,
        constraints: req.constraints,
    };
    state.apply(Command::CreateUser { profile })?;
    Ok((StatusCode::CREATED, Json(json!({ "user_id": user_id }))).into_response())
}

async fn get_user(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<UserProfile>> {
    Ok(Json(state.profile(&id)?))
}

async fn get_dialog(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(state.dialog(&id)?).unwrap_or(Value::Null)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LocationBody {
    lat: f64,
    lon: f64,
    #[serde(default)]
    t: Option<Timestamp>,
}

async fn post_location(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: LocationBody = parse_body(&body)?;
    let point = GeoPoint::new(req.lat, req.lon)?;
    let now = state.now();
    let t = match (state.mode, req.t) {
        (Mode::Virtual, Some(t)) if t > now => {
            return Err(ApiError::conflict(format!(
                "fix at {t} is ahead of the virtual clock ({now}); advance it with /admin/tick"
            )))
        }
        (_, Some(t)) => t,
        (_, None) => now,
    };
    let outcome = state.apply(Command::Location {
        user_id: id.clone(),
        point,
        t,
    })?;
    let notifications = match outcome {
        Outcome::Notifications(v) => v,
        _ => Vec::new(),
    };
    let activity = state.activity(&id)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "t": t, "activity": activity, "notifications": notifications })),
    )
        .into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExcursionBody {
    #[serde(default)]
    excursion_id: Option<String>,
    district: String,
    destination: GeoPoint,
    date: NaiveDate,
}

async fn post_excursion(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: ExcursionBody = parse_body(&body)?;
    let request = ExcursionRequest {
        user_id: id,
        excursion_id: req.excursion_id,
        district: req.district,
        lat: req.destination.lat,
        lon: req.destination.lon,
        date: req.date,
    };
    let t = state.now();
    match state.apply(Command::Excursion { request, t })? {
        Outcome::Excursion(x) => Ok((StatusCode::CREATED, Json(x)).into_response()),
        _ => Ok(StatusCode::CREATED.into_response()),
    }
}

#[derive(Deserialize)]
struct SinceQuery {
    #[serde(default)]
    since_id: u64,
    #[serde(default)]
    wait_s: u64,
}

async fn get_notifications(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<SinceQuery>,
) -> ApiResult<Response> {
    let mut rx = state.subscribe();
    let found = state.notifications_since(&id, q.since_id)?;
    if !found.is_empty() || q.wait_s == 0 {
        return Ok(Json(found).into_response());
    }
    let deadline = tokio::time::Instant::now() + Duration::from_secs(q.wait_s.min(MAX_WAIT_S));
    loop {
        match tokio::time::timeout_at(deadline, rx.changed()).await {
            Ok(Ok(())) => {
                let found = state.notifications_since(&id, q.since_id)?;
                if !found.is_empty() {
                    return Ok(Json(found).into_response());
                }
            }
            _ => return Ok(Json(Vec::<Value>::new()).into_response()),
        }
    }
}

async fn post_tap(
    State(state): State<Arc<AppState>>,
    Path((id, nid)): Path<(String, u64)>,
) -> ApiResult<Response> {
    let t = state.now();
    match state.apply(Command::Tap {
        user_id: id,
        notification_id: nid,
        t,
    })? {
        Outcome::Popup(p) => Ok(Json(p).into_response()),
        _ => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseBody {
    accepted: bool,
}

async fn post_response(
    State(state): State<Arc<AppState>>,
    Path((id, nid)): Path<(String, u64)>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: ResponseBody = parse_body(&body)?;
    let t = state.now();
    match state.apply(Command::Respond {
        user_id: id,
        notification_id: nid,
        accepted: req.accepted,
        t,
    })? {
        Outcome::Reply(Some(n)) => Ok(Json(n).into_response()),
        _ => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

#[derive(Serialize)]
struct EntityError {
    index: usize,
    #[serde(flatten)]
    error: ErrorBody,
}

async fn ingest_sensors(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let doc: Value = parse_body(&body)?;
    let entities = match doc {
        Value::Array(items) => items,
        single @ Value::Object(_) => vec![single],
        _ => return Err(ApiError::bad_request(None, "expected an entity or an array of entities")),
    };
    let mut readings = Vec::new();
    let mut errors = Vec::new();
    for (index, entity) in entities.iter().enumerate() {
        match parse_sensor_entity(entity) {
            Ok(r) => readings.push(r),
            Err(e) => errors.push(EntityError {
                index,
                error: ApiError::from(e).body,
            }),
        }
    }
    let accepted = readings.len();
    if !readings.is_empty() {
        state.apply(Command::Sensors { readings })?;
    }
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "accepted": accepted, "errors": errors })),
    )
        .into_response())
}

async fn ingest_forecast(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let doc: Value = parse_body(&body)?;
    let days = parse_forecast(&doc, &state.setup.config.feed)?;
    let n = days.len();
    state.apply(Command::Forecast { days })?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "records": n }))).into_response())
}

#[derive(Deserialize)]
struct PoiQuery {
    near: Option<String>,
    radius_m: Option<f64>,
}

#[derive(Serialize)]
struct PoiHit<'a> {
    #[serde(flatten)]
    poi: &'a Poi,
    distance_m: f64,
}

async fn get_pois(State(state): State<Arc<AppState>>, Query(q): Query<PoiQuery>) -> ApiResult<Response> {
    let catalog = &state.setup.catalog;
    let Some(near) = q.near else {
        return Ok(Json(catalog).into_response());
    };
    let coords: Vec<f64> = near
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| ApiError::bad_request(Some("near"), e.to_string()))?;
    let [lat, lon] = coords[..] else {
        return Err(ApiError::bad_request(Some("near"), "expected `lat,lon`"));
    };
    let point = GeoPoint::new(lat, lon)?;
    let radius_m = q.radius_m.unwrap_or(state.setup.config.notify.radius_poi_m);
    let hits = within_radius(point, catalog, radius_m, |_| true)?;
    let out: Vec<PoiHit<'_>> = hits
        .into_iter()
        .map(|h| PoiHit {
            poi: h.item,
            distance_m: round_to(h.distance_km * 1000.0, 1),
        })
        .collect();
    Ok(Json(out).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TickBody {
    to_t: Timestamp,
}

async fn post_tick(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    if state.mode == Mode::Wall {
        return Err(ApiError::conflict("the clock cannot be ticked in wall mode"));
    }
    let req: TickBody = parse_body(&body)?;
    let notifications = match state.apply(Command::Tick { to_t: req.to_t })? {
        Outcome::Notifications(v) => v,
        _ => Vec::new(),
    };
    Ok(Json(json!({ "now": state.now(), "notifications": notifications })).into_response())
}

/// Everything `serve` needs.
#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub bind: SocketAddr,
    pub mode: Mode,
    pub data_dir: Option<PathBuf>,
}

pub fn build_state(setup: Arc<Setup>, mode: Mode, data_dir: Option<&std::path::Path>) -> Result<Arc<AppState>, Error> {
    match data_dir {
        Some(dir) => AppState::open(setup, mode, dir),
        None => Ok(AppState::new(setup, mode)),
    }
}

/// Runs the service until Ctrl-C. In wall mode a background task fires due
/// forecast polls every 30 seconds.
pub async fn serve(setup: Arc<Setup>, options: ServeOptions) -> Result<(), BoxError> {
    let state = build_state(setup, options.mode, options.data_dir.as_deref())?;
    if options.mode == Mode::Wall {
        let ticker = Arc::clone(&state);
        tokio::spawn(async move {
            let mut every = tokio::time::interval(Duration::from_secs(30));
            loop {
                every.tick().await;
                let now = ticker.now();
                if let Err(e) = ticker.apply(Command::Tick { to_t: now }) {
                    tracing::warn!(error = %e, "wall-clock tick failed");
                }
            }
        });
    }
    let listener = tokio::net::TcpListener::bind(options.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, mode = ?options.mode, "listening");
    axum::serve(listener, router(Arc::clone(&state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    state.write_snapshot()?;
    Ok(())
}
