//! Live triage service: ingest and score alerts, serve the review queue,
//! record decisions and outcomes, report live metrics.

mod config;
mod scorer;
mod views;

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use streetrank_core::domain::{parse_ts, validate_alert, Decision, OutcomeCode, RawAlert, RejectReason, ReviewStatus};
use streetrank_core::evaluate::Quadrant;
use streetrank_core::store::{AlertScores, EventLog, EventPayload, StoreError, StoreState, TransitionError};

pub use config::{ConfigError, ServiceConfig, DATA_DIR_ENV, EVENT_LOG_FILE, PORT_ENV};
pub use scorer::{ModelInfo, ModelScorer, Scorer};
pub use views::{entry, live_positive, metrics, queue, BiasSummary, LiveMetrics, QueueEntry, QueuePage, RankKey};

pub const DEFAULT_QUEUE_LIMIT: usize = 50;
pub const MAX_QUEUE_LIMIT: usize = 1000;
pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

/// Shared service state. All writes go through the log's write lock.
pub struct AppState {
    log: RwLock<EventLog>,
    scorer: Option<Arc<dyn Scorer>>,
    info: ModelInfo,
    plot_data: Option<PathBuf>,
}

impl AppState {
    /// `threshold_override` replaces the scorer's calibrated auto-referral cut.
    pub fn new(log: EventLog, scorer: Option<Arc<dyn Scorer>>, threshold_override: Option<f64>) -> Self {
        let mut info = scorer.as_ref().map(|s| s.info()).unwrap_or_default();
        if threshold_override.is_some() {
            info.auto_referral_threshold = threshold_override;
        }
        Self { log: RwLock::new(log), scorer, info, plot_data: None }
    }

    pub fn with_plot_data(mut self, path: PathBuf) -> Self {
        self.plot_data = Some(path);
        self
    }

    pub fn info(&self) -> &ModelInfo {
        &self.info
    }

    /// Copy of the current review state.
    pub fn snapshot(&self) -> StoreState {
        self.log.read().expect("log lock").state().clone()
    }

    pub fn with_log<R>(&self, f: impl FnOnce(&EventLog) -> R) -> R {
        f(&self.log.read().expect("log lock"))
    }

    /// Rebuilds the scorer's history from the current state.
    pub fn refresh(&self) -> Result<(), String> {
        match &self.scorer {
            Some(s) => s.refresh(&self.snapshot()),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: msg.into(), reason: None } }
    }

    fn bad_request(msg: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, msg)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::Transition(TransitionError::UnknownAlert(_)) => StatusCode::NOT_FOUND,
            StoreError::Transition(TransitionError::ResolvedBeforeCreated { .. }) | StoreError::Schema(_) => {
                StatusCode::BAD_REQUEST
            }
            StoreError::Transition(_) => StatusCode::CONFLICT,
            StoreError::Full(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn idempotency_key(headers: &HeaderMap) -> Result<Option<String>, ApiError> {
    headers
        .get(IDEMPOTENCY_HEADER)
        .map(|v| v.to_str().map(str::to_string).map_err(|_| ApiError::bad_request("idempotency key is not text")))
        .transpose()
}

/// Alert as posted: coordinates as numbers, everything else as text.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NewAlert {
    pub id: String,
    pub created_at: String,
    pub time_seen: Option<String>,
    pub platform: String,
    pub latitude: f64,
    pub longitude: f64,
    pub lsp_id: String,
    pub gender: String,
    pub age_band: String,
    pub location_text: Option<String>,
    pub appearance_text: Option<String>,
    pub concerns_text: Option<String>,
}

impl From<&NewAlert> for RawAlert {
    fn from(a: &NewAlert) -> Self {
        RawAlert {
            id: a.id.clone(),
            created_at: a.created_at.clone(),
            time_seen: a.time_seen.clone().unwrap_or_default(),
            platform: a.platform.clone(),
            latitude: a.latitude.to_string(),
            longitude: a.longitude.to_string(),
            lsp_id: a.lsp_id.clone(),
            gender: a.gender.clone(),
            age_band: a.age_band.clone(),
            location_text: a.location_text.clone().unwrap_or_default(),
            appearance_text: a.appearance_text.clone().unwrap_or_default(),
            concerns_text: a.concerns_text.clone().unwrap_or_default(),
        }
    }
}

impl From<&streetrank_core::domain::Alert> for NewAlert {
    fn from(a: &streetrank_core::domain::Alert) -> Self {
        let raw = RawAlert::from(a);
        NewAlert {
            id: raw.id,
            created_at: raw.created_at,
            time_seen: a.time_seen.map(|_| raw.time_seen),
            platform: raw.platform,
            latitude: a.latitude,
            longitude: a.longitude,
            lsp_id: raw.lsp_id,
            gender: raw.gender,
            age_band: raw.age_band,
            location_text: a.location_text.clone(),
            appearance_text: a.appearance_text.clone(),
            concerns_text: a.concerns_text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ingested {
    pub id: String,
    pub po_score: f64,
    pub ref_score: f64,
    pub auto_referral: bool,
    pub duplicate: bool,
    pub quadrant: Option<Quadrant>,
    pub status: ReviewStatus,
}

fn ingested(e: &QueueEntry) -> Ingested {
    Ingested {
        id: e.alert.id.clone(),
        po_score: e.po_score.unwrap_or(0.0),
        ref_score: e.ref_score.unwrap_or(0.0),
        auto_referral: e.auto_referral,
        duplicate: e.duplicate,
        quadrant: e.quadrant,
        status: e.status,
    }
}

async fn post_alert(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    payload: Result<Json<NewAlert>, JsonRejection>,
) -> Result<(StatusCode, Json<Ingested>), ApiError> {
    let new = body(payload)?;
    let key = idempotency_key(&headers)?;
    let alert = validate_alert(&RawAlert::from(&new)).map_err(|r| ApiError {
        status: StatusCode::BAD_REQUEST,
        body: ErrorBody { error: r.to_string(), reason: Some(r.reason) },
    })?;
    let existing = |app: &AppState| app.with_log(|l| l.state().get(&alert.id).map(|s| entry(s, &app.info)));
    if let Some(k) = &key {
        if app.with_log(|l| l.state().seq_for_key(k).is_some()) {
            let e = existing(&app).ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "idempotency key reused"))?;
            return Ok((StatusCode::CREATED, Json(ingested(&e))));
        }
    }
    if existing(&app).is_some() {
        return Err(TransitionError::DuplicateAlert(alert.id.clone()).into_api());
    }
    let scorer =
        app.scorer.clone().ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no active model loaded"))?;
    let to_score = alert.clone();
    let scores = tokio::task::spawn_blocking(move || scorer.score(&to_score))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, format!("scoring failed: {e}")))?;
    let auto = app.info.auto_referral_threshold.is_some_and(|t| scores.po_score >= t);
    let payload = EventPayload::AlertCreated {
        alert: alert.clone(),
        scores: Some(AlertScores {
            po_score: scores.po_score,
            ref_score: scores.ref_score,
            auto_referral: auto,
            duplicate: scores.duplicate,
        }),
    };
    let e = {
        let mut log = app.log.write().expect("log lock");
        log.append_keyed(payload, key.as_deref())?;
        entry(log.state().get(&alert.id).expect("just appended"), &app.info)
    };
    Ok((StatusCode::CREATED, Json(ingested(&e))))
}

trait IntoApi {
    fn into_api(self) -> ApiError;
}

impl IntoApi for TransitionError {
    fn into_api(self) -> ApiError {
        StoreError::Transition(self).into()
    }
}

#[derive(Debug, Deserialize)]
struct QueueParams {
    limit: Option<usize>,
    cursor: Option<String>,
}

async fn get_queue(
    State(app): State<Arc<AppState>>,
    Query(p): Query<QueueParams>,
) -> Result<Json<QueuePage>, ApiError> {
    let limit = p.limit.unwrap_or(DEFAULT_QUEUE_LIMIT).min(MAX_QUEUE_LIMIT);
    let after = match &p.cursor {
        Some(c) => Some(RankKey::decode(c).ok_or_else(|| ApiError::bad_request("malformed cursor"))?),
        None => None,
    };
    Ok(Json(app.with_log(|l| queue(l.state(), &app.info, limit, after.as_ref()))))
}

async fn get_alert(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<QueueEntry>, ApiError> {
    app.with_log(|l| l.state().get(&id).map(|s| entry(s, &app.info)))
        .map(Json)
        .ok_or_else(|| TransitionError::UnknownAlert(id).into_api())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionBody {
    pub decision: Decision,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeBody {
    pub outcome_code: String,
    /// Defaults to now.
    #[serde(default)]
    pub resolved_at: Option<String>,
}

fn record(app: &AppState, id: &str, payload: EventPayload, key: Option<&str>) -> Result<Json<QueueEntry>, ApiError> {
    let mut log = app.log.write().expect("log lock");
    log.append_keyed(payload, key)?;
    let s = log.state().get(id).ok_or_else(|| TransitionError::UnknownAlert(id.to_string()).into_api())?;
    Ok(Json(entry(s, &app.info)))
}

async fn post_decision(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    payload: Result<Json<DecisionBody>, JsonRejection>,
) -> Result<Json<QueueEntry>, ApiError> {
    let b = body(payload)?;
    let key = idempotency_key(&headers)?;
    record(
        &app,
        &id,
        EventPayload::DecisionRecorded { alert_id: id.clone(), decision: b.decision, note: b.note },
        key.as_deref(),
    )
}

async fn post_outcome(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    payload: Result<Json<OutcomeBody>, JsonRejection>,
) -> Result<Json<QueueEntry>, ApiError> {
    let b = body(payload)?;
    let key = idempotency_key(&headers)?;
    let outcome_code: OutcomeCode = b.outcome_code.parse().map_err(|e| ApiError::bad_request(format!("{e}")))?;
    let resolved_at: DateTime<Utc> = match &b.resolved_at {
        Some(t) => parse_ts(t).ok_or_else(|| ApiError::bad_request(format!("unparseable timestamp `{t}`")))?,
        None => Utc::now(),
    };
    record(&app, &id, EventPayload::OutcomeRecorded { alert_id: id.clone(), outcome_code, resolved_at }, key.as_deref())
}

async fn get_metrics(State(app): State<Arc<AppState>>) -> Json<LiveMetrics> {
    Json(app.with_log(|l| metrics(l.state(), &app.info)))
}

async fn get_plot_data(State(app): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let path = app.plot_data.as_ref().ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no plot data configured"))?;
    let text = tokio::fs::read_to_string(path)
        .await
        .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, format!("plot data unavailable: {e}")))?;
    Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], text).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    pub po_model: Option<String>,
    pub auto_referral_threshold: Option<f64>,
    pub alerts: usize,
    pub head: u64,
}

async fn healthz(State(app): State<Arc<AppState>>) -> Json<Health> {
    let (alerts, head) = app.with_log(|l| (l.state().len(), l.head()));
    Json(Health {
        status: "ok".into(),
        model_loaded: app.scorer.is_some(),
        po_model: app.info.po_model.clone(),
        // JSON has no infinity; a disabled threshold reads as absent
        auto_referral_threshold: app.info.auto_referral_threshold.filter(|t| t.is_finite()),
        alerts,
        head,
    })
}

pub fn router(app: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let r = Router::new()
        .route("/healthz", get(healthz))
        .route("/alerts", post(post_alert))
        .route("/alerts/{id}", get(get_alert))
        .route("/alerts/{id}/decision", post(post_decision))
        .route("/alerts/{id}/outcome", post(post_outcome))
        .route("/queue", get(get_queue))
        .route("/metrics", get(get_metrics))
        .route("/plot-data", get(get_plot_data))
        .with_state(app);
    match static_dir {
        Some(dir) => r.nest_service("/ui", tower_http::services::ServeDir::new(dir)),
        None => r,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Builds the state for `cfg`: replays the event log and loads the evaluated models.
/// A missing model leaves the service up but unable to ingest (503).
pub fn build_state(cfg: &ServiceConfig) -> Result<Arc<AppState>, ServeError> {
    std::fs::create_dir_all(&cfg.data_dir)?;
    let log = EventLog::open(&cfg.event_log())?;
    tracing::info!(events = log.head(), path = %cfg.event_log().display(), "event log replayed");
    let scorer: Option<Arc<dyn Scorer>> = match ModelScorer::load(&cfg.experiment) {
        Ok(s) => Some(Arc::new(s)),
        Err(e) => {
            tracing::warn!(error = %e, "no active model; ingestion will return 503");
            None
        }
    };
    let plot = streetrank_core::pipeline::Layout::new(&cfg.experiment.out_dir).reports().join("plot_data.json");
    let app = AppState::new(log, scorer, cfg.threshold_override).with_plot_data(plot);
    if let Err(e) = app.refresh() {
        tracing::warn!(error = %e, "history refresh failed");
    }
    Ok(Arc::new(app))
}

/// Serves until ctrl-c, refreshing the scoring history every `cfg.refresh`.
pub async fn serve(cfg: ServiceConfig) -> Result<(), ServeError> {
    let app = build_state(&cfg)?;
    let refresher = app.clone();
    let every = cfg.refresh;
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        tick.tick().await;
        loop {
            tick.tick().await;
            let a = refresher.clone();
            match tokio::task::spawn_blocking(move || a.refresh()).await {
                Ok(Err(e)) => tracing::warn!(error = %e, "history refresh failed"),
                Err(e) => tracing::warn!(error = %e, "history refresh panicked"),
                Ok(Ok(())) => {}
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", cfg.port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(app, cfg.static_dir.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
