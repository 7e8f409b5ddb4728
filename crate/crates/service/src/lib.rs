//! HTTP API for conducting a dose-finding trial one cohort at a time.
//!
//! Endpoints:
//!
//! * `POST /trials` creates a trial ([`api::CreateTrialRequest`]).
//! * `GET /trials/{id}` returns its state ([`api::TrialView`]).
//! * `POST /trials/{id}/cohorts` records a cohort and returns the decision.
//!   An `Idempotency-Key` header makes retries safe.
//! * `POST /trials/{id}/whatif` returns the decision a cohort would produce
//!   without storing anything.
//! * `GET /trials/{id}/posterior` summarizes the current posterior per dose.
//! * `GET /scenarios/builtin` lists the built-in simulation scenarios.

pub mod api;
pub mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use biodose_core::escalation::{target_probabilities, Decision, TrialState};
use biodose_core::inference::{overdose_probabilities, sample_posterior, McmcConfig};
use biodose_core::model::{bio_response_prob, eff_response_prob, tox_prob};
use biodose_core::sim::builtin_scenarios;
use biodose_core::DoseGrid;
use serde::de::DeserializeOwned;
use serde_json::json;

use api::*;
use store::{CohortEntry, Snapshot, TrialLog, TrialSetup};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// MCMC settings for trials created without their own.
    pub default_mcmc: McmcConfig,
    /// Upper bound on one posterior fit before the request fails.
    pub fit_timeout: Duration,
    /// When set, every request must carry `Authorization: Bearer <token>`.
    pub token: Option<String>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            default_mcmc: McmcConfig::default(),
            fit_timeout: Duration::from_secs(60),
            token: None,
        }
    }
}

struct Trial {
    // Held for the whole of a submission so steps on one trial are serialized.
    write: tokio::sync::Mutex<()>,
    committed: RwLock<Arc<Snapshot>>,
}

impl Trial {
    fn new(s: Snapshot) -> Self {
        Self {
            write: tokio::sync::Mutex::new(()),
            committed: RwLock::new(Arc::new(s)),
        }
    }

    fn snapshot(&self) -> Arc<Snapshot> {
        self.committed.read().expect("snapshot lock").clone()
    }
}

pub struct AppState {
    cfg: ServiceConfig,
    log: TrialLog,
    trials: RwLock<HashMap<String, Arc<Trial>>>,
}

impl AppState {
    /// Open the data directory and replay every stored trial, verifying that
    /// each logged decision is reproduced exactly.
    pub fn open(cfg: ServiceConfig) -> anyhow::Result<Arc<Self>> {
        let log = TrialLog::open(&cfg.data_dir)?;
        let trials = log
            .load_all()?
            .into_iter()
            .map(|s| (s.id.clone(), Arc::new(Trial::new(s))))
            .collect();
        Ok(Arc::new(Self {
            cfg,
            log,
            trials: RwLock::new(trials),
        }))
    }

    pub fn trial_count(&self) -> usize {
        self.trials.read().expect("trial map").len()
    }

    fn trial(&self, id: &str) -> Result<Arc<Trial>, ApiError> {
        self.trials
            .read()
            .expect("trial map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/trials", post(create_trial))
        .route("/trials/{id}", get(get_trial))
        .route("/trials/{id}/cohorts", post(submit_cohort))
        .route("/trials/{id}/whatif", post(whatif_cohort))
        .route("/trials/{id}/posterior", get(get_posterior))
        .route("/scenarios/builtin", get(list_scenarios))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no trial with id {id}"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl From<biodose_core::Error> for ApiError {
    fn from(e: biodose_core::Error) -> Self {
        use biodose_core::Error as E;
        let message = e.to_string();
        match e {
            E::Config { field, .. } => Self {
                field: Some(field),
                ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", message)
            },
            E::Domain(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "domain_error", message),
            E::Protocol(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "protocol_error", message),
            E::Lifecycle(_) => Self::new(StatusCode::CONFLICT, "lifecycle_error", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(f) = self.field {
            body["field"] = f.into();
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn require_token(State(app): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.cfg.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or wrong bearer token",
            )
            .into_response();
        }
    }
    next.run(req).await
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let body: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Run a posterior fit off the async runtime, bounded by the fit timeout.
async fn blocking<T: Send + 'static>(
    app: &AppState,
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    match tokio::time::timeout(app.cfg.fit_timeout, tokio::task::spawn_blocking(f)).await {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => Err(ApiError::internal(e)),
        Err(_) => Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "timeout",
            format!("posterior fit exceeded {:?}", app.cfg.fit_timeout),
        )),
    }
}

async fn create_trial(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<CreatedTrial>)> {
    let req: CreateTrialRequest = parse_body(&body)?;
    let grid = match req.doses {
        None if req.reference_dose.is_none() && !req.standardize => DoseGrid::default_nine_dose(),
        doses => {
            let doses = doses.unwrap_or_else(|| DoseGrid::default_nine_dose().raw_doses().to_vec());
            let reference = match req.reference_dose {
                Some(r) => r,
                None => doses.iter().copied().fold(f64::NAN, f64::max),
            };
            DoseGrid::with_options(doses, reference, req.standardize)?
        }
    };
    let setup = TrialSetup {
        grid,
        design: req.design,
        prior: req.prior,
        mcmc: req.mcmc.unwrap_or(app.cfg.default_mcmc),
    };
    setup.design.validate().map_err(|e| prefix_field(e, "design"))?;
    setup
        .prior
        .validate(setup.design.model)
        .map_err(|e| prefix_field(e, "prior"))?;
    setup.mcmc.validate()?;

    let id = uuid::Uuid::new_v4().simple().to_string();
    let at = now_ms();
    app.log.create(&id, at, &setup).map_err(ApiError::internal)?;
    let snap = Snapshot::new(id.clone(), setup, at);
    let trial = TrialView::new(&snap);
    app.trials
        .write()
        .expect("trial map")
        .insert(id.clone(), Arc::new(Trial::new(snap)));
    Ok((StatusCode::CREATED, Json(CreatedTrial { id, trial })))
}

// Core validation names fields relative to their own struct.
fn prefix_field(e: biodose_core::Error, prefix: &str) -> biodose_core::Error {
    match e {
        biodose_core::Error::Config { field, reason } if !field.starts_with(prefix) => biodose_core::Error::Config {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => other,
    }
}

async fn get_trial(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<TrialView>> {
    Ok(Json(TrialView::new(&app.trial(&id)?.snapshot())))
}

async fn submit_cohort(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let req: CohortRequest = parse_body(&body)?;
    let key = match headers.get("idempotency-key") {
        Some(v) => Some(
            v.to_str()
                .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "Idempotency-Key is not ASCII"))?
                .to_string(),
        ),
        None => None,
    };
    let trial = app.trial(&id)?;
    let _guard = trial.write.lock().await;
    let snap = trial.snapshot();

    if let Some(k) = &key {
        if let Some(prev) = snap.cohorts.iter().find(|c| c.idempotency_key.as_deref() == Some(k)) {
            let records = req.records(prev.outcomes.first().map_or(0, |r| r.dose_level))?;
            if records != prev.outcomes {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "idempotency_conflict",
                    "Idempotency-Key was already used with a different payload",
                ));
            }
            let mut resp = Json(DecisionView::new(&prev.decision, false)).into_response();
            resp.headers_mut()
                .insert("idempotent-replay", "true".parse().expect("static header"));
            return Ok(resp);
        }
    }

    let records = req.records(snap.state.current_dose)?;
    let (decision, state) = run_step(&app, snap.clone(), records.clone()).await?;
    let entry = CohortEntry {
        at_ms: now_ms(),
        idempotency_key: key,
        outcomes: records,
        decision: decision.clone(),
    };
    app.log.append(&id, &entry).map_err(ApiError::internal)?;
    *trial.committed.write().expect("snapshot lock") = Arc::new(snap.with_cohort(state, entry));
    Ok(Json(DecisionView::new(&decision, false)).into_response())
}

async fn run_step(
    app: &AppState,
    snap: Arc<Snapshot>,
    records: Vec<biodose_core::OutcomeRecord>,
) -> ApiResult<(Decision, TrialState)> {
    blocking(app, move || snap.step(&records).map_err(ApiError::from)).await
}

async fn whatif_cohort(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<DecisionView>> {
    let req: CohortRequest = parse_body(&body)?;
    let snap = app.trial(&id)?.snapshot();
    let records = req.records(snap.state.current_dose)?;
    let (decision, _) = run_step(&app, snap, records).await?;
    Ok(Json(DecisionView::new(&decision, true)))
}

async fn get_posterior(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let snap = app.trial(&id)?.snapshot();
    if let Some(p) = snap.posterior.get() {
        return Ok(Json(&**p).into_response());
    }
    let s = snap.clone();
    let summary = blocking(&app, move || posterior_summary(&s).map_err(ApiError::from)).await?;
    Ok(Json(&**snap.posterior.get_or_init(|| Arc::new(summary))).into_response())
}

/// Per-dose posterior summary. Uses the seed of the latest decision so the
/// overdose risks and target probabilities match it exactly; before any data
/// this is a summary of the prior.
pub fn posterior_summary(snap: &Snapshot) -> biodose_core::Result<PosteriorSummary> {
    let setup = &snap.setup;
    let design = &setup.design;
    let seed = snap.cohorts.last().map_or(setup.mcmc.seed, |c| c.decision.mcmc_seed);
    let grid = &snap.state.grid;
    let draws = sample_posterior(
        &snap.state.records,
        grid,
        &setup.prior,
        &setup.mcmc.with_seed(seed),
        design.model,
    )?;
    let risks = overdose_probabilities(&draws, grid.covariates(), design.tox_rule.upper());
    let targets = target_probabilities(&draws, grid, design);
    let mut doses = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let d = grid.covariate(j);
        let mut tox: Vec<f64> = draws.draws().iter().map(|p| tox_prob(p, d)).collect();
        let eff = design.model.has_efficacy().then(|| {
            let mut v: Vec<f64> = draws.draws().iter().map(|p| eff_response_prob(p, d)).collect();
            Band::from_sample(&mut v)
        });
        let bio = if design.model.has_biomarker() {
            let mut v = draws
                .draws()
                .iter()
                .map(|p| bio_response_prob(p, d))
                .collect::<biodose_core::Result<Vec<f64>>>()?;
            Some(Band::from_sample(&mut v))
        } else {
            None
        };
        doses.push(DoseSummary {
            level: j + 1,
            dose: grid.raw_doses()[j],
            tox: Band::from_sample(&mut tox),
            eff,
            bio,
            overdose_risk: risks[j],
            target_probability: targets[j],
        });
    }
    Ok(PosteriorSummary {
        trial_id: snap.id.clone(),
        n_patients: snap.state.records.len(),
        n_draws: draws.len(),
        mcmc_seed: seed,
        tox_rule: design.tox_rule,
        eff_bound: design.eff_bound,
        bio_rule: design.bio_rule,
        overdose_cutoff: design.overdose_cutoff,
        doses,
    })
}

async fn list_scenarios() -> Json<Vec<ScenarioView>> {
    Json(builtin_scenarios().iter().map(ScenarioView::new).collect())
}
