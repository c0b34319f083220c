//! HTTP adapter over the journal. Handlers never touch study state except
//! through [`Journal::append`], so the log stays the single source of truth.

use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use crowdfit_core::analytics::{dishonesty_scan, participation_matrix, power_ranking};
use crowdfit_core::flow::next_questions;
use crowdfit_core::moderation::{list_pending, Verdict};
use crowdfit_core::outcome::{aggregate_energy_outcome, compute_bmi};
use crowdfit_core::{
    Action, AnswerKind, Bounds, Error as CoreError, ModelArtifact, ParticipantId, PeriodValue,
    QuestionDraft, QuestionId, RejectionCode, StudyConfig, Timestamp,
};
use parking_lot::RwLock;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::journal::{Journal, JournalError};

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        let ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        Timestamp(ms as u64)
    })
}

/// Shared state of a running study service.
pub struct Service {
    journal: RwLock<Journal>,
    admin_digest: Option<String>,
    engine: std::sync::Mutex<()>,
    period_override: Option<u64>,
    clock: Clock,
}

pub type AppState = Arc<Service>;

pub fn token_digest(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

impl Service {
    /// `admin_token = None` disables every admin endpoint.
    pub fn new(
        journal: Journal,
        admin_token: Option<&str>,
        period_override: Option<u64>,
        clock: Clock,
    ) -> AppState {
        Arc::new(Service {
            journal: RwLock::new(journal),
            admin_digest: admin_token.map(token_digest),
            engine: std::sync::Mutex::new(()),
            period_override,
            clock,
        })
    }

    pub fn now(&self) -> Timestamp {
        (self.clock)()
    }

    /// Current engine period; reflects config changes immediately.
    pub fn engine_period(&self) -> Duration {
        let secs = self
            .period_override
            .unwrap_or_else(|| self.journal.read().study().config().engine_period_secs);
        Duration::from_secs(secs.max(1))
    }

    /// Read access to the journal (and through it the study).
    pub fn read<R>(&self, f: impl FnOnce(&Journal) -> R) -> R {
        f(&self.journal.read())
    }

    fn append(&self, action: Action) -> Result<crowdfit_core::Event, ApiError> {
        let now = self.now();
        Ok(self.journal.write().append(action, now)?)
    }

    /// One engine run. The fit happens under a read lock so readers and
    /// writers are not blocked; it is redone under the write lock only if
    /// the log moved on meanwhile. Returns `None` when a run is already in
    /// progress or there is nothing to model yet.
    pub fn run_cycle(&self) -> Result<Option<Arc<ModelArtifact>>, JournalError> {
        let Ok(_running) = self.engine.try_lock() else {
            tracing::debug!("engine run already in progress; skipping");
            return Ok(None);
        };
        let now = self.now();
        let (seq, built) = {
            let j = self.journal.read();
            (
                j.study().last_seq(),
                j.study().build_artifact(j.next_at(now)),
            )
        };
        let mut j = self.journal.write();
        let artifact = match built {
            Ok(a) if j.study().last_seq() == seq => a,
            Ok(_) => j.study().build_artifact(j.next_at(now))?,
            Err(CoreError::EmptyDesign) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        j.append_run(artifact, now)?;
        let published = j.study().current_artifact().cloned();
        if let Some(a) = &published {
            tracing::info!(
                built_at = a.built_at.0,
                n = a.n,
                k = a.k,
                model_r2 = a.model_r2,
                "published model"
            );
        }
        Ok(published)
    }
}

/// Fires [`Service::run_cycle`] every engine period until the task is dropped.
pub async fn run_scheduler(svc: AppState) {
    loop {
        tokio::time::sleep(svc.engine_period()).await;
        let s = svc.clone();
        match tokio::task::spawn_blocking(move || s.run_cycle()).await {
            Ok(Ok(_)) => {}
            Ok(Err(e)) => tracing::error!("engine run failed: {e}"),
            Err(e) => tracing::error!("engine task panicked: {e}"),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    rejected_response: bool,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
            rejected_response: false,
        }
    }

    fn unauthorized() -> Self {
        ApiError::new(
            StatusCode::UNAUTHORIZED,
            "Unauthorized",
            "missing or unknown bearer token",
        )
    }

    fn into_rejected_response(mut self) -> Self {
        self.rejected_response = true;
        self
    }
}

fn variant_name(e: &CoreError) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or("Error")
        .to_string()
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match e {
            CoreError::UnknownParticipant(_) | CoreError::UnknownQuestion(_) => {
                StatusCode::NOT_FOUND
            }
            CoreError::ParticipantWithdrawn(_) => StatusCode::GONE,
            CoreError::AlreadyReviewed(_)
            | CoreError::DuplicateCredential
            | CoreError::ImmutableConfig => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, &variant_name(&e), e.to_string())
    }
}

impl From<JournalError> for ApiError {
    fn from(e: JournalError) -> Self {
        match e {
            JournalError::Validation(inner) => inner.into(),
            other => {
                tracing::error!("storage: {other}");
                ApiError::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "StorageFailure",
                    other.to_string(),
                )
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if self.rejected_response {
            body["accepted"] = json!(false);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bearer(parts: &Parts) -> Option<&str> {
    parts
        .headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

/// The participant a request's bearer token belongs to.
pub struct Me(pub ParticipantId);

impl FromRequestParts<AppState> for Me {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        svc: &AppState,
    ) -> Result<Self, Self::Rejection> {
        let token = bearer(parts).ok_or_else(ApiError::unauthorized)?;
        let digest = token_digest(token);
        svc.read(|j| j.study().store().participant_by_credential(&digest))
            .map(Me)
            .ok_or_else(ApiError::unauthorized)
    }
}

/// Marker for requests carrying the admin token.
pub struct Admin;

impl FromRequestParts<AppState> for Admin {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        svc: &AppState,
    ) -> Result<Self, Self::Rejection> {
        let Some(expected) = &svc.admin_digest else {
            return Err(ApiError::new(
                StatusCode::FORBIDDEN,
                "AdminDisabled",
                "no admin token is configured",
            ));
        };
        match bearer(parts) {
            Some(t) if token_digest(t) == *expected => Ok(Admin),
            _ => Err(ApiError::new(
                StatusCode::FORBIDDEN,
                "Forbidden",
                "admin token required",
            )),
        }
    }
}

pub fn router(svc: AppState) -> Router {
    Router::new()
        .route("/api/study", get(study_info))
        .route("/api/participants", post(register))
        .route("/api/me", axum::routing::delete(withdraw))
        .route("/api/me/outcome", put(set_outcome))
        .route("/api/me/next-questions", get(next))
        .route("/api/me/responses", post(respond))
        .route("/api/me/questions", post(propose))
        .route("/api/me/summary", get(summary))
        .route("/api/admin/moderation", get(pending))
        .route("/api/admin/moderation/{id}", post(review))
        .route("/api/admin/analytics/{name}", get(analytics))
        .route("/api/admin/config", get(get_config).put(put_config))
        .route("/api/admin/questions/{id}/bounds", put(put_bounds))
        .route("/api/admin/engine/run", post(engine_run))
        .route("/api/admin/design.csv", get(design_csv))
        .with_state(svc)
}

async fn study_info(State(svc): State<AppState>) -> Json<serde_json::Value> {
    svc.read(|j| {
        let c = j.study().config();
        let art = j.study().current_artifact();
        Json(json!({
            "study_id": c.study_id,
            "outcome_label": c.outcome_label,
            "outcome_unit": c.outcome_unit,
            "outcome_min": c.outcome_min,
            "outcome_max": c.outcome_max,
            "model_built_at": art.map(|a| a.built_at),
        }))
    })
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RegisterBody {
    #[serde(default)]
    outcome: Option<f64>,
}

#[derive(Serialize)]
struct Registered {
    participant_id: ParticipantId,
    token: String,
}

async fn register(
    State(svc): State<AppState>,
    body: Option<Json<RegisterBody>>,
) -> ApiResult<(StatusCode, Json<Registered>)> {
    let outcome = body.map(|b| b.0.outcome).unwrap_or_default();
    let mut raw = [0u8; 32];
    rand::rng().fill_bytes(&mut raw);
    let token = hex::encode(raw);
    let now = svc.now();
    let mut j = svc.journal.write();
    let participant_id = j.study().store().next_participant_id();
    let action = Action::ParticipantRegistered {
        participant_id,
        outcome,
        credential: Some(token_digest(&token)),
    };
    j.append(action, now)?;
    Ok((
        StatusCode::CREATED,
        Json(Registered {
            participant_id,
            token,
        }),
    ))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OutcomeBody {
    Bmi {
        height_ft: u32,
        height_in: f64,
        weight_lb: f64,
    },
    Series {
        series: Vec<PeriodValue>,
        periods: Vec<String>,
    },
    Value {
        value: f64,
    },
}

async fn set_outcome(
    State(svc): State<AppState>,
    Me(me): Me,
    Json(body): Json<OutcomeBody>,
) -> ApiResult<Json<serde_json::Value>> {
    let (outcome, series) = match body {
        OutcomeBody::Value { value } => (value, None),
        OutcomeBody::Bmi {
            height_ft,
            height_in,
            weight_lb,
        } => (compute_bmi(height_ft, height_in, weight_lb)?, None),
        OutcomeBody::Series { series, periods } => {
            (aggregate_energy_outcome(&series, &periods)?, Some(series))
        }
    };
    svc.append(Action::OutcomeSet {
        participant_id: me,
        outcome,
        series,
    })?;
    let predicted = svc.read(|j| j.study().predicted_outcome(me))?;
    Ok(Json(
        json!({ "participant_id": me, "actual_outcome": outcome, "predicted_outcome": predicted }),
    ))
}

#[derive(Serialize)]
struct QuestionView {
    question_id: QuestionId,
    text: String,
    kind: AnswerKind,
    #[serde(skip_serializing_if = "Bounds::is_empty")]
    bounds: Bounds,
}

async fn next(State(svc): State<AppState>, Me(me): Me) -> ApiResult<Json<serde_json::Value>> {
    let now = svc.now();
    svc.read(|j| {
        let store = j.study().store();
        let decision = next_questions(store, j.study().config(), me, now)?;
        let questions: Vec<QuestionView> = decision
            .questions
            .iter()
            .map(|q| {
                let q = store.question(*q)?;
                Ok(QuestionView { question_id: q.question_id, text: q.text.clone(), kind: q.kind, bounds: q.bounds })
            })
            .collect::<Result<_, CoreError>>()?;
        Ok(Json(json!({ "questions": questions, "strategy": decision.strategy, "budget": decision.budget })))
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseBody {
    question_id: QuestionId,
    value: f64,
}

async fn respond(
    State(svc): State<AppState>,
    Me(me): Me,
    Json(body): Json<ResponseBody>,
) -> ApiResult<Json<serde_json::Value>> {
    let action = Action::ResponseSubmitted {
        participant_id: me,
        question_id: body.question_id,
        value: body.value,
    };
    svc.append(action)
        .map_err(ApiError::into_rejected_response)?;
    svc.read(|j| {
        let predicted = j.study().predicted_outcome(me)?;
        let actual = j.study().store().participant(me)?.outcome;
        Ok(Json(
            json!({ "accepted": true, "predicted_outcome": predicted, "actual_outcome": actual }),
        ))
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalBody {
    text: String,
    kind: AnswerKind,
    #[serde(default)]
    bounds: Bounds,
    own_answer: f64,
}

async fn propose(
    State(svc): State<AppState>,
    Me(me): Me,
    Json(body): Json<ProposalBody>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let draft = QuestionDraft {
        text: body.text,
        kind: body.kind,
        bounds: body.bounds,
        own_answer: Some(body.own_answer),
    };
    let now = svc.now();
    let mut j = svc.journal.write();
    let question_id = j.study().store().next_question_id();
    j.append(
        Action::QuestionProposed {
            question_id,
            author: me,
            draft,
        },
        now,
    )?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "question_id": question_id, "status": "pending" })),
    ))
}

async fn summary(
    State(svc): State<AppState>,
    Me(me): Me,
) -> ApiResult<Json<crowdfit_core::ParticipantSummary>> {
    Ok(Json(svc.read(|j| j.study().summary(me))?))
}

async fn withdraw(State(svc): State<AppState>, Me(me): Me) -> ApiResult<StatusCode> {
    svc.append(Action::ParticipantWithdrew { participant_id: me })?;
    Ok(StatusCode::NO_CONTENT)
}

async fn pending(State(svc): State<AppState>, _: Admin) -> Json<serde_json::Value> {
    svc.read(|j| {
        let store = j.study().store();
        let items: Vec<serde_json::Value> = list_pending(store)
            .into_iter()
            .map(|q| {
                json!({
                    "question_id": q.question_id,
                    "text": q.text,
                    "kind": q.kind,
                    "bounds": q.bounds,
                    "author": q.author,
                    "posted_at": q.posted_at,
                })
            })
            .collect();
        Json(json!({ "pending": items }))
    })
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum VerdictBody {
    Approve,
    Reject,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum CodeBody {
    IdentityRevealing,
    Profanity,
    OutcomeCorrelated,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewBody {
    verdict: VerdictBody,
    #[serde(default)]
    code: Option<CodeBody>,
    #[serde(default)]
    reviewer: Option<String>,
}

async fn review(
    State(svc): State<AppState>,
    _: Admin,
    Path(id): Path<u64>,
    Json(body): Json<ReviewBody>,
) -> ApiResult<Json<serde_json::Value>> {
    let verdict = match body.verdict {
        VerdictBody::Approve => Verdict::Approve,
        VerdictBody::Reject => Verdict::Reject,
    };
    let rejection_code = body.code.map(|c| match c {
        CodeBody::IdentityRevealing => RejectionCode::IdentityRevealing,
        CodeBody::Profanity => RejectionCode::Profanity,
        CodeBody::OutcomeCorrelated => RejectionCode::OutcomeCorrelated,
    });
    let reviewer = body.reviewer.unwrap_or_else(|| "investigator".into());
    svc.append(Action::QuestionReviewed {
        question_id: QuestionId(id),
        verdict,
        rejection_code,
        reviewer,
    })?;
    let status = match verdict {
        Verdict::Approve => "approved",
        Verdict::Reject => "rejected",
    };
    Ok(Json(json!({ "question_id": id, "status": status })))
}

#[derive(Deserialize)]
struct AnalyticsQuery {
    m: Option<usize>,
}

async fn analytics(
    State(svc): State<AppState>,
    _: Admin,
    Path(name): Path<String>,
    Query(q): Query<AnalyticsQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    svc.read(|j| {
        let study = j.study();
        let store = study.store();
        let art = study.current_artifact();
        match name.as_str() {
            "ranking" => {
                let rows: Vec<serde_json::Value> = art
                    .map(|a| {
                        power_ranking(a)
                            .into_iter()
                            .enumerate()
                            .map(|(i, (qid, d))| {
                                json!({
                                    "rank": i + 1,
                                    "question_id": qid,
                                    "text": store.question(qid).map(|q| q.text.clone()).unwrap_or_default(),
                                    "d": d,
                                    "coefficient": a.coefficient_of(qid),
                                    "responses": store.response_count(qid),
                                })
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                Ok(Json(json!({ "built_at": art.map(|a| a.built_at), "ranking": rows })))
            }
            "powerlaw" => {
                let a = art.ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "NoModel", "no model has been published yet"))?;
                let fit = match q.m {
                    Some(m) => crowdfit_core::analytics::loglog_fit(&a.d, m)?,
                    None => crate::export::powerlaw_of(a)?,
                };
                Ok(Json(serde_json::to_value(fit).expect("plain data")))
            }
            "participation" => {
                let m = participation_matrix(store);
                let cells: Vec<Vec<u8>> =
                    (0..m.rows.len()).map(|i| m.cells.row(i).iter().map(|c| u8::from(*c)).collect()).collect();
                Ok(Json(json!({ "rows": m.rows, "cols": m.cols, "cells": cells })))
            }
            "quality" => {
                let series: Vec<serde_json::Value> = study
                    .quality_series()
                    .into_iter()
                    .map(|(t, r2)| json!({ "built_at": t, "model_r2": r2 }))
                    .collect();
                Ok(Json(json!({ "series": series })))
            }
            "dishonesty" => Ok(Json(serde_json::to_value(dishonesty_scan(store)).expect("plain data"))),
            _ => Err(ApiError::new(StatusCode::NOT_FOUND, "UnknownReport", format!("no analytics report named {name}"))),
        }
    })
}

async fn get_config(State(svc): State<AppState>, _: Admin) -> Json<StudyConfig> {
    Json(svc.read(|j| j.study().config().clone()))
}

async fn put_config(
    State(svc): State<AppState>,
    _: Admin,
    Json(cfg): Json<StudyConfig>,
) -> ApiResult<Json<StudyConfig>> {
    svc.append(Action::ConfigChanged(cfg.clone()))?;
    Ok(Json(cfg))
}

async fn put_bounds(
    State(svc): State<AppState>,
    _: Admin,
    Path(id): Path<u64>,
    Json(bounds): Json<Bounds>,
) -> ApiResult<Json<serde_json::Value>> {
    svc.append(Action::QuestionBoundsChanged {
        question_id: QuestionId(id),
        bounds,
    })?;
    Ok(Json(json!({ "question_id": id, "bounds": bounds })))
}

async fn engine_run(State(svc): State<AppState>, _: Admin) -> ApiResult<Response> {
    let s = svc.clone();
    let out = tokio::task::spawn_blocking(move || s.run_cycle())
        .await
        .map_err(|e| {
            ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "EnginePanic",
                e.to_string(),
            )
        })??;
    Ok(match out {
        Some(a) => {
            Json(json!({ "built_at": a.built_at, "n": a.n, "k": a.k, "model_r2": a.model_r2 }))
                .into_response()
        }
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn design_csv(State(svc): State<AppState>, _: Admin) -> ApiResult<Response> {
    let now = svc.now();
    let design = svc.read(|j| j.study().design(now))?;
    let mut buf = Vec::new();
    crate::export::write_design_csv(&design, &mut buf).map_err(|e| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "ExportFailed",
            e.to_string(),
        )
    })?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], buf).into_response())
}
