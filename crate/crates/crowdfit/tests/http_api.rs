use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use crowdfit::journal::{replay_log, Journal};
use crowdfit::service::{router, AppState, Service};
use crowdfit_core::{AnswerKind, QuestionDraft, StudyConfig, Timestamp};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const ADMIN: &str = "admin-secret";

struct Harness {
    app: Router,
    svc: AppState,
    _dir: tempfile::TempDir,
    log: std::path::PathBuf,
}

fn config() -> StudyConfig {
    let mut cfg = StudyConfig::new(
        "bmi",
        "BMI",
        10.0,
        80.0,
        vec![
            QuestionDraft::new("Do you smoke?", AnswerKind::YesNo),
            QuestionDraft::new("How many hours do you work per week?", AnswerKind::Numeric)
                .with_bounds(Some(0.0), Some(168.0)),
            QuestionDraft::new("I eat fast food often.", AnswerKind::Likert5),
        ],
    );
    cfg.budget_alpha = None;
    cfg
}

fn harness() -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let journal = Journal::open(&log, Some(&config()), Timestamp(1_000), 0).unwrap();
    let tick = Arc::new(AtomicU64::new(1_000));
    let clock = Arc::new(move || Timestamp(tick.fetch_add(1_000, Ordering::SeqCst)));
    let svc = Service::new(journal, Some(ADMIN), None, clock);
    Harness {
        app: router(svc.clone()),
        svc,
        _dir: dir,
        log,
    }
}

impl Harness {
    async fn call(
        &self,
        method: Method,
        uri: &str,
        token: Option<&str>,
        body: Option<Value>,
    ) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or(Value::Null)
        };
        (status, value)
    }

    async fn register(&self, outcome: Option<f64>) -> (u64, String) {
        let body = outcome
            .map(|o| json!({ "outcome": o }))
            .unwrap_or(json!({}));
        let (s, v) = self
            .call(Method::POST, "/api/participants", None, Some(body))
            .await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        (
            v["participant_id"].as_u64().unwrap(),
            v["token"].as_str().unwrap().to_string(),
        )
    }

    async fn answer(&self, token: &str, q: u64, value: f64) -> (StatusCode, Value) {
        self.call(
            Method::POST,
            "/api/me/responses",
            Some(token),
            Some(json!({ "question_id": q, "value": value })),
        )
        .await
    }
}

#[tokio::test]
async fn participant_flow_end_to_end() {
    let h = harness();
    let (pid, token) = h.register(None).await;
    assert_eq!(pid, 1);

    // Outcome by BMI inputs: 5 ft 10 in, 160 lb.
    let (s, v) = h
        .call(
            Method::PUT,
            "/api/me/outcome",
            Some(&token),
            Some(json!({ "height_ft": 5, "height_in": 10, "weight_lb": 160 })),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    assert!(
        (v["actual_outcome"].as_f64().unwrap() - 22.957).abs() < 1e-3,
        "{v}"
    );

    let (s, v) = h
        .call(Method::GET, "/api/me/next-questions", Some(&token), None)
        .await;
    assert_eq!(s, StatusCode::OK);
    let qs = v["questions"].as_array().unwrap();
    assert_eq!(qs.len(), 3);
    assert_eq!(
        qs[0],
        json!({ "question_id": 1, "text": "Do you smoke?", "kind": "YesNo" })
    );
    assert_eq!(qs[1]["bounds"], json!({ "min": 0.0, "max": 168.0 }));

    // No model yet: predicted outcome is absent.
    let (s, v) = h.answer(&token, 1, 0.0).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["accepted"], json!(true));
    assert!(v["predicted_outcome"].is_null());

    let (s, v) = h.answer(&token, 2, 200.0).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["accepted"], json!(false));
    assert_eq!(v["error"], json!("ValueOutOfDomain"));

    // More participants, then a model.
    let mut tokens = vec![token.clone()];
    for (i, bmi) in [27.0, 31.0, 24.0].into_iter().enumerate() {
        let (_, t) = h.register(Some(bmi)).await;
        h.answer(&t, 1, (i % 2) as f64).await;
        h.answer(&t, 2, 30.0 + 10.0 * i as f64).await;
        tokens.push(t);
    }
    let (s, v) = h
        .call(Method::POST, "/api/admin/engine/run", Some(ADMIN), None)
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["n"], json!(4));

    let (s, v) = h.answer(&token, 3, 4.0).await;
    assert_eq!(s, StatusCode::OK);
    let predicted = v["predicted_outcome"].as_f64().unwrap();
    let expected = h.svc.read(|j| {
        j.study()
            .predicted_outcome(crowdfit_core::ParticipantId(1))
            .unwrap()
            .unwrap()
    });
    assert_eq!(predicted, expected);

    let (s, v) = h
        .call(Method::GET, "/api/me/summary", Some(&token), None)
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["participant_id"], json!(1));
    assert_eq!(v["predicted_outcome"].as_f64().unwrap(), predicted);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for key in [
        "text",
        "own_answer",
        "lower_group_mean",
        "upper_group_mean",
        "predictive_power",
    ] {
        assert!(rows[0].get(key).is_some(), "missing {key}");
    }

    let (s, _) = h.call(Method::DELETE, "/api/me", Some(&token), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, v) = h.answer(&token, 1, 1.0).await;
    assert_eq!(s, StatusCode::GONE, "{v}");

    // Everything above is in the log and replays to the same state.
    let replayed = replay_log(&h.log).unwrap().unwrap();
    let live = h.svc.read(|j| serde_json::to_string(j.study()).unwrap());
    assert_eq!(serde_json::to_string(&replayed).unwrap(), live);
}

#[tokio::test]
async fn outcome_variants_and_auth() {
    let h = harness();
    let (s, _) = h.call(Method::GET, "/api/me/summary", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = h
        .call(Method::GET, "/api/me/summary", Some("nope"), None)
        .await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);

    let (_, token) = h.register(None).await;
    let (s, v) = h
        .call(
            Method::PUT,
            "/api/me/outcome",
            Some(&token),
            Some(json!({ "value": 25.5 })),
        )
        .await;
    assert_eq!(
        (s, v["actual_outcome"].as_f64()),
        (StatusCode::OK, Some(25.5))
    );
    let (s, v) = h
        .call(
            Method::PUT,
            "/api/me/outcome",
            Some(&token),
            Some(json!({ "value": 500 })),
        )
        .await;
    assert_eq!(
        (s, v["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("OutcomeOutOfRange"))
    );
    let series = json!({
        "series": [{ "period": "2012-06", "value": 30.0 }, { "period": "2012-07", "value": 40.0 }],
        "periods": ["2012-06", "2012-07", "2012-08"],
    });
    let (s, v) = h
        .call(Method::PUT, "/api/me/outcome", Some(&token), Some(series))
        .await;
    assert_eq!(
        (s, v["actual_outcome"].as_f64()),
        (StatusCode::OK, Some(35.0))
    );

    // Participant tokens are not admin tokens.
    let (s, _) = h
        .call(Method::GET, "/api/admin/moderation", Some(&token), None)
        .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn moderation_and_admin_endpoints() {
    let h = harness();
    let (_, alice) = h.register(Some(22.0)).await;
    let (_, bob) = h.register(Some(28.0)).await;

    let proposal = json!({ "text": "Do you own a dog?", "kind": "YesNo", "own_answer": 1 });
    let (s, v) = h
        .call(
            Method::POST,
            "/api/me/questions",
            Some(&alice),
            Some(proposal),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v, json!({ "question_id": 4, "status": "pending" }));
    let (s, v) = h
        .call(
            Method::POST,
            "/api/me/questions",
            Some(&bob),
            Some(json!({ "text": "What is your street?", "kind": "Numeric", "own_answer": 3 })),
        )
        .await;
    assert_eq!(
        (s, v["question_id"].as_u64()),
        (StatusCode::CREATED, Some(5))
    );
    let (s, v) = h
        .call(
            Method::POST,
            "/api/me/questions",
            Some(&bob),
            Some(json!({ "text": "Rate it", "kind": "Likert5", "own_answer": 9 })),
        )
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");

    let (s, v) = h
        .call(Method::GET, "/api/admin/moderation", Some(ADMIN), None)
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["pending"].as_array().unwrap().len(), 2);

    let (s, v) = h
        .call(
            Method::POST,
            "/api/admin/moderation/4",
            Some(ADMIN),
            Some(json!({ "verdict": "approve" })),
        )
        .await;
    assert_eq!(
        (s, v["status"].as_str()),
        (StatusCode::OK, Some("approved"))
    );
    let (s, _) = h
        .call(
            Method::POST,
            "/api/admin/moderation/4",
            Some(ADMIN),
            Some(json!({ "verdict": "approve" })),
        )
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = h
        .call(
            Method::POST,
            "/api/admin/moderation/5",
            Some(ADMIN),
            Some(json!({ "verdict": "reject" })),
        )
        .await;
    assert_eq!(
        s,
        StatusCode::UNPROCESSABLE_ENTITY,
        "a rejection needs a code"
    );
    let reject = json!({ "verdict": "reject", "code": "identity_revealing" });
    let (s, _) = h
        .call(
            Method::POST,
            "/api/admin/moderation/5",
            Some(ADMIN),
            Some(reject),
        )
        .await;
    assert_eq!(s, StatusCode::OK);

    let (_, v) = h
        .call(Method::GET, "/api/me/summary", Some(&bob), None)
        .await;
    assert_eq!(
        v["rejected_proposals"][0]["rejection_code"],
        json!("IdentityRevealing")
    );
    // The approved proposal arrives with its author's answer.
    let (_, v) = h
        .call(Method::GET, "/api/me/summary", Some(&alice), None)
        .await;
    assert_eq!(v["rows"][3]["own_answer"], json!(1.0));

    for (t, hours) in [(&alice, 40.0), (&bob, 50.0)] {
        h.answer(t, 2, hours).await;
    }
    let (s, _) = h
        .call(Method::POST, "/api/admin/engine/run", Some(ADMIN), None)
        .await;
    assert_eq!(s, StatusCode::OK);
    for name in ["ranking", "participation", "quality", "dishonesty"] {
        let (s, v) = h
            .call(
                Method::GET,
                &format!("/api/admin/analytics/{name}"),
                Some(ADMIN),
                None,
            )
            .await;
        assert_eq!(s, StatusCode::OK, "{name}: {v}");
    }
    let (_, v) = h
        .call(
            Method::GET,
            "/api/admin/analytics/quality",
            Some(ADMIN),
            None,
        )
        .await;
    assert_eq!(v["series"].as_array().unwrap().len(), 1);
    let (_, v) = h
        .call(
            Method::GET,
            "/api/admin/analytics/participation",
            Some(ADMIN),
            None,
        )
        .await;
    assert_eq!(v["cells"], json!([[0, 1, 0, 1], [0, 1, 0, 0]]));
    let (s, _) = h
        .call(
            Method::GET,
            "/api/admin/analytics/nonsense",
            Some(ADMIN),
            None,
        )
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    // Post-hoc bounds flag earlier answers.
    let (s, _) = h
        .call(
            Method::PUT,
            "/api/admin/questions/2/bounds",
            Some(ADMIN),
            Some(json!({ "min": 0, "max": 45 })),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    let (_, v) = h
        .call(
            Method::GET,
            "/api/admin/analytics/dishonesty",
            Some(ADMIN),
            None,
        )
        .await;
    assert_eq!(v["count"], json!(1));
}

#[tokio::test]
async fn config_changes_are_logged_and_identity_is_fixed() {
    let h = harness();
    let (s, mut cfg) = h
        .call(Method::GET, "/api/admin/config", Some(ADMIN), None)
        .await;
    assert_eq!(s, StatusCode::OK);
    cfg["engine_period_secs"] = json!(60);
    let (s, _) = h
        .call(
            Method::PUT,
            "/api/admin/config",
            Some(ADMIN),
            Some(cfg.clone()),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h.svc.engine_period().as_secs(), 60);

    cfg["outcome_label"] = json!("Weight");
    let (s, v) = h
        .call(Method::PUT, "/api/admin/config", Some(ADMIN), Some(cfg))
        .await;
    assert_eq!(
        (s, v["error"].as_str()),
        (StatusCode::CONFLICT, Some("ImmutableConfig"))
    );
    let (s, _) = h
        .call(Method::PUT, "/api/admin/config", None, Some(json!({})))
        .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn engine_skips_until_there_is_data() {
    let h = harness();
    let (s, _) = h
        .call(Method::POST, "/api/admin/engine/run", Some(ADMIN), None)
        .await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    assert!(h.svc.run_cycle().unwrap().is_none());
}

#[tokio::test]
async fn concurrent_appends_stay_gapless() {
    let h = harness();
    let mut tasks = Vec::new();
    for i in 0..32 {
        let app = h.app.clone();
        tasks.push(tokio::spawn(async move {
            let body = json!({ "outcome": 20.0 + i as f64 }).to_string();
            let req = Request::post("/api/participants")
                .header("content-type", "application/json")
                .body(Body::from(body))
                .unwrap();
            app.oneshot(req).await.unwrap().status()
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::CREATED);
    }
    let events = crowdfit::journal::read_events(&h.log).unwrap();
    assert_eq!(
        events.iter().map(|e| e.seq).collect::<Vec<_>>(),
        (1..=33).collect::<Vec<u64>>()
    );
}
