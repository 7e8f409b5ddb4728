use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use biodose_core::inference::McmcConfig;
use biodose_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn config(dir: &Path) -> ServiceConfig {
    let mut cfg = ServiceConfig::new(dir);
    cfg.default_mcmc = McmcConfig {
        burn_in: 400,
        kept_draws: 800,
        ..McmcConfig::default()
    };
    cfg
}

fn app(dir: &Path) -> Router {
    router(AppState::open(config(dir)).unwrap())
}

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
    headers: &[(&str, &str)],
) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let body = match body {
        Some(b) => {
            req = req.header("content-type", "application/json");
            Body::from(b.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn create(app: &Router, body: Value) -> String {
    let (s, v) = call(app, "POST", "/trials", Some(body), &[]).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

fn cohort(tox: [u8; 3], eff: [u8; 3]) -> Value {
    json!({ "outcomes": (0..3).map(|i| json!({"y_tox": tox[i], "y_eff": eff[i]})).collect::<Vec<_>>() })
}

#[tokio::test]
async fn create_with_defaults_and_distinct_ids() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let a = create(&app, json!({})).await;
    let b = create(&app, json!({})).await;
    assert_ne!(a, b);
    let (s, v) = call(&app, "GET", &format!("/trials/{a}"), None, &[]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["current_dose"], 1);
    assert_eq!(v["status"]["state"], "active");
    assert_eq!(
        v["design"]["tox_rule"],
        json!({"mode": "interval", "lower": 0.16, "upper": 0.33})
    );
    assert_eq!(v["design"]["overdose_cutoff"], 0.4);
    assert_eq!(v["design"]["cohort_size"], 3);
    assert_eq!(v["design"]["max_patients"], 54);
    assert_eq!(v["doses"].as_array().unwrap().len(), 9);
}

#[tokio::test]
async fn invalid_design_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let body = json!({"design": {"tox_rule": {"mode": "interval", "lower": 0.33, "upper": 0.16}}});
    let (s, v) = call(&app, "POST", "/trials", Some(body), &[]).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field"], "design.tox_rule");
    let (s, v) = call(&app, "POST", "/trials", Some(json!({"desing": {}})), &[]).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["message"].as_str().unwrap().contains("desing"));
}

#[tokio::test]
async fn first_clean_cohort_escalates() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app, json!({"mcmc": McmcConfig::default()})).await;
    let (s, d) = call(
        &app,
        "POST",
        &format!("/trials/{id}/cohorts"),
        Some(cohort([0; 3], [0; 3])),
        &[],
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{d}");
    assert_eq!(d["kind"]["type"], "escalate");
    assert_eq!(d["next_dose"], 2);
    assert_eq!(d["hypothetical"], false);
    let (_, t) = call(&app, "GET", &format!("/trials/{id}"), None, &[]).await;
    assert_eq!(t["current_dose"], 2);
    assert_eq!(t["enrolled"], 3);
    assert_eq!(t["last_decision"], d);
}

#[tokio::test]
async fn wrong_dose_is_a_protocol_error() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app, json!({})).await;
    let body = json!({"outcomes": vec![json!({"dose_level": 3, "y_tox": 0, "y_eff": 0}); 3]});
    let (s, v) = call(&app, "POST", &format!("/trials/{id}/cohorts"), Some(body), &[]).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "protocol_error");
}

#[tokio::test]
async fn idempotent_retries_return_the_first_decision() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app, json!({})).await;
    let uri = format!("/trials/{id}/cohorts");
    let key = [("Idempotency-Key", "cohort-1")];
    let body = cohort([0, 1, 0], [1, 0, 2]);
    let (app1, app2) = (app.clone(), app.clone());
    let (b1, b2) = (body.clone(), body.clone());
    let (u1, u2) = (uri.clone(), uri.clone());
    let (r1, r2) = tokio::join!(
        async move { call(&app1, "POST", &u1, Some(b1), &key).await },
        async move { call(&app2, "POST", &u2, Some(b2), &key).await },
    );
    assert_eq!(r1.0, StatusCode::OK);
    assert_eq!(r2.0, StatusCode::OK);
    assert_eq!(r1.1, r2.1);
    let (_, t) = call(&app, "GET", &format!("/trials/{id}"), None, &[]).await;
    assert_eq!(t["enrolled"], 3);
    assert_eq!(t["cohorts"].as_array().unwrap().len(), 1);

    let (s, v) = call(&app, "POST", &uri, Some(cohort([1, 1, 1], [0; 3])), &key).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "idempotency_conflict");
}

#[tokio::test]
async fn whatif_is_pure_and_matches_submission() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app, json!({})).await;
    let body = cohort([0, 0, 1], [2, 1, 0]);
    let (_, before) = call(&app, "GET", &format!("/trials/{id}"), None, &[]).await;
    let (s, w1) = call(&app, "POST", &format!("/trials/{id}/whatif"), Some(body.clone()), &[]).await;
    assert_eq!(s, StatusCode::OK);
    let (_, w2) = call(&app, "POST", &format!("/trials/{id}/whatif"), Some(body.clone()), &[]).await;
    assert_eq!(w1, w2);
    assert_eq!(w1["hypothetical"], true);
    let (_, after) = call(&app, "GET", &format!("/trials/{id}"), None, &[]).await;
    assert_eq!(before, after);

    let (_, d) = call(&app, "POST", &format!("/trials/{id}/cohorts"), Some(body), &[]).await;
    let mut w = w1.clone();
    w["hypothetical"] = json!(false);
    assert_eq!(w, d);
}

#[tokio::test]
async fn all_toxic_whatif_backs_off() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app, json!({})).await;
    let (_, d) = call(
        &app,
        "POST",
        &format!("/trials/{id}/cohorts"),
        Some(cohort([0; 3], [0; 3])),
        &[],
    )
    .await;
    assert_eq!(d["next_dose"], 2);
    let (_, w) = call(
        &app,
        "POST",
        &format!("/trials/{id}/whatif"),
        Some(cohort([1; 3], [0; 3])),
        &[],
    )
    .await;
    let kind = w["kind"]["type"].as_str().unwrap();
    assert!(kind == "de_escalate" || kind == "stop_none", "{w}");
}

#[tokio::test]
async fn stopped_trial_rejects_cohorts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app, json!({"design": {"max_patients": 3}})).await;
    let (_, d) = call(
        &app,
        "POST",
        &format!("/trials/{id}/cohorts"),
        Some(cohort([0; 3], [1; 3])),
        &[],
    )
    .await;
    assert!(d["kind"]["type"].as_str().unwrap().starts_with("stop"), "{d}");
    let (s, v) = call(
        &app,
        "POST",
        &format!("/trials/{id}/cohorts"),
        Some(cohort([0; 3], [1; 3])),
        &[],
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "lifecycle_error");
}

#[tokio::test]
async fn posterior_before_and_after_data() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app, json!({})).await;
    let (s, p) = call(&app, "GET", &format!("/trials/{id}/posterior"), None, &[]).await;
    assert_eq!(s, StatusCode::OK);
    let doses = p["doses"].as_array().unwrap();
    assert_eq!(doses.len(), 9);
    assert_eq!(p["n_patients"], 0);
    for d in doses {
        let width = d["tox"]["upper"].as_f64().unwrap() - d["tox"]["lower"].as_f64().unwrap();
        assert!(width > 0.4, "prior band too narrow: {d}");
        assert!(d["eff"]["mean"].is_number());
    }

    let (_, dec) = call(
        &app,
        "POST",
        &format!("/trials/{id}/cohorts"),
        Some(cohort([0; 3], [0, 1, 0])),
        &[],
    )
    .await;
    let (_, p) = call(&app, "GET", &format!("/trials/{id}/posterior"), None, &[]).await;
    assert_eq!(p["n_patients"], 3);
    let risks: Vec<Value> = p["doses"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["overdose_risk"].clone())
        .collect();
    assert_eq!(Value::from(risks), dec["overdose_risks"]);

    let (s, _) = call(&app, "GET", "/trials/nope/posterior", None, &[]).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn restart_replays_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let id;
    let before;
    {
        let app = app(dir.path());
        id = create(&app, json!({"design": {"model": "tox_only"}})).await;
        call(
            &app,
            "POST",
            &format!("/trials/{id}/cohorts"),
            Some(cohort([0; 3], [0; 3])),
            &[],
        )
        .await;
        let (s, _) = call(
            &app,
            "POST",
            &format!("/trials/{id}/cohorts"),
            Some(cohort([0, 1, 0], [0; 3])),
            &[("Idempotency-Key", "k2")],
        )
        .await;
        assert_eq!(s, StatusCode::OK);
        before = call(&app, "GET", &format!("/trials/{id}"), None, &[]).await.1;
    }
    let app = app(dir.path());
    let (_, after) = call(&app, "GET", &format!("/trials/{id}"), None, &[]).await;
    assert_eq!(before, after);
    let (_, again) = call(
        &app,
        "POST",
        &format!("/trials/{id}/cohorts"),
        Some(cohort([0, 1, 0], [0; 3])),
        &[("Idempotency-Key", "k2")],
    )
    .await;
    assert_eq!(again, before["last_decision"]);
}

#[tokio::test]
async fn tampered_log_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = app(dir.path());
        let id = create(&app, json!({})).await;
        call(
            &app,
            "POST",
            &format!("/trials/{id}/cohorts"),
            Some(cohort([0; 3], [0; 3])),
            &[],
        )
        .await;
        id
    };
    let path = dir.path().join("trials").join(format!("{id}.jsonl"));
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace("\"y_tox\":0", "\"y_tox\":1")).unwrap();
    let err = AppState::open(config(dir.path())).err().unwrap();
    assert!(format!("{err:#}").contains(&id));
}

#[tokio::test]
async fn bearer_token_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.token = Some("s3cret".into());
    let app = router(AppState::open(cfg).unwrap());
    let (s, _) = call(&app, "GET", "/scenarios/builtin", None, &[]).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, v) = call(
        &app,
        "GET",
        "/scenarios/builtin",
        None,
        &[("Authorization", "Bearer s3cret")],
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 9);
    assert_eq!(list[3]["target_levels"], json!([4, 5]));
}

#[tokio::test]
async fn biomarker_trial_reports_bio_bands() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let body =
        json!({"design": {"model": "joint_biomarker", "bio_rule": {"direction": "at_least", "threshold": 0.25}}});
    let id = create(&app, body).await;
    let c = json!({"outcomes": [{"y_tox": 0, "y_eff": 1, "y_bio": 1}, {"y_tox": 0, "y_eff": 0, "y_bio": 0}, {"y_tox": 0, "y_eff": 2, "y_bio": 1}]});
    let (s, d) = call(&app, "POST", &format!("/trials/{id}/cohorts"), Some(c), &[]).await;
    assert_eq!(s, StatusCode::OK, "{d}");
    let (_, p) = call(&app, "GET", &format!("/trials/{id}/posterior"), None, &[]).await;
    assert!(p["doses"][0]["bio"]["mean"].is_number());
    let missing = cohort([0; 3], [0; 3]);
    let (s, _) = call(&app, "POST", &format!("/trials/{id}/cohorts"), Some(missing), &[]).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}
