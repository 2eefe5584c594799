use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use indemnity_core::corpus::Store;
use indemnity_core::pipeline;
use indemnity_core::testkit::{fixture_rows, random_request, synthetic_row};
use indemnity_core::wire::{CohortSummaryWire, ErrorBody, EstimateResponse, HealthResponse};
use indemnity_service::{router, status_for, AppState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

const TOKEN: &str = "s3cret";

fn jsonl<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    rows.into_iter()
        .map(|r| serde_json::to_string(&r).unwrap() + "\n")
        .collect()
}

struct Harness {
    _dir: tempfile::TempDir,
    store: Arc<Store>,
    app: Router,
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open(dir.path().join("s.redb")).unwrap());
        let app = router(AppState::new(store.clone(), Some(TOKEN.to_string())));
        Harness {
            _dir: dir,
            store,
            app,
        }
    }

    fn with_fixture() -> Self {
        let h = Harness::new();
        h.store
            .ingest(
                fixture_rows()
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| (i as u64 + 1, Ok(r))),
            )
            .unwrap();
        h
    }

    async fn call(&self, req: Request<Body>) -> (StatusCode, Vec<u8>) {
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        (
            status,
            to_bytes(res.into_body(), usize::MAX)
                .await
                .unwrap()
                .to_vec(),
        )
    }

    async fn post(&self, path: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
        let req = Request::post(path)
            .header(header::CONTENT_TYPE, "application/json")
            .body(body.into())
            .unwrap();
        self.call(req).await
    }

    async fn ingest(&self, token: Option<&str>, body: String) -> (StatusCode, Vec<u8>) {
        let mut req = Request::post("/ingest");
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        self.call(req.body(Body::from(body)).unwrap()).await
    }

    async fn health(&self) -> HealthResponse {
        let (status, body) = self
            .call(Request::get("/health").body(Body::empty()).unwrap())
            .await;
        assert_eq!(status, StatusCode::OK);
        serde_json::from_slice(&body).unwrap()
    }
}

fn value(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn health_tracks_ingests() {
    let h = Harness::new();
    let fresh = h.health().await;
    assert_eq!(
        (
            fresh.status.as_str(),
            fresh.record_count,
            fresh.corpus_version
        ),
        ("ok", 0, 0)
    );

    let rows = jsonl(fixture_rows().into_iter().take(3));
    let (status, body) = h.ingest(Some(TOKEN), rows.clone()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(value(&body)["accepted"], 3);
    let after = h.health().await;
    assert_eq!(after.record_count, 3);
    assert!(after.corpus_version > fresh.corpus_version);

    let (_, body) = h.ingest(Some(TOKEN), rows).await;
    let report = value(&body);
    assert_eq!(
        (report["accepted"].as_u64(), report["duplicates"].as_u64()),
        (Some(0), Some(3))
    );
    assert!(h.health().await.corpus_version > after.corpus_version);
}

#[tokio::test]
async fn ingest_requires_token() {
    let h = Harness::new();
    let rows = jsonl(fixture_rows());
    for token in [None, Some("wrong"), Some("")] {
        let (status, body) = h.ingest(token, rows.clone()).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED, "{token:?}");
        assert_eq!(value(&body)["code"], "Unauthorized");
    }
    assert_eq!(h.health().await.record_count, 0);

    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path().join("s.redb")).unwrap());
    let open = router(AppState::new(store, None));
    let req = Request::post("/ingest")
        .header(header::AUTHORIZATION, "Bearer anything")
        .body(Body::from(rows))
        .unwrap();
    assert_eq!(
        open.oneshot(req).await.unwrap().status(),
        StatusCode::UNAUTHORIZED
    );
}

#[tokio::test]
async fn ingest_reports_row_errors() {
    let h = Harness::new();
    let body = format!(
        "{}{{\"case_id\":\"x\"}}\n",
        jsonl(fixture_rows().into_iter().take(2))
    );
    let (status, body) = h.ingest(Some(TOKEN), body).await;
    assert_eq!(status, StatusCode::OK);
    let report = value(&body);
    assert_eq!(
        (report["accepted"].as_u64(), report["rejected"].as_u64()),
        (Some(2), Some(1))
    );
    assert_eq!(report["rejections"][0]["code"], "SchemaError");
    assert_eq!(report["rejections"][0]["line"], 3);
}

#[tokio::test]
async fn summary_of_fixture() {
    let h = Harness::with_fixture();
    let (status, body) = h.post("/cohort/summary", "{}").await;
    assert_eq!(status, StatusCode::OK);
    let s: CohortSummaryWire = serde_json::from_slice(&body).unwrap();
    assert_eq!(
        (s.n, s.min_minor_units, s.max_minor_units),
        (5, 100_000, 500_000)
    );
    assert_eq!(s.mean_minor_units, 300_000.0);
    assert_eq!(s.quantiles_minor_units["0.5"], 300_000);
    assert_eq!(s.quantiles_minor_units["0.25"], 200_000);
    assert_eq!(s.histogram.iter().map(|b| b.count).sum::<u64>(), 5);

    let lib =
        pipeline::cohort_summary_wire(&h.store.snapshot().unwrap(), &Default::default()).unwrap();
    assert_eq!(body, serde_json::to_vec(&lib).unwrap());
}

#[tokio::test]
async fn summary_errors() {
    let h = Harness::with_fixture();
    let (status, body) = h
        .post("/cohort/summary", r#"{"date_from":"2030-01-01"}"#)
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(value(&body)["code"], "EmptyCohort");

    for bad in [
        r#"{"date_from":"2020-13-45"}"#,
        r#"{"colour":"red"}"#,
        "not json",
        r#"{"classes":"A"}"#,
    ] {
        let (status, body) = h.post("/cohort/summary", bad).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{bad}");
        assert_eq!(value(&body)["code"], "ValidationError");
    }
    let (status, body) = h
        .post(
            "/cohort/summary",
            r#"{"date_from":"2021-01-01","date_to":"2020-01-01"}"#,
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(value(&body)["code"], "ValidationError");
}

#[tokio::test]
async fn estimate_fixture_oracle() {
    let h = Harness::with_fixture();
    let req = json!({"opinion": {"scale": 5}, "pooling": {"mode": "prior_only"}});
    let (status, body) = h.post("/estimate", req.to_string()).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let r: EstimateResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(r.theta_hat_minor_units, 300_000);
    assert_eq!(r.pi_hat, 0.5);
    assert_eq!(r.resolved.data_weight, 1.0);
    assert_eq!(r.resolved.calibration_minor_units, 0);

    let req = json!({"opinion": {"scale": 5}, "pooling": {"mode": "prior_only"}, "calibration_minor_units": 25000});
    let (_, body) = h.post("/estimate", req.to_string()).await;
    assert_eq!(value(&body)["theta_hat_minor_units"], 325_000);

    let req = json!({"opinion": {"alpha": 3.0, "beta": 1.0}, "pooling": {"mode": "prior_only"}});
    let (_, body) = h.post("/estimate", req.to_string()).await;
    let r: EstimateResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(r.pi_hat, 0.75);
    assert_eq!(r.theta_hat_minor_units, 400_000);
}

#[tokio::test]
async fn estimate_validation() {
    let h = Harness::with_fixture();
    let cases = [
        json!({"opinion": {"scale": 5, "alpha": 1.0, "beta": 1.0}}),
        json!({"opinion": {}}),
        json!({"opinion": {"scale": 11}}),
        json!({"opinion": {"alpha": 0.0, "beta": 1.0}}),
        json!({"opinion": {"scale": 5}, "pooling": {"data_weight": 2.0}}),
        json!({"opinion": {"scale": 5}, "interval_mass": 1.0}),
        json!({"opinion": {"scale": 5}, "extra": true}),
        json!({"opinion": {"scale": -1}}),
        json!({}),
    ];
    for c in cases {
        let (status, body) = h.post("/estimate", c.to_string()).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{c}");
        let e: ErrorBody = serde_json::from_slice(&body).unwrap();
        assert_eq!(e.code, "ValidationError", "{c}");
    }
}

#[tokio::test]
async fn estimate_is_stateless() {
    let h = Harness::with_fixture();
    let req = json!({"opinion": {"scale": 7}}).to_string();
    let (_, a) = h.post("/estimate", req.clone()).await;
    let (_, b) = h.post("/estimate", req).await;
    assert_eq!(a, b);
}

#[tokio::test]
async fn unknown_route_is_structured() {
    let h = Harness::new();
    let (status, body) = h
        .call(Request::get("/nope").body(Body::empty()).unwrap())
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(value(&body)["code"], "NotFound");
}

#[tokio::test]
async fn oracle_equivalence_over_generated_requests() {
    let h = Harness::new();
    h.store
        .ingest((0..3_000).map(|i| (i + 1, Ok(synthetic_row(7, i)))))
        .unwrap();
    let snap = h.store.snapshot().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut ok, mut failed) = (0, 0);
    for _ in 0..1_200 {
        let req = random_request(&mut rng);
        let (status, body) = h.post("/estimate", serde_json::to_vec(&req).unwrap()).await;
        match pipeline::estimate_response(&snap, &req) {
            Ok(r) => {
                ok += 1;
                assert_eq!(status, StatusCode::OK);
                assert_eq!(body, serde_json::to_vec(&r).unwrap(), "{req:?}");
            }
            Err(e) => {
                failed += 1;
                assert_eq!(status, status_for(&e), "{req:?}");
                assert_eq!(body, serde_json::to_vec(&ErrorBody::from(&e)).unwrap());
            }
        }
    }
    assert!(
        ok >= 1_000,
        "only {ok} successful requests ({failed} errors)"
    );
}
