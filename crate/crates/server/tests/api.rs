use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use pmf_core::aggregation::AggregationKind;
use pmf_core::dfg::{extract_dfg, import_dfg_json, DfgJson, Node};
use pmf_core::fixtures::three_case_log;
use pmf_server::{router, ServerConfig, SessionState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn state() -> Arc<SessionState> {
    SessionState::new(
        three_case_log(),
        ServerConfig {
            kind: AggregationKind::Equisized,
            intervals: 3,
            horizon: 1,
            static_dir: None,
        },
    )
}

async fn send(st: &Arc<SessionState>, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router(st.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, body)
}

async fn get(st: &Arc<SessionState>, uri: &str) -> (StatusCode, Value) {
    send(st, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(st: &Arc<SessionState>, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(st, req).await
}

fn edge(body: &Value, from: &str, to: &str) -> Option<f64> {
    body["edges"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["from"] == from && e["to"] == to)
        .map(|e| e["weight"].as_f64().unwrap_or_else(|| e["w_left"].as_f64().unwrap()))
}

fn find_edge<'a>(body: &'a Value, from: &str, to: &str) -> &'a Value {
    body["edges"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["from"] == from && e["to"] == to)
        .unwrap_or_else(|| panic!("no edge {from}->{to} in {body}"))
}

fn activity_edges(body: &Value) -> Vec<(String, String, f64)> {
    body["edges"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| !e["from"].as_str().unwrap().starts_with("__") && !e["to"].as_str().unwrap().starts_with("__"))
        .map(|e| {
            (
                e["from"].as_str().unwrap().to_string(),
                e["to"].as_str().unwrap().to_string(),
                e["weight"].as_f64().unwrap(),
            )
        })
        .collect()
}

#[tokio::test]
async fn health_and_unknown_routes() {
    let st = state();
    let (status, body) = get(&st, "/api/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["traces"], 3);

    for uri in ["/api/nope", "/elsewhere"] {
        let (status, body) = get(&st, uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(body["status"], 404);
    }
}

#[tokio::test]
async fn timeline_counts_and_flags() {
    let st = state();
    let (status, body) = get(&st, "/api/timeline?agg=equitemporal&intervals=3").await;
    assert_eq!(status, StatusCode::OK);
    let points = body["points"].as_array().unwrap();
    let totals: Vec<f64> = points.iter().map(|p| p["total"].as_f64().unwrap()).collect();
    assert_eq!(totals, [1.0, 3.0, 2.0]);
    assert!(points.iter().all(|p| p["kind"] == "actual"));
    assert_eq!(points[0]["start"], "2021-03-01T11:30:00+00:00");
    assert!(body["forecast"].is_null());

    assert_eq!(get(&st, "/api/timeline?intervals=0").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&st, "/api/timeline?agg=weekly").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn dfg_ranges() {
    let st = state();
    let (status, body) = get(&st, "/api/dfg?from=1&to=3").await;
    assert_eq!(status, StatusCode::OK);
    let got = import_dfg_json(&body.to_string()).unwrap();
    assert_eq!(got, extract_dfg(&three_case_log()).unwrap());
    // defaults cover the whole log as well
    assert_eq!(get(&st, "/api/dfg").await.1, body);

    let (_, body) = get(&st, "/api/dfg?from=1&to=2").await;
    let mut edges = activity_edges(&body);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(
        edges,
        [
            ("a1".into(), "a1".into(), 1.0),
            ("a1".into(), "a2".into(), 2.0),
            ("a2".into(), "a1".into(), 1.0)
        ]
    );

    assert_eq!(get(&st, "/api/dfg?from=2&to=1").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&st, "/api/dfg?from=1&to=4").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&st, "/api/dfg?from=0&to=1").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&st, "/api/dfg?activity_pct=2").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&st, "/api/dfg?from=abc").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn dfg_sliders_filter() {
    let st = state();
    let (_, body) = get(&st, "/api/dfg?activity_pct=0.5&path_pct=1").await;
    assert_eq!(body["activities"], json!(["a1"]));
    assert!(edge(&body, "a1", "a2").is_none());
    assert_eq!(edge(&body, "a1", "a1"), Some(1.0));
}

#[tokio::test]
async fn adfg_colours() {
    let st = state();
    let (status, same) = get(&st, "/api/adfg?l_from=1&l_to=3&r_from=1&r_to=3").await;
    assert_eq!(status, StatusCode::OK);
    for e in same["edges"].as_array().unwrap() {
        assert_eq!(e["colour_value"], 0.0);
        assert_eq!(e["colour"], "#000000");
    }

    let (_, body) = get(&st, "/api/adfg?l_from=1&l_to=2&r_from=3&r_to=3").await;
    let e = find_edge(&body, "a1", "a2");
    assert_eq!((e["w_left"].as_f64(), e["w_right"].as_f64()), (Some(2.0), Some(1.0)));
    assert!((e["colour_value"].as_f64().unwrap() + 1.0 / 3.0).abs() < 1e-12);
    let only_right = find_edge(&body, "a2", "a2");
    assert_eq!(only_right["colour_value"], 1.0);
    assert_eq!(only_right["colour"], "#00ff00");

    let (_, swapped) = get(&st, "/api/adfg?l_from=3&l_to=3&r_from=1&r_to=2").await;
    for e in body["edges"].as_array().unwrap() {
        let s = find_edge(&swapped, e["from"].as_str().unwrap(), e["to"].as_str().unwrap());
        assert_eq!(s["colour_value"].as_f64().unwrap(), -e["colour_value"].as_f64().unwrap());
    }

    assert_eq!(
        get(&st, "/api/adfg?l_from=2&l_to=1&r_from=1&r_to=1").await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(get(&st, "/api/adfg?l_from=1").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn naive_forecast_extends_the_timeline() {
    let st = state();
    let (status, first) = post(&st, "/api/forecast", json!({"family": "nav", "ts": 3, "h": 1})).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    assert_eq!(first["forecast_intervals"], json!([4, 4]));
    assert!(first["relevance"].is_null());

    let (status, body) = get(&st, "/api/dfg?from=4&to=4").await;
    assert_eq!(status, StatusCode::OK);
    let mut edges = activity_edges(&body);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(edges, [("a1".into(), "a2".into(), 1.0), ("a2".into(), "a2".into(), 1.0)]);

    let (_, timeline) = get(&st, "/api/timeline").await;
    let points = timeline["points"].as_array().unwrap();
    assert_eq!(points.len(), 4);
    assert_eq!(points[3]["kind"], "forecast");
    assert_eq!(points[3]["total"], 2.0);
    assert_eq!(timeline["forecast"]["model"], "nav");

    // a range straddling the boundary adds actual and forecast counts
    let (_, both) = get(&st, "/api/dfg?from=3&to=4").await;
    assert_eq!(edge(&both, "a2", "a2"), Some(2.0));

    // identical request is served from cache
    let (_, again) = post(&st, "/api/forecast", json!({"family": "nav", "ts": 3, "h": 1})).await;
    assert_eq!(again, first);
    assert_eq!(st.forecast_runs(), 1);
}

#[tokio::test]
async fn backtest_reports_relevance() {
    let st = state();
    let (status, body) = post(&st, "/api/forecast", json!({"family": "nav", "ts": 2, "h": 1})).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert!(body["forecast_intervals"].is_null());
    let rel = &body["relevance"];
    assert_eq!((rel["from"].as_u64(), rel["to"].as_u64()), (Some(3), Some(3)));
    assert!(rel["forecast"].as_f64().unwrap() >= 0.0);
    assert!(rel["actual"].as_f64().unwrap() >= 0.0);
    let window: DfgJson = serde_json::from_value(body["window"].clone()).unwrap();
    assert!(window.edges.iter().all(|e| e.weight > 0.0));
    // backtests do not extend the timeline
    let (_, timeline) = get(&st, "/api/timeline").await;
    assert_eq!(timeline["points"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn forecast_errors() {
    let st = state();
    let (status, body) = post(&st, "/api/forecast", json!({"family": "prophet"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("prophet"));

    let (status, _) = post(&st, "/api/forecast", json!({"family": "arima", "order": [2, 1, 2], "strict": true})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    // without strict the naive fallback applies
    let (status, body) = post(&st, "/api/forecast", json!({"family": "arima212"})).await;
    assert_eq!(status, StatusCode::OK);
    assert!(!body["fallbacks"].as_array().unwrap().is_empty());

    assert_eq!(post(&st, "/api/forecast", json!({"family": "nav", "h": 0})).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(post(&st, "/api/forecast", json!({"family": "nav", "ts": 9})).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(post(&st, "/api/forecast", json!({"ts": 1})).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn concurrent_misses_compute_once() {
    let st = state();
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let st = st.clone();
            tokio::spawn(async move { post(&st, "/api/forecast", json!({"family": "ses", "h": 2})).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(st.forecast_runs(), 1);
}

#[tokio::test]
async fn cors_and_static_files() {
    let dir = std::env::temp_dir().join(format!("pmf-static-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("index.html"), "<html>pce</html>").unwrap();
    let st = SessionState::new(
        three_case_log(),
        ServerConfig {
            static_dir: Some(dir.clone()),
            intervals: 3,
            ..ServerConfig::default()
        },
    );
    let resp = router(st.clone())
        .oneshot(Request::get("/").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<html>pce</html>");

    assert_eq!(get(&st, "/missing.js").await.0, StatusCode::NOT_FOUND);

    let resp = router(st)
        .oneshot(
            Request::get("/api/health")
                .header("origin", "http://localhost:5173")
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn start_node_name_is_stable() {
    assert_eq!(Node::Start.name(), "__START__");
}
