//! HTTP JSON API over a loaded event log: timelines, range-scoped DFGs,
//! adaptation DFGs and forecasts.

mod error;
mod state;

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::{Method, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use pmf_core::aggregation::{Aggregated, AggregationKind, Boundaries};
use pmf_core::dfg::{adfg, extract_dfg, filter_dfg, is_activity_pair, ADfgJson, DfgJson};
use pmf_core::forecasting::{DfgForecast, ForecastSpec};
use pmf_core::relevance::entropic_relevance;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use state::{range_dfg, ForecastKey, ServerConfig, SessionState};

type Shared = State<Arc<SessionState>>;

pub fn router(state: Arc<SessionState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/timeline", get(timeline))
        .route("/api/dfg", get(dfg))
        .route("/api/adfg", get(adfg_route))
        .route("/api/forecast", post(forecast))
        .route("/api/*rest", get(not_found).post(not_found));
    let app = match &state.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).not_found_service(get(not_found).post(not_found))),
        None => api.fallback(not_found),
    };
    app.layer(cors).with_state(state)
}

/// Serves `router(state)` on an already bound listener until the task is
/// cancelled.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<SessionState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such route")
}

async fn health(State(st): Shared) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "traces": st.log.traces().len(),
        "events": st.log.n_events(),
        "activities": st.log.alphabet().len(),
    }))
}

#[derive(Debug, Deserialize)]
struct AggParams {
    agg: Option<AggregationKind>,
    intervals: Option<usize>,
}

impl AggParams {
    fn key(&self, st: &SessionState) -> (AggregationKind, usize) {
        (
            self.agg.unwrap_or(st.config.kind),
            self.intervals.unwrap_or(st.config.intervals),
        )
    }
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(t)| t).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn pct(v: Option<f64>, name: &str) -> Result<f64, ApiError> {
    let v = v.unwrap_or(1.0);
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(ApiError::bad_request(format!("{name} must lie in [0, 1]")))
    }
}

fn forecast_of(entry: &Option<Arc<state::ForecastEntry>>) -> Option<&DfgForecast> {
    entry.as_ref().map(|e| &e.forecast)
}

async fn timeline(State(st): Shared, q: Result<Query<AggParams>, QueryRejection>) -> Result<Json<Value>, ApiError> {
    let key = query(q)?.key(&st);
    let agg = st.aggregation(key).await?;
    let loaded = st.loaded_forecast(key).await;
    let mut points: Vec<Value> = agg
        .series
        .interval_totals()
        .iter()
        .enumerate()
        .map(|(i, total)| {
            let bounds = agg.interval_bounds(i + 1);
            json!({
                "index": i + 1,
                "total": *total as f64,
                "start": bounds.map(|b| b.0.to_rfc3339()),
                "end": bounds.map(|b| b.1.to_rfc3339()),
                "kind": "actual",
            })
        })
        .collect();
    if let Some(fc) = forecast_of(&loaded) {
        let width = match &agg.series.plan.boundaries {
            Boundaries::Temporal(b) => Some((b[1] - b[0], *b.last().expect("boundaries"))),
            Boundaries::Sized(_) => None,
        };
        for (k, step) in fc.steps.iter().enumerate() {
            let total: f64 = step
                .edges()
                .iter()
                .filter(|(p, _)| is_activity_pair(p))
                .map(|(_, w)| w)
                .sum();
            let bounds = width.map(|(w, end)| (end + w * k as i32, end + w * (k as i32 + 1)));
            points.push(json!({
                "index": agg.s() + k + 1,
                "total": total,
                "start": bounds.map(|b| b.0.to_rfc3339()),
                "end": bounds.map(|b| b.1.to_rfc3339()),
                "kind": "forecast",
            }));
        }
    }
    Ok(Json(json!({
        "agg": key.0,
        "intervals": key.1,
        "forecast": loaded.as_ref().map(|e| json!({"model": e.key.model, "ts": e.key.ts, "h": e.key.h})),
        "points": points,
    })))
}

#[derive(Debug, Deserialize)]
struct DfgParams {
    from: Option<usize>,
    to: Option<usize>,
    activity_pct: Option<f64>,
    path_pct: Option<f64>,
    agg: Option<AggregationKind>,
    intervals: Option<usize>,
}

async fn dfg(State(st): Shared, q: Result<Query<DfgParams>, QueryRejection>) -> Result<Json<DfgJson>, ApiError> {
    let p = query(q)?;
    let key = AggParams {
        agg: p.agg,
        intervals: p.intervals,
    }
    .key(&st);
    let (a, b) = (pct(p.activity_pct, "activity_pct")?, pct(p.path_pct, "path_pct")?);
    let agg = st.aggregation(key).await?;
    let loaded = st.loaded_forecast(key).await;
    let g = range_dfg(
        &st.log,
        &agg,
        forecast_of(&loaded),
        p.from.unwrap_or(1),
        p.to.unwrap_or(agg.s()),
    )?;
    Ok(Json(DfgJson::from(&filter_dfg(&g, a, b))))
}

#[derive(Debug, Deserialize)]
struct ADfgParams {
    l_from: usize,
    l_to: usize,
    r_from: usize,
    r_to: usize,
    activity_pct: Option<f64>,
    path_pct: Option<f64>,
    agg: Option<AggregationKind>,
    intervals: Option<usize>,
}

async fn adfg_route(State(st): Shared, q: Result<Query<ADfgParams>, QueryRejection>) -> Result<Json<ADfgJson>, ApiError> {
    let p = query(q)?;
    let key = AggParams {
        agg: p.agg,
        intervals: p.intervals,
    }
    .key(&st);
    let (a, b) = (pct(p.activity_pct, "activity_pct")?, pct(p.path_pct, "path_pct")?);
    let agg = st.aggregation(key).await?;
    let loaded = st.loaded_forecast(key).await;
    let fc = forecast_of(&loaded);
    let left = range_dfg(&st.log, &agg, fc, p.l_from, p.l_to)?;
    let right = range_dfg(&st.log, &agg, fc, p.r_from, p.r_to)?;
    Ok(Json(ADfgJson::from(&adfg(&left, &right).filtered(a, b))))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OrderParam {
    List([usize; 3]),
    Named { p: usize, d: usize, q: usize },
}

#[derive(Debug, Deserialize)]
struct ForecastRequest {
    family: String,
    ts: Option<usize>,
    h: Option<usize>,
    order: Option<OrderParam>,
    #[serde(default)]
    strict: bool,
    agg: Option<AggregationKind>,
    intervals: Option<usize>,
}

fn forecast_body(log: &pmf_core::EventLog, agg: &Aggregated, fc: &DfgForecast, key: &ForecastKey) -> Value {
    let s = agg.s();
    let window = fc.window();
    let fallbacks: Vec<Value> = fc
        .fallbacks()
        .into_iter()
        .map(|((f, t), why)| json!({"from": f.name(), "to": t.name(), "reason": why}))
        .collect();
    // score against the actual future when it is inside the log
    let relevance = (key.ts + key.h <= s)
        .then(|| agg.sublog(log, key.ts + 1..=key.ts + key.h).ok().flatten())
        .flatten()
        .and_then(|sub| {
            let actual = extract_dfg(&sub).ok()?;
            let f = entropic_relevance(&window, &sub).ok()?;
            let a = entropic_relevance(&actual, &sub).ok()?;
            Some(json!({
                "from": key.ts + 1,
                "to": key.ts + key.h,
                "forecast": f.relevance,
                "actual": a.relevance,
            }))
        });
    json!({
        "model": key.model,
        "agg": key.kind,
        "intervals": s,
        "ts": key.ts,
        "h": key.h,
        "strict": key.strict,
        "forecast_intervals": (key.ts == s).then(|| [s + 1, s + key.h]),
        "fallbacks": fallbacks,
        "window": DfgJson::from(&window),
        "relevance": relevance,
    })
}

async fn forecast(
    State(st): Shared,
    body: Result<Json<ForecastRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let key_agg = AggParams {
        agg: req.agg,
        intervals: req.intervals,
    }
    .key(&st);
    let h = req.h.unwrap_or(st.config.horizon);
    if h == 0 {
        return Err(ApiError::bad_request("h must be at least 1"));
    }
    let mut spec = ForecastSpec::from_label(&req.family, h).map_err(|e| ApiError::bad_request(e.to_string()))?;
    match req.order {
        Some(OrderParam::List([p, d, q])) | Some(OrderParam::Named { p, d, q }) => spec = spec.with_order(p, d, q),
        None => {}
    }
    if req.strict {
        spec = spec.strict();
    }
    spec.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;

    let agg = st.aggregation(key_agg).await?;
    let ts = req.ts.unwrap_or(agg.s());
    if ts == 0 || ts > agg.s() {
        return Err(ApiError::bad_request(format!("ts must lie in 1..={}", agg.s())));
    }
    let key = ForecastKey {
        kind: key_agg.0,
        intervals: key_agg.1,
        model: spec.label(),
        ts,
        h,
        strict: req.strict,
    };
    let log = st.log.clone();
    let k = key.clone();
    let entry = st
        .forecast(key, spec, move |agg, fc| forecast_body(&log, agg, fc, &k))
        .await?;
    Ok((StatusCode::OK, Json(entry.body.clone())))
}
