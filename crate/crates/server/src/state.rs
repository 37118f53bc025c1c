//! Session state: the loaded log plus read-through caches for aggregations
//! and forecasts. Each cache slot is a `OnceCell`, so concurrent misses on
//! one key wait for a single computation.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use pmf_core::aggregation::{Aggregated, AggregationKind, DEFAULT_INTERVALS};
use pmf_core::dfg::{extract_dfg, Dfg};
use pmf_core::forecasting::{forecast_dfg, DfgForecast, ForecastSpec};
use pmf_core::EventLog;
use tokio::sync::OnceCell;

use crate::error::ApiError;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub kind: AggregationKind,
    pub intervals: usize,
    pub horizon: usize,
    /// Built UI bundle served under `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            kind: AggregationKind::Equisized,
            intervals: DEFAULT_INTERVALS,
            horizon: 25,
            static_dir: None,
        }
    }
}

pub type AggKey = (AggregationKind, usize);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ForecastKey {
    pub kind: AggregationKind,
    pub intervals: usize,
    pub model: String,
    pub ts: usize,
    pub h: usize,
    pub strict: bool,
}

#[derive(Debug)]
pub struct ForecastEntry {
    pub key: ForecastKey,
    pub forecast: DfgForecast,
    /// Response body of the POST that created the entry.
    pub body: serde_json::Value,
}

type Slot<T> = Arc<OnceCell<Arc<T>>>;

pub struct SessionState {
    pub log: Arc<EventLog>,
    pub config: ServerConfig,
    aggregations: Mutex<HashMap<AggKey, Slot<Aggregated>>>,
    forecasts: Mutex<HashMap<ForecastKey, Slot<ForecastEntry>>>,
    /// Forecast shown after the last actual interval, per aggregation.
    loaded: RwLock<HashMap<AggKey, ForecastKey>>,
    forecast_runs: AtomicUsize,
}

impl SessionState {
    pub fn new(log: EventLog, config: ServerConfig) -> Arc<Self> {
        Arc::new(Self {
            log: Arc::new(log),
            config,
            aggregations: Mutex::default(),
            forecasts: Mutex::default(),
            loaded: RwLock::default(),
            forecast_runs: AtomicUsize::new(0),
        })
    }

    /// How many forecasts were actually computed (cache misses).
    pub fn forecast_runs(&self) -> usize {
        self.forecast_runs.load(Ordering::SeqCst)
    }

    fn slot<K: Clone + Eq + std::hash::Hash, T>(map: &Mutex<HashMap<K, Slot<T>>>, key: &K) -> Slot<T> {
        map.lock().expect("cache lock").entry(key.clone()).or_default().clone()
    }

    pub async fn aggregation(&self, key: AggKey) -> Result<Arc<Aggregated>, ApiError> {
        if key.1 == 0 {
            return Err(ApiError::bad_request("intervals must be at least 1"));
        }
        let slot = Self::slot(&self.aggregations, &key);
        let log = self.log.clone();
        slot.get_or_try_init(|| async move {
            tokio::task::spawn_blocking(move || Aggregated::new(&log, key.0, key.1))
                .await
                .map_err(ApiError::internal)?
                .map(Arc::new)
                .map_err(|e| ApiError::bad_request(e.to_string()))
        })
        .await
        .cloned()
    }

    /// Cached forecast for `key`; `build` turns the forecast into the
    /// response body on a miss.
    pub async fn forecast(
        &self,
        key: ForecastKey,
        spec: ForecastSpec,
        build: impl FnOnce(&Aggregated, &DfgForecast) -> serde_json::Value + Send + 'static,
    ) -> Result<Arc<ForecastEntry>, ApiError> {
        let agg = self.aggregation((key.kind, key.intervals)).await?;
        let slot = Self::slot(&self.forecasts, &key);
        let entry = slot
            .get_or_try_init(|| async {
                self.forecast_runs.fetch_add(1, Ordering::SeqCst);
                let k = key.clone();
                tokio::task::spawn_blocking(move || {
                    let forecast = forecast_dfg(&agg.series, k.ts, &spec).map_err(ApiError::from_forecast)?;
                    tracing::info!(model = %k.model, ts = k.ts, h = k.h, "forecast computed");
                    let body = build(&agg, &forecast);
                    Ok(Arc::new(ForecastEntry { key: k, forecast, body }))
                })
                .await
                .map_err(ApiError::internal)?
            })
            .await?
            .clone();
        if entry.key.ts == entry.key.intervals {
            self.loaded
                .write()
                .expect("loaded lock")
                .insert((key.kind, key.intervals), key);
        }
        Ok(entry)
    }

    /// The forecast currently extending the timeline of an aggregation.
    pub async fn loaded_forecast(&self, agg: AggKey) -> Option<Arc<ForecastEntry>> {
        let key = self.loaded.read().expect("loaded lock").get(&agg).cloned()?;
        let slot = Self::slot(&self.forecasts, &key);
        slot.get().cloned()
    }
}

/// DFG over intervals `from..=to` (1-based). Actual intervals come from the
/// sublog; intervals past `s` come from the summed forecast steps.
pub fn range_dfg(
    log: &EventLog,
    agg: &Aggregated,
    forecast: Option<&DfgForecast>,
    from: usize,
    to: usize,
) -> Result<Dfg, ApiError> {
    let s = agg.s();
    let h = forecast.map_or(0, |f| f.steps.len());
    if from == 0 || from > to || to > s + h {
        return Err(ApiError::bad_request(format!(
            "interval range {from}..={to} outside 1..={}",
            s + h
        )));
    }
    let mut g = Dfg::new(agg.series.activities.iter().cloned());
    if from <= s {
        let sub = agg
            .sublog(log, from..=to.min(s))
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        if let Some(sub) = sub {
            g = g.merged(&extract_dfg(&sub).map_err(ApiError::internal)?);
        }
    }
    if let (Some(fc), true) = (forecast, to > s) {
        g = g.merged(&fc.steps_sum(from.max(s + 1) - s, to - s));
    }
    Ok(g)
}
