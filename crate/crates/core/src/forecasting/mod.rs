//! Univariate forecasting of directly-follows series and assembly of
//! forecasted DFGs.
//!
//! Each activity pair is forecast separately with one model specification
//! shared by all pairs. Multi-step forecasts use the recursive strategy:
//! every step feeds the previous forecasts back in as inputs.

mod arima;
mod garch;
pub mod optim;
mod smoothing;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::DfSeriesSet;
use crate::dfg::{Dfg, Pair};

pub use arima::{difference, fit_ar, fit_arima, integrate};
pub use garch::fit_garch;
pub use smoothing::fit_ses_holt;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ForecastError {
    #[error("series of length {got} too short; {family} needs at least {needed}")]
    SeriesTooShort { family: Family, needed: usize, got: usize },
    #[error("{family} fit did not converge")]
    NotConverged { family: Family },
    #[error("singular design matrix")]
    SingularDesign,
    #[error("forecast {value} exceeds the plausibility bound {bound}")]
    ExtremeForecast { value: f64, bound: f64 },
    #[error("invalid forecast specification: {0}")]
    InvalidSpec(String),
    #[error("pair {pair}: {source}")]
    Pair {
        pair: String,
        #[source]
        source: Box<ForecastError>,
    },
}

impl ForecastError {
    /// Errors the naive fallback may stand in for.
    pub fn is_model_failure(&self) -> bool {
        matches!(
            self,
            Self::SeriesTooShort { .. } | Self::NotConverged { .. } | Self::SingularDesign | Self::ExtremeForecast { .. }
        )
    }

    /// The innermost error, unwrapping per-pair context.
    pub fn root(&self) -> &ForecastError {
        match self {
            Self::Pair { source, .. } => source.root(),
            e => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Naive,
    Mean,
    Ses,
    Holt,
    Ar,
    Arima,
    Garch,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Naive => "naive",
            Family::Mean => "mean",
            Family::Ses => "ses",
            Family::Holt => "holt",
            Family::Ar => "ar",
            Family::Arima => "arima",
            Family::Garch => "garch",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Order {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl Order {
    pub fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FallbackMode {
    /// Substitute the naive forecast for failed fits and record it.
    #[default]
    Naive,
    /// Surface failures as errors.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSpec {
    pub family: Family,
    /// `ar` uses `p`; `arima` uses `p, d, q`; `garch` uses `p` (variance
    /// lags) and `q` (squared-error lags).
    pub order: Order,
    /// Fixed level smoothing; fitted when `None`.
    pub alpha: Option<f64>,
    /// Fixed trend smoothing; fitted when `None`.
    pub beta: Option<f64>,
    /// Damping factor for Holt's trend; undamped when `None`.
    pub damping: Option<f64>,
    /// Intercept for `ar`, and for `arima` when `d == 0`.
    pub constant: bool,
    pub horizon: usize,
    pub clip_negative: bool,
    pub fallback: FallbackMode,
}

impl ForecastSpec {
    pub fn new(family: Family, horizon: usize) -> Self {
        let order = match family {
            Family::Ar => Order::new(1, 0, 0),
            Family::Arima => Order::new(2, 1, 2),
            Family::Garch => Order::new(1, 0, 1),
            _ => Order::default(),
        };
        Self {
            family,
            order,
            alpha: None,
            beta: None,
            damping: None,
            constant: true,
            horizon,
            clip_negative: true,
            fallback: FallbackMode::Naive,
        }
    }

    pub fn with_order(mut self, p: usize, d: usize, q: usize) -> Self {
        self.order = Order::new(p, d, q);
        self
    }

    pub fn strict(mut self) -> Self {
        self.fallback = FallbackMode::Strict;
        self
    }

    /// Parses the family labels used in result tables: `nav`/`naive`,
    /// `mean`, `ses`, `hw`/`holt`, `arN` (AR(N)), `arimaPDQ` (three digits),
    /// `garch` (GARCH(1,1)) or `garchPQ`.
    pub fn from_label(label: &str, horizon: usize) -> Result<Self, ForecastError> {
        let l = label.trim().to_ascii_lowercase();
        let bad = || ForecastError::InvalidSpec(format!("unknown family `{label}`"));
        let digits = |s: &str| -> Result<Vec<usize>, ForecastError> {
            s.chars()
                .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(bad))
                .collect()
        };
        let spec = match l.as_str() {
            "nav" | "naive" => Self::new(Family::Naive, horizon),
            "mean" => Self::new(Family::Mean, horizon),
            "ses" => Self::new(Family::Ses, horizon),
            "hw" | "holt" => Self::new(Family::Holt, horizon),
            "ar" => Self::new(Family::Ar, horizon),
            "arima" => Self::new(Family::Arima, horizon),
            "garch" => Self::new(Family::Garch, horizon),
            s if s.starts_with("arima") => {
                let d = digits(&s[5..])?;
                if d.len() != 3 {
                    return Err(bad());
                }
                Self::new(Family::Arima, horizon).with_order(d[0], d[1], d[2])
            }
            s if s.starts_with("garch") => {
                let d = digits(&s[5..])?;
                if d.len() != 2 {
                    return Err(bad());
                }
                Self::new(Family::Garch, horizon).with_order(d[0], 0, d[1])
            }
            s if s.starts_with("ar") => {
                let p: usize = s[2..].parse().map_err(|_| bad())?;
                Self::new(Family::Ar, horizon).with_order(p, 0, 0)
            }
            _ => return Err(bad()),
        };
        Ok(spec)
    }

    /// Short label in the style of [`ForecastSpec::from_label`].
    pub fn label(&self) -> String {
        let Order { p, d, q } = self.order;
        match self.family {
            Family::Naive => "nav".into(),
            Family::Mean => "mean".into(),
            Family::Ses => "ses".into(),
            Family::Holt => "hw".into(),
            Family::Ar => format!("ar{p}"),
            Family::Arima => format!("arima{p}{d}{q}"),
            Family::Garch if p == 1 && q == 1 => "garch".into(),
            Family::Garch => format!("garch{p}{q}"),
        }
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.horizon == 0 {
            return Err(ForecastError::InvalidSpec("horizon must be at least 1".into()));
        }
        if self.family == Family::Garch && (self.order.p == 0 || self.order.q == 0) {
            return Err(ForecastError::InvalidSpec("garch needs p, q >= 1".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("damping", self.damping)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ForecastError::InvalidSpec(format!("{name} = {v} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Shortest series the family can be fit on.
    pub fn min_length(&self) -> usize {
        let Order { p, d, q } = self.order;
        match self.family {
            Family::Naive | Family::Mean => 1,
            Family::Ses => 2,
            Family::Holt => 3,
            Family::Ar => p + 2,
            Family::Arima => p + d + q + 2,
            Family::Garch => 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub sse: f64,
    pub iterations: usize,
    pub log_likelihood: Option<f64>,
    /// Conditional variance forecasts (GARCH only).
    pub variance_forecast: Vec<f64>,
}

/// State needed to extend a fitted model into the future.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ModelState {
    Constant(f64),
    Smoothing { level: f64, trend: f64, damping: f64 },
    Arma(arima::ArmaState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: ForecastSpec,
    /// Family actually fitted; differs from `spec.family` when the fitter
    /// itself degraded (e.g. a singular AR design falls back to the mean).
    pub model_used: Family,
    pub coefficients: Vec<(String, f64)>,
    pub diagnostics: FitDiagnostics,
    pub(crate) state: ModelState,
}

impl FittedModel {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.converged
    }

    /// Recursive `h`-step forecast. Refuses models that did not converge.
    pub fn forecast(&self, h: usize) -> Result<Vec<f64>, ForecastError> {
        if !self.converged() {
            return Err(ForecastError::NotConverged {
                family: self.spec.family,
            });
        }
        Ok(match &self.state {
            ModelState::Constant(c) => vec![*c; h],
            ModelState::Smoothing { level, trend, damping } => {
                let mut acc = 0.0;
                let mut phi_k = 1.0;
                (0..h)
                    .map(|_| {
                        phi_k *= damping;
                        acc += phi_k;
                        level + acc * trend
                    })
                    .collect()
            }
            ModelState::Arma(state) => state.forecast(h),
        })
    }
}

pub fn naive_forecast(y: &[f64], h: usize) -> Vec<f64> {
    vec![y.last().copied().unwrap_or(0.0); h]
}

pub fn mean_forecast(y: &[f64], h: usize) -> Vec<f64> {
    let mean = if y.is_empty() {
        0.0
    } else {
        y.iter().sum::<f64>() / y.len() as f64
    };
    vec![mean; h]
}

fn constant_model(spec: &ForecastSpec, family: Family, value: f64, name: &str) -> FittedModel {
    FittedModel {
        spec: spec.clone(),
        model_used: family,
        coefficients: vec![(name.into(), value)],
        diagnostics: FitDiagnostics {
            converged: true,
            ..Default::default()
        },
        state: ModelState::Constant(value),
    }
}

/// Fits the family named by `spec` to `y`.
pub fn fit(y: &[f64], spec: &ForecastSpec) -> Result<FittedModel, ForecastError> {
    spec.validate()?;
    let needed = spec.min_length();
    if y.len() < needed {
        return Err(ForecastError::SeriesTooShort {
            family: spec.family,
            needed,
            got: y.len(),
        });
    }
    match spec.family {
        Family::Naive => Ok(constant_model(spec, Family::Naive, naive_forecast(y, 1)[0], "last")),
        Family::Mean => Ok(constant_model(spec, Family::Mean, mean_forecast(y, 1)[0], "mean")),
        Family::Ses | Family::Holt => fit_ses_holt(y, spec),
        Family::Ar => fit_ar(y, spec.order.p, spec),
        Family::Arima => fit_arima(y, spec.order, spec),
        Family::Garch => fit_garch(y, spec.order.p, spec.order.q, spec),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub values: Vec<f64>,
    pub model_used: Family,
    /// Why the naive fallback replaced the requested model, if it did.
    pub fallback: Option<String>,
}

fn plausibility_bound(y: &[f64]) -> f64 {
    1e6 * y.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

fn fit_and_forecast(y: &[f64], spec: &ForecastSpec) -> Result<(Vec<f64>, Family), ForecastError> {
    let model = fit(y, spec)?;
    let values = model.forecast(spec.horizon)?;
    let bound = plausibility_bound(y);
    if let Some(v) = values.iter().find(|v| !v.is_finite() || v.abs() > bound) {
        return Err(ForecastError::ExtremeForecast { value: *v, bound });
    }
    Ok((values, model.model_used))
}

/// Forecasts `spec.horizon` steps of `y`, applying the fallback policy and
/// clipping negatives when configured.
pub fn forecast_series(y: &[f64], spec: &ForecastSpec) -> Result<ForecastResult, ForecastError> {
    spec.validate()?;
    if y.is_empty() {
        return Err(ForecastError::SeriesTooShort {
            family: spec.family,
            needed: spec.min_length(),
            got: 0,
        });
    }
    let mut result = match fit_and_forecast(y, spec) {
        Ok((values, model_used)) => ForecastResult {
            values,
            model_used,
            fallback: None,
        },
        Err(e) if spec.fallback == FallbackMode::Naive && e.is_model_failure() => ForecastResult {
            values: naive_forecast(y, spec.horizon),
            model_used: Family::Naive,
            fallback: Some(e.to_string()),
        },
        Err(e) => return Err(e),
    };
    if spec.clip_negative {
        for v in &mut result.values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    Ok(result)
}

/// Per-step forecasted DFGs for one training window.
#[derive(Debug, Clone, PartialEq)]
pub struct DfgForecast {
    pub spec: ForecastSpec,
    pub train_len: usize,
    pub steps: Vec<Dfg>,
    pub pairs: BTreeMap<Pair, ForecastResult>,
}

impl DfgForecast {
    /// Edge-wise sum of all step graphs.
    pub fn window(&self) -> Dfg {
        self.steps
            .iter()
            .fold(None::<Dfg>, |acc, g| Some(acc.map_or_else(|| g.clone(), |a| a.merged(g))))
            .unwrap_or_default()
    }

    /// Edge-wise sum of steps `from..=to` (1-based).
    pub fn steps_sum(&self, from: usize, to: usize) -> Dfg {
        let mut g = Dfg::new(self.steps.first().map(|s| s.activities().clone()).unwrap_or_default());
        for step in &self.steps[from - 1..to] {
            g = g.merged(step);
        }
        g
    }

    /// Pairs whose forecast came from the naive fallback.
    pub fn fallbacks(&self) -> Vec<(&Pair, &str)> {
        self.pairs
            .iter()
            .filter_map(|(p, r)| r.fallback.as_deref().map(|why| (p, why)))
            .collect()
    }

    /// CSV with columns `from,to,step,value,model_used`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["from", "to", "step", "value", "model_used"])?;
        for ((f, t), r) in &self.pairs {
            for (k, v) in r.values.iter().enumerate() {
                w.write_record([
                    f.name(),
                    t.name(),
                    &(k + 1).to_string(),
                    &v.to_string(),
                    &r.model_used.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Forecasts every pair of `series` from its first `train_len` points and
/// assembles one DFG per forecast step.
pub fn forecast_dfg(series: &DfSeriesSet, train_len: usize, spec: &ForecastSpec) -> Result<DfgForecast, ForecastError> {
    spec.validate()?;
    if train_len == 0 || train_len > series.s {
        return Err(ForecastError::InvalidSpec(format!(
            "training length {train_len} outside 1..={}",
            series.s
        )));
    }
    let results: Vec<(Pair, Result<ForecastResult, ForecastError>)> = series
        .series
        .par_iter()
        .map(|(pair, v)| {
            let y: Vec<f64> = v[..train_len].iter().map(|&x| x as f64).collect();
            (pair.clone(), forecast_series(&y, spec))
        })
        .collect();

    let mut pairs = BTreeMap::new();
    for (pair, r) in results {
        match r {
            Ok(r) => {
                pairs.insert(pair, r);
            }
            Err(e) => {
                return Err(ForecastError::Pair {
                    pair: format!("{} -> {}", pair.0, pair.1),
                    source: Box::new(e),
                })
            }
        }
    }
    let steps = (0..spec.horizon)
        .map(|k| {
            let mut g = Dfg::new(series.activities.iter().cloned());
            for ((f, t), r) in &pairs {
                let w = r.values[k];
                if w > 0.0 {
                    g.add_weight(f.clone(), t.clone(), w).expect("series pairs are valid edges");
                }
            }
            g
        })
        .collect();
    Ok(DfgForecast {
        spec: spec.clone(),
        train_len,
        steps,
        pairs,
    })
}
