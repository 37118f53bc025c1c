//! Rolling-window evaluation of DFG forecasts.
//!
//! For a training length `ts` and horizon `h`, ten folds slide the training
//! endpoint back by one interval each: fold `f` trains on `1..=ts-f` and
//! tests on `ts-f+1..=ts+h-f`. In each fold the forecasted window DFG (sum
//! of the `h` step graphs) and the actual DFG of the test sublog are reduced
//! and scored by entropic relevance against the test sublog. Cells report
//! the MAPE of forecast against actual relevance over the folds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{Aggregated, AggregationError, AggregationKind, DEFAULT_INTERVALS};
use crate::dfg::{extract_dfg, reduce_dfg, Dfg};
use crate::event_log::EventLog;
use crate::forecasting::{forecast_dfg, ForecastError, ForecastSpec};
use crate::relevance::entropic_relevance;

pub const N_FOLDS: usize = 10;

/// Relevance above this is treated as a failed fold.
pub const RELEVANCE_CEILING: f64 = 1e3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid split: ts = {ts}, h = {h}, s = {s} (need h >= 1, ts >= {N_FOLDS}, ts + h <= s)")]
    InvalidSplit { s: usize, ts: usize, h: usize },
    #[error("reduction fraction {0} outside (0, 1]")]
    InvalidReduction(f64),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Spec(#[from] ForecastError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub f: usize,
    /// 1-based inclusive interval ranges.
    pub train: (usize, usize),
    pub test: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub s: usize,
    pub ts: usize,
    pub h: usize,
    pub folds: Vec<Fold>,
}

pub fn make_folds(s: usize, ts: usize, h: usize) -> Result<FoldPlan, EvalError> {
    if h == 0 || ts < N_FOLDS || ts + h > s {
        return Err(EvalError::InvalidSplit { s, ts, h });
    }
    let folds = (0..N_FOLDS)
        .map(|f| Fold {
            f,
            train: (1, ts - f),
            test: (ts - f + 1, ts + h - f),
        })
        .collect();
    Ok(FoldPlan { s, ts, h, folds })
}

/// Warning for plans whose shortest training window is below what the model
/// needs; those folds fall back to naive or fail in strict mode.
pub fn short_training_warning(plan: &FoldPlan, spec: &ForecastSpec) -> Option<String> {
    let shortest = plan.ts + 1 - N_FOLDS;
    (shortest < spec.min_length()).then(|| {
        format!(
            "{}: shortest training window {} < minimum length {}",
            spec.label(),
            shortest,
            spec.min_length()
        )
    })
}

/// Mean absolute percentage error of `forecast` against `actual`, in percent.
/// `None` when empty, when any value is non-finite or when an actual is zero.
pub fn mape(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for &(a, f) in pairs {
        if !a.is_finite() || !f.is_finite() || a == 0.0 {
            return None;
        }
        sum += ((a - f) / a).abs();
    }
    Some(100.0 * sum / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub kinds: Vec<AggregationKind>,
    pub intervals: usize,
    /// Family labels, e.g. `nav`, `arima212`.
    pub families: Vec<String>,
    pub ts: Vec<usize>,
    pub horizon: usize,
    /// Retained node fractions.
    pub reductions: Vec<f64>,
    pub strict: bool,
    /// Score each forecast step against its own interval and average,
    /// instead of scoring the summed window once.
    pub per_step: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            kinds: vec![AggregationKind::Equisized, AggregationKind::Equitemporal],
            intervals: DEFAULT_INTERVALS,
            families: ["nav", "arima212", "ar2", "hw", "garch"].map(String::from).to_vec(),
            ts: vec![25, 50, 75],
            horizon: 25,
            reductions: vec![1.0, 0.5, 0.25],
            strict: false,
            per_step: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub actual: Option<f64>,
    pub forecast: Option<f64>,
    /// Relevance of the training-window DFG on the test sublog.
    pub historical: Option<f64>,
    /// Why the fold is NA, or which pairs fell back to naive.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub log: String,
    pub kind: AggregationKind,
    pub ts: usize,
    pub family: String,
    pub reduction: f64,
    pub mape: Option<f64>,
    pub folds: Vec<FoldResult>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<Cell>,
}

impl EvalReport {
    pub fn merge(&mut self, other: EvalReport) {
        self.cells.extend(other.cells);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn bounded(r: f64) -> Option<f64> {
    (r.is_finite() && r <= RELEVANCE_CEILING).then_some(r)
}

fn relevance_of(g: &Dfg, log: &EventLog) -> Option<f64> {
    entropic_relevance(g, log).ok().and_then(|r| bounded(r.relevance))
}

/// One scoring target: a sublog and the actual DFG discovered from it.
struct Target {
    log: EventLog,
    actual: Dfg,
}

fn target(agg: &Aggregated, log: &EventLog, from: usize, to: usize) -> Result<Option<Target>, EvalError> {
    Ok(agg.sublog(log, from..=to)?.map(|sub| Target {
        actual: extract_dfg(&sub).expect("sublog is non-empty"),
        log: sub,
    }))
}

/// Scores of one fold at every reduction: `(actual, forecast, historical)`.
type Scores = Vec<(Option<f64>, Option<f64>, Option<f64>)>;

fn score(targets: &[(Option<&Target>, Dfg)], historical: Option<&Dfg>, reductions: &[f64]) -> Scores {
    reductions
        .iter()
        .map(|&r| {
            let mut acc = (Some(0.0), Some(0.0), historical.map(|_| 0.0));
            for (t, forecast) in targets {
                let Some(t) = t else {
                    return (None, None, None);
                };
                let reduce = |g: &Dfg| reduce_dfg(g, r).expect("validated fraction");
                let add = |sum: Option<f64>, v: Option<f64>| sum.zip(v).map(|(a, b)| a + b);
                acc.0 = add(acc.0, relevance_of(&reduce(&t.actual), &t.log));
                acc.1 = add(acc.1, relevance_of(&reduce(forecast), &t.log));
                if let Some(h) = historical {
                    acc.2 = add(acc.2, relevance_of(&reduce(h), &t.log));
                }
            }
            let n = targets.len() as f64;
            (acc.0.map(|v| v / n), acc.1.map(|v| v / n), acc.2.map(|v| v / n))
        })
        .collect()
}

/// Runs the evaluation grid on one log.
pub fn evaluate(log: &EventLog, log_name: &str, config: &EvalConfig) -> Result<EvalReport, EvalError> {
    if let Some(&r) = config.reductions.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(EvalError::InvalidReduction(r));
    }
    let specs: Vec<ForecastSpec> = config
        .families
        .iter()
        .map(|label| {
            let spec = ForecastSpec::from_label(label, config.horizon)?;
            let spec = if config.strict { spec.strict() } else { spec };
            spec.validate().map(|_| spec)
        })
        .collect::<Result<_, _>>()?;
    let plans: Vec<FoldPlan> = config
        .ts
        .iter()
        .map(|&ts| make_folds(config.intervals, ts, config.horizon))
        .collect::<Result<_, _>>()?;

    let mut report = EvalReport::default();
    for &kind in &config.kinds {
        let agg = Aggregated::new(log, kind, config.intervals)?;
        report.merge(evaluate_aggregated(log, log_name, &agg, &specs, &plans, config)?);
    }
    Ok(report)
}

fn evaluate_aggregated(
    log: &EventLog,
    log_name: &str,
    agg: &Aggregated,
    specs: &[ForecastSpec],
    plans: &[FoldPlan],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    // every interval range that is scored, built once and shared by families
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    for plan in plans {
        for fold in &plan.folds {
            if config.per_step {
                ranges.extend((fold.test.0..=fold.test.1).map(|i| (i, i)));
            } else {
                ranges.push(fold.test);
            }
        }
    }
    ranges.sort_unstable();
    ranges.dedup();
    let built: Vec<Option<Target>> = ranges
        .par_iter()
        .map(|&(a, b)| target(agg, log, a, b))
        .collect::<Result<_, _>>()?;
    let targets: BTreeMap<(usize, usize), Option<Target>> = ranges.into_iter().zip(built).collect();

    let tasks: Vec<(usize, usize, Fold)> = plans
        .iter()
        .enumerate()
        .flat_map(|(pi, plan)| (0..specs.len()).flat_map(move |si| plan.folds.iter().map(move |f| (pi, si, *f))))
        .collect();

    let outcomes: Vec<(Scores, Option<String>)> = tasks
        .par_iter()
        .map(|&(_, si, fold)| {
            let spec = &specs[si];
            let train_len = fold.train.1;
            let forecast = match forecast_dfg(&agg.series, train_len, spec) {
                Ok(fc) => fc,
                Err(e) => return (vec![(None, None, None); config.reductions.len()], Some(e.to_string())),
            };
            let historical = agg.series.window_dfg(1..=train_len).expect("train range is valid");
            let pairs: Vec<(Option<&Target>, Dfg)> = if config.per_step {
                (fold.test.0..=fold.test.1)
                    .enumerate()
                    .map(|(k, i)| (targets[&(i, i)].as_ref(), forecast.steps[k].clone()))
                    .collect()
            } else {
                vec![(targets[&fold.test].as_ref(), forecast.window())]
            };
            let fallbacks = forecast.fallbacks();
            let note = if pairs.iter().any(|(t, _)| t.is_none()) {
                Some("no events in test window".to_string())
            } else if !fallbacks.is_empty() {
                Some(format!("{} pairs fell back to naive", fallbacks.len()))
            } else {
                None
            };
            (score(&pairs, Some(&historical), &config.reductions), note)
        })
        .collect();

    let mut cells = Vec::new();
    for (pi, plan) in plans.iter().enumerate() {
        for (si, spec) in specs.iter().enumerate() {
            let base = (pi * specs.len() + si) * N_FOLDS;
            let fold_outcomes = &outcomes[base..base + N_FOLDS];
            for (ri, &reduction) in config.reductions.iter().enumerate() {
                let folds: Vec<FoldResult> = fold_outcomes
                    .iter()
                    .enumerate()
                    .map(|(f, (scores, note))| {
                        let (actual, forecast, historical) = scores[ri];
                        FoldResult {
                            fold: f,
                            actual,
                            forecast,
                            historical,
                            note: note.clone(),
                        }
                    })
                    .collect();
                let pairs: Option<Vec<(f64, f64)>> = folds.iter().map(|f| f.actual.zip(f.forecast)).collect();
                cells.push(Cell {
                    log: log_name.to_string(),
                    kind: agg.kind,
                    ts: plan.ts,
                    family: config.families[si].clone(),
                    reduction,
                    mape: pairs.and_then(|p| mape(&p)),
                    folds,
                    warning: short_training_warning(plan, spec),
                });
            }
        }
    }
    Ok(EvalReport { cells })
}

fn fmt_mape(m: Option<f64>) -> String {
    m.map_or_else(|| "NA".to_string(), |v| format!("{v:.2}"))
}

/// Long-format CSV: `log,aggregation,ts,family,reduction,mape`.
pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("log,aggregation,ts,family,reduction,mape\n");
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.log,
            c.kind,
            c.ts,
            c.family,
            c.reduction,
            fmt_mape(c.mape)
        );
    }
    out
}

/// Aligned text: one block per reduction, families as rows and
/// `log/aggregation/ts` as columns.
pub fn render_table(report: &EvalReport) -> String {
    let mut columns: Vec<(String, AggregationKind, usize)> = Vec::new();
    let mut families: Vec<String> = Vec::new();
    let mut reductions: Vec<f64> = Vec::new();
    for c in &report.cells {
        let col = (c.log.clone(), c.kind, c.ts);
        if !columns.contains(&col) {
            columns.push(col);
        }
        if !families.contains(&c.family) {
            families.push(c.family.clone());
        }
        if !reductions.contains(&c.reduction) {
            reductions.push(c.reduction);
        }
    }
    let headers: Vec<String> = columns.iter().map(|(l, k, ts)| format!("{l}/{k}/ts{ts}")).collect();
    let first_width = families.iter().map(String::len).max().unwrap_or(0).max("family".len());
    let widths: Vec<usize> = headers.iter().map(|h| h.len().max(6)).collect();

    let header_line = |out: &mut String| {
        let _ = write!(out, "{:<first_width$}", "family");
        for (h, w) in headers.iter().zip(&widths) {
            let _ = write!(out, "  {h:>w$}");
        }
        out.push('\n');
    };

    let mut out = String::new();
    if reductions.is_empty() {
        header_line(&mut out);
        return out;
    }
    for (i, &r) in reductions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "retained nodes: {:.0}%", r * 100.0);
        header_line(&mut out);
        for fam in &families {
            let _ = write!(out, "{fam:<first_width$}");
            for (col, w) in columns.iter().zip(&widths) {
                let cell = report
                    .cells
                    .iter()
                    .find(|c| c.family == *fam && c.reduction == r && (c.log.as_str(), c.kind, c.ts) == (col.0.as_str(), col.1, col.2));
                let text = cell.map_or_else(String::new, |c| fmt_mape(c.mape));
                let _ = write!(out, "  {text:>w$}");
            }
            out.push('\n');
        }
    }
    out
}
