//! Simple exponential smoothing and Holt's linear trend.
//!
//! Level and trend are initialised from the first two observations
//! (`level = y_1`, `trend = y_2 - y_1`) and updated from the second
//! observation on. Smoothing weights not fixed by the spec minimise the
//! one-step-ahead squared error: a 0.05 grid over `[0, 1]`, then a pattern
//! search down to a step of `1e-4`.

use super::{FitDiagnostics, FittedModel, ForecastError, ForecastSpec, ModelState};
use crate::forecasting::Family;

const GRID_STEP: f64 = 0.05;
const REFINE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
struct Params {
    alpha: f64,
    beta: f64,
    damping: f64,
    trend: bool,
}

/// One-step SSE and final `(level, trend)`.
fn run(y: &[f64], p: Params) -> (f64, f64, f64) {
    let mut level = y[0];
    let mut trend = if p.trend { y[1] - y[0] } else { 0.0 };
    let mut sse = 0.0;
    for &obs in &y[1..] {
        let damped = p.damping * trend;
        let e = obs - (level + damped);
        sse += e * e;
        let prev = level;
        level = p.alpha * obs + (1.0 - p.alpha) * (prev + damped);
        if p.trend {
            trend = p.beta * (level - prev) + (1.0 - p.beta) * damped;
        }
    }
    (sse, level, trend)
}

fn grid() -> impl Iterator<Item = f64> + Clone {
    (0..=(1.0 / GRID_STEP).round() as usize).map(|i| (i as f64 * GRID_STEP).min(1.0))
}

/// Minimises `sse` over the free coordinates in `[0, 1]^2`.
fn search(free: [bool; 2], start: [f64; 2], sse: impl Fn([f64; 2]) -> f64) -> ([f64; 2], usize) {
    let mut best = start;
    let mut best_f = f64::INFINITY;
    let mut evals = 0usize;
    let axis = |free: bool, fixed: f64| -> Vec<f64> {
        if free {
            grid().collect()
        } else {
            vec![fixed]
        }
    };
    for &a in &axis(free[0], start[0]) {
        for &b in &axis(free[1], start[1]) {
            let f = sse([a, b]);
            evals += 1;
            if f < best_f {
                best_f = f;
                best = [a, b];
            }
        }
    }
    let mut step = GRID_STEP / 2.0;
    while step >= REFINE_TOL {
        let mut improved = false;
        for k in 0..2 {
            if !free[k] {
                continue;
            }
            for dir in [-1.0, 1.0] {
                let mut cand = best;
                cand[k] = (cand[k] + dir * step).clamp(0.0, 1.0);
                let f = sse(cand);
                evals += 1;
                if f < best_f {
                    best_f = f;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (best, evals)
}

/// Fits SES (`spec.family == Ses`) or Holt's linear trend (`Holt`).
pub fn fit_ses_holt(y: &[f64], spec: &ForecastSpec) -> Result<FittedModel, ForecastError> {
    let trend = spec.family == Family::Holt;
    let needed = if trend { 3 } else { 2 };
    if y.len() < needed {
        return Err(ForecastError::SeriesTooShort {
            family: spec.family,
            needed,
            got: y.len(),
        });
    }
    let damping = if trend { spec.damping.unwrap_or(1.0) } else { 0.0 };
    let params = |ab: [f64; 2]| Params {
        alpha: ab[0],
        beta: ab[1],
        damping,
        trend,
    };
    let free = [spec.alpha.is_none(), trend && spec.beta.is_none()];
    let start = [spec.alpha.unwrap_or(0.5), spec.beta.unwrap_or(0.0)];
    let (ab, evals) = if free.iter().any(|f| *f) {
        search(free, start, |ab| run(y, params(ab)).0)
    } else {
        (start, 0)
    };
    let (sse, level, trend_v) = run(y, params(ab));

    let mut coefficients = vec![("alpha".to_string(), ab[0]), ("level".to_string(), level)];
    if trend {
        coefficients.push(("beta".into(), ab[1]));
        coefficients.push(("trend".into(), trend_v));
        if spec.damping.is_some() {
            coefficients.push(("damping".into(), damping));
        }
    }
    Ok(FittedModel {
        spec: spec.clone(),
        model_used: spec.family,
        coefficients,
        diagnostics: FitDiagnostics {
            converged: sse.is_finite(),
            sse,
            iterations: evals,
            ..Default::default()
        },
        state: ModelState::Smoothing {
            level,
            trend: trend_v,
            damping: if trend { damping } else { 1.0 },
        },
    })
}
