//! GARCH(p, q) with a constant mean, fitted by Gaussian quasi-maximum
//! likelihood.
//!
//! Variance recursion: `s2_t = omega + sum_i alpha_i e2_{t-i} + sum_j beta_j s2_{t-j}`
//! with `e_t = y_t - mu`. Pre-sample variances and squared errors are set to
//! the sample variance. The optimizer works on standardized data and an
//! unconstrained parametrisation (`omega = exp(u)`, `alpha`/`beta` through a
//! softmax with an extra slack weight), so positivity and
//! `sum(alpha) + sum(beta) < 1` hold at every iterate.
//!
//! The point forecast is the mean `mu`; conditional variance forecasts are
//! kept in the diagnostics.

use super::optim::{nelder_mead, NelderMeadOptions};
use super::{FitDiagnostics, FittedModel, ForecastError, ForecastSpec, ModelState};
use crate::forecasting::Family;

pub const MIN_LENGTH: usize = 10;

struct Params {
    mu: f64,
    omega: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

fn unpack(x: &[f64], p: usize, q: usize) -> Params {
    let w: Vec<f64> = x[2..].iter().map(|v| v.exp()).collect();
    let denom = 1.0 + w.iter().sum::<f64>();
    Params {
        mu: x[0],
        omega: x[1].exp(),
        alpha: w[..q].iter().map(|v| v / denom).collect(),
        beta: w[q..q + p].iter().map(|v| v / denom).collect(),
    }
}

fn pack(p: &Params) -> Vec<f64> {
    let slack = 1.0 - p.alpha.iter().sum::<f64>() - p.beta.iter().sum::<f64>();
    let mut x = vec![p.mu, p.omega.ln()];
    x.extend(p.alpha.iter().chain(&p.beta).map(|v| (v / slack).ln()));
    x
}

/// Conditional variances `s2_0..s2_{T-1}` and squared residuals.
fn variances(y: &[f64], p: &Params, presample: f64) -> (Vec<f64>, Vec<f64>) {
    let e2: Vec<f64> = y.iter().map(|v| (v - p.mu).powi(2)).collect();
    let mut s2 = Vec::with_capacity(y.len());
    for t in 0..y.len() {
        let arch: f64 = p
            .alpha
            .iter()
            .enumerate()
            .map(|(i, a)| a * if t > i { e2[t - 1 - i] } else { presample })
            .sum();
        let garch: f64 = p
            .beta
            .iter()
            .enumerate()
            .map(|(j, b)| b * if t > j { s2[t - 1 - j] } else { presample })
            .sum();
        s2.push(p.omega + arch + garch);
    }
    (s2, e2)
}

/// Gaussian negative log-likelihood without the `T/2 ln(2 pi)` constant.
fn neg_log_lik(y: &[f64], p: &Params, presample: f64) -> f64 {
    let (s2, e2) = variances(y, p, presample);
    let mut nll = 0.0;
    for (s, e) in s2.iter().zip(&e2) {
        if !(s.is_finite() && *s > 0.0) {
            return f64::INFINITY;
        }
        nll += s.ln() + e / s;
    }
    0.5 * nll
}

pub fn fit_garch(y: &[f64], p: usize, q: usize, spec: &ForecastSpec) -> Result<FittedModel, ForecastError> {
    if y.len() < MIN_LENGTH {
        return Err(ForecastError::SeriesTooShort {
            family: Family::Garch,
            needed: MIN_LENGTH,
            got: y.len(),
        });
    }
    if p == 0 || q == 0 {
        return Err(ForecastError::InvalidSpec("garch needs p, q >= 1".into()));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let h = spec.horizon;

    let named = |pr: &Params| {
        let mut c = vec![("mu".to_string(), pr.mu), ("omega".to_string(), pr.omega)];
        c.extend(pr.alpha.iter().enumerate().map(|(i, v)| (format!("alpha{}", i + 1), *v)));
        c.extend(pr.beta.iter().enumerate().map(|(j, v)| (format!("beta{}", j + 1), *v)));
        c
    };

    if var <= 1e-24 * mean.abs().max(1.0) {
        // constant series: degenerate variance, mean is exact
        let pr = Params {
            mu: mean,
            omega: f64::MIN_POSITIVE,
            alpha: vec![0.0; q],
            beta: vec![0.0; p],
        };
        return Ok(FittedModel {
            spec: spec.clone(),
            model_used: Family::Garch,
            coefficients: named(&pr),
            diagnostics: FitDiagnostics {
                converged: true,
                variance_forecast: vec![0.0; h],
                ..Default::default()
            },
            state: ModelState::Constant(mean),
        });
    }

    let sd = var.sqrt();
    let z: Vec<f64> = y.iter().map(|v| (v - mean) / sd).collect();
    let init = Params {
        mu: 0.0,
        omega: 0.1,
        alpha: vec![0.1 / q as f64; q],
        beta: vec![0.8 / p as f64; p],
    };
    let res = nelder_mead(
        |x| neg_log_lik(&z, &unpack(x, p, q), 1.0),
        &pack(&init),
        &NelderMeadOptions::default(),
    );
    let std_params = unpack(&res.x, p, q);
    let params = Params {
        mu: mean + sd * std_params.mu,
        omega: var * std_params.omega,
        alpha: std_params.alpha,
        beta: std_params.beta,
    };
    let nll = neg_log_lik(y, &params, var);
    let log_likelihood = -nll - 0.5 * n * (2.0 * std::f64::consts::PI).ln();

    // variance forecasts: E[e2] = s2 beyond the sample
    let (mut s2, mut e2) = variances(y, &params, var);
    let mut variance_forecast = Vec::with_capacity(h);
    for _ in 0..h {
        let t = s2.len();
        let arch: f64 = params.alpha.iter().enumerate().map(|(i, a)| a * e2[t - 1 - i]).sum();
        let garch: f64 = params.beta.iter().enumerate().map(|(j, b)| b * s2[t - 1 - j]).sum();
        let next = params.omega + arch + garch;
        variance_forecast.push(next);
        s2.push(next);
        e2.push(next);
    }
    let sse = y.iter().map(|v| (v - params.mu).powi(2)).sum();

    Ok(FittedModel {
        spec: spec.clone(),
        model_used: Family::Garch,
        coefficients: named(&params),
        diagnostics: FitDiagnostics {
            converged: res.converged && nll.is_finite(),
            sse,
            iterations: res.iterations,
            log_likelihood: Some(log_likelihood),
            variance_forecast,
        },
        state: ModelState::Constant(params.mu),
    })
}
