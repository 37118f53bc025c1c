//! Differencing, autoregression by least squares, and ARIMA by conditional
//! sum of squares.

use nalgebra::{DMatrix, DVector};

use super::optim::{nelder_mead, NelderMeadOptions};
use super::{FitDiagnostics, FittedModel, ForecastError, ForecastSpec, ModelState, Order};
use crate::forecasting::Family;

/// `d`-fold first differences.
pub fn difference(y: &[f64], d: usize) -> Result<Vec<f64>, ForecastError> {
    if y.len() <= d {
        return Err(ForecastError::SeriesTooShort {
            family: Family::Arima,
            needed: d + 1,
            got: y.len(),
        });
    }
    let mut z = y.to_vec();
    for _ in 0..d {
        z = z.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(z)
}

/// Inverse of [`difference`] for values that continue a series: `tail` holds
/// the `d` original values immediately preceding `deltas`.
pub fn integrate(deltas: &[f64], tail: &[f64], d: usize) -> Vec<f64> {
    assert_eq!(tail.len(), d, "integrate needs exactly d tail values");
    // last value of each differencing level 0..d of the tail
    let mut lasts = Vec::with_capacity(d);
    let mut level = tail.to_vec();
    for _ in 0..d {
        lasts.push(*level.last().expect("non-empty level"));
        level = level.windows(2).map(|w| w[1] - w[0]).collect();
    }
    deltas
        .iter()
        .map(|&x| {
            let mut v = x;
            for k in (0..d).rev() {
                lasts[k] += v;
                v = lasts[k];
            }
            v
        })
        .collect()
}

/// Fitted ARMA recursion on the differenced scale plus what is needed to
/// undo the differencing.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ArmaState {
    pub c: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub e: Vec<f64>,
    pub tail: Vec<f64>,
}

impl ArmaState {
    pub fn forecast(&self, h: usize) -> Vec<f64> {
        let mut z = self.z.clone();
        let mut e = self.e.clone();
        for _ in 0..h {
            let n = z.len();
            let ar: f64 = self.phi.iter().enumerate().map(|(i, p)| p * z[n - 1 - i]).sum();
            let ma: f64 = self
                .theta
                .iter()
                .enumerate()
                .map(|(j, t)| if n > j { t * e[n - 1 - j] } else { 0.0 })
                .sum();
            z.push(self.c + ar + ma);
            e.push(0.0);
        }
        let deltas = &z[self.z.len()..];
        integrate(deltas, &self.tail, self.tail.len())
    }
}

/// Least squares via SVD. `None` when the design is rank deficient.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, allow_rank_deficient: bool) -> Option<DVector<f64>> {
    if x.ncols() == 0 {
        return Some(DVector::zeros(0));
    }
    let svd = x.clone().svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    let eps = 1e-10 * max.max(f64::MIN_POSITIVE);
    if !allow_rank_deficient && (max <= 0.0 || min <= eps) {
        return None;
    }
    svd.solve(y, eps).ok()
}

/// Lagged design: rows `t = start..n`, columns `[1?, z_{t-1}, .., z_{t-p}]`.
fn lagged_design(z: &[f64], p: usize, constant: bool, start: usize) -> (DMatrix<f64>, DVector<f64>) {
    let rows = z.len() - start;
    let cols = p + constant as usize;
    let x = DMatrix::from_fn(rows, cols, |r, c| {
        let t = start + r;
        if constant && c == 0 {
            1.0
        } else {
            z[t - (c + 1 - constant as usize)]
        }
    });
    (x, DVector::from_iterator(rows, z[start..].iter().copied()))
}

fn residuals(z: &[f64], c: f64, phi: &[f64], theta: &[f64]) -> Vec<f64> {
    let p = phi.len();
    let mut e = vec![0.0; z.len()];
    for t in p..z.len() {
        let ar: f64 = phi.iter().enumerate().map(|(i, f)| f * z[t - 1 - i]).sum();
        let ma: f64 = theta
            .iter()
            .enumerate()
            .map(|(j, th)| if t > j { th * e[t - 1 - j] } else { 0.0 })
            .sum();
        e[t] = z[t] - c - ar - ma;
    }
    e
}

fn css(z: &[f64], c: f64, phi: &[f64], theta: &[f64]) -> f64 {
    let e = residuals(z, c, phi, theta);
    let sse: f64 = e[phi.len()..].iter().map(|v| v * v).sum();
    if sse.is_finite() && sse < 1e300 {
        sse
    } else {
        f64::INFINITY
    }
}

fn named_coefficients(c: Option<f64>, phi: &[f64], theta: &[f64]) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    if let Some(c) = c {
        out.push(("const".to_string(), c));
    }
    out.extend(phi.iter().enumerate().map(|(i, v)| (format!("ar{}", i + 1), *v)));
    out.extend(theta.iter().enumerate().map(|(j, v)| (format!("ma{}", j + 1), *v)));
    out
}

/// AR(p) by ordinary least squares on the lagged design. A rank-deficient
/// design (e.g. a constant series) degrades to the mean forecast, recorded
/// in `model_used`.
pub fn fit_ar(y: &[f64], p: usize, spec: &ForecastSpec) -> Result<FittedModel, ForecastError> {
    if y.len() < p + 2 {
        return Err(ForecastError::SeriesTooShort {
            family: Family::Ar,
            needed: p + 2,
            got: y.len(),
        });
    }
    let (x, target) = lagged_design(y, p, spec.constant, p);
    let Some(beta) = least_squares(&x, &target, false) else {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        return Ok(FittedModel {
            spec: spec.clone(),
            model_used: Family::Mean,
            coefficients: vec![("mean".into(), mean)],
            diagnostics: FitDiagnostics {
                converged: true,
                ..Default::default()
            },
            state: ModelState::Constant(mean),
        });
    };
    let (c, phi) = if spec.constant {
        (beta[0], beta.as_slice()[1..].to_vec())
    } else {
        (0.0, beta.as_slice().to_vec())
    };
    let e = residuals(y, c, &phi, &[]);
    let sse = e[p..].iter().map(|v| v * v).sum();
    Ok(FittedModel {
        spec: spec.clone(),
        model_used: Family::Ar,
        coefficients: named_coefficients(spec.constant.then_some(c), &phi, &[]),
        diagnostics: FitDiagnostics {
            converged: true,
            sse,
            ..Default::default()
        },
        state: ModelState::Arma(ArmaState {
            c,
            phi,
            theta: vec![],
            z: y.to_vec(),
            e,
            tail: vec![],
        }),
    })
}

/// Hannan–Rissanen style starting values, clamped into (-0.9, 0.9).
fn initial_arma(z: &[f64], p: usize, q: usize, constant: bool) -> (f64, Vec<f64>, Vec<f64>) {
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let fallback = (if constant { mean } else { 0.0 }, vec![0.0; p], vec![0.0; q]);
    let m = (p + q).max(4).min(z.len() / 3);
    if m == 0 {
        return fallback;
    }
    let (x, t) = lagged_design(z, m, true, m);
    let Some(long) = least_squares(&x, &t, true) else {
        return fallback;
    };
    let mut ehat = vec![0.0; z.len()];
    for (r, v) in (&x * &long).iter().enumerate() {
        ehat[m + r] = z[m + r] - v;
    }
    let start = m + p.max(q);
    if z.len() <= start + p + q + 1 {
        return fallback;
    }
    let rows = z.len() - start;
    let cols = constant as usize + p + q;
    let x2 = DMatrix::from_fn(rows, cols, |r, c| {
        let t = start + r;
        let c = if constant {
            if c == 0 {
                return 1.0;
            }
            c - 1
        } else {
            c
        };
        if c < p {
            z[t - 1 - c]
        } else {
            ehat[t - 1 - (c - p)]
        }
    });
    let t2 = DVector::from_iterator(rows, z[start..].iter().copied());
    let Some(b) = least_squares(&x2, &t2, true) else {
        return fallback;
    };
    let b = b.as_slice();
    let off = constant as usize;
    let clamp = |v: f64| if v.is_finite() { v.clamp(-0.9, 0.9) } else { 0.0 };
    (
        if constant { b[0] } else { 0.0 },
        b[off..off + p].iter().map(|v| clamp(*v)).collect(),
        b[off + p..].iter().map(|v| clamp(*v)).collect(),
    )
}

/// ARIMA(p, d, q) by conditional sum of squares on the `d`-times differenced
/// series (pre-sample errors zero). Without MA terms the problem is linear
/// and solved exactly by least squares; otherwise Nelder–Mead is used with a
/// 500-iteration cap and `1e-6` parameter tolerance. The intercept is only
/// fitted for `d == 0`.
pub fn fit_arima(y: &[f64], order: Order, spec: &ForecastSpec) -> Result<FittedModel, ForecastError> {
    let Order { p, d, q } = order;
    if y.len() < p + d + q + 2 {
        return Err(ForecastError::SeriesTooShort {
            family: Family::Arima,
            needed: p + d + q + 2,
            got: y.len(),
        });
    }
    let z = difference(y, d)?;
    let constant = spec.constant && d == 0;
    let tail = y[y.len() - d..].to_vec();

    let (c, phi, theta, diagnostics) = if q == 0 {
        let (x, t) = lagged_design(&z, p, constant, p);
        let beta = least_squares(&x, &t, true).ok_or(ForecastError::SingularDesign)?;
        let (c, phi) = if constant {
            (beta[0], beta.as_slice()[1..].to_vec())
        } else {
            (0.0, beta.as_slice().to_vec())
        };
        let sse = css(&z, c, &phi, &[]);
        let diag = FitDiagnostics {
            converged: sse.is_finite(),
            sse,
            ..Default::default()
        };
        (c, phi, vec![], diag)
    } else {
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64;
        let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let (c0, phi0, theta0) = initial_arma(&z, p, q, constant);
        let unpack = |x: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
            let off = constant as usize;
            let c = if constant { x[0] * scale } else { 0.0 };
            (c, x[off..off + p].to_vec(), x[off + p..].to_vec())
        };
        let mut x0 = Vec::with_capacity(constant as usize + p + q);
        if constant {
            x0.push(c0 / scale);
        }
        x0.extend(phi0);
        x0.extend(theta0);
        // objective in units of the series variance keeps tolerances scale-free
        let norm = scale * scale;
        let res = nelder_mead(
            |x| {
                let (c, phi, theta) = unpack(x);
                css(&z, c, &phi, &theta) / norm
            },
            &x0,
            &NelderMeadOptions::default(),
        );
        let (c, phi, theta) = unpack(&res.x);
        let sse = res.f * norm;
        let diag = FitDiagnostics {
            converged: res.converged && sse.is_finite(),
            sse,
            iterations: res.iterations,
            ..Default::default()
        };
        (c, phi, theta, diag)
    };
    let e = residuals(&z, c, &phi, &theta);
    Ok(FittedModel {
        spec: spec.clone(),
        model_used: Family::Arima,
        coefficients: named_coefficients(constant.then_some(c), &phi, &theta),
        diagnostics,
        state: ModelState::Arma(ArmaState {
            c,
            phi,
            theta,
            z,
            e,
            tail,
        }),
    })
}
