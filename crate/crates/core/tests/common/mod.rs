//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the library's estimators.

#![allow(dead_code)]

/// Solves `(X'X) b = X'y` by Gaussian elimination with partial pivoting.
pub fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = rows[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, &t) in rows.iter().zip(y) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += r[i] * r[j];
            }
            a[i][k] += r[i] * t;
        }
    }
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for row in 0..k {
            if row != col {
                let m = a[row][col] / a[col][col];
                let pivot_row = a[col].clone();
                for (x, p) in a[row].iter_mut().zip(pivot_row).skip(col) {
                    *x -= m * p;
                }
            }
        }
    }
    (0..k).map(|i| a[i][k] / a[i][i]).collect()
}

/// Conditional sum of squares of a zero-mean ARMA(1,1), conditioning on
/// `e_0 = 0` and summing from the second observation.
pub fn css_arma11(y: &[f64], phi: f64, theta: f64) -> f64 {
    let mut e_prev = 0.0;
    let mut sum = 0.0;
    for t in 1..y.len() {
        let e = y[t] - phi * y[t - 1] - theta * e_prev;
        sum += e * e;
        e_prev = e;
    }
    sum
}

/// Gaussian GARCH(1,1) log-likelihood with pre-sample variance and squared
/// residual set to the sample variance.
pub fn garch11_loglik(y: &[f64], mu: f64, omega: f64, alpha: f64, beta: f64) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let v = y.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let (mut s2_prev, mut e2_prev) = (v, v);
    let mut ll = 0.0;
    for &x in y {
        let s2 = omega + alpha * e2_prev + beta * s2_prev;
        let e2 = (x - mu) * (x - mu);
        ll += -0.5 * ((2.0 * std::f64::consts::PI).ln() + s2.ln() + e2 / s2);
        s2_prev = s2;
        e2_prev = e2;
    }
    ll
}

pub fn binary_entropy(p: f64) -> f64 {
    if p == 0.0 || p == 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Cost of a trace under the complete graph with uniform weights over `k`
/// activities: the first step picks one of `k` activities, every later
/// step one of `k` activities or the end.
pub fn flower_trace_bits(len: usize, k: usize) -> f64 {
    (k as f64).log2() + len as f64 * ((k + 1) as f64).log2()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
