//! Derivative-free minimization (Nelder–Mead simplex).

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Convergence requires every simplex vertex within `xtol` of the best
    /// vertex in every coordinate...
    pub xtol: f64,
    /// ...and every vertex value within `ftol * max(1, |f_best|)` of the best.
    pub ftol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            xtol: 1e-6,
            ftol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn eval(f: &impl Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as
/// `+inf`, so infeasible regions can be signalled by returning infinity.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> OptimResult {
    let n = x0.len();
    if n == 0 {
        let v = eval(&f, x0);
        return OptimResult {
            x: vec![],
            f: v,
            iterations: 0,
            converged: v.is_finite(),
        };
    }
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] = if v[i] != 0.0 { v[i] * 1.05 } else { 0.00025 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(&f, x)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();

    loop {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        order = (0..=n).collect();

        let best = &simplex[0];
        let xspread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let fspread = values[1..].iter().map(|v| (v - values[0]).abs()).fold(0.0, f64::max);
        if values[0].is_finite() && xspread <= opts.xtol && fspread <= opts.ftol * values[0].abs().max(1.0) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let towards = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + coef * (w - c))
                .collect()
        };

        let xr = towards(-alpha);
        let fr = eval(&f, &xr);
        if fr < values[0] {
            let xe = towards(-gamma);
            let fe = eval(&f, &xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        // outside contraction when the reflection beat the worst vertex
        let outside = fr < values[n];
        let xc = towards(if outside { -rho } else { rho });
        let fc = eval(&f, &xc);
        let accept = if outside { fc <= fr } else { fc < values[n] };
        if accept {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = best
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + sigma * (v - b))
                .collect();
            values[i] = eval(&f, &simplex[i]);
        }
    }

    OptimResult {
        x: simplex[0].clone(),
        f: values[0],
        iterations,
        converged: converged && values[0].is_finite(),
    }
}
