//! Seeded generators for synthetic logs and time series.

use chrono::{Duration, TimeZone, Utc};
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Normal};

use crate::event_log::{Event, EventLog, Trace};

/// A first-order Markov chain over activities with an absorbing stop state.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    pub activities: Vec<String>,
    pub start: Vec<f64>,
    /// Row `i` holds the weights of moving from activity `i` to each
    /// activity, followed by the weight of stopping.
    pub transitions: Vec<Vec<f64>>,
}

impl MarkovChain {
    /// A fixed five-activity chain with mean trace length around five.
    pub fn five_state() -> Self {
        Self {
            activities: ["register", "check", "decide", "notify", "archive"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            start: vec![0.7, 0.3, 0.0, 0.0, 0.0],
            transitions: vec![
                vec![0.0, 0.6, 0.3, 0.1, 0.0, 0.0],
                vec![0.0, 0.2, 0.6, 0.2, 0.0, 0.0],
                vec![0.0, 0.2, 0.0, 0.5, 0.2, 0.1],
                vec![0.0, 0.0, 0.2, 0.0, 0.5, 0.3],
                vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            ],
        }
    }

    fn sample_trace(&self, rng: &mut ChaCha8Rng, max_len: usize) -> Vec<usize> {
        let start = WeightedIndex::new(&self.start).expect("start weights");
        let rows: Vec<WeightedIndex<f64>> = self
            .transitions
            .iter()
            .map(|r| WeightedIndex::new(r).expect("transition weights"))
            .collect();
        let stop = self.activities.len();
        let mut cur = start.sample(rng);
        let mut out = vec![cur];
        while out.len() < max_len {
            let next = rows[cur].sample(rng);
            if next == stop {
                break;
            }
            out.push(next);
            cur = next;
        }
        out
    }

    /// `n` traces whose cases start every ten minutes from 2020-01-01, with
    /// exponential gaps (mean 30 s) between events. Traces longer than 50
    /// events are cut.
    pub fn generate(&self, n: usize, seed: u64) -> EventLog {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gap = Exp::new(1.0 / 30.0).expect("rate");
        let origin = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let traces = (0..n)
            .map(|i| {
                let mut t = origin + Duration::minutes(10 * i as i64);
                let events = self
                    .sample_trace(&mut rng, 50)
                    .into_iter()
                    .enumerate()
                    .map(|(k, a)| {
                        if k > 0 {
                            let secs: f64 = gap.sample(&mut rng);
                            t += Duration::milliseconds((secs * 1000.0) as i64 + 1);
                        }
                        Event {
                            case_id: format!("case{i:06}"),
                            activity: self.activities[a].clone(),
                            timestamp: t,
                            seq_no: k,
                        }
                    })
                    .collect();
                Trace {
                    case_id: format!("case{i:06}"),
                    events,
                }
            })
            .collect();
        EventLog::from_traces(traces).expect("non-empty synthetic log")
    }
}

/// `n` periods of one hour, each holding one trace per variant. Event `k`
/// of variant `v` happens `10k + v` minutes into the period (at most ten
/// variants). With an `n`-interval equisized aggregation every interval
/// holds exactly one period, so naive forecasts reproduce the future.
pub fn periodic_log(n: usize, variants: &[&[&str]]) -> EventLog {
    assert!(variants.len() <= 10, "at most ten variants");
    let origin = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    let mut traces = Vec::with_capacity(n * variants.len());
    for i in 0..n {
        for (v, acts) in variants.iter().enumerate() {
            let case_id = format!("p{i:05}v{v}");
            let events = acts
                .iter()
                .enumerate()
                .map(|(k, a)| Event {
                    case_id: case_id.clone(),
                    activity: a.to_string(),
                    timestamp: origin + Duration::hours(i as i64) + Duration::minutes((10 * k + v) as i64),
                    seq_no: k,
                })
                .collect();
            traces.push(Trace { case_id, events });
        }
    }
    EventLog::from_traces(traces).expect("non-empty periodic log")
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma >= 0")
}

/// `y_t = c + sum_i phi_i y_{t-i} + e_t`, started at zero with a burn-in of
/// 200 discarded steps.
pub fn ar_series(c: f64, phi: &[f64], sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    arma_series(c, phi, &[], sigma, n, seed)
}

/// `y_t = c + sum phi_i y_{t-i} + e_t + sum theta_j e_{t-j}` with a burn-in
/// of 200 steps.
pub fn arma_series(c: f64, phi: &[f64], theta: &[f64], sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = normal(sigma);
    let burn = 200;
    let mut y = vec![0.0; burn + n];
    let mut e = vec![0.0; burn + n];
    for t in 0..burn + n {
        e[t] = dist.sample(&mut rng);
        let mut v = c + e[t];
        for (i, p) in phi.iter().enumerate() {
            if t > i {
                v += p * y[t - 1 - i];
            }
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j {
                v += th * e[t - 1 - j];
            }
        }
        y[t] = v;
    }
    y.split_off(burn)
}

/// GARCH(1,1) returns with mean `mu`, started at the stationary variance,
/// with a burn-in of 500 steps.
pub fn garch11_series(mu: f64, omega: f64, alpha: f64, beta: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = normal(1.0);
    let burn = 500;
    let mut s2 = omega / (1.0 - alpha - beta);
    let mut e_prev2 = s2;
    let mut out = Vec::with_capacity(n);
    for t in 0..burn + n {
        s2 = omega + alpha * e_prev2 + beta * s2;
        let e = s2.sqrt() * z.sample(&mut rng);
        e_prev2 = e * e;
        if t >= burn {
            out.push(mu + e);
        }
    }
    out
}

/// Random non-negative integer series, values in `0..max`.
pub fn count_series(n: usize, max: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use rand::Rng;
    (0..n).map(|_| rng.gen_range(0..max) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markov_log_is_reproducible() {
        let chain = MarkovChain::five_state();
        let a = chain.generate(50, 7);
        let b = chain.generate(50, 7);
        assert_eq!(a.traces().len(), 50);
        let acts = |l: &EventLog| l.traces().iter().map(|t| t.activities().collect::<Vec<_>>().join(",")).collect::<Vec<_>>();
        assert_eq!(acts(&a), acts(&b));
        assert!(a.alphabet().len() <= 5);
    }

    #[test]
    fn ar_series_is_seeded() {
        assert_eq!(ar_series(0.0, &[0.5], 1.0, 20, 1), ar_series(0.0, &[0.5], 1.0, 20, 1));
        assert_ne!(ar_series(0.0, &[0.5], 1.0, 20, 1), ar_series(0.0, &[0.5], 1.0, 20, 2));
    }
}
