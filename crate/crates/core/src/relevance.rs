//! Entropic relevance of a DFG with respect to a log.
//!
//! The DFG is read as a stochastic process: from each node the next node is
//! drawn with probability proportional to the outgoing edge weights. A trace
//! that the graph can replay is encoded with `-log2` of its probability; any
//! other trace is encoded symbol by symbol with a uniform code over the
//! activity alphabet plus a stop symbol. Relevance adds the entropy of the
//! fit/non-fit selector to the mean per-trace cost. Lower is better.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dfg::{Dfg, Node};
use crate::event_log::{EventLog, Trace};

#[derive(Debug, Error)]
pub enum RelevanceError {
    #[error("event log contains no traces")]
    EmptyLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub relevance: f64,
    pub rho: f64,
    #[serde(rename = "fitting_bits")]
    pub fitting_cost_total: f64,
    #[serde(rename = "background_bits")]
    pub background_cost_total: f64,
    pub n_traces: usize,
}

impl RelevanceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Outgoing distribution of every node with positive out-weight.
pub fn transition_probabilities(g: &Dfg) -> BTreeMap<Node, BTreeMap<Node, f64>> {
    let mut out: BTreeMap<Node, BTreeMap<Node, f64>> = BTreeMap::new();
    for ((f, t), &w) in g.edges() {
        if w > 0.0 {
            out.entry(f.clone()).or_default().insert(t.clone(), w);
        }
    }
    for dist in out.values_mut() {
        let total: f64 = dist.values().sum();
        for p in dist.values_mut() {
            *p /= total;
        }
    }
    out
}

/// Binary entropy in bits, zero at both ends.
pub fn h0(rho: f64) -> f64 {
    if rho <= 0.0 || rho >= 1.0 {
        0.0
    } else {
        -rho * rho.log2() - (1.0 - rho) * (1.0 - rho).log2()
    }
}

/// Cost of one activity sequence: `(fits, bits)`.
fn sequence_cost(acts: &[&str], probs: &BTreeMap<Node, BTreeMap<Node, f64>>, alphabet_size: usize) -> (bool, f64) {
    let nodes = std::iter::once(Node::Start)
        .chain(acts.iter().map(|a| Node::activity(*a)))
        .chain(std::iter::once(Node::End))
        .collect::<Vec<_>>();
    let mut bits = 0.0;
    for w in nodes.windows(2) {
        match probs.get(&w[0]).and_then(|d| d.get(&w[1])) {
            Some(p) => bits -= p.log2(),
            None => {
                let n = acts.len() as f64;
                return (false, (n + 1.0) * ((alphabet_size + 1) as f64).log2());
            }
        }
    }
    // -log2(1) is -0.0; normalise
    (true, bits.max(0.0))
}

fn alphabet_size(g: &Dfg, log: &EventLog) -> usize {
    g.activities().union(log.alphabet()).count()
}

/// Cost of encoding `trace` with `g`. The background alphabet is the union
/// of the model's and the trace's activities.
pub fn trace_cost(trace: &Trace, g: &Dfg) -> (bool, f64) {
    let acts: Vec<&str> = trace.activities().collect();
    let mut alphabet = g.activities().clone();
    alphabet.extend(acts.iter().map(|a| a.to_string()));
    sequence_cost(&acts, &transition_probabilities(g), alphabet.len())
}

/// Entropic relevance of `g` over every trace of `log`.
pub fn entropic_relevance(g: &Dfg, log: &EventLog) -> Result<RelevanceReport, RelevanceError> {
    let n_traces = log.traces().len();
    if n_traces == 0 {
        return Err(RelevanceError::EmptyLog);
    }
    let probs = transition_probabilities(g);
    let size = alphabet_size(g, log);

    // identical traces cost the same; cost each variant once
    let mut variants: BTreeMap<Vec<&str>, usize> = BTreeMap::new();
    for t in log.traces() {
        *variants.entry(t.activities().collect()).or_default() += 1;
    }
    let mut fitting = 0.0;
    let mut background = 0.0;
    let mut n_fit = 0usize;
    for (acts, count) in &variants {
        let (fits, bits) = sequence_cost(acts, &probs, size);
        let total = bits * *count as f64;
        if fits {
            fitting += total;
            n_fit += count;
        } else {
            background += total;
        }
    }
    let rho = n_fit as f64 / n_traces as f64;
    Ok(RelevanceReport {
        relevance: h0(rho) + (fitting + background) / n_traces as f64,
        rho,
        fitting_cost_total: fitting,
        background_cost_total: background,
        n_traces,
    })
}
