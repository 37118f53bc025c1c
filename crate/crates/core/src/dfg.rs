//! Directly-follows graphs.
//!
//! A [`Dfg`] is a weighted directed graph over the activities of a log plus
//! the artificial [`Node::Start`] and [`Node::End`] nodes. Weights are real
//! so forecasted graphs share the same type as discovered ones. An edge is
//! present iff its weight is strictly positive.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::EventLog;

pub const START_NAME: &str = "__START__";
pub const END_NAME: &str = "__END__";

#[derive(Debug, Error)]
pub enum DfgError {
    #[error("event log contains no events")]
    EmptyLog,
    #[error("retain fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("invalid edge {0} -> {1}")]
    InvalidEdge(String, String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A DFG node. Ordering places `Start` first and `End` last.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Start,
    Activity(String),
    End,
}

impl Node {
    pub fn activity(name: impl Into<String>) -> Self {
        Node::Activity(name.into())
    }

    pub fn name(&self) -> &str {
        match self {
            Node::Start => START_NAME,
            Node::End => END_NAME,
            Node::Activity(a) => a,
        }
    }

    pub fn from_name(name: &str) -> Self {
        match name {
            START_NAME => Node::Start,
            END_NAME => Node::End,
            a => Node::Activity(a.to_string()),
        }
    }

    pub fn as_activity(&self) -> Option<&str> {
        match self {
            Node::Activity(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_activity(&self) -> bool {
        matches!(self, Node::Activity(_))
    }
}

impl std::fmt::Display for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub type Pair = (Node, Node);

/// `true` for pairs between two activities (no artificial endpoint).
pub fn is_activity_pair(pair: &Pair) -> bool {
    pair.0.is_activity() && pair.1.is_activity()
}

fn valid_edge(from: &Node, to: &Node) -> bool {
    *from != Node::End && *to != Node::Start
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dfg {
    activities: BTreeSet<String>,
    edges: BTreeMap<Pair, f64>,
}

impl Dfg {
    pub fn new(activities: impl IntoIterator<Item = String>) -> Self {
        Self {
            activities: activities.into_iter().collect(),
            edges: BTreeMap::new(),
        }
    }

    /// Adds `weight` to the edge. Non-positive totals remove the edge.
    /// Activities on the edge join the activity set.
    pub fn add_weight(&mut self, from: Node, to: Node, weight: f64) -> Result<(), DfgError> {
        if !valid_edge(&from, &to) || !weight.is_finite() {
            return Err(DfgError::InvalidEdge(from.to_string(), to.to_string()));
        }
        for n in [&from, &to] {
            if let Node::Activity(a) = n {
                if !self.activities.contains(a) {
                    self.activities.insert(a.clone());
                }
            }
        }
        let key = (from, to);
        let w = self.edges.get(&key).copied().unwrap_or(0.0) + weight;
        if w > 0.0 {
            self.edges.insert(key, w);
        } else {
            self.edges.remove(&key);
        }
        Ok(())
    }

    pub fn activities(&self) -> &BTreeSet<String> {
        &self.activities
    }

    pub fn edges(&self) -> &BTreeMap<Pair, f64> {
        &self.edges
    }

    pub fn weight(&self, from: &Node, to: &Node) -> f64 {
        self.edges
            .get(&(from.clone(), to.clone()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Inbound weight per activity (including edges from `Start`).
    pub fn node_freq(&self) -> BTreeMap<String, f64> {
        let mut freq: BTreeMap<String, f64> =
            self.activities.iter().map(|a| (a.clone(), 0.0)).collect();
        for ((_, to), w) in &self.edges {
            if let Node::Activity(a) = to {
                *freq.entry(a.clone()).or_default() += w;
            }
        }
        freq
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    /// Edge-wise sum; the activity set is the union.
    pub fn merged(&self, other: &Dfg) -> Dfg {
        let mut out = self.clone();
        out.activities.extend(other.activities.iter().cloned());
        for (pair, w) in &other.edges {
            *out.edges.entry(pair.clone()).or_default() += w;
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Dfg {
        let mut out = Dfg::new(self.activities.iter().cloned());
        for ((f, t), w) in &self.edges {
            // factor > 0 keeps every edge
            let _ = out.add_weight(f.clone(), t.clone(), w * factor);
        }
        out
    }

    /// Keeps only the given activities and the edges among them (plus
    /// endpoint edges of kept activities).
    pub fn restricted_to(&self, keep: &BTreeSet<String>) -> Dfg {
        let kept = |n: &Node| match n {
            Node::Activity(a) => keep.contains(a),
            _ => true,
        };
        Dfg {
            activities: self.activities.intersection(keep).cloned().collect(),
            edges: self
                .edges
                .iter()
                .filter(|((f, t), _)| kept(f) && kept(t))
                .map(|(k, w)| (k.clone(), *w))
                .collect(),
        }
    }
}

/// Directly-follows counts of a log, including `Start`/`End` edges.
pub fn extract_dfg(log: &EventLog) -> Result<Dfg, DfgError> {
    if log.traces().is_empty() {
        return Err(DfgError::EmptyLog);
    }
    let mut counts: BTreeMap<Pair, u64> = BTreeMap::new();
    for trace in log.traces() {
        let mut prev = Node::Start;
        for act in trace.activities() {
            let node = Node::activity(act);
            *counts.entry((prev, node.clone())).or_default() += 1;
            prev = node;
        }
        *counts.entry((prev, Node::End)).or_default() += 1;
    }
    let mut g = Dfg::new(log.alphabet().iter().cloned());
    g.edges = counts.into_iter().map(|(k, c)| (k, c as f64)).collect();
    Ok(g)
}

/// Number of activities retained at `fraction` out of `n`: `ceil(fraction * n)`,
/// at least one when `n > 0` and `fraction > 0`.
pub fn retained_count(fraction: f64, n: usize) -> usize {
    if n == 0 || fraction <= 0.0 {
        return 0;
    }
    // guard against 0.1 * 30 = 3.0000000000000004 rounding up
    let k = (fraction * n as f64 - 1e-9).ceil().max(1.0) as usize;
    k.min(n)
}

/// Activities ordered by descending score, ties broken by name.
fn ranked_activities(scores: &BTreeMap<String, f64>) -> Vec<&String> {
    let mut ranked: Vec<(&String, f64)> = scores.iter().map(|(a, w)| (a, *w)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().map(|(a, _)| a).collect()
}

fn top_activities(scores: &BTreeMap<String, f64>, fraction: f64) -> BTreeSet<String> {
    let k = retained_count(fraction, scores.len());
    ranked_activities(scores).into_iter().take(k).cloned().collect()
}

/// Node-frequency reduction: keeps the `ceil(retain_fraction * n)` most
/// frequent activities and drops every edge touching the others.
pub fn reduce_dfg(g: &Dfg, retain_fraction: f64) -> Result<Dfg, DfgError> {
    if !(retain_fraction > 0.0 && retain_fraction <= 1.0) {
        return Err(DfgError::InvalidFraction(retain_fraction));
    }
    let keep = top_activities(&g.node_freq(), retain_fraction);
    Ok(g.restricted_to(&keep))
}

/// Activity/path slider filtering.
///
/// `activity_pct` keeps the top fraction of activities by score (same rule
/// as [`reduce_dfg`], zero keeps none). Among the edges between kept nodes,
/// `path_pct` keeps the top fraction by weight; in addition every kept
/// activity keeps its heaviest incoming and heaviest outgoing edge.
/// Returns the kept activities and edges.
pub fn slider_selection(
    node_scores: &BTreeMap<String, f64>,
    edge_weights: &BTreeMap<Pair, f64>,
    activity_pct: f64,
    path_pct: f64,
) -> (BTreeSet<String>, BTreeSet<Pair>) {
    let activity_pct = activity_pct.clamp(0.0, 1.0);
    let path_pct = path_pct.clamp(0.0, 1.0);
    let keep = top_activities(node_scores, activity_pct);
    let kept = |n: &Node| match n {
        Node::Activity(a) => keep.contains(a),
        _ => true,
    };
    let mut candidates: Vec<(&Pair, f64)> = edge_weights
        .iter()
        .filter(|((f, t), w)| **w > 0.0 && kept(f) && kept(t))
        .map(|(p, w)| (p, *w))
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let k = if path_pct >= 1.0 {
        candidates.len()
    } else {
        retained_count(path_pct, candidates.len())
    };
    let mut edges: BTreeSet<Pair> = candidates.iter().take(k).map(|(p, _)| (*p).clone()).collect();
    // candidates are sorted heaviest first, so the first hit is the max edge
    for a in &keep {
        let node = Node::Activity(a.clone());
        if let Some((p, _)) = candidates.iter().find(|((_, t), _)| *t == node) {
            edges.insert((*p).clone());
        }
        if let Some((p, _)) = candidates.iter().find(|((f, _), _)| *f == node) {
            edges.insert((*p).clone());
        }
    }
    (keep, edges)
}

/// Applies [`slider_selection`] to a DFG.
pub fn filter_dfg(g: &Dfg, activity_pct: f64, path_pct: f64) -> Dfg {
    let (keep, edges) = slider_selection(&g.node_freq(), &g.edges, activity_pct, path_pct);
    Dfg {
        activities: keep,
        edges: g
            .edges
            .iter()
            .filter(|(p, _)| edges.contains(*p))
            .map(|(p, w)| (p.clone(), *w))
            .collect(),
    }
}

/// Annotated union of two DFGs, used to compare two time ranges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ADfg {
    activities: BTreeSet<String>,
    edges: BTreeMap<Pair, (f64, f64)>,
    node_values: BTreeMap<String, (f64, f64)>,
}

impl ADfg {
    pub fn activities(&self) -> &BTreeSet<String> {
        &self.activities
    }

    pub fn edges(&self) -> &BTreeMap<Pair, (f64, f64)> {
        &self.edges
    }

    pub fn node_values(&self) -> &BTreeMap<String, (f64, f64)> {
        &self.node_values
    }

    /// Slider filtering on the union graph: nodes are ranked by
    /// `max(v_left, v_right)`, edges by `w_left + w_right`.
    pub fn filtered(&self, activity_pct: f64, path_pct: f64) -> ADfg {
        let scores = self
            .node_values
            .iter()
            .map(|(a, (l, r))| (a.clone(), l.max(*r)))
            .collect();
        let weights = self.edges.iter().map(|(p, (l, r))| (p.clone(), l + r)).collect();
        let (keep, edges) = slider_selection(&scores, &weights, activity_pct, path_pct);
        ADfg {
            node_values: self
                .node_values
                .iter()
                .filter(|(a, _)| keep.contains(*a))
                .map(|(a, v)| (a.clone(), *v))
                .collect(),
            activities: keep,
            edges: self
                .edges
                .iter()
                .filter(|(p, _)| edges.contains(*p))
                .map(|(p, w)| (p.clone(), *w))
                .collect(),
        }
    }
}

pub fn adfg(left: &Dfg, right: &Dfg) -> ADfg {
    let activities: BTreeSet<String> = left.activities.union(&right.activities).cloned().collect();
    let mut edges: BTreeMap<Pair, (f64, f64)> = BTreeMap::new();
    for (p, w) in &left.edges {
        edges.entry(p.clone()).or_default().0 = *w;
    }
    for (p, w) in &right.edges {
        edges.entry(p.clone()).or_default().1 = *w;
    }
    let (lf, rf) = (left.node_freq(), right.node_freq());
    let node_values = activities
        .iter()
        .map(|a| {
            let l = lf.get(a).copied().unwrap_or(0.0);
            let r = rf.get(a).copied().unwrap_or(0.0);
            (a.clone(), (l, r))
        })
        .collect();
    ADfg {
        activities,
        edges,
        node_values,
    }
}

/// Diverging colour value in `[-1, 1]`: negative when the left range
/// dominates, positive when the right one does, 0 when both are zero.
pub fn colour_value(w_left: f64, w_right: f64) -> f64 {
    let total = w_left + w_right;
    if total <= 0.0 {
        0.0
    } else {
        (w_right - w_left) / total
    }
}

/// Red (-1) through black (0) to green (+1), as `#rrggbb`.
pub fn colour_hex(value: f64) -> String {
    let v = value.clamp(-1.0, 1.0);
    let channel = |x: f64| (x * 255.0).round() as u8;
    let (r, g) = if v < 0.0 { (channel(-v), 0) } else { (0, channel(v)) };
    format!("#{r:02x}{g:02x}00")
}

/// A graph that can be written as DOT or JSON.
#[derive(Debug, Clone, Copy)]
pub enum GraphRef<'a> {
    Dfg(&'a Dfg),
    ADfg(&'a ADfg),
}

impl<'a> From<&'a Dfg> for GraphRef<'a> {
    fn from(g: &'a Dfg) -> Self {
        GraphRef::Dfg(g)
    }
}

impl<'a> From<&'a ADfg> for GraphRef<'a> {
    fn from(g: &'a ADfg) -> Self {
        GraphRef::ADfg(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DotOptions {
    pub activity_pct: f64,
    pub path_pct: f64,
}

impl Default for DotOptions {
    fn default() -> Self {
        Self {
            activity_pct: 1.0,
            path_pct: 1.0,
        }
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn dot_node_decl(out: &mut String, node: &Node, label: &str) {
    let attrs = match node {
        Node::Start => "shape=circle, style=filled, fillcolor=\"#32cd32\"".to_string(),
        Node::End => "shape=doublecircle, style=filled, fillcolor=\"#ff6347\"".to_string(),
        Node::Activity(_) => "shape=box".to_string(),
    };
    let _ = writeln!(
        out,
        "  \"{}\" [label=\"{}\", {}];",
        dot_escape(node.name()),
        dot_escape(label),
        attrs
    );
}

pub fn export_dot(graph: GraphRef<'_>, options: &DotOptions) -> String {
    let mut out = String::from("digraph dfg {\n  rankdir=LR;\n");
    match graph {
        GraphRef::Dfg(g) => {
            let g = filter_dfg(g, options.activity_pct, options.path_pct);
            let freq = g.node_freq();
            dot_node_decl(&mut out, &Node::Start, "▶");
            for a in g.activities() {
                let label = format!("{a}\n{:.1}", freq.get(a).copied().unwrap_or(0.0));
                dot_node_decl(&mut out, &Node::activity(a.clone()), &label);
            }
            dot_node_decl(&mut out, &Node::End, "■");
            for ((f, t), w) in g.edges() {
                let _ = writeln!(
                    out,
                    "  \"{}\" -> \"{}\" [label=\"{:.1}\"];",
                    dot_escape(f.name()),
                    dot_escape(t.name()),
                    w
                );
            }
        }
        GraphRef::ADfg(g) => {
            let g = g.filtered(options.activity_pct, options.path_pct);
            dot_node_decl(&mut out, &Node::Start, "▶");
            for (a, (l, r)) in g.node_values() {
                let label = format!("{a}\n{l:.1} | {r:.1}");
                dot_node_decl(&mut out, &Node::activity(a.clone()), &label);
            }
            dot_node_decl(&mut out, &Node::End, "■");
            for ((f, t), (l, r)) in g.edges() {
                let _ = writeln!(
                    out,
                    "  \"{}\" -> \"{}\" [label=\"{:.1} | {:.1}\", color=\"{}\"];",
                    dot_escape(f.name()),
                    dot_escape(t.name()),
                    l,
                    r,
                    colour_hex(colour_value(*l, *r))
                );
            }
        }
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfgEdgeJson {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfgJson {
    pub activities: Vec<String>,
    pub start: String,
    pub end: String,
    pub edges: Vec<DfgEdgeJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ADfgEdgeJson {
    pub from: String,
    pub to: String,
    pub w_left: f64,
    pub w_right: f64,
    pub colour_value: f64,
    pub colour: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ADfgNodeJson {
    pub activity: String,
    pub v_left: f64,
    pub v_right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ADfgJson {
    pub activities: Vec<String>,
    pub start: String,
    pub end: String,
    pub nodes: Vec<ADfgNodeJson>,
    pub edges: Vec<ADfgEdgeJson>,
}

impl From<&Dfg> for DfgJson {
    fn from(g: &Dfg) -> Self {
        DfgJson {
            activities: g.activities.iter().cloned().collect(),
            start: START_NAME.into(),
            end: END_NAME.into(),
            edges: g
                .edges
                .iter()
                .map(|((f, t), w)| DfgEdgeJson {
                    from: f.name().into(),
                    to: t.name().into(),
                    weight: *w,
                })
                .collect(),
        }
    }
}

impl From<&ADfg> for ADfgJson {
    fn from(g: &ADfg) -> Self {
        ADfgJson {
            activities: g.activities.iter().cloned().collect(),
            start: START_NAME.into(),
            end: END_NAME.into(),
            nodes: g
                .node_values
                .iter()
                .map(|(a, (l, r))| ADfgNodeJson {
                    activity: a.clone(),
                    v_left: *l,
                    v_right: *r,
                })
                .collect(),
            edges: g
                .edges
                .iter()
                .map(|((f, t), (l, r))| {
                    let v = colour_value(*l, *r);
                    ADfgEdgeJson {
                        from: f.name().into(),
                        to: t.name().into(),
                        w_left: *l,
                        w_right: *r,
                        colour_value: v,
                        colour: colour_hex(v),
                    }
                })
                .collect(),
        }
    }
}

fn node_from_json(name: &str, start: &str, end: &str) -> Node {
    if name == start {
        Node::Start
    } else if name == end {
        Node::End
    } else {
        Node::activity(name)
    }
}

impl TryFrom<DfgJson> for Dfg {
    type Error = DfgError;

    fn try_from(j: DfgJson) -> Result<Self, DfgError> {
        let mut g = Dfg::new(j.activities);
        for e in j.edges {
            let (f, t) = (node_from_json(&e.from, &j.start, &j.end), node_from_json(&e.to, &j.start, &j.end));
            g.add_weight(f, t, e.weight)?;
        }
        Ok(g)
    }
}

impl TryFrom<ADfgJson> for ADfg {
    type Error = DfgError;

    fn try_from(j: ADfgJson) -> Result<Self, DfgError> {
        let mut g = ADfg {
            activities: j.activities.into_iter().collect(),
            ..ADfg::default()
        };
        for n in j.nodes {
            g.node_values.insert(n.activity, (n.v_left, n.v_right));
        }
        for e in j.edges {
            let (f, t) = (node_from_json(&e.from, &j.start, &j.end), node_from_json(&e.to, &j.start, &j.end));
            if !valid_edge(&f, &t) {
                return Err(DfgError::InvalidEdge(e.from, e.to));
            }
            if e.w_left > 0.0 || e.w_right > 0.0 {
                g.edges.insert((f, t), (e.w_left, e.w_right));
            }
        }
        Ok(g)
    }
}

pub fn export_json(graph: GraphRef<'_>) -> String {
    let res = match graph {
        GraphRef::Dfg(g) => serde_json::to_string_pretty(&DfgJson::from(g)),
        GraphRef::ADfg(g) => serde_json::to_string_pretty(&ADfgJson::from(g)),
    };
    res.expect("graph JSON serialization is infallible")
}

pub fn import_dfg_json(text: &str) -> Result<Dfg, DfgError> {
    Dfg::try_from(serde_json::from_str::<DfgJson>(text)?)
}

pub fn import_adfg_json(text: &str) -> Result<ADfg, DfgError> {
    ADfg::try_from(serde_json::from_str::<ADfgJson>(text)?)
}
