//! Splitting a log's directly-follows occurrences into intervals and
//! building one count series per activity pair.
//!
//! Every occurrence is anchored at the timestamp of its second event; start
//! pairs `(Start, a)` are anchored at the first event and end pairs
//! `(a, End)` at the last one.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::ops::RangeInclusive;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dfg::{is_activity_pair, Dfg, Node, Pair};
use crate::event_log::{EventLog, Trace};

#[derive(Debug, Error)]
pub enum AggregationError {
    #[error("number of intervals must be at least 1")]
    ZeroIntervals,
    #[error("log spans zero duration; equitemporal intervals are undefined")]
    ZeroDuration,
    #[error("only {found} directly-follows occurrences for {intervals} intervals")]
    TooFewOccurrences { found: usize, intervals: usize },
    #[error("interval range {from}..={to} outside 1..={s}")]
    InvalidRange { from: usize, to: usize, s: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationKind {
    Equitemporal,
    Equisized,
}

impl std::str::FromStr for AggregationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "equitemporal" | "equitemp" | "time" => Ok(Self::Equitemporal),
            "equisized" | "equisize" | "size" => Ok(Self::Equisized),
            other => Err(format!("unknown aggregation `{other}`")),
        }
    }
}

impl std::fmt::Display for AggregationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Equitemporal => "equitemporal",
            Self::Equisized => "equisized",
        })
    }
}

/// Default number of intervals.
pub const DEFAULT_INTERVALS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfOccurrence {
    pub pair: Pair,
    pub anchor_time: DateTime<Utc>,
    pub case_id: String,
    /// Index of the trace in the log.
    pub trace_idx: usize,
    /// Event whose arrival this occurrence records (the second event of the
    /// pair); `None` for end pairs.
    pub event_idx: Option<usize>,
}

fn trace_occurrences(trace_idx: usize, trace: &Trace, out: &mut Vec<DfOccurrence>) {
    let mut prev = Node::Start;
    for (i, e) in trace.events.iter().enumerate() {
        let node = Node::activity(e.activity.clone());
        out.push(DfOccurrence {
            pair: (prev, node.clone()),
            anchor_time: e.timestamp,
            case_id: trace.case_id.clone(),
            trace_idx,
            event_idx: Some(i),
        });
        prev = node;
    }
    if let Some(last) = trace.events.last() {
        out.push(DfOccurrence {
            pair: (prev, Node::End),
            anchor_time: last.timestamp,
            case_id: trace.case_id.clone(),
            trace_idx,
            event_idx: None,
        });
    }
}

/// All directly-follows occurrences of the log, sorted by
/// `(anchor_time, case_id, pair)`.
pub fn collect_occurrences(log: &EventLog) -> Vec<DfOccurrence> {
    let mut out = Vec::with_capacity(log.n_events() + log.traces().len());
    for (i, t) in log.traces().iter().enumerate() {
        trace_occurrences(i, t, &mut out);
    }
    // stable: identical keys keep trace order
    out.sort_by(|a, b| {
        (a.anchor_time, &a.case_id, &a.pair).cmp(&(b.anchor_time, &b.case_id, &b.pair))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Boundaries {
    /// `s + 1` instants; interval `i` is `[b_i, b_{i+1})`, the last one closed.
    Temporal(Vec<DateTime<Utc>>),
    /// Per interval, the half-open index range into the sorted stream of
    /// activity-pair occurrences, and the anchor-time range it covers.
    Sized(Vec<SizedBlock>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizedBlock {
    pub start: usize,
    pub end: usize,
    pub first_time: DateTime<Utc>,
    pub last_time: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalPlan {
    pub kind: AggregationKind,
    pub s: usize,
    pub boundaries: Boundaries,
}

impl IntervalPlan {
    /// Interval index (0-based) for each occurrence of a stream sorted as by
    /// [`collect_occurrences`].
    pub fn assign(&self, occurrences: &[DfOccurrence]) -> Vec<usize> {
        match &self.boundaries {
            Boundaries::Temporal(b) => {
                let start = b[0];
                let span = (b[self.s] - start).num_nanoseconds().unwrap_or(i64::MAX) as i128;
                let s = self.s as i128;
                occurrences
                    .iter()
                    .map(|o| {
                        let x = (o.anchor_time - start).num_nanoseconds().unwrap_or(0) as i128;
                        ((x * s).div_euclid(span.max(1))).clamp(0, s - 1) as usize
                    })
                    .collect()
            }
            Boundaries::Sized(blocks) => {
                let mut k = 0usize;
                occurrences
                    .iter()
                    .map(|o| {
                        if is_activity_pair(&o.pair) {
                            let block = blocks.iter().position(|b| k < b.end).unwrap_or(blocks.len() - 1);
                            k += 1;
                            block
                        } else {
                            endpoint_block(blocks, o.anchor_time, o.pair.0 == Node::Start)
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Block for a start/end occurrence: the earliest block whose anchor-time
/// range contains `t`. In a gap between blocks a start goes to the block
/// after it and an end to the block before it, keeping both with the work
/// of their trace. Times outside all blocks clamp to the first/last block.
fn endpoint_block(blocks: &[SizedBlock], t: DateTime<Utc>, is_start: bool) -> usize {
    if let Some(i) = blocks.iter().position(|b| b.first_time <= t && t <= b.last_time) {
        return i;
    }
    if is_start {
        blocks.iter().position(|b| b.first_time > t).unwrap_or(blocks.len() - 1)
    } else {
        blocks.iter().rposition(|b| b.last_time < t).unwrap_or(0)
    }
}

/// `s` intervals of equal duration over the log's time span.
pub fn plan_equitemporal(log: &EventLog, s: usize) -> Result<IntervalPlan, AggregationError> {
    if s == 0 {
        return Err(AggregationError::ZeroIntervals);
    }
    let (lo, hi) = log.time_span();
    let span = (hi - lo).num_nanoseconds().ok_or(AggregationError::ZeroDuration)? as i128;
    if span <= 0 {
        return Err(AggregationError::ZeroDuration);
    }
    let boundaries = (0..=s as i128)
        .map(|i| lo + Duration::nanoseconds((span * i / s as i128) as i64))
        .collect();
    Ok(IntervalPlan {
        kind: AggregationKind::Equitemporal,
        s,
        boundaries: Boundaries::Temporal(boundaries),
    })
}

/// Sizes of `s` contiguous blocks over `n` items, larger blocks first.
pub fn block_sizes(n: usize, s: usize) -> Vec<usize> {
    let (q, r) = (n / s, n % s);
    (0..s).map(|i| if i < r { q + 1 } else { q }).collect()
}

/// `s` intervals holding equal numbers (up to one) of activity-pair
/// occurrences. Start/end occurrences do not count towards the sizes.
pub fn plan_equisized(log: &EventLog, s: usize) -> Result<IntervalPlan, AggregationError> {
    plan_equisized_from(&collect_occurrences(log), s)
}

fn plan_equisized_from(occurrences: &[DfOccurrence], s: usize) -> Result<IntervalPlan, AggregationError> {
    if s == 0 {
        return Err(AggregationError::ZeroIntervals);
    }
    let times: Vec<DateTime<Utc>> = occurrences
        .iter()
        .filter(|o| is_activity_pair(&o.pair))
        .map(|o| o.anchor_time)
        .collect();
    if times.len() < s {
        return Err(AggregationError::TooFewOccurrences {
            found: times.len(),
            intervals: s,
        });
    }
    let mut start = 0;
    let blocks = block_sizes(times.len(), s)
        .into_iter()
        .map(|size| {
            let b = SizedBlock {
                start,
                end: start + size,
                first_time: times[start],
                last_time: times[start + size - 1],
            };
            start += size;
            b
        })
        .collect();
    Ok(IntervalPlan {
        kind: AggregationKind::Equisized,
        s,
        boundaries: Boundaries::Sized(blocks),
    })
}

pub fn plan(log: &EventLog, kind: AggregationKind, s: usize) -> Result<IntervalPlan, AggregationError> {
    match kind {
        AggregationKind::Equitemporal => plan_equitemporal(log, s),
        AggregationKind::Equisized => plan_equisized(log, s),
    }
}

/// One count series per directly-follows pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DfSeriesSet {
    pub s: usize,
    pub series: BTreeMap<Pair, Vec<u64>>,
    pub plan: IntervalPlan,
    /// Activities of the underlying log, kept so forecasted graphs carry the
    /// full alphabet.
    pub activities: BTreeSet<String>,
}

impl DfSeriesSet {
    fn check_range(&self, range: &RangeInclusive<usize>) -> Result<(), AggregationError> {
        let (from, to) = (*range.start(), *range.end());
        if from == 0 || from > to || to > self.s {
            return Err(AggregationError::InvalidRange { from, to, s: self.s });
        }
        Ok(())
    }

    /// DFG of the intervals in `range` (1-based, inclusive).
    pub fn window_dfg(&self, range: RangeInclusive<usize>) -> Result<Dfg, AggregationError> {
        self.check_range(&range)?;
        let mut g = Dfg::new(self.activities.iter().cloned());
        for ((f, t), v) in &self.series {
            let w: u64 = v[range.start() - 1..*range.end()].iter().sum();
            if w > 0 {
                g.add_weight(f.clone(), t.clone(), w as f64)
                    .expect("series pairs are valid edges");
            }
        }
        Ok(g)
    }

    /// Series truncated to the first `len` intervals.
    pub fn truncated(&self, len: usize) -> DfSeriesSet {
        let len = len.min(self.s);
        DfSeriesSet {
            s: len,
            series: self
                .series
                .iter()
                .map(|(p, v)| (p.clone(), v[..len].to_vec()))
                .collect(),
            plan: self.plan.clone(),
            activities: self.activities.clone(),
        }
    }

    /// Drops pairs involving the artificial start or end node.
    pub fn without_endpoints(&self) -> DfSeriesSet {
        DfSeriesSet {
            series: self
                .series
                .iter()
                .filter(|(p, _)| is_activity_pair(p))
                .map(|(p, v)| (p.clone(), v.clone()))
                .collect(),
            ..self.clone()
        }
    }

    /// Activity-pair occurrences per interval.
    pub fn interval_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.s];
        for (p, v) in &self.series {
            if is_activity_pair(p) {
                for (t, x) in totals.iter_mut().zip(v) {
                    *t += x;
                }
            }
        }
        totals
    }

    /// Wide CSV: `from,to,v1..vs`, one row per pair.
    pub fn write_wide_csv<W: Write>(&self, sink: W) -> Result<(), AggregationError> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["from".to_string(), "to".to_string()];
        header.extend((1..=self.s).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for ((f, t), v) in &self.series {
            let mut row = vec![f.name().to_string(), t.name().to_string()];
            row.extend(v.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Counts occurrences per pair and interval.
pub fn build_series(occurrences: &[DfOccurrence], plan: &IntervalPlan) -> DfSeriesSet {
    build_series_assigned(occurrences, &plan.assign(occurrences), plan)
}

fn build_series_assigned(occurrences: &[DfOccurrence], assignment: &[usize], plan: &IntervalPlan) -> DfSeriesSet {
    let mut series: BTreeMap<Pair, Vec<u64>> = BTreeMap::new();
    let mut activities = BTreeSet::new();
    for (o, &i) in occurrences.iter().zip(assignment) {
        series.entry(o.pair.clone()).or_insert_with(|| vec![0; plan.s])[i] += 1;
        for n in [&o.pair.0, &o.pair.1] {
            if let Node::Activity(a) = n {
                if !activities.contains(a) {
                    activities.insert(a.clone());
                }
            }
        }
    }
    DfSeriesSet {
        s: plan.s,
        series,
        plan: plan.clone(),
        activities,
    }
}

/// A log aggregated into intervals, keeping enough bookkeeping to cut
/// sublogs for any interval range.
#[derive(Debug, Clone)]
pub struct Aggregated {
    pub kind: AggregationKind,
    pub occurrences: Vec<DfOccurrence>,
    /// 0-based interval of each occurrence.
    pub assignment: Vec<usize>,
    pub series: DfSeriesSet,
}

impl Aggregated {
    pub fn new(log: &EventLog, kind: AggregationKind, s: usize) -> Result<Self, AggregationError> {
        let occurrences = collect_occurrences(log);
        let plan = match kind {
            AggregationKind::Equitemporal => plan_equitemporal(log, s)?,
            AggregationKind::Equisized => plan_equisized_from(&occurrences, s)?,
        };
        let assignment = plan.assign(&occurrences);
        let series = build_series_assigned(&occurrences, &assignment, &plan);
        Ok(Self {
            kind,
            occurrences,
            assignment,
            series,
        })
    }

    pub fn s(&self) -> usize {
        self.series.s
    }

    /// The events recorded in the intervals of `range` (1-based, inclusive):
    /// each event belongs to the interval of the occurrence that ends in it.
    /// Traces keep their order; traces with no such event are dropped.
    /// Returns `None` when the window holds no events.
    pub fn sublog(&self, log: &EventLog, range: RangeInclusive<usize>) -> Result<Option<EventLog>, AggregationError> {
        self.series.check_range(&range)?;
        let (lo, hi) = (range.start() - 1, range.end() - 1);
        let mut keep: Vec<Vec<bool>> = log.traces().iter().map(|t| vec![false; t.events.len()]).collect();
        for (o, &i) in self.occurrences.iter().zip(&self.assignment) {
            if let (Some(e), true) = (o.event_idx, (lo..=hi).contains(&i)) {
                keep[o.trace_idx][e] = true;
            }
        }
        let traces: Vec<Trace> = log
            .traces()
            .iter()
            .zip(keep)
            .map(|(t, k)| Trace {
                case_id: t.case_id.clone(),
                events: t.events.iter().zip(k).filter(|(_, k)| *k).map(|(e, _)| e.clone()).collect(),
            })
            .collect();
        Ok(EventLog::from_traces(traces).ok())
    }

    /// Anchor-time bounds of an interval (1-based): the plan boundaries for
    /// equitemporal plans, the first and last activity-pair anchor for
    /// equisized ones.
    pub fn interval_bounds(&self, i: usize) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        if i == 0 || i > self.s() {
            return None;
        }
        match &self.series.plan.boundaries {
            Boundaries::Temporal(b) => Some((b[i - 1], b[i])),
            Boundaries::Sized(blocks) => blocks.get(i - 1).map(|b| (b.first_time, b.last_time)),
        }
    }
}
