//! Event logs: parsing from CSV and XES, validation, and CSV export.
//!
//! Events are grouped into traces by case identifier. Within a trace, events
//! are ordered by timestamp, and events with equal timestamps keep their
//! original file order. All timestamps are normalized to UTC; timestamps
//! without an offset are taken to be UTC already.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime, SecondsFormat, TimeZone, Utc};
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader as XmlReader;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse timestamp `{value}`")]
    UnparseableTimestamp { row: usize, value: String },
    #[error("row {row}: empty activity name")]
    EmptyActivity { row: usize },
    #[error("event log contains no events")]
    EmptyLog,
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("trace {trace}, event {event}: missing attribute `{key}`")]
    MissingAttribute {
        trace: usize,
        event: usize,
        key: &'static str,
    },
    #[error("trace {trace}, event {event}: cannot parse timestamp `{value}`")]
    UnparseableXesTimestamp {
        trace: usize,
        event: usize,
        value: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: DateTime<Utc>,
    /// Position of the event in the source file.
    pub seq_no: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn activities(&self) -> impl Iterator<Item = &str> + '_ {
        self.events.iter().map(|e| e.activity.as_str())
    }
}

/// An immutable, validated event log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    traces: Vec<Trace>,
    alphabet: BTreeSet<String>,
    time_span: (DateTime<Utc>, DateTime<Utc>),
}

impl EventLog {
    /// Builds a log from a flat list of events. Traces appear in order of the
    /// first occurrence of their case id.
    pub fn from_events(events: Vec<Event>) -> Result<Self, LogError> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: HashMap<String, Vec<Event>> = HashMap::new();
        for ev in events {
            if !groups.contains_key(&ev.case_id) {
                order.push(ev.case_id.clone());
            }
            groups.entry(ev.case_id.clone()).or_default().push(ev);
        }
        let traces = order
            .into_iter()
            .map(|case_id| {
                let events = groups.remove(&case_id).unwrap_or_default();
                Trace { case_id, events }
            })
            .collect();
        Self::from_traces(traces)
    }

    /// Builds a log from traces, sorting each trace by `(timestamp, seq_no)`.
    /// Traces without events are dropped.
    pub fn from_traces(traces: Vec<Trace>) -> Result<Self, LogError> {
        let mut traces: Vec<Trace> = traces.into_iter().filter(|t| !t.events.is_empty()).collect();
        if traces.is_empty() {
            return Err(LogError::EmptyLog);
        }
        let mut alphabet = BTreeSet::new();
        let mut lo = DateTime::<Utc>::MAX_UTC;
        let mut hi = DateTime::<Utc>::MIN_UTC;
        for trace in &mut traces {
            trace.events.sort_by_key(|e| (e.timestamp, e.seq_no));
            for e in &trace.events {
                alphabet.insert(e.activity.clone());
                lo = lo.min(e.timestamp);
                hi = hi.max(e.timestamp);
            }
        }
        Ok(Self {
            traces,
            alphabet,
            time_span: (lo, hi),
        })
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn alphabet(&self) -> &BTreeSet<String> {
        &self.alphabet
    }

    pub fn time_span(&self) -> (DateTime<Utc>, DateTime<Utc>) {
        self.time_span
    }

    pub fn n_events(&self) -> usize {
        self.traces.iter().map(|t| t.events.len()).sum()
    }
}

/// Column names used to read a CSV log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvMapping {
    pub case: String,
    pub activity: String,
    pub timestamp: String,
}

impl Default for CsvMapping {
    fn default() -> Self {
        Self {
            case: "case".into(),
            activity: "activity".into(),
            timestamp: "timestamp".into(),
        }
    }
}

/// How timestamps are written in a CSV log.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TimestampFormat {
    /// RFC 3339 / ISO 8601, with or without offset, `T` or space separated,
    /// seconds optional.
    #[default]
    Iso8601,
    /// A `chrono` strftime pattern. Patterns with an offset (`%z`) are
    /// converted to UTC; date-only or time-only patterns are accepted.
    Pattern(String),
}

impl TimestampFormat {
    pub fn parse(&self, value: &str) -> Option<DateTime<Utc>> {
        let value = value.trim();
        match self {
            TimestampFormat::Iso8601 => parse_iso8601(value),
            TimestampFormat::Pattern(p) => parse_with_pattern(value, p),
        }
    }
}

const NAIVE_ISO_PATTERNS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

pub(crate) fn parse_iso8601(value: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(value) {
        return Some(dt.with_timezone(&Utc));
    }
    for p in ["%Y-%m-%dT%H:%M:%S%.f%z", "%Y-%m-%d %H:%M:%S%.f%z"] {
        if let Ok(dt) = DateTime::parse_from_str(value, p) {
            return Some(dt.with_timezone(&Utc));
        }
    }
    for p in NAIVE_ISO_PATTERNS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(value, p) {
            return Some(Utc.from_utc_datetime(&dt));
        }
    }
    NaiveDate::parse_from_str(value, "%Y-%m-%d")
        .ok()
        .map(|d| Utc.from_utc_datetime(&d.and_time(NaiveTime::MIN)))
}

fn parse_with_pattern(value: &str, pattern: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_str(value, pattern) {
        return Some(dt.with_timezone(&Utc));
    }
    if let Ok(dt) = NaiveDateTime::parse_from_str(value, pattern) {
        return Some(Utc.from_utc_datetime(&dt));
    }
    if let Ok(d) = NaiveDate::parse_from_str(value, pattern) {
        return Some(Utc.from_utc_datetime(&d.and_time(NaiveTime::MIN)));
    }
    // time-of-day only: anchored at the Unix epoch date
    NaiveTime::parse_from_str(value, pattern)
        .ok()
        .map(|t| Utc.from_utc_datetime(&NaiveDate::default().and_time(t)))
}

/// Reads a comma-separated log with a header row.
pub fn parse_csv<R: Read>(
    source: R,
    mapping: &CsvMapping,
    format: &TimestampFormat,
) -> Result<EventLog, LogError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| LogError::MissingColumn(name.to_string()))
    };
    let (ci, ai, ti) = (col(&mapping.case)?, col(&mapping.activity)?, col(&mapping.timestamp)?);

    let mut events = Vec::new();
    for (seq_no, record) in reader.records().enumerate() {
        let record = record?;
        // header is row 1
        let row = seq_no + 2;
        let field = |i: usize| record.get(i).unwrap_or("");
        let activity = field(ai).to_string();
        if activity.is_empty() {
            return Err(LogError::EmptyActivity { row });
        }
        let raw_ts = field(ti);
        let timestamp = format
            .parse(raw_ts)
            .ok_or_else(|| LogError::UnparseableTimestamp {
                row,
                value: raw_ts.to_string(),
            })?;
        events.push(Event {
            case_id: field(ci).to_string(),
            activity,
            timestamp,
            seq_no,
        });
    }
    EventLog::from_events(events)
}

/// Writes a log as CSV with columns `case,activity,timestamp` (RFC 3339, UTC).
/// Events are written trace by trace, in trace order, so re-parsing with the
/// default mapping reproduces the log.
pub fn write_csv<W: Write>(log: &EventLog, sink: W) -> Result<(), LogError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["case", "activity", "timestamp"])?;
    for trace in log.traces() {
        for e in &trace.events {
            w.write_record([
                e.case_id.as_str(),
                e.activity.as_str(),
                &e.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Default)]
struct PendingEvent {
    name: Option<String>,
    timestamp: Option<String>,
}

fn attr_value(start: &BytesStart<'_>, name: &[u8]) -> Result<Option<String>, LogError> {
    for attr in start.attributes() {
        let attr = attr.map_err(|e| LogError::MalformedXml(e.to_string()))?;
        if attr.key.as_ref() == name {
            let v = attr
                .unescape_value()
                .map_err(|e| LogError::MalformedXml(e.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

/// Reads an XES document. Only `concept:name` and `time:timestamp` are
/// interpreted; the trace-level `concept:name` becomes the case id (the
/// trace's position is used when absent).
pub fn parse_xes<R: BufRead>(source: R) -> Result<EventLog, LogError> {
    let mut reader = XmlReader::from_reader(source);
    let mut buf = Vec::new();

    let mut traces: Vec<Trace> = Vec::new();
    let mut seq_no = 0usize;
    // (trace case id, raw events)
    let mut current_trace: Option<(Option<String>, Vec<PendingEvent>)> = None;
    let mut current_event: Option<PendingEvent> = None;
    // nesting depth of attribute elements (lists, containers, nested attrs)
    let mut attr_depth = 0usize;
    let mut saw_log = false;

    loop {
        let ev = reader
            .read_event_into(&mut buf)
            .map_err(|e| LogError::MalformedXml(e.to_string()))?;
        let (start, is_empty) = match &ev {
            XmlEvent::Start(s) => (Some(s.clone()), false),
            XmlEvent::Empty(s) => (Some(s.clone()), true),
            _ => (None, false),
        };
        if let Some(s) = start {
            let local = s.local_name();
            match local.as_ref() {
                b"log" => saw_log = true,
                b"trace" if attr_depth == 0 => {
                    current_trace = Some((None, Vec::new()));
                    if is_empty {
                        finish_trace(&mut current_trace, &mut traces, &mut seq_no)?;
                    }
                }
                b"event" if attr_depth == 0 && current_trace.is_some() => {
                    current_event = Some(PendingEvent::default());
                    if is_empty {
                        if let (Some(ev), Some((_, evs))) = (current_event.take(), current_trace.as_mut()) {
                            evs.push(ev);
                        }
                    }
                }
                _ => {
                    if attr_depth == 0 {
                        let key = attr_value(&s, b"key")?;
                        match (key.as_deref(), current_event.as_mut(), current_trace.as_mut()) {
                            (Some("concept:name"), Some(ev), _) => ev.name = attr_value(&s, b"value")?,
                            (Some("time:timestamp"), Some(ev), _) => {
                                ev.timestamp = attr_value(&s, b"value")?
                            }
                            (Some("concept:name"), None, Some((case, _))) => {
                                *case = attr_value(&s, b"value")?
                            }
                            _ => {}
                        }
                    }
                    if !is_empty && (current_trace.is_some() || current_event.is_some()) {
                        attr_depth += 1;
                    }
                }
            }
            buf.clear();
            continue;
        }
        match ev {
            XmlEvent::End(e) => match e.local_name().as_ref() {
                b"trace" if attr_depth == 0 => {
                    finish_trace(&mut current_trace, &mut traces, &mut seq_no)?
                }
                b"event" if attr_depth == 0 => {
                    if let (Some(ev), Some((_, evs))) = (current_event.take(), current_trace.as_mut()) {
                        evs.push(ev);
                    }
                }
                _ => attr_depth = attr_depth.saturating_sub(1),
            },
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !saw_log {
        return Err(LogError::MalformedXml("no <log> element".into()));
    }
    if current_trace.is_some() {
        return Err(LogError::MalformedXml("unterminated <trace>".into()));
    }
    EventLog::from_traces(traces)
}

fn finish_trace(
    current: &mut Option<(Option<String>, Vec<PendingEvent>)>,
    traces: &mut Vec<Trace>,
    seq_no: &mut usize,
) -> Result<(), LogError> {
    let Some((case, pending)) = current.take() else {
        return Ok(());
    };
    let trace_idx = traces.len();
    let case_id = case.unwrap_or_else(|| trace_idx.to_string());
    let mut events = Vec::with_capacity(pending.len());
    for (event_idx, p) in pending.into_iter().enumerate() {
        let missing = |key| LogError::MissingAttribute {
            trace: trace_idx,
            event: event_idx,
            key,
        };
        let activity = p.name.filter(|n| !n.is_empty()).ok_or_else(|| missing("concept:name"))?;
        let raw = p.timestamp.ok_or_else(|| missing("time:timestamp"))?;
        let timestamp = parse_iso8601(raw.trim()).ok_or_else(|| LogError::UnparseableXesTimestamp {
            trace: trace_idx,
            event: event_idx,
            value: raw.clone(),
        })?;
        events.push(Event {
            case_id: case_id.clone(),
            activity,
            timestamp,
            seq_no: *seq_no,
        });
        *seq_no += 1;
    }
    traces.push(Trace { case_id, events });
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    /// A trace with one event has no directly-follows pair between activities.
    SingleEventTrace { case_id: String },
    /// Activity names that are identical after trimming whitespace.
    SuspiciousName { names: Vec<String> },
}

pub fn validate(log: &EventLog) -> Vec<Warning> {
    let mut warnings: Vec<Warning> = log
        .traces()
        .iter()
        .filter(|t| t.events.len() == 1)
        .map(|t| Warning::SingleEventTrace {
            case_id: t.case_id.clone(),
        })
        .collect();
    let mut by_trimmed: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for a in log.alphabet() {
        by_trimmed.entry(a.trim()).or_default().push(a.clone());
    }
    warnings.extend(
        by_trimmed
            .into_values()
            .filter(|names| names.len() > 1)
            .map(|names| Warning::SuspiciousName { names }),
    );
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;


    fn ts(s: &str) -> DateTime<Utc> {
        parse_iso8601(s).unwrap()
    }

    fn three_case_log() -> EventLog {
        parse_csv(crate::fixtures::THREE_CASE_CSV.as_bytes(), &CsvMapping::default(), &TimestampFormat::Iso8601).unwrap()
    }

    #[test]
    fn parses_example_log() {
        let log = three_case_log();
        assert_eq!(log.traces().len(), 3);
        assert_eq!(
            log.alphabet().iter().cloned().collect::<Vec<_>>(),
            vec!["a1".to_string(), "a2".to_string()]
        );
        assert_eq!(log.time_span(), (ts("2021-03-01 11:30"), ts("2021-03-01 12:45")));
        let t1: Vec<_> = log.traces()[0].activities().collect();
        assert_eq!(t1, ["a1", "a2", "a1", "a2"]);
        assert!(validate(&log).is_empty());
    }

    #[test]
    fn header_only_is_empty_log() {
        let err = parse_csv(
            "case,activity,timestamp\n".as_bytes(),
            &CsvMapping::default(),
            &TimestampFormat::Iso8601,
        )
        .unwrap_err();
        assert!(matches!(err, LogError::EmptyLog));
    }

    #[test]
    fn equal_timestamps_keep_file_order() {
        let src = "case,activity,timestamp\n1,b,2021-01-01T10:00:00Z\n1,a,2021-01-01T10:00:00Z\n1,c,2021-01-01T09:00:00Z\n";
        let log = parse_csv(src.as_bytes(), &CsvMapping::default(), &TimestampFormat::Iso8601).unwrap();
        let acts: Vec<_> = log.traces()[0].activities().collect();
        assert_eq!(acts, ["c", "b", "a"]);
    }

    #[test]
    fn missing_column_and_bad_timestamp() {
        let mapping = CsvMapping {
            case: "Case ID".into(),
            ..CsvMapping::default()
        };
        match parse_csv(crate::fixtures::THREE_CASE_CSV.as_bytes(), &mapping, &TimestampFormat::Iso8601) {
            Err(LogError::MissingColumn(c)) => assert_eq!(c, "Case ID"),
            other => panic!("unexpected {other:?}"),
        }
        let src = "case,activity,timestamp\n1,a,2021-01-01\n1,b,yesterday\n";
        match parse_csv(src.as_bytes(), &CsvMapping::default(), &TimestampFormat::Iso8601) {
            Err(LogError::UnparseableTimestamp { row, value }) => {
                assert_eq!(row, 3);
                assert_eq!(value, "yesterday");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn custom_pattern_and_offsets() {
        let src = "Case ID,Activity,Timestamp\n1,a1,11:30\n1,a2,11:45\n";
        let mapping = CsvMapping {
            case: "Case ID".into(),
            activity: "Activity".into(),
            timestamp: "Timestamp".into(),
        };
        let log = parse_csv(src.as_bytes(), &mapping, &TimestampFormat::Pattern("%H:%M".into())).unwrap();
        assert_eq!(log.time_span().0, ts("1970-01-01 11:30"));

        assert_eq!(ts("2021-01-01T12:00:00+02:00"), ts("2021-01-01T10:00:00Z"));
        assert_eq!(ts("2021-01-01T12:00:00.500+0200"), ts("2021-01-01T10:00:00.5Z"));
    }

    #[test]
    fn warnings() {
        let src = "case,activity,timestamp\n1,A,2021-01-01\n1,A ,2021-01-02\n2,A,2021-01-03\n";
        let log = parse_csv(src.as_bytes(), &CsvMapping::default(), &TimestampFormat::Iso8601).unwrap();
        let w = validate(&log);
        assert_eq!(
            w,
            vec![
                Warning::SingleEventTrace { case_id: "2".into() },
                Warning::SuspiciousName {
                    names: vec!["A".into(), "A ".into()]
                }
            ]
        );
    }

    const XES_TWO_CASES: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<log xes.version="1.0" xmlns="http://www.xes-standard.org/">
  <extension name="Concept" prefix="concept" uri="http://www.xes-standard.org/concept.xesext"/>
  <global scope="event"><string key="concept:name" value="__INVALID__"/></global>
  <string key="concept:name" value="three-cases"/>
  <trace>
    <string key="concept:name" value="1"/>
    <event><string key="concept:name" value="a1"/><string key="lifecycle:transition" value="complete"/><date key="time:timestamp" value="2021-03-01T11:30:00.000+00:00"/></event>
    <event><string key="concept:name" value="a2"/><date key="time:timestamp" value="2021-03-01T11:45:00.000+00:00"/></event>
    <event>
      <date key="time:timestamp" value="2021-03-01T12:10:00.000+00:00"/>
      <list key="resources"><string key="concept:name" value="nested"/></list>
      <string key="concept:name" value="a1"/>
    </event>
    <event><string key="concept:name" value="a2"/><date key="time:timestamp" value="2021-03-01T12:15:00.000+00:00"/></event>
  </trace>
  <trace>
    <string key="concept:name" value="2"/>
    <event><string key="concept:name" value="a1"/><date key="time:timestamp" value="2021-03-01T11:40:00.000+00:00"/></event>
    <event><string key="concept:name" value="a1"/><date key="time:timestamp" value="2021-03-01T11:55:00.000+00:00"/></event>
  </trace>
</log>"#;

    #[test]
    fn xes_matches_csv_cases() {
        let log = parse_xes(XES_TWO_CASES.as_bytes()).unwrap();
        assert_eq!(log.traces().len(), 2);
        assert_eq!(log.n_events(), 6);
        let csv_log = three_case_log();
        for (x, c) in log.traces().iter().zip(csv_log.traces()) {
            assert_eq!(x.case_id, c.case_id);
            let xa: Vec<_> = x.events.iter().map(|e| (&e.activity, e.timestamp)).collect();
            let ca: Vec<_> = c.events.iter().map(|e| (&e.activity, e.timestamp)).collect();
            assert_eq!(xa, ca);
        }
    }

    #[test]
    fn xes_errors() {
        let empty = r#"<log xes.version="1.0"><string key="concept:name" value="x"/></log>"#;
        assert!(matches!(parse_xes(empty.as_bytes()), Err(LogError::EmptyLog)));

        let missing = r#"<log><trace><event><string key="concept:name" value="a"/></event></trace></log>"#;
        match parse_xes(missing.as_bytes()) {
            Err(LogError::MissingAttribute { trace, event, key }) => {
                assert_eq!((trace, event, key), (0, 0, "time:timestamp"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let broken = r#"<log><trace><event></trace></log>"#;
        assert!(matches!(parse_xes(broken.as_bytes()), Err(LogError::MalformedXml(_))));
    }

    #[test]
    fn csv_round_trip() {
        let log = three_case_log();
        let mut out = Vec::new();
        write_csv(&log, &mut out).unwrap();
        let again = parse_csv(out.as_slice(), &CsvMapping::default(), &TimestampFormat::Iso8601).unwrap();
        // seq_no is the file position, which changes after regrouping
        let strip = |l: &EventLog| {
            l.traces()
                .iter()
                .map(|t| {
                    (
                        t.case_id.clone(),
                        t.events.iter().map(|e| (e.activity.clone(), e.timestamp)).collect::<Vec<_>>(),
                    )
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&log), strip(&again));
        assert_eq!(log.alphabet(), again.alphabet());
        assert_eq!(log.time_span(), again.time_span());
    }
}
