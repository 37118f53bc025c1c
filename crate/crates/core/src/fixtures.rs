//! Small hand-written logs shared by tests, examples and the CLI smoke runs.

use chrono::{Duration, TimeZone, Utc};

use crate::event_log::{parse_csv, CsvMapping, Event, EventLog, TimestampFormat};

/// Three cases over activities `a1`/`a2` between 11:30 and 12:45.
pub const THREE_CASE_CSV: &str = "case,activity,timestamp
1,a1,2021-03-01 11:30
1,a2,2021-03-01 11:45
1,a1,2021-03-01 12:10
1,a2,2021-03-01 12:15
2,a1,2021-03-01 11:40
2,a1,2021-03-01 11:55
3,a1,2021-03-01 12:20
3,a2,2021-03-01 12:40
3,a2,2021-03-01 12:45
";

pub fn three_case_log() -> EventLog {
    parse_csv(
        THREE_CASE_CSV.as_bytes(),
        &CsvMapping::default(),
        &TimestampFormat::Iso8601,
    )
    .expect("fixture parses")
}

/// Builds a log from `(case, activities)`; every event gets its own minute,
/// in the order given.
pub fn log_from(cases: &[(&str, &[&str])]) -> EventLog {
    let base = Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap();
    let mut events = Vec::new();
    for (case, acts) in cases {
        for a in acts.iter() {
            let seq_no = events.len();
            events.push(Event {
                case_id: case.to_string(),
                activity: a.to_string(),
                timestamp: base + Duration::minutes(seq_no as i64),
                seq_no,
            });
        }
    }
    EventLog::from_events(events).expect("non-empty fixture")
}
