//! Process model forecasting.
//!
//! Event logs are turned into one directly-follows time series per activity
//! pair, each series is forecast with a classical univariate model, and the
//! forecasts are reassembled into directly-follows graphs. Forecasted graphs
//! are scored against the actual future behaviour with entropic relevance.

pub mod aggregation;
pub mod dfg;
pub mod evaluation;
pub mod event_log;
pub mod fixtures;
pub mod forecasting;
pub mod relevance;
pub mod synthetic;

pub use aggregation::{AggregationKind, Aggregated, DfOccurrence, DfSeriesSet, IntervalPlan};
pub use dfg::{ADfg, Dfg, Node, Pair};
pub use event_log::{EventLog, Trace};
pub use forecasting::{Family, ForecastSpec};
pub use relevance::RelevanceReport;
