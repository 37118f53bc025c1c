//! `pmf`: build directly-follows series from an event log, forecast them,
//! run the evaluation grid, or serve the interactive API.
//!
//! Exit codes: 0 ok, 2 input error, 3 model error in strict mode, 4
//! environment error (e.g. the port is taken).

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flate2::read::GzDecoder;
use pmf_core::aggregation::{Aggregated, AggregationKind, DEFAULT_INTERVALS};
use pmf_core::dfg::{export_dot, export_json, DotOptions, GraphRef};
use pmf_core::evaluation::{evaluate, render_csv, render_table, EvalConfig, EvalReport};
use pmf_core::event_log::{parse_csv, parse_xes, validate, CsvMapping, TimestampFormat};
use pmf_core::forecasting::{forecast_dfg, ForecastSpec};
use pmf_core::EventLog;
use pmf_server::{ServerConfig, SessionState};

#[derive(Parser, Debug)]
#[command(name = "pmf", version, about = "Process model forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the per-pair directly-follows count series as a wide CSV.
    Series {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        agg: AggArgs,
        #[arg(long)]
        exclude_endpoints: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Forecast every pair and write the per-step and window DFGs.
    Forecast {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        agg: AggArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Training length; defaults to all intervals.
        #[arg(long)]
        ts: Option<usize>,
        #[arg(long, default_value_t = 25)]
        horizon: usize,
        #[arg(long)]
        exclude_endpoints: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the rolling-origin evaluation grid and write MAPE reports.
    Evaluate {
        #[command(flatten)]
        input: InputArgs,
        /// Aggregation to evaluate; both when omitted.
        #[arg(long)]
        agg: Option<AggregationKind>,
        #[arg(long, default_value_t = DEFAULT_INTERVALS)]
        intervals: usize,
        #[arg(long, value_delimiter = ',', default_value = "25,50,75")]
        ts: Vec<usize>,
        #[arg(long, default_value_t = 25)]
        horizon: usize,
        #[arg(long, value_delimiter = ',', default_value = "nav,arima212,ar2,hw,garch")]
        family: Vec<String>,
        /// Retained node fractions.
        #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25")]
        reduce: Vec<f64>,
        #[arg(long)]
        strict: bool,
        /// Score each forecast step separately and average.
        #[arg(long)]
        per_step: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Serve the JSON API (and optionally a built UI bundle).
    Serve {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        agg: AggArgs,
        #[arg(long, default_value_t = 25)]
        horizon: usize,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Xes,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Event log (CSV or XES, optionally gzip-compressed).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Overrides detection from the file name.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, default_value = "case")]
    case_col: String,
    #[arg(long, default_value = "activity")]
    activity_col: String,
    #[arg(long, default_value = "timestamp")]
    timestamp_col: String,
    /// strftime pattern; ISO 8601 when omitted.
    #[arg(long)]
    timestamp_format: Option<String>,
}

#[derive(Args, Debug)]
struct AggArgs {
    #[arg(long, default_value = "equisized")]
    agg: AggregationKind,
    #[arg(long, default_value_t = DEFAULT_INTERVALS)]
    intervals: usize,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// nav, mean, ses, hw, arN, arima, arimaPDQ, garch.
    #[arg(long, default_value = "nav")]
    family: String,
    /// Model order as `p,d,q`.
    #[arg(long, value_parser = parse_order)]
    order: Option<(usize, usize, usize)>,
    /// Fail instead of falling back to the naive forecast.
    #[arg(long)]
    strict: bool,
}

fn parse_order(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [p, d, q] => Ok((p, d, q)),
        _ => Err("expected three comma-separated integers p,d,q".into()),
    }
}

struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn input(err: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, err: err.into() }
    }

    fn model(err: impl Into<anyhow::Error>) -> Self {
        Self { code: 3, err: err.into() }
    }

    fn env(err: impl Into<anyhow::Error>) -> Self {
        Self { code: 4, err: err.into() }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    if let Err(f) = configure_threads() {
        eprintln!("error: {:#}", f.err);
        return ExitCode::from(f.code);
    }
    let result = match cli.command {
        Command::Series {
            input,
            agg,
            exclude_endpoints,
            out,
        } => cmd_series(&input, &agg, exclude_endpoints, &out),
        Command::Forecast {
            input,
            agg,
            model,
            ts,
            horizon,
            exclude_endpoints,
            out,
        } => cmd_forecast(&input, &agg, &model, ts, horizon, exclude_endpoints, &out),
        Command::Evaluate {
            input,
            agg,
            intervals,
            ts,
            horizon,
            family,
            reduce,
            strict,
            per_step,
            out,
        } => {
            let config = EvalConfig {
                kinds: agg.map_or_else(|| EvalConfig::default().kinds, |k| vec![k]),
                intervals,
                families: family,
                ts,
                horizon,
                reductions: reduce,
                strict,
                per_step,
            };
            cmd_evaluate(&input, &config, &out)
        }
        Command::Serve {
            input,
            agg,
            horizon,
            host,
            port,
            static_dir,
        } => cmd_serve(&input, &agg, horizon, &host, port, static_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var("PMF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::input(anyhow!("PMF_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(Failure::env)
}

/// Name of a log file without compression and format extensions.
fn log_name(path: &Path) -> String {
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "log".into());
    for ext in [".gz", ".xes", ".csv"] {
        if let Some(stripped) = name.strip_suffix(ext) {
            name = stripped.to_string();
        }
    }
    name
}

fn load_log(args: &InputArgs) -> Result<(EventLog, String), Failure> {
    let path = args
        .input
        .as_ref()
        .ok_or_else(|| Failure::input(anyhow!("no event log given (use --input)")))?;
    let raw = std::fs::read(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::input)?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .with_context(|| format!("cannot decompress {}", path.display()))
            .map_err(Failure::input)?;
        out
    } else {
        raw
    };
    let name = log_name(path);
    let lower = path.to_string_lossy().to_ascii_lowercase();
    let format = args.format.unwrap_or(
        if lower.trim_end_matches(".gz").ends_with(".xes") {
            Format::Xes
        } else {
            Format::Csv
        },
    );
    let log = match format {
        Format::Xes => parse_xes(&bytes[..]),
        Format::Csv => {
            let mapping = CsvMapping {
                case: args.case_col.clone(),
                activity: args.activity_col.clone(),
                timestamp: args.timestamp_col.clone(),
            };
            let ts = args
                .timestamp_format
                .clone()
                .map_or(TimestampFormat::Iso8601, TimestampFormat::Pattern);
            parse_csv(&bytes[..], &mapping, &ts)
        }
    }
    .with_context(|| format!("cannot parse {}", path.display()))
    .map_err(Failure::input)?;
    for w in validate(&log) {
        eprintln!("warning: {w:?}");
    }
    Ok((log, name))
}

fn aggregate(log: &EventLog, args: &AggArgs) -> Result<Aggregated, Failure> {
    Aggregated::new(log, args.agg, args.intervals).map_err(Failure::input)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    std::fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::env)
}

fn create_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(Failure::env)
}

fn cmd_series(input: &InputArgs, agg_args: &AggArgs, exclude_endpoints: bool, out: &Path) -> Outcome {
    let (log, name) = load_log(input)?;
    let agg = aggregate(&log, agg_args)?;
    let series = if exclude_endpoints {
        agg.series.without_endpoints()
    } else {
        agg.series
    };
    create_dir(out)?;
    let mut buf = Vec::new();
    series.write_wide_csv(&mut buf).map_err(Failure::env)?;
    let path = out.join(format!("{name}_{}_series.csv", agg_args.agg));
    write(&path, buf)?;
    println!("{} pairs x {} intervals -> {}", series.series.len(), series.s, path.display());
    Ok(())
}

fn cmd_forecast(
    input: &InputArgs,
    agg_args: &AggArgs,
    model: &ModelArgs,
    ts: Option<usize>,
    horizon: usize,
    exclude_endpoints: bool,
    out: &Path,
) -> Outcome {
    let mut spec = ForecastSpec::from_label(&model.family, horizon).map_err(Failure::input)?;
    if let Some((p, d, q)) = model.order {
        spec = spec.with_order(p, d, q);
    }
    if model.strict {
        spec = spec.strict();
    }
    spec.validate().map_err(Failure::input)?;

    let (log, _) = load_log(input)?;
    let agg = aggregate(&log, agg_args)?;
    let series = if exclude_endpoints {
        agg.series.without_endpoints()
    } else {
        agg.series
    };
    let ts = ts.unwrap_or(series.s);
    if ts == 0 || ts > series.s {
        return Err(Failure::input(anyhow!("--ts must lie in 1..={}", series.s)));
    }
    let fc = forecast_dfg(&series, ts, &spec).map_err(|e| {
        if e.root().is_model_failure() {
            Failure::model(e)
        } else {
            Failure::input(e)
        }
    })?;

    create_dir(out)?;
    let mut csv = Vec::new();
    fc.write_csv(&mut csv).map_err(Failure::env)?;
    write(&out.join("forecast.csv"), csv)?;
    let dot = DotOptions::default();
    for (k, step) in fc.steps.iter().enumerate() {
        let stem = format!("step_{:03}", k + 1);
        write(&out.join(format!("{stem}.json")), export_json(GraphRef::Dfg(step)))?;
        write(&out.join(format!("{stem}.dot")), export_dot(GraphRef::Dfg(step), &dot))?;
    }
    let window = fc.window();
    write(&out.join("window.json"), export_json(GraphRef::Dfg(&window)))?;
    write(&out.join("window.dot"), export_dot(GraphRef::Dfg(&window), &dot))?;
    for (pair, why) in fc.fallbacks() {
        eprintln!("warning: {} -> {} fell back to naive: {why}", pair.0, pair.1);
    }
    println!(
        "{} ts={ts} h={horizon}: {} pairs, {} fallbacks -> {}",
        spec.label(),
        fc.pairs.len(),
        fc.fallbacks().len(),
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(input: &InputArgs, config: &EvalConfig, out: &Path) -> Outcome {
    let (log, name) = load_log(input)?;
    let report = evaluate(&log, &name, config).map_err(Failure::input)?;
    create_dir(out)?;
    for kind in &config.kinds {
        let part = EvalReport {
            cells: report.cells.iter().filter(|c| c.kind == *kind).cloned().collect(),
        };
        let stem = format!("{name}_{kind}");
        write(&out.join(format!("{stem}.json")), part.to_json())?;
        write(&out.join(format!("{stem}.csv")), render_csv(&part))?;
        write(&out.join(format!("{stem}.txt")), render_table(&part))?;
    }
    for c in report.cells.iter().filter(|c| c.warning.is_some()) {
        eprintln!(
            "warning: {} {} ts={} {}: {}",
            c.log,
            c.kind,
            c.ts,
            c.family,
            c.warning.as_deref().unwrap_or_default()
        );
    }
    print!("{}", render_table(&report));
    Ok(())
}

fn cmd_serve(
    input: &InputArgs,
    agg_args: &AggArgs,
    horizon: usize,
    host: &str,
    port: u16,
    static_dir: Option<PathBuf>,
) -> Outcome {
    let (log, name) = load_log(input)?;
    if agg_args.intervals == 0 || horizon == 0 {
        return Err(Failure::input(anyhow!("--intervals and --horizon must be at least 1")));
    }
    let listener = std::net::TcpListener::bind((host, port)).map_err(|e| {
        Failure::env(anyhow::Error::new(e).context(format!("cannot bind {host}:{port}")))
    })?;
    listener.set_nonblocking(true).map_err(Failure::env)?;
    let addr = listener.local_addr().map_err(Failure::env)?;
    let state = SessionState::new(
        log,
        ServerConfig {
            kind: agg_args.agg,
            intervals: agg_args.intervals,
            horizon,
            static_dir,
        },
    );
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::env)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener).map_err(Failure::env)?;
        eprintln!("serving {name} on http://{addr}");
        pmf_server::serve(listener, state).await.map_err(Failure::env)
    })
}
