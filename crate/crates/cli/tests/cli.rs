use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use pmf_core::event_log::write_csv;
use pmf_core::fixtures::THREE_CASE_CSV;
use pmf_core::synthetic::periodic_log;
use serde_json::Value;
use tempfile::TempDir;

fn pmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmf"))
        .args(args)
        .env_remove("PMF_THREADS")
        .output()
        .expect("binary runs")
}

fn three_case_file(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("three_cases.csv");
    std::fs::write(&path, THREE_CASE_CSV).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `from,to -> v1..vs` rows of a wide series CSV, activity pairs only.
fn series_rows(path: &Path) -> Vec<(String, String, Vec<u64>)> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string(), f[2..].iter().map(|v| v.parse().unwrap()).collect())
        })
        .filter(|(f, t, _)| !f.starts_with("__") && !t.starts_with("__"))
        .collect()
}

#[test]
fn series_matches_golden_columns() {
    let dir = TempDir::new().unwrap();
    let input = three_case_file(&dir);
    let out = dir.path().join("out");
    let expect = [
        ("equitemporal", [[0, 1, 0], [1, 1, 1], [0, 1, 0], [0, 0, 1]]),
        ("equisized", [[1, 0, 0], [1, 1, 1], [0, 1, 0], [0, 0, 1]]),
    ];
    for (agg, rows) in expect {
        let o = pmf(&["series", "--input", s(&input), "--agg", agg, "--intervals", "3", "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let got = series_rows(&out.join(format!("three_cases_{agg}_series.csv")));
        let want: Vec<(String, String, Vec<u64>)> = [("a1", "a1"), ("a1", "a2"), ("a2", "a1"), ("a2", "a2")]
            .iter()
            .zip(rows)
            .map(|((f, t), r)| (f.to_string(), t.to_string(), r.to_vec()))
            .collect();
        assert_eq!(got, want, "{agg}");
    }

    let o = pmf(&["series", "--input", s(&input), "--intervals", "3", "--exclude-endpoints", "--out", s(&out)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.join("three_cases_equisized_series.csv")).unwrap();
    assert!(!text.contains("__START__") && !text.contains("__END__"));
}

#[test]
fn gzip_and_xes_inputs() {
    let dir = TempDir::new().unwrap();
    let gz = dir.path().join("t1.csv.gz");
    let mut enc = flate2::write::GzEncoder::new(std::fs::File::create(&gz).unwrap(), flate2::Compression::default());
    enc.write_all(THREE_CASE_CSV.as_bytes()).unwrap();
    enc.finish().unwrap();
    let out = dir.path().join("out");
    let o = pmf(&["series", "--input", s(&gz), "--intervals", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("t1_equisized_series.csv").exists());

    let xes = dir.path().join("tiny.xes");
    std::fs::write(
        &xes,
        r#"<log><trace><string key="concept:name" value="c1"/>
<event><string key="concept:name" value="a"/><date key="time:timestamp" value="2021-01-01T00:00:00Z"/></event>
<event><string key="concept:name" value="b"/><date key="time:timestamp" value="2021-01-01T00:01:00Z"/></event>
</trace></log>"#,
    )
    .unwrap();
    let o = pmf(&["series", "--input", s(&xes), "--intervals", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(series_rows(&out.join("tiny_equisized_series.csv")), [("a".into(), "b".into(), vec![1])]);
}

#[test]
fn input_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let input = three_case_file(&dir);
    let out = dir.path().join("out");

    let o = pmf(&["series", "--input", s(&input), "--case-col", "case_id", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing column `case_id`"), "{}", stderr(&o));

    let missing = dir.path().join("nope.csv");
    for cmd in ["series", "forecast", "evaluate"] {
        let o = pmf(&[cmd, "--input", s(&missing), "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(2), "{cmd}: {}", stderr(&o));
    }

    let o = pmf(&["forecast", "--input", s(&input), "--intervals", "3", "--horizon", "0", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("horizon"));

    let o = pmf(&["forecast", "--input", s(&input), "--family", "prophet", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = pmf(&["forecast", "--input", s(&input), "--order", "1,2", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn naive_forecast_writes_the_next_interval() {
    let dir = TempDir::new().unwrap();
    let input = three_case_file(&dir);
    let out = dir.path().join("fc");
    let args = [
        "forecast", "--input", s(&input), "--intervals", "3", "--ts", "3", "--horizon", "1", "--family", "nav", "--out",
        s(&out),
    ];
    let o = pmf(&args);
    assert!(o.status.success(), "{}", stderr(&o));

    let json: Value = serde_json::from_str(&std::fs::read_to_string(out.join("window.json")).unwrap()).unwrap();
    let mut edges: Vec<(String, String, f64)> = json["edges"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| !e["from"].as_str().unwrap().starts_with("__") && !e["to"].as_str().unwrap().starts_with("__"))
        .map(|e| (e["from"].as_str().unwrap().into(), e["to"].as_str().unwrap().into(), e["weight"].as_f64().unwrap()))
        .collect();
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(edges, [("a1".into(), "a2".into(), 1.0), ("a2".into(), "a2".into(), 1.0)]);
    for f in ["forecast.csv", "window.dot", "step_001.json", "step_001.dot"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("forecast.csv")).unwrap();
    assert!(csv.starts_with("from,to,step,value,model_used\n"));

    // byte-identical on a second run
    let first: Vec<Vec<u8>> = ["forecast.csv", "window.json", "window.dot"]
        .iter()
        .map(|f| std::fs::read(out.join(f)).unwrap())
        .collect();
    assert!(pmf(&args).status.success());
    for (f, before) in ["forecast.csv", "window.json", "window.dot"].iter().zip(first) {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), before, "{f}");
    }
}

#[test]
fn strict_model_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let input = three_case_file(&dir);
    let out = dir.path().join("fc");
    let base = ["forecast", "--input", s(&input), "--intervals", "3", "--family", "arima", "--order", "2,1,2", "--horizon", "1"];

    let mut strict = base.to_vec();
    strict.extend(["--strict", "--out", s(&out)]);
    let o = pmf(&strict);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("too short"), "{}", stderr(&o));

    let mut lenient = base.to_vec();
    lenient.extend(["--out", s(&out)]);
    let o = pmf(&lenient);
    assert!(o.status.success());
    assert!(stderr(&o).contains("fell back to naive"));
}

#[test]
fn self_forecast_evaluation_is_all_zero() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("periodic.csv");
    let log = periodic_log(100, &[&["a", "b", "c", "d"], &["a", "c", "b"]]);
    write_csv(&log, std::fs::File::create(&input).unwrap()).unwrap();
    let out = dir.path().join("eval");
    let o = pmf(&[
        "evaluate", "--input", s(&input), "--agg", "equisized", "--family", "nav,mean", "--reduce", "1,0.5", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let csv = std::fs::read_to_string(out.join("periodic_equisized.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3 * 2 * 2);
    assert!(rows.iter().all(|r| r.ends_with(",0.00")), "{csv}");
    let table = std::fs::read_to_string(out.join("periodic_equisized.txt")).unwrap();
    assert!(table.contains("retained nodes: 50%"));
    let json: Value = serde_json::from_str(&std::fs::read_to_string(out.join("periodic_equisized.json")).unwrap()).unwrap();
    assert_eq!(json["cells"].as_array().unwrap().len(), 12);
    assert!(!out.join("periodic_equitemporal.csv").exists());

    let o = pmf(&["evaluate", "--input", s(&input), "--ts", "95", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "s < ts + h is an input error");
}

#[test]
fn serve_without_log_exits_2() {
    let o = pmf(&["serve", "--port", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--input"));
}

#[test]
fn serve_on_taken_port_exits_4() {
    let dir = TempDir::new().unwrap();
    let input = three_case_file(&dir);
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let o = pmf(&["serve", "--input", s(&input), "--port", &port]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut resp = String::new();
    stream.read_to_string(&mut resp).ok()?;
    Some(resp)
}

#[test]
fn serve_answers_health() {
    let dir = TempDir::new().unwrap();
    let input = three_case_file(&dir);
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_pmf"))
        .args(["serve", "--input", s(&input), "--intervals", "3", "--port", &port.to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let mut resp = None;
    while Instant::now() < deadline {
        if let Some(r) = http_get(port, "/api/health") {
            resp = Some(r);
            break;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    let missing = http_get(port, "/api/unknown");
    child.kill().ok();
    child.wait().ok();
    let resp = resp.expect("server came up");
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"traces\":3"));
    assert!(missing.unwrap().starts_with("HTTP/1.1 404"));
}
