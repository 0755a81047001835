use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use solvertune_api::{router, ApiError, ApiState};
use solvertune_core::journal;
use solvertune_core::orchestrator::{create_experiment, ExperimentConfig, RunOptions};
use solvertune_core::space::{ParamSpec, SearchSpace};
use solvertune_core::target::{Direction, ObjectiveSource, TargetConfig};
use solvertune_core::tuner::{TunerConfig, TunerKind};
use tower::ServiceExt;

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn updating() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

/// Integer `x` in 0..100. Values above 60 exit non-zero, others score
/// `(x - 37)^2`.
fn shell_config(script_sleep: &str, pop: usize, max_trials: u64, concurrency: usize) -> ExperimentConfig {
    let script = format!("{script_sleep}[ $1 -gt 60 ] && exit 3; echo objective: $(( ($1-37)*($1-37) ))");
    let mut c = ExperimentConfig::new(
        TunerConfig::new(TunerKind::ClassicDe).with_pop_size(pop),
        TargetConfig::Command {
            argv: vec!["sh".into(), "-c".into(), script, "sh".into(), "{x}".into()],
            objective: ObjectiveSource::StdoutPattern { pattern: r"objective: (\S+)".into() },
            timeout_sec: 10.0,
            workdir: ".".into(),
            env: Default::default(),
            direction: Direction::Minimize,
        },
        max_trials,
        concurrency,
    );
    c.space = Some(SearchSpace::new(vec![ParamSpec::integer("x", 0, 100)]).unwrap());
    c.seed = Some(7);
    c
}

/// Rewrites a journal with fixed timestamps and elapsed times, optionally
/// cut after `keep` records and renamed to `id`.
fn pin_clock(records: &[journal::JournalRecord], id: &str, keep: usize) -> String {
    let base = chrono::DateTime::parse_from_rfc3339("2026-03-01T12:00:00Z").unwrap().to_utc();
    let mut out = String::new();
    for r in records.iter().take(keep) {
        let mut v: Value = serde_json::from_str(&r.to_line()).unwrap();
        let ts = base + chrono::Duration::milliseconds(250 * r.seq as i64);
        v["ts"] = ts.to_rfc3339_opts(chrono::SecondsFormat::Millis, true).into();
        match v["type"].as_str().unwrap() {
            "experiment_created" => v["payload"]["id"] = id.into(),
            "trial_finished" => v["payload"]["elapsed"] = 0.25.into(),
            _ => {}
        }
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

fn write_fixtures(dir: &Path) {
    let scratch = tempfile::tempdir().unwrap();
    let mut cfg = shell_config("", 6, 18, 1);
    cfg.id = Some("gen".into());
    let exp = create_experiment(&cfg, scratch.path()).unwrap();
    let path = exp.journal_path().to_path_buf();
    exp.run(RunOptions::default()).unwrap();
    let recs = journal::load(&path).unwrap().records;
    fs::create_dir_all(dir).unwrap();
    fs::write(journal::journal_path(dir, "fixture-done"), pin_clock(&recs, "fixture-done", recs.len())).unwrap();
    // Cut just after the eleventh trial starts: one trial in flight.
    let cut = recs
        .iter()
        .position(|r| matches!(&r.event, journal::Event::TrialStarted(t) if t.trial_id == 11))
        .unwrap();
    fs::write(journal::journal_path(dir, "fixture-live"), pin_clock(&recs, "fixture-live", cut + 1)).unwrap();
}

/// A private copy of the fixture directory.
fn fixtures() -> tempfile::TempDir {
    let src = manifest().join("tests/fixtures");
    if updating() {
        write_fixtures(&src);
    }
    let dir = tempfile::tempdir().unwrap();
    for e in fs::read_dir(&src).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), dir.path().join(e.file_name())).unwrap();
    }
    dir
}

async fn call(app: &Router, method: &str, uri: &str) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, body)
}

async fn get(app: &Router, uri: &str) -> Value {
    let (status, body) = call(app, "GET", uri).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {body}");
    body
}

const GOLDEN: &[(&str, &str)] = &[
    ("list", "/api/experiments"),
    ("done_detail", "/api/experiments/fixture-done"),
    ("done_trials_p2", "/api/experiments/fixture-done/trials?page=2&per_page=5"),
    ("done_best", "/api/experiments/fixture-done/best"),
    ("done_series", "/api/experiments/fixture-done/series"),
    ("live_detail", "/api/experiments/fixture-live"),
    ("live_trials", "/api/experiments/fixture-live/trials"),
    ("live_series", "/api/experiments/fixture-live/series"),
    ("unknown_detail", "/api/experiments/nope"),
    ("unknown_best", "/api/experiments/nope/best"),
    ("page_zero", "/api/experiments/fixture-done/trials?page=0"),
    ("past_last_page", "/api/experiments/fixture-done/trials?page=9&per_page=5"),
];

#[tokio::test]
async fn responses_match_golden_files() {
    let dir = fixtures();
    let app = router(ApiState::new(dir.path()), None);
    let golden_dir = manifest().join("tests/golden");
    let mut mismatched = Vec::new();
    for (name, uri) in GOLDEN {
        let (status, body) = call(&app, "GET", uri).await;
        let got = json!({ "status": status.as_u16(), "body": body });
        let file = golden_dir.join(format!("{name}.json"));
        if updating() {
            fs::create_dir_all(&golden_dir).unwrap();
            fs::write(&file, serde_json::to_string_pretty(&got).unwrap() + "\n").unwrap();
            continue;
        }
        let want: Value = serde_json::from_str(&fs::read_to_string(&file).unwrap()).unwrap();
        if got != want {
            mismatched.push(format!("{name}: got {}", serde_json::to_string_pretty(&got).unwrap()));
        }
    }
    assert!(mismatched.is_empty(), "{}", mismatched.join("\n"));
}

#[tokio::test]
async fn fixture_has_the_expected_shape() {
    let dir = fixtures();
    let app = router(ApiState::new(dir.path()), None);
    let list = get(&app, "/api/experiments").await;
    let ids: Vec<&str> = list["experiments"].as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["fixture-done", "fixture-live"]);

    let done = get(&app, "/api/experiments/fixture-done").await;
    assert_eq!(done["status"], "finished");
    assert_eq!(done["reason"], "budget");
    assert_eq!(done["trials_started"], 18);
    let c = &done["counts"];
    assert_eq!(c["succeeded"].as_u64().unwrap() + c["failed"].as_u64().unwrap(), 18);
    assert!(c["failed"].as_u64().unwrap() > 0, "fixture should contain failed trials");

    let live = get(&app, "/api/experiments/fixture-live").await;
    assert_eq!(live["status"], "running");
    assert_eq!(live["counts"]["running"], 1);
    assert!(live["finished_at"].is_null());

    let series = get(&app, "/api/experiments/fixture-done/series").await;
    let pts: Vec<f64> = series["points"].as_array().unwrap().iter().map(|p| p["objective"].as_f64().unwrap()).collect();
    assert!(pts.windows(2).all(|w| w[1] <= w[0]));
    let best = get(&app, "/api/experiments/fixture-done/best").await;
    assert_eq!(best["objective"].as_f64(), pts.last().copied());
}

#[tokio::test]
async fn pages_cover_the_trial_set_exactly_once() {
    let dir = fixtures();
    let app = router(ApiState::new(dir.path()), None);
    let recs = journal::load(&journal::journal_path(dir.path(), "fixture-done")).unwrap();
    let expected: BTreeSet<u64> = recs.view.trials.keys().copied().collect();
    for per_page in [1, 3, 7, 18, 100] {
        let mut seen = Vec::new();
        for page in 1.. {
            let p = get(&app, &format!("/api/experiments/fixture-done/trials?page={page}&per_page={per_page}")).await;
            assert_eq!(p["total"], expected.len());
            let rows = p["trials"].as_array().unwrap();
            if rows.is_empty() {
                break;
            }
            assert!(rows.len() <= per_page);
            seen.extend(rows.iter().map(|t| t["id"].as_u64().unwrap()));
        }
        let unique: BTreeSet<u64> = seen.iter().copied().collect();
        assert_eq!(unique.len(), seen.len(), "duplicates at per_page={per_page}");
        assert_eq!(unique, expected, "per_page={per_page}");
    }
    for bad in ["page=0", "per_page=0", "per_page=100000", "page=x"] {
        let (status, _) = call(&app, "GET", &format!("/api/experiments/fixture-done/trials?{bad}")).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
    }
}

#[tokio::test]
async fn read_endpoints_have_no_side_effects() {
    let dir = fixtures();
    let app = router(ApiState::new(dir.path()), None);
    let listing = |d: &Path| {
        let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(d)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    let before = listing(dir.path());
    for (_, uri) in GOLDEN {
        let a = call(&app, "GET", uri).await;
        let b = call(&app, "GET", uri).await;
        assert_eq!(a, b, "{uri}");
    }
    assert_eq!(listing(dir.path()), before);
}

#[tokio::test]
async fn stop_codes_for_journal_only_experiments() {
    let dir = fixtures();
    let app = router(ApiState::new(dir.path()), None);
    let (status, body) = call(&app, "POST", "/api/experiments/fixture-live/stop").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({ "id": "fixture-live", "status": "stopping" }));
    assert!(journal::stop_path(dir.path(), "fixture-live").exists());
    assert_eq!(get(&app, "/api/experiments/fixture-live").await["status"], "stopping");

    let (status, _) = call(&app, "POST", "/api/experiments/fixture-live/stop").await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, body) = call(&app, "POST", "/api/experiments/fixture-done/stop").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(body["error"].as_str().unwrap().contains("not running"));
    let (status, _) = call(&app, "POST", "/api/experiments/nope/stop").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/api/experiments/..%2Fetc/stop").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/api/experiments/fixture-done/stop").await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
}

async fn wait_for(app: &Router, uri: &str, mut cond: impl FnMut(&Value) -> bool) -> Value {
    for _ in 0..1000 {
        let v = get(app, uri).await;
        if cond(&v) {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("{uri} never satisfied the condition");
}

#[tokio::test(flavor = "multi_thread")]
async fn stop_codes_for_a_live_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shell_config("sleep 0.1; ", 6, 600, 3);
    let exp = create_experiment(&cfg, dir.path()).unwrap();
    let id = exp.id.clone();
    let state = ApiState::new(dir.path());
    let handle = Arc::new(exp.start(RunOptions::default()));
    state.register(handle.clone());
    let app = router(state, None);
    let detail = format!("/api/experiments/{id}");
    wait_for(&app, &detail, |v| v["counts"]["succeeded"].as_u64().unwrap_or(0) + v["counts"]["failed"].as_u64().unwrap_or(0) >= 3).await;

    let stop = format!("/api/experiments/{id}/stop");
    let (status, body) = call(&app, "POST", &stop).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["status"], "stopping");
    let (status, _) = call(&app, "POST", &stop).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let done = wait_for(&app, &detail, |v| v["status"] == "finished").await;
    assert_eq!(done["reason"], "stopped");
    assert_eq!(done["counts"]["running"], 0);
    let (status, _) = call(&app, "POST", &stop).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn journal_responses_equal_live_responses_at_finish() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shell_config("", 5, 20, 2);
    let exp = create_experiment(&cfg, dir.path()).unwrap();
    let id = exp.id.clone();
    let live_state = ApiState::new(dir.path());
    let handle = Arc::new(exp.start(RunOptions::default()));
    live_state.register(handle.clone());
    let live = router(live_state, None);

    let detail = format!("/api/experiments/{id}");
    let last_live = wait_for(&live, &detail, |v| v["status"] == "finished").await;
    let journal_only = router(ApiState::new(dir.path()), None);
    for uri in [
        "/api/experiments".to_string(),
        detail.clone(),
        format!("{detail}/trials?per_page=7&page=2"),
        format!("{detail}/trials"),
        format!("{detail}/best"),
        format!("{detail}/series"),
    ] {
        assert_eq!(call(&live, "GET", &uri).await, call(&journal_only, "GET", &uri).await, "{uri}");
    }
    assert_eq!(get(&journal_only, &detail).await, last_live);
}

#[tokio::test]
async fn empty_directory_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(ApiState::new(dir.path().join("missing")), None);
    assert_eq!(get(&app, "/api/experiments").await, json!({ "experiments": [] }));
}

#[tokio::test]
async fn best_is_404_before_any_success() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = shell_config("", 4, 4, 1);
    cfg.id = Some("idle".into());
    create_experiment(&cfg, dir.path()).unwrap();
    let app = router(ApiState::new(dir.path()), None);
    let (status, body) = call(&app, "GET", "/api/experiments/idle/best").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("no successful trial"));
    assert_eq!(get(&app, "/api/experiments/idle/series").await, json!({ "points": [] }));
    assert_eq!(get(&app, "/api/experiments/idle").await["status"], "created");
}

#[tokio::test]
async fn static_assets_are_served_beside_the_api() {
    let dir = fixtures();
    let assets = tempfile::tempdir().unwrap();
    fs::write(assets.path().join("index.html"), "<html>dash</html>").unwrap();
    let app = router(ApiState::new(dir.path()), Some(assets.path()));
    let req = Request::builder().uri("/index.html").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"<html>dash</html>");
    assert_eq!(get(&app, "/api/experiments").await["experiments"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn occupied_port_is_a_bind_failure() {
    let first = solvertune_api::bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = first.local_addr().unwrap();
    let err = solvertune_api::bind(addr).await.unwrap_err();
    assert!(matches!(err, ApiError::BindFailure { .. }), "{err}");
}

#[tokio::test]
async fn serves_over_a_real_socket() {
    let dir = fixtures();
    let listener = solvertune_api::bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(ApiState::new(dir.path()), None);
    tokio::spawn(solvertune_api::serve(listener, app));
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /api/experiments/fixture-done/best HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut text = String::new();
    stream.read_to_string(&mut text).await.unwrap();
    assert!(text.starts_with("HTTP/1.1 200"), "{text}");
    assert!(text.contains("\"objective\""));
}
