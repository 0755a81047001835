mod common;

use common::*;
use solvertune_core::bench::BenchFn;
use solvertune_core::journal::{self, without_wall_clock};
use solvertune_core::orchestrator::{create_experiment, RunOptions};
use solvertune_core::tuner::TunerKind;

fn stripped_run(dir: &std::path::Path, id: &str, kind: TunerKind, concurrency: usize, seed: u64) -> Vec<serde_json::Value> {
    let mut cfg = function_config(kind, BenchFn::Ackley, 4, 20, 200, concurrency, seed);
    cfg.id = Some(id.into());
    let exp = create_experiment(&cfg, dir).unwrap();
    let path = exp.journal_path().to_path_buf();
    exp.run(RunOptions::default()).unwrap();
    records(&path)
        .iter()
        .map(|r| {
            let mut v = without_wall_clock(r);
            if v["type"] == "experiment_created" {
                v["payload"]["id"] = "x".into();
            }
            v
        })
        .collect()
}

#[test]
fn serial_runs_are_identical_record_for_record() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [TunerKind::Random, TunerKind::ClassicDe, TunerKind::Shade, TunerKind::Ljade] {
        let a = stripped_run(dir.path(), &format!("{kind}-a"), kind, 1, 11);
        let b = stripped_run(dir.path(), &format!("{kind}-b"), kind, 1, 11);
        assert_eq!(a, b, "{kind}");
    }
}

#[test]
fn concurrent_runs_differ_only_in_record_order() {
    let dir = tempfile::tempdir().unwrap();
    let canon = |mut recs: Vec<serde_json::Value>| {
        for r in &mut recs {
            r.as_object_mut().unwrap().remove("seq");
            if r["type"] == "experiment_created" {
                r["payload"]["config"]["concurrency"] = 0.into();
            }
        }
        let mut lines: Vec<String> = recs.iter().map(|r| r.to_string()).collect();
        lines.sort();
        lines
    };
    let serial = canon(stripped_run(dir.path(), "s", TunerKind::Ljade, 1, 3));
    let a = canon(stripped_run(dir.path(), "a", TunerKind::Ljade, 8, 3));
    let b = canon(stripped_run(dir.path(), "b", TunerKind::Ljade, 8, 3));
    assert_eq!(a, b);
    assert_eq!(a, serial);
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let a = stripped_run(dir.path(), "a", TunerKind::Ljade, 1, 1);
    let b = stripped_run(dir.path(), "b", TunerKind::Ljade, 1, 2);
    assert_ne!(a, b);
}

#[test]
fn stripped_record_keeps_results() {
    let dir = tempfile::tempdir().unwrap();
    let recs = stripped_run(dir.path(), "k", TunerKind::Jade, 2, 5);
    let finished = recs.iter().find(|r| r["type"] == "trial_finished").unwrap();
    assert!(finished["payload"]["objective"].is_f64());
    assert!(finished["payload"].get("elapsed").is_none());
    assert!(finished.get("ts").is_none());
    let _ = journal::JOURNAL_EXT;
}
