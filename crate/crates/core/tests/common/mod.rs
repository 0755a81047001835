#![allow(dead_code)]

use std::path::Path;

use solvertune_core::bench::BenchFn;
use solvertune_core::journal::{self, Event, JournalRecord};
use solvertune_core::orchestrator::ExperimentConfig;
use solvertune_core::space::{ParamSpec, SearchSpace};
use solvertune_core::target::{Direction, ObjectiveSource, TargetConfig};
use solvertune_core::tuner::{TunerConfig, TunerKind};

pub fn function_config(kind: TunerKind, func: BenchFn, dim: usize, pop: usize, max_trials: u64, concurrency: usize, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(
        TunerConfig::new(kind).with_pop_size(pop),
        TargetConfig::Function { func, dim },
        max_trials,
        concurrency,
    );
    c.seed = Some(seed);
    c
}

/// A command target over one integer parameter `x`; `script` runs under
/// `sh -c` with the value of `x` as `$1`.
pub fn shell_config(script: &str, pop: usize, max_trials: u64, concurrency: usize, timeout_sec: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(
        TunerConfig::new(TunerKind::Ljade).with_pop_size(pop),
        TargetConfig::Command {
            argv: vec!["sh".into(), "-c".into(), script.into(), "sh".into(), "{x}".into()],
            objective: ObjectiveSource::StdoutPattern { pattern: r"objective: (\S+)".into() },
            timeout_sec,
            workdir: ".".into(),
            env: Default::default(),
            direction: Direction::Minimize,
        },
        max_trials,
        concurrency,
    );
    c.space = Some(SearchSpace::new(vec![ParamSpec::integer("x", 0, 100)]).unwrap());
    c.seed = Some(1);
    c
}

pub fn records(path: &Path) -> Vec<JournalRecord> {
    journal::load(path).unwrap().records
}

/// Every started trial has a terminal record after its latest start.
pub fn assert_no_dangling_trials(recs: &[JournalRecord]) {
    let mut open = std::collections::BTreeSet::new();
    for r in recs {
        match &r.event {
            Event::TrialStarted(t) => {
                open.insert(t.trial_id);
            }
            Event::TrialFinished(f) => {
                assert!(open.remove(&f.trial_id), "trial {} finished without a start", f.trial_id);
            }
            _ => {}
        }
    }
    assert!(open.is_empty(), "trials without terminal record: {open:?}");
}
