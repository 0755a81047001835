//! Experiment lifecycle.
//!
//! [`create_experiment`] validates a config and writes the journal header.
//! [`Experiment::start`] hands the experiment to a coordinator thread that
//! owns all mutable state: it asks the tuner for proposals, queues them for
//! a fixed pool of worker slots, journals every trial and tells the tuner
//! once a generation has fully come back. Callers observe and steer it only
//! through [`ExperimentHandle`] messages or, from another process, through
//! the stop file next to the journal.

mod config;
mod coordinator;
mod pool;

use std::path::{Path, PathBuf};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;

use crate::journal::{self, ExperimentStatus, ExperimentView, Journal, JournalError};
use crate::target::Target;
use crate::tuner::TunerError;

pub use config::{check_id, ExperimentConfig, Prepared, StopCriteria};
pub use pool::PoolProbe;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid `{field}`: {message}")]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("experiment id `{0}` is already in use")]
    IdCollision(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("experiment `{0}` is not running")]
    NotRunning(String),
    #[error("target failed on every trial of generation {generation}: {message}")]
    TargetFatal { generation: u64, message: String },
    #[error("tuner error: {0}")]
    Tuner(#[from] TunerError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("resumed run diverged from the journal: {0}")]
    ReplayMismatch(String),
    #[error("coordinator crashed (injected fault)")]
    InjectedCrash,
    #[error("coordinator thread panicked")]
    Panicked,
}

impl From<std::io::Error> for OrchestratorError {
    fn from(e: std::io::Error) -> Self {
        Self::Journal(JournalError::Io(e))
    }
}

/// Knobs that affect how a run executes but not what it computes.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub probe: Option<Arc<PoolProbe>>,
    /// Fault injection: abandon the run, as a killed process would, right
    /// after this many trials have finished in this session.
    pub crash_after_trials: Option<u64>,
    /// How often the coordinator checks for a stop file while idle.
    pub poll_interval: Duration,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { probe: None, crash_after_trials: None, poll_interval: Duration::from_millis(50) }
    }
}

/// A persisted experiment ready to run.
pub struct Experiment {
    pub id: String,
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    target: Arc<Target>,
    journal: Journal,
    view: ExperimentView,
}

fn fresh_id() -> String {
    format!("{}-{:04x}", chrono::Utc::now().format("%Y%m%d-%H%M%S"), rand::random::<u16>())
}

/// Validates `config` and writes the journal header into `dir`.
pub fn create_experiment(config: &ExperimentConfig, dir: &Path) -> Result<Experiment, OrchestratorError> {
    let Prepared { mut config, target, .. } = config.prepare()?;
    let requested = config.id.take();
    let mut attempts = 0;
    let (id, journal) = loop {
        let id = requested.clone().unwrap_or_else(fresh_id);
        match Journal::create(&journal::journal_path(dir, &id)) {
            Ok(j) => break (id, j),
            Err(JournalError::Exists(_)) if requested.is_none() && attempts < 16 => attempts += 1,
            Err(JournalError::Exists(_)) => return Err(OrchestratorError::IdCollision(id)),
            Err(e) => return Err(e.into()),
        }
    };
    let rec = journal.record(journal::Event::ExperimentCreated(journal::ExperimentCreated {
        id: id.clone(),
        config: config.clone(),
    }))?;
    journal.sync()?;
    let view = ExperimentView::from_created(&rec).expect("header record");
    Ok(Experiment { id, dir: dir.to_path_buf(), config, target: Arc::new(target), journal, view })
}

/// Reopens an interrupted experiment. Complete generations are replayed
/// into a fresh tuner when the run starts; the interrupted generation is
/// asked again and its trials re-run under their original ids.
pub fn resume(dir: &Path, id: &str) -> Result<Experiment, OrchestratorError> {
    let path = journal::journal_path(dir, id);
    if !path.exists() {
        return Err(OrchestratorError::UnknownExperiment(id.to_string()));
    }
    let (journal, replay) = Journal::open(&path)?;
    let mut view = replay.view;
    if view.status.is_terminal() {
        return Err(JournalError::NotResumable(view.status.to_string()).into());
    }
    if view.config.seed.is_none() && view.config.tuner.seed.is_none() {
        return Err(JournalError::SeedMissing.into());
    }
    let Prepared { config, target, .. } = view.config.prepare()?;
    // Trials cut off by the crash get a terminal record before anything
    // else happens, so the journal never holds a dangling start.
    let orphans: Vec<u64> = view.unfinished().map(|t| t.id).collect();
    for trial_id in orphans {
        let rec = journal.record(journal::Event::TrialFinished(journal::TrialFinished {
            trial_id,
            status: journal::TrialStatus::Failed,
            objective: None,
            elapsed: 0.0,
            error: Some("interrupted before completion".into()),
            stdout: None,
            stderr: None,
        }))?;
        view.apply(&rec).map_err(|reason| JournalError::CorruptRecord { line: rec.seq as usize, reason })?;
    }
    journal.sync()?;
    Ok(Experiment { id: id.to_string(), dir: dir.to_path_buf(), config, target: Arc::new(target), journal, view })
}

impl Experiment {
    pub fn view(&self) -> &ExperimentView {
        &self.view
    }

    pub fn status(&self) -> ExperimentStatus {
        self.view.status
    }

    pub fn journal_path(&self) -> &Path {
        self.journal.path()
    }

    /// Runs to completion on the calling thread.
    pub fn run(self, opts: RunOptions) -> Result<ExperimentView, OrchestratorError> {
        self.start(opts).wait()
    }

    /// Starts a coordinator thread and returns a handle to it.
    pub fn start(self, opts: RunOptions) -> ExperimentHandle {
        let (tx, rx) = channel();
        let id = self.id.clone();
        let path = self.journal.path().to_path_buf();
        let events = tx.clone();
        let join = std::thread::Builder::new()
            .name(format!("coordinator-{id}"))
            .spawn(move || coordinator::Coordinator::new(self, opts, events, rx).and_then(|c| c.run()))
            .expect("spawn coordinator");
        ExperimentHandle { id, journal_path: path, tx, join: Mutex::new(Some(join)) }
    }
}

pub(crate) enum Control {
    Snapshot(Sender<ExperimentView>),
    Stop(Sender<Result<(), OrchestratorError>>),
}

/// Message-passing handle on a running coordinator.
pub struct ExperimentHandle {
    id: String,
    journal_path: PathBuf,
    tx: Sender<coordinator::Msg>,
    join: Mutex<Option<JoinHandle<Result<ExperimentView, OrchestratorError>>>>,
}

impl ExperimentHandle {
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Point-in-time snapshot. Once the coordinator has exited the journal
    /// is the authority.
    pub fn status(&self) -> Result<ExperimentView, OrchestratorError> {
        let (reply, rx) = channel();
        if self.tx.send(coordinator::Msg::Control(Control::Snapshot(reply))).is_ok() {
            if let Ok(view) = rx.recv() {
                return Ok(view);
            }
        }
        Ok(journal::load(&self.journal_path)?.view)
    }

    /// Requests a graceful stop: in-flight trials finish, nothing new is
    /// dispatched.
    pub fn stop(&self) -> Result<(), OrchestratorError> {
        let (reply, rx) = channel();
        self.tx
            .send(coordinator::Msg::Control(Control::Stop(reply)))
            .map_err(|_| OrchestratorError::NotRunning(self.id.clone()))?;
        rx.recv().map_err(|_| OrchestratorError::NotRunning(self.id.clone()))?
    }

    pub fn is_finished(&self) -> bool {
        self.join.lock().expect("join lock").as_ref().is_none_or(|j| j.is_finished())
    }

    /// Blocks until the coordinator exits. Subsequent calls return the
    /// journaled state.
    pub fn wait(&self) -> Result<ExperimentView, OrchestratorError> {
        let join = self.join.lock().expect("join lock").take();
        match join {
            Some(j) => j.join().map_err(|_| OrchestratorError::Panicked)?,
            None => Ok(journal::load(&self.journal_path)?.view),
        }
    }
}
