//! Append-only experiment journal.
//!
//! One JSONL file per experiment, named `<id>.jsonl` inside a journal
//! directory. Every line is a [`JournalRecord`]:
//!
//! ```text
//! {"seq":1,"type":"experiment_created","ts":"2026-01-01T00:00:00Z","payload":{...}}
//! ```
//!
//! Records carry a strictly increasing `seq` starting at 1 and the first
//! record is always `experiment_created`. Readers tolerate a truncated final
//! line, which is what a crash in the middle of a write leaves behind.

mod view;

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::ExperimentConfig;
use crate::space::{Configuration, Genome};
use crate::tuner::TunerSummary;

pub use view::{BestTrial, ExperimentView, TrialCounts, TrialView};

pub const JOURNAL_EXT: &str = "jsonl";

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("journal {0} already exists")]
    Exists(PathBuf),
    #[error("sequence gap: expected seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("corrupt journal record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
    #[error("experiment is {0} and cannot be resumed")]
    NotResumable(String),
    #[error("journal does not record a seed")]
    SeedMissing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentStatus {
    Created,
    Running,
    Stopping,
    Finished,
    Failed,
}

impl ExperimentStatus {
    pub fn name(self) -> &'static str {
        match self {
            Self::Created => "created",
            Self::Running => "running",
            Self::Stopping => "stopping",
            Self::Finished => "finished",
            Self::Failed => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Finished | Self::Failed)
    }
}

impl std::fmt::Display for ExperimentStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
    Timeout,
}

impl TrialStatus {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pending => "pending",
            Self::Running => "running",
            Self::Succeeded => "succeeded",
            Self::Failed => "failed",
            Self::Timeout => "timeout",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Succeeded | Self::Failed | Self::Timeout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Budget,
    TargetReached,
    Stagnation,
    Stopped,
    Failed,
}

impl FinishReason {
    pub fn name(self) -> &'static str {
        match self {
            Self::Budget => "budget",
            Self::TargetReached => "target_reached",
            Self::Stagnation => "stagnation",
            Self::Stopped => "stopped",
            Self::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCreated {
    pub id: String,
    /// Fully resolved: seed and search space are always present.
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStarted {
    pub trial_id: u64,
    pub proposal_id: u64,
    pub generation: u64,
    pub worker_slot: usize,
    pub genome: Genome,
    pub configuration: Configuration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFinished {
    pub trial_id: u64,
    pub status: TrialStatus,
    /// Present iff `status` is `succeeded`.
    pub objective: Option<f64>,
    pub elapsed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdout: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationCompleted {
    pub generation: u64,
    pub trials: u64,
    pub best_objective: Option<f64>,
    pub tuner: TunerSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFinished {
    pub status: ExperimentStatus,
    pub reason: FinishReason,
    pub best: Option<BestTrial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    ExperimentCreated(ExperimentCreated),
    TrialStarted(TrialStarted),
    TrialFinished(TrialFinished),
    GenerationCompleted(GenerationCompleted),
    ExperimentFinished(ExperimentFinished),
}

impl Event {
    pub fn type_name(&self) -> &'static str {
        match self {
            Event::ExperimentCreated(_) => "experiment_created",
            Event::TrialStarted(_) => "trial_started",
            Event::TrialFinished(_) => "trial_finished",
            Event::GenerationCompleted(_) => "generation_completed",
            Event::ExperimentFinished(_) => "experiment_finished",
        }
    }

    fn payload(&self) -> serde_json::Result<serde_json::Value> {
        match self {
            Event::ExperimentCreated(p) => serde_json::to_value(p),
            Event::TrialStarted(p) => serde_json::to_value(p),
            Event::TrialFinished(p) => serde_json::to_value(p),
            Event::GenerationCompleted(p) => serde_json::to_value(p),
            Event::ExperimentFinished(p) => serde_json::to_value(p),
        }
    }

    fn from_parts(kind: &str, payload: serde_json::Value) -> Result<Self, String> {
        let e = |e: serde_json::Error| format!("bad {kind} payload: {e}");
        Ok(match kind {
            "experiment_created" => Event::ExperimentCreated(serde_json::from_value(payload).map_err(e)?),
            "trial_started" => Event::TrialStarted(serde_json::from_value(payload).map_err(e)?),
            "trial_finished" => Event::TrialFinished(serde_json::from_value(payload).map_err(e)?),
            "generation_completed" => Event::GenerationCompleted(serde_json::from_value(payload).map_err(e)?),
            "experiment_finished" => Event::ExperimentFinished(serde_json::from_value(payload).map_err(e)?),
            other => return Err(format!("unknown record type `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JournalRecord {
    pub seq: u64,
    pub ts: DateTime<Utc>,
    pub event: Event,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    seq: u64,
    #[serde(rename = "type")]
    kind: String,
    ts: DateTime<Utc>,
    payload: serde_json::Value,
}

impl JournalRecord {
    pub fn new(seq: u64, ts: DateTime<Utc>, event: Event) -> Self {
        Self { seq, ts, event }
    }

    pub fn to_line(&self) -> String {
        let raw = RawRecord {
            seq: self.seq,
            kind: self.event.type_name().to_string(),
            ts: self.ts,
            payload: self.event.payload().expect("journal payloads serialize"),
        };
        serde_json::to_string(&raw).expect("journal records serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, String> {
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let event = Event::from_parts(&raw.kind, raw.payload)?;
        Ok(Self { seq: raw.seq, ts: raw.ts, event })
    }
}

/// A record as JSON minus its wall-clock and scheduling fields (`ts`,
/// `elapsed`, `worker_slot`), for comparing runs.
pub fn without_wall_clock(rec: &JournalRecord) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&rec.to_line()).expect("record is JSON");
    let obj = v.as_object_mut().expect("record is an object");
    obj.remove("ts");
    if let Some(p) = obj.get_mut("payload").and_then(|p| p.as_object_mut()) {
        p.remove("elapsed");
        p.remove("worker_slot");
    }
    v
}

pub fn journal_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.{JOURNAL_EXT}"))
}

/// Presence of this file asks the coordinator running `id` to stop.
pub fn stop_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.stop"))
}

pub fn pid_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.pid"))
}

/// Experiment ids with a journal in `dir`, sorted.
pub fn list_ids(dir: &Path) -> io::Result<Vec<String>> {
    let mut ids = Vec::new();
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(ids),
        Err(e) => return Err(e),
    };
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(JOURNAL_EXT) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// The result of reading a journal.
#[derive(Debug, Clone)]
pub struct Replay {
    pub records: Vec<JournalRecord>,
    pub view: ExperimentView,
    /// A partial final line was dropped.
    pub truncated: bool,
    /// Byte length of the intact prefix.
    valid_len: u64,
}

/// Parses journal text. Only the final line may be unparseable.
pub fn parse(text: &str) -> Result<(Vec<JournalRecord>, bool, u64), JournalError> {
    let mut records: Vec<JournalRecord> = Vec::new();
    let mut truncated = false;
    let mut offset = 0u64;
    let mut valid_len = 0u64;
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, raw) in lines.iter().enumerate() {
        let lineno = i + 1;
        offset += raw.len() as u64;
        let complete = raw.ends_with('\n');
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            if complete {
                valid_len = offset;
            }
            continue;
        }
        let is_last = i + 1 == lines.len();
        match JournalRecord::from_line(line) {
            Ok(rec) if complete || !is_last => {
                let expected = records.last().map_or(1, |r| r.seq + 1);
                if rec.seq != expected {
                    return Err(JournalError::CorruptRecord {
                        line: lineno,
                        reason: format!("seq {} does not follow {}", rec.seq, expected - 1),
                    });
                }
                records.push(rec);
                valid_len = offset;
            }
            // A final line without its newline was cut short by a crash,
            // even when the fragment happens to parse.
            Ok(_) => truncated = true,
            Err(_) if is_last => truncated = true,
            Err(reason) => return Err(JournalError::CorruptRecord { line: lineno, reason }),
        }
    }
    if records.is_empty() {
        return Err(JournalError::CorruptRecord { line: 1, reason: "journal has no records".into() });
    }
    Ok((records, truncated, valid_len))
}

pub fn load(path: &Path) -> Result<Replay, JournalError> {
    let text = fs::read_to_string(path)?;
    let (records, truncated, valid_len) = parse(&text)?;
    if truncated {
        log::warn!("{}: dropped truncated final record", path.display());
    }
    let view = ExperimentView::replay(&records)?;
    Ok(Replay { records, view, truncated, valid_len })
}

struct Writer {
    file: File,
    last_seq: u64,
}

/// Single-writer handle on a journal file. Appends are serialized so lines
/// never interleave.
pub struct Journal {
    path: PathBuf,
    inner: Mutex<Writer>,
}

impl Journal {
    /// Creates a new, empty journal. Fails if the file exists.
    pub fn create(path: &Path) -> Result<Self, JournalError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = match OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => return Err(JournalError::Exists(path.to_path_buf())),
            Err(e) => return Err(e.into()),
        };
        Ok(Self { path: path.to_path_buf(), inner: Mutex::new(Writer { file, last_seq: 0 }) })
    }

    /// Opens an existing journal for further appends, cutting off a
    /// truncated final line first.
    pub fn open(path: &Path) -> Result<(Self, Replay), JournalError> {
        let replay = load(path)?;
        let file = OpenOptions::new().write(true).open(path)?;
        if replay.truncated {
            file.set_len(replay.valid_len)?;
            file.sync_all()?;
        }
        let mut file = file;
        use std::io::Seek;
        file.seek(io::SeekFrom::End(0))?;
        let last_seq = replay.records.last().map_or(0, |r| r.seq);
        Ok((Self { path: path.to_path_buf(), inner: Mutex::new(Writer { file, last_seq }) }, replay))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn last_seq(&self) -> u64 {
        self.lock().last_seq
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Writer> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Appends a record whose `seq` must directly follow the last one.
    pub fn append(&self, record: &JournalRecord) -> Result<(), JournalError> {
        let mut w = self.lock();
        let expected = w.last_seq + 1;
        if record.seq != expected {
            return Err(JournalError::SequenceGap { expected, got: record.seq });
        }
        let mut line = record.to_line();
        line.push('\n');
        w.file.write_all(line.as_bytes())?;
        w.last_seq = record.seq;
        Ok(())
    }

    /// Stamps `event` with the next seq and the current time, then appends.
    pub fn record(&self, event: Event) -> Result<JournalRecord, JournalError> {
        let mut w = self.lock();
        let rec = JournalRecord::new(w.last_seq + 1, Utc::now(), event);
        let mut line = rec.to_line();
        line.push('\n');
        w.file.write_all(line.as_bytes())?;
        w.last_seq = rec.seq;
        Ok(rec)
    }

    /// Forces appended records to stable storage.
    pub fn sync(&self) -> Result<(), JournalError> {
        self.lock().file.sync_data()?;
        Ok(())
    }
}
