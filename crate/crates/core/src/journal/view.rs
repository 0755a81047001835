use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    Event, ExperimentStatus, FinishReason, GenerationCompleted, JournalError, JournalRecord, TrialStatus,
};
use crate::orchestrator::ExperimentConfig;
use crate::space::{Configuration, Genome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestTrial {
    pub trial_id: u64,
    pub objective: f64,
    pub configuration: Configuration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialView {
    pub id: u64,
    pub proposal_id: u64,
    pub generation: u64,
    pub worker_slot: usize,
    pub configuration: Configuration,
    #[serde(skip)]
    pub genome: Genome,
    pub status: TrialStatus,
    pub objective: Option<f64>,
    pub elapsed: Option<f64>,
    pub error: Option<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialCounts {
    pub pending: usize,
    pub running: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub timeout: usize,
}

impl TrialCounts {
    pub fn terminal(&self) -> usize {
        self.succeeded + self.failed + self.timeout
    }
}

/// Experiment state as the fold of its journal records. The coordinator
/// keeps one of these live, so a snapshot and a replay of the same records
/// are the same value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentView {
    pub id: String,
    pub config: ExperimentConfig,
    pub status: ExperimentStatus,
    pub reason: Option<FinishReason>,
    pub error: Option<String>,
    pub created_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    /// Timestamp and seq of the latest record.
    pub updated_at: DateTime<Utc>,
    pub seq: u64,
    pub trials: BTreeMap<u64, TrialView>,
    pub generations: Vec<GenerationCompleted>,
    pub best: Option<BestTrial>,
    /// Proposals queued for a worker slot; only a live coordinator has any.
    pub pending: usize,
}

impl ExperimentView {
    pub fn replay(records: &[JournalRecord]) -> Result<Self, JournalError> {
        let corrupt = |i: usize, reason: String| JournalError::CorruptRecord { line: i + 1, reason };
        let first = records.first().ok_or_else(|| corrupt(0, "journal has no records".into()))?;
        let mut view = Self::from_created(first).map_err(|r| corrupt(0, r))?;
        for (i, rec) in records.iter().enumerate().skip(1) {
            view.apply(rec).map_err(|r| corrupt(i, r))?;
        }
        Ok(view)
    }

    pub fn from_created(rec: &JournalRecord) -> Result<Self, String> {
        let Event::ExperimentCreated(c) = &rec.event else {
            return Err(format!("first record must be experiment_created, found {}", rec.event.type_name()));
        };
        Ok(Self {
            id: c.id.clone(),
            config: c.config.clone(),
            status: ExperimentStatus::Created,
            reason: None,
            error: None,
            created_at: rec.ts,
            finished_at: None,
            updated_at: rec.ts,
            seq: rec.seq,
            trials: BTreeMap::new(),
            generations: Vec::new(),
            best: None,
            pending: 0,
        })
    }

    pub fn apply(&mut self, rec: &JournalRecord) -> Result<(), String> {
        if self.status.is_terminal() {
            return Err(format!("{} after experiment_finished", rec.event.type_name()));
        }
        match &rec.event {
            Event::ExperimentCreated(_) => return Err("duplicate experiment_created".into()),
            Event::TrialStarted(t) => {
                self.status = ExperimentStatus::Running;
                let replaced = self.trials.insert(
                    t.trial_id,
                    TrialView {
                        id: t.trial_id,
                        proposal_id: t.proposal_id,
                        generation: t.generation,
                        worker_slot: t.worker_slot,
                        configuration: t.configuration.clone(),
                        genome: t.genome.clone(),
                        status: TrialStatus::Running,
                        objective: None,
                        elapsed: None,
                        error: None,
                        started_at: rec.ts,
                        finished_at: None,
                    },
                );
                // A restarted trial supersedes its earlier run.
                if replaced.is_some() && self.best.as_ref().is_some_and(|b| b.trial_id == t.trial_id) {
                    self.recompute_best();
                }
            }
            Event::TrialFinished(f) => {
                let trial = self.trials.get_mut(&f.trial_id).ok_or_else(|| format!("trial {} finished before it started", f.trial_id))?;
                if !f.status.is_terminal() {
                    return Err(format!("trial {} finished with non-terminal status {}", f.trial_id, f.status.name()));
                }
                if f.objective.is_some() != (f.status == TrialStatus::Succeeded) {
                    return Err(format!("trial {}: objective must be present iff succeeded", f.trial_id));
                }
                trial.status = f.status;
                trial.objective = f.objective;
                trial.elapsed = Some(f.elapsed);
                trial.error = f.error.clone();
                trial.finished_at = Some(rec.ts);
                if let Some(obj) = f.objective {
                    if self.best.as_ref().is_none_or(|b| better(obj, f.trial_id, b)) {
                        self.best = Some(BestTrial { trial_id: f.trial_id, objective: obj, configuration: trial.configuration.clone() });
                    }
                }
            }
            Event::GenerationCompleted(g) => {
                self.status = ExperimentStatus::Running;
                self.generations.retain(|x| x.generation < g.generation);
                self.generations.push(g.clone());
            }
            Event::ExperimentFinished(f) => {
                self.status = f.status;
                self.reason = Some(f.reason);
                self.error = f.error.clone();
                self.finished_at = Some(rec.ts);
            }
        }
        self.updated_at = rec.ts;
        self.seq = rec.seq;
        Ok(())
    }

    fn recompute_best(&mut self) {
        self.best = None;
        for t in self.trials.values() {
            if let Some(obj) = t.objective {
                if self.best.as_ref().is_none_or(|b| better(obj, t.id, b)) {
                    self.best = Some(BestTrial { trial_id: t.id, objective: obj, configuration: t.configuration.clone() });
                }
            }
        }
    }

    pub fn counts(&self) -> TrialCounts {
        let mut c = TrialCounts { pending: self.pending, ..TrialCounts::default() };
        for t in self.trials.values() {
            match t.status {
                TrialStatus::Pending => c.pending += 1,
                TrialStatus::Running => c.running += 1,
                TrialStatus::Succeeded => c.succeeded += 1,
                TrialStatus::Failed => c.failed += 1,
                TrialStatus::Timeout => c.timeout += 1,
            }
        }
        c
    }

    pub fn generations_completed(&self) -> u64 {
        self.generations.last().map_or(0, |g| g.generation + 1)
    }

    /// Generation currently being evaluated, or the last one when finished.
    pub fn current_generation(&self) -> u64 {
        let latest = self.trials.values().map(|t| t.generation).max();
        match (self.status.is_terminal(), latest) {
            (true, Some(g)) => g,
            _ => self.generations_completed(),
        }
    }

    /// Seconds from creation to the latest record.
    pub fn elapsed(&self) -> f64 {
        (self.updated_at - self.created_at).num_microseconds().map_or(0.0, |us| us as f64 / 1e6)
    }

    /// `(trial id, incumbent objective)` over terminal trials in id order,
    /// starting at the first success.
    pub fn series(&self) -> Vec<(u64, f64)> {
        let mut out = Vec::new();
        let mut inc: Option<f64> = None;
        for t in self.trials.values().filter(|t| t.status.is_terminal()) {
            if let Some(obj) = t.objective {
                inc = Some(inc.map_or(obj, |b| b.min(obj)));
            }
            if let Some(b) = inc {
                out.push((t.id, b));
            }
        }
        out
    }

    /// Everything the run computed, without wall-clock or scheduling
    /// detail. Equal outcomes mean equal trials, generations and result.
    pub fn outcome(&self) -> serde_json::Value {
        let trials: Vec<_> = self
            .trials
            .values()
            .map(|t| {
                serde_json::json!({
                    "id": t.id,
                    "proposal_id": t.proposal_id,
                    "generation": t.generation,
                    "genome": t.genome,
                    "configuration": t.configuration,
                    "status": t.status,
                    "objective": t.objective,
                    "error": t.error,
                })
            })
            .collect();
        serde_json::json!({
            "id": self.id,
            "config": self.config,
            "status": self.status,
            "reason": self.reason,
            "trials": trials,
            "generations": self.generations,
            "best": self.best,
        })
    }

    /// Trials without a terminal record.
    pub fn unfinished(&self) -> impl Iterator<Item = &TrialView> {
        self.trials.values().filter(|t| !t.status.is_terminal())
    }
}

fn better(obj: f64, id: u64, best: &BestTrial) -> bool {
    obj < best.objective || (obj == best.objective && id < best.trial_id)
}
