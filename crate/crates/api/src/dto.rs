use serde::Serialize;
use solvertune_core::journal::{BestTrial, ExperimentView, TrialCounts, TrialView};
use solvertune_core::space::Configuration;

#[derive(Debug, Serialize)]
pub struct ExperimentSummary {
    pub id: String,
    pub status: String,
    pub tuner: String,
    pub max_trials: u64,
    pub concurrency: usize,
    /// Trials dispatched so far.
    pub trials_started: usize,
    pub counts: TrialCounts,
    pub generation: u64,
    pub best_objective: Option<f64>,
    pub created_at: String,
    pub updated_at: String,
}

#[derive(Debug, Serialize)]
pub struct ExperimentList {
    pub experiments: Vec<ExperimentSummary>,
}

#[derive(Debug, Serialize)]
pub struct ExperimentDetail {
    #[serde(flatten)]
    pub summary: ExperimentSummary,
    pub reason: Option<String>,
    pub error: Option<String>,
    pub generations_completed: u64,
    pub elapsed: f64,
    pub finished_at: Option<String>,
    pub best: Option<BestTrial>,
    pub config: serde_json::Value,
}

#[derive(Debug, Serialize)]
pub struct TrialRow {
    pub id: u64,
    pub proposal_id: u64,
    pub generation: u64,
    pub worker_slot: usize,
    pub status: String,
    pub objective: Option<f64>,
    pub elapsed: Option<f64>,
    pub error: Option<String>,
    pub configuration: Configuration,
    pub started_at: String,
    pub finished_at: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct TrialPage {
    pub page: usize,
    pub per_page: usize,
    pub total: usize,
    pub trials: Vec<TrialRow>,
}

#[derive(Debug, Serialize)]
pub struct SeriesPoint {
    pub trial: u64,
    pub objective: f64,
}

#[derive(Debug, Serialize)]
pub struct Series {
    pub points: Vec<SeriesPoint>,
}

#[derive(Debug, Serialize)]
pub struct StopAccepted {
    pub id: String,
    pub status: String,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: String,
}

fn ts(t: &chrono::DateTime<chrono::Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn summary(v: &ExperimentView) -> ExperimentSummary {
    ExperimentSummary {
        id: v.id.clone(),
        status: v.status.to_string(),
        tuner: v.config.tuner.kind.to_string(),
        max_trials: v.config.max_trials,
        concurrency: v.config.concurrency,
        trials_started: v.trials.len(),
        counts: v.counts(),
        generation: v.current_generation(),
        best_objective: v.best.as_ref().map(|b| b.objective),
        created_at: ts(&v.created_at),
        updated_at: ts(&v.updated_at),
    }
}

pub fn detail(v: &ExperimentView) -> ExperimentDetail {
    ExperimentDetail {
        summary: summary(v),
        reason: v.reason.map(|r| r.name().to_string()),
        error: v.error.clone(),
        generations_completed: v.generations_completed(),
        elapsed: v.elapsed(),
        finished_at: v.finished_at.as_ref().map(ts),
        best: v.best.clone(),
        config: serde_json::to_value(&v.config).expect("config serializes"),
    }
}

pub fn trial_row(t: &TrialView) -> TrialRow {
    TrialRow {
        id: t.id,
        proposal_id: t.proposal_id,
        generation: t.generation,
        worker_slot: t.worker_slot,
        status: t.status.name().to_string(),
        objective: t.objective,
        elapsed: t.elapsed,
        error: t.error.clone(),
        configuration: t.configuration.clone(),
        started_at: ts(&t.started_at),
        finished_at: t.finished_at.as_ref().map(ts),
    }
}

pub fn series(v: &ExperimentView) -> Series {
    Series { points: v.series().into_iter().map(|(trial, objective)| SeriesPoint { trial, objective }).collect() }
}
