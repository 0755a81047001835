use std::collections::VecDeque;
use std::fs;
use std::path::PathBuf;
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;

use super::pool::{Done, Job, WorkerPool};
use super::{Control, Experiment, OrchestratorError, RunOptions};
use crate::journal::{
    self, Event, ExperimentFinished, ExperimentStatus, ExperimentView, FinishReason, GenerationCompleted, Journal,
    JournalError, JournalRecord, TrialFinished, TrialStarted, TrialStatus,
};
use crate::orchestrator::ExperimentConfig;
use crate::space::SearchSpace;
use crate::target::TargetError;
use crate::tuner::{Proposal, TellResult, Tuner, TunerHost};

/// Output kept in the journal for a failed trial, per stream.
const FAILURE_OUTPUT_TAIL: usize = 4096;

pub(crate) enum Msg {
    Done(Done),
    Control(Control),
}

impl From<Done> for Msg {
    fn from(d: Done) -> Self {
        Msg::Done(d)
    }
}

struct Queued {
    proposal: Proposal,
    generation: u64,
}

/// Bookkeeping for the generation currently in flight.
#[derive(Default)]
struct GenerationState {
    results: Vec<TellResult>,
    spawn_failures: usize,
    last_error: Option<String>,
}

pub(super) struct Coordinator {
    id: String,
    config: ExperimentConfig,
    space: SearchSpace,
    journal: Journal,
    view: ExperimentView,
    tuner: TunerHost,
    pool: WorkerPool,
    rx: Receiver<Msg>,
    queue: VecDeque<Queued>,
    generation: GenerationState,
    issued: u64,
    stopping: bool,
    target_hit: bool,
    finish: Option<(FinishReason, Option<String>)>,
    stagnant: u64,
    last_best: Option<f64>,
    opts: RunOptions,
    finished_this_session: u64,
    stop_file: PathBuf,
    pid_file: PathBuf,
}

fn tail(s: &str) -> String {
    if s.len() <= FAILURE_OUTPUT_TAIL {
        return s.to_string();
    }
    let mut start = s.len() - FAILURE_OUTPUT_TAIL;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    s[start..].to_string()
}

impl Coordinator {
    pub fn new(exp: Experiment, opts: RunOptions, events: Sender<Msg>, rx: Receiver<Msg>) -> Result<Self, OrchestratorError> {
        let Experiment { id, dir, config, target, journal, view } = exp;
        if view.status.is_terminal() {
            return Err(OrchestratorError::NotRunning(id));
        }
        let space = target.space.clone();
        let tuner = TunerHost::spawn(config.tuner.build(&space, config.max_trials)?);
        let pool = WorkerPool::spawn(config.concurrency, Arc::clone(&target), events, opts.probe.clone());
        let stop_file = journal::stop_path(&dir, &id);
        let pid_file = journal::pid_path(&dir, &id);
        Ok(Self {
            id,
            config,
            space,
            journal,
            view,
            tuner,
            pool,
            rx,
            queue: VecDeque::new(),
            generation: GenerationState::default(),
            issued: 0,
            stopping: false,
            target_hit: false,
            finish: None,
            stagnant: 0,
            last_best: None,
            opts,
            finished_this_session: 0,
            stop_file,
            pid_file,
        })
    }

    fn append(&mut self, event: Event) -> Result<JournalRecord, OrchestratorError> {
        let rec = self.journal.record(event)?;
        self.view
            .apply(&rec)
            .map_err(|reason| JournalError::CorruptRecord { line: rec.seq as usize, reason })?;
        Ok(rec)
    }

    pub fn run(mut self) -> Result<ExperimentView, OrchestratorError> {
        if self.stop_file.exists() {
            log::info!("{}: removing stale stop request", self.id);
            let _ = fs::remove_file(&self.stop_file);
        }
        fs::write(&self.pid_file, format!("{}\n", std::process::id()))?;
        let result = self.run_inner();
        match result {
            Err(OrchestratorError::InjectedCrash) => {}
            _ => {
                let _ = fs::remove_file(&self.pid_file);
            }
        }
        let Coordinator { pool, .. } = self;
        pool.close();
        result
    }

    fn run_inner(&mut self) -> Result<ExperimentView, OrchestratorError> {
        self.replay_completed_generations()?;
        loop {
            if let Err(e) = self.refill() {
                return self.abort(e);
            }
            if let Err(e) = self.dispatch() {
                return self.abort(e);
            }
            if self.pool.running() == 0 && self.queue.is_empty() {
                let reason = if self.stopping {
                    Some((FinishReason::Stopped, None))
                } else if self.finish.is_some() {
                    self.finish.clone()
                } else if self.tuner.is_exhausted() {
                    Some((FinishReason::Budget, None))
                } else {
                    None
                };
                if let Some((reason, error)) = reason {
                    return self.finish(reason, error);
                }
            }
            match self.rx.recv_timeout(self.opts.poll_interval) {
                Ok(Msg::Done(done)) => {
                    if let Err(e) = self.on_done(done) {
                        return self.abort(e);
                    }
                }
                Ok(Msg::Control(c)) => self.on_control(c),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => unreachable!("coordinator holds a sender"),
            }
            if self.stop_file.exists() {
                let _ = fs::remove_file(&self.stop_file);
                self.request_stop();
            }
        }
    }

    /// On resume: rebuild the tuner state by replaying complete generations.
    fn replay_completed_generations(&mut self) -> Result<(), OrchestratorError> {
        let completed = self.view.generations_completed();
        for g in 0..completed {
            let batch = self.tuner.ask(usize::MAX)?;
            if batch.generation != g {
                return Err(OrchestratorError::ReplayMismatch(format!("expected generation {g}, tuner is at {}", batch.generation)));
            }
            let mut results = Vec::with_capacity(batch.proposals.len());
            for p in &batch.proposals {
                let trial = self.view.trials.get(&(p.id + 1)).ok_or_else(|| {
                    OrchestratorError::ReplayMismatch(format!("journal has no trial for proposal {}", p.id))
                })?;
                if trial.genome != p.genome || trial.generation != g {
                    return Err(OrchestratorError::ReplayMismatch(format!("proposal {} differs from trial {}", p.id, trial.id)));
                }
                results.push(match trial.objective {
                    Some(obj) => TellResult::success(p.id, obj),
                    None => TellResult::failure(p.id),
                });
            }
            self.issued += results.len() as u64;
            let outcome = self.tuner.tell(&results)?;
            if outcome.generation_completed != Some(g) {
                return Err(OrchestratorError::ReplayMismatch(format!("generation {g} did not close on replay")));
            }
            self.note_generation_best();
        }
        if completed > 0 {
            log::info!("{}: replayed {completed} generations", self.id);
        }
        Ok(())
    }

    fn refill(&mut self) -> Result<(), OrchestratorError> {
        if !self.queue.is_empty() || self.stopping || self.finish.is_some() || self.tuner.is_exhausted() {
            return Ok(());
        }
        let unasked = self.tuner.unasked();
        let generation_open = unasked > 0 || self.tuner.outstanding() > 0;
        if unasked == 0 && generation_open {
            return Ok(());
        }
        if !generation_open && self.target_hit {
            return Ok(());
        }
        let remaining = self.config.max_trials - self.issued;
        let n = self.config.concurrency.min(remaining as usize);
        if n == 0 {
            return Ok(());
        }
        let batch = self.tuner.ask(n)?;
        if let Some(p) = &self.opts.probe {
            p.asked(batch.generation, batch.proposals.len());
        }
        self.issued += batch.proposals.len() as u64;
        let generation = batch.generation;
        self.queue.extend(batch.proposals.into_iter().map(|proposal| Queued { proposal, generation }));
        Ok(())
    }

    fn dispatch(&mut self) -> Result<(), OrchestratorError> {
        while !self.stopping {
            let Some(slot) = self.pool.free_slot() else { break };
            let Some(q) = self.queue.pop_front() else { break };
            let trial_id = q.proposal.id + 1;
            let configuration = self.space.decode(&q.proposal.genome).expect("tuner genomes match the space");
            self.append(Event::TrialStarted(TrialStarted {
                trial_id,
                proposal_id: q.proposal.id,
                generation: q.generation,
                worker_slot: slot,
                genome: q.proposal.genome,
                configuration: configuration.clone(),
            }))?;
            self.pool.submit(slot, Job { trial_id, proposal_id: q.proposal.id, configuration });
        }
        Ok(())
    }

    fn on_done(&mut self, done: Done) -> Result<(), OrchestratorError> {
        let result = self.journal_done(done)?;
        let objective = result.objective;
        self.generation.results.push(result);
        if let (Some(obj), Some(goal)) = (objective, self.config.stop.target_objective) {
            if obj <= goal {
                self.target_hit = true;
            }
        }
        self.finished_this_session += 1;
        if self.opts.crash_after_trials == Some(self.finished_this_session) {
            return Err(OrchestratorError::InjectedCrash);
        }
        if !self.stopping && self.tuner.unasked() == 0 && self.generation.results.len() == self.tuner.outstanding() {
            self.close_generation()?;
        }
        Ok(())
    }

    fn journal_done(&mut self, done: Done) -> Result<TellResult, OrchestratorError> {
        self.pool.release(done.slot);
        let (status, objective, elapsed, error, output) = match done.result {
            Ok(ev) => (TrialStatus::Succeeded, Some(ev.objective), ev.elapsed, None, None),
            Err(f) => {
                let status = if f.is_timeout() { TrialStatus::Timeout } else { TrialStatus::Failed };
                if matches!(f.error, TargetError::SpawnFailure(_)) {
                    self.generation.spawn_failures += 1;
                }
                let msg = f.error.to_string();
                self.generation.last_error = Some(msg.clone());
                (status, None, f.elapsed, Some(msg), f.output)
            }
        };
        self.append(Event::TrialFinished(TrialFinished {
            trial_id: done.trial_id,
            status,
            objective,
            elapsed,
            error,
            stdout: output.as_ref().map(|o| tail(&o.stdout)).filter(|s| !s.is_empty()),
            stderr: output.as_ref().map(|o| tail(&o.stderr)).filter(|s| !s.is_empty()),
        }))?;
        Ok(TellResult { proposal_id: done.proposal_id, objective, elapsed })
    }

    /// The generation barrier: tell, journal, sync, evaluate stop criteria.
    fn close_generation(&mut self) -> Result<(), OrchestratorError> {
        let mut state = std::mem::take(&mut self.generation);
        state.results.sort_by_key(|r| r.proposal_id);
        let outcome = self.tuner.tell(&state.results)?;
        let generation = outcome.generation_completed.expect("full generation told");
        self.append(Event::GenerationCompleted(GenerationCompleted {
            generation,
            trials: state.results.len() as u64,
            best_objective: self.view.best.as_ref().map(|b| b.objective),
            tuner: self.tuner.summary(),
        }))?;
        self.journal.sync()?;
        self.note_generation_best();

        if state.spawn_failures == state.results.len() {
            let message = state.last_error.unwrap_or_default();
            self.finish = Some((FinishReason::Failed, Some(format!("generation {generation}: {message}"))));
        } else if self.target_hit {
            self.finish = Some((FinishReason::TargetReached, None));
        } else if self.tuner.is_exhausted() {
            self.finish = Some((FinishReason::Budget, None));
        } else if self.config.stop.stagnation_generations.is_some_and(|n| self.stagnant >= n) {
            self.finish = Some((FinishReason::Stagnation, None));
        }
        Ok(())
    }

    /// Tracks consecutive generations without incumbent improvement.
    fn note_generation_best(&mut self) {
        let best = self.view.best.as_ref().map(|b| b.objective);
        let improved = match (best, self.last_best) {
            (Some(b), Some(prev)) => b < prev,
            (Some(_), None) => true,
            _ => false,
        };
        self.last_best = best;
        self.stagnant = if improved { 0 } else { self.stagnant + 1 };
    }

    fn on_control(&mut self, c: Control) {
        match c {
            Control::Snapshot(reply) => {
                let _ = reply.send(self.snapshot());
            }
            Control::Stop(reply) => {
                let res = if self.stopping { Err(OrchestratorError::NotRunning(self.id.clone())) } else { Ok(()) };
                self.request_stop();
                let _ = reply.send(res);
            }
        }
    }

    fn request_stop(&mut self) {
        if !self.stopping {
            log::info!("{}: stop requested, draining {} running trials", self.id, self.pool.running());
        }
        self.stopping = true;
        self.queue.clear();
    }

    fn snapshot(&self) -> ExperimentView {
        let mut v = self.view.clone();
        v.pending = self.queue.len();
        if self.stopping {
            v.status = ExperimentStatus::Stopping;
        }
        v
    }

    fn finish(&mut self, reason: FinishReason, error: Option<String>) -> Result<ExperimentView, OrchestratorError> {
        let status = if reason == FinishReason::Failed { ExperimentStatus::Failed } else { ExperimentStatus::Finished };
        self.append(Event::ExperimentFinished(ExperimentFinished {
            status,
            reason,
            best: self.view.best.clone(),
            error: error.clone(),
        }))?;
        self.journal.sync()?;
        log::info!("{}: {} ({})", self.id, status, reason.name());
        if reason == FinishReason::Failed {
            let generation = self.view.generations.last().map_or(0, |g| g.generation);
            return Err(OrchestratorError::TargetFatal { generation, message: error.unwrap_or_default() });
        }
        Ok(self.view.clone())
    }

    /// Journals a failed finish for an internal error, then reports it.
    fn abort(&mut self, e: OrchestratorError) -> Result<ExperimentView, OrchestratorError> {
        if matches!(e, OrchestratorError::InjectedCrash) {
            return Err(e);
        }
        // Let in-flight trials land so every start has a terminal record.
        while self.pool.running() > 0 {
            match self.rx.recv() {
                Ok(Msg::Done(done)) => {
                    let _ = self.journal_done(done);
                }
                Ok(Msg::Control(c)) => self.on_control(c),
                Err(_) => break,
            }
        }
        let _ = self.append(Event::ExperimentFinished(ExperimentFinished {
            status: ExperimentStatus::Failed,
            reason: FinishReason::Failed,
            best: self.view.best.clone(),
            error: Some(e.to_string()),
        }));
        let _ = self.journal.sync();
        Err(e)
    }
}
