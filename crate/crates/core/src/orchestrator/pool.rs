use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use crate::space::Configuration;
use crate::target::{EvalFailure, Evaluation, Target};

/// Instrumentation for tests: counts evaluations actually in progress
/// inside worker threads and records every ask batch.
#[derive(Debug, Default)]
pub struct PoolProbe {
    running: AtomicUsize,
    max_running: AtomicUsize,
    evaluations: AtomicUsize,
    asks: Mutex<Vec<(u64, usize)>>,
}

impl PoolProbe {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    fn enter(&self) {
        let now = self.running.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_running.fetch_max(now, Ordering::SeqCst);
        self.evaluations.fetch_add(1, Ordering::SeqCst);
    }

    fn exit(&self) {
        self.running.fetch_sub(1, Ordering::SeqCst);
    }

    pub(super) fn asked(&self, generation: u64, n: usize) {
        self.asks.lock().expect("probe lock").push((generation, n));
    }

    pub fn max_running(&self) -> usize {
        self.max_running.load(Ordering::SeqCst)
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::SeqCst)
    }

    /// `(generation, batch size)` for every ask, in order.
    pub fn asks(&self) -> Vec<(u64, usize)> {
        self.asks.lock().expect("probe lock").clone()
    }

    /// Ask batch sizes of one generation.
    pub fn waves(&self, generation: u64) -> Vec<usize> {
        self.asks().into_iter().filter(|(g, _)| *g == generation).map(|(_, n)| n).collect()
    }
}

pub(super) struct Job {
    pub trial_id: u64,
    pub proposal_id: u64,
    pub configuration: Configuration,
}

pub(super) struct Done {
    pub slot: usize,
    pub trial_id: u64,
    pub proposal_id: u64,
    pub result: Result<Evaluation, EvalFailure>,
}

/// Fixed set of worker slots, one thread each.
pub(super) struct WorkerPool {
    jobs: Vec<Sender<Job>>,
    busy: Vec<bool>,
    threads: Vec<JoinHandle<()>>,
}

impl WorkerPool {
    pub fn spawn<M: From<Done> + Send + 'static>(
        slots: usize,
        target: Arc<Target>,
        events: Sender<M>,
        probe: Option<Arc<PoolProbe>>,
    ) -> Self {
        let mut jobs = Vec::with_capacity(slots);
        let mut threads = Vec::with_capacity(slots);
        for slot in 0..slots {
            let (tx, rx) = channel::<Job>();
            let target = Arc::clone(&target);
            let events = events.clone();
            let probe = probe.clone();
            let handle = thread::Builder::new()
                .name(format!("worker-{slot}"))
                .spawn(move || {
                    for job in rx {
                        if let Some(p) = &probe {
                            p.enter();
                        }
                        let result = target.evaluate_trial(&job.configuration, job.trial_id);
                        if let Some(p) = &probe {
                            p.exit();
                        }
                        let done = Done { slot, trial_id: job.trial_id, proposal_id: job.proposal_id, result };
                        if events.send(done.into()).is_err() {
                            break;
                        }
                    }
                })
                .expect("spawn worker thread");
            jobs.push(tx);
            threads.push(handle);
        }
        Self { jobs, busy: vec![false; slots], threads }
    }

    pub fn free_slot(&self) -> Option<usize> {
        self.busy.iter().position(|b| !b)
    }

    pub fn running(&self) -> usize {
        self.busy.iter().filter(|b| **b).count()
    }

    pub fn submit(&mut self, slot: usize, job: Job) {
        assert!(!self.busy[slot], "slot {slot} is busy");
        self.busy[slot] = true;
        self.jobs[slot].send(job).expect("worker thread alive");
    }

    pub fn release(&mut self, slot: usize) {
        self.busy[slot] = false;
    }

    /// Closes the job channels. Workers exit after their current job; the
    /// threads are detached so an abandoned evaluation cannot block shutdown.
    pub fn close(self) {
        drop(self.jobs);
        drop(self.threads);
    }
}
