use std::sync::mpsc::{channel, Sender};
use std::thread::{self, JoinHandle};

use super::{AskBatch, TellOutcome, TellResult, Tuner, TunerError, TunerSummary};
use crate::space::Genome;

enum Request {
    Ask(usize, Sender<Result<AskBatch, TunerError>>),
    Tell(Vec<TellResult>, Sender<Result<TellOutcome, TunerError>>),
    Best(Sender<Result<(Genome, f64), TunerError>>),
    State(Sender<HostState>),
}

#[derive(Clone)]
struct HostState {
    generation: u64,
    outstanding: usize,
    unasked: usize,
    exhausted: bool,
    summary: TunerSummary,
}

fn snapshot(t: &dyn Tuner) -> HostState {
    HostState {
        generation: t.generation(),
        outstanding: t.outstanding(),
        unasked: t.unasked(),
        exhausted: t.is_exhausted(),
        summary: t.summary(),
    }
}

/// Runs a tuner on its own thread; the caller talks to it only through
/// ask/tell messages. A panic inside the tuner surfaces as
/// [`TunerError::Crashed`] instead of taking the caller down.
pub struct TunerHost {
    tx: Option<Sender<Request>>,
    worker: Option<JoinHandle<()>>,
    cached: HostState,
}

impl TunerHost {
    pub fn spawn(mut tuner: Box<dyn Tuner>) -> Self {
        let cached = snapshot(tuner.as_ref());
        let (tx, rx) = channel::<Request>();
        let worker = thread::Builder::new()
            .name("tuner".into())
            .spawn(move || {
                for req in rx {
                    match req {
                        Request::Ask(n, reply) => {
                            let _ = reply.send(tuner.ask(n));
                        }
                        Request::Tell(results, reply) => {
                            let _ = reply.send(tuner.tell(&results));
                        }
                        Request::Best(reply) => {
                            let _ = reply.send(tuner.best());
                        }
                        Request::State(reply) => {
                            let _ = reply.send(snapshot(tuner.as_ref()));
                        }
                    }
                }
            })
            .expect("spawn tuner thread");
        Self { tx: Some(tx), worker: Some(worker), cached }
    }

    fn call<T>(&self, make: impl FnOnce(Sender<T>) -> Request) -> Result<T, TunerError> {
        let (reply, rx) = channel();
        self.tx.as_ref().ok_or(TunerError::Crashed)?.send(make(reply)).map_err(|_| TunerError::Crashed)?;
        rx.recv().map_err(|_| TunerError::Crashed)
    }

    fn refresh(&mut self) -> Result<(), TunerError> {
        self.cached = self.call(Request::State)?;
        Ok(())
    }
}

impl Tuner for TunerHost {
    fn ask(&mut self, max_n: usize) -> Result<AskBatch, TunerError> {
        let out = self.call(|r| Request::Ask(max_n, r))?;
        self.refresh()?;
        out
    }

    fn tell(&mut self, results: &[TellResult]) -> Result<TellOutcome, TunerError> {
        let out = self.call(|r| Request::Tell(results.to_vec(), r))?;
        self.refresh()?;
        out
    }

    fn best(&self) -> Result<(Genome, f64), TunerError> {
        self.call(Request::Best)?
    }

    fn generation(&self) -> u64 {
        self.cached.generation
    }

    fn outstanding(&self) -> usize {
        self.cached.outstanding
    }

    fn unasked(&self) -> usize {
        self.cached.unasked
    }

    fn is_exhausted(&self) -> bool {
        self.cached.exhausted
    }

    fn summary(&self) -> TunerSummary {
        self.cached.summary.clone()
    }
}

impl Drop for TunerHost {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
