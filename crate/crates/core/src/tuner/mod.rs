//! Ask/tell tuners.
//!
//! Every tuner proceeds in generation-synchronous waves: the first `ask` of a
//! generation materializes all of its proposals, later asks hand out the
//! remainder, and the generation's update runs once every proposal has been
//! told. Because proposals are drawn up front, the random stream does not
//! depend on how the orchestrator chunks its asks.

mod de_tuner;
mod host;
mod random;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::BenchSpec;
use crate::space::{Genome, InitScheme, SearchSpace, MIN_POPULATION};
use crate::target::config_to_vec;

pub use de_tuner::{Adaptation, DeStrategy, Mutation, Variant};
pub use host::TunerHost;
pub use random::RandomStrategy;

pub type ProposalId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TunerError {
    #[error("evaluation budget exhausted")]
    BudgetExhausted,
    #[error("generation {0} still has outstanding proposals")]
    GenerationPending(u64),
    #[error("unknown proposal {0}")]
    UnknownProposal(ProposalId),
    #[error("proposal {0} was already told")]
    DuplicateTell(ProposalId),
    #[error("no successful evaluations yet")]
    NoEvaluations,
    #[error("invalid tuner configuration: {0}")]
    InvalidConfig(String),
    #[error("ask size must be at least 1")]
    EmptyAsk,
    #[error("tuner process stopped unexpectedly")]
    Crashed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunerKind {
    Random,
    ClassicDe,
    Jade,
    Shade,
    Lshade,
    Ljade,
}

impl TunerKind {
    pub const ALL: [TunerKind; 6] =
        [TunerKind::Random, TunerKind::ClassicDe, TunerKind::Jade, TunerKind::Shade, TunerKind::Lshade, TunerKind::Ljade];

    pub fn name(self) -> &'static str {
        match self {
            TunerKind::Random => "random",
            TunerKind::ClassicDe => "classic_de",
            TunerKind::Jade => "jade",
            TunerKind::Shade => "shade",
            TunerKind::Lshade => "lshade",
            TunerKind::Ljade => "ljade",
        }
    }

    pub fn default_init(self) -> InitScheme {
        match self {
            TunerKind::Ljade => InitScheme::Halton,
            _ => InitScheme::Uniform,
        }
    }
}

impl fmt::Display for TunerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TunerKind {
    type Err = TunerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TunerKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let valid: Vec<_> = TunerKind::ALL.iter().map(|k| k.name()).collect();
            TunerError::InvalidConfig(format!("unknown tuner `{s}` (valid: {})", valid.join(", ")))
        })
    }
}

pub const DEFAULT_POP_SIZE: usize = 75;
pub const DEFAULT_F: f64 = 0.5;
pub const DEFAULT_CR: f64 = 0.9;
pub const DEFAULT_P: f64 = 0.1;

/// Tuner settings as they appear in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerConfig {
    pub kind: TunerKind,
    #[serde(default = "default_pop")]
    pub pop_size: usize,
    #[serde(default = "default_f", alias = "F")]
    pub f: f64,
    #[serde(default = "default_cr", alias = "CR")]
    pub cr: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub init_scheme: Option<InitScheme>,
}

fn default_pop() -> usize {
    DEFAULT_POP_SIZE
}
fn default_f() -> f64 {
    DEFAULT_F
}
fn default_cr() -> f64 {
    DEFAULT_CR
}
fn default_p() -> f64 {
    DEFAULT_P
}
fn default_n_min() -> usize {
    MIN_POPULATION
}

impl TunerConfig {
    pub fn new(kind: TunerKind) -> Self {
        Self {
            kind,
            pop_size: DEFAULT_POP_SIZE,
            f: DEFAULT_F,
            cr: DEFAULT_CR,
            p: DEFAULT_P,
            n_min: MIN_POPULATION,
            seed: None,
            init_scheme: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_pop_size(mut self, n: usize) -> Self {
        self.pop_size = n;
        self
    }

    pub fn init(&self) -> InitScheme {
        self.init_scheme.unwrap_or_else(|| self.kind.default_init())
    }

    pub fn validate(&self) -> Result<(), TunerError> {
        let bad = |m: String| Err(TunerError::InvalidConfig(m));
        if self.pop_size < MIN_POPULATION {
            return bad(format!("pop_size must be >= {MIN_POPULATION}, got {}", self.pop_size));
        }
        if !(self.f > 0.0 && self.f <= 1.0) {
            return bad(format!("F must be in (0, 1], got {}", self.f));
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return bad(format!("CR must be in [0, 1], got {}", self.cr));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p must be in (0, 1], got {}", self.p));
        }
        if self.n_min < MIN_POPULATION || self.n_min > self.pop_size {
            return bad(format!("n_min must be in [{MIN_POPULATION}, pop_size], got {}", self.n_min));
        }
        Ok(())
    }

    /// Builds a tuner for `space` limited to `budget` evaluations.
    pub fn build(&self, space: &SearchSpace, budget: u64) -> Result<Box<dyn Tuner>, TunerError> {
        self.validate()?;
        if budget < self.pop_size as u64 {
            return Err(TunerError::InvalidConfig(format!(
                "budget {budget} is smaller than the population size {}",
                self.pop_size
            )));
        }
        Ok(match self.kind {
            TunerKind::Random => Box::new(WaveTuner::new(RandomStrategy::new(space.dim(), self.pop_size), self.seed, budget)),
            kind => Box::new(WaveTuner::new(DeStrategy::new(kind, self, space.clone(), budget), self.seed, budget)),
        })
    }
}

/// Failed evaluations are told with `objective: None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TellResult {
    pub proposal_id: ProposalId,
    pub objective: Option<f64>,
    #[serde(default)]
    pub elapsed: f64,
}

impl TellResult {
    pub fn success(proposal_id: ProposalId, objective: f64) -> Self {
        let objective = (!objective.is_nan()).then_some(objective);
        Self { proposal_id, objective, elapsed: 0.0 }
    }

    pub fn failure(proposal_id: ProposalId) -> Self {
        Self { proposal_id, objective: None, elapsed: 0.0 }
    }

    pub fn fitness(&self) -> f64 {
        self.objective.map(crate::de::sanitize).unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: ProposalId,
    pub genome: Genome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AskBatch {
    pub proposals: Vec<Proposal>,
    pub generation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TellOutcome {
    /// Set when this tell closed a generation.
    pub generation_completed: Option<u64>,
}

/// Adaptive state worth reporting at a generation boundary.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TunerSummary {
    pub pop_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_cr: Option<f64>,
}

pub trait Tuner: Send {
    fn ask(&mut self, max_n: usize) -> Result<AskBatch, TunerError>;
    fn tell(&mut self, results: &[TellResult]) -> Result<TellOutcome, TunerError>;
    /// Best point ever told, independent of population survival.
    fn best(&self) -> Result<(Genome, f64), TunerError>;
    /// Index of the generation currently being asked or told.
    fn generation(&self) -> u64;
    /// Proposals asked but not yet told.
    fn outstanding(&self) -> usize;
    /// Proposals of the current generation not yet asked.
    fn unasked(&self) -> usize;
    /// No more proposals can be asked.
    fn is_exhausted(&self) -> bool;
    fn summary(&self) -> TunerSummary;
}

/// The variant-specific part of a tuner.
pub trait Strategy: Send {
    /// Per-proposal bookkeeping carried from proposal to update.
    type Meta: Clone + Send;

    /// Draws up to `max_n` proposals for the next generation.
    fn propose(&mut self, generation: u64, max_n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<(Genome, Self::Meta)>;

    /// Consumes the told generation.
    fn complete(&mut self, generation: u64, results: Vec<(Genome, Self::Meta, f64)>);

    fn summary(&self) -> TunerSummary;
}

struct Slot<M> {
    id: ProposalId,
    genome: Genome,
    meta: M,
    fitness: Option<f64>,
}

struct Wave<M> {
    slots: Vec<Slot<M>>,
    asked: usize,
    told: usize,
}

/// Generation-wave bookkeeping shared by all tuners.
pub struct WaveTuner<S: Strategy> {
    strategy: S,
    rng: rand_chacha::ChaCha8Rng,
    budget: u64,
    issued: u64,
    next_id: ProposalId,
    generation: u64,
    wave: Option<Wave<S::Meta>>,
    incumbent: Option<(Genome, f64)>,
}

impl<S: Strategy> WaveTuner<S> {
    pub fn new(strategy: S, seed: Option<u64>, budget: u64) -> Self {
        use rand::SeedableRng;
        Self {
            strategy,
            rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed.unwrap_or(0)),
            budget,
            issued: 0,
            next_id: 0,
            generation: 0,
            wave: None,
            incumbent: None,
        }
    }

    pub fn strategy(&self) -> &S {
        &self.strategy
    }

    fn open_wave(&mut self) -> Result<(), TunerError> {
        let left = self.budget - self.issued;
        if left == 0 {
            return Err(TunerError::BudgetExhausted);
        }
        let drawn = self.strategy.propose(self.generation, left.min(usize::MAX as u64) as usize, &mut self.rng);
        debug_assert!(!drawn.is_empty() && drawn.len() as u64 <= left);
        let slots = drawn
            .into_iter()
            .map(|(genome, meta)| {
                let id = self.next_id;
                self.next_id += 1;
                Slot { id, genome, meta, fitness: None }
            })
            .collect::<Vec<_>>();
        self.issued += slots.len() as u64;
        self.wave = Some(Wave { slots, asked: 0, told: 0 });
        Ok(())
    }
}

impl<S: Strategy> Tuner for WaveTuner<S> {
    fn ask(&mut self, max_n: usize) -> Result<AskBatch, TunerError> {
        if max_n == 0 {
            return Err(TunerError::EmptyAsk);
        }
        if self.wave.is_none() {
            self.open_wave()?;
        }
        let generation = self.generation;
        let wave = self.wave.as_mut().expect("wave opened");
        if wave.asked == wave.slots.len() {
            return Err(TunerError::GenerationPending(generation));
        }
        let end = (wave.asked + max_n).min(wave.slots.len());
        let proposals =
            wave.slots[wave.asked..end].iter().map(|s| Proposal { id: s.id, genome: s.genome.clone() }).collect();
        wave.asked = end;
        Ok(AskBatch { proposals, generation })
    }

    fn tell(&mut self, results: &[TellResult]) -> Result<TellOutcome, TunerError> {
        let Some(wave) = self.wave.as_mut() else {
            return match results.first() {
                Some(r) if r.proposal_id < self.next_id => Err(TunerError::DuplicateTell(r.proposal_id)),
                Some(r) => Err(TunerError::UnknownProposal(r.proposal_id)),
                None => Ok(TellOutcome::default()),
            };
        };
        let first = wave.slots[0].id;
        let mut seen = HashSet::new();
        for r in results {
            let id = r.proposal_id;
            if id < first {
                return Err(TunerError::DuplicateTell(id));
            }
            let pos = (id - first) as usize;
            if pos >= wave.asked {
                return Err(TunerError::UnknownProposal(id));
            }
            if wave.slots[pos].fitness.is_some() || !seen.insert(id) {
                return Err(TunerError::DuplicateTell(id));
            }
        }
        for r in results {
            let pos = (r.proposal_id - first) as usize;
            let fit = r.fitness();
            wave.slots[pos].fitness = Some(fit);
            wave.told += 1;
            if fit.is_finite() && self.incumbent.as_ref().is_none_or(|(_, b)| fit < *b) {
                self.incumbent = Some((wave.slots[pos].genome.clone(), fit));
            }
        }
        if wave.told < wave.slots.len() {
            return Ok(TellOutcome::default());
        }
        let wave = self.wave.take().expect("wave present");
        let done = self.generation;
        let told = wave
            .slots
            .into_iter()
            .map(|s| (s.genome, s.meta, s.fitness.expect("all told")))
            .collect();
        self.strategy.complete(done, told);
        self.generation += 1;
        Ok(TellOutcome { generation_completed: Some(done) })
    }

    fn best(&self) -> Result<(Genome, f64), TunerError> {
        self.incumbent.clone().ok_or(TunerError::NoEvaluations)
    }

    fn generation(&self) -> u64 {
        self.generation
    }

    fn outstanding(&self) -> usize {
        self.wave.as_ref().map_or(0, |w| w.asked - w.told)
    }

    fn unasked(&self) -> usize {
        self.wave.as_ref().map_or(0, |w| w.slots.len() - w.asked)
    }

    fn is_exhausted(&self) -> bool {
        self.wave.is_none() && self.issued >= self.budget
    }

    fn summary(&self) -> TunerSummary {
        self.strategy.summary()
    }
}

/// Drives a tuner serially against an in-process objective until its budget
/// is spent. `None` marks a failed evaluation.
pub fn minimize<F>(tuner: &mut dyn Tuner, mut objective: F) -> Result<(Genome, f64), TunerError>
where
    F: FnMut(&Genome) -> Option<f64>,
{
    loop {
        let batch = match tuner.ask(usize::MAX) {
            Ok(b) => b,
            Err(TunerError::BudgetExhausted) => break,
            Err(e) => return Err(e),
        };
        let results: Vec<TellResult> = batch
            .proposals
            .iter()
            .map(|p| match objective(&p.genome) {
                Some(v) => TellResult::success(p.id, v),
                None => TellResult::failure(p.id),
            })
            .collect();
        tuner.tell(&results)?;
    }
    tuner.best()
}

/// Final result of a tuner run against a benchmark function.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub best: f64,
    pub best_x: Vec<f64>,
    pub nfe: u64,
}

/// Runs `cfg` serially on `spec` for `budget` evaluations.
pub fn benchmark(cfg: &TunerConfig, spec: &BenchSpec, budget: u64) -> Result<BenchRun, TunerError> {
    let space = spec.space();
    let mut tuner = cfg.build(&space, budget)?;
    let mut nfe = 0;
    let (genome, best) = minimize(tuner.as_mut(), |g| {
        nfe += 1;
        let config = space.decode(g).ok()?;
        spec.eval(&config_to_vec(&space, &config)).ok()
    })?;
    let best_x = config_to_vec(&space, &space.decode(&genome).map_err(|e| TunerError::InvalidConfig(e.to_string()))?);
    Ok(BenchRun { best, best_x, nfe })
}
