use rand_chacha::ChaCha8Rng;

use super::{Strategy, TunerConfig, TunerKind, TunerSummary};
use crate::de::{self, AdaptState, ControlParams, Individual, SizeSchedule, SHADE_MEMORY};
use crate::space::{self, Genome, InitScheme, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    Rand1,
    RandToPBest1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adaptation {
    Fixed,
    /// Lehmer-mean F, arithmetic-mean CR.
    Jade,
    /// Lehmer-mean F, power-mean CR.
    Ljade,
    /// Success-history memory.
    Shade,
}

impl Adaptation {
    fn initial_state(self) -> AdaptState {
        match self {
            Adaptation::Fixed | Adaptation::Jade => AdaptState::jade(),
            Adaptation::Ljade => AdaptState::ljade(),
            Adaptation::Shade => AdaptState::shade(SHADE_MEMORY),
        }
    }
}

/// How a DE variant is composed from the engine primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub mutation: Mutation,
    pub adaptation: Adaptation,
    pub lpsr: bool,
}

impl Variant {
    pub fn for_kind(kind: TunerKind) -> Self {
        let (mutation, adaptation, lpsr) = match kind {
            TunerKind::ClassicDe => (Mutation::Rand1, Adaptation::Fixed, false),
            TunerKind::Jade => (Mutation::RandToPBest1, Adaptation::Jade, false),
            TunerKind::Shade => (Mutation::RandToPBest1, Adaptation::Shade, false),
            TunerKind::Lshade => (Mutation::RandToPBest1, Adaptation::Shade, true),
            TunerKind::Ljade => (Mutation::RandToPBest1, Adaptation::Ljade, true),
            TunerKind::Random => unreachable!("random search is not a DE variant"),
        };
        Self { mutation, adaptation, lpsr }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrialMeta {
    target: usize,
    control: ControlParams,
}

/// Differential evolution over the unit cube.
pub struct DeStrategy {
    variant: Variant,
    space: SearchSpace,
    pop_size: usize,
    init: InitScheme,
    seed: Option<u64>,
    fixed: ControlParams,
    p: f64,
    adapt: AdaptState,
    schedule: SizeSchedule,
    pop: Vec<Individual>,
    nfe: u64,
}

impl DeStrategy {
    pub fn new(kind: TunerKind, cfg: &TunerConfig, space: SearchSpace, budget: u64) -> Self {
        let variant = Variant::for_kind(kind);
        Self {
            variant,
            space,
            pop_size: cfg.pop_size,
            init: cfg.init(),
            seed: cfg.seed,
            fixed: ControlParams { f: cfg.f, cr: cfg.cr },
            p: cfg.p,
            adapt: variant.adaptation.initial_state(),
            schedule: SizeSchedule { n_init: cfg.pop_size, n_min: cfg.n_min, max_nfe: budget },
            pop: Vec::new(),
            nfe: 0,
        }
    }

    pub fn population(&self) -> &[Individual] {
        &self.pop
    }

    pub fn adapt_state(&self) -> &AdaptState {
        &self.adapt
    }
}

impl Strategy for DeStrategy {
    type Meta = Option<TrialMeta>;

    fn propose(&mut self, generation: u64, max_n: usize, rng: &mut ChaCha8Rng) -> Vec<(Genome, Self::Meta)> {
        if generation == 0 {
            let n = self.pop_size.min(max_n).max(space::MIN_POPULATION);
            let genomes = space::init_population(&self.space, n, self.init, self.seed)
                .expect("population size validated at construction");
            return genomes.into_iter().take(max_n).map(|g| (g, None)).collect();
        }
        let n = self.pop.len().min(max_n);
        (0..n)
            .map(|i| {
                let control = match self.variant.adaptation {
                    Adaptation::Fixed => self.fixed,
                    _ => self.adapt.sample(rng),
                };
                let raw = match self.variant.mutation {
                    Mutation::Rand1 => de::mutate_rand1(&self.pop, i, control.f, rng),
                    Mutation::RandToPBest1 => de::mutate_rand_to_pbest1(&self.pop, i, self.p, control.f, rng),
                }
                .expect("population is evaluated and large enough");
                let target = &self.pop[i].genome;
                let donor = de::repair_bounds(&raw, target);
                let trial = de::crossover_binomial(target, &donor, control.cr, rng);
                (trial, Some(TrialMeta { target: i, control }))
            })
            .collect()
    }

    fn complete(&mut self, generation: u64, results: Vec<(Genome, Self::Meta, f64)>) {
        self.nfe += results.len() as u64;
        if generation == 0 {
            self.pop = results.into_iter().map(|(g, _, f)| Individual::evaluated(g, f)).collect();
        } else {
            let (mut s_f, mut s_cr, mut deltas) = (Vec::new(), Vec::new(), Vec::new());
            for (genome, meta, fitness) in results {
                let meta = meta.expect("trial metadata after generation 0");
                let child = Individual::evaluated(genome, fitness);
                let sel = de::select(&self.pop[meta.target], &child).expect("both evaluated");
                if sel.improved {
                    s_f.push(meta.control.f);
                    s_cr.push(meta.control.cr);
                    deltas.push(sel.delta);
                }
                self.pop[meta.target] = sel.winner;
            }
            if self.variant.adaptation != Adaptation::Fixed {
                self.adapt = de::update_adaptation(&self.adapt, &s_f, &s_cr, &deltas).expect("equal lengths");
            }
        }
        if self.variant.lpsr {
            let size = de::lpsr_size(&self.schedule, self.nfe);
            if size < self.pop.len() {
                self.pop = de::shrink_population(std::mem::take(&mut self.pop), size).expect("evaluated");
            }
        }
    }

    fn summary(&self) -> TunerSummary {
        let (mu_f, mu_cr) = match (self.variant.adaptation, &self.adapt.shade_memory) {
            (Adaptation::Fixed, _) => (None, None),
            (_, Some(mem)) => {
                let h = mem.m_f.len() as f64;
                (Some(mem.m_f.iter().sum::<f64>() / h), Some(mem.m_cr.iter().sum::<f64>() / h))
            }
            (_, None) => (Some(self.adapt.mu_f), Some(self.adapt.mu_cr)),
        };
        let pop_size = if self.pop.is_empty() { self.pop_size } else { self.pop.len() };
        TunerSummary { pop_size, mu_f, mu_cr }
    }
}
