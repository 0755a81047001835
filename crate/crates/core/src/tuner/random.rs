use rand_chacha::ChaCha8Rng;

use super::{Strategy, TunerSummary};
use crate::space::{uniform_genome, Genome};

/// Uniform random search, drawn in waves of `wave_size` so that it obeys the
/// same generation barrier as the DE tuners.
pub struct RandomStrategy {
    dim: usize,
    wave_size: usize,
}

impl RandomStrategy {
    pub fn new(dim: usize, wave_size: usize) -> Self {
        Self { dim, wave_size }
    }
}

impl Strategy for RandomStrategy {
    type Meta = ();

    fn propose(&mut self, _generation: u64, max_n: usize, rng: &mut ChaCha8Rng) -> Vec<(Genome, ())> {
        (0..self.wave_size.min(max_n)).map(|_| (uniform_genome(self.dim, rng), ())).collect()
    }

    fn complete(&mut self, _generation: u64, _results: Vec<(Genome, (), f64)>) {}

    fn summary(&self) -> TunerSummary {
        TunerSummary { pop_size: self.wave_size, mu_f: None, mu_cr: None }
    }
}
