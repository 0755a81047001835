//! Differential-evolution building blocks shared by every DE tuner.
//!
//! All fitness values are minimized. Failed evaluations are stored as
//! `f64::INFINITY`, never NaN.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Genome, MIN_POPULATION};

pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const CAUCHY_SCALE: f64 = 0.1;
pub const NORMAL_SD: f64 = 0.1;
pub const SHADE_MEMORY: usize = 10;
pub const CR_POWER_MEAN_EXPONENT: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeError {
    #[error("population of {0} is too small (minimum {MIN_POPULATION})")]
    PopulationTooSmall(usize),
    #[error("population contains unevaluated individuals")]
    UnevaluatedPopulation,
    #[error("individual has not been evaluated")]
    UnevaluatedIndividual,
    #[error("success lists differ in length")]
    LengthMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: Option<f64>,
    pub trial_id: Option<u64>,
}

impl Individual {
    pub fn new(genome: Genome) -> Self {
        Self { genome, fitness: None, trial_id: None }
    }

    pub fn evaluated(genome: Genome, fitness: f64) -> Self {
        Self { genome, fitness: Some(sanitize(fitness)), trial_id: None }
    }
}

/// Maps NaN to the failure sentinel.
pub fn sanitize(fitness: f64) -> f64 {
    if fitness.is_nan() {
        f64::INFINITY
    } else {
        fitness
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams {
    pub f: f64,
    pub cr: f64,
}

/// How the CR location is updated from successful CR values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CrMean {
    Arithmetic,
    /// Power mean; exponents above 1 pull the location away from small values.
    Power(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadeMemory {
    pub m_f: Vec<f64>,
    pub m_cr: Vec<f64>,
    pub k: usize,
}

impl ShadeMemory {
    pub fn new(h: usize) -> Self {
        Self { m_f: vec![0.5; h], m_cr: vec![0.5; h], k: 0 }
    }
}

/// Adaptive control state: JADE-style locations, or a SHADE memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptState {
    pub mu_f: f64,
    pub mu_cr: f64,
    pub c: f64,
    pub cr_mean: CrMean,
    pub shade_memory: Option<ShadeMemory>,
}

impl Default for AdaptState {
    fn default() -> Self {
        Self { mu_f: 0.5, mu_cr: 0.5, c: DEFAULT_LEARNING_RATE, cr_mean: CrMean::Arithmetic, shade_memory: None }
    }
}

impl AdaptState {
    pub fn jade() -> Self {
        Self::default()
    }

    pub fn ljade() -> Self {
        Self { cr_mean: CrMean::Power(CR_POWER_MEAN_EXPONENT), ..Self::default() }
    }

    pub fn shade(h: usize) -> Self {
        Self { shade_memory: Some(ShadeMemory::new(h)), ..Self::default() }
    }

    /// Draws (F, CR) for one individual. SHADE picks a random memory slot
    /// first; otherwise the JADE-style locations are used.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ControlParams {
        let (mu_f, mu_cr) = match &self.shade_memory {
            Some(mem) => {
                let r = rng.random_range(0..mem.m_f.len());
                (mem.m_f[r], mem.m_cr[r])
            }
            None => (self.mu_f, self.mu_cr),
        };
        ControlParams { f: sample_f(mu_f, rng), cr: sample_cr(mu_cr, rng) }
    }
}

/// Cauchy(mu_f, 0.1), redrawn while non-positive and truncated at 1.
pub fn sample_f<R: Rng + ?Sized>(mu_f: f64, rng: &mut R) -> f64 {
    let dist = Cauchy::new(mu_f, CAUCHY_SCALE).expect("valid cauchy scale");
    loop {
        let f = dist.sample(rng);
        if f > 0.0 {
            return f.min(1.0);
        }
    }
}

/// Normal(mu_cr, 0.1) clipped to [0,1].
pub fn sample_cr<R: Rng + ?Sized>(mu_cr: f64, rng: &mut R) -> f64 {
    let dist = Normal::new(mu_cr, NORMAL_SD).expect("valid normal sd");
    dist.sample(rng).clamp(0.0, 1.0)
}

/// Σx² / Σx.
pub fn lehmer_mean(xs: &[f64]) -> f64 {
    let (num, den) = xs.iter().fold((0.0, 0.0), |(n, d), &x| (n + x * x, d + x));
    num / den
}

pub fn power_mean(xs: &[f64], p: f64) -> f64 {
    let s: f64 = xs.iter().map(|x| x.powf(p)).sum();
    (s / xs.len() as f64).powf(1.0 / p)
}

/// Normalized improvement weights; infinite improvements (a failed parent
/// replaced by a finite child) share the weight equally among themselves.
fn improvement_weights(deltas: &[f64]) -> Vec<f64> {
    let n_inf = deltas.iter().filter(|d| d.is_infinite()).count();
    if n_inf > 0 {
        return deltas.iter().map(|d| if d.is_infinite() { 1.0 / n_inf as f64 } else { 0.0 }).collect();
    }
    let total: f64 = deltas.iter().sum();
    if total > 0.0 {
        deltas.iter().map(|d| d / total).collect()
    } else {
        vec![1.0 / deltas.len() as f64; deltas.len()]
    }
}

/// Applies one generation's success statistics to the control state.
pub fn update_adaptation(
    state: &AdaptState,
    s_f: &[f64],
    s_cr: &[f64],
    deltas: &[f64],
) -> Result<AdaptState, DeError> {
    if s_f.len() != s_cr.len() || s_f.len() != deltas.len() {
        return Err(DeError::LengthMismatch);
    }
    let mut next = state.clone();
    if s_f.is_empty() {
        return Ok(next);
    }
    match &mut next.shade_memory {
        Some(mem) => {
            let w = improvement_weights(deltas);
            let num: f64 = w.iter().zip(s_f).map(|(w, f)| w * f * f).sum();
            let den: f64 = w.iter().zip(s_f).map(|(w, f)| w * f).sum();
            let cr: f64 = w.iter().zip(s_cr).map(|(w, c)| w * c).sum();
            let k = mem.k;
            mem.m_f[k] = (num / den).clamp(f64::MIN_POSITIVE, 1.0);
            mem.m_cr[k] = cr.clamp(0.0, 1.0);
            mem.k = (k + 1) % mem.m_f.len();
        }
        None => {
            let c = state.c;
            next.mu_f = ((1.0 - c) * state.mu_f + c * lehmer_mean(s_f)).clamp(f64::MIN_POSITIVE, 1.0);
            let cr_loc = match state.cr_mean {
                CrMean::Arithmetic => s_cr.iter().sum::<f64>() / s_cr.len() as f64,
                CrMean::Power(p) => power_mean(s_cr, p),
            };
            next.mu_cr = ((1.0 - c) * state.mu_cr + c * cr_loc).clamp(0.0, 1.0);
        }
    }
    Ok(next)
}

fn check_size(len: usize) -> Result<(), DeError> {
    if len < MIN_POPULATION {
        Err(DeError::PopulationTooSmall(len))
    } else {
        Ok(())
    }
}

/// Three distinct indices in `0..n`, all different from `exclude`.
fn distinct_three<R: Rng + ?Sized>(n: usize, exclude: usize, rng: &mut R) -> [usize; 3] {
    let picks = sample(rng, n - 1, 3);
    let mut out = [0; 3];
    for (slot, p) in out.iter_mut().zip(picks.iter()) {
        *slot = if p >= exclude { p + 1 } else { p };
    }
    out
}

/// a + F(b - c); a, b, c distinct and different from the target.
pub fn rand1(a: &[f64], b: &[f64], c: &[f64], f: f64) -> Vec<f64> {
    a.iter().zip(b).zip(c).map(|((a, b), c)| a + f * (b - c)).collect()
}

/// a + F(g_p - a) + F(b - c).
pub fn rand_to_pbest1(a: &[f64], g_p: &[f64], b: &[f64], c: &[f64], f: f64) -> Vec<f64> {
    a.iter()
        .zip(g_p)
        .zip(b)
        .zip(c)
        .map(|(((a, g), b), c)| a + f * (g - a) + f * (b - c))
        .collect()
}

/// rand/1 mutation; returns the raw (unrepaired) mutant.
pub fn mutate_rand1<R: Rng + ?Sized>(
    pop: &[Individual],
    target_idx: usize,
    f: f64,
    rng: &mut R,
) -> Result<Vec<f64>, DeError> {
    check_size(pop.len())?;
    let [a, b, c] = distinct_three(pop.len(), target_idx, rng);
    Ok(rand1(pop[a].genome.coords(), pop[b].genome.coords(), pop[c].genome.coords(), f))
}

/// Size of the p-best pool for a population of `n`.
pub fn pbest_pool_size(n: usize, p: f64) -> usize {
    ((p * n as f64).round() as usize).max(1)
}

/// rand-to-p-best/1 mutation; `g_p` is drawn from the best `max(1, round(pN))`
/// individuals other than the target. Returns the raw mutant.
pub fn mutate_rand_to_pbest1<R: Rng + ?Sized>(
    pop: &[Individual],
    target_idx: usize,
    p: f64,
    f: f64,
    rng: &mut R,
) -> Result<Vec<f64>, DeError> {
    check_size(pop.len())?;
    let ranked = rank_by_fitness(pop)?;
    let pool: Vec<usize> = ranked.into_iter().filter(|&i| i != target_idx).take(pbest_pool_size(pop.len(), p)).collect();
    let g = pool[rng.random_range(0..pool.len())];
    let [a, b, c] = distinct_three(pop.len(), target_idx, rng);
    Ok(rand_to_pbest1(
        pop[a].genome.coords(),
        pop[g].genome.coords(),
        pop[b].genome.coords(),
        pop[c].genome.coords(),
        f,
    ))
}

/// Indices sorted by ascending fitness; ties keep population order.
pub fn rank_by_fitness(pop: &[Individual]) -> Result<Vec<usize>, DeError> {
    let fit: Vec<f64> = pop.iter().map(|i| i.fitness.ok_or(DeError::UnevaluatedPopulation)).collect::<Result<_, _>>()?;
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]));
    Ok(idx)
}

/// Pulls out-of-cube coordinates halfway back from the target to the
/// violated bound.
pub fn repair_bounds(v: &[f64], target: &Genome) -> Genome {
    debug_assert_eq!(v.len(), target.len());
    Genome::from_unit(
        v.iter()
            .zip(target.coords())
            .map(|(&v, &x)| {
                if v < 0.0 {
                    x / 2.0
                } else if v > 1.0 {
                    (1.0 + x) / 2.0
                } else {
                    v
                }
            })
            .collect(),
    )
}

/// Binomial crossover with one forced donor coordinate.
pub fn crossover_binomial<R: Rng + ?Sized>(target: &Genome, donor: &Genome, cr: f64, rng: &mut R) -> Genome {
    let d = target.len();
    let j_rand = rng.random_range(0..d);
    Genome::from_unit(
        (0..d)
            .map(|j| {
                let u: f64 = rng.random();
                if u < cr || j == j_rand {
                    donor.coords()[j]
                } else {
                    target.coords()[j]
                }
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub winner: Individual,
    pub improved: bool,
    pub delta: f64,
}

/// Greedy one-to-one selection. The child wins ties; a failed child never wins.
pub fn select(parent: &Individual, child: &Individual) -> Result<Selection, DeError> {
    let pf = parent.fitness.ok_or(DeError::UnevaluatedIndividual)?;
    let cf = child.fitness.ok_or(DeError::UnevaluatedIndividual)?;
    let child_wins = cf.is_finite() && cf <= pf;
    let improved = cf < pf;
    let delta = if improved { pf - cf } else { 0.0 };
    Ok(Selection {
        winner: if child_wins { child.clone() } else { parent.clone() },
        improved,
        delta,
    })
}

/// Linear population size reduction schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeSchedule {
    pub n_init: usize,
    pub n_min: usize,
    pub max_nfe: u64,
}

impl SizeSchedule {
    pub fn size_at(&self, nfe: u64) -> usize {
        lpsr_size(self, nfe)
    }
}

pub fn lpsr_size(sched: &SizeSchedule, nfe: u64) -> usize {
    let nfe = nfe.min(sched.max_nfe);
    let frac = if sched.max_nfe == 0 { 1.0 } else { nfe as f64 / sched.max_nfe as f64 };
    let raw = sched.n_init as f64 + (sched.n_min as f64 - sched.n_init as f64) * frac;
    (raw.round() as usize).clamp(sched.n_min, sched.n_init)
}

/// Drops the worst individuals down to `new_size`, keeping survivors in their
/// original order. Fitness ties at the cut favor the lower index.
pub fn shrink_population(pop: Vec<Individual>, new_size: usize) -> Result<Vec<Individual>, DeError> {
    let ranked = rank_by_fitness(&pop)?;
    if new_size >= pop.len() {
        return Ok(pop);
    }
    let mut keep = vec![false; pop.len()];
    for &i in &ranked[..new_size] {
        keep[i] = true;
    }
    Ok(pop.into_iter().zip(keep).filter_map(|(ind, k)| k.then_some(ind)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(v: &[f64]) -> Genome {
        Genome::new(v.to_vec()).unwrap()
    }

    fn ind(v: &[f64], f: f64) -> Individual {
        Individual::evaluated(g(v), f)
    }

    #[test]
    fn rand1_substitution() {
        assert_eq!(rand1(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], 0.5), [0.5, -0.5]);
        assert_eq!(rand1(&[0.3, 0.7], &[1.0, 0.0], &[0.0, 1.0], 0.0), [0.3, 0.7]);
    }

    #[test]
    fn pbest_substitution() {
        assert_eq!(rand_to_pbest1(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 0.0], &[0.0, 1.0], 0.5), [1.0, 0.0]);
        assert_eq!(rand_to_pbest1(&[0.2, 0.4], &[1.0, 1.0], &[1.0, 0.0], &[0.0, 1.0], 0.0), [0.2, 0.4]);
    }

    #[test]
    fn mutation_rejects_small_population() {
        let pop: Vec<_> = (0..3).map(|i| ind(&[i as f64 / 3.0], 1.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(mutate_rand1(&pop, 0, 0.5, &mut rng), Err(DeError::PopulationTooSmall(3)));
        assert_eq!(mutate_rand_to_pbest1(&pop, 0, 0.1, 0.5, &mut rng), Err(DeError::PopulationTooSmall(3)));
    }

    #[test]
    fn pbest_requires_evaluated_population() {
        let mut pop: Vec<_> = (0..5).map(|i| ind(&[i as f64 / 5.0], 1.0)).collect();
        pop[2].fitness = None;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(mutate_rand_to_pbest1(&pop, 0, 0.1, 0.5, &mut rng), Err(DeError::UnevaluatedPopulation));
    }

    #[test]
    fn zero_scale_factor_returns_base_vector() {
        // With F = 0 the mutant equals some population member other than the target.
        let pop: Vec<_> = (0..6).map(|i| ind(&[i as f64 / 10.0, 0.5], i as f64)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = mutate_rand1(&pop, 2, 0.0, &mut rng).unwrap();
            let hit = pop.iter().position(|p| p.genome.coords() == v.as_slice()).unwrap();
            assert_ne!(hit, 2);
            let w = mutate_rand_to_pbest1(&pop, 2, 0.1, 0.0, &mut rng).unwrap();
            assert!(pop.iter().enumerate().any(|(i, p)| i != 2 && p.genome.coords() == w.as_slice()));
        }
    }

    #[test]
    fn distinct_indices_exclude_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 4..9 {
            for t in 0..n {
                for _ in 0..100 {
                    let [a, b, c] = distinct_three(n, t, &mut rng);
                    assert!(a != b && b != c && a != c);
                    assert!(a != t && b != t && c != t);
                    assert!(a < n && b < n && c < n);
                }
            }
        }
    }

    #[test]
    fn pbest_pool_of_one_is_best_non_target() {
        // Pool of one: g_p must be the best. Recover g_p by using b = c cancellation
        // is not possible, so check with F = 1 on a population where a, b and c are known.
        assert_eq!(pbest_pool_size(75, 0.001), 1);
        assert_eq!(pbest_pool_size(75, 0.1), 8);
        let pop = vec![ind(&[0.9], 5.0), ind(&[0.1], 0.0), ind(&[0.5], 3.0), ind(&[0.5], 4.0), ind(&[0.5], 6.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            // Target is 0. a,b,c are among the 0.5s and 0.1, and with F = 1 the mutant is
            // g_p + (b - c); for a pool of one g_p is individual 1 (0.1).
            let v = mutate_rand_to_pbest1(&pop, 0, 0.01, 1.0, &mut rng).unwrap();
            let possible: Vec<f64> = [0.0, 0.4, -0.4].iter().map(|d| 0.1 + d).collect();
            assert!(possible.iter().any(|p| (p - v[0]).abs() < 1e-12), "{v:?}");
        }
    }

    #[test]
    fn repair_examples() {
        assert_eq!(repair_bounds(&[0.5, -0.5], &g(&[0.9, 0.3])).coords(), &[0.5, 0.15]);
        assert_eq!(repair_bounds(&[0.2, 0.8], &g(&[0.9, 0.3])).coords(), &[0.2, 0.8]);
        assert!((repair_bounds(&[1.2], &g(&[0.8])).coords()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn crossover_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = g(&[0.1, 0.2, 0.3, 0.4]);
        let d = g(&[0.9, 0.8, 0.7, 0.6]);
        assert_eq!(crossover_binomial(&t, &d, 1.0, &mut rng), d);
        for _ in 0..100 {
            let x = crossover_binomial(&t, &d, 0.0, &mut rng);
            let diff = x.coords().iter().zip(t.coords()).filter(|(a, b)| a != b).count();
            assert_eq!(diff, 1);
        }
        let t1 = g(&[0.1]);
        let d1 = g(&[0.9]);
        for cr in [0.0, 0.3, 1.0] {
            assert_eq!(crossover_binomial(&t1, &d1, cr, &mut rng), d1);
        }
    }

    #[test]
    fn crossover_always_takes_a_donor_coordinate() {
        for dim in 1..=4 {
            let t = g(&vec![0.0; dim]);
            let d = g(&vec![1.0; dim]);
            for seed in 0..200 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for step in 0..=10 {
                    let x = crossover_binomial(&t, &d, step as f64 / 10.0, &mut rng);
                    assert!(x.coords().contains(&1.0));
                }
            }
        }
    }

    #[test]
    fn select_examples() {
        let s = select(&ind(&[0.1], 5.0), &ind(&[0.2], 3.0)).unwrap();
        assert_eq!(s.winner.fitness, Some(3.0));
        assert!(s.improved);
        assert_eq!(s.delta, 2.0);

        let s = select(&ind(&[0.1], 4.0), &ind(&[0.2], 4.0)).unwrap();
        assert_eq!(s.winner.genome, g(&[0.2]));
        assert!(!s.improved);
        assert_eq!(s.delta, 0.0);

        let s = select(&ind(&[0.1], 4.0), &ind(&[0.2], f64::INFINITY)).unwrap();
        assert_eq!(s.winner.genome, g(&[0.1]));
        assert!(!s.improved);

        let s = select(&ind(&[0.1], f64::INFINITY), &ind(&[0.2], 1.0)).unwrap();
        assert!(s.improved);
        assert!(s.delta.is_infinite());

        assert_eq!(
            select(&Individual::new(g(&[0.1])), &ind(&[0.2], 1.0)),
            Err(DeError::UnevaluatedIndividual)
        );
    }

    #[test]
    fn nan_is_stored_as_failure() {
        assert_eq!(Individual::evaluated(g(&[0.5]), f64::NAN).fitness, Some(f64::INFINITY));
    }

    #[test]
    fn sample_f_contract_and_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut draws: Vec<f64> = (0..100_000).map(|_| sample_f(0.5, &mut rng)).collect();
        assert!(draws.iter().all(|&f| f > 0.0 && f <= 1.0));
        draws.sort_by(f64::total_cmp);
        let median = draws[draws.len() / 2];
        assert!((0.47..=0.53).contains(&median), "median {median}");

        let ones = (0..100_000).filter(|_| sample_f(0.9, &mut rng) == 1.0).count();
        assert!(ones > 0);
    }

    #[test]
    fn sample_cr_contract_and_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let zero: Vec<f64> = (0..100_000).map(|_| sample_cr(0.0, &mut rng)).collect();
        assert!(zero.iter().all(|c| (0.0..=1.0).contains(c)));
        let m0 = zero.iter().sum::<f64>() / zero.len() as f64;
        // E[max(0, N(0, 0.1))] = 0.1 / sqrt(2 pi) ≈ 0.0399.
        assert!((0.02..=0.06).contains(&m0), "{m0}");
        let m5 = (0..100_000).map(|_| sample_cr(0.5, &mut rng)).sum::<f64>() / 100_000.0;
        assert!((m5 - 0.5).abs() <= 0.01, "{m5}");
    }

    #[test]
    fn adaptation_examples() {
        let s = AdaptState::jade();
        assert_eq!(update_adaptation(&s, &[], &[], &[]).unwrap(), s);

        let lehmer = lehmer_mean(&[0.2, 0.8]);
        assert!((lehmer - 0.68).abs() < 1e-12);
        let next = update_adaptation(&s, &[0.2, 0.8], &[0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert!((next.mu_f - 0.518).abs() < 1e-12, "{}", next.mu_f);

        let fixed = update_adaptation(&s, &[0.5, 0.5], &[0.5, 0.5], &[1.0, 2.0]).unwrap();
        assert!((fixed.mu_f - 0.5).abs() < 1e-15);
        assert!((fixed.mu_cr - 0.5).abs() < 1e-15);

        assert_eq!(update_adaptation(&s, &[0.5], &[], &[1.0]), Err(DeError::LengthMismatch));
    }

    #[test]
    fn ljade_cr_update_uses_power_mean() {
        let s = AdaptState::ljade();
        let next = update_adaptation(&s, &[0.5, 0.5], &[0.1, 0.9], &[1.0, 1.0]).unwrap();
        let pm = ((0.1f64.powf(1.5) + 0.9f64.powf(1.5)) / 2.0).powf(1.0 / 1.5);
        assert!((next.mu_cr - (0.9 * 0.5 + 0.1 * pm)).abs() < 1e-12);
        assert!(pm > 0.5);
    }

    #[test]
    fn shade_memory_writes_weighted_means_cyclically() {
        let mut s = AdaptState::shade(2);
        s = update_adaptation(&s, &[0.2, 0.8], &[0.2, 0.6], &[1.0, 3.0]).unwrap();
        let mem = s.shade_memory.as_ref().unwrap();
        // weights 0.25 / 0.75
        let lf = (0.25 * 0.04 + 0.75 * 0.64) / (0.25 * 0.2 + 0.75 * 0.8);
        assert!((mem.m_f[0] - lf).abs() < 1e-12);
        assert!((mem.m_cr[0] - 0.5).abs() < 1e-12);
        assert_eq!(mem.k, 1);
        s = update_adaptation(&s, &[0.3], &[0.3], &[1.0]).unwrap();
        s = update_adaptation(&s, &[0.4], &[0.4], &[1.0]).unwrap();
        let mem = s.shade_memory.as_ref().unwrap();
        assert_eq!(mem.k, 1);
        assert!((mem.m_f[0] - 0.4).abs() < 1e-12);
        assert!((mem.m_f[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn lpsr_examples() {
        let s = SizeSchedule { n_init: 75, n_min: 4, max_nfe: 1000 };
        assert_eq!(lpsr_size(&s, 0), 75);
        assert_eq!(lpsr_size(&s, 1000), 4);
        assert_eq!(lpsr_size(&s, 500), 40);
        let mut prev = usize::MAX;
        for nfe in 0..=1000 {
            let n = lpsr_size(&s, nfe);
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn shrink_examples() {
        let pop = vec![ind(&[0.1], 1.0), ind(&[0.2], 9.0), ind(&[0.3], 3.0), ind(&[0.4], 7.0)];
        let kept = shrink_population(pop.clone(), 2).unwrap();
        assert_eq!(kept.iter().map(|i| i.fitness.unwrap()).collect::<Vec<_>>(), [1.0, 3.0]);
        assert_eq!(shrink_population(pop, 4).unwrap().len(), 4);

        let tied = vec![ind(&[0.1], 2.0), ind(&[0.2], 1.0), ind(&[0.3], 2.0), ind(&[0.4], 2.0)];
        let kept = shrink_population(tied, 2).unwrap();
        assert_eq!(kept[0].genome, g(&[0.1]));
        assert_eq!(kept[1].genome, g(&[0.2]));

        let mut bad = vec![ind(&[0.1], 1.0); 4];
        bad[1].fitness = None;
        assert_eq!(shrink_population(bad, 2), Err(DeError::UnevaluatedPopulation));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn mutate_repair_crossover_stays_in_cube(
            seed in any::<u64>(),
            n in 4usize..12,
            dim in 1usize..6,
            f in 0.0..=1.0f64,
            cr in 0.0..=1.0f64,
            p in 0.01..=1.0f64,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pop: Vec<Individual> = (0..n)
                .map(|i| Individual::evaluated(crate::space::uniform_genome(dim, &mut rng), i as f64))
                .collect();
            let t = rng.random_range(0..n);
            let raw = if seed % 2 == 0 {
                mutate_rand1(&pop, t, f, &mut rng).unwrap()
            } else {
                mutate_rand_to_pbest1(&pop, t, p, f, &mut rng).unwrap()
            };
            let donor = repair_bounds(&raw, &pop[t].genome);
            let trial = crossover_binomial(&pop[t].genome, &donor, cr, &mut rng);
            prop_assert!(trial.coords().iter().all(|u| (0.0..=1.0).contains(u)));
            prop_assert_eq!(trial.len(), dim);
        }
    }

    proptest! {
        #[test]
        fn adaptation_stays_in_range(
            seq in proptest::collection::vec(
                proptest::collection::vec((1e-6..=1.0f64, 0.0..=1.0f64, 0.0..100.0f64), 0..10),
                1..20
            ),
            shade in any::<bool>(),
            ljade in any::<bool>(),
        ) {
            let mut s = if shade { AdaptState::shade(SHADE_MEMORY) } else if ljade { AdaptState::ljade() } else { AdaptState::jade() };
            for gen in seq {
                let sf: Vec<f64> = gen.iter().map(|x| x.0).collect();
                let scr: Vec<f64> = gen.iter().map(|x| x.1).collect();
                let d: Vec<f64> = gen.iter().map(|x| x.2).collect();
                s = update_adaptation(&s, &sf, &scr, &d).unwrap();
                prop_assert!(s.mu_f > 0.0 && s.mu_f <= 1.0);
                prop_assert!((0.0..=1.0).contains(&s.mu_cr));
                if let Some(m) = &s.shade_memory {
                    prop_assert!(m.m_f.iter().all(|f| *f > 0.0 && *f <= 1.0));
                    prop_assert!(m.m_cr.iter().all(|c| (0.0..=1.0).contains(c)));
                    prop_assert!(m.k < m.m_f.len());
                }
            }
        }

        #[test]
        fn lpsr_monotone_with_exact_endpoints(n_min in 4usize..20, extra in 0usize..200, max_nfe in 1u64..5000) {
            let s = SizeSchedule { n_init: n_min + extra, n_min, max_nfe: max_nfe.max((n_min + extra) as u64) };
            prop_assert_eq!(lpsr_size(&s, 0), s.n_init);
            prop_assert_eq!(lpsr_size(&s, s.max_nfe), s.n_min);
            let mut prev = s.n_init;
            for k in 0..=50u64 {
                let n = lpsr_size(&s, s.max_nfe * k / 50);
                prop_assert!(n <= prev);
                prev = n;
            }
        }
    }
}
