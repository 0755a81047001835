//! Benchmark test functions with known global minima.
//!
//! Definitions and domains follow the CEC-2014 conventions; every function is
//! non-negative on its domain and equals 0 at its documented optimum.
//!
//! | name        | domain               | optimum            |
//! |-------------|----------------------|--------------------|
//! | sphere      | [-100, 100]^d        | 0                  |
//! | quadratic   | [-100, 100]^d        | 0 (Σ i·x_i²)       |
//! | polyfit     | [-10, 10]^(deg+1)    | planted coeffs     |
//! | rosenbrock  | [-30, 30]^d          | 1                  |
//! | rastrigin   | [-5.12, 5.12]^d      | 0                  |
//! | ackley      | [-32.768, 32.768]^d  | 0                  |
//! | griewank    | [-600, 600]^d        | 0                  |
//! | schaffer_f6 | [-100, 100]^2        | 0                  |
//! | hgbat       | [-100, 100]^d        | -1                 |
//! | schwefel    | [-500, 500]^d        | 420.968746         |
//! | weierstrass | [-0.5, 0.5]^d        | 0                  |

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{ParamSpec, SearchSpace};

pub const POLYFIT_POINTS: usize = 64;
pub const POLYFIT_MAX_DEGREE: usize = 8;
pub const SCHWEFEL_OPTIMUM: f64 = 420.968746;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("unknown benchmark function `{0}`")]
    UnknownFunction(String),
    #[error("invalid dimension {dim} for {name}: {reason}")]
    InvalidDimension { name: &'static str, dim: usize, reason: &'static str },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("point outside the domain [{lo}, {hi}] at coordinate {index}")]
    OutOfDomain { index: usize, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchFn {
    Sphere,
    Quadratic,
    Polyfit,
    Rosenbrock,
    Rastrigin,
    Ackley,
    Griewank,
    SchafferF6,
    Hgbat,
    Schwefel,
    Weierstrass,
}

impl BenchFn {
    pub const ALL: [BenchFn; 11] = [
        BenchFn::Sphere,
        BenchFn::Quadratic,
        BenchFn::Polyfit,
        BenchFn::Rosenbrock,
        BenchFn::Rastrigin,
        BenchFn::Ackley,
        BenchFn::Griewank,
        BenchFn::SchafferF6,
        BenchFn::Hgbat,
        BenchFn::Schwefel,
        BenchFn::Weierstrass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchFn::Sphere => "sphere",
            BenchFn::Quadratic => "quadratic",
            BenchFn::Polyfit => "polyfit",
            BenchFn::Rosenbrock => "rosenbrock",
            BenchFn::Rastrigin => "rastrigin",
            BenchFn::Ackley => "ackley",
            BenchFn::Griewank => "griewank",
            BenchFn::SchafferF6 => "schaffer_f6",
            BenchFn::Hgbat => "hgbat",
            BenchFn::Schwefel => "schwefel",
            BenchFn::Weierstrass => "weierstrass",
        }
    }

    /// Per-coordinate box bounds.
    pub fn domain(self) -> (f64, f64) {
        match self {
            BenchFn::Sphere | BenchFn::Quadratic | BenchFn::SchafferF6 | BenchFn::Hgbat => (-100.0, 100.0),
            BenchFn::Polyfit => (-10.0, 10.0),
            BenchFn::Rosenbrock => (-30.0, 30.0),
            BenchFn::Rastrigin => (-5.12, 5.12),
            BenchFn::Ackley => (-32.768, 32.768),
            BenchFn::Griewank => (-600.0, 600.0),
            BenchFn::Schwefel => (-500.0, 500.0),
            BenchFn::Weierstrass => (-0.5, 0.5),
        }
    }
}

impl fmt::Display for BenchFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchFn {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchFn::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| BenchError::UnknownFunction(s.to_string()))
    }
}

/// Noise-free polynomial regression data.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyfitData {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl PolyfitData {
    /// Samples `y = p(t)` on 64 evenly spaced points over [-1, 1].
    /// Coefficients are ordered from the highest power down.
    pub fn from_coeffs(coeffs: &[f64]) -> Self {
        let t: Vec<f64> =
            (0..POLYFIT_POINTS).map(|i| -1.0 + 2.0 * i as f64 / (POLYFIT_POINTS - 1) as f64).collect();
        let y = t.iter().map(|&ti| horner(coeffs, ti)).collect();
        Self { t, y }
    }

    pub fn sse(&self, coeffs: &[f64]) -> f64 {
        self.t.iter().zip(&self.y).map(|(&t, &y)| (horner(coeffs, t) - y).powi(2)).sum()
    }
}

pub fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * t + c)
}

/// A benchmark function instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    func: BenchFn,
    dim: usize,
    polyfit: Option<Arc<PolyfitData>>,
}

/// Seed used for polyfit data when none is given.
pub const DEFAULT_POLYFIT_SEED: u64 = 0;

impl BenchSpec {
    /// Builds a spec. Polyfit data is planted with [`DEFAULT_POLYFIT_SEED`].
    pub fn new(func: BenchFn, dim: usize) -> Result<Self, BenchError> {
        match func {
            BenchFn::Polyfit => {
                if !(2..=POLYFIT_MAX_DEGREE + 1).contains(&dim) {
                    return Err(BenchError::InvalidDimension {
                        name: func.name(),
                        dim,
                        reason: "polyfit dim is degree + 1 with degree in 1..=8",
                    });
                }
                Ok(make_polyfit(dim - 1, DEFAULT_POLYFIT_SEED)?.0)
            }
            BenchFn::SchafferF6 if dim != 2 => {
                Err(BenchError::InvalidDimension { name: func.name(), dim, reason: "schaffer_f6 requires dim 2" })
            }
            _ if dim == 0 => Err(BenchError::InvalidDimension { name: func.name(), dim, reason: "dim must be >= 1" }),
            _ => Ok(Self { func, dim, polyfit: None }),
        }
    }

    pub fn parse(name: &str, dim: usize) -> Result<Self, BenchError> {
        Self::new(name.parse()?, dim)
    }

    pub fn polyfit_with_coeffs(coeffs: &[f64]) -> Result<Self, BenchError> {
        let dim = coeffs.len();
        if !(2..=POLYFIT_MAX_DEGREE + 1).contains(&dim) {
            return Err(BenchError::InvalidDimension { name: "polyfit", dim, reason: "degree must be in 1..=8" });
        }
        Ok(Self { func: BenchFn::Polyfit, dim, polyfit: Some(Arc::new(PolyfitData::from_coeffs(coeffs))) })
    }

    pub fn func(&self) -> BenchFn {
        self.func
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> (f64, f64) {
        self.func.domain()
    }

    pub fn polyfit_data(&self) -> Option<&PolyfitData> {
        self.polyfit.as_deref()
    }

    /// The documented global minimizer (all-zero objective).
    pub fn optimum(&self) -> Option<Vec<f64>> {
        let d = self.dim;
        Some(match self.func {
            BenchFn::Rosenbrock => vec![1.0; d],
            BenchFn::Hgbat => vec![-1.0; d],
            BenchFn::Schwefel => vec![SCHWEFEL_OPTIMUM; d],
            // Planted coefficients are not recoverable from the data alone.
            BenchFn::Polyfit => return None,
            _ => vec![0.0; d],
        })
    }

    /// Search space: one continuous parameter per coordinate over the domain.
    pub fn space(&self) -> SearchSpace {
        let (lo, hi) = self.domain();
        SearchSpace::new((0..self.dim).map(|i| ParamSpec::continuous(format!("x{i}"), lo, hi)).collect())
            .expect("benchmark domains are valid")
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, BenchError> {
        if x.len() != self.dim {
            return Err(BenchError::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        let (lo, hi) = self.domain();
        if let Some(index) = x.iter().position(|v| !(lo..=hi).contains(v)) {
            return Err(BenchError::OutOfDomain { index, lo, hi });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self.func {
            BenchFn::Sphere => sphere(x),
            BenchFn::Quadratic => quadratic(x),
            BenchFn::Polyfit => self.polyfit.as_ref().expect("polyfit data present").sse(x),
            BenchFn::Rosenbrock => rosenbrock(x),
            BenchFn::Rastrigin => rastrigin(x),
            BenchFn::Ackley => ackley(x),
            BenchFn::Griewank => griewank(x),
            BenchFn::SchafferF6 => schaffer_f6(x),
            BenchFn::Hgbat => hgbat(x),
            BenchFn::Schwefel => schwefel(x),
            BenchFn::Weierstrass => weierstrass(x),
        }
    }
}

/// Plants a random polynomial of `degree` with coefficients in [-2, 2].
pub fn make_polyfit(degree: usize, seed: u64) -> Result<(BenchSpec, Vec<f64>), BenchError> {
    if !(1..=POLYFIT_MAX_DEGREE).contains(&degree) {
        return Err(BenchError::InvalidDimension { name: "polyfit", dim: degree + 1, reason: "degree must be in 1..=8" });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<f64> = (0..=degree).map(|_| rng.random_range(-2.0..=2.0)).collect();
    Ok((BenchSpec::polyfit_with_coeffs(&coeffs)?, coeffs))
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn quadratic(x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

pub fn ackley(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / d;
    -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
}

pub fn griewank(x: &[f64]) -> f64 {
    let s = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
    let p: f64 = x.iter().enumerate().map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos()).product();
    1.0 + s - p
}

pub fn schaffer_f6(x: &[f64]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    0.5 + (r2.sqrt().sin().powi(2) - 0.5) / (1.0 + 0.001 * r2).powi(2)
}

/// HGBat with its minimum at -1 in every coordinate.
pub fn hgbat(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let s2: f64 = x.iter().map(|v| v * v).sum();
    let s1: f64 = x.iter().sum();
    (s2 * s2 - s1 * s1).abs().sqrt() + (0.5 * s2 + s1) / d + 0.5
}

pub fn schwefel(x: &[f64]) -> f64 {
    418.9829 * x.len() as f64 - x.iter().map(|v| v * v.abs().sqrt().sin()).sum::<f64>()
}

const WEIERSTRASS_A: f64 = 0.5;
const WEIERSTRASS_B: f64 = 3.0;
const WEIERSTRASS_KMAX: i32 = 20;

/// Weierstrass with a = 0.5, b = 3, k_max = 20, offset so that f(0) = 0.
pub fn weierstrass(x: &[f64]) -> f64 {
    let term = |v: f64| -> f64 {
        (0..=WEIERSTRASS_KMAX)
            .map(|k| WEIERSTRASS_A.powi(k) * (2.0 * PI * WEIERSTRASS_B.powi(k) * (v + 0.5)).cos())
            .sum()
    };
    let offset = term(0.0);
    x.iter().map(|&v| term(v) - offset).sum()
}
