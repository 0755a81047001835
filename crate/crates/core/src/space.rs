//! Hyper-parameter search spaces.
//!
//! Tuners never see typed parameter values. They work on [`Genome`]s, points
//! in the unit hypercube `[0,1]^d`, and a [`SearchSpace`] decodes a genome into
//! a [`Configuration`] only when a trial is dispatched.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::halton;

/// Smallest population that supports rand-to-p-best/1 with distinct indices.
pub const MIN_POPULATION: usize = 4;

/// Largest seeded Halton start offset.
pub const MAX_HALTON_OFFSET: u64 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("search space syntax error: {0}")]
    Syntax(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("invalid range for `{name}`: {reason}")]
    InvalidRange { name: String, reason: String },
    #[error("search space must contain at least one parameter")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("population of {0} is too small (minimum {MIN_POPULATION})")]
    PopulationTooSmall(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
}

/// The type and range of one tunable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamKind {
    Continuous { lo: f64, hi: f64 },
    LogContinuous { lo: f64, hi: f64 },
    Integer { lo: i64, hi: i64 },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn continuous(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), kind: ParamKind::Continuous { lo, hi } }
    }

    pub fn log_continuous(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), kind: ParamKind::LogContinuous { lo, hi } }
    }

    pub fn integer(name: impl Into<String>, lo: i64, hi: i64) -> Self {
        Self { name: name.into(), kind: ParamKind::Integer { lo, hi } }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, choices: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Categorical { choices: choices.into_iter().map(Into::into).collect() },
        }
    }

    fn validate(&self) -> Result<(), SpaceError> {
        let invalid = |reason: &str| SpaceError::InvalidRange { name: self.name.clone(), reason: reason.to_string() };
        if self.name.trim().is_empty() {
            return Err(invalid("parameter name must be non-empty"));
        }
        match &self.kind {
            ParamKind::Continuous { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(invalid("bounds must be finite"));
                }
                if lo >= hi {
                    return Err(invalid("lo must be < hi"));
                }
            }
            ParamKind::LogContinuous { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(invalid("bounds must be finite"));
                }
                if *lo <= 0.0 {
                    return Err(invalid("log_continuous requires lo > 0"));
                }
                if lo >= hi {
                    return Err(invalid("lo must be < hi"));
                }
            }
            ParamKind::Integer { lo, hi } => {
                if lo >= hi {
                    return Err(invalid("lo must be < hi"));
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.len() < 2 {
                    return Err(invalid("categorical needs at least 2 choices"));
                }
            }
        }
        Ok(())
    }

    /// Maps a unit coordinate to a typed value.
    pub fn decode(&self, u: f64) -> ParamValue {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            ParamKind::Continuous { lo, hi } => ParamValue::Real((lo + u * (hi - lo)).clamp(*lo, *hi)),
            ParamKind::LogContinuous { lo, hi } => {
                let v = (lo.ln() + u * (hi.ln() - lo.ln())).exp();
                ParamValue::Real(v.clamp(*lo, *hi))
            }
            ParamKind::Integer { lo, hi } => {
                // f64::round is half-away-from-zero.
                let v = (*lo as f64 + u * (*hi - *lo) as f64).round() as i64;
                ParamValue::Int(v.clamp(*lo, *hi))
            }
            ParamKind::Categorical { choices } => {
                let k = choices.len();
                let idx = ((u * k as f64).floor() as usize).min(k - 1);
                ParamValue::Choice(choices[idx].clone())
            }
        }
    }

    /// Maps a typed value back to a unit coordinate. For categoricals this is
    /// the center of the choice's bucket.
    pub fn encode(&self, value: &ParamValue) -> Result<f64, SpaceError> {
        let bad = || SpaceError::InvalidConfiguration(format!("value {value} does not fit parameter `{}`", self.name));
        let u = match (&self.kind, value) {
            (ParamKind::Continuous { lo, hi }, v) => {
                let x = v.as_f64().ok_or_else(bad)?;
                (x - lo) / (hi - lo)
            }
            (ParamKind::LogContinuous { lo, hi }, v) => {
                let x = v.as_f64().ok_or_else(bad)?;
                if x <= 0.0 {
                    return Err(bad());
                }
                (x.ln() - lo.ln()) / (hi.ln() - lo.ln())
            }
            (ParamKind::Integer { lo, hi }, ParamValue::Int(x)) => (*x - *lo) as f64 / (*hi - *lo) as f64,
            (ParamKind::Categorical { choices }, ParamValue::Choice(c)) => {
                let idx = choices.iter().position(|x| x == c).ok_or_else(bad)?;
                (idx as f64 + 0.5) / choices.len() as f64
            }
            _ => return Err(bad()),
        };
        if !(-1e-9..=1.0 + 1e-9).contains(&u) {
            return Err(bad());
        }
        Ok(u.clamp(0.0, 1.0))
    }

    /// Whether a value lies within this parameter's range.
    pub fn contains(&self, value: &ParamValue) -> bool {
        match (&self.kind, value) {
            (ParamKind::Continuous { lo, hi } | ParamKind::LogContinuous { lo, hi }, ParamValue::Real(x)) => {
                x >= lo && x <= hi
            }
            (ParamKind::Integer { lo, hi }, ParamValue::Int(x)) => x >= lo && x <= hi,
            (ParamKind::Categorical { choices }, ParamValue::Choice(c)) => choices.contains(c),
            _ => false,
        }
    }
}

/// An ordered, validated list of parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSpace {
    params: Vec<ParamSpec>,
}

#[derive(Deserialize)]
struct RawSpace {
    params: Vec<ParamSpec>,
}

impl<'de> Deserialize<'de> for SearchSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawSpace::deserialize(d)?;
        SearchSpace::new(raw.params).map_err(serde::de::Error::custom)
    }
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self, SpaceError> {
        if params.is_empty() {
            return Err(SpaceError::Empty);
        }
        let mut seen = std::collections::HashSet::new();
        for p in &params {
            p.validate()?;
            if !seen.insert(p.name.as_str()) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        Ok(Self { params })
    }

    /// Parses the JSON search-space document.
    pub fn parse(text: &str) -> Result<Self, SpaceError> {
        let raw: RawSpace = serde_json::from_str(text).map_err(|e| SpaceError::Syntax(e.to_string()))?;
        Self::new(raw.params)
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn decode(&self, genome: &Genome) -> Result<Configuration, SpaceError> {
        if genome.len() != self.dim() {
            return Err(SpaceError::DimensionMismatch { expected: self.dim(), actual: genome.len() });
        }
        let values = self
            .params
            .iter()
            .zip(genome.coords())
            .map(|(p, &u)| (p.name.clone(), p.decode(u)))
            .collect();
        Ok(Configuration { values })
    }

    pub fn encode(&self, config: &Configuration) -> Result<Genome, SpaceError> {
        self.check(config)?;
        let coords = self
            .params
            .iter()
            .map(|p| p.encode(&config.values[&p.name]))
            .collect::<Result<Vec<_>, _>>()?;
        Genome::new(coords)
    }

    /// Verifies that `config` has exactly this space's keys and in-range values.
    pub fn check(&self, config: &Configuration) -> Result<(), SpaceError> {
        if config.values.len() != self.dim() {
            return Err(SpaceError::InvalidConfiguration(format!(
                "expected {} parameters, got {}",
                self.dim(),
                config.values.len()
            )));
        }
        for p in &self.params {
            match config.values.get(&p.name) {
                None => return Err(SpaceError::InvalidConfiguration(format!("missing parameter `{}`", p.name))),
                Some(v) if !p.contains(v) => {
                    return Err(SpaceError::InvalidConfiguration(format!("value {v} out of range for `{}`", p.name)))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// A point in the unit hypercube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Genome(Vec<f64>);

impl Genome {
    pub fn new(coords: Vec<f64>) -> Result<Self, SpaceError> {
        if let Some(bad) = coords.iter().find(|u| !(0.0..=1.0).contains(*u)) {
            return Err(SpaceError::InvalidConfiguration(format!("genome coordinate {bad} outside [0,1]")));
        }
        Ok(Self(coords))
    }

    /// Wraps coordinates already known to be inside the cube.
    pub(crate) fn from_unit(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|u| (0.0..=1.0).contains(u)));
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Genome {
    type Error = SpaceError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Genome::new(v)
    }
}

impl From<Genome> for Vec<f64> {
    fn from(g: Genome) -> Self {
        g.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Choice(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Real(x) => Some(*x),
            ParamValue::Choice(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    /// Reals use the shortest decimal that round-trips to the same `f64`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Real(x) => write!(f, "{x:?}"),
            ParamValue::Choice(c) => f.write_str(c),
        }
    }
}

/// Named parameter values decoded from a genome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    pub values: BTreeMap<String, ParamValue>,
}

impl Configuration {
    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.values.get(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    #[default]
    Halton,
    Uniform,
}

/// Draws the Halton start offset for a seeded experiment (0 without a seed).
pub fn halton_offset(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => ChaCha8Rng::seed_from_u64(s ^ 0x4841_4c54_4f4e).random_range(1..=MAX_HALTON_OFFSET),
        None => 0,
    }
}

/// Builds an initial population of `n` genomes.
pub fn init_population(
    space: &SearchSpace,
    n: usize,
    scheme: InitScheme,
    seed: Option<u64>,
) -> Result<Vec<Genome>, SpaceError> {
    if n < MIN_POPULATION {
        return Err(SpaceError::PopulationTooSmall(n));
    }
    let dim = space.dim();
    Ok(match scheme {
        InitScheme::Halton => {
            let offset = halton_offset(seed);
            (1..=n as u64).map(|i| halton::point(offset + i, dim)).collect()
        }
        InitScheme::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            (0..n).map(|_| uniform_genome(dim, &mut rng)).collect()
        }
    })
}

pub fn uniform_genome<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Genome {
    Genome::from_unit((0..dim).map(|_| rng.random::<f64>()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_single_integer_param() {
        let s = SearchSpace::parse(r#"{"params":[{"name":"presolve_rounds","type":"integer","lo":0,"hi":10}]}"#)
            .unwrap();
        assert_eq!(s.dim(), 1);
        assert_eq!(s.params()[0], ParamSpec::integer("presolve_rounds", 0, 10));
    }

    #[test]
    fn parse_preserves_order_and_all_kinds() {
        let s = SearchSpace::parse(
            r#"{"params":[
                {"name":"z","type":"continuous","lo":-1,"hi":1},
                {"name":"tol","type":"log_continuous","lo":1e-6,"hi":1e-2},
                {"name":"a","type":"categorical","choices":["x","y"]}
            ]}"#,
        )
        .unwrap();
        assert_eq!(s.names().collect::<Vec<_>>(), ["z", "tol", "a"]);
    }

    #[test]
    fn parse_rejects_duplicates() {
        let err = SearchSpace::parse(
            r#"{"params":[{"name":"cuts","type":"integer","lo":0,"hi":3},
                          {"name":"cuts","type":"continuous","lo":0,"hi":1}]}"#,
        )
        .unwrap_err();
        assert_eq!(err, SpaceError::DuplicateName("cuts".into()));
    }

    #[test]
    fn parse_rejects_bad_ranges() {
        for body in [
            r#"{"name":"tol","type":"log_continuous","lo":0.0,"hi":1.0}"#,
            r#"{"name":"x","type":"continuous","lo":1.0,"hi":1.0}"#,
            r#"{"name":"n","type":"integer","lo":5,"hi":2}"#,
            r#"{"name":"c","type":"categorical","choices":["only"]}"#,
        ] {
            let err = SearchSpace::parse(&format!(r#"{{"params":[{body}]}}"#)).unwrap_err();
            assert!(matches!(err, SpaceError::InvalidRange { .. }), "{body}: {err:?}");
        }
    }

    #[test]
    fn parse_reports_syntax_errors() {
        assert!(matches!(SearchSpace::parse("{not json"), Err(SpaceError::Syntax(_))));
        assert!(matches!(
            SearchSpace::parse(r#"{"params":[{"name":"x","type":"continuous"}]}"#),
            Err(SpaceError::Syntax(_))
        ));
        assert_eq!(SearchSpace::parse(r#"{"params":[]}"#), Err(SpaceError::Empty));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(ParamSpec::continuous("x", 0.0, 10.0).decode(0.0), ParamValue::Real(0.0));
        let ParamValue::Real(mid) = ParamSpec::log_continuous("t", 1e-4, 1.0).decode(0.5) else { panic!() };
        assert!((mid - 1e-2).abs() < 1e-15);
        assert_eq!(ParamSpec::categorical("c", ["a", "b", "c"]).decode(1.0), ParamValue::Choice("c".into()));
        assert_eq!(ParamSpec::categorical("c", ["a", "b", "c"]).decode(0.0), ParamValue::Choice("a".into()));
        assert_eq!(ParamSpec::integer("n", 0, 10).decode(0.25), ParamValue::Int(3));
        assert_eq!(ParamSpec::integer("n", 0, 2).decode(0.25), ParamValue::Int(1));
    }

    #[test]
    fn decode_checks_dimension() {
        let s = SearchSpace::new(vec![ParamSpec::continuous("x", 0.0, 1.0)]).unwrap();
        let g = Genome::new(vec![0.1, 0.2]).unwrap();
        assert_eq!(s.decode(&g), Err(SpaceError::DimensionMismatch { expected: 1, actual: 2 }));
    }

    #[test]
    fn real_values_render_shortest_roundtrip() {
        assert_eq!(ParamValue::Real(0.1 + 0.2).to_string(), "0.30000000000000004");
        assert_eq!(ParamValue::Real(0.25).to_string(), "0.25");
        assert_eq!(ParamValue::Real(3.0).to_string(), "3.0");
        assert_eq!(ParamValue::Int(3).to_string(), "3");
    }

    #[test]
    fn init_population_halton_prefix() {
        let s = SearchSpace::new(vec![ParamSpec::continuous("x", 0.0, 1.0)]).unwrap();
        let pop = init_population(&s, 4, InitScheme::Halton, None).unwrap();
        let coords: Vec<f64> = pop.iter().map(|g| g.coords()[0]).collect();
        assert_eq!(coords, [0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn init_population_seeded_halton_uses_offset() {
        let s = SearchSpace::new(vec![ParamSpec::continuous("x", 0.0, 1.0)]).unwrap();
        let off = halton_offset(Some(9));
        assert!((1..=MAX_HALTON_OFFSET).contains(&off));
        let pop = init_population(&s, 4, InitScheme::Halton, Some(9)).unwrap();
        assert_eq!(pop[0], halton::point(off + 1, 1));
    }

    #[test]
    fn init_population_rejects_tiny() {
        let s = SearchSpace::new(vec![ParamSpec::continuous("x", 0.0, 1.0)]).unwrap();
        assert_eq!(init_population(&s, 3, InitScheme::Halton, None), Err(SpaceError::PopulationTooSmall(3)));
    }

    #[test]
    fn init_population_uniform_is_deterministic() {
        let s = SearchSpace::new((0..3).map(|i| ParamSpec::continuous(format!("x{i}"), 0.0, 1.0)).collect())
            .unwrap();
        let a = init_population(&s, 75, InitScheme::Uniform, Some(5)).unwrap();
        let b = init_population(&s, 75, InitScheme::Uniform, Some(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 75);
    }

    #[test]
    fn encode_inverts_decode_for_ranged_kinds() {
        let s = SearchSpace::new(vec![
            ParamSpec::continuous("a", -2.0, 3.0),
            ParamSpec::log_continuous("b", 1e-3, 10.0),
        ])
        .unwrap();
        let g = Genome::new(vec![0.3, 0.7]).unwrap();
        let back = s.encode(&s.decode(&g).unwrap()).unwrap();
        for (x, y) in back.coords().iter().zip(g.coords()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn arb_param(i: usize) -> impl Strategy<Value = ParamSpec> {
        let name = format!("p{i}");
        prop_oneof![
            (-1e3..1e3f64, 1e-3..1e3f64).prop_map({
                let n = name.clone();
                move |(lo, w)| ParamSpec::continuous(n.clone(), lo, lo + w)
            }),
            (1e-8..1.0f64, 1.5..1e6f64).prop_map({
                let n = name.clone();
                move |(lo, r)| ParamSpec::log_continuous(n.clone(), lo, lo * r)
            }),
            (-100i64..100, 1i64..1000).prop_map({
                let n = name.clone();
                move |(lo, w)| ParamSpec::integer(n.clone(), lo, lo + w)
            }),
            (2usize..7).prop_map(move |k| ParamSpec::categorical(name.clone(), (0..k).map(|j| format!("c{j}")))),
        ]
    }

    fn arb_space() -> impl Strategy<Value = SearchSpace> {
        (1usize..8)
            .prop_flat_map(|d| (0..d).map(arb_param).collect::<Vec<_>>())
            .prop_map(|ps| SearchSpace::new(ps).unwrap())
    }

    proptest! {
        #[test]
        fn decode_always_in_range((space, coords) in arb_space().prop_flat_map(|s| {
            let d = s.dim();
            (Just(s), proptest::collection::vec(0.0..=1.0f64, d))
        })) {
            let cfg = space.decode(&Genome::new(coords).unwrap()).unwrap();
            prop_assert!(space.check(&cfg).is_ok());
        }

        #[test]
        fn integer_decode_monotone(lo in -50i64..50, w in 1i64..200, a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            let p = ParamSpec::integer("n", lo, lo + w);
            let (u, v) = if a <= b { (a, b) } else { (b, a) };
            let (ParamValue::Int(x), ParamValue::Int(y)) = (p.decode(u), p.decode(v)) else { unreachable!() };
            prop_assert!(x <= y);
        }
    }
}
