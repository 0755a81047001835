use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ValidationError;
use crate::space::SearchSpace;
use crate::target::{Target, TargetConfig, TargetError};
use crate::tuner::TunerConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopCriteria {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_objective: Option<f64>,
    /// Stop after this many consecutive generations without improvement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stagnation_generations: Option<u64>,
}

/// The experiment document:
///
/// ```json
/// {"space": {...}, "tuner": {"kind": "ljade"}, "target": {...},
///  "max_trials": 1000, "concurrency": 25, "stop": {...}, "seed": 42}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Requested experiment id; generated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Optional for function targets, which default to the function's box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SearchSpace>,
    pub tuner: TunerConfig,
    pub target: TargetConfig,
    pub max_trials: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub stop: StopCriteria,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_concurrency() -> usize {
    1
}

const FIELDS: [&str; 8] = ["id", "space", "tuner", "target", "max_trials", "concurrency", "stop", "seed"];

fn field<T: for<'de> Deserialize<'de>>(obj: &serde_json::Map<String, Value>, name: &str) -> Result<Option<T>, ValidationError> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone()).map(Some).map_err(|e| ValidationError::new(name, e.to_string())),
    }
}

fn required<T: for<'de> Deserialize<'de>>(obj: &serde_json::Map<String, Value>, name: &str) -> Result<T, ValidationError> {
    field(obj, name)?.ok_or_else(|| ValidationError::new(name, "missing required field"))
}

/// A config that passed validation, with every default made explicit.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub space: SearchSpace,
    pub target: Target,
}

impl ExperimentConfig {
    pub fn new(tuner: TunerConfig, target: TargetConfig, max_trials: u64, concurrency: usize) -> Self {
        Self { id: None, space: None, tuner, target, max_trials, concurrency, stop: StopCriteria::default(), seed: None }
    }

    /// Parses a config document, attributing errors to the offending field.
    /// `tuner` may also be given as a bare kind name.
    pub fn from_json(text: &str) -> Result<Self, ValidationError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| ValidationError::new("config", e.to_string()))?;
        Self::from_value(doc)
    }

    pub fn from_value(doc: Value) -> Result<Self, ValidationError> {
        let Value::Object(mut obj) = doc else {
            return Err(ValidationError::new("config", "expected a JSON object"));
        };
        if let Some(k) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
            return Err(ValidationError::new(k, "unknown field"));
        }
        if let Some(Value::String(kind)) = obj.get("tuner") {
            let kind = kind.clone();
            obj.insert("tuner".into(), serde_json::json!({ "kind": kind }));
        }
        Ok(Self {
            id: field(&obj, "id")?,
            space: field(&obj, "space")?,
            tuner: required(&obj, "tuner")?,
            target: required(&obj, "target")?,
            max_trials: required(&obj, "max_trials")?,
            concurrency: field(&obj, "concurrency")?.unwrap_or_else(default_concurrency),
            stop: field(&obj, "stop")?.unwrap_or_default(),
            seed: field(&obj, "seed")?,
        })
    }

    /// Validates every sub-config and resolves defaults: the seed (drawn
    /// from the OS when absent), the search space and `stop.max_trials`.
    pub fn prepare(&self) -> Result<Prepared, ValidationError> {
        if let Some(id) = &self.id {
            check_id(id)?;
        }
        self.tuner.validate().map_err(|e| ValidationError::new("tuner", e.to_string()))?;
        let seed = match (self.seed, self.tuner.seed) {
            (Some(a), Some(b)) if a != b => {
                return Err(ValidationError::new("seed", format!("top-level seed {a} conflicts with tuner.seed {b}")));
            }
            (Some(s), _) | (None, Some(s)) => s,
            (None, None) => rand::random::<u32>() as u64,
        };
        let target = Target::from_config(&self.target, self.space.as_ref()).map_err(|e| match e {
            TargetError::Invalid(m) if m.contains("requires a search space") => ValidationError::new("space", m),
            e => ValidationError::new("target", e.to_string()),
        })?;
        if self.max_trials == 0 {
            return Err(ValidationError::new("max_trials", "must be at least 1"));
        }
        if self.max_trials < self.tuner.pop_size as u64 {
            return Err(ValidationError::new(
                "max_trials",
                format!("{} is smaller than the tuner population ({})", self.max_trials, self.tuner.pop_size),
            ));
        }
        if self.concurrency == 0 {
            return Err(ValidationError::new("concurrency", "must be at least 1"));
        }
        if let Some(m) = self.stop.max_trials {
            if m != self.max_trials {
                return Err(ValidationError::new("stop.max_trials", format!("{m} differs from max_trials {}", self.max_trials)));
            }
        }
        if let Some(t) = self.stop.target_objective {
            if !t.is_finite() {
                return Err(ValidationError::new("stop.target_objective", "must be finite"));
            }
        }
        if self.stop.stagnation_generations == Some(0) {
            return Err(ValidationError::new("stop.stagnation_generations", "must be at least 1"));
        }

        let space = target.space.clone();
        let mut config = self.clone();
        config.seed = Some(seed);
        config.tuner.seed = Some(seed);
        config.space = Some(space.clone());
        config.stop.max_trials = Some(self.max_trials);
        Ok(Prepared { config, space, target })
    }
}

pub fn check_id(id: &str) -> Result<(), ValidationError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ValidationError::new("id", format!("`{id}` must be 1-128 characters of [A-Za-z0-9._-] not starting with '.'")))
    }
}
