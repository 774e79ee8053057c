//! Typed hyperparameter search spaces and sampled configurations.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HpValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl HpValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            HpValue::Int(i) => Some(*i as f64),
            HpValue::Float(f) => Some(*f),
            HpValue::Str(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            HpValue::Int(i) => Some(*i),
            HpValue::Float(f) if f.fract() == 0.0 => Some(*f as i64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            HpValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for HpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HpValue::Int(i) => write!(f, "{i}"),
            HpValue::Float(x) => write!(f, "{x}"),
            HpValue::Str(s) => f.write_str(s),
        }
    }
}

/// One point of a search space: hyperparameter name to value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HpConfig {
    pub values: BTreeMap<String, HpValue>,
}

impl HpConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: HpValue) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&HpValue> {
        self.values.get(name)
    }

    pub fn f64(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(HpValue::as_f64)
    }

    pub fn i64(&self, name: &str) -> Option<i64> {
        self.get(name).and_then(HpValue::as_i64)
    }

    pub fn str(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(HpValue::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Continuous { low: f64, high: f64 },
    /// Uniform in log space; both bounds strictly positive.
    ContinuousLog { low: f64, high: f64 },
    /// Uniform over the inclusive integer range.
    Discrete { low: i64, high: i64 },
    Categorical { choices: Vec<HpValue> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    #[serde(flatten)]
    pub domain: Domain,
}

impl Dimension {
    pub fn new(name: &str, domain: Domain) -> Self {
        Dimension {
            name: name.to_string(),
            domain,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::Config(format!("dimension '{}': {why}", self.name)));
        match &self.domain {
            Domain::Continuous { low, high } => {
                if !(low.is_finite() && high.is_finite()) || low > high {
                    return bad("interval must be finite and nonempty");
                }
            }
            Domain::ContinuousLog { low, high } => {
                if !(low.is_finite() && high.is_finite()) || low > high {
                    return bad("interval must be finite and nonempty");
                }
                if *low <= 0.0 {
                    return bad("log domain must be strictly positive");
                }
            }
            Domain::Discrete { low, high } => {
                if low > high {
                    return bad("integer range is empty");
                }
            }
            Domain::Categorical { choices } => {
                if choices.is_empty() {
                    return bad("no choices");
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, value: &HpValue) -> bool {
        match (&self.domain, value) {
            (Domain::Continuous { low, high }, v) | (Domain::ContinuousLog { low, high }, v) => {
                v.as_f64().is_some_and(|x| x >= *low && x <= *high)
            }
            (Domain::Discrete { low, high }, v) => v.as_i64().is_some_and(|x| x >= *low && x <= *high),
            (Domain::Categorical { choices }, v) => choices.contains(v),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HpValue {
        match &self.domain {
            Domain::Continuous { low, high } => {
                let u: f64 = rng.random();
                HpValue::Float((low + u * (high - low)).min(*high))
            }
            Domain::ContinuousLog { low, high } => {
                let (a, b) = (low.ln(), high.ln());
                let u: f64 = rng.random();
                HpValue::Float((a + u * (b - a)).exp().clamp(*low, *high))
            }
            Domain::Discrete { low, high } => HpValue::Int(rng.random_range(*low..=*high)),
            Domain::Categorical { choices } => choices[rng.random_range(0..choices.len())].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        let space = SearchSpace { dims };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for d in &self.dims {
            if !seen.insert(d.name.as_str()) {
                return Err(Error::Config(format!("duplicate dimension '{}'", d.name)));
            }
            d.validate()?;
        }
        Ok(())
    }

    /// Parse a space definition (TOML, `[[dims]]` tables).
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let space: SearchSpace = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        space.validate()?;
        Ok(space)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn contains(&self, config: &HpConfig) -> bool {
        config.values.len() == self.dims.len()
            && self
                .dims
                .iter()
                .all(|d| config.get(&d.name).is_some_and(|v| d.contains(v)))
    }

    /// Draw one configuration uniformly (log-uniformly for log domains).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HpConfig {
        let mut config = HpConfig::new();
        for d in &self.dims {
            config.values.insert(d.name.clone(), d.sample(rng));
        }
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toml_space_parses() {
        let s = SearchSpace::from_toml_str(
            r#"
            [[dims]]
            name = "lr"
            kind = "continuous_log"
            low = 1e-4
            high = 0.1

            [[dims]]
            name = "act"
            kind = "categorical"
            choices = ["relu", "tanh"]

            [[dims]]
            name = "depth"
            kind = "discrete"
            low = 1
            high = 4
            "#,
        )
        .unwrap();
        assert_eq!(s.dims.len(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert!(s.contains(&s.sample(&mut rng)));
        }
    }

    #[test]
    fn rejects_bad_spaces() {
        let dup = SearchSpace::new(vec![
            Dimension::new("a", Domain::Continuous { low: 0.0, high: 1.0 }),
            Dimension::new("a", Domain::Continuous { low: 0.0, high: 1.0 }),
        ]);
        assert!(dup.is_err());
        let log0 = SearchSpace::new(vec![Dimension::new(
            "a",
            Domain::ContinuousLog { low: 0.0, high: 1.0 },
        )]);
        assert!(log0.is_err());
        let empty = SearchSpace::new(vec![Dimension::new("a", Domain::Discrete { low: 3, high: 2 })]);
        assert!(empty.is_err());
    }

    #[test]
    fn int_and_float_values_keep_their_type_in_json() {
        let c = HpConfig::new()
            .with("a", HpValue::Int(3))
            .with("b", HpValue::Float(3.0))
            .with("c", HpValue::Str("x".into()));
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"a":3,"b":3.0,"c":"x"}"#);
        let back: HpConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
