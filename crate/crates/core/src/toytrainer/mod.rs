//! Built-in toy trainer: an MLP on synthetic data that emits real traces,
//! including reproducible gradient and activation pathologies.

pub mod data;
pub mod mlp;
pub mod recipes;

use std::marker::PhantomData;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::runner::{EpochOutput, TrialRunner, TrialSession};
use crate::scalar::Scalar;
use crate::space::{Dimension, Domain, HpConfig, HpValue, SearchSpace};
use crate::trace::MetricMode;

pub use data::{generate_dataset, Dataset, Generator, SyntheticDataset};
pub use mlp::{train_epoch, Activation, EpochResult, MlpSpec, ModelState, TrainData};
pub use recipes::{healthy_spec, pathology_recipes, Recipe};

/// Registered runner name.
pub const TOY_RUNNER: &str = "toy_mlp";

/// Definition file of the toy runner's search space.
pub const TOY_SPACE_TOML: &str = include_str!("../../spaces/toy_mlp.toml");

pub fn toy_space() -> SearchSpace {
    SearchSpace::from_toml_str(TOY_SPACE_TOML).expect("built-in space is valid")
}

/// Build an [`MlpSpec`] from a configuration, falling back to `base` for
/// absent keys.
pub fn spec_from_config(config: &HpConfig, base: &MlpSpec) -> Result<MlpSpec> {
    let usize_of = |name: &str, default: usize| -> Result<usize> {
        match config.i64(name) {
            Some(v) if v >= 0 => Ok(v as usize),
            Some(v) => Err(Error::invalid(format!("{name} = {v} must be nonnegative"))),
            None if config.get(name).is_some() => Err(Error::invalid(format!("{name} must be an integer"))),
            None => Ok(default),
        }
    };
    let f64_of = |name: &str, default: f64| -> Result<f64> {
        match config.get(name) {
            Some(v) => v.as_f64().ok_or_else(|| Error::invalid(format!("{name} must be numeric"))),
            None => Ok(default),
        }
    };
    let activation = match config.get("activation") {
        Some(v) => v
            .as_str()
            .and_then(Activation::parse)
            .ok_or_else(|| Error::invalid(format!("unknown activation {v}")))?,
        None => base.activation,
    };
    let spec = MlpSpec {
        depth: usize_of("depth", base.depth)?,
        width: usize_of("width", base.width)?,
        activation,
        init_scale: f64_of("init_scale", base.init_scale)?,
        learning_rate: f64_of("learning_rate", base.learning_rate)?,
        momentum: f64_of("momentum", base.momentum)?,
        batch_size: usize_of("batch_size", base.batch_size)?,
        max_epoch: usize_of("max_epoch", base.max_epoch as usize)? as u32,
        bias_init: f64_of("bias_init", base.bias_init)?,
    };
    spec.validate()?;
    Ok(spec)
}

/// The configuration that [`spec_from_config`] maps back to `spec`.
pub fn config_from_spec(spec: &MlpSpec) -> HpConfig {
    HpConfig::new()
        .with("depth", HpValue::Int(spec.depth as i64))
        .with("width", HpValue::Int(spec.width as i64))
        .with("activation", HpValue::Str(spec.activation.name().to_string()))
        .with("init_scale", HpValue::Float(spec.init_scale))
        .with("learning_rate", HpValue::Float(spec.learning_rate))
        .with("momentum", HpValue::Float(spec.momentum))
        .with("batch_size", HpValue::Int(spec.batch_size as i64))
        .with("max_epoch", HpValue::Int(spec.max_epoch as i64))
        .with("bias_init", HpValue::Float(spec.bias_init))
}

/// A search space whose only point is `spec`.
pub fn fixed_space(spec: &MlpSpec) -> SearchSpace {
    let dims = config_from_spec(spec)
        .values
        .into_iter()
        .map(|(name, v)| Dimension::new(&name, Domain::Categorical { choices: vec![v] }))
        .collect();
    SearchSpace::new(dims).expect("single-point space is valid")
}

/// Trial runner training [`ModelState`]s over scalar type `T`.
pub struct ToyRunner<T: Scalar = f64> {
    data: Arc<TrainData<T>>,
    base: MlpSpec,
    n_train: usize,
    _scalar: PhantomData<T>,
}

impl<T: Scalar> ToyRunner<T> {
    pub fn new(dataset: &SyntheticDataset, base: MlpSpec) -> Result<Self> {
        let all = generate_dataset(dataset)?;
        let (train, val) = all.split(0.8, dataset.seed ^ 0x5eed);
        Ok(ToyRunner {
            n_train: train.len(),
            data: Arc::new(TrainData::new(&train, &val)),
            base,
            _scalar: PhantomData,
        })
    }

    pub fn spec(&self, config: &HpConfig) -> Result<MlpSpec> {
        spec_from_config(config, &self.base)
    }
}

impl ToyRunner<f64> {
    /// The runner behind the `toy_mlp` name: default blobs dataset.
    pub fn standard() -> Self {
        Self::new(&SyntheticDataset::default(), MlpSpec::default()).expect("default dataset is valid")
    }
}

struct ToySession<T: Scalar> {
    model: ModelState<T>,
    spec: MlpSpec,
    data: Arc<TrainData<T>>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> TrialSession for ToySession<T> {
    fn run_epoch(&mut self, _epoch: u32) -> Result<EpochOutput> {
        let r = train_epoch(&mut self.model, &self.data, &self.spec, &mut self.rng)?;
        Ok(EpochOutput {
            train_loss: r.train_loss,
            val_metric: r.val_accuracy,
            layers: r.layers,
        })
    }
}

impl<T: Scalar> TrialRunner for ToyRunner<T> {
    fn name(&self) -> &str {
        TOY_RUNNER
    }

    fn metric_mode(&self) -> MetricMode {
        MetricMode::Maximize
    }

    fn max_epoch(&self, config: &HpConfig) -> Result<u32> {
        Ok(self.spec(config)?.max_epoch)
    }

    fn sim_epoch_cost_ms(&self, config: &HpConfig) -> u64 {
        let params = self
            .spec(config)
            .map(|s| s.param_count(self.data.n_features, self.data.n_classes))
            .unwrap_or(0);
        5 + (params * self.n_train / 20_000) as u64
    }

    fn start(&self, config: &HpConfig, seed: u64) -> Result<Box<dyn TrialSession>> {
        let spec = self.spec(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = ModelState::init(&spec, self.data.n_features, self.data.n_classes, &mut rng)?;
        Ok(Box::new(ToySession {
            model,
            spec,
            data: Arc::clone(&self.data),
            rng,
        }))
    }

    fn default_space(&self) -> Option<SearchSpace> {
        Some(toy_space())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::HpValue;

    #[test]
    fn space_matches_spec_fields() {
        let space = toy_space();
        let names: Vec<&str> = space.dims.iter().map(|d| d.name.as_str()).collect();
        for f in ["depth", "width", "activation", "init_scale", "learning_rate", "momentum", "batch_size", "max_epoch"] {
            assert!(names.contains(&f), "missing {f}");
        }
    }

    #[test]
    fn config_overrides_base() {
        let c = HpConfig::new()
            .with("depth", HpValue::Int(4))
            .with("activation", HpValue::Str("tanh".into()))
            .with("learning_rate", HpValue::Float(0.2));
        let s = spec_from_config(&c, &MlpSpec::default()).unwrap();
        assert_eq!(s.depth, 4);
        assert_eq!(s.activation, Activation::Tanh);
        assert_eq!(s.learning_rate, 0.2);
        assert_eq!(s.width, MlpSpec::default().width);
        let bad = HpConfig::new().with("activation", HpValue::Str("gelu".into()));
        assert!(spec_from_config(&bad, &MlpSpec::default()).is_err());
    }

    #[test]
    fn sessions_are_deterministic() {
        let runner = ToyRunner::standard();
        let c = HpConfig::new();
        let mut a = runner.start(&c, 5).unwrap();
        let mut b = runner.start(&c, 5).unwrap();
        for e in 0..3 {
            assert_eq!(a.run_epoch(e).unwrap(), b.run_epoch(e).unwrap());
        }
    }
}
