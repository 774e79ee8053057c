//! Configurations that reliably reproduce specific training pathologies.

use crate::indicators::Indicator;

use super::mlp::{Activation, MlpSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub name: &'static str,
    pub spec: MlpSpec,
    /// Any of these indicators firing counts as detection.
    pub expected: Vec<Indicator>,
}

pub fn pathology_recipes() -> Vec<Recipe> {
    let base = MlpSpec::default();
    vec![
        Recipe {
            name: "vanishing",
            spec: MlpSpec {
                depth: 8,
                width: 32,
                activation: Activation::Sigmoid,
                init_scale: 0.3,
                learning_rate: 0.05,
                ..base.clone()
            },
            expected: vec![Indicator::ERG],
        },
        Recipe {
            name: "exploding",
            spec: MlpSpec {
                depth: 8,
                activation: Activation::Relu,
                init_scale: 8.0,
                learning_rate: 1e-7,
                ..base.clone()
            },
            expected: vec![Indicator::EAG, Indicator::AGV],
        },
        Recipe {
            name: "dead_relu",
            spec: MlpSpec {
                activation: Activation::Relu,
                bias_init: -3.0,
                ..base.clone()
            },
            expected: vec![Indicator::LAR],
        },
        Recipe {
            name: "no_learning",
            spec: MlpSpec {
                learning_rate: 1e-9,
                ..base.clone()
            },
            expected: vec![Indicator::PLC],
        },
        Recipe {
            name: "converged_early",
            spec: MlpSpec {
                depth: 1,
                width: 4,
                learning_rate: 0.3,
                momentum: 0.5,
                batch_size: 16,
                max_epoch: 30,
                ..base
            },
            expected: vec![Indicator::NMG],
        },
    ]
}

/// A configuration in the healthy band: it trains steadily and should
/// trip no malign indicator.
pub fn healthy_spec() -> MlpSpec {
    MlpSpec {
        learning_rate: 0.01,
        momentum: 0.9,
        ..MlpSpec::default()
    }
}
