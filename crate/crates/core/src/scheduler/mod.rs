//! Experiment orchestration: sampling, concurrent trials, streaming
//! diagnosis, early termination and the experiment event log.

mod engine;
mod log;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::stats::median;
use crate::space::{HpConfig, SearchSpace};
use crate::trace::MetricMode;

pub use engine::{run_experiment, Experiment, ExperimentConfig, StopAck, StopHandle, StopRequest};
pub use log::{
    read_experiment_log, Event, EventKind, ExperimentLog, StopCause, TrialState, TrialStatus, EXPERIMENT_LOG_FILE,
    TRACE_DIR,
};

/// How the scheduler reacts to running trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Every trial runs to its maximum epoch.
    None,
    /// The checker diagnoses every epoch and terminates flagged trials.
    Bttackler,
    /// Median stopping rule against finished peers.
    Msr,
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Policy::None),
            "bttackler" => Ok(Policy::Bttackler),
            "msr" => Ok(Policy::Msr),
            _ => Err(Error::invalid(format!("unknown policy '{s}' (expected none, bttackler or msr)"))),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::None => "none",
            Policy::Bttackler => "bttackler",
            Policy::Msr => "msr",
        })
    }
}

/// Source of timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    /// Epochs take the runner's modeled cost; fully deterministic.
    Simulated,
    /// Wall-clock milliseconds since the experiment started.
    Real,
}

impl FromStr for Clock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulated" | "sim" => Ok(Clock::Simulated),
            "real" | "wall" => Ok(Clock::Real),
            _ => Err(Error::invalid(format!("unknown clock '{s}' (expected simulated or real)"))),
        }
    }
}

/// When the experiment stops launching trials.
///
/// Textual form: `trials:N`, `sim:Nms` or `wall:Nms`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Budget {
    Trials(u32),
    SimMs(u64),
    WallMs(u64),
}

impl Budget {
    /// The clock a budget implies unless overridden.
    pub fn default_clock(self) -> Clock {
        match self {
            Budget::WallMs(_) => Clock::Real,
            Budget::Trials(_) | Budget::SimMs(_) => Clock::Simulated,
        }
    }

    pub fn time_limit_ms(self) -> Option<u64> {
        match self {
            Budget::Trials(_) => None,
            Budget::SimMs(ms) | Budget::WallMs(ms) => Some(ms),
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("budget '{s}' must be trials:N, sim:Nms or wall:Nms with N > 0"));
        let (kind, amount) = s.split_once(':').ok_or_else(bad)?;
        let ms = |a: &str| -> Result<u64> {
            let v: u64 = a.strip_suffix("ms").unwrap_or(a).parse().map_err(|_| bad())?;
            if v == 0 {
                return Err(bad());
            }
            Ok(v)
        };
        match kind {
            "trials" => match amount.parse::<u32>() {
                Ok(n) if n > 0 => Ok(Budget::Trials(n)),
                _ => Err(bad()),
            },
            "sim" => Ok(Budget::SimMs(ms(amount)?)),
            "wall" => Ok(Budget::WallMs(ms(amount)?)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Trials(n) => write!(f, "trials:{n}"),
            Budget::SimMs(ms) => write!(f, "sim:{ms}ms"),
            Budget::WallMs(ms) => write!(f, "wall:{ms}ms"),
        }
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Proposes configurations; the extension point for model-based search.
pub trait Sampler: Send {
    fn name(&self) -> &str;

    fn suggest(&mut self, space: &SearchSpace) -> HpConfig;

    /// Feedback for a finished trial; `final_metric_for_sampler` is the
    /// value a model-based sampler should learn from.
    fn observe(&mut self, _trial: &TrialState) {}
}

/// Independent uniform draws from a seeded generator.
pub struct RandomSampler {
    rng: ChaCha8Rng,
}

impl RandomSampler {
    pub fn new(seed: u64) -> Self {
        RandomSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Sampler for RandomSampler {
    fn name(&self) -> &str {
        "random"
    }

    fn suggest(&mut self, space: &SearchSpace) -> HpConfig {
        space.sample(&mut self.rng)
    }
}

/// Training seed of the `index`-th trial of an experiment seeded `seed`.
pub fn trial_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Median stopping rule: stop when at least `min_peers` peer values exist
/// and `metric` is strictly worse than their median.
pub fn median_stop_check(metric: f64, peers: &[f64], mode: MetricMode, min_peers: usize) -> bool {
    let finite: Vec<f64> = peers.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < min_peers.max(1) {
        return false;
    }
    let Some(med) = median(&finite) else {
        return false;
    };
    if metric.is_nan() {
        return true;
    }
    mode.better(med, metric)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_grammar() {
        assert_eq!("trials:5".parse::<Budget>().unwrap(), Budget::Trials(5));
        assert_eq!("sim:3000ms".parse::<Budget>().unwrap(), Budget::SimMs(3000));
        assert_eq!("wall:250ms".parse::<Budget>().unwrap(), Budget::WallMs(250));
        assert_eq!("sim:40".parse::<Budget>().unwrap(), Budget::SimMs(40));
        for bad in ["trials:0", "trials:x", "wall:", "hours:3", "5", "sim:0ms"] {
            assert!(bad.parse::<Budget>().is_err(), "{bad}");
        }
        for b in [Budget::Trials(7), Budget::SimMs(12), Budget::WallMs(9)] {
            assert_eq!(b.to_string().parse::<Budget>().unwrap(), b);
        }
    }

    #[test]
    fn median_rule_examples() {
        let peers = [0.6, 0.7, 0.8];
        assert!(median_stop_check(0.55, &peers, MetricMode::Maximize, 3));
        assert!(!median_stop_check(0.75, &peers, MetricMode::Maximize, 3));
        assert!(!median_stop_check(0.1, &peers, MetricMode::Maximize, 5));
        // equality continues
        assert!(!median_stop_check(0.7, &peers, MetricMode::Maximize, 3));
        assert!(median_stop_check(0.75, &peers, MetricMode::Minimize, 3));
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| trial_seed(1, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
    }

    #[test]
    fn policy_names_roundtrip() {
        for p in [Policy::None, Policy::Bttackler, Policy::Msr] {
            assert_eq!(p.to_string().parse::<Policy>().unwrap(), p);
        }
        assert!("median".parse::<Policy>().is_err());
    }
}
