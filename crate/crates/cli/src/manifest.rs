//! Everything `run` needs, loadable from a TOML file and overridable by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use diaghpo::indicators::IndicatorConfig;
use diaghpo::scheduler::{Budget, Clock, ExperimentConfig, Policy};
use diaghpo::space::SearchSpace;
use diaghpo::toytrainer::{toy_space, TOY_RUNNER};

use crate::UsageError;

/// Built-in search spaces, by name.
pub fn builtin_spaces() -> Vec<(&'static str, SearchSpace)> {
    vec![(TOY_RUNNER, toy_space())]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    /// Defaults to `exp-<seed>`.
    pub experiment_id: Option<String>,
    pub runner: String,
    /// Built-in space name or TOML file; the runner's own space when absent.
    pub space: Option<String>,
    pub policy: Policy,
    pub budget: Budget,
    pub concurrency: usize,
    pub seed: u64,
    /// Indicator thresholds file (TOML or JSON); defaults when absent.
    pub indicator_config: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Implied by the budget when absent.
    pub clock: Option<Clock>,
    pub checker_latency_ms: u64,
    pub msr_min_peers: usize,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            experiment_id: None,
            runner: TOY_RUNNER.to_string(),
            space: None,
            policy: Policy::Bttackler,
            budget: Budget::Trials(20),
            concurrency: 8,
            seed: 0,
            indicator_config: None,
            out_dir: PathBuf::from("btt-out"),
            clock: None,
            checker_latency_ms: 0,
            msr_min_peers: 5,
        }
    }
}

impl RunManifest {
    /// Load a manifest; relative paths inside it are taken relative to the
    /// manifest's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut m: RunManifest = toml::from_str(&text)
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        m.out_dir = rebase(&m.out_dir);
        m.indicator_config = m.indicator_config.as_deref().map(rebase);
        if let Some(s) = &m.space {
            if !builtin_spaces().iter().any(|(n, _)| n == s) {
                m.space = Some(rebase(Path::new(s)).to_string_lossy().into_owned());
            }
        }
        Ok(m)
    }

    pub fn resolve_space(&self) -> Result<SearchSpace> {
        let name = self.space.as_deref().unwrap_or(&self.runner);
        if let Some((_, s)) = builtin_spaces().into_iter().find(|(n, _)| *n == name) {
            return Ok(s);
        }
        let path = Path::new(name);
        if !path.is_file() {
            bail!(UsageError(format!("space '{name}' is neither a built-in space nor a file")));
        }
        Ok(SearchSpace::from_file(path)?)
    }

    pub fn resolve_indicators(&self) -> Result<IndicatorConfig> {
        match &self.indicator_config {
            Some(p) => Ok(IndicatorConfig::from_file(p)?),
            None => Ok(IndicatorConfig::default()),
        }
    }

    /// Check the manifest and build the scheduler configuration.
    pub fn to_experiment_config(&self) -> Result<ExperimentConfig> {
        if self.runner != TOY_RUNNER {
            bail!(UsageError(format!("unknown runner '{}' (available: {TOY_RUNNER})", self.runner)));
        }
        let mut cfg = ExperimentConfig::new(self.resolve_space()?, self.policy, self.budget, self.seed);
        if let Some(id) = &self.experiment_id {
            cfg.experiment_id = id.clone();
        }
        if let Some(c) = self.clock {
            cfg.clock = c;
        }
        cfg.concurrency = self.concurrency;
        cfg.indicators = self.resolve_indicators()?;
        cfg.checker_latency_ms = self.checker_latency_ms;
        cfg.msr_min_peers = self.msr_min_peers;
        cfg.out_dir = Some(self.out_dir.clone());
        cfg.validate()?;
        Ok(cfg)
    }
}
