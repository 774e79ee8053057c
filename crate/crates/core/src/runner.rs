//! The contract between the scheduler and whatever trains a trial.

use crate::error::Result;
use crate::space::{HpConfig, SearchSpace};
use crate::stats::StatVector;
use crate::trace::{EpochRecord, FinalStatus, LayerRecord, MetricMode, TraceFinal, TraceMeta, TrialTrace, VarKind};

/// Summary of one traced variable of one layer at the end of an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSnapshot {
    pub layer_index: u32,
    pub layer_name: String,
    pub var_kind: VarKind,
    pub stats: StatVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutput {
    pub train_loss: f64,
    pub val_metric: f64,
    pub layers: Vec<LayerSnapshot>,
}

/// A running trial. Epochs are requested strictly in order from 0.
pub trait TrialSession: Send {
    fn run_epoch(&mut self, epoch: u32) -> Result<EpochOutput>;
}

/// Produces trial sessions for sampled configurations.
pub trait TrialRunner: Send + Sync {
    fn name(&self) -> &str;

    fn metric_mode(&self) -> MetricMode;

    fn max_epoch(&self, config: &HpConfig) -> Result<u32>;

    /// Cost of one epoch under the simulated clock.
    fn sim_epoch_cost_ms(&self, config: &HpConfig) -> u64;

    /// Start training `config`; `seed` fixes all trial-level randomness.
    fn start(&self, config: &HpConfig, seed: u64) -> Result<Box<dyn TrialSession>>;

    /// Built-in search space, if the runner ships one.
    fn default_space(&self) -> Option<SearchSpace> {
        None
    }
}

/// Build the trace record of one finished epoch.
pub fn epoch_records(
    trial_id: &str,
    epoch: u32,
    mode: MetricMode,
    wall_ms: u64,
    out: &EpochOutput,
) -> (EpochRecord, Vec<LayerRecord>) {
    let record = EpochRecord {
        trial_id: trial_id.to_string(),
        epoch,
        train_loss: out.train_loss,
        val_metric: out.val_metric,
        metric_mode: mode,
        wall_ms,
    };
    let mut layers: Vec<LayerRecord> = out
        .layers
        .iter()
        .map(|s| LayerRecord {
            trial_id: trial_id.to_string(),
            epoch,
            layer_index: s.layer_index,
            layer_name: s.layer_name.clone(),
            var_kind: s.var_kind,
            stats: s.stats,
        })
        .collect();
    layers.sort_by_key(|l| (l.var_kind, l.layer_index));
    (record, layers)
}

/// Train one configuration outside any scheduler, to completion or for at
/// most `epochs` epochs, and return its trace. Wall time follows the
/// runner's simulated cost.
pub fn record_trial(
    runner: &dyn TrialRunner,
    trial_id: &str,
    config: &HpConfig,
    seed: u64,
    epochs: Option<u32>,
) -> Result<TrialTrace> {
    let max_epoch = runner.max_epoch(config)?;
    let cost = runner.sim_epoch_cost_ms(config);
    let mut session = runner.start(config, seed)?;
    let mut trace = TrialTrace::new(TraceMeta {
        trial_id: trial_id.to_string(),
        config: config.clone(),
        max_epoch,
        created_unix_ms: 0,
    });
    let n = epochs.map_or(max_epoch, |e| e.min(max_epoch));
    for epoch in 0..n {
        let out = session.run_epoch(epoch)?;
        let (rec, layers) = epoch_records(trial_id, epoch, runner.metric_mode(), cost * (epoch as u64 + 1), &out);
        trace.push_epoch(rec, layers);
    }
    let (status, reason) = if n == max_epoch {
        (FinalStatus::Completed, String::new())
    } else {
        (FinalStatus::Terminated, format!("stopped after {n} epochs"))
    };
    trace.final_record = Some(TraceFinal {
        status,
        reason,
        best_val_metric: trace.best_val_metric(),
        epochs_run: n,
    });
    Ok(trace)
}
