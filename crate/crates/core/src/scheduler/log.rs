//! Trial state and the line-delimited experiment event log.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{Decision, Indicator, IndicatorConfig};
use crate::space::{HpConfig, SearchSpace};
use crate::trace::{json_f64, MetricMode};

use super::{Budget, Clock, Policy};

/// Event log file name inside an output directory.
pub const EXPERIMENT_LOG_FILE: &str = "experiment.jsonl";
/// Subdirectory holding one trace file per trial.
pub const TRACE_DIR: &str = "traces";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Pending,
    Running,
    Completed,
    Terminated,
    Failed,
}

impl TrialStatus {
    pub fn is_finished(self) -> bool {
        matches!(self, TrialStatus::Completed | TrialStatus::Terminated | TrialStatus::Failed)
    }
}

/// Why a trial was terminated before its maximum epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCause {
    /// A malign indicator fired.
    Malign,
    /// Only the benign indicator fired: trained enough, not a defect.
    Benign,
    MedianStop,
    Budget,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub trial_id: String,
    pub index: u32,
    pub config: HpConfig,
    pub seed: u64,
    pub status: TrialStatus,
    pub max_epoch: u32,
    pub epochs_run: u32,
    #[serde(with = "json_f64")]
    pub best_val_metric: f64,
    #[serde(with = "json_f64")]
    pub last_val_metric: f64,
    /// Last metric after a malign, median, budget or manual stop; best
    /// metric when completed or benign-terminated.
    #[serde(with = "json_f64")]
    pub final_metric_for_sampler: f64,
    pub metric_mode: MetricMode,
    pub termination_reason: Option<String>,
    pub stop_cause: Option<StopCause>,
    pub started_at_ms: u64,
    pub finished_at_ms: Option<u64>,
    pub wall_ms: u64,
}

impl TrialState {
    /// Terminated by the checker, for either reason.
    pub fn diagnosed(&self) -> bool {
        matches!(self.stop_cause, Some(StopCause::Malign | StopCause::Benign))
    }

    /// Finished on its own terms rather than being cut off by the budget.
    pub fn finished_within_budget(&self) -> bool {
        self.status.is_finished() && self.stop_cause != Some(StopCause::Budget)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Milliseconds on the experiment clock.
    pub t: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    ExperimentStarted {
        experiment_id: String,
        runner: String,
        sampler: String,
        policy: Policy,
        seed: u64,
        concurrency: usize,
        budget: Budget,
        clock: Clock,
        checker_latency_ms: u64,
        msr_min_peers: usize,
        space: SearchSpace,
        indicator_config: IndicatorConfig,
    },
    TrialStarted {
        trial_id: String,
        index: u32,
        seed: u64,
        max_epoch: u32,
        metric_mode: MetricMode,
        config: HpConfig,
    },
    EpochReported {
        trial_id: String,
        epoch: u32,
        #[serde(with = "json_f64")]
        train_loss: f64,
        #[serde(with = "json_f64")]
        val_metric: f64,
        wall_ms: u64,
    },
    Verdict {
        trial_id: String,
        epoch: u32,
        decision: Decision,
        positives: Vec<Indicator>,
    },
    StopRequested {
        trial_id: String,
        cause: StopCause,
        reason: String,
    },
    TrialFinished {
        trial: TrialState,
    },
    BudgetExhausted {
        budget: Budget,
    },
    ExperimentFinished {
        trials: u32,
        elapsed_ms: u64,
    },
}

/// Everything an experiment recorded, in event order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentLog {
    pub experiment_id: String,
    pub runner: String,
    pub policy: Policy,
    pub seed: u64,
    pub concurrency: usize,
    pub budget: Budget,
    pub clock: Clock,
    pub space: SearchSpace,
    pub indicator_config: IndicatorConfig,
    pub events: Vec<Event>,
    /// Ordered by trial index.
    pub trials: Vec<TrialState>,
    pub elapsed_ms: u64,
}

impl ExperimentLog {
    /// Rebuild the log from its events. Trials that started but never
    /// finished (a truncated log) are reported as running.
    pub fn from_events(events: Vec<Event>) -> Result<Self> {
        let Some(Event {
            kind:
                EventKind::ExperimentStarted {
                    experiment_id,
                    runner,
                    policy,
                    seed,
                    concurrency,
                    budget,
                    clock,
                    space,
                    indicator_config,
                    ..
                },
            ..
        }) = events.first().cloned()
        else {
            return Err(Error::Parse {
                line: 1,
                message: "experiment log must start with experiment_started".into(),
            });
        };
        let mut trials: BTreeMap<String, TrialState> = BTreeMap::new();
        let mut elapsed_ms = events.last().map_or(0, |e| e.t);
        for ev in &events {
            match &ev.kind {
                EventKind::TrialStarted {
                    trial_id,
                    index,
                    seed,
                    max_epoch,
                    metric_mode,
                    config,
                } => {
                    trials.insert(
                        trial_id.clone(),
                        TrialState {
                            trial_id: trial_id.clone(),
                            index: *index,
                            config: config.clone(),
                            seed: *seed,
                            status: TrialStatus::Running,
                            max_epoch: *max_epoch,
                            epochs_run: 0,
                            best_val_metric: f64::NAN,
                            last_val_metric: f64::NAN,
                            final_metric_for_sampler: f64::NAN,
                            metric_mode: *metric_mode,
                            termination_reason: None,
                            stop_cause: None,
                            started_at_ms: ev.t,
                            finished_at_ms: None,
                            wall_ms: 0,
                        },
                    );
                }
                EventKind::EpochReported {
                    trial_id,
                    epoch,
                    val_metric,
                    ..
                } => {
                    if let Some(t) = trials.get_mut(trial_id) {
                        if t.status == TrialStatus::Running {
                            t.epochs_run = epoch + 1;
                            t.last_val_metric = *val_metric;
                            t.best_val_metric = t.metric_mode.best([t.best_val_metric, *val_metric]);
                            t.final_metric_for_sampler = t.last_val_metric;
                            t.wall_ms = ev.t - t.started_at_ms;
                        }
                    }
                }
                EventKind::TrialFinished { trial } => {
                    trials.insert(trial.trial_id.clone(), trial.clone());
                }
                EventKind::ExperimentFinished { elapsed_ms: e, .. } => elapsed_ms = *e,
                _ => {}
            }
        }
        let mut trials: Vec<TrialState> = trials.into_values().collect();
        trials.sort_by_key(|t| t.index);
        Ok(ExperimentLog {
            experiment_id,
            runner,
            policy,
            seed,
            concurrency,
            budget,
            clock,
            space,
            indicator_config,
            events,
            trials,
            elapsed_ms,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut sink: W) -> Result<()> {
        for ev in &self.events {
            write_event(&mut sink, ev)?;
        }
        sink.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: Read>(source: R) -> Result<Self> {
        let mut events = Vec::new();
        for (i, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ev: Event = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            events.push(ev);
        }
        Self::from_events(events)
    }

    pub fn metric_mode(&self) -> MetricMode {
        self.trials.first().map_or(MetricMode::Maximize, |t| t.metric_mode)
    }

    pub fn trial(&self, trial_id: &str) -> Option<&TrialState> {
        self.trials.iter().find(|t| t.trial_id == trial_id)
    }

    /// Trials that ended on their own terms (not cut off by the budget).
    pub fn trials_finished_within_budget(&self) -> usize {
        self.trials.iter().filter(|t| t.finished_within_budget()).count()
    }

    /// Every (trial, epoch, indicator) the checker reported positive.
    pub fn positive_triples(&self) -> BTreeSet<(String, u32, Indicator)> {
        let mut out = BTreeSet::new();
        for ev in &self.events {
            if let EventKind::Verdict {
                trial_id,
                epoch,
                positives,
                ..
            } = &ev.kind
            {
                for &i in positives {
                    out.insert((trial_id.clone(), *epoch, i));
                }
            }
        }
        out
    }
}

pub(crate) fn write_event<W: Write>(sink: &mut W, ev: &Event) -> Result<()> {
    let line = serde_json::to_string(ev).map_err(|e| Error::invariant(e.to_string()))?;
    sink.write_all(line.as_bytes())?;
    sink.write_all(b"\n")?;
    Ok(())
}

pub fn read_experiment_log(path: &Path) -> Result<ExperimentLog> {
    let file = File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    ExperimentLog::read_jsonl(file)
}
