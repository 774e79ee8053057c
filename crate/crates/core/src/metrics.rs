//! Run comparison: top-k hit ratio, time saved to reach a baseline's best,
//! and per-run summaries.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::Indicator;
use crate::scheduler::{EventKind, ExperimentLog, StopCause, TrialState, TrialStatus};
use crate::simulator::load_traces;
use crate::trace::{FinalStatus, MetricMode, TrialTrace};

/// A finished trial as it enters a ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTrial {
    pub trial_id: String,
    pub source_run: String,
    pub final_metric: f64,
    pub metric_mode: MetricMode,
    pub finished_at_ms: u64,
}

/// Total order: better metric first, then earlier finish, then id.
fn rank_cmp(a: &RankedTrial, b: &RankedTrial) -> Ordering {
    let by_metric = match a.metric_mode {
        MetricMode::Maximize => b.final_metric.total_cmp(&a.final_metric),
        MetricMode::Minimize => a.final_metric.total_cmp(&b.final_metric),
    };
    by_metric
        .then(a.finished_at_ms.cmp(&b.finished_at_ms))
        .then_with(|| a.trial_id.cmp(&b.trial_id))
}

/// The metric a trial is ranked by: the best metric when it completed or
/// stopped as trained-enough, the last one otherwise.
pub fn ranking_metric(t: &TrialState) -> f64 {
    if t.status == TrialStatus::Completed || t.stop_cause == Some(StopCause::Benign) {
        t.best_val_metric
    } else {
        t.last_val_metric
    }
}

/// Finished trials of `log` with a finite ranking metric.
pub fn ranked_trials(log: &ExperimentLog, source_run: &str) -> Vec<RankedTrial> {
    log.trials
        .iter()
        .filter(|t| t.status.is_finished())
        .filter_map(|t| {
            let m = ranking_metric(t);
            m.is_finite().then(|| RankedTrial {
                trial_id: t.trial_id.clone(),
                source_run: source_run.to_string(),
                final_metric: m,
                metric_mode: t.metric_mode,
                finished_at_ms: t.finished_at_ms.unwrap_or(u64::MAX),
            })
        })
        .collect()
}

/// Percentage of the pooled top `k` that comes from `run_i`.
pub fn top10hr(run_i: &[RankedTrial], run_j: &[RankedTrial], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let keep = |r: &[RankedTrial]| -> Vec<RankedTrial> {
        r.iter().filter(|t| t.final_metric.is_finite()).cloned().collect()
    };
    let (a, b) = (keep(run_i), keep(run_j));
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("both runs need at least one ranked trial"));
    }
    let mode = a[0].metric_mode;
    if a.iter().chain(&b).any(|t| t.metric_mode != mode) {
        return Err(Error::invalid("runs mix maximize and minimize metrics"));
    }
    if a.len() + b.len() < k {
        return Err(Error::invalid(format!(
            "pool has {} ranked trials, fewer than k = {k}",
            a.len() + b.len()
        )));
    }
    let mut pool: Vec<(bool, RankedTrial)> = a.into_iter().map(|t| (true, t)).chain(b.into_iter().map(|t| (false, t))).collect();
    pool.sort_by(|x, y| rank_cmp(&x.1, &y.1).then(y.0.cmp(&x.0)));
    let hits = pool.iter().take(k).filter(|(from_i, _)| *from_i).count();
    Ok(100.0 * hits as f64 / k as f64)
}

/// Time saving, in percent of `baseline_budget_ms`, of `enhanced` reaching
/// `baseline_best`. `None` when it never does.
pub fn tsba(baseline_best: f64, baseline_budget_ms: u64, enhanced: &ExperimentLog, mode: MetricMode) -> Option<f64> {
    let t_i = time_to_reach(enhanced, baseline_best, mode)?;
    Some(tsba_from_times(baseline_budget_ms, t_i))
}

/// `100·(T_j − T_i)/T_j`.
pub fn tsba_from_times(t_j_ms: u64, t_i_ms: u64) -> f64 {
    assert!(t_j_ms > 0, "baseline budget must be positive");
    100.0 * (t_j_ms as f64 - t_i_ms as f64) / t_j_ms as f64
}

/// Earliest finish time of a trial whose ranking metric reaches or beats
/// `target`.
pub fn time_to_reach(log: &ExperimentLog, target: f64, mode: MetricMode) -> Option<u64> {
    log.events.iter().find_map(|ev| match &ev.kind {
        EventKind::TrialFinished { trial } => {
            let m = ranking_metric(trial);
            (m.is_finite() && !mode.better(target, m)).then_some(ev.t)
        }
        _ => None,
    })
}

/// When a run first found its own best trial.
pub fn time_to_best(log: &ExperimentLog) -> Option<(f64, u64)> {
    let best = best_metric(log)?;
    Some((best, time_to_reach(log, best, log.metric_mode())?))
}

pub fn best_metric(log: &ExperimentLog) -> Option<f64> {
    let ranked = ranked_trials(log, "");
    let mut sorted = ranked;
    sorted.sort_by(rank_cmp);
    sorted.first().map(|t| t.final_metric)
}

/// Mean of per-repeat values, `None` when empty. A running mean, so equal
/// inputs return that value exactly.
pub fn mean_over_repeats(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().enumerate().fold(0.0, |m, (i, v)| m + (v - m) / (i + 1) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trials_run: usize,
    pub completed: usize,
    pub terminated: usize,
    pub failed: usize,
    /// Started but not finished (truncated logs only).
    pub running: usize,
    pub top1: Option<f64>,
    pub top10_mean: Option<f64>,
    /// Trials averaged into `top10_mean`; below 10 for small runs.
    pub top10_count: usize,
    /// Checker terminations credited to each indicator (every indicator
    /// has an entry).
    pub terminations_by_indicator: BTreeMap<Indicator, usize>,
    pub median_stops: usize,
    pub budget_stops: usize,
    pub manual_stops: usize,
}

/// Per-trial view shared by the log and trace summaries.
struct Outcome {
    status: TrialStatus,
    cause: Option<StopCause>,
    reason: Option<String>,
    metric: f64,
    mode: MetricMode,
    finished: u64,
    id: String,
}

fn summarize_outcomes(outcomes: &[Outcome]) -> RunSummary {
    let count = |s: TrialStatus| outcomes.iter().filter(|o| o.status == s).count();
    let causes = |c: StopCause| outcomes.iter().filter(|o| o.cause == Some(c)).count();
    let mut terminations_by_indicator: BTreeMap<Indicator, usize> = Indicator::ALL.iter().map(|&i| (i, 0)).collect();
    for o in outcomes {
        if matches!(o.cause, Some(StopCause::Malign | StopCause::Benign)) {
            for i in o.reason.as_deref().map(parse_reason).unwrap_or_default() {
                *terminations_by_indicator.entry(i).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<RankedTrial> = outcomes
        .iter()
        .filter(|o| o.status.is_finished() && o.metric.is_finite())
        .map(|o| RankedTrial {
            trial_id: o.id.clone(),
            source_run: String::new(),
            final_metric: o.metric,
            metric_mode: o.mode,
            finished_at_ms: o.finished,
        })
        .collect();
    ranked.sort_by(rank_cmp);
    let top: Vec<f64> = ranked.iter().take(10).map(|t| t.final_metric).collect();
    RunSummary {
        trials_run: outcomes.len(),
        completed: count(TrialStatus::Completed),
        terminated: count(TrialStatus::Terminated),
        failed: count(TrialStatus::Failed),
        running: count(TrialStatus::Running) + count(TrialStatus::Pending),
        top1: top.first().copied(),
        top10_mean: mean_over_repeats(&top),
        top10_count: top.len(),
        terminations_by_indicator,
        median_stops: causes(StopCause::MedianStop),
        budget_stops: causes(StopCause::Budget),
        manual_stops: causes(StopCause::Manual),
    }
}

/// Indicators named in a checker termination reason such as `"ERG,NMG"`.
pub fn parse_reason(reason: &str) -> Vec<Indicator> {
    reason.split(',').filter_map(|s| Indicator::parse(s.trim())).collect()
}

pub fn summarize(log: &ExperimentLog) -> RunSummary {
    let outcomes: Vec<Outcome> = log
        .trials
        .iter()
        .map(|t| Outcome {
            status: t.status,
            cause: t.stop_cause,
            reason: t.termination_reason.clone(),
            metric: ranking_metric(t),
            mode: t.metric_mode,
            finished: t.finished_at_ms.unwrap_or(u64::MAX),
            id: t.trial_id.clone(),
        })
        .collect();
    summarize_outcomes(&outcomes)
}

/// The stop cause implied by a trace's final reason.
fn cause_from_trace(t: &TrialTrace) -> Option<StopCause> {
    let f = t.final_record.as_ref()?;
    if f.status != FinalStatus::Terminated {
        return None;
    }
    let named = parse_reason(&f.reason);
    let fully_named = !named.is_empty() && named.len() == f.reason.split(',').count();
    Some(match f.reason.as_str() {
        "budget" => StopCause::Budget,
        r if r.starts_with("median_stop") => StopCause::MedianStop,
        _ if fully_named && named.iter().all(|i| i.is_benign()) => StopCause::Benign,
        _ if fully_named => StopCause::Malign,
        _ => StopCause::Manual,
    })
}

/// Summary rebuilt from trace files alone. Finish order is unknown there,
/// so ties in metric fall back to trial id.
pub fn summarize_traces(dir: &Path) -> Result<RunSummary> {
    let (traces, _) = load_traces(dir)?;
    let outcomes: Vec<Outcome> = traces
        .iter()
        .map(|t| {
            let cause = cause_from_trace(t);
            let f = t.final_record.as_ref();
            let status = match f.map(|f| f.status) {
                Some(FinalStatus::Completed) => TrialStatus::Completed,
                Some(FinalStatus::Terminated) => TrialStatus::Terminated,
                Some(FinalStatus::Failed) => TrialStatus::Failed,
                None => TrialStatus::Running,
            };
            let metric = if status == TrialStatus::Completed || cause == Some(StopCause::Benign) {
                t.best_val_metric()
            } else {
                t.last_val_metric()
            };
            Outcome {
                status,
                cause,
                reason: f.map(|f| f.reason.clone()),
                metric,
                mode: t.metric_mode(),
                finished: 0,
                id: t.trial_id().to_string(),
            }
        })
        .collect();
    Ok(summarize_outcomes(&outcomes))
}

/// One row per trial, for plotting metric against time.
pub fn write_trials_csv<W: Write>(log: &ExperimentLog, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record([
        "trial_id",
        "status",
        "stop_cause",
        "epochs_run",
        "max_epoch",
        "started_at_ms",
        "finished_at_ms",
        "ranking_metric",
        "best_val_metric",
        "last_val_metric",
        "termination_reason",
    ])
    .map_err(io)?;
    for t in &log.trials {
        let status = serde_json::to_value(t.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let cause = t
            .stop_cause
            .and_then(|c| serde_json::to_value(c).ok())
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        w.write_record([
            t.trial_id.clone(),
            status,
            cause,
            t.epochs_run.to_string(),
            t.max_epoch.to_string(),
            t.started_at_ms.to_string(),
            t.finished_at_ms.map(|v| v.to_string()).unwrap_or_default(),
            ranking_metric(t).to_string(),
            t.best_val_metric.to_string(),
            t.last_val_metric.to_string(),
            t.termination_reason.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
