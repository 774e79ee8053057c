//! Replay of recorded traces through the checker, without re-training.
//!
//! Replay truncates observed history only: a trial flagged at epoch `e`
//! is assumed to have stopped after `e`, and the epochs and wall time it
//! recorded afterwards count as saved.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{diagnose_subset, Decision, Execution, Indicator, IndicatorConfig};
use crate::scheduler::TRACE_DIR;
use crate::trace::{read_trace_file, TrialTrace, TRACE_SUFFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMode {
    /// All indicators together, as the live checker runs them; each
    /// flagged trial is attributed to the indicators of its first positive
    /// epoch.
    #[default]
    Combined,
    /// Each indicator replayed alone over the whole trace, so an indicator
    /// is credited even when another one fires earlier.
    PerIndicator,
}

impl FromStr for ReplayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(ReplayMode::Combined),
            "per_indicator" | "per-indicator" => Ok(ReplayMode::PerIndicator),
            _ => Err(Error::invalid(format!("unknown replay mode '{s}' (expected combined or per_indicator)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReplay {
    pub trial_id: String,
    pub max_epoch: u32,
    pub epochs_run: u32,
    /// First epoch at which any indicator is positive.
    pub first_positive_epoch: Option<u32>,
    /// Combined: positives at `first_positive_epoch`. Per indicator: every
    /// indicator positive at some epoch.
    pub triggering_indicators: Vec<Indicator>,
    /// Checker decision at `first_positive_epoch`.
    pub decision: Decision,
    /// First positive epoch of each indicator in isolation (per-indicator
    /// mode only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub first_epoch_by_indicator: BTreeMap<Indicator, u32>,
    pub epochs_saved: u32,
    pub wall_saved_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayWarning {
    pub file: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub mode: ReplayMode,
    pub config: IndicatorConfig,
    /// Sorted by trial id.
    pub trials: Vec<TrialReplay>,
    /// Trials claimed by each indicator (every indicator has an entry).
    pub claimed: BTreeMap<Indicator, usize>,
    pub estimated_epochs_saved: u64,
    pub estimated_wall_saved_ms: u64,
    /// Files that could not be replayed, sorted by file name.
    pub warnings: Vec<ReplayWarning>,
}

impl ReplayReport {
    pub fn flagged(&self) -> impl Iterator<Item = &TrialReplay> {
        self.trials.iter().filter(|t| t.first_positive_epoch.is_some())
    }

    pub fn trial(&self, trial_id: &str) -> Option<&TrialReplay> {
        self.trials.iter().find(|t| t.trial_id == trial_id)
    }

    /// One-row table: task name, then the claim count of every indicator.
    pub fn table(&self, task: &str) -> String {
        claims_table(&[(task, self)])
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::invariant(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Claims per indicator, one row per task and one column per indicator.
pub fn claims_table(rows: &[(&str, &ReplayReport)]) -> String {
    let width = rows.iter().map(|(t, _)| t.len()).max().unwrap_or(0).max(4);
    let mut out = format!("{:<width$}", "task");
    for i in Indicator::ALL {
        let _ = write!(out, " {:>5}", i.name());
    }
    let _ = writeln!(out, " {:>7} {:>7} {:>8}", "trials", "flagged", "saved");
    for (task, r) in rows {
        let _ = write!(out, "{task:<width$}");
        for i in Indicator::ALL {
            let _ = write!(out, " {:>5}", r.claimed.get(&i).copied().unwrap_or(0));
        }
        let _ = writeln!(
            out,
            " {:>7} {:>7} {:>8}",
            r.trials.len(),
            r.flagged().count(),
            r.estimated_epochs_saved
        );
    }
    out
}

/// Trace files of a directory, or of its `traces/` subdirectory when it is
/// an experiment output directory.
pub fn trace_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let list = |d: &Path| -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        for entry in std::fs::read_dir(d)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", d.display()))))?
        {
            let path = entry?.path();
            let is_trace = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(TRACE_SUFFIX));
            if is_trace && path.is_file() {
                files.push(path);
            }
        }
        files.sort();
        Ok(files)
    };
    let files = list(dir)?;
    let nested = dir.join(TRACE_DIR);
    if files.is_empty() && nested.is_dir() {
        return list(&nested);
    }
    Ok(files)
}

/// Load every readable, valid trace; the rest become warnings.
pub fn load_traces(dir: &Path) -> Result<(Vec<TrialTrace>, Vec<ReplayWarning>)> {
    let mut traces = Vec::new();
    let mut warnings = Vec::new();
    for path in trace_files(dir)? {
        let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let warn = |message: String| ReplayWarning {
            file: file.clone(),
            message,
        };
        match read_trace_file(&path) {
            Err(e) => warnings.push(warn(e.to_string())),
            Ok(read) => {
                if let Err(e) = read.trace.validate() {
                    warnings.push(warn(e.to_string()));
                } else if read.truncated {
                    warnings.push(warn("partial last line".into()));
                } else if read.trace.final_record.is_none() {
                    warnings.push(warn("trace has no final record".into()));
                } else {
                    traces.push(read.trace);
                }
            }
        }
    }
    Ok((traces, warnings))
}

/// Replay every trace in `dir` (see [`trace_files`]).
pub fn replay(dir: &Path, cfg: &IndicatorConfig, mode: ReplayMode) -> Result<ReplayReport> {
    let (traces, warnings) = load_traces(dir)?;
    let mut report = replay_traces(&traces, cfg, mode)?;
    report.warnings = warnings;
    Ok(report)
}

/// Replay already loaded traces. The report does not depend on their order.
pub fn replay_traces(traces: &[TrialTrace], cfg: &IndicatorConfig, mode: ReplayMode) -> Result<ReplayReport> {
    cfg.validate()?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(traces.len().max(1));
    let chunk = traces.len().div_ceil(workers).max(1);
    let results: Vec<Result<TrialReplay>> = if workers <= 1 {
        traces.iter().map(|t| replay_trial(t, cfg, mode)).collect()
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = traces
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|t| replay_trial(t, cfg, mode)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("replay worker panicked"))
                .collect()
        })
    };
    let mut trials = results.into_iter().collect::<Result<Vec<_>>>()?;
    trials.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
    if let Some(w) = trials.windows(2).find(|w| w[0].trial_id == w[1].trial_id) {
        return Err(Error::invalid(format!("trial '{}' appears twice", w[0].trial_id)));
    }

    let mut claimed: BTreeMap<Indicator, usize> = Indicator::ALL.iter().map(|&i| (i, 0)).collect();
    for t in &trials {
        for i in &t.triggering_indicators {
            *claimed.entry(*i).or_default() += 1;
        }
    }
    Ok(ReplayReport {
        mode,
        config: cfg.clone(),
        estimated_epochs_saved: trials.iter().map(|t| t.epochs_saved as u64).sum(),
        estimated_wall_saved_ms: trials.iter().map(|t| t.wall_saved_ms).sum(),
        trials,
        claimed,
        warnings: Vec::new(),
    })
}

/// Feed one trace's epoch prefixes to the checker in order.
pub fn replay_trial(trace: &TrialTrace, cfg: &IndicatorConfig, mode: ReplayMode) -> Result<TrialReplay> {
    let epochs_run = trace.epochs.len() as u32;
    let start = cfg.min_epochs_before_diagnosis;
    let mut first = None;
    let mut triggering = Vec::new();
    let mut decision = Decision::Continue;
    let mut by_indicator = BTreeMap::new();
    for epoch in start..epochs_run {
        let report = diagnose_subset(trace, epoch, cfg, &Indicator::ALL, Execution::Sequential)?;
        let positives: Vec<Indicator> = report.positives().collect();
        if positives.is_empty() {
            continue;
        }
        if first.is_none() {
            first = Some(epoch);
            decision = report.decision;
            triggering = positives.clone();
            if mode == ReplayMode::Combined {
                break;
            }
        }
        // Indicators are evaluated independently, so the full report at
        // each epoch holds every isolated verdict.
        for i in positives {
            by_indicator.entry(i).or_insert(epoch);
        }
    }
    if mode == ReplayMode::PerIndicator {
        triggering = by_indicator.keys().copied().collect();
    }
    let (epochs_saved, wall_saved_ms) = match first {
        Some(e) => {
            let last = trace.epochs.last().map_or(0, |r| r.wall_ms);
            (epochs_run - (e + 1), last.saturating_sub(trace.epochs[e as usize].wall_ms))
        }
        None => (0, 0),
    };
    Ok(TrialReplay {
        trial_id: trace.trial_id().to_string(),
        max_epoch: trace.meta.max_epoch,
        epochs_run,
        first_positive_epoch: first,
        triggering_indicators: triggering,
        decision,
        first_epoch_by_indicator: by_indicator,
        epochs_saved,
        wall_saved_ms,
    })
}

/// Externally supplied ground truth for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Good,
    Bad,
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "good" => Ok(Outcome::Good),
            "bad" => Ok(Outcome::Bad),
            other => Err(Error::invalid(format!("unknown outcome '{other}' (expected good or bad)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    /// Position of the config in the input grid.
    pub grid_index: usize,
    pub config: IndicatorConfig,
    /// Good trials terminated as bad, over labeled good trials.
    pub false_positive_rate: f64,
    /// Bad trials not terminated as bad, over labeled bad trials.
    pub false_negative_rate: f64,
    pub epochs_saved: u64,
    pub flagged_good: usize,
    pub flagged_bad: usize,
}

/// Evaluate every config in `grid` over the traces in `dir`, best first:
/// lowest false positive rate, then most epochs saved. Unlabeled trials
/// count toward savings but not toward the rates.
pub fn calibrate(
    dir: &Path,
    labels: &BTreeMap<String, Outcome>,
    grid: &[IndicatorConfig],
) -> Result<Vec<CalibrationRow>> {
    if grid.is_empty() {
        return Err(Error::invalid("calibration grid is empty"));
    }
    let (traces, _) = load_traces(dir)?;
    calibrate_traces(&traces, labels, grid)
}

pub fn calibrate_traces(
    traces: &[TrialTrace],
    labels: &BTreeMap<String, Outcome>,
    grid: &[IndicatorConfig],
) -> Result<Vec<CalibrationRow>> {
    if grid.is_empty() {
        return Err(Error::invalid("calibration grid is empty"));
    }
    let good = labels.values().filter(|o| **o == Outcome::Good).count();
    let bad = labels.len() - good;
    let rate = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let mut rows = Vec::with_capacity(grid.len());
    for (grid_index, cfg) in grid.iter().enumerate() {
        let report = replay_traces(traces, cfg, ReplayMode::Combined)?;
        let bad_flag: BTreeMap<&str, bool> = report
            .trials
            .iter()
            .map(|t| (t.trial_id.as_str(), t.decision == Decision::TerminateBad))
            .collect();
        let flagged = |want: Outcome| {
            labels
                .iter()
                .filter(|(id, o)| **o == want && bad_flag.get(id.as_str()).copied().unwrap_or(false))
                .count()
        };
        let (flagged_good, flagged_bad) = (flagged(Outcome::Good), flagged(Outcome::Bad));
        rows.push(CalibrationRow {
            grid_index,
            config: cfg.clone(),
            false_positive_rate: rate(flagged_good, good),
            false_negative_rate: rate(bad - flagged_bad, bad),
            epochs_saved: report.estimated_epochs_saved,
            flagged_good,
            flagged_bad,
        });
    }
    rows.sort_by(|a, b| {
        a.false_positive_rate
            .total_cmp(&b.false_positive_rate)
            .then(b.epochs_saved.cmp(&a.epochs_saved))
            .then(a.grid_index.cmp(&b.grid_index))
    });
    Ok(rows)
}
