//! Command-line workflows over the diagnosis-driven HPO engine: run an
//! experiment, diagnose one trace, replay or calibrate recorded traces and
//! compare two runs.

mod manifest;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use diaghpo::indicators::{diagnose, DiagnosisReport, IndicatorConfig};
use diaghpo::metrics::{
    best_metric, ranked_trials, summarize, time_to_best, top10hr, tsba, write_trials_csv, RunSummary,
};
use diaghpo::scheduler::{
    read_experiment_log, run_experiment, Budget, Clock, ExperimentLog, Policy, EXPERIMENT_LOG_FILE, TRACE_DIR,
};
use diaghpo::simulator::{calibrate, load_traces, replay, CalibrationRow, Outcome, ReplayMode, ReplayReport};
use diaghpo::space::Domain;
use diaghpo::stats::sorted_quantile;
use diaghpo::toytrainer::ToyRunner;
use diaghpo::trace::{read_trace_file, MetricMode, TRACE_SUFFIX};

pub use manifest::{builtin_spaces, RunManifest};

/// Summary document written next to the event log.
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRIALS_CSV_FILE: &str = "trials.csv";
pub const REPLAY_FILE: &str = "replay.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const COMPARE_FILE: &str = "compare.json";

/// A problem with the command line or its configuration files.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "diaghpo", version, about = "Diagnosis-driven hyperparameter optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write traces, the event log and a summary.
    Run(RunArgs),
    /// Print the checker's verdicts for every epoch of one trace file.
    Diagnose(DiagnoseArgs),
    /// Re-run the checker over recorded traces.
    Replay(ReplayArgs),
    /// Rank indicator configurations against labeled trials.
    Calibrate(CalibrateArgs),
    /// Compare two experiment logs.
    Compare(CompareArgs),
    /// Built-in search spaces.
    Spaces {
        #[command(subcommand)]
        command: SpacesCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum SpacesCommand {
    List,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML manifest; flags given on the command line override it.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub runner: Option<String>,
    /// Built-in space name or TOML file.
    #[arg(long)]
    pub space: Option<String>,
    #[arg(long)]
    pub policy: Option<Policy>,
    /// trials:N, sim:Nms or wall:Nms.
    #[arg(long)]
    pub budget: Option<Budget>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: ./btt-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Indicator thresholds (TOML or JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// simulated or real; implied by the budget by default.
    #[arg(long)]
    pub clock: Option<Clock>,
    #[arg(long)]
    pub checker_latency_ms: Option<u64>,
    #[arg(long)]
    pub experiment_id: Option<String>,
    /// Replace an earlier experiment in the output directory.
    #[arg(long)]
    pub force: bool,
}

impl RunArgs {
    pub fn manifest(&self) -> Result<RunManifest> {
        let mut m = match &self.manifest {
            Some(p) => RunManifest::from_file(p)?,
            None => RunManifest::default(),
        };
        if let Some(v) = &self.runner {
            m.runner = v.clone();
        }
        if let Some(v) = &self.space {
            m.space = Some(v.clone());
        }
        if let Some(v) = self.policy {
            m.policy = v;
        }
        if let Some(v) = self.budget {
            m.budget = v;
        }
        if let Some(v) = self.seed {
            m.seed = v;
        }
        if let Some(v) = &self.out {
            m.out_dir = v.clone();
        }
        if let Some(v) = self.concurrency {
            m.concurrency = v;
        }
        if let Some(v) = &self.config {
            m.indicator_config = Some(v.clone());
        }
        if let Some(v) = self.clock {
            m.clock = Some(v);
        }
        if let Some(v) = self.checker_latency_ms {
            m.checker_latency_ms = v;
        }
        if let Some(v) = &self.experiment_id {
            m.experiment_id = Some(v.clone());
        }
        Ok(m)
    }
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    pub trace: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Only this epoch.
    #[arg(long)]
    pub epoch: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Directory of trace files or an experiment output directory.
    pub dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// combined or per_indicator.
    #[arg(long, default_value = "combined")]
    pub mode: ReplayMode,
    #[arg(long, default_value = "btt-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    pub dir: PathBuf,
    /// Candidate configurations: a TOML file of `[[config]]` tables or a
    /// JSON array.
    #[arg(long)]
    pub grid: PathBuf,
    /// Lines of `trial_id,good|bad`.
    #[arg(long, conflicts_with = "bad_quantile", required_unless_present = "bad_quantile")]
    pub labels: Option<PathBuf>,
    /// Label trials whose best metric is worse than this quantile as bad.
    #[arg(long)]
    pub bad_quantile: Option<f64>,
    #[arg(long, default_value = "btt-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Log of the run under evaluation (file or output directory).
    pub run: PathBuf,
    /// Log of the baseline run.
    pub baseline: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Baseline time budget; defaults to when the baseline found its best.
    #[arg(long)]
    pub baseline_budget_ms: Option<u64>,
    #[arg(long, default_value = "btt-out")]
    pub out: PathBuf,
}

/// Parse, execute and map errors to exit codes: 0 success, 2 usage or
/// configuration errors, 1 anything else.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<diaghpo::Error>() {
        Some(diaghpo::Error::Config(_) | diaghpo::Error::InvalidInput(_)) => 2,
        _ => 1,
    }
}

/// Run a command and return what it prints.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Run(a) => cmd_run(&a.manifest()?, a.force).map(|o| o.text),
        Command::Diagnose(a) => {
            let cfg = indicator_config(a.config.as_deref())?;
            let reports = cmd_diagnose(&a.trace, &cfg, a.epoch)?;
            Ok(diagnose_text(&reports))
        }
        Command::Replay(a) => {
            let cfg = indicator_config(a.config.as_deref())?;
            let report = cmd_replay(&a.dir, &cfg, a.mode, &a.out)?;
            Ok(replay_text(&a.dir, &report))
        }
        Command::Calibrate(a) => {
            let labels = match (&a.labels, a.bad_quantile) {
                (Some(p), _) => read_labels(p)?,
                (None, Some(q)) => quantile_labels(&a.dir, q)?,
                (None, None) => bail!(UsageError("pass --labels or --bad-quantile".into())),
            };
            let rows = cmd_calibrate(&a.dir, &labels, &read_grid(&a.grid)?, &a.out)?;
            Ok(calibration_text(&rows))
        }
        Command::Compare(a) => cmd_compare(&a.run, &a.baseline, a.k, a.baseline_budget_ms, &a.out).map(|c| c.text),
        Command::Spaces {
            command: SpacesCommand::List,
        } => Ok(spaces_text()),
    }
}

fn indicator_config(path: Option<&Path>) -> Result<IndicatorConfig> {
    Ok(match path {
        Some(p) => IndicatorConfig::from_file(p)?,
        None => IndicatorConfig::default(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.1}%"))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunDocument {
    pub experiment_id: String,
    pub policy: Policy,
    pub budget: Budget,
    pub clock: Clock,
    pub seed: u64,
    pub elapsed_ms: u64,
    pub summary: RunSummary,
}

pub struct RunOutcome {
    pub log: ExperimentLog,
    pub summary: RunSummary,
    pub text: String,
}

/// Execute the manifest's experiment and persist its outputs.
pub fn cmd_run(m: &RunManifest, force: bool) -> Result<RunOutcome> {
    let cfg = m.to_experiment_config()?;
    prepare_out_dir(&m.out_dir, force)?;
    log::info!("running {} with policy {} and budget {}", cfg.experiment_id, cfg.policy, cfg.budget);
    let runner = ToyRunner::standard();
    let log = run_experiment(cfg, &runner)?;
    let summary = summarize(&log);
    let doc = RunDocument {
        experiment_id: log.experiment_id.clone(),
        policy: log.policy,
        budget: log.budget,
        clock: log.clock,
        seed: log.seed,
        elapsed_ms: log.elapsed_ms,
        summary: summary.clone(),
    };
    write_json(&m.out_dir.join(SUMMARY_FILE), &doc)?;
    let csv = fs::File::create(m.out_dir.join(TRIALS_CSV_FILE))?;
    write_trials_csv(&log, csv)?;
    let text = run_text(&doc, &m.out_dir);
    Ok(RunOutcome { log, summary, text })
}

/// Refuse to mix two experiments in one directory unless `force`, in which
/// case the earlier experiment's files are removed.
fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if !dir.join(EXPERIMENT_LOG_FILE).exists() {
        return Ok(());
    }
    if !force {
        bail!(UsageError(format!(
            "{} already holds an experiment; choose another --out or pass --force",
            dir.display()
        )));
    }
    for f in [EXPERIMENT_LOG_FILE, SUMMARY_FILE, TRIALS_CSV_FILE] {
        let p = dir.join(f);
        if p.exists() {
            fs::remove_file(&p)?;
        }
    }
    let traces = dir.join(TRACE_DIR);
    if traces.is_dir() {
        for entry in fs::read_dir(&traces)? {
            let p = entry?.path();
            if p.to_string_lossy().ends_with(TRACE_SUFFIX) {
                fs::remove_file(&p)?;
            }
        }
    }
    Ok(())
}

fn run_text(doc: &RunDocument, out: &Path) -> String {
    let s = &doc.summary;
    let mut t = String::new();
    let _ = writeln!(
        t,
        "experiment {}  policy {}  budget {}  seed {}",
        doc.experiment_id, doc.policy, doc.budget, doc.seed
    );
    let _ = writeln!(
        t,
        "trials {}  completed {}  terminated {}  failed {}  elapsed {} ms",
        s.trials_run, s.completed, s.terminated, s.failed, doc.elapsed_ms
    );
    let _ = writeln!(
        t,
        "top1 {}  top10_mean {} (over {} trials)",
        fmt_metric(s.top1),
        fmt_metric(s.top10_mean),
        s.top10_count
    );
    let _ = write!(t, "terminations");
    for (i, n) in &s.terminations_by_indicator {
        let _ = write!(t, "  {i} {n}");
    }
    let _ = writeln!(t, "  median {}  budget {}", s.median_stops, s.budget_stops);
    let _ = writeln!(t, "output {}", out.display());
    t
}

/// Verdicts for every diagnosable epoch of a trace (or just `epoch`).
pub fn cmd_diagnose(path: &Path, cfg: &IndicatorConfig, epoch: Option<u32>) -> Result<Vec<DiagnosisReport>> {
    let read = read_trace_file(path).with_context(|| format!("reading {}", path.display()))?;
    if read.truncated {
        log::warn!("{}: ignoring a partial last line", path.display());
    }
    let trace = read.trace;
    trace.validate().with_context(|| format!("validating {}", path.display()))?;
    let n = trace.epochs.len() as u32;
    let epochs: Vec<u32> = match epoch {
        Some(e) if e >= n => bail!(UsageError(format!("trace has {n} epochs; epoch {e} does not exist"))),
        Some(e) => vec![e],
        None => (cfg.min_epochs_before_diagnosis..n).collect(),
    };
    epochs.into_iter().map(|e| Ok(diagnose(&trace, e, cfg)?)).collect()
}

fn diagnose_text(reports: &[DiagnosisReport]) -> String {
    let mut t = String::new();
    if let Some(r) = reports.first() {
        let _ = writeln!(t, "trial {}", r.trial_id);
    }
    let _ = writeln!(t, "{:>5}  {:<5}  {:<16}  positives", "epoch", "stage", "decision");
    for r in reports {
        let stage = serde_json::to_value(r.stage).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let decision =
            serde_json::to_value(r.decision).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let pos = r.reason();
        let _ = writeln!(
            t,
            "{:>5}  {:<5}  {:<16}  {}",
            r.epoch,
            stage,
            decision,
            if pos.is_empty() { "-" } else { &pos }
        );
    }
    match reports.iter().find(|r| r.positives().next().is_some()) {
        Some(r) => {
            let _ = writeln!(t, "first positive: epoch {} ({})", r.epoch, r.reason());
        }
        None => {
            let _ = writeln!(t, "no indicator fired");
        }
    }
    t
}

pub fn cmd_replay(dir: &Path, cfg: &IndicatorConfig, mode: ReplayMode, out: &Path) -> Result<ReplayReport> {
    if !dir.is_dir() {
        bail!(UsageError(format!("{} is not a directory", dir.display())));
    }
    let report = replay(dir, cfg, mode)?;
    for w in &report.warnings {
        log::warn!("skipped {}: {}", w.file, w.message);
    }
    write_json(&out.join(REPLAY_FILE), &report)?;
    Ok(report)
}

fn task_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .filter(|n| n != TRACE_DIR)
        .or_else(|| dir.parent().and_then(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "traces".into())
}

fn replay_text(dir: &Path, r: &ReplayReport) -> String {
    let mut t = r.table(&task_name(dir));
    let _ = writeln!(
        t,
        "estimated savings: {} epochs, {} ms",
        r.estimated_epochs_saved, r.estimated_wall_saved_ms
    );
    for w in &r.warnings {
        let _ = writeln!(t, "warning: {}: {}", w.file, w.message);
    }
    t
}

/// Labels file: `trial_id,good|bad` per line; `#` comments and a
/// `trial_id,outcome` header are ignored.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, Outcome>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut labels = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "trial_id,outcome" {
            continue;
        }
        let Some((id, outcome)) = line.split_once(',') else {
            bail!(UsageError(format!("{}:{}: expected trial_id,good|bad", path.display(), i + 1)));
        };
        let outcome: Outcome = outcome
            .parse()
            .map_err(|e| UsageError(format!("{}:{}: {e}", path.display(), i + 1)))?;
        labels.insert(id.trim().to_string(), outcome);
    }
    Ok(labels)
}

/// Trials whose best metric is worse than the `q`-quantile of all best
/// metrics (or not finite) are bad, the rest good.
pub fn quantile_labels(dir: &Path, q: f64) -> Result<BTreeMap<String, Outcome>> {
    if !(0.0..=1.0).contains(&q) {
        bail!(UsageError(format!("--bad-quantile {q} is outside [0, 1]")));
    }
    let (traces, _) = load_traces(dir)?;
    let mut finite: Vec<f64> = traces.iter().map(|t| t.best_val_metric()).filter(|v| v.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    if finite.is_empty() {
        return Ok(traces.iter().map(|t| (t.trial_id().to_string(), Outcome::Bad)).collect());
    }
    let mode = traces.first().map_or(MetricMode::Maximize, |t| t.metric_mode());
    let p = match mode {
        MetricMode::Maximize => q,
        MetricMode::Minimize => 1.0 - q,
    };
    let cut = sorted_quantile(&finite, p);
    Ok(traces
        .iter()
        .map(|t| {
            let m = t.best_val_metric();
            let bad = !m.is_finite() || mode.better(cut, m);
            (t.trial_id().to_string(), if bad { Outcome::Bad } else { Outcome::Good })
        })
        .collect())
}

/// Grid file: a JSON array of configs, or TOML `[[config]]` tables. Absent
/// fields take their defaults.
pub fn read_grid(path: &Path) -> Result<Vec<IndicatorConfig>> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Grid {
        #[serde(default)]
        config: Vec<IndicatorConfig>,
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let grid: Vec<IndicatorConfig> = if text.trim_start().starts_with('[') && !text.trim_start().starts_with("[[") {
        serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str::<Grid>(&text)
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))?
            .config
    };
    for (i, c) in grid.iter().enumerate() {
        c.validate().map_err(|e| UsageError(format!("{}: config {i}: {e}", path.display())))?;
    }
    Ok(grid)
}

pub fn cmd_calibrate(
    dir: &Path,
    labels: &BTreeMap<String, Outcome>,
    grid: &[IndicatorConfig],
    out: &Path,
) -> Result<Vec<CalibrationRow>> {
    let rows = calibrate(dir, labels, grid)?;
    write_json(&out.join(CALIBRATION_FILE), &rows)?;
    Ok(rows)
}

fn calibration_text(rows: &[CalibrationRow]) -> String {
    let mut t = format!("{:>4} {:>6} {:>8} {:>8} {:>8}\n", "rank", "config", "fpr", "fnr", "saved");
    for (rank, r) in rows.iter().enumerate() {
        let _ = writeln!(
            t,
            "{:>4} {:>6} {:>8.3} {:>8.3} {:>8}",
            rank + 1,
            r.grid_index,
            r.false_positive_rate,
            r.false_negative_rate,
            r.epochs_saved
        );
    }
    t
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub run: String,
    pub trials: usize,
    pub top1: Option<f64>,
    pub top10_mean: Option<f64>,
    /// Share of the pooled top k held by this run.
    pub top10hr: Option<f64>,
    /// Time saved reaching the baseline's best (evaluated run only).
    pub tsba: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub k: usize,
    pub baseline_best: Option<f64>,
    pub baseline_budget_ms: Option<u64>,
    pub rows: Vec<CompareRow>,
    #[serde(skip)]
    pub text: String,
}

fn load_log(path: &Path) -> Result<ExperimentLog> {
    let file = if path.is_dir() { path.join(EXPERIMENT_LOG_FILE) } else { path.to_path_buf() };
    read_experiment_log(&file).with_context(|| format!("reading {}", file.display()))
}

/// Compare `run` against `baseline`: top-k share of each over the pooled
/// trials and the time `run` took to reach the baseline's best.
pub fn cmd_compare(run: &Path, baseline: &Path, k: usize, baseline_budget_ms: Option<u64>, out: &Path) -> Result<Comparison> {
    let (a, b) = (load_log(run)?, load_log(baseline)?);
    let mode = a.metric_mode();
    if mode != b.metric_mode() {
        bail!(UsageError("the two runs optimize metrics in opposite directions".into()));
    }
    let mut names = (a.experiment_id.clone(), b.experiment_id.clone());
    if names.0 == names.1 {
        names = (format!("{} (run)", names.0), format!("{} (baseline)", names.1));
    }
    let (ra, rb) = (ranked_trials(&a, &names.0), ranked_trials(&b, &names.1));
    let k_eff = k.min(ra.len() + rb.len());
    let share = |x: &[_], y: &[_]| if k_eff == 0 { None } else { top10hr(x, y, k_eff).ok() };

    let baseline_best = best_metric(&b);
    let t_j = baseline_budget_ms.or_else(|| time_to_best(&b).map(|(_, t)| t)).filter(|&t| t > 0);
    let saving = match (baseline_best, t_j) {
        (Some(best), Some(t)) => tsba(best, t, &a, mode),
        _ => None,
    };
    let row = |name: &str, log: &ExperimentLog, hr: Option<f64>, tsba: Option<f64>| {
        let s = summarize(log);
        CompareRow {
            run: name.to_string(),
            trials: s.trials_run,
            top1: s.top1,
            top10_mean: s.top10_mean,
            top10hr: hr,
            tsba,
        }
    };
    let rows = vec![
        row(&names.0, &a, share(&ra, &rb), saving),
        row(&names.1, &b, share(&rb, &ra), None),
    ];
    let mut cmp = Comparison {
        k: k_eff,
        baseline_best,
        baseline_budget_ms: t_j,
        rows,
        text: String::new(),
    };
    write_json(&out.join(COMPARE_FILE), &cmp)?;
    cmp.text = compare_text(&cmp);
    Ok(cmp)
}

fn compare_text(c: &Comparison) -> String {
    let w = c.rows.iter().map(|r| r.run.len()).max().unwrap_or(3).max(3);
    let mut t = format!(
        "{:<w$} {:>7} {:>8} {:>10} {:>8} {:>7}\n",
        "run", "trials", "top1", "top10_mean", "Top10HR", "TSBA"
    );
    for r in &c.rows {
        let _ = writeln!(
            t,
            "{:<w$} {:>7} {:>8} {:>10} {:>8} {:>7}",
            r.run,
            r.trials,
            fmt_metric(r.top1),
            fmt_metric(r.top10_mean),
            fmt_pct(r.top10hr),
            fmt_pct(r.tsba)
        );
    }
    let _ = writeln!(
        t,
        "pooled top {}; baseline best {} within {} ms",
        c.k,
        fmt_metric(c.baseline_best),
        c.baseline_budget_ms.map_or_else(|| "-".into(), |v| v.to_string())
    );
    t
}

fn spaces_text() -> String {
    let mut t = String::new();
    for (name, space) in builtin_spaces() {
        let _ = writeln!(t, "{name}");
        for d in &space.dims {
            let domain = match &d.domain {
                Domain::Continuous { low, high } => format!("continuous [{low}, {high}]"),
                Domain::ContinuousLog { low, high } => format!("log-uniform [{low}, {high}]"),
                Domain::Discrete { low, high } => format!("integer {low}..={high}"),
                Domain::Categorical { choices } => {
                    let c: Vec<String> = choices.iter().map(|c| serde_json::to_string(c).unwrap_or_default()).collect();
                    format!("one of {}", c.join(", "))
                }
            };
            let _ = writeln!(t, "  {:<16} {domain}", d.name);
        }
    }
    t
}

