//! The serialized event loop that owns all experiment state.
//!
//! Each trial trains on its own worker thread, and the checker runs on one
//! more thread. Both talk to the loop only through messages. A worker
//! starts an epoch only when the loop sends it a permit:
//!
//! * simulated clock: at the epoch's simulated start time, so computation
//!   can overlap while events are still applied in simulated-time order;
//! * real clock: once the loop has epoch `e` and the verdict for `e - 1`,
//!   so training never waits for the checker unless the checker is slower
//!   than a whole epoch.
//!
//! A stopped trial's in-flight epoch is discarded.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::thread::{Scope, ScopedJoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::indicators::{diagnose_subset, Decision, DiagnosisReport, Execution, Indicator, IndicatorConfig};
use crate::runner::{epoch_records, EpochOutput, TrialRunner, TrialSession};
use crate::space::{HpConfig, SearchSpace};
use crate::trace::{
    trace_file_name, EpochRecord, FinalStatus, LayerRecord, TraceFinal, TraceMeta, TraceWriter, TrialTrace,
};

use super::log::{write_event, Event, EventKind, ExperimentLog, StopCause, TrialState, TrialStatus};
use super::{
    median_stop_check, trial_seed, Budget, Clock, Policy, RandomSampler, Sampler, EXPERIMENT_LOG_FILE, TRACE_DIR,
};

/// Everything that determines an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub space: SearchSpace,
    pub policy: Policy,
    pub budget: Budget,
    pub clock: Clock,
    /// Maximum number of simultaneously running trials.
    pub concurrency: usize,
    pub seed: u64,
    pub indicators: IndicatorConfig,
    /// Peers required before the median rule may stop a trial.
    pub msr_min_peers: usize,
    /// Delay between an epoch's end and its verdict. Simulated under the
    /// simulated clock, slept by the checker under the real clock.
    pub checker_latency_ms: u64,
    pub checker_execution: Execution,
    /// Where traces and the event log go; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(space: SearchSpace, policy: Policy, budget: Budget, seed: u64) -> Self {
        ExperimentConfig {
            experiment_id: format!("exp-{seed}"),
            space,
            policy,
            budget,
            clock: budget.default_clock(),
            concurrency: 8,
            seed,
            indicators: IndicatorConfig::default(),
            msr_min_peers: 5,
            checker_latency_ms: 0,
            checker_execution: Execution::Sequential,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        self.indicators.validate()?;
        if self.concurrency == 0 {
            return Err(Error::invalid("concurrency must be positive"));
        }
        match (self.budget, self.clock) {
            (Budget::SimMs(_), Clock::Real) => Err(Error::invalid("a sim: budget needs the simulated clock")),
            (Budget::WallMs(_), Clock::Simulated) => Err(Error::invalid("a wall: budget needs the real clock")),
            _ => Ok(()),
        }
    }
}

/// Reply to a stop request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopAck {
    pub trial_id: String,
    /// False when the trial had already finished (the request was a no-op).
    pub changed: bool,
    /// Epochs recorded when the stop took effect.
    pub epochs_run: u32,
}

/// A stop an observer asks for while handling an event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopRequest {
    pub trial_id: String,
    pub reason: String,
}

/// Requests trial stops from outside the event loop.
#[derive(Clone)]
pub struct StopHandle {
    tx: Sender<Msg>,
}

impl StopHandle {
    /// Stop `trial_id` before its next epoch. Stopping a finished trial is
    /// an acknowledged no-op; unknown trials are an error.
    pub fn request_stop(&self, trial_id: &str, reason: &str) -> Result<StopAck> {
        let (reply, answer) = channel();
        let not_running = || Error::NoSuchTrial(format!("{trial_id} (experiment is not running)"));
        self.tx
            .send(Msg::Stop {
                trial_id: trial_id.to_string(),
                reason: reason.to_string(),
                reply,
            })
            .map_err(|_| not_running())?;
        answer.recv().map_err(|_| not_running())?
    }
}

type Observer<'a> = Box<dyn FnMut(&Event) -> Vec<StopRequest> + Send + 'a>;

/// A configured experiment, ready to run.
pub struct Experiment<'a> {
    config: ExperimentConfig,
    runner: &'a dyn TrialRunner,
    sampler: Box<dyn Sampler + 'a>,
    tx: Sender<Msg>,
    rx: Receiver<Msg>,
    listeners: Vec<Sender<Event>>,
    observer: Option<Observer<'a>>,
}

impl<'a> Experiment<'a> {
    pub fn new(config: ExperimentConfig, runner: &'a dyn TrialRunner) -> Result<Self> {
        config.validate()?;
        let (tx, rx) = channel();
        Ok(Experiment {
            sampler: Box::new(RandomSampler::new(config.seed)),
            config,
            runner,
            tx,
            rx,
            listeners: Vec::new(),
            observer: None,
        })
    }

    pub fn with_sampler(mut self, sampler: Box<dyn Sampler + 'a>) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn stop_handle(&self) -> StopHandle {
        StopHandle { tx: self.tx.clone() }
    }

    /// A channel receiving a copy of every event as it is logged.
    pub fn subscribe(&mut self) -> Receiver<Event> {
        let (tx, rx) = channel();
        self.listeners.push(tx);
        rx
    }

    /// Run `f` synchronously on every event; the stops it returns are
    /// applied before the loop moves on.
    pub fn observe(mut self, f: impl FnMut(&Event) -> Vec<StopRequest> + Send + 'a) -> Self {
        self.observer = Some(Box::new(f));
        self
    }

    pub fn run(self) -> Result<ExperimentLog> {
        let Experiment {
            config,
            runner,
            sampler,
            tx,
            rx,
            listeners,
            observer,
        } = self;
        let (events_out, trace_dir) = match &config.out_dir {
            Some(dir) => {
                let traces = dir.join(TRACE_DIR);
                fs::create_dir_all(&traces)?;
                let f = File::create(dir.join(EXPERIMENT_LOG_FILE))?;
                (Some(BufWriter::new(f)), Some(traces))
            }
            None => (None, None),
        };
        std::thread::scope(|scope| {
            let (job_tx, job_rx) = channel();
            let checker = if config.policy == Policy::Bttackler {
                let tx = tx.clone();
                let cfg = config.indicators.clone();
                let exec = config.checker_execution;
                let sleep = match config.clock {
                    Clock::Real if config.checker_latency_ms > 0 => Some(Duration::from_millis(config.checker_latency_ms)),
                    _ => None,
                };
                Some(scope.spawn(move || checker_loop(job_rx, tx, cfg, exec, sleep)))
            } else {
                drop(job_rx);
                None
            };
            let mut engine = Engine {
                scope,
                runner,
                sampler,
                config: &config,
                tx,
                rx,
                jobs: Some(job_tx),
                listeners,
                observer,
                events_out,
                trace_dir,
                events: Vec::new(),
                trials: Vec::new(),
                deferred: Vec::new(),
                now: 0,
                started: Instant::now(),
                budget_hit: false,
                outstanding_verdicts: 0,
                queue: BTreeMap::new(),
                seq: 0,
                fill_scheduled: false,
                inbox: HashMap::new(),
                workers: Vec::new(),
            };
            let result = engine.run();
            engine.shutdown();
            if let Some(c) = checker {
                let _ = c.join();
            }
            result
        })
    }
}

/// Run an experiment with the default random sampler.
pub fn run_experiment(config: ExperimentConfig, runner: &dyn TrialRunner) -> Result<ExperimentLog> {
    Experiment::new(config, runner)?.run()
}

enum Msg {
    Epoch {
        trial: usize,
        epoch: u32,
        result: std::result::Result<EpochOutput, String>,
    },
    Verdict {
        trial: usize,
        epoch: u32,
        report: std::result::Result<DiagnosisReport, String>,
    },
    Exited {
        trial: usize,
    },
    Stop {
        trial_id: String,
        reason: String,
        reply: Sender<Result<StopAck>>,
    },
}

enum Job {
    Begin { trial: usize, meta: TraceMeta },
    Epoch {
        trial: usize,
        record: EpochRecord,
        layers: Vec<LayerRecord>,
        diagnose: bool,
    },
    Forget { trial: usize },
}

fn checker_loop(
    jobs: Receiver<Job>,
    tx: Sender<Msg>,
    cfg: IndicatorConfig,
    exec: Execution,
    latency: Option<Duration>,
) {
    let mut traces: HashMap<usize, TrialTrace> = HashMap::new();
    for job in jobs {
        match job {
            Job::Begin { trial, meta } => {
                traces.insert(trial, TrialTrace::new(meta));
            }
            Job::Forget { trial } => {
                traces.remove(&trial);
            }
            Job::Epoch {
                trial,
                record,
                layers,
                diagnose,
            } => {
                let Some(trace) = traces.get_mut(&trial) else { continue };
                let epoch = record.epoch;
                trace.push_epoch(record, layers);
                if !diagnose {
                    continue;
                }
                let report = diagnose_subset(trace, epoch, &cfg, &Indicator::ALL, exec).map_err(|e| e.to_string());
                if let Some(d) = latency {
                    std::thread::sleep(d);
                }
                if tx.send(Msg::Verdict { trial, epoch, report }).is_err() {
                    return;
                }
            }
        }
    }
}

fn caught<T>(f: impl FnOnce() -> Result<T>) -> std::result::Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(match panic.downcast_ref::<&str>() {
            Some(s) => format!("trial panicked: {s}"),
            None => match panic.downcast_ref::<String>() {
                Some(s) => format!("trial panicked: {s}"),
                None => "trial panicked".to_string(),
            },
        }),
    }
}

fn worker(
    runner: &dyn TrialRunner,
    config: HpConfig,
    seed: u64,
    trial: usize,
    permits: Receiver<u32>,
    tx: Sender<Msg>,
) {
    let mut session: std::result::Result<Box<dyn TrialSession>, String> = caught(|| runner.start(&config, seed));
    while let Ok(epoch) = permits.recv() {
        let result = match &mut session {
            Ok(s) => caught(|| s.run_epoch(epoch)),
            Err(e) => Err(e.clone()),
        };
        let failed = result.is_err();
        if tx.send(Msg::Epoch { trial, epoch, result }).is_err() || failed {
            break;
        }
    }
    let _ = tx.send(Msg::Exited { trial });
}

struct Live {
    state: TrialState,
    permit: Option<Sender<u32>>,
    writer: Option<TraceWriter<BufWriter<File>>>,
    cost_ms: u64,
    /// Validation metric per recorded epoch.
    history: Vec<f64>,
    /// Epochs `0..granted` have been permitted.
    granted: u32,
    /// Epochs submitted to the checker whose verdict is outstanding.
    pending: BTreeSet<u32>,
    worker_alive: bool,
}

impl Live {
    fn finished(&self) -> bool {
        self.state.status.is_finished()
    }
}

/// Simulated-time event, ordered at equal timestamps by variant priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SimEvent {
    Verdict { trial: usize, epoch: u32 },
    EpochEnd { trial: usize, epoch: u32 },
    Budget,
    EpochStart { trial: usize, epoch: u32 },
    Fill,
}

impl SimEvent {
    fn priority(self) -> u8 {
        match self {
            SimEvent::Verdict { .. } => 0,
            SimEvent::EpochEnd { .. } => 1,
            SimEvent::Budget => 2,
            SimEvent::EpochStart { .. } | SimEvent::Fill => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum InboxKey {
    Epoch(usize, u32),
    Verdict(usize, u32),
}

struct Engine<'s, 'e, 'a> {
    scope: &'s Scope<'s, 'e>,
    runner: &'a dyn TrialRunner,
    sampler: Box<dyn Sampler + 'a>,
    config: &'a ExperimentConfig,
    tx: Sender<Msg>,
    rx: Receiver<Msg>,
    jobs: Option<Sender<Job>>,
    listeners: Vec<Sender<Event>>,
    observer: Option<Observer<'a>>,
    events_out: Option<BufWriter<File>>,
    trace_dir: Option<PathBuf>,
    events: Vec<Event>,
    trials: Vec<Live>,
    /// Stops requested by the observer, applied after the current step.
    deferred: Vec<StopRequest>,
    now: u64,
    started: Instant,
    budget_hit: bool,
    outstanding_verdicts: usize,
    queue: BTreeMap<(u64, u8, u64), SimEvent>,
    seq: u64,
    fill_scheduled: bool,
    /// Simulated clock: messages that arrived before the loop needed them.
    inbox: HashMap<InboxKey, Msg>,
    workers: Vec<ScopedJoinHandle<'s, ()>>,
}

impl<'s, 'e, 'a: 'e> Engine<'s, 'e, 'a> {
    fn run(&mut self) -> Result<ExperimentLog> {
        let c = self.config;
        self.emit(EventKind::ExperimentStarted {
            experiment_id: c.experiment_id.clone(),
            runner: self.runner.name().to_string(),
            sampler: self.sampler.name().to_string(),
            policy: c.policy,
            seed: c.seed,
            concurrency: c.concurrency,
            budget: c.budget,
            clock: c.clock,
            checker_latency_ms: c.checker_latency_ms,
            msr_min_peers: c.msr_min_peers,
            space: c.space.clone(),
            indicator_config: c.indicators.clone(),
        })?;
        match c.clock {
            Clock::Simulated => self.run_simulated()?,
            Clock::Real => self.run_real()?,
        }
        let n = self.trials.len() as u32;
        self.emit(EventKind::ExperimentFinished {
            trials: n,
            elapsed_ms: self.now,
        })?;
        if let Some(out) = self.events_out.as_mut() {
            use std::io::Write;
            out.flush()?;
        }
        ExperimentLog::from_events(self.events.clone())
    }

    fn shutdown(&mut self) {
        for t in &mut self.trials {
            t.permit = None;
        }
        self.jobs = None;
        for h in self.workers.drain(..) {
            let _ = h.join();
        }
    }

    // ---- simulated clock ----

    fn schedule(&mut self, at: u64, ev: SimEvent) {
        self.seq += 1;
        self.queue.insert((at, ev.priority(), self.seq), ev);
    }

    fn schedule_fill(&mut self) {
        if !self.fill_scheduled {
            self.fill_scheduled = true;
            self.schedule(self.now, SimEvent::Fill);
        }
    }

    fn run_simulated(&mut self) -> Result<()> {
        if let Some(limit) = self.config.budget.time_limit_ms() {
            self.schedule(limit, SimEvent::Budget);
        }
        self.schedule_fill();
        while let Some(((t, _, _), ev)) = self.queue.pop_first() {
            self.now = t;
            self.drain_nonblocking()?;
            match ev {
                SimEvent::Fill => {
                    self.fill_scheduled = false;
                    self.fill()?;
                }
                SimEvent::EpochStart { trial, epoch } => {
                    let l = &mut self.trials[trial];
                    if l.finished() {
                        continue;
                    }
                    if let Some(p) = &l.permit {
                        let _ = p.send(epoch);
                    }
                    let end = t + l.cost_ms;
                    self.schedule(end, SimEvent::EpochEnd { trial, epoch });
                }
                SimEvent::EpochEnd { trial, epoch } => {
                    if self.trials[trial].finished() {
                        continue;
                    }
                    if let Msg::Epoch { result, .. } = self.wait_for(InboxKey::Epoch(trial, epoch))? {
                        self.on_epoch(trial, epoch, result)?;
                    }
                }
                SimEvent::Verdict { trial, epoch } => {
                    if self.trials[trial].state.stop_cause.is_some() {
                        continue;
                    }
                    if let Msg::Verdict { report, .. } = self.wait_for(InboxKey::Verdict(trial, epoch))? {
                        self.on_verdict(trial, epoch, report)?;
                    }
                }
                SimEvent::Budget => {
                    self.exhaust_budget()?;
                    break;
                }
            }
            self.apply_deferred()?;
        }
        Ok(())
    }

    fn wait_for(&mut self, key: InboxKey) -> Result<Msg> {
        loop {
            if let Some(m) = self.inbox.remove(&key) {
                return Ok(m);
            }
            let m = self
                .rx
                .recv()
                .map_err(|_| Error::invariant("message channel closed while waiting"))?;
            self.route_simulated(m)?;
        }
    }

    fn drain_nonblocking(&mut self) -> Result<()> {
        while let Ok(m) = self.rx.try_recv() {
            self.route_simulated(m)?;
        }
        Ok(())
    }

    fn route_simulated(&mut self, m: Msg) -> Result<()> {
        match m {
            Msg::Epoch { trial, epoch, .. } => {
                if !self.trials[trial].finished() {
                    self.inbox.insert(InboxKey::Epoch(trial, epoch), m);
                }
            }
            Msg::Verdict { trial, epoch, .. } => {
                self.outstanding_verdicts -= 1;
                if self.trials[trial].state.stop_cause.is_none() {
                    self.inbox.insert(InboxKey::Verdict(trial, epoch), m);
                }
            }
            Msg::Exited { trial } => self.trials[trial].worker_alive = false,
            Msg::Stop { trial_id, reason, reply } => {
                let ack = self.manual_stop(&trial_id, &reason);
                let _ = reply.send(ack);
            }
        }
        Ok(())
    }

    // ---- real clock ----

    fn clock_ms(&self) -> u64 {
        (self.started.elapsed().as_millis() as u64).max(self.now)
    }

    fn run_real(&mut self) -> Result<()> {
        let deadline = self.config.budget.time_limit_ms().map(Duration::from_millis);
        self.fill()?;
        loop {
            self.apply_deferred()?;
            let busy = self.trials.iter().any(|t| !t.finished() || t.worker_alive);
            if !busy && self.outstanding_verdicts == 0 && !self.can_start() {
                break;
            }
            let msg = match deadline {
                Some(d) if !self.budget_hit => {
                    let left = d.saturating_sub(self.started.elapsed());
                    match self.rx.recv_timeout(left) {
                        Ok(m) => Some(m),
                        Err(RecvTimeoutError::Timeout) => None,
                        Err(RecvTimeoutError::Disconnected) => return Err(Error::invariant("message channel closed")),
                    }
                }
                _ => Some(self.rx.recv().map_err(|_| Error::invariant("message channel closed"))?),
            };
            self.now = self.clock_ms();
            match msg {
                None => {
                    self.now = self.now.max(deadline.map_or(0, |d| d.as_millis() as u64));
                    self.exhaust_budget()?;
                }
                Some(Msg::Epoch { trial, epoch, result }) => {
                    if !self.trials[trial].finished() {
                        self.on_epoch(trial, epoch, result)?;
                    }
                }
                Some(Msg::Verdict { trial, epoch, report }) => {
                    self.outstanding_verdicts -= 1;
                    self.trials[trial].pending.remove(&epoch);
                    if self.trials[trial].state.stop_cause.is_none() {
                        self.on_verdict(trial, epoch, report)?;
                    }
                }
                Some(Msg::Exited { trial }) => {
                    self.trials[trial].worker_alive = false;
                    self.fill()?;
                }
                Some(Msg::Stop { trial_id, reason, reply }) => {
                    let ack = self.manual_stop(&trial_id, &reason);
                    let _ = reply.send(ack);
                }
            }
        }
        Ok(())
    }

    /// Real clock: permit the next epoch once its prerequisites are in.
    fn maybe_grant(&mut self, trial: usize) {
        if self.config.clock != Clock::Real {
            return;
        }
        let l = &mut self.trials[trial];
        if l.finished() {
            return;
        }
        let next = l.granted;
        if next >= l.state.max_epoch || l.state.epochs_run < next {
            return;
        }
        if l.pending.iter().any(|&p| p + 2 <= next) {
            return;
        }
        if let Some(p) = &l.permit {
            let _ = p.send(next);
            l.granted = next + 1;
        }
    }

    // ---- shared ----

    fn running(&self) -> usize {
        match self.config.clock {
            Clock::Simulated => self.trials.iter().filter(|t| !t.finished()).count(),
            // A stopped trial's worker may still be finishing its epoch.
            Clock::Real => self.trials.iter().filter(|t| !t.finished() || t.worker_alive).count(),
        }
    }

    fn can_start(&self) -> bool {
        match self.config.budget {
            Budget::Trials(n) => self.trials.len() < n as usize,
            _ => !self.budget_hit,
        }
    }

    fn fill(&mut self) -> Result<()> {
        while self.can_start() && self.running() < self.config.concurrency {
            self.start_trial()?;
        }
        Ok(())
    }

    fn start_trial(&mut self) -> Result<()> {
        let index = self.trials.len();
        let trial_id = format!("trial-{index:04}");
        let config = self.sampler.suggest(&self.config.space);
        let seed = trial_seed(self.config.seed, index as u64);
        let mode = self.runner.metric_mode();
        let (max_epoch, setup_error) = match self.runner.max_epoch(&config) {
            Ok(m) => (m, None),
            Err(e) => (0, Some(e.to_string())),
        };
        let cost_ms = self.runner.sim_epoch_cost_ms(&config).max(1);
        let created_unix_ms = match self.config.clock {
            Clock::Simulated => self.now,
            Clock::Real => SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
        };
        let meta = TraceMeta {
            trial_id: trial_id.clone(),
            config: config.clone(),
            max_epoch,
            created_unix_ms,
        };
        let writer = match &self.trace_dir {
            Some(dir) => {
                let f = File::create(dir.join(trace_file_name(&trial_id)))?;
                Some(TraceWriter::create(BufWriter::new(f), &meta)?)
            }
            None => None,
        };
        self.trials.push(Live {
            state: TrialState {
                trial_id: trial_id.clone(),
                index: index as u32,
                config: config.clone(),
                seed,
                status: TrialStatus::Running,
                max_epoch,
                epochs_run: 0,
                best_val_metric: f64::NAN,
                last_val_metric: f64::NAN,
                final_metric_for_sampler: f64::NAN,
                metric_mode: mode,
                termination_reason: None,
                stop_cause: None,
                started_at_ms: self.now,
                finished_at_ms: None,
                wall_ms: 0,
            },
            permit: None,
            writer,
            cost_ms,
            history: Vec::new(),
            granted: 0,
            pending: BTreeSet::new(),
            worker_alive: false,
        });
        self.emit(EventKind::TrialStarted {
            trial_id,
            index: index as u32,
            seed,
            max_epoch,
            metric_mode: mode,
            config: config.clone(),
        })?;
        if let Some(err) = setup_error {
            return self.finish(index, TrialStatus::Failed, Some(err), None);
        }
        if max_epoch == 0 {
            return self.finish(index, TrialStatus::Completed, None, None);
        }
        if let Some(jobs) = &self.jobs {
            let _ = jobs.send(Job::Begin { trial: index, meta });
        }
        let (permit_tx, permit_rx) = channel();
        let tx = self.tx.clone();
        let runner = self.runner;
        let handle = self
            .scope
            .spawn(move || worker(runner, config, seed, index, permit_rx, tx));
        self.workers.push(handle);
        let l = &mut self.trials[index];
        l.worker_alive = true;
        l.permit = Some(permit_tx);
        match self.config.clock {
            Clock::Simulated => self.schedule(self.now, SimEvent::EpochStart { trial: index, epoch: 0 }),
            Clock::Real => self.maybe_grant(index),
        }
        Ok(())
    }

    fn on_epoch(&mut self, trial: usize, epoch: u32, result: std::result::Result<EpochOutput, String>) -> Result<()> {
        let out = match result {
            Ok(out) => out,
            Err(e) => return self.finish(trial, TrialStatus::Failed, Some(e), None),
        };
        let policy = self.config.policy;
        let min_epoch = self.config.indicators.min_epochs_before_diagnosis;
        let l = &mut self.trials[trial];
        let wall_ms = self.now - l.state.started_at_ms;
        let mode = l.state.metric_mode;
        let (record, layers) = epoch_records(&l.state.trial_id, epoch, mode, wall_ms, &out);
        if let Some(w) = l.writer.as_mut() {
            w.append_epoch(&record, &layers)?;
        }
        l.state.epochs_run = epoch + 1;
        l.state.last_val_metric = out.val_metric;
        l.state.best_val_metric = mode.best([l.state.best_val_metric, out.val_metric]);
        l.state.wall_ms = wall_ms;
        l.history.push(out.val_metric);
        let trial_id = l.state.trial_id.clone();
        let last_epoch = epoch + 1 >= l.state.max_epoch;

        if policy == Policy::Bttackler {
            let diagnose = epoch >= min_epoch;
            if let Some(jobs) = &self.jobs {
                let _ = jobs.send(Job::Epoch {
                    trial,
                    record,
                    layers,
                    diagnose,
                });
            }
            if diagnose {
                self.outstanding_verdicts += 1;
                self.trials[trial].pending.insert(epoch);
                if self.config.clock == Clock::Simulated {
                    self.schedule(self.now + self.config.checker_latency_ms, SimEvent::Verdict { trial, epoch });
                }
            }
        }
        self.emit(EventKind::EpochReported {
            trial_id: trial_id.clone(),
            epoch,
            train_loss: out.train_loss,
            val_metric: out.val_metric,
            wall_ms,
        })?;

        if last_epoch {
            return self.finish(trial, TrialStatus::Completed, None, None);
        }
        if policy == Policy::Msr && epoch >= min_epoch {
            let peers: Vec<f64> = self
                .trials
                .iter()
                .filter(|t| t.state.status == TrialStatus::Completed)
                .filter_map(|t| t.history.get(epoch as usize).copied())
                .collect();
            if median_stop_check(out.val_metric, &peers, mode, self.config.msr_min_peers) {
                let reason = format!("median_stop: metric {} below the median of {} peers", out.val_metric, peers.len());
                return self.stop(trial, StopCause::MedianStop, reason);
            }
        }
        match self.config.clock {
            Clock::Simulated => self.schedule(self.now, SimEvent::EpochStart { trial, epoch: epoch + 1 }),
            Clock::Real => self.maybe_grant(trial),
        }
        Ok(())
    }

    fn on_verdict(
        &mut self,
        trial: usize,
        epoch: u32,
        report: std::result::Result<DiagnosisReport, String>,
    ) -> Result<()> {
        self.trials[trial].pending.remove(&epoch);
        let trial_id = self.trials[trial].state.trial_id.clone();
        let report = match report {
            Ok(r) => r,
            Err(e) => {
                ::log::warn!("checker failed on {trial_id} epoch {epoch}: {e}");
                self.maybe_grant(trial);
                return Ok(());
            }
        };
        self.emit(EventKind::Verdict {
            trial_id,
            epoch,
            decision: report.decision,
            positives: report.positives().collect(),
        })?;
        let cause = match report.decision {
            Decision::Continue => None,
            Decision::TerminateBad => Some(StopCause::Malign),
            Decision::TerminateBenign => Some(StopCause::Benign),
        };
        match cause {
            Some(cause) if !self.trials[trial].finished() => self.stop(trial, cause, report.reason()),
            _ => {
                self.maybe_grant(trial);
                Ok(())
            }
        }
    }

    fn stop(&mut self, trial: usize, cause: StopCause, reason: String) -> Result<()> {
        if self.trials[trial].finished() {
            return Ok(());
        }
        let trial_id = self.trials[trial].state.trial_id.clone();
        self.emit(EventKind::StopRequested {
            trial_id,
            cause,
            reason: reason.clone(),
        })?;
        self.finish(trial, TrialStatus::Terminated, Some(reason), Some(cause))
    }

    fn manual_stop(&mut self, trial_id: &str, reason: &str) -> Result<StopAck> {
        let Some(i) = self.trials.iter().position(|t| t.state.trial_id == trial_id) else {
            return Err(Error::NoSuchTrial(trial_id.to_string()));
        };
        let changed = !self.trials[i].finished();
        if changed {
            self.stop(i, StopCause::Manual, reason.to_string())?;
        }
        Ok(StopAck {
            trial_id: trial_id.to_string(),
            changed,
            epochs_run: self.trials[i].state.epochs_run,
        })
    }

    fn finish(
        &mut self,
        trial: usize,
        status: TrialStatus,
        reason: Option<String>,
        cause: Option<StopCause>,
    ) -> Result<()> {
        let now = self.now;
        let l = &mut self.trials[trial];
        let s = &mut l.state;
        s.status = status;
        s.termination_reason = reason;
        s.stop_cause = cause;
        s.finished_at_ms = Some(now);
        s.wall_ms = now - s.started_at_ms;
        s.final_metric_for_sampler = match (status, cause) {
            (TrialStatus::Completed, _) | (_, Some(StopCause::Benign)) => s.best_val_metric,
            _ => s.last_val_metric,
        };
        if let Some(mut w) = l.writer.take() {
            w.finish(&TraceFinal {
                status: match status {
                    TrialStatus::Completed => FinalStatus::Completed,
                    TrialStatus::Failed => FinalStatus::Failed,
                    _ => FinalStatus::Terminated,
                },
                reason: s.termination_reason.clone().unwrap_or_default(),
                best_val_metric: s.best_val_metric,
                epochs_run: s.epochs_run,
            })?;
            w.flush()?;
        }
        l.permit = None;
        let snapshot = l.state.clone();
        if let Some(jobs) = &self.jobs {
            let _ = jobs.send(Job::Forget { trial });
        }
        self.sampler.observe(&snapshot);
        self.emit(EventKind::TrialFinished { trial: snapshot })?;
        if self.config.clock == Clock::Simulated {
            self.schedule_fill();
        }
        Ok(())
    }

    fn exhaust_budget(&mut self) -> Result<()> {
        if self.budget_hit {
            return Ok(());
        }
        self.budget_hit = true;
        self.emit(EventKind::BudgetExhausted {
            budget: self.config.budget,
        })?;
        for i in 0..self.trials.len() {
            self.stop(i, StopCause::Budget, "budget".to_string())?;
        }
        Ok(())
    }

    fn apply_deferred(&mut self) -> Result<()> {
        while !self.deferred.is_empty() {
            for req in std::mem::take(&mut self.deferred) {
                match self.manual_stop(&req.trial_id, &req.reason) {
                    Ok(_) => {}
                    Err(Error::NoSuchTrial(id)) => ::log::warn!("observer asked to stop unknown trial {id}"),
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(())
    }

    fn emit(&mut self, kind: EventKind) -> Result<()> {
        let ev = Event { t: self.now, kind };
        if let Some(out) = self.events_out.as_mut() {
            write_event(out, &ev)?;
        }
        self.listeners.retain(|l| l.send(ev.clone()).is_ok());
        if let Some(obs) = self.observer.as_mut() {
            let reqs = obs(&ev);
            self.deferred.extend(reqs);
        }
        ::log::debug!("t={} {:?}", ev.t, ev.kind);
        self.events.push(ev);
        Ok(())
    }
}
