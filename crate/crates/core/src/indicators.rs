//! Quality indicators over trial traces.
//!
//! Seven rules detect training pathologies from the traced statistics:
//!
//! | indicator | stage | symptom |
//! |-----------|-------|---------|
//! | AGV | any   | non-finite or out-of-bound gradients |
//! | EAG | early | gradients amplified layer over layer |
//! | ERG | early | gradients shrinking layer over layer |
//! | PLC | early | training loss barely moves |
//! | LAR | any   | most neurons output exactly zero |
//! | ULC | late  | loss fluctuates or rises |
//! | NMG | late  | no new loss minimum in the recent window (benign) |
//!
//! All thresholds live in [`IndicatorConfig`]; the defaults are deliberately
//! loose so that only severe problems are flagged.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::{median, StatVector};
use crate::trace::{TrialTrace, VarKind};

/// How a layer's gradient snapshot is reduced to one magnitude for EAG/ERG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMagnitude {
    /// Root mean square, `sqrt(var + avg^2)`.
    #[default]
    Rms,
    /// Absolute value of the median.
    AbsMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndicatorConfig {
    pub agv_abs_bound: f64,
    pub eag_upper: f64,
    pub erg_lower: f64,
    pub plc_ratio_threshold: f64,
    pub lar_zero_threshold: f64,
    pub ulc_fluct_tol: f64,
    /// Rise across the ULC window, relative to the window mean, that counts
    /// as an increasing loss.
    pub ulc_rise_fraction: f64,
    pub window_fraction: f64,
    pub early_stage_fraction: f64,
    pub late_stage_fraction: f64,
    pub min_epochs_before_diagnosis: u32,
    pub grad_magnitude: GradMagnitude,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        IndicatorConfig {
            agv_abs_bound: 1e4,
            eag_upper: 10.0,
            erg_lower: 0.1,
            plc_ratio_threshold: 1e-3,
            lar_zero_threshold: 0.9,
            ulc_fluct_tol: 0.10,
            ulc_rise_fraction: 0.01,
            window_fraction: 0.2,
            early_stage_fraction: 0.2,
            late_stage_fraction: 0.5,
            min_epochs_before_diagnosis: 2,
            grad_magnitude: GradMagnitude::Rms,
        }
    }
}

impl IndicatorConfig {
    /// A configuration under which no indicator can ever fire.
    pub fn never_fire() -> Self {
        IndicatorConfig {
            agv_abs_bound: f64::MAX,
            eag_upper: f64::MAX,
            erg_lower: f64::MIN_POSITIVE,
            plc_ratio_threshold: f64::MIN_POSITIVE,
            lar_zero_threshold: 1.0,
            ulc_fluct_tol: f64::MAX,
            ulc_rise_fraction: f64::MAX,
            // NMG has no threshold; a window as long as training keeps it silent.
            window_fraction: 1.0 - f64::EPSILON,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.agv_abs_bound > 0.0) {
            return fail("agv_abs_bound must be positive");
        }
        if !(self.erg_lower > 0.0 && self.erg_lower < 1.0 && 1.0 < self.eag_upper) {
            return fail("need 0 < erg_lower < 1 < eag_upper");
        }
        if !(self.plc_ratio_threshold > 0.0 && self.plc_ratio_threshold < 1.0) {
            return fail("plc_ratio_threshold must be in (0, 1)");
        }
        if !(self.lar_zero_threshold > 0.0 && self.lar_zero_threshold <= 1.0) {
            return fail("lar_zero_threshold must be in (0, 1]");
        }
        if !(self.ulc_fluct_tol > 0.0) {
            return fail("ulc_fluct_tol must be positive");
        }
        if !(self.ulc_rise_fraction >= 0.0) {
            return fail("ulc_rise_fraction must be nonnegative");
        }
        if !(self.window_fraction > 0.0 && self.window_fraction < 1.0) {
            return fail("window_fraction must be in (0, 1)");
        }
        if !(self.early_stage_fraction >= 0.0
            && self.early_stage_fraction <= self.late_stage_fraction
            && self.late_stage_fraction <= 1.0)
        {
            return fail("need 0 <= early_stage_fraction <= late_stage_fraction <= 1");
        }
        Ok(())
    }

    /// Parse a TOML or JSON document; every field is optional.
    pub fn from_str_auto(text: &str) -> Result<Self> {
        let cfg: IndicatorConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_auto(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Adaptive window used by ULC and NMG: `max(3, ceil(fraction * max_epoch))`.
    pub fn window(&self, max_epoch: u32) -> usize {
        ((self.window_fraction * max_epoch as f64).ceil() as usize).max(3)
    }

    /// First epoch that is no longer early.
    pub fn early_end(&self, max_epoch: u32) -> u32 {
        ((self.early_stage_fraction * max_epoch as f64).ceil() as u32).max(2)
    }

    /// First late-stage epoch.
    pub fn late_start(&self, max_epoch: u32) -> u32 {
        (self.late_stage_fraction * max_epoch as f64).floor() as u32
    }

    /// The single epoch at which PLC is evaluated: the last early one.
    pub fn plc_epoch(&self, max_epoch: u32) -> u32 {
        self.early_end(max_epoch) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Indicator {
    AGV,
    EAG,
    ERG,
    PLC,
    LAR,
    ULC,
    NMG,
}

impl Indicator {
    pub const ALL: [Indicator; 7] = [
        Indicator::AGV,
        Indicator::EAG,
        Indicator::PLC,
        Indicator::ERG,
        Indicator::LAR,
        Indicator::ULC,
        Indicator::NMG,
    ];

    /// Only NMG signals "trained enough" rather than a defect.
    pub fn is_benign(self) -> bool {
        self == Indicator::NMG
    }

    pub fn active_in(self, stage: Stage) -> bool {
        match self {
            Indicator::AGV | Indicator::LAR => true,
            Indicator::EAG | Indicator::ERG | Indicator::PLC => stage == Stage::Early,
            Indicator::ULC | Indicator::NMG => stage == Stage::Late,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Indicator::AGV => "AGV",
            Indicator::EAG => "EAG",
            Indicator::ERG => "ERG",
            Indicator::PLC => "PLC",
            Indicator::LAR => "LAR",
            Indicator::ULC => "ULC",
            Indicator::NMG => "NMG",
        }
    }

    pub fn parse(s: &str) -> Option<Indicator> {
        Indicator::ALL
            .into_iter()
            .find(|i| i.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Early,
    Mid,
    Late,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorVerdict {
    pub indicator: Indicator,
    pub positive: bool,
    pub benign: bool,
    pub epoch: u32,
    pub evidence: String,
}

impl IndicatorVerdict {
    fn new(indicator: Indicator, positive: bool, evidence: impl Into<String>) -> Self {
        IndicatorVerdict {
            indicator,
            positive,
            benign: indicator.is_benign(),
            epoch: 0,
            evidence: evidence.into(),
        }
    }

    fn at(mut self, epoch: u32) -> Self {
        self.epoch = epoch;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    TerminateBad,
    TerminateBenign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub trial_id: String,
    pub epoch: u32,
    pub stage: Stage,
    pub verdicts: Vec<IndicatorVerdict>,
    pub decision: Decision,
}

impl DiagnosisReport {
    pub fn positives(&self) -> impl Iterator<Item = Indicator> + '_ {
        self.verdicts.iter().filter(|v| v.positive).map(|v| v.indicator)
    }

    /// Comma-separated positive indicators, malign ones first.
    pub fn reason(&self) -> String {
        let mut pos: Vec<Indicator> = self.positives().collect();
        pos.sort_by_key(|i| (i.is_benign(), *i));
        pos.iter().map(|i| i.name()).collect::<Vec<_>>().join(",")
    }
}

/// Aggregate verdicts: any malign positive terminates as bad, otherwise a
/// benign positive terminates as benign.
pub fn decide(verdicts: &[IndicatorVerdict]) -> Decision {
    if verdicts.iter().any(|v| v.positive && !v.benign) {
        Decision::TerminateBad
    } else if verdicts.iter().any(|v| v.positive && v.benign) {
        Decision::TerminateBenign
    } else {
        Decision::Continue
    }
}

pub fn stage_of(epoch: u32, max_epoch: u32, cfg: &IndicatorConfig) -> Result<Stage> {
    if epoch >= max_epoch {
        return Err(Error::invalid(format!(
            "epoch {epoch} outside 0..{max_epoch}"
        )));
    }
    Ok(if epoch < cfg.early_end(max_epoch) {
        Stage::Early
    } else if epoch >= cfg.late_start(max_epoch) {
        Stage::Late
    } else {
        Stage::Mid
    })
}

pub fn agv_check<T: Scalar>(grads: &[StatVector<T>], cfg: &IndicatorConfig) -> Result<IndicatorVerdict> {
    if grads.is_empty() {
        return Err(Error::invalid("AGV needs at least one gradient layer"));
    }
    let bound = T::of(cfg.agv_abs_bound);
    for (i, s) in grads.iter().enumerate() {
        for (name, v) in [("avg", s.avg), ("min", s.min), ("max", s.max), ("median", s.median)] {
            if !v.is_finite() {
                return Ok(IndicatorVerdict::new(
                    Indicator::AGV,
                    true,
                    format!("layer {i}: gradient {name} = {v}"),
                ));
            }
        }
        let peak = s.max_abs();
        if peak > bound {
            return Ok(IndicatorVerdict::new(
                Indicator::AGV,
                true,
                format!("layer {i}: max |gradient| {peak:e} > {:e}", cfg.agv_abs_bound),
            ));
        }
    }
    Ok(IndicatorVerdict::new(Indicator::AGV, false, "gradients finite and bounded"))
}

/// One magnitude per layer, input-most first.
pub fn layer_grad_magnitudes<T: Scalar>(grads: &[StatVector<T>], proxy: GradMagnitude) -> Result<Vec<T>> {
    if grads.is_empty() {
        return Err(Error::invalid("no gradient layers"));
    }
    Ok(grads
        .iter()
        .map(|s| match proxy {
            GradMagnitude::Rms => s.rms(),
            GradMagnitude::AbsMedian => s.median.abs(),
        })
        .collect())
}

/// Ratios `m[k] / m[k+1]`, skipping zero denominators.
pub fn amplifications<T: Scalar>(magnitudes: &[T]) -> Vec<T> {
    magnitudes
        .windows(2)
        .filter(|w| w[1] != T::zero())
        .map(|w| w[0] / w[1])
        .collect()
}

fn median_amplification<T: Scalar>(magnitudes: &[T]) -> std::result::Result<T, &'static str> {
    if magnitudes.len() < 2 {
        return Err("insufficient layers");
    }
    let a = amplifications(magnitudes);
    if a.iter().any(|x| x.is_nan()) {
        return Err("non-finite gradient magnitudes");
    }
    median(&a).ok_or("no layer pair with nonzero denominator")
}

pub fn eag_check<T: Scalar>(magnitudes: &[T], cfg: &IndicatorConfig) -> IndicatorVerdict {
    match median_amplification(magnitudes) {
        Err(why) => IndicatorVerdict::new(Indicator::EAG, false, why),
        Ok(med) => {
            let positive = med > T::of(cfg.eag_upper);
            IndicatorVerdict::new(
                Indicator::EAG,
                positive,
                format!("median amplification {med:.4e} (upper bound {})", cfg.eag_upper),
            )
        }
    }
}

pub fn erg_check<T: Scalar>(magnitudes: &[T], cfg: &IndicatorConfig) -> IndicatorVerdict {
    match median_amplification(magnitudes) {
        Err(why) => IndicatorVerdict::new(Indicator::ERG, false, why),
        Ok(med) => {
            let positive = med < T::of(cfg.erg_lower);
            IndicatorVerdict::new(
                Indicator::ERG,
                positive,
                format!("median amplification {med:.4e} (lower bound {})", cfg.erg_lower),
            )
        }
    }
}

pub fn plc_check<T: Scalar>(losses: &[T], cfg: &IndicatorConfig) -> IndicatorVerdict {
    if losses.len() < 3 {
        return IndicatorVerdict::new(Indicator::PLC, false, "insufficient history");
    }
    let base = losses[0];
    if !base.is_finite() || base <= T::zero() {
        return IndicatorVerdict::new(Indicator::PLC, false, "undefined baseline");
    }
    let gaps: Vec<T> = losses.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mean_gap = gaps.iter().copied().sum::<T>() / T::of_usize(gaps.len());
    let ratio = mean_gap / base;
    IndicatorVerdict::new(
        Indicator::PLC,
        ratio < T::of(cfg.plc_ratio_threshold),
        format!("mean loss change / initial loss = {ratio:.4e} (threshold {})", cfg.plc_ratio_threshold),
    )
}

pub fn lar_check<T: Scalar>(acts: &[StatVector<T>], cfg: &IndicatorConfig) -> IndicatorVerdict {
    if acts.is_empty() {
        return IndicatorVerdict::new(Indicator::LAR, false, "no activation data");
    }
    let threshold = T::of(cfg.lar_zero_threshold);
    for (i, s) in acts.iter().enumerate() {
        if s.zero_ratio > threshold {
            return IndicatorVerdict::new(
                Indicator::LAR,
                true,
                format!("layer {i}: zero ratio {:.4} > {}", s.zero_ratio, cfg.lar_zero_threshold),
            );
        }
    }
    IndicatorVerdict::new(Indicator::LAR, false, "activation ratios within bound")
}

/// Least-squares line through `(i, y[i])`: returns (slope, intercept, rmse).
pub fn linear_fit<T: Scalar>(y: &[T]) -> (T, T, T) {
    let n = T::of_usize(y.len());
    let x_mean = (n - T::one()) / T::of(2.0);
    let y_mean = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (i, &v) in y.iter().enumerate() {
        let dx = T::of_usize(i) - x_mean;
        sxy = sxy + dx * (v - y_mean);
        sxx = sxx + dx * dx;
    }
    let slope = if sxx == T::zero() { T::zero() } else { sxy / sxx };
    let intercept = y_mean - slope * x_mean;
    let sse = y
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let r = v - (intercept + slope * T::of_usize(i));
            r * r
        })
        .sum::<T>();
    (slope, intercept, (sse / n).sqrt())
}

pub fn ulc_check<T: Scalar>(losses: &[T], max_epoch: u32, cfg: &IndicatorConfig) -> IndicatorVerdict {
    let w = cfg.window(max_epoch);
    if losses.len() < w {
        return IndicatorVerdict::new(Indicator::ULC, false, "insufficient history");
    }
    let window = &losses[losses.len() - w..];
    let mean = window.iter().copied().sum::<T>() / T::of_usize(w);
    if mean == T::zero() {
        return IndicatorVerdict::new(Indicator::ULC, false, "degenerate window");
    }
    let (slope, _, rmse) = linear_fit(window);
    let fluct = rmse / mean.abs();
    let rise = slope * T::of_usize(w - 1);
    let fluctuating = fluct > T::of(cfg.ulc_fluct_tol);
    let rising = slope > T::zero() && rise > T::of(cfg.ulc_rise_fraction) * mean.abs();
    IndicatorVerdict::new(
        Indicator::ULC,
        fluctuating || rising,
        format!(
            "window {w}: relative fluctuation {fluct:.4e} (tol {}), rise {rise:.4e}",
            cfg.ulc_fluct_tol
        ),
    )
}

fn min_of<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::nan(), |acc, &x| acc.min(x))
}

pub fn nmg_check<T: Scalar>(losses: &[T], max_epoch: u32, cfg: &IndicatorConfig) -> IndicatorVerdict {
    let w = cfg.window(max_epoch);
    if losses.len() < w + 1 {
        return IndicatorVerdict::new(Indicator::NMG, false, "insufficient history");
    }
    let window_min = min_of(&losses[losses.len() - w..]);
    let global_min = min_of(losses);
    IndicatorVerdict::new(
        Indicator::NMG,
        window_min > global_min,
        format!("window {w} minimum {window_min:.6} vs overall minimum {global_min:.6}"),
    )
}

/// How `diagnose` schedules the per-indicator checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    /// One scoped thread per indicator, joined in a fixed order.
    Threaded,
}

/// Evaluate every indicator active at `epoch`'s stage.
pub fn diagnose(trace: &TrialTrace, epoch: u32, cfg: &IndicatorConfig) -> Result<DiagnosisReport> {
    diagnose_subset(trace, epoch, cfg, &Indicator::ALL, Execution::Sequential)
}

/// Like [`diagnose`] but restricted to `only` (isolation replay) and with a
/// choice of execution strategy. Results do not depend on `exec`.
pub fn diagnose_subset(
    trace: &TrialTrace,
    epoch: u32,
    cfg: &IndicatorConfig,
    only: &[Indicator],
    exec: Execution,
) -> Result<DiagnosisReport> {
    let max_epoch = trace.meta.max_epoch;
    if epoch < cfg.min_epochs_before_diagnosis {
        return Err(Error::invalid(format!(
            "epoch {epoch} precedes min_epochs_before_diagnosis = {}",
            cfg.min_epochs_before_diagnosis
        )));
    }
    if trace.epochs.len() <= epoch as usize {
        return Err(Error::invariant(format!(
            "trace '{}' has no records for epoch {epoch}",
            trace.trial_id()
        )));
    }
    let stage = stage_of(epoch, max_epoch, cfg)?;
    let grads: Vec<StatVector<f64>> = trace.layers_at(epoch, VarKind::Grad).iter().map(|l| l.stats).collect();
    let acts: Vec<StatVector<f64>> = trace.layers_at(epoch, VarKind::Act).iter().map(|l| l.stats).collect();
    let losses = trace.train_losses(epoch);
    let ctx = CheckInput {
        grads: &grads,
        acts: &acts,
        losses: &losses,
        epoch,
        max_epoch,
        cfg,
    };

    let selected: Vec<Indicator> = Indicator::ALL
        .into_iter()
        .filter(|i| i.active_in(stage) && only.contains(i))
        .collect();
    let mut verdicts: Vec<IndicatorVerdict> = match exec {
        Execution::Sequential => selected.iter().map(|&i| ctx.run(i)).collect(),
        Execution::Threaded => std::thread::scope(|s| {
            let handles: Vec<_> = selected
                .iter()
                .map(|&i| {
                    let ctx = &ctx;
                    s.spawn(move || ctx.run(i))
                })
                .collect();
            handles
                .into_iter()
                .zip(&selected)
                .map(|(h, &i)| {
                    h.join().unwrap_or_else(|_| {
                        IndicatorVerdict::new(i, false, "indicator evaluation panicked")
                    })
                })
                .collect()
        }),
    };
    for v in &mut verdicts {
        v.epoch = epoch;
    }
    let decision = decide(&verdicts);
    Ok(DiagnosisReport {
        trial_id: trace.trial_id().to_string(),
        epoch,
        stage,
        verdicts,
        decision,
    })
}

struct CheckInput<'a> {
    grads: &'a [StatVector<f64>],
    acts: &'a [StatVector<f64>],
    losses: &'a [f64],
    epoch: u32,
    max_epoch: u32,
    cfg: &'a IndicatorConfig,
}

impl CheckInput<'_> {
    fn run(&self, indicator: Indicator) -> IndicatorVerdict {
        let cfg = self.cfg;
        let no_grads = || IndicatorVerdict::new(indicator, false, "no gradient data");
        let v = match indicator {
            Indicator::AGV => agv_check(self.grads, cfg).unwrap_or_else(|_| no_grads()),
            Indicator::EAG | Indicator::ERG => {
                match layer_grad_magnitudes(self.grads, cfg.grad_magnitude) {
                    Err(_) => no_grads(),
                    Ok(m) if indicator == Indicator::EAG => eag_check(&m, cfg),
                    Ok(m) => erg_check(&m, cfg),
                }
            }
            Indicator::PLC => {
                let at = cfg.plc_epoch(self.max_epoch);
                if self.epoch == at {
                    plc_check(self.losses, cfg)
                } else {
                    IndicatorVerdict::new(indicator, false, format!("evaluated at epoch {at} only"))
                }
            }
            Indicator::LAR => lar_check(self.acts, cfg),
            Indicator::ULC => ulc_check(self.losses, self.max_epoch, cfg),
            Indicator::NMG => nmg_check(self.losses, self.max_epoch, cfg),
        };
        v.at(self.epoch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> IndicatorConfig {
        IndicatorConfig::default()
    }

    fn grad(min: f64, max: f64) -> StatVector<f64> {
        StatVector::from_array([0.0, 0.01, 0.0, min, max, max / 2.0, min / 2.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn stages_with_defaults() {
        assert_eq!(stage_of(0, 20, &cfg()).unwrap(), Stage::Early);
        assert_eq!(stage_of(19, 20, &cfg()).unwrap(), Stage::Late);
        // ceil(0.2 * 20) = 4 <= 5 < floor(0.5 * 20) = 10
        assert_eq!(stage_of(5, 20, &cfg()).unwrap(), Stage::Mid);
        assert_eq!(stage_of(3, 20, &cfg()).unwrap(), Stage::Early);
        assert_eq!(stage_of(4, 20, &cfg()).unwrap(), Stage::Mid);
        assert_eq!(stage_of(10, 20, &cfg()).unwrap(), Stage::Late);
        assert!(matches!(stage_of(20, 20, &cfg()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn early_floor_is_two_epochs() {
        assert_eq!(cfg().early_end(5), 2);
        assert_eq!(stage_of(1, 5, &cfg()).unwrap(), Stage::Early);
    }

    #[test]
    fn agv_cases() {
        let mut s = grad(-0.5, 0.5);
        assert!(!agv_check(&[s, s], &cfg()).unwrap().positive);
        s.max = f64::NAN;
        let v = agv_check(&[grad(-0.5, 0.5), s], &cfg()).unwrap();
        assert!(v.positive);
        assert!(v.evidence.contains("layer 1"), "{}", v.evidence);
        assert!(agv_check(&[grad(-1e9, 0.1)], &cfg()).unwrap().positive);
        assert!(agv_check::<f64>(&[], &cfg()).is_err());
    }

    #[test]
    fn magnitudes_abs_median() {
        let mut a = grad(-1.0, 1.0);
        a.median = -0.5;
        let mut b = grad(-1.0, 1.0);
        b.median = 0.25;
        assert_eq!(layer_grad_magnitudes(&[a, b], GradMagnitude::AbsMedian).unwrap(), vec![0.5, 0.25]);
        assert_eq!(layer_grad_magnitudes(&[a], GradMagnitude::AbsMedian).unwrap(), vec![0.5]);
        let z = grad(0.0, 0.0);
        assert_eq!(layer_grad_magnitudes(&[z, z], GradMagnitude::AbsMedian).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn magnitudes_rms() {
        let s = StatVector::from_array([3.0, 16.0, 0.0, -1.0, 9.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(layer_grad_magnitudes(&[s], GradMagnitude::Rms).unwrap(), vec![5.0]);
    }

    #[test]
    fn eag_cases() {
        let v = eag_check(&[8.0, 0.4, 0.02, 0.001], &cfg());
        assert!(v.positive, "{}", v.evidence);
        assert!(!eag_check(&[1.0, 1.0, 1.0], &cfg()).positive);
        let v = eag_check(&[1.0, 0.0], &cfg());
        assert!(!v.positive);
        let v = eag_check(&[1.0], &cfg());
        assert!(!v.positive);
        assert_eq!(v.evidence, "insufficient layers");
    }

    #[test]
    fn erg_cases() {
        assert!(erg_check(&[0.001, 0.02, 0.4, 8.0], &cfg()).positive);
        assert!(!erg_check(&[1.0, 1.0, 1.0], &cfg()).positive);
        assert!(!erg_check(&[2.0, 1.0], &cfg()).positive);
    }

    #[test]
    fn plc_cases() {
        let v = plc_check(&[2.0, 1.999, 1.9985, 1.998], &cfg());
        assert!(v.positive, "{}", v.evidence);
        assert!(!plc_check(&[2.0, 1.5, 1.2], &cfg()).positive);
        let v = plc_check(&[0.0, 0.0, 0.0], &cfg());
        assert!(!v.positive);
        assert_eq!(v.evidence, "undefined baseline");
        assert!(!plc_check(&[f64::NAN, 1.0, 1.0], &cfg()).positive);
    }

    #[test]
    fn lar_cases() {
        let with = |z: &[f64]| -> Vec<StatVector<f64>> {
            z.iter()
                .map(|&r| StatVector { zero_ratio: r, ..StatVector::default() })
                .collect()
        };
        let v = lar_check(&with(&[0.1, 0.95, 0.2]), &cfg());
        assert!(v.positive);
        assert!(v.evidence.contains("layer 1"));
        assert!(!lar_check(&with(&[0.0, 0.0]), &cfg()).positive);
        assert!(!lar_check(&with(&[0.9]), &cfg()).positive);
        let v = lar_check::<f64>(&[], &cfg());
        assert!(!v.positive);
        assert_eq!(v.evidence, "no activation data");
    }

    // max_epoch 25 gives window max(3, ceil(0.2 * 25)) = 5
    #[test]
    fn ulc_cases() {
        assert_eq!(cfg().window(25), 5);
        assert!(!ulc_check(&[0.4; 5], 25, &cfg()).positive);
        assert!(ulc_check(&[0.50, 0.52, 0.55, 0.58, 0.62], 25, &cfg()).positive);
        assert!(!ulc_check(&[0.50, 0.45, 0.41, 0.38, 0.36], 25, &cfg()).positive);
        let v = ulc_check(&[0.0; 5], 25, &cfg());
        assert_eq!(v.evidence, "degenerate window");
        assert!(ulc_check(&[1.0, 0.2, 1.0, 0.2, 1.0], 25, &cfg()).positive);
    }

    // max_epoch 15 gives window 3
    #[test]
    fn nmg_cases() {
        assert_eq!(cfg().window(15), 3);
        let v = nmg_check(&[1.0, 0.5, 0.4, 0.45, 0.46, 0.47], 15, &cfg());
        assert!(v.positive && v.benign);
        assert!(!nmg_check(&[1.0, 0.5, 0.45, 0.44, 0.43], 15, &cfg()).positive);
        assert!(!nmg_check(&[1.0, 0.4, 0.5, 0.4, 0.6], 15, &cfg()).positive);
    }

    #[test]
    fn decision_rules() {
        let pos = |i: Indicator| IndicatorVerdict::new(i, true, "");
        let neg = |i: Indicator| IndicatorVerdict::new(i, false, "");
        assert_eq!(decide(&[neg(Indicator::AGV)]), Decision::Continue);
        assert_eq!(decide(&[neg(Indicator::AGV), pos(Indicator::NMG)]), Decision::TerminateBenign);
        assert_eq!(decide(&[pos(Indicator::ULC), pos(Indicator::NMG)]), Decision::TerminateBad);
    }

    #[test]
    fn config_from_partial_toml_and_json() {
        let c = IndicatorConfig::from_str_auto("eag_upper = 50.0\n").unwrap();
        assert_eq!(c.eag_upper, 50.0);
        assert_eq!(c.erg_lower, 0.1);
        let c = IndicatorConfig::from_str_auto(r#"{"lar_zero_threshold": 0.8, "grad_magnitude": "abs_median"}"#).unwrap();
        assert_eq!(c.lar_zero_threshold, 0.8);
        assert_eq!(c.grad_magnitude, GradMagnitude::AbsMedian);
        assert!(IndicatorConfig::from_str_auto("erg_lower = 2.0").is_err());
        assert!(IndicatorConfig::from_str_auto("no_such_field = 1").is_err());
    }
}
