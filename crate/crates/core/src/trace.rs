//! Trial trace data model and the line-delimited JSON trace format.
//!
//! A trace file holds one JSON object per line. Records are written as
//! `meta`, then for each epoch its `epoch` line followed by that epoch's
//! `layer` lines (grad, weight, act; ascending layer index), then an
//! optional `final` line. Non-finite numbers are written as the strings
//! `"NaN"`, `"Infinity"` and `"-Infinity"`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::HpConfig;
use crate::stats::{StatVector, STAT_COUNT};

/// File name suffix of per-trial trace files.
pub const TRACE_SUFFIX: &str = ".trace.jsonl";

pub fn trace_file_name(trial_id: &str) -> String {
    format!("{trial_id}{TRACE_SUFFIX}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Grad,
    Weight,
    Act,
}

impl VarKind {
    pub const ALL: [VarKind; 3] = [VarKind::Grad, VarKind::Weight, VarKind::Act];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricMode {
    Maximize,
    Minimize,
}

impl MetricMode {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            MetricMode::Maximize => a > b,
            MetricMode::Minimize => a < b,
        }
    }

    /// Best of the finite values, NaN when there are none.
    pub fn best(self, values: impl IntoIterator<Item = f64>) -> f64 {
        values.into_iter().fold(f64::NAN, |acc, v| match self {
            MetricMode::Maximize => acc.max(v),
            MetricMode::Minimize => acc.min(v),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalStatus {
    Completed,
    Terminated,
    Failed,
}

impl fmt::Display for FinalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinalStatus::Completed => "completed",
            FinalStatus::Terminated => "terminated",
            FinalStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub trial_id: String,
    pub epoch: u32,
    /// 0 is the input-most trainable layer.
    pub layer_index: u32,
    pub layer_name: String,
    pub var_kind: VarKind,
    pub stats: StatVector<f64>,
}

impl LayerRecord {
    fn sort_key(&self) -> (u32, VarKind, u32) {
        (self.epoch, self.var_kind, self.layer_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub trial_id: String,
    pub epoch: u32,
    pub train_loss: f64,
    pub val_metric: f64,
    pub metric_mode: MetricMode,
    /// Cumulative wall-clock milliseconds at the end of the epoch.
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub trial_id: String,
    pub config: HpConfig,
    pub max_epoch: u32,
    pub created_unix_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFinal {
    pub status: FinalStatus,
    pub reason: String,
    pub best_val_metric: f64,
    pub epochs_run: u32,
}

/// The complete (or, while a trial is live, partial) record of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub meta: TraceMeta,
    pub epochs: Vec<EpochRecord>,
    /// Kept sorted by (epoch, var kind, layer index).
    pub layers: Vec<LayerRecord>,
    pub final_record: Option<TraceFinal>,
}

impl TrialTrace {
    pub fn new(meta: TraceMeta) -> Self {
        TrialTrace {
            meta,
            epochs: Vec::new(),
            layers: Vec::new(),
            final_record: None,
        }
    }

    pub fn trial_id(&self) -> &str {
        &self.meta.trial_id
    }

    /// Append one epoch and its layer records, keeping layer order canonical.
    pub fn push_epoch(&mut self, epoch: EpochRecord, mut layers: Vec<LayerRecord>) {
        layers.sort_by_key(LayerRecord::sort_key);
        self.epochs.push(epoch);
        self.layers.extend(layers);
    }

    /// Layer records of one kind at one epoch, ordered by layer index.
    pub fn layers_at(&self, epoch: u32, kind: VarKind) -> &[LayerRecord] {
        let lo = self
            .layers
            .partition_point(|l| (l.epoch, l.var_kind) < (epoch, kind));
        let hi = self
            .layers
            .partition_point(|l| (l.epoch, l.var_kind) <= (epoch, kind));
        &self.layers[lo..hi]
    }

    pub fn train_losses(&self, through_epoch: u32) -> Vec<f64> {
        self.epochs
            .iter()
            .take(through_epoch as usize + 1)
            .map(|e| e.train_loss)
            .collect()
    }

    pub fn metric_mode(&self) -> MetricMode {
        self.epochs
            .first()
            .map(|e| e.metric_mode)
            .unwrap_or(MetricMode::Maximize)
    }

    pub fn best_val_metric(&self) -> f64 {
        self.metric_mode().best(self.epochs.iter().map(|e| e.val_metric))
    }

    pub fn last_val_metric(&self) -> f64 {
        self.epochs.last().map(|e| e.val_metric).unwrap_or(f64::NAN)
    }

    /// Copy of the trace restricted to epochs `0..=epoch`, without a final record.
    pub fn prefix(&self, epoch: u32) -> TrialTrace {
        let n = (epoch as usize + 1).min(self.epochs.len());
        TrialTrace {
            meta: self.meta.clone(),
            epochs: self.epochs[..n].to_vec(),
            layers: self
                .layers
                .iter()
                .filter(|l| l.epoch <= epoch)
                .cloned()
                .collect(),
            final_record: None,
        }
    }

    /// Check the trace invariants.
    pub fn validate(&self) -> Result<()> {
        let id = &self.meta.trial_id;
        if self.meta.max_epoch == 0 {
            return Err(Error::invalid("max_epoch must be positive"));
        }
        if self.epochs.len() > self.meta.max_epoch as usize {
            return Err(Error::invariant(format!(
                "{} epochs recorded but max_epoch is {}",
                self.epochs.len(),
                self.meta.max_epoch
            )));
        }
        let mut last_wall = 0;
        for (i, e) in self.epochs.iter().enumerate() {
            if &e.trial_id != id {
                return Err(Error::invariant(format!("epoch record for foreign trial '{}'", e.trial_id)));
            }
            if e.epoch as usize != i {
                return Err(Error::invariant(format!(
                    "epoch gap: expected epoch {i}, found {}",
                    e.epoch
                )));
            }
            if e.wall_ms < last_wall {
                return Err(Error::invariant(format!("wall_ms decreases at epoch {i}")));
            }
            if e.metric_mode != self.epochs[0].metric_mode {
                return Err(Error::invariant(format!("metric_mode changes at epoch {i}")));
            }
            last_wall = e.wall_ms;
        }
        for w in self.layers.windows(2) {
            if w[0].sort_key() >= w[1].sort_key() {
                return Err(Error::invariant(format!(
                    "layer records out of order or duplicated at epoch {} ({:?} layer {})",
                    w[1].epoch, w[1].var_kind, w[1].layer_index
                )));
            }
        }
        for l in &self.layers {
            if &l.trial_id != id {
                return Err(Error::invariant(format!("layer record for foreign trial '{}'", l.trial_id)));
            }
            if l.epoch as usize >= self.epochs.len() {
                return Err(Error::invariant(format!(
                    "layer record for epoch {} without an epoch record",
                    l.epoch
                )));
            }
        }
        if let Some(f) = &self.final_record {
            if f.epochs_run as usize != self.epochs.len() {
                return Err(Error::invariant(format!(
                    "final.epochs_run = {} but {} epochs recorded",
                    f.epochs_run,
                    self.epochs.len()
                )));
            }
            let best = self.best_val_metric();
            let same = f.best_val_metric == best || (f.best_val_metric.is_nan() && best.is_nan());
            if !same {
                return Err(Error::invariant(format!(
                    "final.best_val_metric = {} but the best recorded val_metric is {best}",
                    f.best_val_metric
                )));
            }
        }
        Ok(())
    }
}

/// `f64` that survives JSON even when non-finite.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Num(f64);

/// `#[serde(with = ...)]` adapter giving plain `f64` fields the trace
/// encoding of non-finite values.
pub(crate) mod json_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Num;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        Num(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Num::deserialize(d)?.0)
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_nan() {
            s.serialize_str("NaN")
        } else if v == f64::INFINITY {
            s.serialize_str("Infinity")
        } else if v == f64::NEG_INFINITY {
            s.serialize_str("-Infinity")
        } else {
            s.serialize_f64(v)
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct NumVisitor;
        impl Visitor<'_> for NumVisitor {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or one of \"NaN\", \"Infinity\", \"-Infinity\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Num, E> {
                Ok(Num(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Num, E> {
                match v {
                    "NaN" => Ok(Num(f64::NAN)),
                    "Infinity" => Ok(Num(f64::INFINITY)),
                    "-Infinity" => Ok(Num(f64::NEG_INFINITY)),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(NumVisitor)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Line {
    Meta {
        trial_id: String,
        config: HpConfig,
        max_epoch: u32,
        created_unix_ms: u64,
    },
    Epoch {
        trial_id: String,
        epoch: u32,
        train_loss: Num,
        val_metric: Num,
        metric_mode: MetricMode,
        wall_ms: u64,
    },
    Layer {
        trial_id: String,
        epoch: u32,
        layer_index: u32,
        layer_name: String,
        var: VarKind,
        stats: [Num; STAT_COUNT],
    },
    Final {
        trial_id: String,
        status: FinalStatus,
        reason: String,
        best_val_metric: Num,
        epochs_run: u32,
    },
}

impl From<&TraceMeta> for Line {
    fn from(m: &TraceMeta) -> Self {
        Line::Meta {
            trial_id: m.trial_id.clone(),
            config: m.config.clone(),
            max_epoch: m.max_epoch,
            created_unix_ms: m.created_unix_ms,
        }
    }
}

impl From<&EpochRecord> for Line {
    fn from(e: &EpochRecord) -> Self {
        Line::Epoch {
            trial_id: e.trial_id.clone(),
            epoch: e.epoch,
            train_loss: Num(e.train_loss),
            val_metric: Num(e.val_metric),
            metric_mode: e.metric_mode,
            wall_ms: e.wall_ms,
        }
    }
}

impl From<&LayerRecord> for Line {
    fn from(l: &LayerRecord) -> Self {
        Line::Layer {
            trial_id: l.trial_id.clone(),
            epoch: l.epoch,
            layer_index: l.layer_index,
            layer_name: l.layer_name.clone(),
            var: l.var_kind,
            stats: l.stats.to_array().map(Num),
        }
    }
}

fn final_line(trial_id: &str, f: &TraceFinal) -> Line {
    Line::Final {
        trial_id: trial_id.to_string(),
        status: f.status,
        reason: f.reason.clone(),
        best_val_metric: Num(f.best_val_metric),
        epochs_run: f.epochs_run,
    }
}

/// Incremental single-writer for one trace stream.
pub struct TraceWriter<W: Write> {
    sink: W,
    trial_id: String,
    bytes: u64,
}

impl<W: Write> TraceWriter<W> {
    /// Start a trace by writing its meta line.
    pub fn create(mut sink: W, meta: &TraceMeta) -> Result<Self> {
        let bytes = write_line(&mut sink, &Line::from(meta))?;
        Ok(TraceWriter {
            sink,
            trial_id: meta.trial_id.clone(),
            bytes,
        })
    }

    /// Write one epoch line and its layer lines. `layers` must already be in
    /// canonical order.
    pub fn append_epoch(&mut self, epoch: &EpochRecord, layers: &[LayerRecord]) -> Result<()> {
        self.bytes += write_line(&mut self.sink, &Line::from(epoch))?;
        for l in layers {
            self.bytes += write_line(&mut self.sink, &Line::from(l))?;
        }
        Ok(())
    }

    pub fn finish(&mut self, f: &TraceFinal) -> Result<()> {
        self.bytes += write_line(&mut self.sink, &final_line(&self.trial_id, f))?;
        self.sink.flush()?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.sink.flush()?;
        Ok(())
    }

    pub fn bytes_written(&self) -> u64 {
        self.bytes
    }

    pub fn into_inner(self) -> W {
        self.sink
    }
}

fn write_line<W: Write>(sink: &mut W, line: &Line) -> Result<u64> {
    let mut buf = serde_json::to_vec(line).map_err(|e| Error::invalid(e.to_string()))?;
    buf.push(b'\n');
    sink.write_all(&buf)?;
    Ok(buf.len() as u64)
}

/// Serialize a whole trace; returns the number of bytes written.
pub fn write_trace<W: Write>(trace: &TrialTrace, sink: W) -> Result<u64> {
    trace.validate().map_err(|e| match e {
        Error::InvariantViolation(m) => Error::InvalidInput(m),
        other => other,
    })?;
    let mut w = TraceWriter::create(sink, &trace.meta)?;
    let mut rest = trace.layers.as_slice();
    for e in &trace.epochs {
        let n = rest.partition_point(|l| l.epoch <= e.epoch);
        w.append_epoch(e, &rest[..n])?;
        rest = &rest[n..];
    }
    if let Some(f) = &trace.final_record {
        w.finish(f)?;
    } else {
        w.flush()?;
    }
    Ok(w.bytes_written())
}

pub fn trace_to_bytes(trace: &TrialTrace) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf)?;
    Ok(buf)
}

/// Result of reading a (possibly still growing) trace stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutcome {
    pub trace: TrialTrace,
    /// Byte offset just past the last complete line; resume tailing here.
    pub resume_offset: u64,
    /// True when a partial last line was ignored.
    pub truncated: bool,
}

/// Parse a trace stream. Records may arrive in any order within an epoch; an
/// unterminated last line is ignored and reported through `resume_offset`.
pub fn read_trace<R: Read>(mut source: R) -> Result<ReadOutcome> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    parse_trace_bytes(&bytes)
}

pub fn read_trace_file(path: &Path) -> Result<ReadOutcome> {
    let bytes = std::fs::read(path)?;
    parse_trace_bytes(&bytes)
}

fn parse_trace_bytes(bytes: &[u8]) -> Result<ReadOutcome> {
    let complete_len = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
    let truncated = complete_len < bytes.len();

    let mut meta: Option<TraceMeta> = None;
    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut layers: Vec<LayerRecord> = Vec::new();
    let mut final_record: Option<TraceFinal> = None;

    for (idx, raw) in bytes[..complete_len].split(|b| *b == b'\n').enumerate() {
        let line_no = idx + 1;
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let text = std::str::from_utf8(raw).map_err(|e| parse_err(e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        match line {
            Line::Meta {
                trial_id,
                config,
                max_epoch,
                created_unix_ms,
            } => {
                if meta.is_some() {
                    return Err(parse_err("duplicate meta record".into()));
                }
                meta = Some(TraceMeta {
                    trial_id,
                    config,
                    max_epoch,
                    created_unix_ms,
                });
            }
            Line::Epoch {
                trial_id,
                epoch,
                train_loss,
                val_metric,
                metric_mode,
                wall_ms,
            } => epochs.push(EpochRecord {
                trial_id,
                epoch,
                train_loss: train_loss.0,
                val_metric: val_metric.0,
                metric_mode,
                wall_ms,
            }),
            Line::Layer {
                trial_id,
                epoch,
                layer_index,
                layer_name,
                var,
                stats,
            } => layers.push(LayerRecord {
                trial_id,
                epoch,
                layer_index,
                layer_name,
                var_kind: var,
                stats: StatVector::from_array(stats.map(|n| n.0)),
            }),
            Line::Final {
                trial_id,
                status,
                reason,
                best_val_metric,
                epochs_run,
            } => {
                if final_record.is_some() {
                    return Err(parse_err("duplicate final record".into()));
                }
                if meta.as_ref().is_some_and(|m| m.trial_id != trial_id) {
                    return Err(parse_err(format!("final record for foreign trial '{trial_id}'")));
                }
                final_record = Some(TraceFinal {
                    status,
                    reason,
                    best_val_metric: best_val_metric.0,
                    epochs_run,
                });
            }
        }
    }

    let meta = meta.ok_or_else(|| Error::Parse {
        line: 1,
        message: "trace has no meta record".into(),
    })?;
    epochs.sort_by_key(|e| e.epoch);
    layers.sort_by_key(LayerRecord::sort_key);
    let trace = TrialTrace {
        meta,
        epochs,
        layers,
        final_record,
    };
    trace.validate()?;
    Ok(ReadOutcome {
        trace,
        resume_offset: complete_len as u64,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::HpValue;

    fn sv(x: f64) -> StatVector<f64> {
        StatVector::from_array([x, 0.0, x, x, x, x, x, 0.0, 0.0, 0.0])
    }

    fn sample_trace(n_epochs: u32) -> TrialTrace {
        let mut t = TrialTrace::new(TraceMeta {
            trial_id: "t1".into(),
            config: HpConfig::new().with("lr", HpValue::Float(0.1)),
            max_epoch: 10,
            created_unix_ms: 1234,
        });
        for e in 0..n_epochs {
            let layers = VarKind::ALL
                .iter()
                .flat_map(|&k| {
                    (0..2).map(move |i| LayerRecord {
                        trial_id: "t1".into(),
                        epoch: e,
                        layer_index: i,
                        layer_name: format!("dense{i}"),
                        var_kind: k,
                        stats: sv(e as f64 + i as f64),
                    })
                })
                .collect();
            t.push_epoch(
                EpochRecord {
                    trial_id: "t1".into(),
                    epoch: e,
                    train_loss: 1.0 / (e + 1) as f64,
                    val_metric: 0.5 + 0.01 * e as f64,
                    metric_mode: MetricMode::Maximize,
                    wall_ms: 10 * (e as u64 + 1),
                },
                layers,
            );
        }
        t
    }

    #[test]
    fn meta_only_is_one_line() {
        let bytes = trace_to_bytes(&sample_trace(0)).unwrap();
        assert_eq!(bytes.iter().filter(|b| **b == b'\n').count(), 1);
        assert!(bytes.starts_with(br#"{"kind":"meta","trial_id":"t1","config":{"lr":0.1},"max_epoch":10,"created_unix_ms":1234}"#));
    }

    #[test]
    fn round_trip_and_determinism() {
        let mut t = sample_trace(3);
        t.final_record = Some(TraceFinal {
            status: FinalStatus::Completed,
            reason: String::new(),
            best_val_metric: t.best_val_metric(),
            epochs_run: 3,
        });
        let a = trace_to_bytes(&t).unwrap();
        let b = trace_to_bytes(&t).unwrap();
        assert_eq!(a, b);
        let back = read_trace(a.as_slice()).unwrap();
        assert_eq!(back.trace, t);
        assert!(!back.truncated);
        assert_eq!(back.resume_offset, a.len() as u64);
    }

    #[test]
    fn shuffled_lines_within_epoch_are_accepted() {
        let t = sample_trace(2);
        let bytes = trace_to_bytes(&t).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1..].reverse();
        let joined = lines.join("\n") + "\n";
        assert_eq!(read_trace(joined.as_bytes()).unwrap().trace, t);
    }

    #[test]
    fn truncated_tail_is_ignored() {
        let t = sample_trace(2);
        let bytes = trace_to_bytes(&t).unwrap();
        let cut = bytes.len() - 5;
        let out = read_trace(&bytes[..cut]).unwrap();
        assert!(out.truncated);
        let last_nl = bytes[..cut].iter().rposition(|b| *b == b'\n').unwrap() + 1;
        assert_eq!(out.resume_offset, last_nl as u64);
        // the last act layer of epoch 1 is lost, the rest survives
        assert_eq!(out.trace.epochs.len(), 2);
        assert_eq!(out.trace.layers.len(), t.layers.len() - 1);
    }

    #[test]
    fn unknown_kind_names_the_line() {
        let t = sample_trace(1);
        let mut bytes = trace_to_bytes(&t).unwrap();
        bytes.extend_from_slice(b"{\"kind\":\"bogus\",\"trial_id\":\"t1\"}\n");
        let lines = bytes.iter().filter(|b| **b == b'\n').count();
        match read_trace(bytes.as_slice()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, lines);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let input = b"{\"kind\":\"meta\",\"trial_id\":\"a\",\"config\":{},\"max_epoch\":3,\"created_unix_ms\":0}\n{not json\n";
        assert!(matches!(read_trace(&input[..]), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn epoch_gap_is_an_invariant_violation() {
        let t = sample_trace(3);
        let text = String::from_utf8(trace_to_bytes(&t).unwrap()).unwrap();
        let kept: Vec<&str> = text
            .lines()
            .filter(|l| !(l.contains("\"epoch\":1,") ))
            .collect();
        let joined = kept.join("\n") + "\n";
        assert!(matches!(
            read_trace(joined.as_bytes()),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn non_finite_numbers_use_strings() {
        let mut t = sample_trace(1);
        t.layers[0].stats.max = f64::NAN;
        t.layers[1].stats.max = f64::INFINITY;
        t.layers[2].stats.min = f64::NEG_INFINITY;
        let bytes = trace_to_bytes(&t).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("\"NaN\"") && text.contains("\"Infinity\"") && text.contains("\"-Infinity\""));
        let back = read_trace(bytes.as_slice()).unwrap().trace;
        assert!(back.layers[0].stats.max.is_nan());
        assert_eq!(trace_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn write_rejects_invalid_trace() {
        let mut t = sample_trace(2);
        t.epochs[1].epoch = 5;
        assert!(matches!(trace_to_bytes(&t), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn layers_at_selects_group() {
        let t = sample_trace(3);
        let g = t.layers_at(1, VarKind::Weight);
        assert_eq!(g.len(), 2);
        assert!(g.iter().all(|l| l.epoch == 1 && l.var_kind == VarKind::Weight));
        assert_eq!(g[0].layer_index, 0);
        assert!(t.layers_at(7, VarKind::Grad).is_empty());
    }
}
