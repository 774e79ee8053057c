use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use diaghpo::indicators::{Decision, Indicator, IndicatorConfig};
use diaghpo::runner::record_trial;
use diaghpo::scheduler::{run_experiment, Budget, ExperimentConfig, Policy};
use diaghpo::simulator::{
    calibrate, calibrate_traces, load_traces, replay, replay_traces, Outcome, ReplayMode, ReplayReport,
};
use diaghpo::toytrainer::{config_from_spec, healthy_spec, pathology_recipes, toy_space, ToyRunner};
use diaghpo::trace::{trace_file_name, write_trace, TrialTrace};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn write_all(dir: &Path, traces: &[TrialTrace]) {
    for t in traces {
        let f = fs::File::create(dir.join(trace_file_name(t.trial_id()))).unwrap();
        write_trace(t, f).unwrap();
    }
}

/// Malign recipes labeled bad, healthy-band runs good. The converged
/// recipe is neither and stays unlabeled.
fn recipe_corpus(seeds: u64) -> (Vec<TrialTrace>, BTreeMap<String, Outcome>) {
    let runner = ToyRunner::standard();
    let mut traces = Vec::new();
    let mut labels = BTreeMap::new();
    for r in pathology_recipes() {
        let cfg = config_from_spec(&r.spec);
        for s in 0..seeds {
            let id = format!("{}-{s}", r.name);
            traces.push(record_trial(&runner, &id, &cfg, s, None).unwrap());
            if r.expected.iter().any(|i| !i.is_benign()) {
                labels.insert(id, Outcome::Bad);
            }
        }
    }
    let healthy = config_from_spec(&healthy_spec());
    for s in 0..seeds * 2 {
        let id = format!("healthy-{s}");
        traces.push(record_trial(&runner, &id, &healthy, 100 + s, None).unwrap());
        labels.insert(id, Outcome::Good);
    }
    (traces, labels)
}

fn sampled(n: u64, seed: u64) -> Vec<TrialTrace> {
    let runner = ToyRunner::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| record_trial(&runner, &format!("s{i:03}"), &toy_space().sample(&mut rng), i, None).unwrap())
        .collect()
}

fn check_totals(r: &ReplayReport) {
    let epochs: u64 = r
        .flagged()
        .map(|t| (t.epochs_run - (t.first_positive_epoch.unwrap() + 1)) as u64)
        .sum();
    assert_eq!(r.estimated_epochs_saved, epochs);
    assert_eq!(r.estimated_wall_saved_ms, r.trials.iter().map(|t| t.wall_saved_ms).sum::<u64>());
    assert_eq!(r.claimed.len(), Indicator::ALL.len());
}

#[test]
fn empty_directory_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let r = replay(dir.path(), &IndicatorConfig::default(), ReplayMode::Combined).unwrap();
    assert!(r.trials.is_empty() && r.warnings.is_empty());
    assert_eq!((r.estimated_epochs_saved, r.estimated_wall_saved_ms), (0, 0));
    assert!(r.claimed.values().all(|&c| c == 0));
}

#[test]
fn live_checker_and_replay_flag_the_same_triples() {
    let runner = ToyRunner::standard();
    let dir = tempfile::tempdir().unwrap();
    let mut none = ExperimentConfig::new(toy_space(), Policy::None, Budget::Trials(24), 77);
    none.out_dir = Some(dir.path().to_path_buf());
    run_experiment(none, &runner).unwrap();
    let live = run_experiment(ExperimentConfig::new(toy_space(), Policy::Bttackler, Budget::Trials(24), 77), &runner).unwrap();

    let r = replay(dir.path(), &live.indicator_config, ReplayMode::Combined).unwrap();
    assert!(r.warnings.is_empty());
    assert_eq!(r.trials.len(), 24);
    let replayed: BTreeSet<(String, u32, Indicator)> = r
        .flagged()
        .flat_map(|t| {
            t.triggering_indicators
                .iter()
                .map(move |&i| (t.trial_id.clone(), t.first_positive_epoch.unwrap(), i))
        })
        .collect();
    let triples = live.positive_triples();
    assert!(!triples.is_empty());
    assert_eq!(triples, replayed);
}

#[test]
fn replay_is_deterministic_and_order_independent() {
    let mut traces = sampled(16, 3);
    let cfg = IndicatorConfig::default();
    for mode in [ReplayMode::Combined, ReplayMode::PerIndicator] {
        let a = replay_traces(&traces, &cfg, mode).unwrap();
        traces.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let b = replay_traces(&traces, &cfg, mode).unwrap();
        assert_eq!(a, b);
        check_totals(&a);
    }
}

#[test]
fn isolation_sees_at_least_as_much() {
    let traces = sampled(24, 5);
    let cfg = IndicatorConfig::default();
    let combined = replay_traces(&traces, &cfg, ReplayMode::Combined).unwrap();
    let isolated = replay_traces(&traces, &cfg, ReplayMode::PerIndicator).unwrap();
    for i in Indicator::ALL {
        assert!(isolated.claimed[&i] >= combined.claimed[&i], "{i}");
    }
    for (c, p) in combined.trials.iter().zip(&isolated.trials) {
        assert_eq!(c.first_positive_epoch, p.first_positive_epoch);
        assert_eq!(c.epochs_saved, p.epochs_saved);
        assert_eq!(c.decision, p.decision);
        for i in &c.triggering_indicators {
            assert!(p.triggering_indicators.contains(i));
            assert_eq!(p.first_epoch_by_indicator[i], c.first_positive_epoch.unwrap());
        }
    }
    check_totals(&isolated);
}

#[test]
fn recipes_are_attributed_to_their_indicator() {
    let (traces, _) = recipe_corpus(2);
    let r = replay_traces(&traces, &IndicatorConfig::default(), ReplayMode::PerIndicator).unwrap();
    for recipe in pathology_recipes() {
        for s in 0..2 {
            let t = r.trial(&format!("{}-{s}", recipe.name)).unwrap();
            assert!(
                recipe.expected.iter().any(|i| t.triggering_indicators.contains(i)),
                "{}: {:?}",
                t.trial_id,
                t.triggering_indicators
            );
        }
    }
    let table = r.table("recipes");
    assert!(table.lines().next().unwrap().contains("ERG"));
    assert!(table.lines().nth(1).unwrap().starts_with("recipes"));
}

#[test]
fn unreadable_traces_become_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let traces = sampled(3, 1);
    write_all(dir.path(), &traces);
    fs::write(dir.path().join("broken.trace.jsonl"), "{\"kind\":\"meta\"\n").unwrap();
    let mut unfinished = traces[0].clone();
    unfinished.meta.trial_id = "unfinished".into();
    for e in &mut unfinished.epochs {
        e.trial_id = "unfinished".into();
    }
    for l in &mut unfinished.layers {
        l.trial_id = "unfinished".into();
    }
    unfinished.final_record = None;
    write_all(dir.path(), &[unfinished]);
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let r = replay(dir.path(), &IndicatorConfig::default(), ReplayMode::Combined).unwrap();
    assert_eq!(r.trials.len(), 3);
    let files: Vec<&str> = r.warnings.iter().map(|w| w.file.as_str()).collect();
    assert_eq!(files, ["broken.trace.jsonl", "unfinished.trace.jsonl"]);
}

#[test]
fn experiment_directories_resolve_to_their_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(toy_space(), Policy::None, Budget::Trials(3), 2);
    cfg.out_dir = Some(dir.path().to_path_buf());
    run_experiment(cfg, &ToyRunner::standard()).unwrap();
    let r = replay(dir.path(), &IndicatorConfig::default(), ReplayMode::Combined).unwrap();
    assert_eq!(r.trials.len(), 3);
}

#[test]
fn report_roundtrips_through_json() {
    let r = replay_traces(&sampled(6, 8), &IndicatorConfig::default(), ReplayMode::PerIndicator).unwrap();
    let back = ReplayReport::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn calibration_rules() {
    let (traces, labels) = recipe_corpus(3);
    assert!(calibrate_traces(&traces, &labels, &[]).is_err());
    let dir = tempfile::tempdir().unwrap();
    assert!(calibrate(dir.path(), &labels, &[]).is_err());

    let default = IndicatorConfig::default();
    let rows = calibrate_traces(&traces, &labels, &[default.clone()]).unwrap();
    let direct = replay_traces(&traces, &default, ReplayMode::Combined).unwrap();
    assert_eq!(rows[0].epochs_saved, direct.estimated_epochs_saved);
    let bad_flags = direct
        .trials
        .iter()
        .filter(|t| t.decision == Decision::TerminateBad && labels.get(&t.trial_id) == Some(&Outcome::Bad))
        .count();
    assert_eq!(rows[0].flagged_bad, bad_flags);
    // conservatism: no good run is terminated as bad
    assert_eq!(rows[0].false_positive_rate, 0.0, "{:?}", rows[0]);
    assert!(rows[0].false_negative_rate <= 0.25);

    // with every trial labeled good, anything flagged as bad is a false positive
    let all_good: BTreeMap<String, Outcome> = traces.iter().map(|t| (t.trial_id().to_string(), Outcome::Good)).collect();
    let grid = [IndicatorConfig::never_fire(), default.clone()];
    let rows = calibrate_traces(&traces, &all_good, &grid).unwrap();
    assert_eq!(rows[0].grid_index, 0);
    assert_eq!(rows[0].false_positive_rate, 0.0);
    assert!(rows[1].false_positive_rate > 0.0);
    for r in &rows {
        assert_eq!(r.false_positive_rate > 0.0, r.flagged_good > 0);
    }
}

#[test]
fn calibration_ranks_by_fpr_then_savings() {
    let (traces, labels) = recipe_corpus(2);
    let base = IndicatorConfig::default();
    let grid: Vec<IndicatorConfig> = [0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|f| IndicatorConfig {
            plc_ratio_threshold: base.plc_ratio_threshold * f,
            erg_lower: base.erg_lower * f,
            ..base.clone()
        })
        .collect();
    let rows = calibrate_traces(&traces, &labels, &grid).unwrap();
    assert_eq!(rows.len(), 4);
    for w in rows.windows(2) {
        let ok = w[0].false_positive_rate < w[1].false_positive_rate
            || (w[0].false_positive_rate == w[1].false_positive_rate && w[0].epochs_saved >= w[1].epochs_saved);
        assert!(ok, "{:?} before {:?}", w[0], w[1]);
    }
}

#[test]
fn loading_matches_written_traces() {
    let dir = tempfile::tempdir().unwrap();
    let traces = sampled(4, 12);
    write_all(dir.path(), &traces);
    let (back, warnings) = load_traces(dir.path()).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(back, traces);
}
