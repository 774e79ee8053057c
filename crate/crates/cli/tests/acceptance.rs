//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit when any
//! criterion fails.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use diaghpo::indicators::{Indicator, IndicatorConfig};
use diaghpo::metrics::{ranked_trials, top10hr, tsba_from_times, RankedTrial};
use diaghpo::runner::record_trial;
use diaghpo::scheduler::{run_experiment, Budget, Clock, ExperimentConfig, ExperimentLog, Policy, StopCause};
use diaghpo::simulator::{replay, replay_trial, ReplayMode};
use diaghpo::stats::compute_stat_vector;
use diaghpo::toytrainer::{config_from_spec, fixed_space, healthy_spec, pathology_recipes, toy_space, ToyRunner};
use diaghpo::trace::MetricMode;
use diaghpo_cli::{cmd_run, RunManifest};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use oracles::{brute_stats, max_gradient_error, random_array, random_grad_case, stat_error};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(name: &str, limit_s: f64, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let secs = start.elapsed().as_secs_f64();
    let pass = o.pass && secs <= limit_s;
    println!(
        "{} {name}: {} ({secs:.1} s, limit {limit_s:.0} s)",
        if pass { "PASS" } else { "FAIL" },
        o.detail
    );
    pass
}

fn stat_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let xs = random_array(&mut rng, 10_000);
        let got = compute_stat_vector(&xs).expect("nonempty").to_array();
        worst = worst.max(stat_error(&got, &brute_stats(&xs), &xs));
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("1000 arrays, max relative error {worst:.2e} (tolerance 1e-10)"),
    }
}

fn gradient_check() -> Outcome {
    let worst = (0..50).map(|s| max_gradient_error(&random_grad_case(s), 1e-5)).fold(0.0, f64::max);
    Outcome {
        pass: worst <= 1e-4,
        detail: format!("50 specs, max relative error {worst:.2e} (tolerance 1e-4)"),
    }
}

fn pathology_coverage() -> Outcome {
    let runner = ToyRunner::standard();
    let cfg = IndicatorConfig::default();
    let mut parts = Vec::new();
    let mut pass = true;
    for r in pathology_recipes() {
        let config = config_from_spec(&r.spec);
        let hits = (0..10u64)
            .filter(|&s| {
                let trace = record_trial(&runner, r.name, &config, s, None).expect("recipe trains");
                let rep = replay_trial(&trace, &cfg, ReplayMode::PerIndicator).expect("replay");
                r.expected.iter().any(|i| rep.triggering_indicators.contains(i))
            })
            .count();
        pass &= hits >= 8;
        parts.push(format!("{} {hits}/10", r.name));
    }
    let healthy = config_from_spec(&healthy_spec());
    let malign: usize = (0..20u64)
        .map(|s| {
            let trace = record_trial(&runner, "healthy", &healthy, 1000 + s, None).expect("healthy trains");
            let rep = replay_trial(&trace, &cfg, ReplayMode::PerIndicator).expect("replay");
            rep.triggering_indicators.iter().filter(|i| !i.is_benign()).count()
        })
        .sum();
    pass &= malign == 0;
    parts.push(format!("healthy malign positives {malign}/20 seeds"));
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

/// Simulated budget giving about 60 policy-none trials on the toy space.
const BUDGET: Budget = Budget::SimMs(8000);
const SEEDS: [u64; 3] = [1, 2, 3];

fn budget_run(policy: Policy, seed: u64) -> ExperimentLog {
    let cfg = ExperimentConfig::new(toy_space(), policy, BUDGET, seed);
    run_experiment(cfg, &ToyRunner::standard()).expect("experiment runs")
}

fn more_trials(pairs: &[(ExperimentLog, ExperimentLog)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, (none, btt)) in SEEDS.iter().zip(pairs) {
        let (n, b) = (none.trials_finished_within_budget(), btt.trials_finished_within_budget());
        pass &= b as f64 >= 1.2 * n as f64;
        parts.push(format!("seed {seed}: none {n}, bttackler {b} ({:+.0}%)", 100.0 * (b as f64 / n as f64 - 1.0)));
    }
    Outcome {
        pass,
        detail: format!("{} (need +20% at every seed)", parts.join("; ")),
    }
}

fn top10_advantage(pairs: &[(ExperimentLog, ExperimentLog)]) -> Outcome {
    let shares: Vec<f64> = pairs
        .iter()
        .map(|(none, btt)| top10hr(&ranked_trials(btt, "bttackler"), &ranked_trials(none, "none"), 10).expect("pool"))
        .collect();
    let wins = shares.iter().filter(|&&s| s >= 50.0).count();
    Outcome {
        pass: wins >= 2,
        detail: format!("Top10HR per seed {shares:?}, {wins}/3 at or above 50% (need 2)"),
    }
}

fn formula_checks() -> Outcome {
    let hour = 3_600_000.0;
    let saving = tsba_from_times((4.64 * hour) as u64, (3.89 * hour) as u64);
    let trial = |run: &str, i: usize, m: f64| RankedTrial {
        trial_id: format!("{run}{i}"),
        source_run: run.into(),
        final_metric: m,
        metric_mode: MetricMode::Maximize,
        finished_at_ms: i as u64,
    };
    let a: Vec<RankedTrial> = (0..7).map(|i| trial("a", i, 0.9 - i as f64 * 0.01)).chain([trial("a", 7, 0.1)]).collect();
    let b: Vec<RankedTrial> = (0..6).map(|i| trial("b", i, 0.85 - i as f64 * 0.02)).collect();
    let share = top10hr(&a, &b, 10).expect("pool");
    Outcome {
        pass: (saving - 16.0).abs() <= 1.0 && share == 70.0,
        detail: format!("TSBA(4.64 h, 3.89 h) = {saving:.2}% (want 16 +/- 1); constructed Top10HR = {share}% (want 70)"),
    }
}

fn live_replay_equivalence() -> Outcome {
    let runner = ToyRunner::standard();
    let dir = tempfile::tempdir().expect("tempdir");
    let mut none = ExperimentConfig::new(toy_space(), Policy::None, Budget::Trials(40), 5);
    none.out_dir = Some(dir.path().to_path_buf());
    run_experiment(none, &runner).expect("none run");
    let live = run_experiment(ExperimentConfig::new(toy_space(), Policy::Bttackler, Budget::Trials(40), 5), &runner)
        .expect("bttackler run");
    let report = replay(dir.path(), &live.indicator_config, ReplayMode::Combined).expect("replay");
    let replayed: BTreeSet<(String, u32, Indicator)> = report
        .flagged()
        .flat_map(|t| {
            let e = t.first_positive_epoch.expect("flagged");
            t.triggering_indicators.iter().map(move |&i| (t.trial_id.clone(), e, i))
        })
        .collect();
    let live_set = live.positive_triples();
    let diff = live_set.symmetric_difference(&replayed).count();
    Outcome {
        pass: diff == 0 && !live_set.is_empty() && report.warnings.is_empty(),
        detail: format!(
            "{} live triples, {} replayed, {diff} differ across {} trials",
            live_set.len(),
            replayed.len(),
            report.trials.len()
        ),
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).expect("readable") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("inside").to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).expect("readable")));
            }
        }
    }
    out.sort();
    out
}

fn run_determinism() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let manifest = |out: &str| RunManifest {
        policy: Policy::Bttackler,
        budget: Budget::SimMs(3000),
        seed: 11,
        out_dir: tmp.path().join(out),
        ..RunManifest::default()
    };
    cmd_run(&manifest("a"), false).expect("first run");
    cmd_run(&manifest("b"), false).expect("second run");
    let (a, b) = (dir_bytes(&tmp.path().join("a")), dir_bytes(&tmp.path().join("b")));
    let same = a == b;
    let traces = a.iter().filter(|(n, _)| n.ends_with(".trace.jsonl")).count();
    Outcome {
        pass: same && traces > 0,
        detail: format!("{} files ({traces} traces) byte-identical: {same}", a.len()),
    }
}

fn overhead() -> Outcome {
    let runner = ToyRunner::standard();
    let space = fixed_space(&healthy_spec());
    let timed = |policy: Policy| -> (f64, usize) {
        let mut cfg = ExperimentConfig::new(space.clone(), policy, Budget::Trials(20), 8);
        cfg.clock = Clock::Real;
        cfg.indicators = IndicatorConfig::never_fire();
        let start = Instant::now();
        let log = run_experiment(cfg, &runner).expect("overhead run");
        let stops = log
            .trials
            .iter()
            .filter(|t| matches!(t.stop_cause, Some(StopCause::Malign | StopCause::Benign)))
            .count();
        (start.elapsed().as_secs_f64(), stops)
    };
    timed(Policy::None);
    let (mut none, mut btt, mut stops) = (Vec::new(), Vec::new(), 0);
    for _ in 0..5 {
        none.push(timed(Policy::None).0);
        let (t, s) = timed(Policy::Bttackler);
        btt.push(t);
        stops += s;
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (n, b) = (median(&mut none), median(&mut btt));
    let ratio = b / n;
    Outcome {
        pass: ratio <= 1.10 && stops == 0,
        detail: format!(
            "20 trials, median of 5: none {n:.2} s, bttackler {b:.2} s, overhead {:+.1}% (limit +10%), terminations {stops}",
            100.0 * (ratio - 1.0)
        ),
    }
}

fn main() {
    let mut ok = true;
    ok &= check("statistic oracle", 10.0, stat_oracle);
    ok &= check("gradient check", 60.0, gradient_check);
    ok &= check("pathology coverage", 300.0, pathology_coverage);
    let start = Instant::now();
    let pairs: Vec<(ExperimentLog, ExperimentLog)> = SEEDS
        .iter()
        .map(|&s| (budget_run(Policy::None, s), budget_run(Policy::Bttackler, s)))
        .collect();
    let shared = start.elapsed().as_secs_f64();
    ok &= check("more trials within budget", 600.0 - shared, || more_trials(&pairs));
    ok &= check("Top10HR advantage", 600.0, || top10_advantage(&pairs));
    ok &= check("metric formulas", 1.0, formula_checks);
    ok &= check("live/replay equivalence", 300.0, live_replay_equivalence);
    ok &= check("run determinism", 300.0, run_determinism);
    ok &= check("checker overhead", 600.0, overhead);
    println!("budget runs took {shared:.1} s");
    if !ok {
        std::process::exit(1);
    }
}
