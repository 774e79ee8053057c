//! Independent reference implementations used to check the library.
#![allow(dead_code)]

use diaghpo::toytrainer::{Activation, MlpSpec, ModelState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Compensated (Neumaier) sum.
pub fn neumaier(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Order statistic via selection rather than a full sort.
fn kth(xs: &[f64], k: usize) -> f64 {
    let mut v = xs.to_vec();
    let (_, x, _) = v.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    *x
}

fn quantile(xs: &[f64], p: f64) -> f64 {
    let h = p * (xs.len() - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let a = kth(xs, lo);
    if frac == 0.0 {
        return a;
    }
    let b = kth(xs, (lo + 1).min(xs.len() - 1));
    a + frac * (b - a)
}

/// Brute-force ten statistics, in serialization order, for finite input.
pub fn brute_stats(xs: &[f64]) -> [f64; 10] {
    let n = xs.len() as f64;
    let mean = neumaier(xs.iter().copied()) / n;
    let m = |k: i32| neumaier(xs.iter().map(|&x| (x - mean).powi(k))) / n;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (var, skew, kurt) = if lo == hi || m2 == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        (m2, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    let zeros = xs.iter().filter(|&&x| x == 0.0).count() as f64;
    [
        mean,
        var,
        quantile(xs, 0.5),
        lo,
        hi,
        quantile(xs, 0.75),
        quantile(xs, 0.25),
        skew,
        kurt,
        zeros / n,
    ]
}

/// Worst scaled error between library and oracle statistics.
///
/// Location statistics are scaled by the largest |x|, variance by itself,
/// and the dimensionless shape statistics by max(|value|, 1).
pub fn stat_error(got: &[f64; 10], want: &[f64; 10], xs: &[f64]) -> f64 {
    let amax = xs.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..10 {
        let scale = match i {
            1 => want[1].abs().max(amax * amax * 1e-300),
            7 | 8 => want[i].abs().max(1.0),
            9 => 1.0,
            _ => amax,
        };
        let diff = (got[i] - want[i]).abs();
        let e = if diff == 0.0 { 0.0 } else { diff / scale };
        worst = worst.max(e);
    }
    worst
}

/// Arrays that exercise ties, zeros, offsets and wide magnitude ranges.
pub fn random_array<R: Rng>(rng: &mut R, max_len: usize) -> Vec<f64> {
    let n = rng.random_range(1..=max_len);
    let scale = 10f64.powf(rng.random_range(-6.0..6.0));
    let offset = scale * rng.random_range(-10.0..10.0);
    match rng.random_range(0..4) {
        0 => (0..n).map(|_| offset + scale * (rng.random::<f64>() - 0.5)).collect(),
        1 => (0..n)
            .map(|_| if rng.random_bool(0.4) { 0.0 } else { scale * (rng.random::<f64>() - 0.3) })
            .collect(),
        2 => (0..n).map(|_| (rng.random_range(-5..=5) as f64) * scale).collect(),
        _ => (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>().max(1e-300);
                offset + scale * (-u.ln()).powi(2)
            })
            .collect(),
    }
}

/// A small random network and batch for gradient checking.
pub struct GradCase {
    pub spec: MlpSpec,
    pub model: ModelState<f64>,
    pub x: Vec<f64>,
    pub labels: Vec<usize>,
}

pub fn random_grad_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let activation = [Activation::Relu, Activation::Sigmoid, Activation::Tanh][rng.random_range(0..3)];
    let spec = MlpSpec {
        depth: rng.random_range(1..=3),
        width: rng.random_range(4..=8),
        activation,
        init_scale: rng.random_range(0.5..2.0),
        bias_init: rng.random_range(-0.5..0.5),
        ..MlpSpec::default()
    };
    let n_features = rng.random_range(2..=5);
    let n_classes = rng.random_range(2..=4);
    let batch = rng.random_range(1..=6);
    let model = ModelState::init(&spec, n_features, n_classes, &mut rng).expect("valid spec");
    let x = (0..batch * n_features).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..batch).map(|_| rng.random_range(0..n_classes)).collect();
    GradCase { spec, model, x, labels }
}

/// Relative error with a floor so that near-zero gradients are compared
/// on an absolute scale.
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter.
pub fn max_gradient_error(case: &GradCase, eps: f64) -> f64 {
    let (_, grads, _) = case.model.loss_and_gradients(&case.x, &case.labels);
    let mut model = case.model.clone();
    let mut worst = 0.0f64;
    for l in 0..model.layers.len() {
        for i in 0..model.layers[l].weights.len() {
            let orig = model.layers[l].weights[i];
            model.layers[l].weights[i] = orig + eps;
            let up = model.loss(&case.x, &case.labels);
            model.layers[l].weights[i] = orig - eps;
            let down = model.loss(&case.x, &case.labels);
            model.layers[l].weights[i] = orig;
            worst = worst.max(rel(grads.weights[l][i], (up - down) / (2.0 * eps)));
        }
        for i in 0..model.layers[l].bias.len() {
            let orig = model.layers[l].bias[i];
            model.layers[l].bias[i] = orig + eps;
            let up = model.loss(&case.x, &case.labels);
            model.layers[l].bias[i] = orig - eps;
            let down = model.loss(&case.x, &case.labels);
            model.layers[l].bias[i] = orig;
            worst = worst.max(rel(grads.bias[l][i], (up - down) / (2.0 * eps)));
        }
    }
    worst
}
