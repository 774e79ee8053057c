//! Deterministic synthetic classification data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    GaussianBlobs,
    TwoSpirals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub generator: Generator,
    pub seed: u64,
    /// Within-class spread relative to the spread of class centers.
    pub noise: f64,
}

impl Default for SyntheticDataset {
    fn default() -> Self {
        SyntheticDataset {
            n_samples: 400,
            n_features: 8,
            n_classes: 4,
            generator: Generator::GaussianBlobs,
            seed: 7,
            noise: 1.0,
        }
    }
}

/// Row-major features with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_features: usize,
    pub n_classes: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.n_features);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            n_features: self.n_features,
            n_classes: self.n_classes,
            features,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Deterministic split: `train_fraction` of a seeded permutation for
    /// training, the rest held out.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.len() as f64) * train_fraction).round() as usize;
        let (a, b) = idx.split_at(n_train.min(self.len()));
        (self.subset(a), self.subset(b))
    }
}

pub fn generate_dataset(spec: &SyntheticDataset) -> Result<Dataset> {
    if spec.n_classes == 0 || spec.n_features == 0 {
        return Err(Error::invalid("need at least one class and one feature"));
    }
    if spec.n_classes > spec.n_samples {
        return Err(Error::invalid(format!(
            "{} classes cannot fit in {} samples",
            spec.n_classes, spec.n_samples
        )));
    }
    if !(spec.noise >= 0.0) {
        return Err(Error::invalid("noise must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, d, k) = (spec.n_samples, spec.n_features, spec.n_classes);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let mut features = vec![0.0; n * d];

    match spec.generator {
        Generator::GaussianBlobs => {
            let centers: Vec<f64> = (0..k * d).map(|_| 2.0 * unit.sample(&mut rng)).collect();
            for (i, &c) in labels.iter().enumerate() {
                for j in 0..d {
                    features[i * d + j] = centers[c * d + j] + 2.0 * spec.noise * unit.sample(&mut rng);
                }
            }
        }
        Generator::TwoSpirals => {
            // k interleaved spiral arms in the first two features; the rest is noise.
            for (i, &c) in labels.iter().enumerate() {
                let t: f64 = rng.random::<f64>();
                let r = 0.2 + 3.0 * t;
                let angle = 3.0 * std::f64::consts::PI * t + 2.0 * std::f64::consts::PI * c as f64 / k as f64;
                let jitter = 0.15 * spec.noise;
                features[i * d] = r * angle.cos() + jitter * unit.sample(&mut rng);
                if d > 1 {
                    features[i * d + 1] = r * angle.sin() + jitter * unit.sample(&mut rng);
                }
                for j in 2..d {
                    features[i * d + j] = unit.sample(&mut rng);
                }
            }
        }
    }

    standardize(&mut features, n, d);
    Ok(Dataset {
        n_features: d,
        n_classes: k,
        features,
        labels,
    })
}

fn standardize(x: &mut [f64], n: usize, d: usize) {
    for j in 0..d {
        let mean = (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x[i * d + j] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        for i in 0..n {
            let v = &mut x[i * d + j];
            *v -= mean;
            if sd > 0.0 {
                *v /= sd;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let spec = SyntheticDataset::default();
        assert_eq!(generate_dataset(&spec).unwrap(), generate_dataset(&spec).unwrap());
        let other = SyntheticDataset { seed: 8, ..spec.clone() };
        assert_ne!(generate_dataset(&spec).unwrap(), generate_dataset(&other).unwrap());
    }

    #[test]
    fn balanced_classes() {
        let spec = SyntheticDataset {
            n_samples: 100,
            n_classes: 2,
            ..SyntheticDataset::default()
        };
        let data = generate_dataset(&spec).unwrap();
        assert_eq!(data.labels.iter().filter(|&&c| c == 0).count(), 50);
        assert_eq!(data.labels.iter().filter(|&&c| c == 1).count(), 50);
    }

    #[test]
    fn standardized_columns() {
        for generator in [Generator::GaussianBlobs, Generator::TwoSpirals] {
            let data = generate_dataset(&SyntheticDataset {
                generator,
                ..SyntheticDataset::default()
            })
            .unwrap();
            let n = data.len();
            for j in 0..data.n_features {
                let mean = (0..n).map(|i| data.row(i)[j]).sum::<f64>() / n as f64;
                let var = (0..n).map(|i| (data.row(i)[j] - mean).powi(2)).sum::<f64>() / n as f64;
                assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
                assert!((var - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn too_many_classes() {
        let spec = SyntheticDataset {
            n_samples: 3,
            n_classes: 4,
            ..SyntheticDataset::default()
        };
        assert!(matches!(generate_dataset(&spec), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn split_is_80_20_and_disjoint() {
        let data = generate_dataset(&SyntheticDataset::default()).unwrap();
        let (tr, te) = data.split(0.8, 1);
        assert_eq!(tr.len(), 320);
        assert_eq!(te.len(), 80);
        assert_eq!(data.split(0.8, 1), (tr, te));
    }
}
