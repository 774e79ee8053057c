//! Ten-number summaries of tensor snapshots.
//!
//! Every traced variable (a layer's gradients, weights or activations at one
//! epoch) is reduced to a [`StatVector`]. Moments are population moments,
//! kurtosis is excess kurtosis, and quartiles interpolate linearly at rank
//! `p * (n - 1)` of the sorted sample.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lerp, Scalar};

/// Number of statistics in a [`StatVector`].
pub const STAT_COUNT: usize = 10;

/// Serialization order of the statistics.
pub const STAT_NAMES: [&str; STAT_COUNT] = [
    "avg",
    "var",
    "median",
    "min",
    "max",
    "q3",
    "q1",
    "skewness",
    "kurtosis",
    "zero_ratio",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatVector<T = f64> {
    pub avg: T,
    /// Population variance.
    pub var: T,
    pub median: T,
    pub min: T,
    pub max: T,
    /// Upper quartile.
    pub q3: T,
    /// Lower quartile.
    pub q1: T,
    pub skewness: T,
    /// Excess kurtosis.
    pub kurtosis: T,
    /// Fraction of entries that are exactly zero.
    pub zero_ratio: T,
}

impl<T: Scalar> StatVector<T> {
    pub fn to_array(&self) -> [T; STAT_COUNT] {
        [
            self.avg,
            self.var,
            self.median,
            self.min,
            self.max,
            self.q3,
            self.q1,
            self.skewness,
            self.kurtosis,
            self.zero_ratio,
        ]
    }

    pub fn from_array(a: [T; STAT_COUNT]) -> Self {
        StatVector {
            avg: a[0],
            var: a[1],
            median: a[2],
            min: a[3],
            max: a[4],
            q3: a[5],
            q1: a[6],
            skewness: a[7],
            kurtosis: a[8],
            zero_ratio: a[9],
        }
    }

    /// True when every one of the ten statistics is finite.
    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Largest absolute value observed in the snapshot.
    pub fn max_abs(&self) -> T {
        self.min.abs().max(self.max.abs())
    }

    /// Root mean square of the snapshot, recovered from mean and variance.
    pub fn rms(&self) -> T {
        (self.var + self.avg * self.avg).sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> StatVector<U> {
        let a = self.to_array();
        StatVector::from_array(a.map(|v| U::of(v.to_f64_lossy())))
    }

    /// Bitwise-aware equality: NaN compares equal to NaN.
    pub fn same_as(&self, other: &Self) -> bool {
        self.to_array()
            .iter()
            .zip(other.to_array().iter())
            .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

/// Summarize `values` into the ten statistics.
///
/// Non-finite inputs are not rejected: a NaN anywhere makes every
/// moment and order statistic NaN, and infinities flow through the
/// arithmetic, so downstream checks can see them.
pub fn compute_stat_vector<T: Scalar>(values: &[T]) -> Result<StatVector<T>> {
    let n = values.len();
    if n == 0 {
        return Err(Error::invalid("cannot summarize an empty sequence"));
    }
    let nf = T::of_usize(n);
    let zeros = values.iter().filter(|v| **v == T::zero()).count();
    let zero_ratio = T::of_usize(zeros) / nf;

    if values.iter().any(|v| v.is_nan()) {
        let nan = T::nan();
        return Ok(StatVector {
            avg: nan,
            var: nan,
            median: nan,
            min: nan,
            max: nan,
            q3: nan,
            q1: nan,
            skewness: nan,
            kurtosis: nan,
            zero_ratio,
        });
    }

    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let min = sorted[0];
    let max = sorted[n - 1];

    let avg = values.iter().copied().sum::<T>() / nf;

    let (var, skewness, kurtosis) = if min == max {
        (T::zero(), T::zero(), T::zero())
    } else {
        let (mut m2, mut m3, mut m4) = (T::zero(), T::zero(), T::zero());
        for &x in values {
            let d = x - avg;
            let d2 = d * d;
            m2 = m2 + d2;
            m3 = m3 + d2 * d;
            m4 = m4 + d2 * d2;
        }
        m2 = m2 / nf;
        m3 = m3 / nf;
        m4 = m4 / nf;
        if m2 == T::zero() {
            (T::zero(), T::zero(), T::zero())
        } else {
            let skew = m3 / (m2 * m2.sqrt());
            let kurt = m4 / (m2 * m2) - T::of(3.0);
            (m2, skew, kurt)
        }
    };

    Ok(StatVector {
        avg,
        var,
        median: sorted_quantile(&sorted, T::of(0.5)),
        min,
        max,
        q3: sorted_quantile(&sorted, T::of(0.75)),
        q1: sorted_quantile(&sorted, T::of(0.25)),
        skewness,
        kurtosis,
        zero_ratio,
    })
}

/// Quantile of an ascending, NaN-free slice by linear interpolation at
/// rank `p * (n - 1)`.
pub fn sorted_quantile<T: Scalar>(sorted: &[T], p: T) -> T {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = p * T::of_usize(n - 1);
    let lo = rank.floor();
    let idx = lo.to_usize().unwrap_or(0).min(n - 1);
    let hi = (idx + 1).min(n - 1);
    lerp(sorted[idx], sorted[hi], rank - lo)
}

/// Median of an unsorted slice (sorts a copy). NaN-free input expected.
pub fn median<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Some(sorted_quantile(&v, T::of(0.5)))
}
