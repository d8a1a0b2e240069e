//! Estimates, goodness-of-fit statistics and order-fixed aggregation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Pairwise summation. The result depends only on the order of `xs`,
/// never on how the values were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            se: 0.0,
            n: 0,
        }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let mean = pairwise_sum(xs) / n as f64;
        if n < 2 {
            return Self { mean, se: 0.0, n };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Self {
            mean,
            se: (var / n as f64).sqrt(),
            n,
        }
    }

    /// Standard error of the difference of two independent estimates.
    pub fn combined_se(&self, other: &Estimate) -> f64 {
        (self.se * self.se + other.se * other.se).sqrt()
    }

    /// |self - other| within `k` combined standard errors. Exact values
    /// (zero SE on both sides) must agree to 1e-12.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        let diff = (self.mean - other.mean).abs();
        let se = self.combined_se(other);
        if se == 0.0 {
            diff <= 1e-12 * (1.0 + self.mean.abs())
        } else {
            diff <= k * se
        }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Reference distributions for the Kolmogorov–Smirnov statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetCdf {
    StandardNormal,
    /// Law of |Z| for Z standard normal.
    HalfNormal,
}

impl TargetCdf {
    pub fn cdf(&self, x: f64) -> f64 {
        let z = Normal::standard();
        match self {
            TargetCdf::StandardNormal => z.cdf(x),
            TargetCdf::HalfNormal => {
                if x <= 0.0 {
                    0.0
                } else {
                    2.0 * z.cdf(x) - 1.0
                }
            }
        }
    }
}

pub const KS_MIN_SAMPLES: usize = 100;

/// Sup-distance between the empirical CDF of `samples` and `target`.
pub fn ks_statistic(samples: &[f64], target: TargetCdf) -> Result<f64> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: KS_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        // Step over ties so the ECDF jump is taken in one piece.
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = target.cdf(xs[i]);
        let below = i as f64 / n;
        let above = (j + 1) as f64 / n;
        d = d.max((f - below).abs()).max((above - f).abs());
        i = j + 1;
    }
    Ok(d)
}

/// Pearson chi-squared test of homogeneity for a 2 x k table of counts.
/// Columns with zero total are dropped. Returns (statistic, dof, p-value).
pub fn chi_squared_two_sample(a: &[u64], b: &[u64]) -> (f64, usize, f64) {
    assert_eq!(a.len(), b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let total = (na + nb) as f64;
    let mut stat = 0.0;
    let mut cols = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        cols += 1;
        let ea = col * na as f64 / total;
        let eb = col * nb as f64 / total;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    if cols < 2 {
        return (0.0, 0, 1.0);
    }
    let dof = cols - 1;
    let p = 1.0 - ChiSquared::new(dof as f64).expect("dof > 0").cdf(stat);
    (stat, dof, p)
}

/// Pearson goodness-of-fit of observed counts against expected probabilities.
pub fn chi_squared_goodness(observed: &[u64], probs: &[f64]) -> (f64, usize, f64) {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cols = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        if p <= 0.0 {
            continue;
        }
        cols += 1;
        let e = p * n as f64;
        stat += (o as f64 - e).powi(2) / e;
    }
    if cols < 2 {
        return (0.0, 0, 1.0);
    }
    let dof = cols - 1;
    let p = 1.0 - ChiSquared::new(dof as f64).expect("dof > 0").cdf(stat);
    (stat, dof, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&xs), xs.iter().sum::<f64>());
    }

    #[test]
    fn estimate_of_constant_has_zero_se() {
        let e = Estimate::from_samples(&[2.0; 50]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.se, 0.0);
        assert!(e.agrees_with(&Estimate::exact(2.0), 4.0));
        assert!(!e.agrees_with(&Estimate::exact(2.1), 4.0));
    }

    #[test]
    fn ks_null_calibration() {
        let mut rng = stream_rng(11, 0);
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = ks_statistic(&xs, TargetCdf::StandardNormal).unwrap();
        assert!(d <= 1.63 / (n as f64).sqrt() * 1.5, "d = {d}");
        let abs: Vec<f64> = xs.iter().map(|x: &f64| x.abs()).collect();
        let d = ks_statistic(&abs, TargetCdf::HalfNormal).unwrap();
        assert!(d <= 1.63 / (n as f64).sqrt() * 1.5, "d = {d}");
    }

    #[test]
    fn ks_constant_samples_are_far_from_normal() {
        let d = ks_statistic(&[0.0; 200], TargetCdf::StandardNormal).unwrap();
        assert!(d >= 0.5);
    }

    #[test]
    fn ks_is_symmetric_under_negation() {
        let mut rng = stream_rng(5, 1);
        let xs: Vec<f64> = (0..500)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + 0.1
            })
            .collect();
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        let a = ks_statistic(&xs, TargetCdf::StandardNormal).unwrap();
        let b = ks_statistic(&neg, TargetCdf::StandardNormal).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ks_rejects_small_samples() {
        assert!(matches!(
            ks_statistic(&[0.0; 99], TargetCdf::StandardNormal),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn chi_squared_homogeneous_tables() {
        let (_, dof, p) = chi_squared_two_sample(&[500, 500], &[500, 500]);
        assert_eq!(dof, 1);
        assert!((p - 1.0).abs() < 1e-12);
        let (_, _, p) = chi_squared_two_sample(&[900, 100], &[100, 900]);
        assert!(p < 1e-10);
        let (_, _, p) = chi_squared_goodness(&[250, 750], &[0.25, 0.75]);
        assert!((p - 1.0).abs() < 1e-12);
    }
}
