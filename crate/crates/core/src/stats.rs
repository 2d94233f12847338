//! Small statistical helpers: moments, least squares on logs, normality
//! diagnostics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Least-squares line through `(x, log y)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LogLinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits `log y_k = intercept + slope * k` over `k >= first`, skipping values
/// at or below `floor`. `None` when fewer than two points survive.
pub fn log_linear_fit(y: &[f64], first: usize, floor: f64) -> Option<LogLinearFit> {
    let pts: Vec<(f64, f64)> = y
        .iter()
        .enumerate()
        .skip(first)
        .filter(|(_, v)| **v > floor && v.is_finite())
        .map(|(k, v)| (k as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(LogLinearFit { slope, intercept: my - slope * mx, r_squared, points: pts.len() })
}

/// Per-step contraction factor `exp(slope)`; 0 when the sequence vanishes.
pub fn log_linear_rate(y: &[f64], first: usize, floor: f64) -> f64 {
    log_linear_fit(y, first, floor).map_or(0.0, |f| f.slope.exp())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Skewness, excess kurtosis and Kolmogorov–Smirnov distance to the normal
/// with the sample mean and standard deviation.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct NormalityStats {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_distance: f64,
}

/// Gate thresholds applied to [`NormalityStats`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalityGate {
    pub max_abs_skewness: f64,
    pub max_abs_excess_kurtosis: f64,
    pub max_ks_distance: f64,
}

impl Default for NormalityGate {
    fn default() -> Self {
        Self { max_abs_skewness: 0.25, max_abs_excess_kurtosis: 0.5, max_ks_distance: 0.08 }
    }
}

impl NormalityGate {
    pub fn passes(&self, s: &NormalityStats) -> bool {
        s.skewness.abs() <= self.max_abs_skewness
            && s.excess_kurtosis.abs() <= self.max_abs_excess_kurtosis
            && s.ks_distance < self.max_ks_distance
    }
}

pub fn normality_stats(x: &[f64]) -> NormalityStats {
    let n = x.len() as f64;
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return NormalityStats { skewness: 0.0, excess_kurtosis: 0.0, ks_distance: 0.0 };
    }
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let sd = variance(x).sqrt();
    let normal = Normal::new(m, sd).expect("positive scale");
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ks_distance = sorted
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = normal.cdf(*v);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    NormalityStats { skewness, excess_kurtosis, ks_distance }
}

/// Fraction of `trials` exactly normal samples of size `sample_size` that
/// pass `gate`.
pub fn gate_pass_rate(gate: &NormalityGate, sample_size: usize, trials: usize, seed: u64) -> f64 {
    let passed = (0..trials)
        .into_par_iter()
        .filter(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(*t as u64);
            let x: Vec<f64> = (0..sample_size).map(|_| StandardNormal.sample(&mut rng)).collect();
            gate.passes(&normality_stats(&x))
        })
        .count();
    passed as f64 / trials as f64
}

/// Streaming mean and variance (Welford), mergeable across workers.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        Moments {
            count: n,
            mean: self.mean + d * other.count as f64 / n as f64,
            m2: self.m2 + other.m2 + d * d * (self.count as f64 * other.count as f64) / n as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}
