//! Normality diagnostics for replicated log-likelihood estimates.
//!
//! The Lilliefors test is a Kolmogorov–Smirnov test against a Gaussian whose
//! mean and variance are estimated from the sample. Its null distribution does
//! not depend on the true mean or variance, so it is simulated once per sample
//! size and cached.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::rng::seeded;

pub const MIN_SAMPLES: usize = 20;
pub const NULL_REPLICATES: usize = 10_000;
const NULL_SEED: u64 = 0x6c69_6c6c_6965_666f;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityTest {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// KS distance between the sample and `N(mean, var)` with both estimated.
pub fn lilliefors_statistic(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sd == 0.0 {
        return 1.0;
    }
    sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = std_normal_cdf((x - mean) / sd);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

fn null_distribution(n: usize) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(d) = cache.lock().expect("cache poisoned").get(&n) {
        return d.clone();
    }
    let mut stats: Vec<f64> = (0..NULL_REPLICATES as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeded(NULL_SEED ^ ((n as u64) << 32) ^ r);
            let draws: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            lilliefors_statistic(&draws)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let stats = Arc::new(stats);
    cache
        .lock()
        .expect("cache poisoned")
        .entry(n)
        .or_insert_with(|| stats.clone())
        .clone()
}

/// Lilliefors test with a Monte Carlo p-value from 10⁴ null replicates.
pub fn normality_diagnostic(samples: &[f64]) -> Result<NormalityTest> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("samples must be finite".into()));
    }
    let statistic = lilliefors_statistic(samples);
    let null = null_distribution(samples.len());
    let at_least = null.len() - null.partition_point(|&s| s < statistic);
    let p_value = (1 + at_least) as f64 / (1 + null.len()) as f64;
    Ok(NormalityTest { statistic, p_value })
}

/// Moments of a replicate sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    /// Excess kurtosis.
    pub kurtosis: f64,
}

pub fn summarize(samples: &[f64]) -> SampleSummary {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = samples.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    SampleSummary {
        n: samples.len(),
        mean,
        std: (m2 * n / (n - 1.0)).sqrt(),
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2) - 3.0,
    }
}

/// Sorted standardized sample against Gaussian plotting-position quantiles.
pub fn qq_points(samples: &[f64]) -> Vec<(f64, f64)> {
    let n = samples.len();
    let std_normal = Normal::standard();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let p = (i as f64 + 0.5) / n as f64;
            (std_normal.inverse_cdf(p), x)
        })
        .collect()
}
