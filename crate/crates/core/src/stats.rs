//! Sample statistics shared by the simulator and the error-bound estimates.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

/// Monte-Carlo estimate with a symmetric 95% interval `mean +- Z95 stderr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub n: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn new(mean: f64, stderr: f64, n: usize, seed: u64) -> Self {
        Self { mean, stderr, ci95_lo: mean - Z95 * stderr, ci95_hi: mean + Z95 * stderr, n, seed }
    }

    /// Sample mean and standard error of the mean.
    pub fn from_samples(samples: &[f64], seed: u64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InvalidParameter("at least two samples are required"));
        }
        let mean = pairwise_sum(samples) / n as f64;
        let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        let est = Self::new(mean, (var / n as f64).sqrt(), n, seed);
        if !(est.mean.is_finite() && est.stderr.is_finite()) {
            return Err(Error::Integrability("non-finite sample moments"));
        }
        Ok(est)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci95_lo <= x && x <= self.ci95_hi
    }

    /// Whether `x` lies within `k` standard errors of the mean.
    pub fn covers(&self, x: f64, k: f64) -> bool {
        (x - self.mean).abs() <= k * self.stderr
    }
}

/// Pairwise (cascade) summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Leave-one-out jackknife for a smooth function of sample means.
///
/// `columns` are equally long samples; `f` maps the vector of their means to
/// the statistic. Returns the full-sample value and the jackknife standard
/// error.
pub fn jackknife<F>(columns: &[&[f64]], f: F) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let k = columns.len();
    let n = columns.first().map_or(0, |c| c.len());
    if k == 0 || n < 2 || columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidParameter("jackknife needs equal columns of at least two samples"));
    }
    let sums: Vec<f64> = columns.iter().map(|c| pairwise_sum(c)).collect();
    let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let full = f(&means);

    let mut buf = means.clone();
    let mut loo = Vec::with_capacity(n);
    for i in 0..n {
        for ((b, s), c) in buf.iter_mut().zip(&sums).zip(columns) {
            *b = (s - c[i]) / (n - 1) as f64;
        }
        loo.push(f(&buf));
    }
    let bar = pairwise_sum(&loo) / n as f64;
    let dev: Vec<f64> = loo.iter().map(|x| (x - bar) * (x - bar)).collect();
    let se = ((n - 1) as f64 / n as f64 * pairwise_sum(&dev)).sqrt();
    if !(full.is_finite() && se.is_finite()) {
        return Err(Error::Integrability("non-finite jackknife estimate"));
    }
    Ok((full, se))
}
