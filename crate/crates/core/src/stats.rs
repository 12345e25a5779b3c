//! Group-level percentile bootstrap and Pearson correlation.
//!
//! The bootstrap resamples group-level metric values `s_i` (one per original
//! instance together with its variants), never the underlying instance scores.
//! Undefined values are dropped before resampling and only counted.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_replicates() -> usize {
    1000
}

fn default_confidence() -> f64 {
    0.95
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { replicates: default_replicates(), confidence: default_confidence(), seed: 0 }
    }
}

impl BootstrapConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::OutOfRange { what: "bootstrap replicates", value: 0.0 });
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::OutOfRange { what: "bootstrap confidence", value: self.confidence });
        }
        Ok(())
    }
}

/// Mean with a percentile confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_used: usize,
    pub n_undefined: usize,
    /// Set when only one defined value was available: the interval is that point.
    pub degenerate: bool,
}

impl IntervalEstimate {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Seed of replicate `index`; replicates are independent of evaluation order.
fn replicate_seed(seed: u64, index: usize) -> u64 {
    crate::derive_seed(seed, &[&alloc::format!("replicate-{index}")])
}

/// Linear interpolation between order statistics (the common "type 7" rule).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let below = libm::floor(pos) as usize;
    let above = (below + 1).min(sorted.len() - 1);
    let frac = pos - below as f64;
    sorted[below] + (sorted[above] - sorted[below]) * frac
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Percentile bootstrap CI of the mean of the defined values.
///
/// The returned interval always contains the sample mean: when resampling
/// skew pushes a percentile past it, that bound is moved onto the mean.
pub fn bootstrap_ci(scores: &[Option<f64>], config: &BootstrapConfig) -> Result<IntervalEstimate> {
    config.validate()?;
    let defined: Vec<f64> = scores.iter().flatten().copied().collect();
    let n_undefined = scores.len() - defined.len();
    if defined.is_empty() {
        return Err(Error::EmptySample("bootstrap"));
    }
    if let Some(bad) = defined.iter().find(|x| !x.is_finite()) {
        return Err(Error::OutOfRange { what: "bootstrap value", value: *bad });
    }
    let m = mean(&defined);
    if defined.len() == 1 {
        return Ok(IntervalEstimate { mean: m, lo: m, hi: m, n_used: 1, n_undefined, degenerate: true });
    }

    let n = defined.len();
    let mut means: Vec<f64> = (0..config.replicates)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(config.seed, b));
            let total: f64 = (0..n).map(|_| defined[rng.random_range(0..n)]).sum();
            total / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);

    let alpha = (1.0 - config.confidence) / 2.0;
    let lo = quantile(&means, alpha).min(m);
    let hi = quantile(&means, 1.0 - alpha).max(m);
    Ok(IntervalEstimate { mean: m, lo, hi, n_used: n, n_undefined, degenerate: false })
}

/// Product-moment correlation of two equally long, non-constant series.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch { left: xs.len(), right: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::EmptySample("correlation (need at least 2 points)"));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantSeries);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// True when the interval excludes zero.
pub fn significant(interval: &IntervalEstimate) -> bool {
    !interval.contains(0.0)
}
