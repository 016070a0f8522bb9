//! Error-distribution summaries: quartiles by linear interpolation between
//! closest ranks, population sigma, and a ±2.698σ band around the mean.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Half-width of the whisker band in standard deviations (≈99.3% coverage
/// for a normal distribution).
pub const WHISKER_SIGMAS: f64 = 2.698;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub mean: f64,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

impl ErrorStats {
    /// Every statistic multiplied by `factor` (e.g. per-unit to volts).
    pub fn scaled(&self, factor: f64) -> ErrorStats {
        ErrorStats {
            median: self.median * factor,
            q1: self.q1 * factor,
            q3: self.q3 * factor,
            iqr: self.iqr * factor,
            mean: self.mean * factor,
            sigma: self.sigma * factor,
            lower: self.lower * factor,
            upper: self.upper * factor,
            count: self.count,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("no values to summarise")]
    Empty,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
}

/// Quantile `p` of ascending-sorted data, interpolating linearly between the
/// two closest ranks at position `p·(n−1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn median(values: &[f64]) -> Result<f64, StatsError> {
    let sorted = sorted_finite(values)?;
    Ok(quantile_sorted(&sorted, 0.5))
}

fn sorted_finite(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

pub fn error_stats(errors: &[f64]) -> Result<ErrorStats, StatsError> {
    let sorted = sorted_finite(errors)?;
    let n = sorted.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    let sigma = libm::sqrt(var);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    Ok(ErrorStats {
        median: quantile_sorted(&sorted, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        mean,
        sigma,
        lower: mean - WHISKER_SIGMAS * sigma,
        upper: mean + WHISKER_SIGMAS * sigma,
        count: sorted.len(),
    })
}
