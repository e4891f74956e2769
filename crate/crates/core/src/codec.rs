//! Discretisation of Euler angles into pose bins and expectation decoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODULE: &str = "codec";

pub const NUM_BINS: usize = 62;
pub const RANGE_LO: f64 = -93.0;
pub const RANGE_HI: f64 = 93.0;

/// Tolerance on the probability mass accepted by [`decode`].
pub const DECODE_SUM_TOLERANCE: f64 = 1e-3;
/// Tolerance on the probability mass enforced by [`AngleDistribution::new`].
pub const DISTRIBUTION_SUM_TOLERANCE: f64 = 1e-6;

/// Uniform partition of `[lo, hi)` into `num_bins` bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    num_bins: usize,
    lo: f64,
    hi: f64,
}

impl Default for BinGrid {
    /// 62 bins of 3 degrees over `[-93, 93)`.
    fn default() -> Self {
        Self {
            num_bins: NUM_BINS,
            lo: RANGE_LO,
            hi: RANGE_HI,
        }
    }
}

impl BinGrid {
    pub fn new(num_bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if num_bins == 0 || !lo.is_finite() || !hi.is_finite() || hi <= lo {
            return Err(Error::invalid(MODULE, format!("bad grid: {num_bins} bins over [{lo}, {hi})")));
        }
        Ok(Self { num_bins, lo, hi })
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.num_bins as f64
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.lo + self.width() * bin as f64 + self.width() / 2.0
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.num_bins).map(|i| self.center(i)).collect()
    }

    /// Clamps an angle into the encodable range `[lo, hi]`.
    pub fn clamp(&self, angle: f64) -> f64 {
        angle.clamp(self.lo, self.hi)
    }
}

/// One angle as a hard class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinOneHot {
    pub bin_index: usize,
}

impl BinOneHot {
    pub fn to_probs(self, grid: &BinGrid) -> Vec<f64> {
        let mut p = vec![0.0; grid.num_bins()];
        p[self.bin_index] = 1.0;
        p
    }
}

/// A validated probability vector over the bins of one angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleDistribution {
    probs: Vec<f64>,
}

impl AngleDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid(MODULE, "empty distribution"));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid(MODULE, format!("probability {i} is {}", probs[i])));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOLERANCE {
            return Err(Error::invalid(MODULE, format!("probabilities sum to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_bins: usize) -> Self {
        Self {
            probs: vec![1.0 / num_bins as f64; num_bins],
        }
    }

    pub fn one_hot(bin: BinOneHot, grid: &BinGrid) -> Self {
        Self {
            probs: bin.to_probs(grid),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

pub fn encode(angle: f64, grid: &BinGrid) -> Result<BinOneHot> {
    if !angle.is_finite() {
        return Err(Error::invalid(MODULE, format!("cannot encode angle {angle}")));
    }
    let raw = ((angle - grid.lo) / grid.width()).floor();
    let bin_index = raw.clamp(0.0, (grid.num_bins - 1) as f64) as usize;
    Ok(BinOneHot { bin_index })
}

/// Expected angle `sum_i probs[i] * center_i`.
pub fn decode(probs: &[f64], grid: &BinGrid) -> Result<f64> {
    if probs.len() != grid.num_bins {
        return Err(Error::invalid(
            MODULE,
            format!("distribution has {} entries, grid has {} bins", probs.len(), grid.num_bins),
        ));
    }
    let sum: f64 = probs.iter().sum();
    if sum.is_nan() || (sum - 1.0).abs() > DECODE_SUM_TOLERANCE {
        return Err(Error::invalid(MODULE, format!("distribution sums to {sum}, not 1")));
    }
    Ok(expectation(probs, grid))
}

/// [`decode`] without the normalisation check.
pub(crate) fn expectation(probs: &[f64], grid: &BinGrid) -> f64 {
    probs.iter().enumerate().map(|(i, p)| p * grid.center(i)).sum()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_with_temperature(logits, 1.0)
}

/// `softmax(logits / temperature)`.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| ((z - max) / temperature).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// `log(softmax(logits / temperature))`, exact for arbitrarily negative entries.
pub fn log_softmax_with_temperature(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|z| (z - max) / temperature).collect();
    let lse = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    shifted.iter().map(|s| s - lse).collect()
}
