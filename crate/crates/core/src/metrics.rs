//! Depth evaluation: error metrics over observed pixels, median alignment and
//! the scale-invariant log loss.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Prediction / ground truth pair. Ground-truth values at or below
/// `min_gt` are unobserved and skipped by every metric.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPair {
    pred: Vec<f64>,
    gt: Vec<f64>,
    min_gt: f64,
}

impl DepthPair {
    pub fn new(pred: Vec<f64>, gt: Vec<f64>) -> Result<Self> {
        Self::with_threshold(pred, gt, 0.0)
    }

    pub fn with_threshold(pred: Vec<f64>, gt: Vec<f64>, min_gt: f64) -> Result<Self> {
        if pred.len() != gt.len() {
            return Err(Error::shape("prediction and ground truth differ in size"));
        }
        if pred.iter().chain(&gt).any(|v| !v.is_finite()) {
            return Err(Error::domain("depth values must be finite"));
        }
        if gt.iter().any(|&v| v < 0.0) || pred.iter().any(|&v| v < 0.0) {
            return Err(Error::domain("depth values must be non-negative"));
        }
        if !(min_gt.is_finite() && min_gt >= 0.0) {
            return Err(Error::config("observation threshold must be a non-negative number"));
        }
        Ok(DepthPair { pred, gt, min_gt })
    }

    pub fn from_f32(pred: &[f32], gt: &[f32], min_gt: f64) -> Result<Self> {
        Self::with_threshold(
            pred.iter().map(|&v| v as f64).collect(),
            gt.iter().map(|&v| v as f64).collect(),
            min_gt,
        )
    }

    pub fn len(&self) -> usize {
        self.pred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.gt[i] > self.min_gt
    }

    /// Number of observed pixels `K`.
    pub fn observed(&self) -> usize {
        (0..self.gt.len()).filter(|&i| self.is_observed(i)).count()
    }

    fn observed_pairs(&self) -> Vec<(f64, f64)> {
        self.pred
            .iter()
            .zip(&self.gt)
            .filter(|(_, &g)| g > self.min_gt)
            .map(|(&p, &g)| (p, g))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub aligned: bool,
}

impl DepthMetrics {
    /// `(name, value)` pairs in report order.
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("abs_rel", self.abs_rel),
            ("sq_rel", self.sq_rel),
            ("rmse", self.rmse),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta3", self.delta3),
        ]
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Median; even counts average the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Scale applied to the prediction by median alignment.
pub fn median_scale(p: &DepthPair) -> Result<f64> {
    let pairs = p.observed_pairs();
    if pairs.is_empty() {
        return Err(Error::EmptyMask);
    }
    let pm = median(&pairs.iter().map(|x| x.0).collect::<Vec<_>>()).unwrap_or(0.0);
    let gm = median(&pairs.iter().map(|x| x.1).collect::<Vec<_>>()).unwrap_or(0.0);
    if pm <= 0.0 {
        return Err(Error::DegenerateScale);
    }
    Ok(gm / pm)
}

/// Abs Rel, Sq Rel, RMSE and the `δ < 1.25^m` accuracies over observed
/// pixels, optionally after median alignment of the prediction.
pub fn evaluate(p: &DepthPair, align: bool) -> Result<DepthMetrics> {
    let mut pairs = p.observed_pairs();
    if pairs.is_empty() {
        return Err(Error::EmptyMask);
    }
    if align {
        let s = median_scale(p)?;
        pairs.iter_mut().for_each(|x| x.0 *= s);
    }
    let k = pairs.len() as f64;
    let abs: Vec<f64> = pairs.iter().map(|&(d, g)| (d - g).abs() / g).collect();
    let sq: Vec<f64> = pairs.iter().map(|&(d, g)| (d - g) * (d - g)).collect();
    let sq_rel: Vec<f64> = pairs.iter().zip(&sq).map(|(&(_, g), s)| s / g).collect();
    let ratio: Vec<f64> = pairs
        .iter()
        .map(|&(d, g)| if d > 0.0 { (d / g).max(g / d) } else { f64::INFINITY })
        .collect();
    let frac = |t: f64| ratio.iter().filter(|&&r| r < t).count() as f64 / k;
    Ok(DepthMetrics {
        abs_rel: pairwise_sum(&abs) / k,
        sq_rel: pairwise_sum(&sq_rel) / k,
        rmse: math::sqrt(pairwise_sum(&sq) / k),
        delta1: frac(1.25),
        delta2: frac(1.25 * 1.25),
        delta3: frac(1.25 * 1.25 * 1.25),
        aligned: align,
    })
}

pub const SILOG_ALPHA: f64 = 10.0;
pub const SILOG_LAMBDA: f64 = 0.85;

/// Scale-invariant log loss
/// `α·√(mean(Δ²) − λ·mean(Δ)²)` with `Δ = log D − log D*`.
pub fn silog(p: &DepthPair, alpha: f64, lambda: f64) -> Result<f64> {
    let pairs = p.observed_pairs();
    if pairs.is_empty() {
        return Err(Error::EmptyMask);
    }
    if pairs.iter().any(|&(d, _)| d <= 0.0) {
        return Err(Error::domain("SILog needs positive predicted depth on observed pixels"));
    }
    let k = pairs.len() as f64;
    let diff: Vec<f64> = pairs.iter().map(|&(d, g)| math::ln(d) - math::ln(g)).collect();
    let sq: Vec<f64> = diff.iter().map(|d| d * d).collect();
    let mean_sq = pairwise_sum(&sq) / k;
    let mean = pairwise_sum(&diff) / k;
    Ok(alpha * math::sqrt((mean_sq - lambda * mean * mean).max(0.0)))
}
