use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{logistic, ModelError};
use crate::rng;

pub const MIN_CALIBRATION_SCORES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    /// Target false-alarm probability.
    pub alpha: f64,
    /// Bootstrap percentile taken as the upper bound.
    pub confidence: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            confidence: 0.95,
            resamples: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold_logodds: f64,
    /// The same threshold as a posterior probability.
    pub threshold_posterior: f64,
    pub alpha: f64,
    pub confidence: f64,
    pub resamples: usize,
    pub seed: u64,
    pub n_scores: usize,
    pub fitted_mean: f64,
    pub fitted_sd: f64,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Linear-interpolation percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fit a normal to the non-match log-odds and take the upper `confidence`
/// bootstrap percentile of its `1 - alpha` quantile.
pub fn calibrate_threshold(nonmatch_scores: &[f64], cfg: &CalibrationConfig) -> Result<Calibration, ModelError> {
    let bad = |m: String| Err(ModelError::Calibration(m));
    if nonmatch_scores.len() < MIN_CALIBRATION_SCORES {
        return bad(format!(
            "{} non-match scores, at least {MIN_CALIBRATION_SCORES} are needed",
            nonmatch_scores.len()
        ));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return bad(format!("alpha {} must lie in (0, 1)", cfg.alpha));
    }
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return bad(format!("confidence {} must lie in (0, 1)", cfg.confidence));
    }
    if cfg.resamples == 0 {
        return bad("resamples must be >= 1".into());
    }
    if nonmatch_scores.iter().any(|v| !v.is_finite()) {
        return bad("non-finite score".into());
    }
    let (fitted_mean, fitted_sd) = mean_sd(nonmatch_scores);
    if !(fitted_sd > 0.0) {
        return bad("non-match scores have zero variance".into());
    }
    let z = Normal::standard().inverse_cdf(1.0 - cfg.alpha);
    let n = nonmatch_scores.len();
    let mut g = rng::seeded(cfg.seed);
    let mut buf = vec![0.0; n];
    let mut qs: Vec<f64> = (0..cfg.resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = nonmatch_scores[g.random_range(0..n)];
            }
            let (m, s) = mean_sd(&buf);
            m + z * s
        })
        .collect();
    qs.sort_by(f64::total_cmp);
    let t = percentile(&qs, cfg.confidence);
    Ok(Calibration {
        threshold_logodds: t,
        threshold_posterior: logistic(t),
        alpha: cfg.alpha,
        confidence: cfg.confidence,
        resamples: cfg.resamples,
        seed: cfg.seed,
        n_scores: n,
        fitted_mean,
        fitted_sd,
    })
}
