//! Height-height correlation and self-affine scaling fits.

use super::{HeightMap, SurfaceError};

/// Log-unit departure from the fitted power law that marks the transition.
pub const TRANSITION_TOLERANCE: f64 = 0.10;

/// `dh(dx) = sqrt(<[h(x + dx) - h(x)]^2>)` sampled at integer-pixel lags.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughnessCurve {
    /// Lags in micrometers, strictly increasing.
    pub lags: Vec<f64>,
    /// RMS height difference at each lag, micrometers.
    pub values: Vec<f64>,
    /// Lags (micrometers) that had no valid pair of cells.
    pub absent_lags: Vec<f64>,
    pub fitted_exponent: Option<f64>,
    pub transition_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfAffineFit {
    pub exponent: f64,
    /// Intercept of `ln dh = intercept + exponent * ln dx`.
    pub intercept: f64,
    pub transition_scale: Option<f64>,
}

/// Height-height correlation along the x (column) direction, averaged over
/// every row. Pairs touching a masked cell are skipped.
pub fn height_height_correlation(map: &HeightMap, max_lag: f64) -> Result<RoughnessCurve, SurfaceError> {
    let pitch = map.pitch();
    let limit = map.cols() as f64 * pitch / 2.0;
    if !(max_lag < limit) {
        return Err(SurfaceError::LagTooLarge { max_lag, limit });
    }
    let max_px = (max_lag / pitch + 1e-9).floor() as usize;
    let (rows, cols) = (map.rows(), map.cols());
    let h = map.heights();
    let ok = map.mask();
    let mut curve = RoughnessCurve {
        lags: Vec::new(),
        values: Vec::new(),
        absent_lags: Vec::new(),
        fitted_exponent: None,
        transition_scale: None,
    };
    for lag in 1..=max_px {
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in 0..rows {
            let row = r * cols;
            for c in 0..cols - lag {
                let (i, j) = (row + c, row + c + lag);
                if ok[i] && ok[j] {
                    let d = h[j] - h[i];
                    sum += d * d;
                    n += 1;
                }
            }
        }
        let dx = lag as f64 * pitch;
        if n == 0 {
            curve.absent_lags.push(dx);
        } else {
            curve.lags.push(dx);
            curve.values.push((sum / n as f64).sqrt());
        }
    }
    Ok(curve)
}

/// Fit `ln dh` against `ln dx` over `[lo, hi]` and scan upward for the first
/// lag that departs from the power law by more than 0.10 in natural-log units.
pub fn fit_self_affine(curve: &RoughnessCurve, fit_range: (f64, f64)) -> Result<SelfAffineFit, SurfaceError> {
    let (lo, hi) = fit_range;
    let pts: Vec<(f64, f64)> = curve
        .lags
        .iter()
        .zip(&curve.values)
        .filter(|(l, _)| **l >= lo && **l <= hi)
        .map(|(l, v)| (*l, *v))
        .collect();
    if pts.len() < 5 {
        return Err(SurfaceError::FitRangeTooNarrow {
            lo,
            hi,
            found: pts.len(),
        });
    }
    if let Some(&(lag, _)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(SurfaceError::NonPositiveRoughness { lag });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|(l, _)| l.ln()).sum::<f64>() / n;
    let my = pts.iter().map(|(_, v)| v.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (l, v) in &pts {
        let (dx, dy) = (l.ln() - mx, v.ln() - my);
        sxy += dx * dy;
        sxx += dx * dx;
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let transition_scale = curve
        .lags
        .iter()
        .zip(&curve.values)
        .filter(|(l, _)| **l > hi)
        .find(|(l, v)| {
            // A zero value is an infinite log departure.
            !(**v > 0.0) || (v.ln() - (intercept + exponent * l.ln())).abs() > TRANSITION_TOLERANCE
        })
        .map(|(l, _)| *l);
    Ok(SelfAffineFit {
        exponent,
        intercept,
        transition_scale,
    })
}

impl RoughnessCurve {
    /// Record a fit on the curve.
    pub fn with_fit(mut self, fit: &SelfAffineFit) -> Self {
        self.fitted_exponent = Some(fit.exponent);
        self.transition_scale = fit.transition_scale;
        self
    }
}
