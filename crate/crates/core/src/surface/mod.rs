//! Height maps: loading, validation, tilt and spike cleanup, and roughness
//! scaling analysis.

mod io;
mod preprocess;
mod roughness;

pub use io::{load_height_map, parse_csv_grid, read_fhm1, save_fhm1, write_fhm1, MapFormat};
pub use preprocess::{despike, detrend_plane, fit_plane, Plane};
pub use roughness::{fit_self_affine, height_height_correlation, RoughnessCurve, SelfAffineFit};

use thiserror::Error;

/// Smallest accepted grid edge, in pixels.
pub const MIN_EDGE: usize = 64;
/// Largest accepted fraction of masked pixels.
pub const MAX_MASKED_FRACTION: f64 = 0.10;

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("non-rectangular grid: row {row} has {found} values, expected {expected}")]
    NonRectangular { row: usize, expected: usize, found: usize },
    #[error("unparseable value {value:?} at row {row}, column {col}")]
    BadValue { row: usize, col: usize, value: String },
    #[error("pixel pitch must be positive and finite, got {0}")]
    BadPitch(f64),
    #[error("grid {rows}x{cols} is smaller than the {min}x{min} minimum")]
    TooSmall { rows: usize, cols: usize, min: usize },
    #[error("masked fraction {fraction:.4} exceeds the 0.10 limit")]
    TooManyMasked { fraction: f64 },
    #[error("height buffer has {found} values, grid needs {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("plane fit is underdetermined ({valid} usable cells)")]
    Underdetermined { valid: usize },
    #[error("despike window must be 3, 5 or 7 (got {0})")]
    BadWindow(usize),
    #[error("despike threshold must be positive (got {0})")]
    BadThreshold(f64),
    #[error("max lag {max_lag} um must be below half the map width {limit} um")]
    LagTooLarge { max_lag: f64, limit: f64 },
    #[error("fit range [{lo}, {hi}] holds {found} lags, at least 5 are needed")]
    FitRangeTooNarrow { lo: f64, hi: f64, found: usize },
    #[error("roughness value at lag {lag} um is not positive, log undefined")]
    NonPositiveRoughness { lag: f64 },
}

/// Rectangular grid of surface heights in micrometers.
///
/// Heights are stored row-major. Masked cells hold `NaN` and are flagged
/// invalid in the mask; every valid height is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    rows: usize,
    cols: usize,
    pitch: f64,
    heights: Vec<f64>,
    valid: Vec<bool>,
    pub meta: String,
}

impl HeightMap {
    /// Build a map from row-major heights. Non-finite heights become masked cells.
    pub fn new(
        rows: usize,
        cols: usize,
        pitch: f64,
        mut heights: Vec<f64>,
        meta: impl Into<String>,
    ) -> Result<Self, SurfaceError> {
        if heights.len() != rows * cols {
            return Err(SurfaceError::SizeMismatch {
                expected: rows * cols,
                found: heights.len(),
            });
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(SurfaceError::BadPitch(pitch));
        }
        if rows < MIN_EDGE || cols < MIN_EDGE {
            return Err(SurfaceError::TooSmall {
                rows,
                cols,
                min: MIN_EDGE,
            });
        }
        let valid: Vec<bool> = heights.iter().map(|h| h.is_finite()).collect();
        for (h, &ok) in heights.iter_mut().zip(&valid) {
            if !ok {
                *h = f64::NAN;
            }
        }
        let masked = valid.iter().filter(|v| !**v).count();
        let fraction = masked as f64 / (rows * cols) as f64;
        if fraction > MAX_MASKED_FRACTION {
            return Err(SurfaceError::TooManyMasked { fraction });
        }
        Ok(Self {
            rows,
            cols,
            pitch,
            heights,
            valid,
            meta: meta.into(),
        })
    }

    /// Build a map by evaluating `f(row, col)` in micrometers.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        pitch: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, SurfaceError> {
        let mut h = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                h.push(f(r, c));
            }
        }
        Self::new(rows, cols, pitch, h, "")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Inter-pixel spacing in micrometers.
    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Row-major heights; masked cells are `NaN`.
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Row-major validity flags (`true` = measured).
    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.cols + col;
        self.valid[i].then(|| self.heights[i])
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[row * self.cols + col]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn masked_fraction(&self) -> f64 {
        1.0 - self.valid_count() as f64 / (self.rows * self.cols) as f64
    }

    /// Mean of the valid heights.
    pub fn mean(&self) -> f64 {
        let (s, n) = self.valid_iter().fold((0.0, 0usize), |(s, n), h| (s + h, n + 1));
        s / n as f64
    }

    /// Root-mean-square deviation of the valid heights about their mean.
    pub fn rms(&self) -> f64 {
        let m = self.mean();
        let (s, n) = self
            .valid_iter()
            .fold((0.0, 0usize), |(s, n), h| (s + (h - m) * (h - m), n + 1));
        (s / n as f64).sqrt()
    }

    pub fn valid_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.heights
            .iter()
            .zip(&self.valid)
            .filter_map(|(h, v)| v.then_some(*h))
    }

    /// Copy of the `rows x cols` window whose top-left corner is `(row, col)`.
    pub fn window(&self, row: usize, col: usize, rows: usize, cols: usize) -> Result<Self, SurfaceError> {
        assert!(
            row + rows <= self.rows && col + cols <= self.cols,
            "window out of bounds"
        );
        let mut h = Vec::with_capacity(rows * cols);
        for r in row..row + rows {
            let start = r * self.cols + col;
            h.extend_from_slice(&self.heights[start..start + cols]);
        }
        Self::new(rows, cols, self.pitch, h, self.meta.clone())
    }

    /// Same geometry and mask with new heights for the valid cells.
    pub(crate) fn with_heights(&self, heights: Vec<f64>) -> Self {
        debug_assert_eq!(heights.len(), self.heights.len());
        let heights = heights
            .into_iter()
            .zip(&self.valid)
            .map(|(h, v)| if *v { h } else { f64::NAN })
            .collect();
        Self {
            heights,
            ..self.clone()
        }
    }

    /// Add `offset` to every valid height.
    pub fn offset(&self, offset: f64) -> Self {
        self.with_heights(self.heights.iter().map(|h| h + offset).collect())
    }
}
