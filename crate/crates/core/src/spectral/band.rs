use serde::{Deserialize, Serialize};

use super::{BandSpectrum, SpectralError};

/// Fisher-z clamp: correlations are held inside `[-1 + eps, 1 - eps]`.
pub const FISHER_EPS: f64 = 1e-12;

/// Fewest cells a band may hold before its correlation is considered degenerate.
pub const MIN_BAND_CELLS: usize = 30;

/// Half-open radial frequency interval `[lo, hi)` in cycles/mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.lo && f < self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPlan {
    pub bands: Vec<Band>,
    /// Half-open `[lo, hi)` in degrees within `[0, 180)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angular_sector: Option<(f64, f64)>,
}

impl Default for BandPlan {
    fn default() -> Self {
        Self {
            bands: vec![Band::new(5.0, 10.0), Band::new(10.0, 20.0)],
            angular_sector: None,
        }
    }
}

impl BandPlan {
    pub fn new(bands: Vec<Band>, angular_sector: Option<(f64, f64)>) -> Result<Self, SpectralError> {
        let plan = Self { bands, angular_sector };
        plan.validate()?;
        Ok(plan)
    }

    pub fn p(&self) -> usize {
        self.bands.len()
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        let bad = |m: String| Err(SpectralError::BadBandPlan(m));
        if self.bands.is_empty() {
            return bad("no bands".into());
        }
        for (i, b) in self.bands.iter().enumerate() {
            if !(b.lo >= 0.0 && b.lo < b.hi && b.hi.is_finite()) {
                return bad(format!("band {i} [{}, {}) is not a valid interval", b.lo, b.hi));
            }
            if i > 0 && b.lo < self.bands[i - 1].hi {
                return bad(format!("band {i} overlaps or precedes band {}", i - 1));
            }
        }
        if let Some((lo, hi)) = self.angular_sector {
            if !(lo >= 0.0 && lo < hi && hi <= 180.0) {
                return bad(format!("sector [{lo}, {hi}) must lie in [0, 180)"));
            }
        }
        Ok(())
    }

    /// Parse `"5-10,10-20"`.
    pub fn parse(s: &str) -> Result<Self, SpectralError> {
        let bands = s
            .split(',')
            .map(|part| {
                let (lo, hi) = part
                    .trim()
                    .split_once('-')
                    .ok_or_else(|| SpectralError::BadBandPlan(format!("expected lo-hi, got {part:?}")))?;
                let num = |x: &str| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| SpectralError::BadBandPlan(format!("bad number {x:?}")))
                };
                Ok(Band::new(num(lo)?, num(hi)?))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(bands, None)
    }

    pub fn with_sector(mut self, sector: Option<(f64, f64)>) -> Result<Self, SpectralError> {
        self.angular_sector = sector;
        self.validate()?;
        Ok(self)
    }
}

/// Whether half-plane cell `(ky, kx)` is the canonical copy of its frequency.
/// The `ky = 0` and `ky = n/2` rows hold conjugate pairs `kx` and `-kx`;
/// only `kx >= 0` (and the self-conjugate `kx = -n/2`) are kept there.
fn canonical(ky: usize, kx: i64, n: usize) -> bool {
    let half = n / 2;
    if ky == 0 || ky == half {
        kx >= 0 || kx == -(half as i64)
    } else {
        true
    }
}

/// Flat indices into the half-plane amplitude grid of the cells in `band`.
pub fn band_cells(spec: &BandSpectrum, band: Band, sector: Option<(f64, f64)>) -> Vec<usize> {
    let n = spec.transform_size();
    let half = n / 2;
    let df = spec.df();
    let mut out = Vec::new();
    for ky in 0..=half {
        for c in 0..n {
            let kx = c as i64 - half as i64;
            if !canonical(ky, kx, n) {
                continue;
            }
            let (fx, fy) = (kx as f64 * df, ky as f64 * df);
            if !band.contains(fx.hypot(fy)) {
                continue;
            }
            if let Some((lo, hi)) = sector {
                let theta = fy.atan2(fx).to_degrees();
                if !(theta >= lo && theta < hi) {
                    continue;
                }
            }
            out.push(ky * n + c);
        }
    }
    out
}

/// Pearson correlation of two amplitude fields restricted to `cells`.
pub(crate) fn correlate_cells(a: &[f64], b: &[f64], cells: &[usize], band: Band) -> Result<f64, SpectralError> {
    let n = cells.len() as f64;
    let (mut ma, mut mb) = (0.0, 0.0);
    for &i in cells {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &i in cells {
        let (da, db) = (a[i] - ma, b[i] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return Err(SpectralError::ZeroVariance {
            lo: band.lo,
            hi: band.hi,
        });
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub(crate) fn checked_cells(
    spec: &BandSpectrum,
    band: Band,
    sector: Option<(f64, f64)>,
) -> Result<Vec<usize>, SpectralError> {
    let cells = band_cells(spec, band, sector);
    if cells.len() < MIN_BAND_CELLS {
        return Err(SpectralError::TooFewCells {
            lo: band.lo,
            hi: band.hi,
            cells: cells.len(),
            min: MIN_BAND_CELLS,
        });
    }
    Ok(cells)
}

/// Pearson correlation of the amplitudes of `a` and `b` over the cells with
/// radial frequency in `band` (and polar angle in `sector`).
pub fn band_correlation(
    a: &BandSpectrum,
    b: &BandSpectrum,
    band: Band,
    sector: Option<(f64, f64)>,
) -> Result<f64, SpectralError> {
    if !a.same_geometry(b) {
        return Err(SpectralError::GeometryMismatch);
    }
    let cells = checked_cells(a, band, sector)?;
    correlate_cells(a.amplitude(), b.amplitude(), &cells, band)
}

/// `arctanh` of `r` clamped to `[-1 + eps, 1 - eps]`.
pub fn fisher_z(r: f64) -> Result<f64, SpectralError> {
    if !(r.abs() <= 1.0 + FISHER_EPS) {
        return Err(SpectralError::InvalidCorrelation(r));
    }
    // std's atanh is not exactly odd; evaluate on |r|.
    let a = r.abs().min(1.0 - FISHER_EPS).atanh();
    Ok(if r < 0.0 { -a } else { a })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_with(n: usize, pitch: f64, f: impl Fn(usize) -> f64) -> BandSpectrum {
        BandSpectrum::from_parts(n, pitch, (0..(n / 2 + 1) * n).map(f).collect())
    }

    #[test]
    fn default_plan_cell_counts_at_instrument_geometry() {
        let s = spec_with(1024, 0.55, |_| 0.0);
        assert_eq!(band_cells(&s, Band::new(5.0, 10.0), None).len(), 38);
        assert_eq!(band_cells(&s, Band::new(10.0, 20.0), None).len(), 152);
    }

    #[test]
    fn dc_and_axis_duplicates_counted_once() {
        let s = spec_with(64, 1.0, |_| 0.0);
        let df = s.df();
        // Only DC lies below half a frequency step.
        assert_eq!(band_cells(&s, Band::new(0.0, 0.5 * df), None), vec![32]);
        // The ring at |f| = df keeps (kx, ky) = (1, 0) and (0, 1); (-1, 0) is the conjugate of (1, 0).
        let ring = band_cells(&s, Band::new(0.5 * df, 1.2 * df), None);
        assert_eq!(ring.len(), 2);
        let ring = band_cells(&s, Band::new(0.5 * df, 1.2 * df), Some((0.0, 180.0)));
        assert_eq!(ring.len(), 2);
    }

    #[test]
    fn upper_edge_belongs_to_next_band() {
        let s = spec_with(64, 1.0, |_| 0.0);
        let df = s.df();
        let a = band_cells(&s, Band::new(0.5 * df, df), None);
        let b = band_cells(&s, Band::new(df, 1.2 * df), None);
        assert!(a.is_empty());
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn affine_amplitudes_correlate_fully() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        assert_eq!(
            correlate_cells(&a, &b, &[0, 1, 2, 3], Band::new(0.0, 1.0)).unwrap(),
            1.0
        );
    }

    #[test]
    fn zero_variance_is_an_error() {
        let s = spec_with(1024, 0.55, |_| 3.0);
        assert!(matches!(
            band_correlation(&s, &s, Band::new(5.0, 10.0), None),
            Err(SpectralError::ZeroVariance { .. })
        ));
    }

    #[test]
    fn too_few_cells_rejected() {
        let s = spec_with(128, 0.55, |i| i as f64);
        assert!(matches!(
            band_correlation(&s, &s, Band::new(5.0, 6.0), None),
            Err(SpectralError::TooFewCells { .. })
        ));
    }

    #[test]
    fn fisher_values() {
        assert_eq!(fisher_z(0.0).unwrap(), 0.0);
        assert_eq!(fisher_z(-0.3).unwrap(), -fisher_z(0.3).unwrap());
        assert_eq!(fisher_z(1.0).unwrap(), (1.0 - FISHER_EPS).atanh());
        assert!(fisher_z(1.0 + 1e-9).is_err());
        assert!(fisher_z(f64::NAN).is_err());
    }

    #[test]
    fn plan_validation_and_parse() {
        let p = BandPlan::parse("5-10, 10-20").unwrap();
        assert_eq!(p, BandPlan::default());
        assert!(BandPlan::parse("10-20,5-10").is_err());
        assert!(BandPlan::parse("5-10,8-20").is_err());
        assert!(BandPlan::parse("10-5").is_err());
        assert!(BandPlan::default().with_sector(Some((0.0, 200.0))).is_err());
        assert!(BandPlan::default().with_sector(Some((30.0, 60.0))).is_ok());
    }
}
