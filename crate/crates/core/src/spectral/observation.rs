use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::band::{checked_cells, correlate_cells};
use super::{amplitude_spectrum, fisher_z, BandPlan, BandSpectrum, SpectralError, SpectrumOptions};
use crate::surface::HeightMap;

/// Ordered (base specimen, tip specimen) identifier, written `base:tip`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairId {
    pub base: String,
    pub tip: String,
}

impl PairId {
    pub fn new(base: impl Into<String>, tip: impl Into<String>) -> Self {
        Self {
            base: base.into(),
            tip: tip.into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (b, t) = s.split_once(':')?;
        Some(Self::new(b, t))
    }

    pub fn involves(&self, specimen: &str) -> bool {
        self.base == specimen || self.tip == specimen
    }
}

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.base, self.tip)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Match,
    NonMatch,
    Unknown,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Match => "match",
            Label::NonMatch => "non-match",
            Label::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "match" => Some(Label::Match),
            "non-match" | "nonmatch" => Some(Label::NonMatch),
            "unknown" | "" => Some(Label::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Band-by-position correlation matrix for one surface pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairObservation {
    pub pair_id: PairId,
    pub label: Label,
    pub band_plan: BandPlan,
    /// Raw correlations, `p x q`.
    pub r: DMatrix<f64>,
    /// Fisher-z correlations, `p x q`.
    pub z: DMatrix<f64>,
}

impl PairObservation {
    /// Build from raw correlations, applying the Fisher transform.
    pub fn from_correlations(
        pair_id: PairId,
        label: Label,
        band_plan: BandPlan,
        r: DMatrix<f64>,
    ) -> Result<Self, SpectralError> {
        if r.nrows() != band_plan.p() {
            return Err(SpectralError::Dataset(format!(
                "{} rows for a {}-band plan",
                r.nrows(),
                band_plan.p()
            )));
        }
        if r.ncols() < 2 {
            return Err(SpectralError::TooFewImages(r.ncols()));
        }
        let mut z = r.clone();
        for v in z.iter_mut() {
            *v = fisher_z(*v)?;
        }
        Ok(Self {
            pair_id,
            label,
            band_plan,
            r,
            z,
        })
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    pub fn p(&self) -> usize {
        self.z.nrows()
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }
}

/// Correlate precomputed spectra position by position.
pub fn observation_from_spectra(
    base: &[BandSpectrum],
    tip: &[BandSpectrum],
    plan: &BandPlan,
    pair_id: PairId,
) -> Result<PairObservation, SpectralError> {
    if base.len() != tip.len() {
        return Err(SpectralError::CountMismatch {
            base: base.len(),
            tip: tip.len(),
        });
    }
    let q = base.len();
    if q < 2 {
        return Err(SpectralError::TooFewImages(q));
    }
    plan.validate()?;
    if base.iter().chain(tip).any(|s| !s.same_geometry(&base[0])) {
        return Err(SpectralError::GeometryMismatch);
    }
    let mut r = DMatrix::zeros(plan.p(), q);
    for (i, &band) in plan.bands.iter().enumerate() {
        let ctx = |image: usize, e: SpectralError| SpectralError::AtCell {
            band: i,
            lo: band.lo,
            hi: band.hi,
            image,
            source: Box::new(e),
        };
        let cells = checked_cells(&base[0], band, plan.angular_sector).map_err(|e| ctx(0, e))?;
        for j in 0..q {
            r[(i, j)] =
                correlate_cells(base[j].amplitude(), tip[j].amplitude(), &cells, band).map_err(|e| ctx(j, e))?;
        }
    }
    PairObservation::from_correlations(pair_id, Label::Unknown, plan.clone(), r)
}

/// Spectra and banded correlations for position-aligned image sequences.
/// The label starts as `Unknown`.
pub fn build_pair_observation(
    base: &[HeightMap],
    tip: &[HeightMap],
    plan: &BandPlan,
    opts: &SpectrumOptions,
    pair_id: PairId,
) -> Result<PairObservation, SpectralError> {
    if base.len() != tip.len() {
        return Err(SpectralError::CountMismatch {
            base: base.len(),
            tip: tip.len(),
        });
    }
    let spectra = |maps: &[HeightMap]| {
        maps.iter()
            .map(|m| amplitude_spectrum(m, opts))
            .collect::<Result<Vec<_>, _>>()
    };
    observation_from_spectra(&spectra(base)?, &spectra(tip)?, plan, pair_id)
}
