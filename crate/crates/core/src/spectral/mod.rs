//! Amplitude spectra, banded radial-frequency correlations and the Fisher-z
//! observation matrices built from them.

mod band;
mod dataset;
mod observation;
mod spectrum;

pub use band::{band_cells, band_correlation, fisher_z, Band, BandPlan, FISHER_EPS, MIN_BAND_CELLS};
pub use dataset::{read_dataset, write_dataset};
pub use observation::{build_pair_observation, observation_from_spectra, Label, PairId, PairObservation};
pub use spectrum::{amplitude_spectrum, full_spectrum_modulus, BandSpectrum, SpectrumOptions, Window};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("transform size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("transform size {n} is smaller than the {rows}x{cols} image")]
    TransformTooSmall { n: usize, rows: usize, cols: usize },
    #[error("spectra do not share grid geometry")]
    GeometryMismatch,
    #[error("band [{lo}, {hi}) holds {cells} cells, at least {min} are needed")]
    TooFewCells { lo: f64, hi: f64, cells: usize, min: usize },
    #[error("zero amplitude variance in band [{lo}, {hi}); correlation undefined")]
    ZeroVariance { lo: f64, hi: f64 },
    #[error("correlation {0} lies outside [-1, 1]")]
    InvalidCorrelation(f64),
    #[error("invalid band plan: {0}")]
    BadBandPlan(String),
    #[error("{base} base images vs {tip} tip images")]
    CountMismatch { base: usize, tip: usize },
    #[error("need at least 2 image positions, got {0}")]
    TooFewImages(usize),
    #[error("band {band} ([{lo}, {hi})), image {image}: {source}")]
    AtCell {
        band: usize,
        lo: f64,
        hi: f64,
        image: usize,
        #[source]
        source: Box<SpectralError>,
    },
    #[error("dataset: {0}")]
    Dataset(String),
}
