//! Synthetic self-affine surfaces and the evaluation protocols.

mod peacock;
mod protocols;
mod synth;
mod tally;

pub use peacock::{peacock_statistic, peacock_test_2d, PeacockResult, PEACOCK_MIN_PERMUTATIONS, PEACOCK_MIN_POINTS};
pub use protocols::{
    cross_set_cases, loocv_cases, model_label, run_loocv, run_subset_sweep, simulate_fragments, simulate_specimen_set,
    surfaces_of, Fragments, SweepCase, LOOCV_MIN_SURFACES,
};
pub use synth::{synth_pair, synth_surface, SimSpec, KNEE_GRAINS};
pub use tally::{TallyRow, TallyTable, TALLY_HEADER};

use thiserror::Error;

use crate::matchkit::ModelError;
use crate::spectral::SpectralError;
use crate::surface::SurfaceError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    Spec(String),
    #[error("{found} surfaces, at least {min} are needed")]
    TooFewSurfaces { found: usize, min: usize },
    #[error("subset size {k} outside 1..={q}")]
    SubsetSize { k: usize, q: usize },
    #[error("degenerate fit while holding out {held_out}: {source}")]
    Degenerate {
        held_out: String,
        #[source]
        source: ModelError,
    },
    #[error("held out {held_out}: {source}")]
    Fold {
        held_out: String,
        #[source]
        source: ModelError,
    },
    #[error("{0} has no match/non-match label")]
    Unlabeled(String),
    #[error("tally counts inconsistent: {0}")]
    Tally(String),
    #[error("peacock test: {0}")]
    Peacock(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}
