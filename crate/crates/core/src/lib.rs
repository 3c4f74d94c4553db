//! Quantitative matching of fractured-surface fragments.
//!
//! The pipeline runs from raw topography to a calibrated decision:
//!
//! * [`surface`] loads and cleans height maps and measures roughness scaling,
//! * [`spectral`] turns aligned image pairs into banded Fisher-z correlation matrices,
//! * [`mxdist`] provides the matrix-variate normal and t distributions,
//! * [`emfit`] fits the structured matrix-variate t model by EM,
//! * [`matchkit`] trains the two-class match/non-match model, scores and calibrates,
//! * [`simharness`] synthesizes self-affine surfaces and runs the evaluation protocols.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod emfit;
pub mod matchkit;
pub mod mxdist;
pub mod rng;
pub mod simharness;
pub mod spectral;
pub mod surface;

pub use emfit::{fit_mxt, profile_loglik_rho, FitConfig, FitError, FitReport};
pub use matchkit::{
    calibrate_threshold, classify, classify_subset, posterior_match, train, Calibration, CalibrationConfig, Decision,
    Evidence, MatchModel, ModelError, Threshold,
};
pub use mxdist::{
    ar1_build, multigamma_ln, mxn_logpdf, mxt_logpdf, mxt_sample, Ar1Matrix, DistError, MatrixT, MxVtParams,
};
pub use simharness::{
    peacock_test_2d, run_loocv, run_subset_sweep, synth_pair, synth_surface, SimError, SimSpec, TallyTable,
};
pub use spectral::{
    amplitude_spectrum, band_correlation, build_pair_observation, fisher_z, BandPlan, BandSpectrum, Label, PairId,
    PairObservation, SpectralError, SpectrumOptions,
};
pub use surface::{
    despike, detrend_plane, fit_self_affine, height_height_correlation, load_height_map, HeightMap, MapFormat,
    RoughnessCurve, SurfaceError,
};
