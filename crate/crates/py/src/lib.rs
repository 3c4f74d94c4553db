//! Python bindings for `fracmatch`.
//!
//! Height maps and observations cross the boundary as nested lists; matrices
//! are lists of rows.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use fracmatch::matchkit::{calibrate_threshold, logit};
use fracmatch::simharness::simulate_specimen_set;
use fracmatch::spectral::{read_dataset, write_dataset};
use fracmatch::surface::save_fhm1;
use fracmatch::{
    build_pair_observation, classify, despike, detrend_plane, fit_self_affine, height_height_correlation,
    load_height_map, peacock_test_2d, posterior_match, synth_pair, BandPlan, CalibrationConfig, Evidence, FitConfig,
    HeightMap, Label, MapFormat, MatchModel, PairId, PairObservation, SimSpec, SpectrumOptions, Threshold,
};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn os_err(path: &std::path::Path, e: std::io::Error) -> PyErr {
    PyOSError::new_err(format!("{}: {e}", path.display()))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn plan_of(bands: &str, sector: Option<(f64, f64)>) -> PyResult<BandPlan> {
    BandPlan::parse(bands)
        .and_then(|p| p.with_sector(sector))
        .map_err(value_err)
}

/// Simulation settings from keyword arguments; unknown keys are an error.
fn sim_spec(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<SimSpec> {
    let mut spec = SimSpec::default();
    if let Some(kw) = kwargs {
        for (key, value) in kw.iter() {
            let key: String = key.extract()?;
            match key.as_str() {
                "hurst" => spec.hurst = value.extract()?,
                "grain_scale" => spec.grain_scale = value.extract()?,
                "image_size" => spec.image_size = value.extract()?,
                "pitch" => spec.pitch = value.extract()?,
                "k" => spec.k = value.extract()?,
                "overlap" => spec.overlap = value.extract()?,
                "noise_sigma" => spec.noise_sigma = value.extract()?,
                "misalign_px" => spec.misalign_px = value.extract()?,
                "seed" => spec.seed = value.extract()?,
                other => return Err(value_err(format!("unknown simulation setting {other:?}"))),
            }
        }
    }
    spec.validate().map_err(value_err)?;
    Ok(spec)
}

type Roughness = (Vec<f64>, Vec<f64>, f64, Option<f64>);

/// Height map in micrometers. Masked cells read back as NaN.
#[pyclass(name = "HeightMap", module = "fracmatch", frozen)]
struct PyHeightMap(HeightMap);

#[pymethods]
impl PyHeightMap {
    #[new]
    fn new(heights: Vec<Vec<f64>>, pitch: f64) -> PyResult<Self> {
        let rows = heights.len();
        let cols = heights.first().map_or(0, Vec::len);
        if heights.iter().any(|r| r.len() != cols) {
            return Err(value_err("ragged height rows"));
        }
        let flat = heights.into_iter().flatten().collect();
        HeightMap::new(rows, cols, pitch, flat, "").map(Self).map_err(value_err)
    }

    /// FHM1 or a CSV grid; CSV grids need `pitch`.
    #[staticmethod]
    #[pyo3(signature = (path, pitch=None))]
    fn load(path: PathBuf, pitch: Option<f64>) -> PyResult<Self> {
        let format = MapFormat::from_path(&path, pitch).map_err(value_err)?;
        load_height_map(&path, format).map(Self).map_err(value_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_fhm1(&self.0, &path).map_err(value_err)
    }

    #[getter]
    fn rows(&self) -> usize {
        self.0.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.0.cols()
    }

    #[getter]
    fn pitch(&self) -> f64 {
        self.0.pitch()
    }

    fn heights(&self) -> Vec<Vec<f64>> {
        self.0.heights().chunks(self.0.cols()).map(<[f64]>::to_vec).collect()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn rms(&self) -> f64 {
        self.0.rms()
    }

    fn masked_fraction(&self) -> f64 {
        self.0.masked_fraction()
    }

    fn detrend(&self) -> PyResult<Self> {
        detrend_plane(&self.0).map(Self).map_err(value_err)
    }

    #[pyo3(signature = (window=5, threshold=6.0))]
    fn despike(&self, window: usize, threshold: f64) -> PyResult<Self> {
        despike(&self.0, window, threshold).map(Self).map_err(value_err)
    }

    /// `(lags_um, dh_um, exponent, transition_um)` along the rows.
    #[pyo3(signature = (max_lag=300.0, fit_range=(2.0, 30.0)))]
    fn roughness(&self, max_lag: f64, fit_range: (f64, f64)) -> PyResult<Roughness> {
        let curve = height_height_correlation(&self.0, max_lag).map_err(value_err)?;
        let fit = fit_self_affine(&curve, fit_range).map_err(value_err)?;
        Ok((curve.lags, curve.values, fit.exponent, fit.transition_scale))
    }

    fn __repr__(&self) -> String {
        format!(
            "HeightMap({}x{}, pitch={})",
            self.0.rows(),
            self.0.cols(),
            self.0.pitch()
        )
    }
}

/// Banded Fisher-z correlations of one base/tip pair.
#[pyclass(name = "PairObservation", module = "fracmatch", frozen)]
struct PyObservation(PairObservation);

#[pymethods]
impl PyObservation {
    /// Correlate position-aligned base and tip images. `pair_id` is `"base:tip"`.
    #[new]
    #[pyo3(signature = (base, tip, pair_id, label="unknown", bands="5-10,10-20", sector=None, transform_size=None, hann=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        base: Vec<PyRef<'_, PyHeightMap>>,
        tip: Vec<PyRef<'_, PyHeightMap>>,
        pair_id: &str,
        label: &str,
        bands: &str,
        sector: Option<(f64, f64)>,
        transform_size: Option<usize>,
        hann: bool,
    ) -> PyResult<Self> {
        let id = PairId::parse(pair_id).ok_or_else(|| value_err(format!("bad pair id {pair_id:?}")))?;
        let label = Label::parse(label).ok_or_else(|| value_err(format!("bad label {label:?}")))?;
        let plan = plan_of(bands, sector)?;
        let opts = SpectrumOptions {
            transform_size,
            window: if hann {
                fracmatch::spectral::Window::Hann
            } else {
                fracmatch::spectral::Window::None
            },
        };
        let maps = |v: Vec<PyRef<'_, PyHeightMap>>| v.iter().map(|m| m.0.clone()).collect::<Vec<_>>();
        build_pair_observation(&maps(base), &maps(tip), &plan, &opts, id)
            .map(|o| Self(o.with_label(label)))
            .map_err(value_err)
    }

    #[getter]
    fn pair_id(&self) -> String {
        self.0.pair_id.to_string()
    }

    #[getter]
    fn label(&self) -> &'static str {
        self.0.label.as_str()
    }

    #[getter]
    fn r(&self) -> Vec<Vec<f64>> {
        rows_of(&self.0.r)
    }

    #[getter]
    fn z(&self) -> Vec<Vec<f64>> {
        rows_of(&self.0.z)
    }

    #[getter]
    fn p(&self) -> usize {
        self.0.p()
    }

    #[getter]
    fn q(&self) -> usize {
        self.0.q()
    }

    fn with_label(&self, label: &str) -> PyResult<Self> {
        let label = Label::parse(label).ok_or_else(|| value_err(format!("bad label {label:?}")))?;
        Ok(Self(self.0.clone().with_label(label)))
    }

    fn __repr__(&self) -> String {
        format!(
            "PairObservation({}, {}, {}x{})",
            self.0.pair_id,
            self.0.label,
            self.0.p(),
            self.0.q()
        )
    }
}

#[pyclass(name = "Evidence", module = "fracmatch", frozen, get_all)]
struct PyEvidence {
    loglik_match: f64,
    loglik_nonmatch: f64,
    log_lr: f64,
    logodds: f64,
    posterior: f64,
}

impl From<Evidence> for PyEvidence {
    fn from(e: Evidence) -> Self {
        Self {
            loglik_match: e.loglik_match,
            loglik_nonmatch: e.loglik_nonmatch,
            log_lr: e.log_lr,
            logodds: e.logodds,
            posterior: e.posterior,
        }
    }
}

#[pymethods]
impl PyEvidence {
    fn __repr__(&self) -> String {
        format!("Evidence(logodds={}, posterior={})", self.logodds, self.posterior)
    }
}

/// Trained two-class model.
#[pyclass(name = "MatchModel", module = "fracmatch", frozen)]
struct PyModel(MatchModel);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        MatchModel::from_json(text).map(Self).map_err(value_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(value_err)
    }

    #[getter]
    fn p(&self) -> usize {
        self.0.p()
    }

    #[getter]
    fn q(&self) -> usize {
        self.0.q()
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.0.nu()
    }

    #[getter]
    fn prior(&self) -> f64 {
        self.0.prior_match
    }

    #[getter]
    fn threshold_logodds(&self) -> Option<f64> {
        self.0.threshold_logodds
    }

    fn with_prior(&self, prior: f64) -> PyResult<Self> {
        self.0.with_prior(prior).map(Self).map_err(value_err)
    }

    fn posterior(&self, obs: PyRef<'_, PyObservation>) -> PyResult<PyEvidence> {
        posterior_match(&self.0, &obs.0).map(Into::into).map_err(value_err)
    }

    /// `(label, logodds, posterior)`. The threshold uses the CLI syntax.
    #[pyo3(signature = (obs, threshold="default"))]
    fn classify(&self, obs: PyRef<'_, PyObservation>, threshold: &str) -> PyResult<(&'static str, f64, f64)> {
        let t: Threshold = threshold.parse().map_err(value_err)?;
        let d = classify(&self.0, &obs.0, t).map_err(value_err)?;
        Ok((d.label.as_str(), d.evidence.logodds, d.evidence.posterior))
    }

    /// A copy carrying a threshold set from non-match log-odds scores.
    #[pyo3(signature = (nonmatch_scores, alpha=1e-4, confidence=0.95, resamples=2000, seed=0))]
    fn calibrate(
        &self,
        nonmatch_scores: Vec<f64>,
        alpha: f64,
        confidence: f64,
        resamples: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = CalibrationConfig {
            alpha,
            confidence,
            resamples,
            seed,
        };
        let cal = calibrate_threshold(&nonmatch_scores, &cfg).map_err(value_err)?;
        Ok(Self(self.0.clone().with_calibration(cal)))
    }

    fn __repr__(&self) -> String {
        format!(
            "MatchModel(p={}, q={}, nu={}, prior={})",
            self.0.p(),
            self.0.q(),
            self.0.nu(),
            self.0.prior_match
        )
    }
}

/// Fit both classes from labelled observations; unknown labels are skipped.
#[pyfunction]
#[pyo3(signature = (observations, nu=10.0, prior=0.5))]
fn train(observations: Vec<PyRef<'_, PyObservation>>, nu: f64, prior: f64) -> PyResult<PyModel> {
    let pick = |l: Label| {
        observations
            .iter()
            .filter(|o| o.0.label == l)
            .map(|o| o.0.clone())
            .collect::<Vec<_>>()
    };
    let cfg = FitConfig::with_nu(nu);
    cfg.validate().map_err(value_err)?;
    fracmatch::train(&pick(Label::Match), &pick(Label::NonMatch), &cfg, prior)
        .map(PyModel)
        .map_err(value_err)
}

#[pyfunction]
fn read_dataset_csv(path: PathBuf) -> PyResult<Vec<PyObservation>> {
    let f = File::open(&path).map_err(|e| os_err(&path, e))?;
    let obs = read_dataset(BufReader::new(f)).map_err(value_err)?;
    Ok(obs.into_iter().map(PyObservation).collect())
}

#[pyfunction]
fn write_dataset_csv(path: PathBuf, observations: Vec<PyRef<'_, PyObservation>>) -> PyResult<()> {
    let obs: Vec<PairObservation> = observations.iter().map(|o| o.0.clone()).collect();
    let f = File::create(&path).map_err(|e| os_err(&path, e))?;
    write_dataset(BufWriter::new(f), &obs, None).map_err(value_err)
}

/// Base and tip image sequences for one synthetic pair.
#[pyfunction]
#[pyo3(signature = (matched, **spec))]
fn synth(matched: bool, spec: Option<&Bound<'_, PyDict>>) -> PyResult<(Vec<PyHeightMap>, Vec<PyHeightMap>)> {
    let (b, t) = synth_pair(&sim_spec(spec)?, matched).map_err(value_err)?;
    let wrap = |v: Vec<HeightMap>| v.into_iter().map(PyHeightMap).collect();
    Ok((wrap(b), wrap(t)))
}

/// Every base against every tip of `n` synthetic surfaces.
#[pyfunction]
#[pyo3(signature = (n=9, prefix="S", bands="5-10,10-20", **spec))]
fn simulate_set(n: usize, prefix: &str, bands: &str, spec: Option<&Bound<'_, PyDict>>) -> PyResult<Vec<PyObservation>> {
    let spec = sim_spec(spec)?;
    let plan = plan_of(bands, None)?;
    let obs = simulate_specimen_set(&spec, prefix, n, &plan, &SpectrumOptions::default()).map_err(value_err)?;
    Ok(obs.into_iter().map(PyObservation).collect())
}

/// Two-sample 2-D Kolmogorov-Smirnov test: `(statistic, p_value)`.
#[pyfunction]
#[pyo3(signature = (a, b, permutations=999, seed=0))]
fn peacock_test(a: Vec<[f64; 2]>, b: Vec<[f64; 2]>, permutations: usize, seed: u64) -> PyResult<(f64, f64)> {
    let r = peacock_test_2d(&a, &b, permutations, seed).map_err(value_err)?;
    Ok((r.statistic, r.p_value))
}

#[pyfunction]
fn fisher_z(r: f64) -> PyResult<f64> {
    fracmatch::fisher_z(r).map_err(value_err)
}

#[pyfunction(name = "logit")]
fn py_logit(p: f64) -> f64 {
    logit(p)
}

#[pymodule]
#[pyo3(name = "fracmatch")]
fn fracmatch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyHeightMap>()?;
    m.add_class::<PyObservation>()?;
    m.add_class::<PyEvidence>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(read_dataset_csv, m)?)?;
    m.add_function(wrap_pyfunction!(write_dataset_csv, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_set, m)?)?;
    m.add_function(wrap_pyfunction!(peacock_test, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_z, m)?)?;
    m.add_function(wrap_pyfunction!(py_logit, m)?)?;
    Ok(())
}
