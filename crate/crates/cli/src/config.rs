//! Run configuration: one TOML file, overridden by command-line flags.

use std::path::Path;

use fracmatch::emfit::FitConfig;
use fracmatch::matchkit::CalibrationConfig;
use fracmatch::simharness::SimSpec;
use fracmatch::spectral::{BandPlan, SpectrumOptions, Window};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DespikeSection {
    pub window: usize,
    pub threshold: f64,
}

impl Default for DespikeSection {
    fn default() -> Self {
        Self {
            window: 5,
            threshold: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub nu: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub rho_search: [f64; 2],
    pub accelerate: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            nu: f.nu,
            tol: f.tol,
            max_iter: f.max_iter,
            rho_search: [f.rho_search.0, f.rho_search.1],
            accelerate: f.accelerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub alpha: f64,
    pub confidence: f64,
    pub resamples: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let c = CalibrationConfig::default();
        Self {
            alpha: c.alpha,
            confidence: c.confidence,
            resamples: c.resamples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoughnessSection {
    /// Largest lag, micrometers.
    pub max_lag: f64,
    /// Power-law fit window, micrometers.
    pub fit_range: [f64; 2],
}

impl Default for RoughnessSection {
    fn default() -> Self {
        Self {
            max_lag: 300.0,
            fit_range: [2.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub nu_values: Vec<f64>,
    pub k_values: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            nu_values: vec![3.0, 5.0, 10.0, 15.0, 20.0, 30.0],
            k_values: (2..=9).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Prior probability of a match.
    pub prior: f64,
    /// Radial bands in cycles/mm, `"5-10,10-20"`.
    pub bands: String,
    /// Optional angular sector in degrees, `[lo, hi]`.
    pub sector: Option<[f64; 2]>,
    /// FFT edge; next power of two when absent.
    pub transform_size: Option<usize>,
    pub hann: bool,
    /// Pitch for CSV height grids, micrometers.
    pub pitch: Option<f64>,
    pub despike: DespikeSection,
    pub fit: FitSection,
    pub calibration: CalibrationSection,
    pub roughness: RoughnessSection,
    pub eval: EvalSection,
    /// `seed` is taken from the top level.
    pub sim: SimSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            prior: 0.5,
            bands: "5-10,10-20".into(),
            sector: None,
            transform_size: None,
            hann: false,
            pitch: None,
            despike: DespikeSection::default(),
            fit: FitSection::default(),
            calibration: CalibrationSection::default(),
            roughness: RoughnessSection::default(),
            eval: EvalSection::default(),
            sim: SimSpec::default(),
        }
    }
}

/// Flags shared by every command. Each one that is set wins over the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Micrometers per pixel.
    #[arg(long, global = true)]
    pub pitch: Option<f64>,
    /// Radial bands in cycles/mm, e.g. "5-10,10-20".
    #[arg(long, global = true)]
    pub bands: Option<String>,
    #[arg(long, global = true)]
    pub nu: Option<f64>,
    /// Images per surface.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub overlap: Option<f64>,
    #[arg(long, global = true)]
    pub prior: Option<f64>,
}

impl RunConfig {
    pub fn load(ov: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &ov.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        if let Some(v) = ov.seed {
            cfg.seed = v;
        }
        if let Some(v) = ov.pitch {
            cfg.pitch = Some(v);
            cfg.sim.pitch = v;
        }
        if let Some(v) = &ov.bands {
            cfg.bands = v.clone();
        }
        if let Some(v) = ov.nu {
            cfg.fit.nu = v;
        }
        if let Some(v) = ov.k {
            cfg.sim.k = v;
        }
        if let Some(v) = ov.overlap {
            cfg.sim.overlap = v;
        }
        if let Some(v) = ov.prior {
            cfg.prior = v;
        }
        cfg.sim.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.band_plan()?;
        self.fit_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return bad(format!("prior {} must lie in (0, 1)", self.prior));
        }
        if !matches!(self.despike.window, 3 | 5 | 7) {
            return bad(format!("despike.window {} must be 3, 5 or 7", self.despike.window));
        }
        if !(self.despike.threshold > 0.0) {
            return bad(format!("despike.threshold {} must be > 0", self.despike.threshold));
        }
        let c = &self.calibration;
        if !(c.alpha > 0.0 && c.alpha < 0.5) {
            return bad(format!("calibration.alpha {} must lie in (0, 0.5)", c.alpha));
        }
        if !(c.confidence > 0.0 && c.confidence < 1.0) {
            return bad(format!("calibration.confidence {} must lie in (0, 1)", c.confidence));
        }
        if c.resamples == 0 {
            return bad("calibration.resamples must be >= 1".into());
        }
        if let Some(p) = self.pitch {
            if !(p > 0.0 && p.is_finite()) {
                return bad(format!("pitch {p} must be > 0"));
            }
        }
        if let Some(n) = self.transform_size {
            if !n.is_power_of_two() {
                return bad(format!("transform_size {n} must be a power of two"));
            }
        }
        let r = &self.roughness;
        if !(r.max_lag > 0.0 && r.fit_range[0] > 0.0 && r.fit_range[0] < r.fit_range[1]) {
            return bad(format!(
                "roughness: max_lag {} and fit_range {:?} out of order",
                r.max_lag, r.fit_range
            ));
        }
        if self.eval.nu_values.is_empty() || self.eval.nu_values.iter().any(|v| !(*v >= 1.0)) {
            return bad(format!(
                "eval.nu_values {:?} must be non-empty and >= 1",
                self.eval.nu_values
            ));
        }
        if self.eval.k_values.is_empty() || self.eval.k_values.contains(&0) {
            return bad(format!(
                "eval.k_values {:?} must be non-empty and >= 1",
                self.eval.k_values
            ));
        }
        Ok(())
    }

    pub fn band_plan(&self) -> Result<BandPlan, CliError> {
        BandPlan::parse(&self.bands)
            .and_then(|p| p.with_sector(self.sector.map(|[a, b]| (a, b))))
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn spectrum_options(&self) -> SpectrumOptions {
        SpectrumOptions {
            transform_size: self.transform_size,
            window: if self.hann { Window::Hann } else { Window::None },
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            nu: self.fit.nu,
            max_iter: self.fit.max_iter,
            tol: self.fit.tol,
            rho_search: (self.fit.rho_search[0], self.fit.rho_search[1]),
            accelerate: self.fit.accelerate,
        }
    }

    pub fn calibration_config(&self) -> CalibrationConfig {
        CalibrationConfig {
            alpha: self.calibration.alpha,
            confidence: self.calibration.confidence,
            resamples: self.calibration.resamples,
            seed: self.seed,
        }
    }

    /// First 16 hex digits of the SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First line of every CSV output.
    pub fn provenance(&self) -> String {
        format!("fracmatch {} config={}", env!("CARGO_PKG_VERSION"), self.hash())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("seeds = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[fit]\nnuu = 3.0").is_err());
        assert!(toml::from_str::<RunConfig>("[sim]\nhurst = 0.7").is_ok());
    }

    #[test]
    fn flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 4\n[fit]\nnu = 5.0\n").unwrap();
        let ov = Overrides {
            config: Some(path.clone()),
            nu: Some(20.0),
            ..Default::default()
        };
        let c = RunConfig::load(&ov).unwrap();
        assert_eq!((c.seed, c.fit.nu, c.sim.seed), (4, 20.0, 4));
        let plain = RunConfig::load(&Overrides {
            config: Some(path),
            ..Default::default()
        })
        .unwrap();
        assert_ne!(plain.hash(), c.hash());
    }

    #[test]
    fn nested_constraints_checked_up_front() {
        for text in [
            "prior = 1.0",
            "bands = \"10-5\"",
            "[sim]\noverlap = 0.3",
            "[despike]\nwindow = 4",
            "[fit]\nrho_search = [0.5, 0.1]",
        ] {
            let c: RunConfig = toml::from_str(text).unwrap();
            assert!(c.validate().is_err(), "{text}");
        }
    }
}
