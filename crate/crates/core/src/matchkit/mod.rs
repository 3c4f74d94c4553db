//! Two-class match/non-match model: training, scoring, thresholds.

mod calibrate;
mod file;

pub use calibrate::{calibrate_threshold, Calibration, CalibrationConfig};
pub use file::MODEL_FORMAT_VERSION;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emfit::{fit_mxt, FitConfig, FitError, FitReport};
use crate::mxdist::{DistError, MatrixT, MxVtParams};
use crate::spectral::{BandPlan, Label, PairId, PairObservation};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{class} class has {n} observations, at least 2 are needed")]
    TooFew { class: &'static str, n: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("observations do not share the band plan")]
    BandPlanMismatch,
    #[error("fitting the {class} class: {source}")]
    Fit {
        class: &'static str,
        #[source]
        source: FitError,
    },
    #[error("{class} class fit is degenerate (Sigma hit its eigenvalue floor)")]
    DegenerateFit { class: &'static str },
    #[error("band {band}: match mean {match_mean} does not exceed non-match mean {nonmatch_mean}")]
    ClassOrdering {
        band: usize,
        match_mean: f64,
        nonmatch_mean: f64,
    },
    #[error("prior {0} must lie strictly inside (0, 1)")]
    BadPrior(f64),
    #[error("threshold {0:?}: expected default, calibrated, posterior=P, logodds=X or llr=X")]
    BadThreshold(String),
    #[error("the model carries no calibrated threshold")]
    NotCalibrated,
    #[error("image indices {0:?} are not a consecutive ascending run")]
    NonConsecutive(Vec<usize>),
    #[error("image indices {indices:?} exceed q = {q}")]
    SubsetRange { indices: Vec<usize>, q: usize },
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("model file: {0}")]
    File(String),
    #[error("unsupported model format_version {0}")]
    UnsupportedVersion(u64),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Summary of one class fit kept with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n_obs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
    pub loglik: f64,
}

impl FitSummary {
    fn from_report(r: &FitReport, n_obs: usize) -> Self {
        Self {
            n_obs,
            iterations: r.iterations,
            converged: r.converged,
            degenerate: r.degenerate,
            loglik: r.loglik(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub training_set: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_fit: Option<FitSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonmatch_fit: Option<FitSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchModel {
    pub match_params: MxVtParams,
    pub nonmatch_params: MxVtParams,
    pub band_plan: BandPlan,
    pub prior_match: f64,
    /// Calibrated log-odds threshold, if any.
    pub threshold_logodds: Option<f64>,
    pub provenance: Provenance,
}

/// Which cut-off `classify` compares the log-odds against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Log-odds 0, posterior 0.5.
    Default,
    /// The model's calibrated threshold.
    Calibrated,
    /// An explicit log-odds value.
    LogOdds(f64),
    /// An explicit posterior probability.
    Posterior(f64),
    /// A cut on the log likelihood ratio alone; the prior drops out.
    LogLikelihoodRatio(f64),
}

/// `default`, `calibrated`, `posterior=P`, `logodds=X` or `llr=X`.
impl std::str::FromStr for Threshold {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        let bad = || ModelError::BadThreshold(s.to_string());
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        match s.split_once('=') {
            None if s == "default" => Ok(Threshold::Default),
            None if s == "calibrated" => Ok(Threshold::Calibrated),
            Some(("posterior", v)) => Ok(Threshold::Posterior(num(v)?)),
            Some(("logodds", v)) => Ok(Threshold::LogOdds(num(v)?)),
            Some(("llr", v)) => Ok(Threshold::LogLikelihoodRatio(num(v)?)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evidence {
    pub loglik_match: f64,
    pub loglik_nonmatch: f64,
    pub log_lr: f64,
    pub logodds: f64,
    pub posterior: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub pair_id: PairId,
    pub label: Label,
    pub evidence: Evidence,
    /// Threshold expressed on the log-odds scale.
    pub threshold_logodds: f64,
}

impl Decision {
    pub fn is_match(&self) -> bool {
        self.label == Label::Match
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Logistic function held strictly inside (0, 1).
pub fn logistic(x: f64) -> f64 {
    let v = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn check_prior(p: f64) -> Result<(), ModelError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(ModelError::BadPrior(p))
    }
}

fn shared_shape(obs: &[PairObservation], plan: &BandPlan) -> Result<(usize, usize), ModelError> {
    let (p, q) = (obs[0].p(), obs[0].q());
    for o in obs {
        if (o.p(), o.q()) != (p, q) {
            return Err(ModelError::Shape(format!(
                "{} is {}x{}, expected {p}x{q}",
                o.pair_id,
                o.p(),
                o.q()
            )));
        }
        if &o.band_plan != plan {
            return Err(ModelError::BandPlanMismatch);
        }
    }
    Ok((p, q))
}

fn fit_class(obs: &[PairObservation], config: &FitConfig, class: &'static str) -> Result<FitReport, ModelError> {
    let data: Vec<DMatrix<f64>> = obs.iter().map(|o| o.z.clone()).collect();
    let report = fit_mxt(&data, config).map_err(|source| ModelError::Fit { class, source })?;
    if report.degenerate {
        return Err(ModelError::DegenerateFit { class });
    }
    Ok(report)
}

/// Fit the match and non-match classes with a common `nu`.
pub fn train(
    match_obs: &[PairObservation],
    nonmatch_obs: &[PairObservation],
    config: &FitConfig,
    prior: f64,
) -> Result<MatchModel, ModelError> {
    check_prior(prior)?;
    for (class, obs) in [("match", match_obs), ("non-match", nonmatch_obs)] {
        if obs.len() < 2 {
            return Err(ModelError::TooFew { class, n: obs.len() });
        }
    }
    let plan = match_obs[0].band_plan.clone();
    let shape = shared_shape(match_obs, &plan)?;
    if shared_shape(nonmatch_obs, &plan)? != shape {
        return Err(ModelError::Shape(
            "match and non-match observations differ in shape".into(),
        ));
    }
    let fm = fit_class(match_obs, config, "match")?;
    let fn_ = fit_class(nonmatch_obs, config, "non-match")?;
    let model = MatchModel {
        match_params: fm.params.clone(),
        nonmatch_params: fn_.params.clone(),
        band_plan: plan,
        prior_match: prior,
        threshold_logodds: None,
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            match_fit: Some(FitSummary::from_report(&fm, match_obs.len())),
            nonmatch_fit: Some(FitSummary::from_report(&fn_, nonmatch_obs.len())),
            ..Provenance::default()
        },
    };
    model.validate()?;
    Ok(model)
}

impl MatchModel {
    pub fn p(&self) -> usize {
        self.match_params.p()
    }

    pub fn q(&self) -> usize {
        self.match_params.q
    }

    pub fn nu(&self) -> f64 {
        self.match_params.nu
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_prior(self.prior_match)?;
        self.match_params.validate()?;
        self.nonmatch_params.validate()?;
        let (a, b) = (&self.match_params, &self.nonmatch_params);
        if a.p() != b.p() || a.q != b.q || a.nu != b.nu {
            return Err(ModelError::Shape("class models differ in p, q or nu".into()));
        }
        if self.band_plan.p() != a.p() {
            return Err(ModelError::Shape(format!(
                "{} bands for p = {}",
                self.band_plan.p(),
                a.p()
            )));
        }
        for band in 0..a.p() {
            let (m, n) = (a.row_means[band], b.row_means[band]);
            if !(m > n) {
                return Err(ModelError::ClassOrdering {
                    band,
                    match_mean: m,
                    nonmatch_mean: n,
                });
            }
        }
        if let Some(t) = self.threshold_logodds {
            if !t.is_finite() {
                return Err(ModelError::Calibration(format!("threshold {t} is not finite")));
            }
        }
        Ok(())
    }

    /// Same model under another prior.
    pub fn with_prior(&self, prior: f64) -> Result<Self, ModelError> {
        check_prior(prior)?;
        Ok(Self {
            prior_match: prior,
            ..self.clone()
        })
    }

    pub fn with_calibration(mut self, cal: Calibration) -> Self {
        self.threshold_logodds = Some(cal.threshold_logodds);
        self.provenance.calibration = Some(cal);
        self
    }

    pub fn threshold_for(&self, t: Threshold) -> Result<f64, ModelError> {
        Ok(match t {
            Threshold::Default => 0.0,
            Threshold::Calibrated => self.threshold_logodds.ok_or(ModelError::NotCalibrated)?,
            Threshold::LogOdds(v) => v,
            Threshold::Posterior(p) => {
                check_prior(p)?;
                logit(p)
            }
            Threshold::LogLikelihoodRatio(v) => v + logit(self.prior_match),
        })
    }

    fn class_densities(&self, k: usize) -> Result<(MatrixT, MatrixT), ModelError> {
        Ok((
            self.match_params.restrict(k)?.to_matrix_t()?,
            self.nonmatch_params.restrict(k)?.to_matrix_t()?,
        ))
    }

    fn evidence_on(&self, x: &DMatrix<f64>) -> Result<Evidence, ModelError> {
        if x.nrows() != self.p() || x.ncols() > self.q() || x.ncols() == 0 {
            return Err(ModelError::Shape(format!(
                "observation is {}x{}, model is {}x{}",
                x.nrows(),
                x.ncols(),
                self.p(),
                self.q()
            )));
        }
        let (f1, f2) = self.class_densities(x.ncols())?;
        let l1 = f1.logpdf(x)?;
        let l2 = f2.logpdf(x)?;
        let log_lr = l1 - l2;
        let logodds = log_lr + logit(self.prior_match);
        Ok(Evidence {
            loglik_match: l1,
            loglik_nonmatch: l2,
            log_lr,
            logodds,
            posterior: logistic(logodds),
        })
    }
}

fn check_full(model: &MatchModel, x: &PairObservation) -> Result<(), ModelError> {
    if (x.p(), x.q()) != (model.p(), model.q()) {
        return Err(ModelError::Shape(format!(
            "{} is {}x{}, model is {}x{}",
            x.pair_id,
            x.p(),
            x.q(),
            model.p(),
            model.q()
        )));
    }
    Ok(())
}

/// Log-odds and posterior probability that `x` is a match.
pub fn posterior_match(model: &MatchModel, x: &PairObservation) -> Result<Evidence, ModelError> {
    check_full(model, x)?;
    model.evidence_on(&x.z)
}

fn decide(
    model: &MatchModel,
    x: &PairObservation,
    evidence: Evidence,
    threshold: Threshold,
) -> Result<Decision, ModelError> {
    let t = model.threshold_for(threshold)?;
    // Ties go to non-match.
    let label = if evidence.logodds > t {
        Label::Match
    } else {
        Label::NonMatch
    };
    Ok(Decision {
        pair_id: x.pair_id.clone(),
        label,
        evidence,
        threshold_logodds: t,
    })
}

pub fn classify(model: &MatchModel, x: &PairObservation, threshold: Threshold) -> Result<Decision, ModelError> {
    classify_subset(model, x, &(0..model.q()).collect::<Vec<_>>(), threshold)
}

/// Classify using only the consecutive image positions in `indices`, with
/// both class models marginalized to those columns.
pub fn classify_subset(
    model: &MatchModel,
    x: &PairObservation,
    indices: &[usize],
    threshold: Threshold,
) -> Result<Decision, ModelError> {
    check_full(model, x)?;
    if indices.is_empty() || indices.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(ModelError::NonConsecutive(indices.to_vec()));
    }
    let (start, k) = (indices[0], indices.len());
    if start + k > model.q() {
        return Err(ModelError::SubsetRange {
            indices: indices.to_vec(),
            q: model.q(),
        });
    }
    let sub = x.z.columns(start, k).into_owned();
    let evidence = model.evidence_on(&sub)?;
    decide(model, x, evidence, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    pub(crate) fn toy_model() -> MatchModel {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]);
        MatchModel {
            match_params: MxVtParams::new(DVector::from_vec(vec![1.5, 1.2]), sigma.clone(), 0.5, 10.0, 4).unwrap(),
            nonmatch_params: MxVtParams::new(DVector::from_vec(vec![0.2, 0.1]), sigma, 0.3, 10.0, 4).unwrap(),
            band_plan: BandPlan::default(),
            prior_match: 0.5,
            threshold_logodds: None,
            provenance: Provenance::default(),
        }
    }

    fn obs(z: DMatrix<f64>) -> PairObservation {
        let r = z.map(|v| v.tanh());
        let mut o =
            PairObservation::from_correlations(PairId::new("a", "b"), Label::Unknown, BandPlan::default(), r).unwrap();
        o.z = z;
        o
    }

    #[test]
    fn threshold_syntax() {
        assert_eq!("default".parse::<Threshold>().unwrap(), Threshold::Default);
        assert_eq!("calibrated".parse::<Threshold>().unwrap(), Threshold::Calibrated);
        assert_eq!("posterior=0.9".parse::<Threshold>().unwrap(), Threshold::Posterior(0.9));
        assert_eq!("logodds=-2".parse::<Threshold>().unwrap(), Threshold::LogOdds(-2.0));
        assert_eq!(
            "llr= 3.5".parse::<Threshold>().unwrap(),
            Threshold::LogLikelihoodRatio(3.5)
        );
        for bad in ["", "posterior", "posterior=x", "odds=1", "Default"] {
            assert!(bad.parse::<Threshold>().is_err(), "{bad}");
        }
    }

    #[test]
    fn logistic_stays_inside_unit_interval() {
        for x in [-1e4, -800.0, -40.0, 0.0, 40.0, 800.0, 1e4] {
            let p = logistic(x);
            assert!(p > 0.0 && p < 1.0, "{x} -> {p}");
        }
        assert_eq!(logistic(0.0), 0.5);
    }

    #[test]
    fn identical_classes_give_even_odds() {
        let mut m = toy_model();
        m.nonmatch_params = m.match_params.clone();
        let e = posterior_match(&m, &obs(DMatrix::from_element(2, 4, 0.9))).unwrap();
        assert_eq!(e.logodds, 0.0);
        assert_eq!(e.posterior, 0.5);
        let d = classify(&m, &obs(DMatrix::from_element(2, 4, 0.9)), Threshold::Default).unwrap();
        assert_eq!(d.label, Label::NonMatch);
    }

    #[test]
    fn prior_shifts_logodds_by_constant() {
        let m = toy_model();
        let m2 = m.with_prior(0.9).unwrap();
        for v in [0.0, 0.5, 1.0, 1.6] {
            let x = obs(DMatrix::from_fn(2, 4, |i, j| v + 0.1 * i as f64 - 0.05 * j as f64));
            let a = posterior_match(&m, &x).unwrap();
            let b = posterior_match(&m2, &x).unwrap();
            assert!((b.logodds - a.logodds - logit(0.9)).abs() < 1e-12);
            let t = Threshold::LogLikelihoodRatio(0.7);
            assert_eq!(classify(&m, &x, t).unwrap().label, classify(&m2, &x, t).unwrap().label);
        }
    }

    #[test]
    fn calibrated_threshold_on_probability_scale() {
        let mut m = toy_model();
        m.threshold_logodds = Some(logit(0.8375));
        let t = m.threshold_for(Threshold::Calibrated).unwrap();
        assert!(logit(0.9) > t);
        assert!(logit(0.6) < t);
        m.threshold_logodds = None;
        assert!(matches!(
            m.threshold_for(Threshold::Calibrated),
            Err(ModelError::NotCalibrated)
        ));
    }

    #[test]
    fn subset_rules() {
        let m = toy_model();
        let x = obs(DMatrix::from_fn(2, 4, |i, j| 1.0 + 0.1 * (i + j) as f64));
        let full = classify(&m, &x, Threshold::Default).unwrap();
        let sub = classify_subset(&m, &x, &[0, 1, 2, 3], Threshold::Default).unwrap();
        assert_eq!(full, sub);
        assert!(matches!(
            classify_subset(&m, &x, &[0, 2], Threshold::Default),
            Err(ModelError::NonConsecutive(_))
        ));
        assert!(matches!(
            classify_subset(&m, &x, &[3, 4], Threshold::Default),
            Err(ModelError::SubsetRange { .. })
        ));
        assert!(classify_subset(&m, &x, &[1, 2, 3], Threshold::Default).is_ok());
    }

    #[test]
    fn class_ordering_enforced() {
        let mut m = toy_model();
        m.nonmatch_params.row_means[1] = 1.3;
        assert!(matches!(m.validate(), Err(ModelError::ClassOrdering { band: 1, .. })));
    }
}
