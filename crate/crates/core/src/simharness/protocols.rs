use std::collections::BTreeSet;

use super::synth::Specimen;
use super::{SimError, SimSpec, TallyRow, TallyTable};
use crate::emfit::FitConfig;
use crate::matchkit::{classify_subset, train, MatchModel, ModelError, Threshold};
use crate::rng;
use crate::spectral::{
    amplitude_spectrum, observation_from_spectra, BandPlan, BandSpectrum, Label, PairId, PairObservation,
    SpectrumOptions,
};
use crate::surface::HeightMap;

/// Fewest surfaces a LOOCV run accepts.
pub const LOOCV_MIN_SURFACES: usize = 9;

/// A trained model and the observations it is tested on. Cases sharing a
/// label are pooled into one tally row per k.
#[derive(Debug, Clone)]
pub struct SweepCase {
    pub label: String,
    pub model: MatchModel,
    pub test: Vec<PairObservation>,
}

pub fn model_label(nu: f64) -> String {
    format!("nu={nu}")
}

/// Base and tip image sets of one simulated specimen.
#[derive(Debug, Clone)]
pub struct Fragments {
    pub name: String,
    pub base: Vec<HeightMap>,
    pub tip: Vec<HeightMap>,
}

/// Simulate `n_surfaces` fractured specimens named `{prefix}01`, `{prefix}02`, ...
pub fn simulate_fragments(spec: &SimSpec, prefix: &str, n_surfaces: usize) -> Result<Vec<Fragments>, SimError> {
    spec.validate()?;
    Ok((0..n_surfaces as u64)
        .map(|i| {
            let s = Specimen::new(spec, rng::derive(spec.seed, &[i, 0]));
            Fragments {
                name: format!("{prefix}{:02}", i + 1),
                base: s.observe(rng::derive(spec.seed, &[i, 1])),
                tip: s.observe(rng::derive(spec.seed, &[i, 2])),
            }
        })
        .collect())
}

/// Correlate every base of [`simulate_fragments`] against every tip: `n`
/// matches and `n(n-1)` non-matches, sorted by pair id.
pub fn simulate_specimen_set(
    spec: &SimSpec,
    prefix: &str,
    n_surfaces: usize,
    plan: &BandPlan,
    opts: &SpectrumOptions,
) -> Result<Vec<PairObservation>, SimError> {
    plan.validate()?;
    let spectra = |maps: &[HeightMap]| -> Result<Vec<BandSpectrum>, SimError> {
        maps.iter()
            .map(|m| amplitude_spectrum(m, opts).map_err(SimError::from))
            .collect()
    };
    let frags = simulate_fragments(spec, prefix, n_surfaces)?;
    let mut base = Vec::with_capacity(n_surfaces);
    let mut tip = Vec::with_capacity(n_surfaces);
    for f in &frags {
        base.push(spectra(&f.base)?);
        tip.push(spectra(&f.tip)?);
    }
    let mut out = Vec::with_capacity(n_surfaces * n_surfaces);
    for (i, fi) in frags.iter().enumerate() {
        for (j, fj) in frags.iter().enumerate() {
            let label = if i == j { Label::Match } else { Label::NonMatch };
            let obs = observation_from_spectra(&base[i], &tip[j], plan, PairId::new(&fi.name, &fj.name))?;
            out.push(obs.with_label(label));
        }
    }
    out.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    Ok(out)
}

/// Distinct specimen names appearing on either side of any pair, sorted.
pub fn surfaces_of(obs: &[PairObservation]) -> Vec<String> {
    let set: BTreeSet<&str> = obs
        .iter()
        .flat_map(|o| [o.pair_id.base.as_str(), o.pair_id.tip.as_str()])
        .collect();
    set.into_iter().map(String::from).collect()
}

fn split(obs: &[PairObservation]) -> Result<(Vec<PairObservation>, Vec<PairObservation>), SimError> {
    let mut m = Vec::new();
    let mut n = Vec::new();
    for o in obs {
        match o.label {
            Label::Match => m.push(o.clone()),
            Label::NonMatch => n.push(o.clone()),
            Label::Unknown => return Err(SimError::Unlabeled(o.pair_id.to_string())),
        }
    }
    Ok((m, n))
}

fn train_fold(obs: &[PairObservation], cfg: &FitConfig, prior: f64, held_out: &str) -> Result<MatchModel, SimError> {
    let (m, n) = split(obs)?;
    train(&m, &n, cfg, prior).map_err(|e| match e {
        ModelError::DegenerateFit { .. } => SimError::Degenerate {
            held_out: held_out.to_string(),
            source: e,
        },
        e => SimError::Fold {
            held_out: held_out.to_string(),
            source: e,
        },
    })
}

/// One fold per surface: train on every pair not involving it, test on the
/// pairs whose base is that surface. Each pair is tested exactly once.
pub fn loocv_cases(obs: &[PairObservation], cfg: &FitConfig, prior: f64) -> Result<Vec<SweepCase>, SimError> {
    let surfaces = surfaces_of(obs);
    if surfaces.len() < LOOCV_MIN_SURFACES {
        return Err(SimError::TooFewSurfaces {
            found: surfaces.len(),
            min: LOOCV_MIN_SURFACES,
        });
    }
    split(obs)?;
    surfaces
        .iter()
        .map(|s| {
            let training: Vec<PairObservation> = obs.iter().filter(|o| !o.pair_id.involves(s)).cloned().collect();
            let model = train_fold(&training, cfg, prior, s)?;
            Ok(SweepCase {
                label: model_label(cfg.nu),
                model,
                test: obs.iter().filter(|o| &o.pair_id.base == s).cloned().collect(),
            })
        })
        .collect()
}

/// Leave-one-surface-out evaluation at full `q`: one tally row.
pub fn run_loocv(
    obs: &[PairObservation],
    cfg: &FitConfig,
    prior: f64,
    threshold: Threshold,
) -> Result<TallyTable, SimError> {
    let cases = loocv_cases(obs, cfg, prior)?;
    let q = obs[0].q();
    run_subset_sweep(&cases, &[q], threshold)
}

/// Cross-set protocol: each set's full model tests every other set, and its
/// own set is covered by LOOCV, so every pair is scored once per training set.
pub fn cross_set_cases(
    sets: &[(String, Vec<PairObservation>)],
    cfg: &FitConfig,
    prior: f64,
) -> Result<Vec<SweepCase>, SimError> {
    let mut cases = Vec::new();
    for (i, (name, obs)) in sets.iter().enumerate() {
        let model = train_fold(obs, cfg, prior, &format!("none (set {name})"))?;
        let test: Vec<PairObservation> = sets
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, (_, o))| o.iter().cloned())
            .collect();
        cases.push(SweepCase {
            label: model_label(cfg.nu),
            model,
            test,
        });
        cases.extend(loocv_cases(obs, cfg, prior)?);
    }
    Ok(cases)
}

/// Classify every consecutive window of size k of every test pair and tally
/// per (label, k), labels in first-appearance order.
pub fn run_subset_sweep(cases: &[SweepCase], k_values: &[usize], threshold: Threshold) -> Result<TallyTable, SimError> {
    let mut labels: Vec<&str> = Vec::new();
    for c in cases {
        if !labels.contains(&c.label.as_str()) {
            labels.push(&c.label);
        }
    }
    let mut rows = Vec::new();
    for label in labels {
        for &k in k_values {
            let mut row = TallyRow::empty(label, k);
            for case in cases.iter().filter(|c| c.label == label) {
                let q = case.model.q();
                if k == 0 || k > q {
                    return Err(SimError::SubsetSize { k, q });
                }
                for obs in &case.test {
                    if obs.label == Label::Unknown {
                        return Err(SimError::Unlabeled(obs.pair_id.to_string()));
                    }
                    for start in 0..=q - k {
                        let idx: Vec<usize> = (start..start + k).collect();
                        let d = classify_subset(&case.model, obs, &idx, threshold)?;
                        row.record(obs.label, d.label)?;
                    }
                }
            }
            rows.push(row);
        }
    }
    TallyTable::new(rows)
}
