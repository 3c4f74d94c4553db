use fracmatch::emfit::FitConfig;
use fracmatch::matchkit::{
    calibrate_threshold, classify, classify_subset, logit, posterior_match, train, CalibrationConfig, MatchModel,
    Threshold,
};
use fracmatch::rng;
use fracmatch::simharness::{simulate_specimen_set, synth_pair, SimSpec};
use fracmatch::spectral::{build_pair_observation, BandPlan, Label, PairId, PairObservation, SpectrumOptions};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn training_set(seed: u64, n: usize) -> Vec<PairObservation> {
    let spec = SimSpec {
        seed,
        ..Default::default()
    };
    simulate_specimen_set(&spec, "K", n, &BandPlan::default(), &SpectrumOptions::default()).unwrap()
}

fn model_from(obs: &[PairObservation], nu: f64, prior: f64) -> MatchModel {
    let (m, n): (Vec<_>, Vec<_>) = obs.iter().cloned().partition(|o| o.label == Label::Match);
    train(&m, &n, &FitConfig::with_nu(nu), prior).unwrap()
}

#[test]
fn nine_surface_batch_trains_with_ordered_means() {
    let obs = training_set(1, 9);
    let matches = obs.iter().filter(|o| o.label == Label::Match).count();
    assert_eq!((matches, obs.len() - matches), (9, 72));
    let model = model_from(&obs, 10.0, 0.5);
    for i in 0..2 {
        assert!(model.match_params.row_means[i] > model.nonmatch_params.row_means[i]);
    }
    let fit = model.provenance.match_fit.as_ref().unwrap();
    assert_eq!(fit.n_obs, 9);
    assert!(fit.converged);
}

#[test]
fn synthetic_posteriors_are_decisive() {
    let model = model_from(&training_set(2, 10), 10.0, 0.5);
    let plan = BandPlan::default();
    let opts = SpectrumOptions::default();
    for seed in 0..20 {
        let spec = SimSpec {
            seed: 1000 + seed,
            ..Default::default()
        };
        for matched in [true, false] {
            let (b, t) = synth_pair(&spec, matched).unwrap();
            let x = build_pair_observation(&b, &t, &plan, &opts, PairId::new("b", "t")).unwrap();
            let e = posterior_match(&model, &x).unwrap();
            if matched {
                assert!(e.posterior > 0.99, "seed {seed}: {}", e.posterior);
            } else {
                assert!(e.posterior < 0.01, "seed {seed}: {}", e.posterior);
            }
            assert!(e.posterior > 0.0 && e.posterior < 1.0);
        }
    }
}

#[test]
fn prior_shifts_logodds_by_a_constant() {
    let obs = training_set(3, 9);
    let a = model_from(&obs, 10.0, 0.5);
    let b = a.with_prior(0.25).unwrap();
    for x in obs.iter().step_by(7) {
        let (ea, eb) = (posterior_match(&a, x).unwrap(), posterior_match(&b, x).unwrap());
        assert_eq!(ea.log_lr, eb.log_lr);
        assert!((eb.logodds - ea.logodds + 3f64.ln()).abs() < 1e-12);
        assert!((eb.logodds - ea.logodds - (logit(0.25) - logit(0.5))).abs() < 1e-12);
        // On the likelihood-ratio scale the prior drops out of the decision.
        let t = Threshold::LogLikelihoodRatio(ea.log_lr - 0.5);
        assert_eq!(classify(&a, x, t).unwrap().label, classify(&b, x, t).unwrap().label);
    }
}

#[test]
fn full_window_subset_is_classify() {
    let obs = training_set(4, 9);
    let model = model_from(&obs, 10.0, 0.5);
    let all: Vec<usize> = (0..9).collect();
    for x in &obs {
        let d = classify(&model, x, Threshold::Default).unwrap();
        assert_eq!(d, classify_subset(&model, x, &all, Threshold::Default).unwrap());
        assert_eq!(d.evidence, posterior_match(&model, x).unwrap());
        assert_eq!(d.label, x.label);
    }
    assert!(classify_subset(&model, &obs[0], &[2, 4], Threshold::Default).is_err());
    assert!(classify_subset(&model, &obs[0], &[8, 9], Threshold::Default).is_err());
}

#[test]
fn evidence_rises_toward_the_match_mean() {
    // Log-odds is a difference of two log-determinant terms, so it need not be
    // monotone along every segment. Measured: one of these 20 paths dips by
    // 0.033 log-odds at its first step before rising.
    let obs = training_set(5, 9);
    let model = model_from(&obs, 10.0, 0.5);
    let target = model.match_params.mean_matrix();
    let cases: Vec<&PairObservation> = obs.iter().filter(|o| o.label == Label::NonMatch).take(20).collect();
    assert_eq!(cases.len(), 20);
    let mut non_monotone = Vec::new();
    for x in cases {
        let path: Vec<f64> = (0..=20)
            .map(|i| {
                let t = i as f64 / 20.0;
                let z = &x.z * (1.0 - t) + &target * t;
                let xt = PairObservation::from_correlations(
                    x.pair_id.clone(),
                    Label::Unknown,
                    x.band_plan.clone(),
                    z.map(f64::tanh),
                )
                .unwrap();
                posterior_match(&model, &xt).unwrap().logodds
            })
            .collect();
        assert!(path[20] > path[0] + 10.0, "{}", x.pair_id);
        assert!(path[20] > 0.0);
        let worst = path.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
        if worst > 0.0 {
            non_monotone.push((x.pair_id.to_string(), worst));
        }
    }
    assert!(
        non_monotone.len() <= 1 && non_monotone.iter().all(|(_, d)| *d < 0.05),
        "{non_monotone:?}"
    );
}

#[test]
fn posterior_never_reaches_zero_or_one() {
    let model = model_from(&training_set(6, 9), 10.0, 0.5);
    let plan = BandPlan::default();
    for v in [-0.999999, 0.0, 0.999999] {
        let x = PairObservation::from_correlations(
            PairId::new("a", "b"),
            Label::Unknown,
            plan.clone(),
            DMatrix::from_element(2, 9, v),
        )
        .unwrap();
        let e = posterior_match(&model, &x).unwrap();
        assert!(e.posterior > 0.0 && e.posterior < 1.0, "{v}: {e:?}");
    }
}

#[test]
fn calibrated_threshold_on_normal_scores() {
    let mut g = rng::seeded(12);
    let scores: Vec<f64> = (0..2000)
        .map(|_| -40.0 + 5.0 * g.sample::<f64, _>(StandardNormal))
        .collect();
    let cal = calibrate_threshold(&scores, &CalibrationConfig::default()).unwrap();
    let oracle = -40.0 + 3.719 * 5.0;
    // Fitted quantile standard error: 5 sqrt(1/n + z^2 / 2n).
    let se = 5.0 * ((1.0 + 3.719f64.powi(2) / 2.0) / 2000.0).sqrt();
    let fitted = cal.fitted_mean + 3.719 * cal.fitted_sd;
    assert!((fitted - oracle).abs() < 3.0 * se, "{fitted} vs {oracle}");
    // The 95% bootstrap bound sits about 1.645 standard errors above the fit.
    let above = cal.threshold_logodds - fitted;
    assert!(
        above > 0.5 * 1.645 * se && above < 2.0 * 1.645 * se,
        "{above} vs se {se}"
    );
    assert!((cal.threshold_logodds - oracle).abs() < 5.0 * se);
}

#[test]
fn calibrated_threshold_at_probability_scale() {
    let model = model_from(&training_set(7, 9), 10.0, 0.5);
    let mut cal = calibrate_threshold(
        &(0..50).map(|i| i as f64 * 0.1 - 30.0).collect::<Vec<_>>(),
        &CalibrationConfig::default(),
    )
    .unwrap();
    cal.threshold_logodds = logit(0.8375);
    let model = model.with_calibration(cal);
    assert!((model.threshold_for(Threshold::Calibrated).unwrap() - logit(0.8375)).abs() < 1e-15);
    let t = model.threshold_for(Threshold::Calibrated).unwrap();
    assert!(logit(0.9) > t && logit(0.6) <= t);
}

#[test]
fn trained_model_file_roundtrip() {
    let mut model = model_from(&training_set(8, 9), 10.0, 0.3);
    model.provenance.training_set = "K".into();
    let text = model.to_json().unwrap();
    let back = MatchModel::from_json(&text).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_json().unwrap(), text);
}
