use fracmatch::emfit::FitConfig;
use fracmatch::matchkit::{classify, train, Threshold};
use fracmatch::rng;
use fracmatch::simharness::{
    loocv_cases, peacock_statistic, peacock_test_2d, run_loocv, run_subset_sweep, simulate_specimen_set, synth_pair,
    synth_surface, SimError, SimSpec, SweepCase,
};
use fracmatch::spectral::{BandPlan, Label, PairId, PairObservation, SpectrumOptions};
use fracmatch::surface::{fit_self_affine, height_height_correlation};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn set(seed: u64, prefix: &str, n: usize) -> Vec<PairObservation> {
    let spec = SimSpec {
        seed,
        ..Default::default()
    };
    simulate_specimen_set(&spec, prefix, n, &BandPlan::default(), &SpectrumOptions::default()).unwrap()
}

#[test]
fn windows_follow_overlap_presets() {
    let base = SimSpec {
        noise_sigma: 0.0,
        misalign_px: 0,
        seed: 3,
        ..Default::default()
    };
    for (k, overlap, stride) in [(9, 0.75, 32), (5, 0.5, 64), (3, 0.0, 128)] {
        let spec = SimSpec {
            k,
            overlap,
            ..base.clone()
        };
        let (b, _) = synth_pair(&spec, true).unwrap();
        assert_eq!(b.len(), k);
        let strip = synth_surface(&SimSpec {
            seed: fracmatch::rng::derive(3, &[0]),
            ..spec.clone()
        })
        .unwrap();
        assert_eq!(strip.cols(), 384);
        // Neighbouring windows share their overlapping columns.
        for w in b.windows(2) {
            for r in [0, 50, 127] {
                for c in 0..128 - stride {
                    assert_eq!(w[0].get(r, c + stride), w[1].get(r, c));
                }
            }
        }
    }
}

#[test]
fn hurst_recovered_on_small_lags() {
    for seed in 0..4 {
        let spec = SimSpec {
            hurst: 0.6,
            pitch: 2.0,
            image_size: 512,
            k: 1,
            noise_sigma: 0.0,
            misalign_px: 0,
            seed,
            ..Default::default()
        };
        let m = synth_surface(&spec).unwrap();
        let curve = height_height_correlation(&m, 300.0).unwrap();
        let fit = fit_self_affine(&curve, (2.0, 30.0)).unwrap();
        assert!((fit.exponent - 0.6).abs() <= 0.1, "seed {seed}: {}", fit.exponent);
        let t = fit.transition_scale.expect("transition found") / spec.grain_scale;
        assert!((2.0..=8.0).contains(&t), "seed {seed}: {t} grains");
    }
}

#[test]
fn loocv_on_ten_surfaces_is_perfect() {
    let obs = set(21, "L", 10);
    let tally = run_loocv(&obs, &FitConfig::with_nu(10.0), 0.5, Threshold::Default).unwrap();
    let row = &tally.rows()[0];
    assert_eq!((row.model.as_str(), row.k), ("nu=10", 9));
    assert_eq!((row.true_match, row.true_nonmatch), (10, 90));
    assert_eq!((row.false_pos, row.false_neg), (0, 0));

    for nu in [3.0, 5.0, 10.0, 15.0, 20.0, 30.0] {
        let t = run_loocv(&obs, &FitConfig::with_nu(nu), 0.5, Threshold::Default).unwrap();
        assert_eq!(t.rows().len(), 1);
    }
    assert!(matches!(
        run_loocv(&set(22, "S", 8), &FitConfig::default(), 0.5, Threshold::Default),
        Err(SimError::TooFewSurfaces { found: 8, min: 9 })
    ));
}

#[test]
fn identical_surfaces_abort_with_diagnostic() {
    // Every pair sees the same correlations at every position: no residual.
    let plan = BandPlan::default();
    let mut obs = Vec::new();
    for i in 0..9 {
        for j in 0..9 {
            let r = DMatrix::from_fn(2, 9, |b, _| [0.9, 0.7][b]);
            let label = if i == j { Label::Match } else { Label::NonMatch };
            let o = PairObservation::from_correlations(
                PairId::new(format!("D{i}"), format!("D{j}")),
                label,
                plan.clone(),
                r,
            )
            .unwrap();
            obs.push(o);
        }
    }
    match run_loocv(&obs, &FitConfig::default(), 0.5, Threshold::Default) {
        Err(e @ SimError::Degenerate { .. }) => assert!(e.to_string().contains("D0"), "{e}"),
        other => panic!("expected a degenerate-fit abort, got {other:?}"),
    }
}

#[test]
fn subset_sweep_bookkeeping() {
    let sets = [set(31, "A", 9), set(32, "B", 10)];
    let cfg = FitConfig::with_nu(10.0);
    let mut cases = Vec::new();
    for (i, s) in sets.iter().enumerate() {
        let (m, n): (Vec<_>, Vec<_>) = s.iter().cloned().partition(|o| o.label == Label::Match);
        cases.push(SweepCase {
            label: "nu=10".into(),
            model: train(&m, &n, &cfg, 0.5).unwrap(),
            test: sets[1 - i].clone(),
        });
    }
    let ks: Vec<usize> = (2..=9).collect();
    let tally = run_subset_sweep(&cases, &ks, Threshold::Default).unwrap();
    for r in tally.rows() {
        assert_eq!(r.true_match, 19 * (9 - r.k + 1));
        assert_eq!(r.true_nonmatch, (72 + 90) * (9 - r.k + 1));
        assert_eq!(r.false_pos + r.true_neg, r.true_nonmatch);
        assert_eq!(r.false_neg + r.true_pos, r.true_match);
    }
    // At k = q the sweep is plain classification.
    let mut direct = (0, 0);
    for c in &cases {
        for x in &c.test {
            let d = classify(&c.model, x, Threshold::Default).unwrap();
            match (x.label, d.label) {
                (Label::NonMatch, Label::Match) => direct.0 += 1,
                (Label::Match, Label::NonMatch) => direct.1 += 1,
                _ => {}
            }
        }
    }
    let k9 = tally.row("nu=10", 9).unwrap();
    assert_eq!((k9.false_pos, k9.false_neg), direct);
    assert!(matches!(
        run_subset_sweep(&cases, &[10], Threshold::Default),
        Err(SimError::SubsetSize { k: 10, q: 9 })
    ));
}

#[test]
fn loocv_folds_never_see_their_test_pairs() {
    let obs = set(41, "F", 9);
    let cases = loocv_cases(&obs, &FitConfig::with_nu(10.0), 0.5).unwrap();
    assert_eq!(cases.len(), 9);
    let tested: usize = cases.iter().map(|c| c.test.len()).sum();
    assert_eq!(tested, 81);
    for c in &cases {
        let fit = c.model.provenance.nonmatch_fit.as_ref().unwrap();
        // 8 surfaces remain: 8 matches, 56 non-matches.
        assert_eq!(fit.n_obs, 56);
        assert_eq!(c.model.provenance.match_fit.as_ref().unwrap().n_obs, 8);
    }
}

fn normal_points(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut g = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let a: f64 = g.sample(StandardNormal);
            let b: f64 = g.sample(StandardNormal);
            [a, 0.5 * a + b]
        })
        .collect()
}

#[test]
fn peacock_null_p_values_look_uniform() {
    let mut p: Vec<f64> = (0..60)
        .map(|i| {
            let a = normal_points(81, 2 * i);
            let b = normal_points(81, 2 * i + 1);
            peacock_test_2d(&a, &b, 199, i).unwrap().p_value
        })
        .collect();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let d = p
        .iter()
        .enumerate()
        .map(|(i, v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max);
    assert!(d < 1.63 / n.sqrt(), "KS distance {d}");

    let a = normal_points(81, 900);
    let r = peacock_test_2d(&a, &a, 999, 0).unwrap();
    assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    let moved: Vec<[f64; 2]> = normal_points(81, 901).iter().map(|v| [v[0] + 2.0, v[1]]).collect();
    let r = peacock_test_2d(&a, &moved, 999, 0).unwrap();
    assert!(r.p_value < 0.01, "{r:?}");
    let warped = |s: &[[f64; 2]]| s.iter().map(|v| [v[0], v[1].powi(3)]).collect::<Vec<_>>();
    assert_eq!(
        peacock_statistic(&a, &moved).unwrap(),
        peacock_statistic(&warped(&a), &warped(&moved)).unwrap()
    );
}
