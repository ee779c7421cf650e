use std::sync::Arc;

use reparam::bijections::{pushforward, Affine};
use reparam::densities::{Density, Gaussian, Uniform};
use reparam::detectors::{
    calibrate_density_threshold, calibrate_from_scores, density_ratio_classify, density_ratio_score,
    density_score_classify, typicality_statistic, Label, TypicalityTest,
};
use reparam::numerics::{std_normal_pdf, std_normal_quantile};
use reparam::{Error, RngState};

fn normal(dim: usize) -> Arc<dyn Density> {
    Arc::new(Gaussian::standard(dim))
}

#[test]
fn gaussian_threshold_matches_the_analytic_quantile() {
    let mut rng = RngState::new(11);
    let scorer = calibrate_density_threshold(normal(1), 0.95, 1_000_000, &mut rng).unwrap();
    let oracle = std_normal_pdf(std_normal_quantile(0.975).unwrap());
    assert!((oracle - 0.05844).abs() < 1e-5);
    assert!((scorer.threshold - oracle).abs() < 1e-3, "λ = {}", scorer.threshold);
    assert!(!scorer.degenerate);
}

#[test]
fn calibrated_scorer_keeps_the_requested_mass_on_fresh_samples() {
    let mut rng = RngState::new(12);
    let p = normal(1);
    let scorer = calibrate_density_threshold(p.clone(), 0.95, 10_000, &mut rng).unwrap();
    let fresh = p.sample(100_000, &mut rng).unwrap();
    let inliers = fresh.iter().filter(|x| density_score_classify(&scorer, x).unwrap().label == Label::Inlier).count();
    let frac = inliers as f64 / fresh.len() as f64;
    assert!((frac - 0.95).abs() < 0.01, "inlier fraction {frac}");
}

#[test]
fn uniform_calibration_is_degenerate() {
    let mut rng = RngState::new(13);
    let unit = calibrate_density_threshold(Arc::new(Uniform::unit_cube(1)), 0.9, 500, &mut rng).unwrap();
    assert_eq!(unit.threshold, 1.0);
    assert!(unit.degenerate);
    let wide = calibrate_density_threshold(Arc::new(Uniform::cube(1, 0.0, 2.0).unwrap()), 0.95, 500, &mut rng).unwrap();
    assert_eq!(wide.threshold, 0.5);
    assert!(wide.degenerate);
    assert_eq!(density_score_classify(&wide, &[1.3]).unwrap().label, Label::Inlier);
}

#[test]
fn too_few_calibration_samples_are_rejected() {
    let mut rng = RngState::new(14);
    assert!(calibrate_density_threshold(normal(1), 0.95, 99, &mut rng).is_err());
    assert!(calibrate_density_threshold(normal(1), 0.4, 1000, &mut rng).is_err());
}

#[test]
fn threshold_equality_labels_outlier() {
    let scores: Vec<f64> = (1..=200).map(|i| i as f64 / 1000.0).collect();
    let scorer = calibrate_from_scores(normal(1), scores, 0.95).unwrap();
    assert_eq!(scorer.label_score(scorer.threshold), Label::Outlier);
    assert_eq!(scorer.label_score(scorer.threshold * (1.0 + 1e-12)), Label::Inlier);
}

#[test]
fn density_scoring_examples() {
    let mut rng = RngState::new(15);
    let mut scorer = calibrate_density_threshold(normal(1), 0.95, 1000, &mut rng).unwrap();
    scorer.threshold = 0.05844;
    let mode = density_score_classify(&scorer, &[0.0]).unwrap();
    assert_eq!(mode.label, Label::Inlier);
    assert!((mode.score - 0.3989422804014327).abs() < 1e-15);
    let tail = density_score_classify(&scorer, &[3.0]).unwrap();
    assert_eq!(tail.label, Label::Outlier);
    assert!((tail.score - 0.004431848411938).abs() < 1e-14);
    assert_eq!(tail.recompute_label().unwrap(), Label::Outlier);
    assert!(matches!(density_score_classify(&scorer, &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn typicality_examples() {
    let mut rng = RngState::new(16);
    let cube = TypicalityTest::new(Arc::new(Uniform::unit_cube(4)), 1.0, 1000, &mut rng).unwrap();
    let batch = Uniform::unit_cube(4).sample(17, &mut rng).unwrap();
    assert_eq!(typicality_statistic(&cube, &batch).unwrap(), 0.0);

    let one = TypicalityTest::new(normal(1), 1.0, 1000, &mut rng).unwrap();
    assert!(typicality_statistic(&one, &[vec![1.0]]).unwrap() < 1e-15);

    let big = TypicalityTest::new(normal(100), 1.0, 1000, &mut rng).unwrap();
    let stat = typicality_statistic(&big, &[vec![0.0; 100]]).unwrap();
    assert!((stat - 50.0).abs() < 1e-12, "{stat}");
    assert_eq!(big.classify(&[vec![0.0; 100]]).unwrap().label, Label::Outlier);
    assert!(typicality_statistic(&big, &[vec![0.0; 3]]).is_err());
}

#[test]
fn monte_carlo_entropy_is_recorded() {
    let mut rng = RngState::new(17);
    let mixture: Arc<dyn Density> = Arc::new(reparam::densities::Mixture::bimodal());
    let test = TypicalityTest::new(mixture, 1.0, 5000, &mut rng).unwrap();
    assert_eq!(test.n_mc, Some(5000));
    assert!(test.entropy_std_error > 0.0);
    assert_eq!(test.parameters()["n_mc"], 5000);
}

#[test]
fn density_ratio_examples() {
    let fg = normal(1);
    let bg: Arc<dyn Density> = Arc::new(Uniform::cube(1, -10.0, 10.0).unwrap());
    let r = density_ratio_score(fg.as_ref(), bg.as_ref(), &[0.0]).unwrap();
    assert!((r - 7.978845608028654).abs() < 1e-12);
    assert!((density_ratio_score(fg.as_ref(), fg.as_ref(), &[2.5]).unwrap() - 1.0).abs() < 1e-15);
    assert!(matches!(density_ratio_score(fg.as_ref(), bg.as_ref(), &[11.0]), Err(Error::OutsideBackgroundSupport)));
    let v = density_ratio_classify(fg.as_ref(), bg.as_ref(), &[0.0], 1.0).unwrap();
    assert_eq!(v.label, Label::Inlier);
    assert_eq!(v.recompute_label().unwrap(), v.label);
}

#[test]
fn ratio_survives_doubling() {
    let fg = normal(1);
    let bg: Arc<dyn Density> = Arc::new(Gaussian::univariate(0.5, 2.0).unwrap());
    let f = Arc::new(Affine::uniform(1, 2.0, 0.0).unwrap());
    let pf = pushforward(fg.clone(), f.clone()).unwrap();
    let pb = pushforward(bg.clone(), f).unwrap();
    for i in -20..=20 {
        let x = i as f64 * 0.2;
        let before = density_ratio_score(fg.as_ref(), bg.as_ref(), &[x]).unwrap();
        let after = density_ratio_score(&pf, &pb, &[2.0 * x]).unwrap();
        assert!((after - before).abs() < 1e-12 * before.max(1.0), "{x}: {before} vs {after}");
    }
}
