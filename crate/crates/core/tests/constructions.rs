use std::sync::Arc;

use reparam::bijections::ScoreFunction;
use reparam::constructions::{
    annulus_demo, arbitrary_scoring_attack, canonical_swap, chi_mean, gaussian_ball_score, pixel_demo,
    uniformization_attack, DetectorConfig, Stage, Status, SwapInputs,
};
use reparam::densities::{Density, Gaussian, Mixture, Uniform, PIXEL_ALPHA, PIXEL_BETA};
use reparam::detectors::{Label, Rule};
use reparam::{Error, RngState};

fn config() -> DetectorConfig {
    DetectorConfig::default()
}

fn residual(report: &reparam::constructions::ConstructionReport, check: &str) -> f64 {
    report.residual(check).unwrap_or_else(|| panic!("missing residual {check}")).max_error
}

#[test]
fn uniform_cube_is_left_alone() {
    let mut rng = RngState::new(1);
    let out = uniformization_attack(Arc::new(Uniform::unit_cube(3)), 200, &config(), &mut rng).unwrap();
    assert_eq!(out.report.status, Status::Pass);
    assert_eq!(residual(&out.report, "max_abs_pushforward_density_minus_one"), 0.0);
    assert_eq!(residual(&out.report, "max_round_trip_error"), 0.0);
    assert_eq!(residual(&out.report, "probe_batch_typicality_statistic"), 0.0);
}

#[test]
fn uniformization_rejects_non_product_densities() {
    let mut rng = RngState::new(1);
    let mixture: Arc<dyn Density> = Arc::new(
        Mixture::new(vec![0.5, 0.5], vec![Arc::new(Gaussian::standard(2)), Arc::new(Uniform::unit_cube(2))]).unwrap(),
    );
    assert!(matches!(uniformization_attack(mixture, 10, &config(), &mut rng), Err(Error::NotFactorized)));
}

#[test]
fn bimodal_uniformization_flattens_the_density() {
    let mut rng = RngState::new(2);
    let out = uniformization_attack(Arc::new(Mixture::bimodal()), 1000, &config(), &mut rng).unwrap();
    assert!(residual(&out.report, "max_abs_pushforward_density_minus_one") < 1e-6);
    assert!(out.report.expectation("density_scoring_calibration_degenerate").unwrap().pass);
    let after = out.report.table(Rule::DensityScore, Stage::After).unwrap();
    assert_eq!(after.outliers(), 0);
}

#[test]
fn identity_score_gives_identity_map() {
    let mut rng = RngState::new(3);
    let p: Arc<dyn Density> = Arc::new(Gaussian::standard(1));
    let s = ScoreFunction::from_density(p.clone(), 1e-300).unwrap();
    let out = arbitrary_scoring_attack(p, s, 200, &config(), &mut rng).unwrap();
    assert_eq!(out.report.status, Status::Pass);
    assert!(residual(&out.report, "max_abs_pushforward_density_minus_score") < 1e-8);
    assert_eq!(out.report.metric("density_score_flips").unwrap(), 0);
}

#[test]
fn constant_score_doubles_the_unit_interval() {
    let mut rng = RngState::new(4);
    let out = arbitrary_scoring_attack(
        Arc::new(Uniform::unit_cube(1)),
        ScoreFunction::constant(0.5).unwrap(),
        200,
        &config(),
        &mut rng,
    )
    .unwrap();
    assert_eq!(residual(&out.report, "max_abs_pushforward_density_minus_score"), 0.0);
    let z: Vec<f64> = out
        .points
        .rows
        .iter()
        .map(|r| match &r[1] {
            reparam::constructions::Cell::Float(v) => *v,
            other => panic!("unexpected cell {other:?}"),
        })
        .collect();
    assert!(z.iter().all(|v| (0.0..=2.0).contains(v)));
}

#[test]
fn ramp_score_flips_the_central_ball() {
    let mut rng = RngState::new(5);
    let s = gaussian_ball_score(1, 0.025, 0.1, 1.0).unwrap();
    let out = arbitrary_scoring_attack(Arc::new(Gaussian::standard(1)), s, 200, &config(), &mut rng).unwrap();
    assert_eq!(out.report.status, Status::Pass, "{:#?}", out.report.expectations);
    assert!(out.report.expectation("region_flips_inlier_to_outlier_under_density_scoring").unwrap().pass);
    assert!(out.report.expectation("pushforward_density_within_score_bounds").unwrap().pass);
}

#[test]
fn region_mass_must_leave_room_for_outliers() {
    assert!(gaussian_ball_score(1, 0.0, 0.1, 1.0).is_err());
    assert!(gaussian_ball_score(1, 1.0, 0.1, 1.0).is_err());
}

#[test]
fn swap_exchanges_the_gaussian_densities() {
    let mut rng = RngState::new(6);
    let inputs = SwapInputs { density: Arc::new(Gaussian::standard(2)), x_in: vec![0.0, 0.0], x_out: vec![2.0, 2.0] };
    let (swap, out) = canonical_swap(&inputs, 1000, &config(), &mut rng).unwrap();
    assert_eq!(out.report.status, Status::Pass, "{:#?}", out.report.residuals);
    for check in ["density_swap_in_to_out", "density_swap_out_to_in", "distribution_preservation"] {
        assert!(residual(&out.report, check) < 1e-6, "{check}");
    }
    assert!(residual(&out.report, "max_round_trip_error") < 1e-8);
    assert!(residual(&out.report, "identity_outside_active_region") < 1e-10);
    assert!(swap.is_active(&[0.0, 0.0]).unwrap() && swap.is_active(&[2.0, 2.0]).unwrap());
    assert!(!swap.is_active(&[-1.0, 1.5]).unwrap());
}

#[test]
fn swap_input_errors() {
    let mut rng = RngState::new(7);
    let same = SwapInputs { density: Arc::new(Gaussian::standard(2)), x_in: vec![1.0, 1.0], x_out: vec![1.0, 1.0] };
    assert!(matches!(canonical_swap(&same, 10, &config(), &mut rng), Err(Error::PointsCoincide)));
    let flat = SwapInputs { density: Arc::new(Gaussian::standard(1)), x_in: vec![0.0], x_out: vec![1.0] };
    assert!(matches!(canonical_swap(&flat, 10, &config(), &mut rng), Err(Error::DimensionTooLow { .. })));
}

#[test]
fn pixel_defaults_flag_only_grey() {
    let mut rng = RngState::new(8);
    let out = pixel_demo(PIXEL_ALPHA, PIXEL_BETA, 15_625, &config(), &mut rng).unwrap();
    assert_eq!(out.report.status, Status::Pass, "{:#?}", out.report.expectations);
    let image = out.image.unwrap();
    assert_eq!((image.width, image.height), (125, 125));
    assert!(image.to_ppm().starts_with(b"P6\n125 125\n255\n"));
}

#[test]
fn pixel_without_grey_has_no_density_outliers() {
    let mut rng = RngState::new(9);
    let out = pixel_demo(PIXEL_ALPHA, 0.0, 2_500, &config(), &mut rng).unwrap();
    let table = out.report.table(Rule::DensityScore, Stage::Before).unwrap();
    assert_eq!(table.outliers(), 0);
    assert!(table.labels.iter().all(|l| *l == Label::Inlier));
}

#[test]
fn pixel_rejects_non_square_counts() {
    let mut rng = RngState::new(9);
    assert!(pixel_demo(PIXEL_ALPHA, PIXEL_BETA, 1000, &config(), &mut rng).is_err());
}

#[test]
fn annulus_in_one_and_hundred_dimensions() {
    let mut rng = RngState::new(3);
    let out = annulus_demo(100, 10_000, 1.0, &mut rng).unwrap();
    let mean = out.report.metric("mean_norm").unwrap().as_f64().unwrap();
    assert!((9.90..=10.05).contains(&mean), "{mean}");
    assert!((chi_mean(100) - 99.5f64.sqrt()).abs() < 1e-3);

    let mut rng = RngState::new(4);
    let out = annulus_demo(1, 10_000, 1.0, &mut rng).unwrap();
    let mean = out.report.metric("mean_norm").unwrap().as_f64().unwrap();
    assert!((mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02, "{mean}");
}

#[test]
fn reports_are_reproducible_from_the_seed() {
    let run = || {
        let mut rng = RngState::new(99);
        let out = uniformization_attack(Arc::new(Gaussian::standard(2)), 300, &config(), &mut rng).unwrap();
        serde_json::to_string(&out.report).unwrap()
    };
    assert_eq!(run(), run());
}
