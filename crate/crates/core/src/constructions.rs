//! End-to-end adversarial constructions, each returning a verification
//! report, a per-point table and, for the pixel demo, an image.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use crate::bijections::{
    arbitrary_score_bijection, compose, finite_difference_log_det, invert, knothe_rosenblatt, norm_dependent_rotation,
    normalized, orthogonal_squeeze, pushforward, rotation_plane, Ball, Bijection, Composed, NormDependentRotation,
    OrthogonalSqueeze, RotationParams, ScoreFunction,
};
use crate::densities::{build_pixel_mixture, Density, Gaussian};
use crate::detectors::{
    calibrate_density_threshold, calibrate_from_scores, DensityScorer, Label, Rule, TypicalityTest,
};
use crate::error::{Error, Result};
use crate::numerics::RngState;

/// Column step of the finite-difference Jacobians in the reports. The
/// swap map varies on a scale of about 1e-4 inside its active region.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub check: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Residual {
    pub fn new(check: &str, max_error: f64, tolerance: f64) -> Self {
        Self { check: check.to_string(), max_error, tolerance, pass: max_error <= tolerance }
    }
}

/// A qualitative claim checked by the construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Expectation {
    pub check: String,
    pub pass: bool,
    pub detail: Value,
}

impl Expectation {
    pub fn new(check: &str, pass: bool, detail: Value) -> Self {
        Self { check: check.to_string(), pass, detail }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Before,
    After,
}

/// Scores and labels of one rule over the report's points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictTable {
    pub rule: Rule,
    pub stage: Stage,
    pub parameters: Value,
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

impl VerdictTable {
    pub fn outliers(&self) -> usize {
        self.labels.iter().filter(|l| **l == Label::Outlier).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
}

/// Machine-readable record of one construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionReport {
    pub name: String,
    pub input: Value,
    pub parameters: Value,
    pub residuals: Vec<Residual>,
    pub expectations: Vec<Expectation>,
    pub verdict_tables: Vec<VerdictTable>,
    pub metrics: BTreeMap<String, Value>,
    pub seed: u64,
    pub status: Status,
}

impl ConstructionReport {
    pub fn new(name: &str, input: Value, parameters: Value, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            input,
            parameters,
            residuals: Vec::new(),
            expectations: Vec::new(),
            verdict_tables: Vec::new(),
            metrics: BTreeMap::new(),
            seed,
            status: Status::Pass,
        }
    }

    pub fn residual(&self, check: &str) -> Option<&Residual> {
        self.residuals.iter().find(|r| r.check == check)
    }

    pub fn expectation(&self, check: &str) -> Option<&Expectation> {
        self.expectations.iter().find(|e| e.check == check)
    }

    pub fn table(&self, rule: Rule, stage: Stage) -> Option<&VerdictTable> {
        self.verdict_tables.iter().find(|t| t.rule == rule && t.stage == stage)
    }

    pub fn metric(&self, key: &str) -> Option<&Value> {
        self.metrics.get(key)
    }

    fn push_residual(&mut self, check: &str, max_error: f64, tolerance: f64) {
        self.residuals.push(Residual::new(check, max_error, tolerance));
    }

    fn push_expectation(&mut self, check: &str, pass: bool, detail: Value) {
        self.expectations.push(Expectation::new(check, pass, detail));
    }

    fn set_metric<V: Serialize>(&mut self, key: &str, value: V) {
        self.metrics.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    /// Sets `status` from the residuals and expectations.
    pub fn finalize(&mut self) {
        let ok = self.residuals.iter().all(|r| r.pass) && self.expectations.iter().all(|e| e.pass);
        self.status = if ok { Status::Pass } else { Status::Fail };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Label> for Cell {
    fn from(v: Label) -> Self {
        Cell::Text(label_name(v).to_string())
    }
}

pub fn label_name(label: Label) -> &'static str {
    match label {
        Label::Inlier => "inlier",
        Label::Outlier => "outlier",
    }
}

/// Per-point table written as CSV by the command-line runner.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl PointTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

fn coordinate_header(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|d| format!("{prefix}{d}")).collect()
}

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    /// Binary PPM (P6, maxval 255, no comments).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

/// Everything a construction produces.
#[derive(Debug, Clone)]
pub struct ConstructionOutput {
    pub report: ConstructionReport,
    pub points: PointTable,
    pub image: Option<RgbImage>,
}

/// Detector settings shared by the constructions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorConfig {
    pub mass_level: f64,
    pub epsilon: f64,
    pub n_calibration: usize,
    pub n_mc: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { mass_level: 0.95, epsilon: 1.0, n_calibration: 10_000, n_mc: 10_000 }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn typicality_for(density: &Arc<dyn Density>, epsilon: f64, n_mc: usize, rng: &mut RngState) -> Result<TypicalityTest> {
    TypicalityTest::new(density.clone(), epsilon, n_mc, rng)
}

/// Density scorer and typicality test of `f(X)`, both computed from draws
/// `x ~ p` through the change of variables at the known preimage
/// `p_f(f(x)) = p(x) / |det J_f(x)|`. Returns the draws' images too.
fn pushforward_detectors(
    p: &Arc<dyn Density>,
    f: &Arc<dyn Bijection>,
    pf: Arc<dyn Density>,
    draws: &[Vec<f64>],
    config: &DetectorConfig,
) -> Result<(DensityScorer, TypicalityTest)> {
    let mut logs = Vec::with_capacity(draws.len());
    for x in draws {
        logs.push(p.log_density_unchecked(x)? - f.log_abs_det_jacobian(x)?);
    }
    let scores: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    let scorer = calibrate_from_scores(pf.clone(), scores, config.mass_level)?;
    let neg: Vec<f64> = logs.iter().map(|l| -l).collect();
    let estimate = crate::numerics::mean_estimate(&neg)?;
    let test = match pf.entropy_analytic() {
        Some(h) => TypicalityTest::with_entropy(pf, h, config.epsilon)?,
        None => TypicalityTest {
            density: pf,
            entropy: estimate.value,
            entropy_std_error: estimate.std_error,
            n_mc: Some(draws.len()),
            epsilon: config.epsilon,
        },
    };
    Ok((scorer, test))
}

fn density_table(scorer: &DensityScorer, stage: Stage, scores: Vec<f64>) -> VerdictTable {
    let labels = scores.iter().map(|s| scorer.label_score(*s)).collect();
    VerdictTable { rule: Rule::DensityScore, stage, parameters: scorer.parameters(), scores, labels }
}

fn typicality_table(test: &TypicalityTest, stage: Stage, log_densities: &[f64]) -> Result<VerdictTable> {
    let mut scores = Vec::with_capacity(log_densities.len());
    for l in log_densities {
        scores.push(test.statistic_from_log_densities(std::slice::from_ref(l))?);
    }
    let labels = scores.iter().map(|s| test.label_statistic(*s)).collect();
    Ok(VerdictTable { rule: Rule::Typicality, stage, parameters: test.parameters(), scores, labels })
}

fn label_flips(before: &VerdictTable, after: &VerdictTable) -> usize {
    before.labels.iter().zip(&after.labels).filter(|(a, b)| a != b).count()
}

/// Reparametrizes a product density onto the unit cube, where every point
/// has density 1 and no detector can tell points apart.
pub fn uniformization_attack(
    p: Arc<dyn Density>,
    probes: usize,
    config: &DetectorConfig,
    rng: &mut RngState,
) -> Result<ConstructionOutput> {
    let seed = rng.seed();
    let dim = p.dim();
    let kr = knothe_rosenblatt(p.clone())?;
    let f: Arc<dyn Bijection> = Arc::new(kr);
    let pf: Arc<dyn Density> = Arc::new(pushforward(p.clone(), f.clone())?);
    let mut report = ConstructionReport::new(
        "uniformize",
        json!({ "density": p.describe(), "probes": probes, "detectors": config }),
        json!({ "bijection": f.describe() }),
        seed,
    );

    let xs = p.sample(probes, rng)?;
    let mut zs = Vec::with_capacity(probes);
    let (mut dens_before, mut dens_after) = (Vec::new(), Vec::new());
    let (mut logs_before, mut logs_after) = (Vec::new(), Vec::new());
    let (mut max_dev, mut max_fd_dev, mut max_trip) = (0.0f64, 0.0f64, 0.0f64);
    for x in &xs {
        let z = f.forward(x)?;
        let log_after = pf.log_density(&z)?;
        let log_before = p.log_density(x)?;
        max_dev = max_dev.max((log_after.exp() - 1.0).abs());
        let fd = (log_before - finite_difference_log_det(f.as_ref(), x, FD_STEP)?).exp();
        max_fd_dev = max_fd_dev.max((fd - 1.0).abs());
        max_trip = max_trip.max(max_abs_diff(&f.inverse(&z)?, x));
        dens_before.push(log_before.exp());
        dens_after.push(log_after.exp());
        logs_before.push(log_before);
        logs_after.push(log_after);
        zs.push(z);
    }

    let test_before = typicality_for(&p, config.epsilon, config.n_mc, rng)?;
    let draws = p.sample(config.n_calibration, rng)?;
    let calib_before: Vec<f64> = draws.iter().map(|x| p.density_unchecked(x)).collect::<Result<_>>()?;
    let scorer_before = calibrate_from_scores(p.clone(), calib_before, config.mass_level)?;
    let (scorer_after, test_after) = pushforward_detectors(&p, &f, pf.clone(), &draws, config)?;
    let batch_stat = test_after.statistic_from_log_densities(&logs_after)?;

    report.push_residual("max_abs_pushforward_density_minus_one", max_dev, 1e-6);
    report.push_residual("max_abs_finite_difference_density_minus_one", max_fd_dev, 1e-6);
    report.push_residual("max_round_trip_error", max_trip, 1e-8);
    report.push_residual("probe_batch_typicality_statistic", batch_stat, 1e-9);
    report.push_expectation(
        "density_scoring_calibration_degenerate",
        scorer_after.degenerate,
        json!({ "threshold": scorer_after.threshold, "tie_adjusted": scorer_after.tie_adjusted }),
    );

    let before_d = density_table(&scorer_before, Stage::Before, dens_before.clone());
    let after_d = density_table(&scorer_after, Stage::After, dens_after.clone());
    let before_t = typicality_table(&test_before, Stage::Before, &logs_before)?;
    let after_t = typicality_table(&test_after, Stage::After, &logs_after)?;
    report.push_expectation(
        "no_outliers_after_uniformization",
        after_d.outliers() == 0 && after_t.outliers() == 0,
        json!({ "density_score_outliers": after_d.outliers(), "typicality_outliers": after_t.outliers() }),
    );
    report.set_metric("density_score_outliers_before", before_d.outliers());
    report.set_metric("typicality_outliers_before", before_t.outliers());
    report.set_metric("entropy_after", test_after.entropy);
    report.set_metric("entropy_after_std_error", test_after.entropy_std_error);
    report.verdict_tables = vec![before_d, after_d, before_t, after_t];

    let mut header = coordinate_header("x", dim);
    header.extend(coordinate_header("z", dim));
    header.extend(["density_before".to_string(), "density_after".to_string()]);
    let mut points = PointTable::new(&header);
    for (i, (x, z)) in xs.iter().zip(&zs).enumerate() {
        let mut row: Vec<Cell> = x.iter().map(|v| Cell::from(*v)).collect();
        row.extend(z.iter().map(|v| Cell::from(*v)));
        row.push(dens_before[i].into());
        row.push(dens_after[i].into());
        points.push(row);
    }
    report.finalize();
    Ok(ConstructionOutput { report, points, image: None })
}

/// Score that is `inside` on a Euclidean ball around the mean of a
/// standard Gaussian holding probability `region_mass`, `outside` beyond
/// a cosine ramp of relative width 0.1.
pub fn gaussian_ball_score(dim: usize, region_mass: f64, inside: f64, outside: f64) -> Result<ScoreFunction> {
    if !(region_mass > 0.0 && region_mass < 0.5) {
        return Err(Error::DomainError("region mass must lie in (0, 0.5)".into()));
    }
    let chi2 = ChiSquared::new(dim as f64).map_err(|e| Error::DomainError(e.to_string()))?;
    let radius = chi2.inverse_cdf(region_mass).sqrt();
    ScoreFunction::ball_ramp(Ball { center: vec![0.0; dim], radius }, inside, outside, 0.1)
}

/// Number of extra probes placed inside the designated region.
pub const REGION_PROBES: usize = 20;

/// Builds the map whose pushforward density equals `s` and shows how the
/// detectors' verdicts follow `s` instead of `p`.
pub fn arbitrary_scoring_attack(
    p: Arc<dyn Density>,
    s: ScoreFunction,
    probes: usize,
    config: &DetectorConfig,
    rng: &mut RngState,
) -> Result<ConstructionOutput> {
    let seed = rng.seed();
    let dim = p.dim();
    let map = arbitrary_score_bijection(p.clone(), s.clone())?;
    let f: Arc<dyn Bijection> = Arc::new(map);
    let pf: Arc<dyn Density> = Arc::new(pushforward(p.clone(), f.clone())?);
    let mut report = ConstructionReport::new(
        "score-attack",
        json!({ "density": p.describe(), "score": s.describe(), "probes": probes, "detectors": config }),
        json!({ "bijection": f.describe(), "lower_bound": s.lower_bound(), "upper_bound": s.upper_bound() }),
        seed,
    );

    let mut xs = p.sample(probes, rng)?;
    let mut roles = vec!["probe"; probes];
    if let Some(ball) = s.region() {
        for i in 0..REGION_PROBES {
            let dir: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let dir = normalized(&dir)?;
            let r = ball.radius * (i as f64 + 0.5) / REGION_PROBES as f64;
            xs.push(ball.center.iter().zip(&dir).map(|(c, u)| c + r * u).collect());
            roles.push("region");
        }
    }

    let (mut max_res, mut max_trip, mut max_fd) = (0.0f64, 0.0f64, 0.0f64);
    let (mut lo_seen, mut hi_seen) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut zs = Vec::with_capacity(xs.len());
    let (mut logs_before, mut logs_after, mut s_values) = (Vec::new(), Vec::new(), Vec::new());
    for x in &xs {
        let z = f.forward(x)?;
        let after = pf.log_density(&z)?;
        let sx = s.value(x)?;
        max_res = max_res.max((after.exp() - sx).abs());
        max_trip = max_trip.max(max_abs_diff(&f.inverse(&z)?, x));
        let analytic = f.log_abs_det_jacobian(x)?;
        max_fd = max_fd.max((finite_difference_log_det(f.as_ref(), x, FD_STEP)? - analytic).abs());
        lo_seen = lo_seen.min(after.exp());
        hi_seen = hi_seen.max(after.exp());
        logs_before.push(p.log_density(x)?);
        logs_after.push(after);
        s_values.push(sx);
        zs.push(z);
    }
    report.push_residual("max_abs_pushforward_density_minus_score", max_res, 1e-6);
    report.push_residual("max_round_trip_error", max_trip, 1e-8);
    report.push_residual("max_abs_finite_difference_log_det_error", max_fd, 1e-4);
    let tol = 1e-6;
    let within = lo_seen >= s.lower_bound() - tol && s.upper_bound().is_none_or(|u| hi_seen <= u + tol);
    report.push_expectation(
        "pushforward_density_within_score_bounds",
        within,
        json!({ "min": lo_seen, "max": hi_seen }),
    );

    let draws = p.sample(config.n_calibration, rng)?;
    let calib_before: Vec<f64> = draws.iter().map(|x| p.density_unchecked(x)).collect::<Result<_>>()?;
    let scorer_before = calibrate_from_scores(p.clone(), calib_before, config.mass_level)?;
    let test_before = typicality_for(&p, config.epsilon, config.n_mc, rng)?;
    let (scorer_after, test_after) = pushforward_detectors(&p, &f, pf.clone(), &draws, config)?;

    let before_d = density_table(&scorer_before, Stage::Before, logs_before.iter().map(|l| l.exp()).collect());
    let after_d = density_table(&scorer_after, Stage::After, logs_after.iter().map(|l| l.exp()).collect());
    let before_t = typicality_table(&test_before, Stage::Before, &logs_before)?;
    let after_t = typicality_table(&test_after, Stage::After, &logs_after)?;
    report.set_metric("density_score_flips", label_flips(&before_d, &after_d));
    report.set_metric("typicality_flips", label_flips(&before_t, &after_t));
    report.set_metric("entropy_after", test_after.entropy);
    report.set_metric("entropy_after_std_error", test_after.entropy_std_error);

    if let Some(ball) = s.region() {
        let in_region: Vec<usize> = (0..xs.len()).filter(|&i| ball.contains(&xs[i])).collect();
        let all = |t: &VerdictTable, label: Label| in_region.iter().all(|&i| t.labels[i] == label);
        let outside_level = s.upper_bound().unwrap_or(f64::INFINITY);
        let plain_outside: Vec<usize> =
            (0..xs.len()).filter(|&i| s_values[i] == outside_level && !ball.contains(&xs[i])).collect();
        let outside_inliers = plain_outside.iter().all(|&i| after_d.labels[i] == Label::Inlier);
        report.set_metric("region_points", in_region.len());
        report.set_metric("region_radius", ball.radius);
        report.push_expectation(
            "region_flips_inlier_to_outlier_under_density_scoring",
            !in_region.is_empty() && all(&before_d, Label::Inlier) && all(&after_d, Label::Outlier),
            json!({
                "region_points": in_region.len(),
                "outliers_before": in_region.iter().filter(|&&i| before_d.labels[i] == Label::Outlier).count(),
                "outliers_after": in_region.iter().filter(|&&i| after_d.labels[i] == Label::Outlier).count(),
            }),
        );
        report.push_expectation(
            "complement_inliers_after_density_scoring",
            outside_inliers,
            json!({ "points": plain_outside.len() }),
        );
        report.set_metric(
            "region_flips_under_typicality",
            !in_region.is_empty() && all(&before_t, Label::Inlier) && all(&after_t, Label::Outlier),
        );
    }
    report.verdict_tables = vec![before_d.clone(), after_d.clone(), before_t.clone(), after_t.clone()];

    let mut header = vec!["role".to_string()];
    header.extend(coordinate_header("x", dim));
    header.extend(coordinate_header("z", dim));
    header.extend(
        [
            "score",
            "density_before",
            "density_after",
            "density_label_before",
            "density_label_after",
            "typicality_label_before",
            "typicality_label_after",
        ]
        .map(String::from),
    );
    let mut points = PointTable::new(&header);
    for i in 0..xs.len() {
        let mut row = vec![Cell::from(roles[i])];
        row.extend(xs[i].iter().map(|v| Cell::from(*v)));
        row.extend(zs[i].iter().map(|v| Cell::from(*v)));
        row.push(s_values[i].into());
        row.push(before_d.scores[i].into());
        row.push(after_d.scores[i].into());
        row.push(before_d.labels[i].into());
        row.push(after_d.labels[i].into());
        row.push(before_t.labels[i].into());
        row.push(after_t.labels[i].into());
        points.push(row);
    }
    report.finalize();
    Ok(ConstructionOutput { report, points, image: None })
}

/// Inputs of the canonical swap.
#[derive(Debug, Clone)]
pub struct SwapInputs {
    pub density: Arc<dyn Density>,
    pub x_in: Vec<f64>,
    pub x_out: Vec<f64>,
}

/// Geometry of a canonical swap in the uniformized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwapGeometry {
    pub z_in: Vec<f64>,
    pub z_out: Vec<f64>,
    pub margin: f64,
    pub r0: f64,
    pub r_max: f64,
    pub direction: Vec<f64>,
    pub squeeze_factor: f64,
    pub rotation: RotationParams,
}

/// The swap map `f = f_z⁻¹ ∘ rot ∘ f_z` with `f_z = squeeze ∘ KR`.
#[derive(Debug, Clone)]
pub struct CanonicalSwap {
    pub map: Composed,
    pub to_latent: Arc<dyn Bijection>,
    pub rotation: NormDependentRotation,
    pub geometry: SwapGeometry,
}

impl CanonicalSwap {
    /// Whether the rotation moves `x`.
    pub fn is_active(&self, x: &[f64]) -> Result<bool> {
        Ok(self.rotation.is_active(&self.to_latent.forward(x)?))
    }
}

fn boundary_distance(z: &[f64]) -> f64 {
    z.iter().map(|v| v.min(1.0 - v)).fold(f64::INFINITY, f64::min)
}

/// Builds a measure-preserving map exchanging `x_in` and `x_out`.
pub fn build_canonical_swap(inputs: &SwapInputs) -> Result<CanonicalSwap> {
    let p = &inputs.density;
    let dim = p.dim();
    if dim < 2 {
        return Err(Error::DimensionTooLow { required: 2, got: dim });
    }
    for x in [&inputs.x_in, &inputs.x_out] {
        if x.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
        }
        if !p.support().contains_interior(x) {
            return Err(Error::DomainError("swap points must be interior to the support".into()));
        }
    }
    if inputs.x_in == inputs.x_out {
        return Err(Error::PointsCoincide);
    }
    let kr: Arc<dyn Bijection> = Arc::new(knothe_rosenblatt(p.clone())?);
    let z_in = kr.forward(&inputs.x_in)?;
    let z_out = kr.forward(&inputs.x_out)?;
    let margin = 0.5 * boundary_distance(&z_in).min(boundary_distance(&z_out));
    if !(margin > 0.0) {
        return Err(Error::BallOutsideDomain);
    }
    let diff: Vec<f64> = z_in.iter().zip(&z_out).map(|(a, b)| a - b).collect();
    let gap = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    if gap == 0.0 {
        return Err(Error::PointsCoincide);
    }
    let r0 = 0.5 * gap;
    let r_max = r0 + margin;
    let u = normalized(&diff)?;
    let k = r_max / margin;
    let squeeze = orthogonal_squeeze(u.clone(), k)?;
    let z_mid: Vec<f64> = z_in.iter().zip(&z_out).map(|(a, b)| 0.5 * (a + b)).collect();
    let center = squeeze.forward(&z_mid)?;
    check_containment(&squeeze, &center, r_max, &u)?;

    let (e1, e2) = rotation_plane(&u)?;
    let params = RotationParams::new(center, r0, r_max, e1, e2)?;
    let rotation = norm_dependent_rotation(params.clone(), dim)?;
    let to_latent: Arc<dyn Bijection> = Arc::new(compose(kr, Arc::new(squeeze))?);
    let inner = compose(to_latent.clone(), Arc::new(rotation.clone()))?;
    let map = compose(Arc::new(inner), Arc::new(invert(to_latent.clone())))?;
    Ok(CanonicalSwap {
        map,
        to_latent,
        rotation,
        geometry: SwapGeometry { z_in, z_out, margin, r0, r_max, direction: u, squeeze_factor: k, rotation: params },
    })
}

/// The ball `B(center, r_max)` of the squeezed coordinates must pull back
/// inside the open unit cube. Checks its extreme points along every axis
/// and along the squeeze direction.
fn check_containment(squeeze: &OrthogonalSqueeze, center: &[f64], r_max: f64, u: &[f64]) -> Result<()> {
    let dim = center.len();
    let mut directions: Vec<Vec<f64>> = (0..dim)
        .map(|j| {
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            e
        })
        .collect();
    directions.push(u.to_vec());
    for dir in directions {
        for sign in [1.0, -1.0] {
            let y: Vec<f64> = center.iter().zip(&dir).map(|(c, d)| c + sign * r_max * d).collect();
            let z = squeeze.inverse(&y)?;
            if z.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                return Err(Error::BallOutsideDomain);
            }
        }
    }
    Ok(())
}

/// Relative distance to the rotation's center and outer sphere within
/// which the finite-difference check is skipped.
pub const KINK_EXCLUSION: f64 = 2e-3;

/// Number of extra probes drawn inside the rotation's active region.
pub const ACTIVE_PROBES: usize = 200;

/// Exchanges the densities of an inlier and an outlier while leaving the
/// distribution unchanged.
pub fn canonical_swap(
    inputs: &SwapInputs,
    probes: usize,
    config: &DetectorConfig,
    rng: &mut RngState,
) -> Result<(CanonicalSwap, ConstructionOutput)> {
    let seed = rng.seed();
    let p = inputs.density.clone();
    let dim = p.dim();
    let swap = build_canonical_swap(inputs)?;
    let f: Arc<dyn Bijection> = Arc::new(swap.map.clone());
    let pf: Arc<dyn Density> = Arc::new(pushforward(p.clone(), f.clone())?);
    let mut report = ConstructionReport::new(
        "swap",
        json!({
            "density": p.describe(),
            "x_in": inputs.x_in,
            "x_out": inputs.x_out,
            "probes": probes,
            "active_probes": ACTIVE_PROBES,
            "detectors": config,
        }),
        json!({ "geometry": swap.geometry, "bijection": f.describe() }),
        seed,
    );

    let (x_in, x_out) = (&inputs.x_in, &inputs.x_out);
    let (p_in, p_out) = (p.density(x_in)?, p.density(x_out)?);
    let f_in = f.forward(x_in)?;
    let f_out = f.forward(x_out)?;
    let swap_in = (pf.density(&f_in)? - p_out).abs();
    let swap_out = (pf.density(&f_out)? - p_in).abs();
    report.push_residual("density_swap_in_to_out", swap_in, 1e-6);
    report.push_residual("density_swap_out_to_in", swap_out, 1e-6);
    report.push_residual("point_swap_error", max_abs_diff(&f_in, x_out).max(max_abs_diff(&f_out, x_in)), 1e-8);
    report.set_metric("density_x_in", p_in);
    report.set_metric("density_x_out", p_out);

    // Random probes from p plus probes spread over the active region.
    let mut ys = p.sample(probes, rng)?;
    let mut roles = vec!["probe"; probes];
    let center = &swap.geometry.rotation.center;
    for _ in 0..ACTIVE_PROBES {
        let dir = normalized(&(0..dim).map(|_| rng.normal()).collect::<Vec<_>>())?;
        let r = swap.geometry.r_max * rng.uniform().powf(1.0 / dim as f64);
        let latent: Vec<f64> = center.iter().zip(&dir).map(|(c, d)| c + r * d).collect();
        ys.push(swap.to_latent.inverse(&latent)?);
        roles.push("active");
    }

    let (mut max_pres, mut max_trip, mut max_id, mut max_fd) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut n_active, mut n_inactive, mut n_fd_skipped) = (0usize, 0usize, 0usize);
    let mut rows = Vec::with_capacity(ys.len());
    for (y, role) in ys.iter().zip(&roles) {
        let fy = f.forward(y)?;
        let before = p.density(y)?;
        let after = pf.density(y)?;
        max_pres = max_pres.max((after - before).abs());
        max_trip = max_trip.max(max_abs_diff(&f.inverse(&fy)?, y));
        let active = swap.is_active(y)?;
        if active {
            n_active += 1;
            // The rotation angle has kinks at the center and on the outer
            // sphere; a difference stencil straddling them is meaningless.
            let r = euclidean(&swap.to_latent.forward(y)?, center);
            let r_max = swap.geometry.r_max;
            if r < KINK_EXCLUSION * r_max || r > (1.0 - KINK_EXCLUSION) * r_max {
                n_fd_skipped += 1;
            } else {
                let volume_change = p.log_density(y)? - p.log_density(&fy)?;
                let fd = finite_difference_log_det(f.as_ref(), y, FD_STEP)?;
                max_fd = max_fd.max((fd - volume_change).abs());
            }
        } else {
            n_inactive += 1;
            max_id = max_id.max(max_abs_diff(&fy, y));
        }
        rows.push((role, y.clone(), fy, before, after, active));
    }
    report.push_residual("distribution_preservation", max_pres, 1e-6);
    report.push_residual("max_round_trip_error", max_trip, 1e-8);
    report.push_residual("identity_outside_active_region", max_id, 1e-10);
    report.push_residual("max_finite_difference_log_det_error", max_fd, 1e-4);
    report.set_metric("active_points", n_active);
    report.set_metric("inactive_points", n_inactive);
    report.set_metric("finite_difference_points_skipped_near_kinks", n_fd_skipped);

    let draws = p.sample(config.n_calibration, rng)?;
    let calib: Vec<f64> = draws.iter().map(|x| p.density_unchecked(x)).collect::<Result<_>>()?;
    let scorer_before = calibrate_from_scores(p.clone(), calib, config.mass_level)?;
    let (scorer_after, _) = pushforward_detectors(&p, &f, pf.clone(), &draws, config)?;
    let before = density_table(&scorer_before, Stage::Before, vec![p_in, p_out]);
    let after = density_table(&scorer_after, Stage::After, vec![pf.density(&f_in)?, pf.density(&f_out)?]);
    let swapped = before.labels[0] == after.labels[1] && before.labels[1] == after.labels[0];
    report.push_expectation(
        "labels_exchanged",
        swapped,
        json!({ "before": [before.labels[0], before.labels[1]], "after": [after.labels[0], after.labels[1]] }),
    );
    report.verdict_tables = vec![before, after];

    let mut header = vec!["role".to_string()];
    header.extend(coordinate_header("x", dim));
    header.extend(coordinate_header("fx", dim));
    header.extend(["density_before", "density_after", "active"].map(String::from));
    let mut points = PointTable::new(&header);
    let mut push_row = |role: &str, y: &[f64], fy: &[f64], before: f64, after: f64, active: bool| {
        let mut row = vec![Cell::from(role)];
        row.extend(y.iter().map(|v| Cell::from(*v)));
        row.extend(fy.iter().map(|v| Cell::from(*v)));
        row.push(before.into());
        row.push(after.into());
        row.push(Cell::Int(active as i64));
        points.push(row);
    };
    push_row("x_in", x_in, &f_in, p_in, pf.density(&f_in)?, true);
    push_row("x_out", x_out, &f_out, p_out, pf.density(&f_out)?, true);
    for (role, y, fy, before, after, active) in &rows {
        push_row(role, y, fy, *before, *after, *active);
    }
    report.finalize();
    Ok((swap, ConstructionOutput { report, points, image: None }))
}

/// Default pixel count, a 125 × 125 image.
pub const PIXEL_COUNT: usize = 15_625;
/// Calibration sample of the pixel demo.
pub const PIXEL_CALIBRATION: usize = 100_000;

fn pixel_component(x: &[f64]) -> &'static str {
    let inside = |lo: f64, hi: f64| x.iter().all(|v| (lo..=hi).contains(v));
    if inside(10.0, 11.0) && x.iter().any(|v| *v > 10.0) {
        "grey"
    } else if inside(255.0, 256.0) {
        "white"
    } else if inside(0.0, 10.0) {
        "black"
    } else {
        "none"
    }
}

/// Samples pixels from the three-cube mixture and shows both density
/// scoring and one-sample typicality flag only the rare dark-grey pixels.
pub fn pixel_demo(
    alpha: f64,
    beta: f64,
    n_pixels: usize,
    config: &DetectorConfig,
    rng: &mut RngState,
) -> Result<ConstructionOutput> {
    let seed = rng.seed();
    let side = (n_pixels as f64).sqrt().round() as usize;
    if n_pixels == 0 || side * side != n_pixels {
        return Err(Error::DomainError(format!("pixel count {n_pixels} is not a perfect square")));
    }
    let mixture = build_pixel_mixture(alpha, beta)?;
    let p: Arc<dyn Density> = Arc::new(mixture);
    let mut report = ConstructionReport::new(
        "pixel-demo",
        json!({ "alpha": alpha, "beta": beta, "n_pixels": n_pixels, "detectors": config }),
        json!({ "density": p.describe(), "side": side }),
        seed,
    );

    let grey = p.density(&[10.5; 3])?;
    let white = p.density(&[255.5; 3])?;
    let black = p.density(&[5.0; 3])?;
    let white_closed = (1.0 - beta) * alpha;
    let black_closed = (1.0 - beta) * (1.0 - alpha) / 1000.0;
    report.push_residual("grey_density_minus_beta", (grey - beta).abs(), 0.0);
    report.push_residual("white_density_relative_error", ((white - white_closed) / white_closed).abs(), 1e-15);
    report.push_residual("black_density_relative_error", ((black - black_closed) / black_closed).abs(), 1e-15);
    report.set_metric("density_grey", grey);
    report.set_metric("density_white", white);
    report.set_metric("density_black", black);
    report.push_expectation(
        "white_and_black_densities_exceed_grey",
        white > grey && black > grey,
        json!({ "white": white, "black": black, "grey": grey }),
    );

    let pixels = p.sample(n_pixels, rng)?;
    let scorer = calibrate_density_threshold(p.clone(), config.mass_level, config.n_calibration, rng)?;
    let test = typicality_for(&p, config.epsilon, config.n_mc, rng)?;
    let components: Vec<&str> = pixels.iter().map(|x| pixel_component(x)).collect();
    let logs: Vec<f64> = pixels.iter().map(|x| p.log_density(x)).collect::<Result<_>>()?;
    let densities: Vec<f64> = pixels.iter().map(|x| p.density(x)).collect::<Result<_>>()?;
    let table_d = density_table(&scorer, Stage::Before, densities);
    let table_t = typicality_table(&test, Stage::Before, &logs)?;

    let mismatches = |t: &VerdictTable| {
        components.iter().zip(&t.labels).filter(|(c, l)| (**c == "grey") != (**l == Label::Outlier)).count()
    };
    let white_outliers = |t: &VerdictTable| {
        components.iter().zip(&t.labels).filter(|(c, l)| **c == "white" && **l == Label::Outlier).count()
    };
    let count = |name: &str| components.iter().filter(|c| **c == name).count();
    for (rule, t) in [("density_scoring", &table_d), ("typicality", &table_t)] {
        report.push_expectation(
            &format!("{rule}_outliers_are_exactly_grey"),
            mismatches(t) == 0,
            json!({ "mismatches": mismatches(t), "outliers": t.outliers() }),
        );
        report.push_expectation(
            &format!("{rule}_white_pixels_inliers"),
            white_outliers(t) == 0,
            json!({ "white_outliers": white_outliers(t) }),
        );
    }
    report.set_metric("grey_pixels", count("grey"));
    report.set_metric("white_pixels", count("white"));
    report.set_metric("black_pixels", count("black"));
    report.set_metric("entropy", test.entropy);
    report.set_metric("typicality_at_white", (test.entropy + white.ln()).abs());
    report.set_metric("typicality_at_black", (test.entropy + black.ln()).abs());
    report.set_metric("typicality_at_grey", if grey > 0.0 { (test.entropy + grey.ln()).abs() } else { f64::INFINITY });
    report.set_metric("density_threshold", scorer.threshold);

    let mut data = Vec::with_capacity(3 * n_pixels);
    for x in &pixels {
        data.extend(x.iter().map(|v| v.floor().clamp(0.0, 255.0) as u8));
    }
    let image = RgbImage { width: side, height: side, data };

    let mut points = PointTable::new(&[
        "index",
        "r",
        "g",
        "b",
        "component",
        "density",
        "density_label",
        "typicality_statistic",
        "typicality_label",
    ]);
    for i in 0..n_pixels {
        let mut row = vec![Cell::from(i)];
        row.extend(pixels[i].iter().map(|v| Cell::from(*v)));
        row.push(components[i].into());
        row.push(table_d.scores[i].into());
        row.push(table_d.labels[i].into());
        row.push(table_t.scores[i].into());
        row.push(table_t.labels[i].into());
        points.push(row);
    }
    report.verdict_tables = vec![table_d, table_t];
    report.finalize();
    Ok(ConstructionOutput { report, points, image: Some(image) })
}

/// Mean of the chi distribution with `dim` degrees of freedom.
pub fn chi_mean(dim: usize) -> f64 {
    let k = dim as f64;
    std::f64::consts::SQRT_2 * (ln_gamma((k + 1.0) / 2.0) - ln_gamma(k / 2.0)).exp()
}

/// Standard Gaussian samples concentrate near the sphere of radius √D
/// while the mode stays the single most likely point and is atypical.
pub fn annulus_demo(dim: usize, n: usize, epsilon: f64, rng: &mut RngState) -> Result<ConstructionOutput> {
    if dim < 1 || n < 100 {
        return Err(Error::DomainError("annulus demo needs dim >= 1 and n >= 100".into()));
    }
    let seed = rng.seed();
    let p: Arc<dyn Density> = Arc::new(Gaussian::standard(dim));
    let mut report = ConstructionReport::new(
        "annulus",
        json!({ "dim": dim, "n": n, "epsilon": epsilon }),
        json!({ "density": p.describe() }),
        seed,
    );
    let test = TypicalityTest::new(p.clone(), epsilon, 0, rng)?;
    let xs = p.sample(n, rng)?;
    let norms: Vec<f64> = xs.iter().map(|x| euclidean(x, &vec![0.0; dim])).collect();
    let logs: Vec<f64> = xs.iter().map(|x| p.log_density(x)).collect::<Result<_>>()?;
    let mean = norms.iter().sum::<f64>() / n as f64;
    let std = (norms.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mode = vec![0.0; dim];
    let log_mode = p.log_density(&mode)?;
    let mode_stat = crate::detectors::typicality_statistic(&test, std::slice::from_ref(&mode))?;
    let analytic = dim as f64 / 2.0;
    let chi = chi_mean(dim);

    // D/2 is exact in real arithmetic; the float evaluation of H and
    // log p(0) leaves a few ulps of H.
    let rounding = 8.0 * f64::EPSILON * test.entropy.abs().max(1.0);
    report.push_residual("mode_statistic_minus_half_dim", (mode_stat - analytic).abs(), rounding);
    report.push_residual("mean_norm_minus_chi_mean", (mean - chi).abs(), 5.0 * std / (n as f64).sqrt());
    let denser = logs.iter().filter(|l| **l >= log_mode).count();
    report.push_expectation("mode_is_densest_point", denser == 0, json!({ "samples_at_least_as_dense": denser }));
    report.set_metric("mean_norm", mean);
    report.set_metric("std_norm", std);
    report.set_metric("chi_mean", chi);
    report.set_metric("chi_mean_approximation", (dim as f64 - 0.5).sqrt());
    report.set_metric("mode_typicality_statistic", mode_stat);
    report.set_metric("mode_typicality_analytic", analytic);
    report.set_metric("mode_typicality_label", test.label_statistic(mode_stat));
    report.set_metric("mode_density_rank", denser + 1);

    let table = typicality_table(&test, Stage::Before, &logs)?;
    report.set_metric("typical_fraction", 1.0 - table.outliers() as f64 / n as f64);
    let mut points = PointTable::new(&["index", "norm", "log_density", "typicality_statistic", "typicality_label"]);
    for i in 0..n {
        points.push(vec![
            Cell::from(i),
            norms[i].into(),
            logs[i].into(),
            table.scores[i].into(),
            table.labels[i].into(),
        ]);
    }
    report.verdict_tables = vec![table];
    report.finalize();
    Ok(ConstructionOutput { report, points, image: None })
}
