//! Density scoring with a calibrated threshold, the typicality test and
//! density-ratio scoring.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::densities::Density;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{sorted_quantile, RngState};

/// Scores within this relative distance of each other count as one atom.
pub const TIE_RELATIVE_TOL: f64 = 1e-12;
/// Calibration is flagged degenerate when the score variance falls below this.
pub const DEGENERATE_VARIANCE: f64 = 1e-18;
/// Smallest calibration sample accepted.
pub const MIN_CALIBRATION_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Inlier,
    Outlier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    DensityScore,
    Typicality,
    DensityRatio,
}

/// One classification together with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorVerdict {
    pub score: f64,
    pub label: Label,
    pub rule: Rule,
    pub parameters: Value,
}

impl DetectorVerdict {
    /// Re-derives the label from `score`, `rule` and `parameters` alone.
    pub fn recompute_label(&self) -> Result<Label> {
        let num = |key: &str| {
            self.parameters
                .get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::DomainError(format!("verdict parameters lack `{key}`")))
        };
        match self.rule {
            Rule::DensityScore => {
                let lambda = num("threshold")?;
                let degenerate = self.parameters.get("degenerate").and_then(Value::as_bool).unwrap_or(false);
                Ok(density_label(self.score, lambda, degenerate))
            }
            Rule::Typicality => Ok(typicality_label(self.score, num("epsilon")?)),
            Rule::DensityRatio => {
                let threshold = num("threshold")?;
                Ok(if self.score <= threshold { Label::Outlier } else { Label::Inlier })
            }
        }
    }
}

fn density_label(score: f64, lambda: f64, degenerate: bool) -> Label {
    let outlier = if degenerate { score < lambda * (1.0 - TIE_RELATIVE_TOL) } else { score <= lambda };
    if outlier {
        Label::Outlier
    } else {
        Label::Inlier
    }
}

fn typicality_label(statistic: f64, epsilon: f64) -> Label {
    if statistic <= epsilon {
        Label::Inlier
    } else {
        Label::Outlier
    }
}

/// Density scoring: `x` is an outlier iff `p(x) ≤ λ`.
///
/// When the scores of the calibration sample form an atom at the
/// `(1 − mass_level)` quantile the threshold moves to the largest score
/// strictly below the atom (`tie_adjusted`), so the whole atom stays on
/// the inlier side. If nothing lies below the atom, or the scores are
/// constant, the calibration is `degenerate` and only points with density
/// strictly below the atom are outliers.
#[derive(Debug, Clone)]
pub struct DensityScorer {
    pub density: Arc<dyn Density>,
    pub threshold: f64,
    pub mass_level: f64,
    pub n_calibration: usize,
    pub degenerate: bool,
    pub tie_adjusted: bool,
    /// Fraction of the calibration sample labeled inlier.
    pub empirical_inlier_mass: f64,
}

fn check_mass_level(mass_level: f64) -> Result<()> {
    if !(mass_level > 0.5 && mass_level < 1.0) {
        return Err(Error::DomainError(format!("mass level must lie in (0.5, 1), got {mass_level}")));
    }
    Ok(())
}

/// Calibrates λ on `n` fresh draws from `p`.
pub fn calibrate_density_threshold(
    p: Arc<dyn Density>,
    mass_level: f64,
    n: usize,
    rng: &mut RngState,
) -> Result<DensityScorer> {
    check_mass_level(mass_level)?;
    if n < MIN_CALIBRATION_SAMPLES {
        return Err(Error::DomainError(format!(
            "calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {n}"
        )));
    }
    let mut scores = Vec::with_capacity(n);
    for _ in 0..n {
        let x = p.draw(rng)?;
        scores.push(p.density_unchecked(&x)?);
    }
    calibrate_from_scores(p, scores, mass_level)
}

/// Calibrates λ from precomputed density values of draws from `p`.
pub fn calibrate_from_scores(p: Arc<dyn Density>, mut scores: Vec<f64>, mass_level: f64) -> Result<DensityScorer> {
    check_mass_level(mass_level)?;
    if scores.len() < MIN_CALIBRATION_SAMPLES || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::DomainError("calibration scores must be finite and numerous enough".into()));
    }
    scores.sort_by(f64::total_cmp);
    let n = scores.len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    let variance = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;

    let q = sorted_quantile(&scores, 1.0 - mass_level);
    let in_atom = |s: f64| (s - q).abs() <= TIE_RELATIVE_TOL * q.abs();
    let atom_size = scores.iter().filter(|s| in_atom(**s)).count();
    let below = scores.iter().rev().find(|s| **s < q && !in_atom(**s)).copied();

    let (threshold, mut degenerate, tie_adjusted) = match (atom_size > 1, below) {
        (true, Some(b)) => (b, false, true),
        (true, None) => (q, true, false),
        (false, _) => (q, false, false),
    };
    if variance < DEGENERATE_VARIANCE {
        degenerate = true;
    }
    let inliers = scores.iter().filter(|s| density_label(**s, threshold, degenerate) == Label::Inlier).count();
    Ok(DensityScorer {
        density: p,
        threshold,
        mass_level,
        n_calibration: n,
        degenerate,
        tie_adjusted,
        empirical_inlier_mass: inliers as f64 / n as f64,
    })
}

impl DensityScorer {
    pub fn parameters(&self) -> Value {
        json!({
            "threshold": self.threshold,
            "mass_level": self.mass_level,
            "n_calibration": self.n_calibration,
            "degenerate": self.degenerate,
            "tie_adjusted": self.tie_adjusted,
            "empirical_inlier_mass": self.empirical_inlier_mass,
        })
    }

    /// Labels a precomputed density value.
    pub fn label_score(&self, score: f64) -> Label {
        density_label(score, self.threshold, self.degenerate)
    }
}

pub fn density_score_classify(scorer: &DensityScorer, x: &[f64]) -> Result<DetectorVerdict> {
    let score = scorer.density.density(x)?;
    Ok(DetectorVerdict {
        score,
        label: scorer.label_score(score),
        rule: Rule::DensityScore,
        parameters: scorer.parameters(),
    })
}

/// The typicality test with tolerance ε around the entropy.
#[derive(Debug, Clone)]
pub struct TypicalityTest {
    pub density: Arc<dyn Density>,
    pub entropy: f64,
    pub entropy_std_error: f64,
    /// Monte Carlo draws behind `entropy`; `None` for a closed form.
    pub n_mc: Option<usize>,
    pub epsilon: f64,
}

impl TypicalityTest {
    /// Uses the analytic entropy when available, else `n_mc` Monte Carlo draws.
    pub fn new(density: Arc<dyn Density>, epsilon: f64, n_mc: usize, rng: &mut RngState) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::DomainError("typicality epsilon must be positive".into()));
        }
        let analytic = density.entropy_analytic().is_some();
        let estimate = density.entropy(n_mc, rng)?;
        Ok(Self {
            density,
            entropy: estimate.value,
            entropy_std_error: estimate.std_error,
            n_mc: (!analytic).then_some(n_mc),
            epsilon,
        })
    }

    pub fn with_entropy(density: Arc<dyn Density>, entropy: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::DomainError("typicality epsilon must be positive".into()));
        }
        Ok(Self { density, entropy, entropy_std_error: 0.0, n_mc: None, epsilon })
    }

    pub fn parameters(&self) -> Value {
        json!({
            "entropy": self.entropy,
            "entropy_std_error": self.entropy_std_error,
            "n_mc": self.n_mc,
            "epsilon": self.epsilon,
        })
    }

    /// Statistic from precomputed log densities of a batch.
    pub fn statistic_from_log_densities(&self, log_densities: &[f64]) -> Result<f64> {
        if log_densities.is_empty() {
            return Err(Error::DomainError("typicality needs a non-empty batch".into()));
        }
        // Sorting first makes the sum independent of batch order.
        let mut sorted = log_densities.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        Ok((self.entropy + mean).abs())
    }

    pub fn label_statistic(&self, statistic: f64) -> Label {
        typicality_label(statistic, self.epsilon)
    }

    pub fn classify(&self, batch: &[Vec<f64>]) -> Result<DetectorVerdict> {
        let score = typicality_statistic(self, batch)?;
        Ok(DetectorVerdict {
            score,
            label: self.label_statistic(score),
            rule: Rule::Typicality,
            parameters: self.parameters(),
        })
    }
}

/// `|H + (1/N) Σ log p(xₙ)|`.
pub fn typicality_statistic(test: &TypicalityTest, batch: &[Vec<f64>]) -> Result<f64> {
    let logs = batch.iter().map(|x| test.density.log_density(x)).collect::<Result<Vec<_>>>()?;
    test.statistic_from_log_densities(&logs)
}

/// `p_fg(x) / p_bg(x)`, evaluated in log space.
pub fn density_ratio_score(p_fg: &dyn Density, p_bg: &dyn Density, x: &[f64]) -> Result<f64> {
    if p_fg.dim() != p_bg.dim() {
        return Err(Error::DimensionMismatch { expected: p_fg.dim(), got: p_bg.dim() });
    }
    check_dim(p_fg.dim(), x)?;
    let log_bg = p_bg.log_density_unchecked(x)?;
    if log_bg == f64::NEG_INFINITY {
        return Err(Error::OutsideBackgroundSupport);
    }
    Ok((p_fg.log_density_unchecked(x)? - log_bg).exp())
}

/// Density-ratio verdict: outlier iff the ratio is at most `threshold`.
pub fn density_ratio_classify(
    p_fg: &dyn Density,
    p_bg: &dyn Density,
    x: &[f64],
    threshold: f64,
) -> Result<DetectorVerdict> {
    let score = density_ratio_score(p_fg, p_bg, x)?;
    Ok(DetectorVerdict {
        score,
        label: if score <= threshold { Label::Outlier } else { Label::Inlier },
        rule: Rule::DensityRatio,
        parameters: json!({ "threshold": threshold }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{Gaussian, Uniform};
    use crate::numerics::{std_normal_pdf, std_normal_quantile};

    fn normal() -> Arc<dyn Density> {
        Arc::new(Gaussian::standard(1))
    }

    #[test]
    fn normal_threshold_matches_analytic() {
        let mut rng = RngState::new(11);
        let scorer = calibrate_density_threshold(normal(), 0.95, 1_000_000, &mut rng).unwrap();
        let oracle = std_normal_pdf(std_normal_quantile(0.975).unwrap());
        assert!((scorer.threshold - oracle).abs() < 1e-3, "{}", scorer.threshold);
        assert!(!scorer.degenerate && !scorer.tie_adjusted);
    }

    #[test]
    fn uniform_calibration_is_degenerate() {
        let mut rng = RngState::new(2);
        let s = calibrate_density_threshold(Arc::new(Uniform::unit_cube(1)), 0.9, 1000, &mut rng).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.threshold, 1.0);
        assert_eq!(s.label_score(1.0), Label::Inlier);
        let s =
            calibrate_density_threshold(Arc::new(Uniform::cube(1, 0.0, 2.0).unwrap()), 0.95, 1000, &mut rng).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.threshold, 0.5);
    }

    #[test]
    fn classification_examples() {
        let scorer = DensityScorer {
            density: normal(),
            threshold: 0.05844,
            mass_level: 0.95,
            n_calibration: 0,
            degenerate: false,
            tie_adjusted: false,
            empirical_inlier_mass: 0.95,
        };
        assert_eq!(density_score_classify(&scorer, &[0.0]).unwrap().label, Label::Inlier);
        let v = density_score_classify(&scorer, &[3.0]).unwrap();
        assert_eq!(v.label, Label::Outlier);
        assert_eq!(v.recompute_label().unwrap(), Label::Outlier);
        assert_eq!(scorer.label_score(0.05844), Label::Outlier);
        assert!(matches!(density_score_classify(&scorer, &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn atom_threshold_moves_below_the_atom() {
        let mut scores = vec![1.0; 180];
        scores.extend((0..20).map(|i| 0.1 + 0.001 * i as f64));
        let s = calibrate_from_scores(normal(), scores, 0.75).unwrap();
        assert!(s.tie_adjusted && !s.degenerate);
        assert!((s.threshold - 0.119).abs() < 1e-12);
        assert_eq!(s.label_score(1.0), Label::Inlier);
        assert_eq!(s.label_score(0.11), Label::Outlier);
        assert!((s.empirical_inlier_mass - 0.9).abs() < 1e-12);
    }

    #[test]
    fn calibration_preconditions() {
        let mut rng = RngState::new(0);
        assert!(calibrate_density_threshold(normal(), 0.4, 1000, &mut rng).is_err());
        assert!(calibrate_density_threshold(normal(), 0.95, 99, &mut rng).is_err());
    }

    #[test]
    fn typicality_examples() {
        let mut rng = RngState::new(0);
        let t = TypicalityTest::new(normal(), 1.0, 0, &mut rng).unwrap();
        assert!(typicality_statistic(&t, &[vec![1.0]]).unwrap() < 1e-15);
        let u = TypicalityTest::new(Arc::new(Uniform::unit_cube(3)), 1.0, 0, &mut rng).unwrap();
        assert_eq!(typicality_statistic(&u, &[vec![0.1, 0.2, 0.3], vec![0.9, 0.5, 0.5]]).unwrap(), 0.0);
        let g = TypicalityTest::new(Arc::new(Gaussian::standard(100)), 1.0, 0, &mut rng).unwrap();
        let stat = typicality_statistic(&g, &[vec![0.0; 100]]).unwrap();
        assert!((stat - 50.0).abs() < 1e-12);
        let v = g.classify(&[vec![0.0; 100]]).unwrap();
        assert_eq!(v.label, Label::Outlier);
        assert_eq!(v.recompute_label().unwrap(), Label::Outlier);
        assert!(TypicalityTest::new(normal(), 0.0, 0, &mut rng).is_err());
        assert!(typicality_statistic(&t, &[]).is_err());
    }

    #[test]
    fn ratio_examples() {
        let bg = Uniform::cube(1, -10.0, 10.0).unwrap();
        let r = density_ratio_score(normal().as_ref(), &bg, &[0.0]).unwrap();
        assert!((r - 7.978_845_608_028_654).abs() < 1e-12);
        assert_eq!(density_ratio_score(normal().as_ref(), normal().as_ref(), &[2.5]).unwrap(), 1.0);
        assert!(matches!(density_ratio_score(normal().as_ref(), &bg, &[11.0]), Err(Error::OutsideBackgroundSupport)));
        let v = density_ratio_classify(normal().as_ref(), &bg, &[0.0], 1.0).unwrap();
        assert_eq!(v.label, Label::Inlier);
        assert_eq!(v.recompute_label().unwrap(), Label::Inlier);
    }
}
