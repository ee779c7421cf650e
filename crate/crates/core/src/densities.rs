//! Evaluable probability densities with sampling and entropy.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{
    find_root_monotone, integrate_1d, mean_estimate, std_normal_cdf, std_normal_quantile, Estimate, Interval, RngState,
    LN_2PI, ROOT_TOL,
};

/// Gaussian tails are cut at this many standard deviations wherever a
/// finite quadrature window is needed.
pub const GAUSSIAN_TRUNCATION: f64 = 8.0;

/// Where a density is strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Support {
    /// Axis-aligned box; bounds may be infinite.
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    AllSpace {
        dim: usize,
    },
    UnitCube {
        dim: usize,
    },
}

impl Support {
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::DomainError("box bounds must be non-empty and of equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::DomainError("box requires lo < hi componentwise".into()));
        }
        Ok(Support::Box { lo, hi })
    }

    pub fn dim(&self) -> usize {
        match self {
            Support::Box { lo, .. } => lo.len(),
            Support::AllSpace { dim } | Support::UnitCube { dim } => *dim,
        }
    }

    /// Bounds of coordinate `d`.
    pub fn coordinate_bounds(&self, d: usize) -> (f64, f64) {
        match self {
            Support::Box { lo, hi } => (lo[d], hi[d]),
            Support::AllSpace { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Support::UnitCube { .. } => (0.0, 1.0),
        }
    }

    pub fn is_bounded(&self) -> bool {
        (0..self.dim()).all(|d| {
            let (l, h) = self.coordinate_bounds(d);
            l.is_finite() && h.is_finite()
        })
    }

    /// Closed-set membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(d, v)| {
                let (l, h) = self.coordinate_bounds(d);
                l <= *v && *v <= h
            })
    }

    pub fn contains_interior(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(d, v)| {
                let (l, h) = self.coordinate_bounds(d);
                l < *v && *v < h
            })
    }

    /// Bounding box volume (infinite for unbounded supports).
    pub fn volume(&self) -> f64 {
        (0..self.dim())
            .map(|d| {
                let (l, h) = self.coordinate_bounds(d);
                h - l
            })
            .product()
    }

    fn disjoint_from(&self, other: &Support) -> bool {
        (0..self.dim()).any(|d| {
            let (a_lo, a_hi) = self.coordinate_bounds(d);
            let (b_lo, b_hi) = other.coordinate_bounds(d);
            a_hi <= b_lo || b_hi <= a_lo
        })
    }
}

/// A probability density on ℝ^D.
///
/// Implementors provide the `*_unchecked` evaluators; the checked
/// [`Density::log_density`] and [`Density::density`] validate the point's
/// dimension first. Points outside the support evaluate to `-inf` (log)
/// and `0` (density).
pub trait Density: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn support(&self) -> Support;

    fn log_density_unchecked(&self, x: &[f64]) -> Result<f64>;

    fn density_unchecked(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density_unchecked(x)?.exp())
    }

    /// One draw.
    fn draw(&self, rng: &mut RngState) -> Result<Vec<f64>>;

    /// Closed-form differential entropy in nats, when known.
    fn entropy_analytic(&self) -> Option<f64> {
        None
    }

    /// The independent one-dimensional factors, if the density is a product.
    fn marginals(&self) -> Option<Vec<Arc<dyn Density>>> {
        None
    }

    /// Closed-form CDF of a one-dimensional density.
    fn cdf(&self, _x: f64) -> Option<f64> {
        None
    }

    /// Closed-form quantile of a one-dimensional density.
    fn quantile(&self, _p: f64) -> Option<f64> {
        None
    }

    /// A finite window that carries all but a negligible amount of the
    /// mass of a one-dimensional density.
    fn mass_window(&self) -> Option<Interval> {
        if self.dim() != 1 {
            return None;
        }
        let (l, h) = self.support().coordinate_bounds(0);
        Interval::new(l, h).ok()
    }

    fn describe(&self) -> Value;

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        self.log_density_unchecked(x)
    }

    fn density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        self.density_unchecked(x)
    }

    /// `n` independent draws.
    fn sample(&self, n: usize, rng: &mut RngState) -> Result<Vec<Vec<f64>>> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// Differential entropy: the closed form when available (zero standard
    /// error), otherwise the Monte Carlo mean of `-log p` over `n_mc` draws.
    fn entropy(&self, n_mc: usize, rng: &mut RngState) -> Result<Estimate> {
        if let Some(h) = self.entropy_analytic() {
            return Ok(Estimate::exact(h));
        }
        let mut values = Vec::with_capacity(n_mc);
        for _ in 0..n_mc {
            let x = self.draw(rng)?;
            values.push(-self.log_density_unchecked(&x)?);
        }
        mean_estimate(&values)
    }
}

/// Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != std.len() {
            return Err(Error::DomainError("mean and std must be non-empty and equal length".into()));
        }
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::DomainError("Gaussian parameters must be finite with std > 0".into()));
        }
        Ok(Self { mean, std })
    }

    /// N(0, I_D).
    pub fn standard(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn univariate(mean: f64, std: f64) -> Result<Self> {
        Self::new(vec![mean], vec![std])
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }
}

impl Density for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn support(&self) -> Support {
        Support::AllSpace { dim: self.dim() }
    }

    fn log_density_unchecked(&self, x: &[f64]) -> Result<f64> {
        let mut quad = 0.0;
        let mut log_scale = 0.0;
        for ((xi, m), s) in x.iter().zip(&self.mean).zip(&self.std) {
            let z = (xi - m) / s;
            quad += z * z;
            log_scale += s.ln();
        }
        Ok(-0.5 * quad - log_scale - 0.5 * self.dim() as f64 * LN_2PI)
    }

    fn draw(&self, rng: &mut RngState) -> Result<Vec<f64>> {
        Ok(self.mean.iter().zip(&self.std).map(|(m, s)| m + s * rng.normal()).collect())
    }

    fn entropy_analytic(&self) -> Option<f64> {
        let log_scale: f64 = self.std.iter().map(|s| s.ln()).sum();
        Some(0.5 * self.dim() as f64 * (1.0 + LN_2PI) + log_scale)
    }

    fn marginals(&self) -> Option<Vec<Arc<dyn Density>>> {
        Some(
            self.mean
                .iter()
                .zip(&self.std)
                .map(|(m, s)| Arc::new(Gaussian { mean: vec![*m], std: vec![*s] }) as Arc<dyn Density>)
                .collect(),
        )
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        (self.dim() == 1).then(|| std_normal_cdf((x - self.mean[0]) / self.std[0]))
    }

    fn quantile(&self, p: f64) -> Option<f64> {
        if self.dim() != 1 {
            return None;
        }
        std_normal_quantile(p).ok().map(|z| self.mean[0] + self.std[0] * z)
    }

    fn mass_window(&self) -> Option<Interval> {
        if self.dim() != 1 {
            return None;
        }
        let half = GAUSSIAN_TRUNCATION * self.std[0];
        Interval::new(self.mean[0] - half, self.mean[0] + half).ok()
    }

    fn describe(&self) -> Value {
        json!({ "family": "gaussian", "mean": self.mean, "std": self.std })
    }
}

/// Uniform density on an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Uniform {
    lo: Vec<f64>,
    hi: Vec<f64>,
    log_volume: f64,
}

impl Uniform {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Support::new_box(lo.clone(), hi.clone())?;
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(Error::DomainError("uniform box must be bounded".into()));
        }
        let log_volume = lo.iter().zip(&hi).map(|(l, h)| (h - l).ln()).sum();
        Ok(Self { lo, hi, log_volume })
    }

    /// U([0, 1]^D).
    pub fn unit_cube(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim]).expect("unit cube is a valid box")
    }

    /// U([lo, hi]^D).
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    fn inside(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| l <= v && v <= h)
    }

    fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

impl Density for Uniform {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn support(&self) -> Support {
        if self.lo.iter().all(|l| *l == 0.0) && self.hi.iter().all(|h| *h == 1.0) {
            Support::UnitCube { dim: self.dim() }
        } else {
            Support::Box { lo: self.lo.clone(), hi: self.hi.clone() }
        }
    }

    fn log_density_unchecked(&self, x: &[f64]) -> Result<f64> {
        Ok(if self.inside(x) { -self.log_volume } else { f64::NEG_INFINITY })
    }

    fn density_unchecked(&self, x: &[f64]) -> Result<f64> {
        Ok(if self.inside(x) { 1.0 / self.volume() } else { 0.0 })
    }

    fn draw(&self, rng: &mut RngState) -> Result<Vec<f64>> {
        Ok(self.lo.iter().zip(&self.hi).map(|(l, h)| l + (h - l) * rng.uniform()).collect())
    }

    fn entropy_analytic(&self) -> Option<f64> {
        Some(self.log_volume)
    }

    fn marginals(&self) -> Option<Vec<Arc<dyn Density>>> {
        Some(
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(l, h)| Arc::new(Uniform::new(vec![*l], vec![*h]).unwrap()) as Arc<dyn Density>)
                .collect(),
        )
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        (self.dim() == 1).then(|| ((x - self.lo[0]) / (self.hi[0] - self.lo[0])).clamp(0.0, 1.0))
    }

    fn quantile(&self, p: f64) -> Option<f64> {
        (self.dim() == 1 && (0.0..=1.0).contains(&p)).then(|| self.lo[0] + p * (self.hi[0] - self.lo[0]))
    }

    fn describe(&self) -> Value {
        json!({ "family": "uniform", "lo": self.lo, "hi": self.hi })
    }
}

/// Finite mixture of densities of equal dimension.
///
/// Zero-weight components are kept for bookkeeping but never sampled
/// and contribute nothing to the density.
#[derive(Debug, Clone)]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<Arc<dyn Density>>,
}

impl Mixture {
    pub fn new(weights: Vec<f64>, components: Vec<Arc<dyn Density>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::DomainError("mixture needs one weight per component".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::DomainError("mixture weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::DomainError(format!("mixture weights sum to {total}, not 1")));
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::DomainError("mixture components differ in dimension".into()));
        }
        Ok(Self { weights, components })
    }

    /// Two-bump one-dimensional mixture used by the uniformization demos.
    pub fn bimodal() -> Self {
        let left = Gaussian::univariate(-2.0, 0.6).unwrap();
        let right = Gaussian::univariate(1.5, 0.8).unwrap();
        Self::new(vec![0.4, 0.6], vec![Arc::new(left), Arc::new(right)]).unwrap()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Arc<dyn Density>] {
        &self.components
    }

    fn active(&self) -> impl Iterator<Item = (f64, &Arc<dyn Density>)> {
        self.weights.iter().copied().zip(&self.components).filter(|(w, _)| *w > 0.0)
    }

    fn has_disjoint_supports(&self) -> bool {
        let supports: Vec<Support> = self.active().map(|(_, c)| c.support()).collect();
        supports.iter().enumerate().all(|(i, a)| supports[i + 1..].iter().all(|b| a.disjoint_from(b)))
    }
}

impl Density for Mixture {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn support(&self) -> Support {
        let dim = self.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for (_, c) in self.active() {
            let s = c.support();
            for d in 0..dim {
                let (l, h) = s.coordinate_bounds(d);
                lo[d] = lo[d].min(l);
                hi[d] = hi[d].max(h);
            }
        }
        if lo.iter().all(|l| l.is_infinite()) && hi.iter().all(|h| h.is_infinite()) {
            Support::AllSpace { dim }
        } else {
            Support::Box { lo, hi }
        }
    }

    fn log_density_unchecked(&self, x: &[f64]) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.components.len());
        for (w, c) in self.active() {
            terms.push(w.ln() + c.log_density_unchecked(x)?);
        }
        Ok(log_sum_exp(&terms))
    }

    fn density_unchecked(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (w, c) in self.active() {
            total += w * c.density_unchecked(x)?;
        }
        Ok(total)
    }

    fn draw(&self, rng: &mut RngState) -> Result<Vec<f64>> {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, w) in self.weights.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            acc += w;
            chosen = Some(i);
            if u < acc {
                break;
            }
        }
        self.components[chosen.expect("at least one positive weight")].draw(rng)
    }

    /// Closed form only when the active components have pairwise disjoint
    /// supports and known entropies: H = Σ wᵢ (Hᵢ − log wᵢ).
    fn entropy_analytic(&self) -> Option<f64> {
        if !self.has_disjoint_supports() {
            return None;
        }
        self.active().map(|(w, c)| c.entropy_analytic().map(|h| w * (h - w.ln()))).sum()
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        if self.dim() != 1 {
            return None;
        }
        self.active().map(|(w, c)| c.cdf(x).map(|v| w * v)).sum()
    }

    fn quantile(&self, p: f64) -> Option<f64> {
        if self.dim() != 1 || !(p > 0.0 && p < 1.0) {
            return None;
        }
        self.cdf(0.0)?;
        let window = self.mass_window()?;
        let mut bracket = window;
        for _ in 0..64 {
            let (lo, hi) = (bracket.lo(), bracket.hi());
            if self.cdf(lo)? <= p && self.cdf(hi)? >= p {
                break;
            }
            let w = bracket.width();
            bracket = Interval::new(lo - w, hi + w).ok()?;
        }
        find_root_monotone(|t| self.cdf(t).unwrap() - p, bracket, ROOT_TOL).ok()
    }

    fn mass_window(&self) -> Option<Interval> {
        if self.dim() != 1 {
            return None;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, c) in self.active() {
            let w = c.mass_window()?;
            lo = lo.min(w.lo());
            hi = hi.max(w.hi());
        }
        Interval::new(lo, hi).ok()
    }

    fn describe(&self) -> Value {
        json!({
            "family": "mixture",
            "weights": self.weights,
            "components": self.components.iter().map(|c| c.describe()).collect::<Vec<_>>(),
        })
    }
}

/// Product of independent one-dimensional factors.
#[derive(Debug, Clone)]
pub struct Product {
    factors: Vec<Arc<dyn Density>>,
}

impl Product {
    pub fn new(factors: Vec<Arc<dyn Density>>) -> Result<Self> {
        if factors.is_empty() || factors.iter().any(|f| f.dim() != 1) {
            return Err(Error::DomainError("product factors must be one-dimensional".into()));
        }
        Ok(Self { factors })
    }
}

impl Density for Product {
    fn dim(&self) -> usize {
        self.factors.len()
    }

    fn support(&self) -> Support {
        let bounds: Vec<(f64, f64)> = self.factors.iter().map(|f| f.support().coordinate_bounds(0)).collect();
        if bounds.iter().all(|(l, h)| l.is_infinite() && h.is_infinite()) {
            Support::AllSpace { dim: self.dim() }
        } else {
            Support::Box { lo: bounds.iter().map(|b| b.0).collect(), hi: bounds.iter().map(|b| b.1).collect() }
        }
    }

    fn log_density_unchecked(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (f, xi) in self.factors.iter().zip(x) {
            total += f.log_density_unchecked(std::slice::from_ref(xi))?;
        }
        Ok(total)
    }

    fn draw(&self, rng: &mut RngState) -> Result<Vec<f64>> {
        self.factors.iter().map(|f| Ok(f.draw(rng)?[0])).collect()
    }

    fn entropy_analytic(&self) -> Option<f64> {
        self.factors.iter().map(|f| f.entropy_analytic()).sum()
    }

    fn marginals(&self) -> Option<Vec<Arc<dyn Density>>> {
        Some(self.factors.clone())
    }

    fn describe(&self) -> Value {
        json!({
            "family": "product",
            "factors": self.factors.iter().map(|f| f.describe()).collect::<Vec<_>>(),
        })
    }
}

/// log Σ exp(tᵢ), with `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Three-cube pixel mixture: dark grey `[10,11]³` with weight β, white
/// `[255,256]³` with weight (1−β)α and black shades `[0,10]³` with weight
/// (1−β)(1−α). Component order is grey, white, black.
pub fn build_pixel_mixture(alpha: f64, beta: f64) -> Result<Mixture> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::DomainError(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::DomainError(format!("beta must lie in [0, 1), got {beta}")));
    }
    let grey = Uniform::cube(3, 10.0, 11.0)?;
    let white = Uniform::cube(3, 255.0, 256.0)?;
    let black = Uniform::cube(3, 0.0, 10.0)?;
    Mixture::new(
        vec![beta, (1.0 - beta) * alpha, (1.0 - beta) * (1.0 - alpha)],
        vec![Arc::new(grey), Arc::new(white), Arc::new(black)],
    )
}

/// Default white-cube weight, 1/1001, under which white and black pixels
/// share the same density.
pub const PIXEL_ALPHA: f64 = 1.0 / 1001.0;
/// Literal alternative α = 1001⁻³, under which white pixels are far
/// rarer than black ones.
pub const PIXEL_ALPHA_CUBED: f64 = 1.0 / (1001.0 * 1001.0 * 1001.0);
/// Default dark-grey weight.
pub const PIXEL_BETA: f64 = 1e-4;

/// 1-D CDF of `p`: closed form when available, else quadrature from the
/// left edge of its mass window.
pub fn cdf_1d(p: &dyn Density, x: f64, abs_tol: f64) -> Result<f64> {
    if p.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: p.dim() });
    }
    if let Some(v) = p.cdf(x) {
        return Ok(v);
    }
    let window = p
        .mass_window()
        .ok_or_else(|| Error::DomainError("density offers neither a CDF nor a finite mass window".into()))?;
    if x <= window.lo() {
        return Ok(0.0);
    }
    let upper = x.min(window.hi());
    let mass =
        integrate_1d(|t| p.density_unchecked(&[t]).unwrap_or(f64::NAN), Interval::new(window.lo(), upper)?, abs_tol)?;
    Ok(mass.clamp(0.0, 1.0))
}
