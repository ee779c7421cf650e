//! Continuous invertible maps with exact inverses and log-Jacobians, and
//! the pushforward density they induce.
//!
//! Every `log_abs_det_jacobian` is evaluated at the forward input `x`, so
//! for `z = f(x)` the pushforward density is
//! `p_f(z) = p(x) · exp(−log_abs_det_jacobian(x))`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::densities::{cdf_1d, Density, Support};
use crate::error::{check_dim, Error, Result};
use crate::numerics::{find_root_monotone, integrate_1d, Interval, RngState, ROOT_TOL};

/// CDF outputs are clamped into `[CDF_CLAMP, 1 − CDF_CLAMP]` before inversion.
pub const CDF_CLAMP: f64 = 1e-15;
/// Absolute tolerance of the quadratures behind CDF and score maps.
pub const MAP_QUADRATURE_TOL: f64 = 1e-12;

/// A continuous bijection of ℝ^D (or of a subset).
pub trait Bijection: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>>;
    /// log |det ∂f/∂xᵀ| at the forward input `x`.
    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64>;
    fn domain(&self) -> Support;
    fn codomain(&self) -> Support;
    /// Parameters of the map for reports.
    fn describe(&self) -> Value;
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_unit(u: &[f64]) -> Result<()> {
    if u.is_empty() || ((norm(u) - 1.0).abs() > 1e-12) {
        return Err(Error::DomainError("direction must be a unit vector".into()));
    }
    Ok(())
}

/// Unit vector along `v`.
pub fn normalized(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::DomainError("cannot normalize a zero vector".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Diagonal affine map `x ↦ scale ⊙ x + shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    scale: Vec<f64>,
    shift: Vec<f64>,
}

impl Affine {
    pub fn new(scale: Vec<f64>, shift: Vec<f64>) -> Result<Self> {
        if scale.is_empty() || scale.len() != shift.len() {
            return Err(Error::DomainError("scale and shift must match in length".into()));
        }
        if scale.iter().any(|s| *s == 0.0 || !s.is_finite()) || shift.iter().any(|s| !s.is_finite()) {
            return Err(Error::DomainError("affine scale must be finite and non-zero".into()));
        }
        Ok(Self { scale, shift })
    }

    /// Same scale and shift on every coordinate.
    pub fn uniform(dim: usize, scale: f64, shift: f64) -> Result<Self> {
        Self::new(vec![scale; dim], vec![shift; dim])
    }
}

impl Bijection for Affine {
    fn dim(&self) -> usize {
        self.scale.len()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        Ok(x.iter().zip(self.scale.iter().zip(&self.shift)).map(|(v, (a, b))| a * v + b).collect())
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z)?;
        Ok(z.iter().zip(self.scale.iter().zip(&self.shift)).map(|(v, (a, b))| (v - b) / a).collect())
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(self.scale.iter().map(|a| a.abs().ln()).sum())
    }

    fn domain(&self) -> Support {
        Support::AllSpace { dim: self.dim() }
    }

    fn codomain(&self) -> Support {
        Support::AllSpace { dim: self.dim() }
    }

    fn describe(&self) -> Value {
        json!({ "type": "affine", "scale": self.scale, "shift": self.shift })
    }
}

/// `second ∘ first`.
#[derive(Debug, Clone)]
pub struct Composed {
    first: Arc<dyn Bijection>,
    second: Arc<dyn Bijection>,
}

/// Map applying `f` then `g`; log-determinants add along the path.
pub fn compose(f: Arc<dyn Bijection>, g: Arc<dyn Bijection>) -> Result<Composed> {
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: g.dim() });
    }
    Ok(Composed { first: f, second: g })
}

impl Bijection for Composed {
    fn dim(&self) -> usize {
        self.first.dim()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.second.forward(&self.first.forward(x)?)
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.first.inverse(&self.second.inverse(z)?)
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        let y = self.first.forward(x)?;
        Ok(self.first.log_abs_det_jacobian(x)? + self.second.log_abs_det_jacobian(&y)?)
    }

    fn domain(&self) -> Support {
        self.first.domain()
    }

    fn codomain(&self) -> Support {
        self.second.codomain()
    }

    fn describe(&self) -> Value {
        json!({
            "type": "compose",
            "first": self.first.describe(),
            "second": self.second.describe(),
        })
    }
}

/// The inverse map of a bijection.
#[derive(Debug, Clone)]
pub struct Inverted {
    inner: Arc<dyn Bijection>,
}

pub fn invert(f: Arc<dyn Bijection>) -> Inverted {
    Inverted { inner: f }
}

impl Bijection for Inverted {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.inner.inverse(x)
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.inner.forward(z)
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        let pre = self.inner.inverse(x)?;
        Ok(-self.inner.log_abs_det_jacobian(&pre)?)
    }

    fn domain(&self) -> Support {
        self.inner.codomain()
    }

    fn codomain(&self) -> Support {
        self.inner.domain()
    }

    fn describe(&self) -> Value {
        json!({ "type": "inverse", "of": self.inner.describe() })
    }
}

/// Density of `f(X)` for `X ~ base`.
#[derive(Debug, Clone)]
pub struct Pushforward {
    base: Arc<dyn Density>,
    map: Arc<dyn Bijection>,
}

/// The change-of-variables density of `f(X)`.
pub fn pushforward(base: Arc<dyn Density>, map: Arc<dyn Bijection>) -> Result<Pushforward> {
    if base.dim() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: base.dim() });
    }
    let (support, domain) = (base.support(), map.domain());
    for d in 0..base.dim() {
        let (sl, sh) = support.coordinate_bounds(d);
        let (dl, dh) = domain.coordinate_bounds(d);
        if sl < dl || sh > dh {
            return Err(Error::DomainError(format!("density support exceeds the map's domain in coordinate {d}")));
        }
    }
    Ok(Pushforward { base, map })
}

impl Pushforward {
    pub fn base(&self) -> &Arc<dyn Density> {
        &self.base
    }

    pub fn map(&self) -> &Arc<dyn Bijection> {
        &self.map
    }
}

impl Density for Pushforward {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn support(&self) -> Support {
        self.map.codomain()
    }

    fn log_density_unchecked(&self, z: &[f64]) -> Result<f64> {
        let x = self.map.inverse(z).map_err(|e| match e {
            Error::DimensionMismatch { .. } => e,
            _ => Error::PointOutsideCodomain,
        })?;
        Ok(self.base.log_density_unchecked(&x)? - self.map.log_abs_det_jacobian(&x)?)
    }

    fn draw(&self, rng: &mut RngState) -> Result<Vec<f64>> {
        self.map.forward(&self.base.draw(rng)?)
    }

    fn describe(&self) -> Value {
        json!({
            "family": "pushforward",
            "base": self.base.describe(),
            "map": self.map.describe(),
        })
    }
}

/// The CDF of a one-dimensional density as a map onto (0, 1).
#[derive(Debug, Clone)]
pub struct CdfMap {
    density: Arc<dyn Density>,
}

pub fn cdf_bijection_1d(p: Arc<dyn Density>) -> Result<CdfMap> {
    if p.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: p.dim() });
    }
    if p.cdf(0.0).is_none() && p.mass_window().is_none() {
        return Err(Error::DomainError("density offers neither a closed-form CDF nor a finite mass window".into()));
    }
    Ok(CdfMap { density: p })
}

impl CdfMap {
    fn cdf(&self, x: f64) -> Result<f64> {
        cdf_1d(self.density.as_ref(), x, MAP_QUADRATURE_TOL)
    }

    fn quantile(&self, z: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::PointOutsideCodomain);
        }
        let z = z.clamp(CDF_CLAMP, 1.0 - CDF_CLAMP);
        if let Some(x) = self.density.quantile(z) {
            return Ok(x);
        }
        let mut bracket = self.density.mass_window().ok_or(Error::PointOutsideCodomain)?;
        let (mut lo_val, mut hi_val) = (self.cdf(bracket.lo())?, self.cdf(bracket.hi())?);
        let (support_lo, support_hi) = self.density.support().coordinate_bounds(0);
        for _ in 0..64 {
            if lo_val <= z && z <= hi_val {
                break;
            }
            let w = bracket.width();
            let lo = (bracket.lo() - w).max(support_lo);
            let hi = (bracket.hi() + w).min(support_hi);
            bracket = Interval::new(lo, hi)?;
            lo_val = self.cdf(lo)?;
            hi_val = self.cdf(hi)?;
        }
        let root = find_root_monotone(|t| self.cdf(t).map(|v| v - z).unwrap_or(f64::NAN), bracket, ROOT_TOL);
        match root {
            Ok(x) => Ok(x),
            Err(Error::NoSignChange { g_lo, .. }) if g_lo > 0.0 => Ok(bracket.lo()),
            Err(Error::NoSignChange { .. }) => Ok(bracket.hi()),
            Err(e) => Err(e),
        }
    }
}

impl Bijection for CdfMap {
    fn dim(&self) -> usize {
        1
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(1, x)?;
        Ok(vec![self.cdf(x[0])?])
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(1, z)?;
        Ok(vec![self.quantile(z[0])?])
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        check_dim(1, x)?;
        self.density.log_density_unchecked(x)
    }

    fn domain(&self) -> Support {
        self.density.support()
    }

    fn codomain(&self) -> Support {
        Support::UnitCube { dim: 1 }
    }

    fn describe(&self) -> Value {
        json!({ "type": "cdf", "density": self.density.describe() })
    }
}

/// Coordinatewise CDF map of a product density onto the unit cube.
#[derive(Debug, Clone)]
pub struct KnotheRosenblatt {
    density: Arc<dyn Density>,
    maps: Vec<CdfMap>,
}

/// Knothe-Rosenblatt rearrangement of a product density. Only factorized
/// densities are supported: each coordinate is mapped through its own
/// marginal CDF.
pub fn knothe_rosenblatt(p: Arc<dyn Density>) -> Result<KnotheRosenblatt> {
    let factors = if p.dim() == 1 { vec![p.clone()] } else { p.marginals().ok_or(Error::NotFactorized)? };
    let maps = factors.into_iter().map(cdf_bijection_1d).collect::<Result<Vec<_>>>()?;
    Ok(KnotheRosenblatt { density: p, maps })
}

impl Bijection for KnotheRosenblatt {
    fn dim(&self) -> usize {
        self.maps.len()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        self.maps.iter().zip(x).map(|(m, v)| m.cdf(*v)).collect()
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z)?;
        self.maps.iter().zip(z).map(|(m, v)| m.quantile(*v)).collect()
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        let mut total = 0.0;
        for (m, v) in self.maps.iter().zip(x) {
            total += m.density.log_density_unchecked(std::slice::from_ref(v))?;
        }
        Ok(total)
    }

    fn domain(&self) -> Support {
        self.density.support()
    }

    fn codomain(&self) -> Support {
        Support::UnitCube { dim: self.dim() }
    }

    fn describe(&self) -> Value {
        json!({ "type": "knothe-rosenblatt", "density": self.density.describe() })
    }
}

/// Hyperspherical coordinates `(r, φ₁, …, φ_{D−1})` to cartesian ℝ^D.
///
/// φ₁…φ_{D−2} range over (0, π) and φ_{D−1} over [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperspherical {
    dim: usize,
}

pub fn hyperspherical(dim: usize) -> Result<Hyperspherical> {
    if dim < 2 {
        return Err(Error::DimensionTooLow { required: 2, got: dim });
    }
    Ok(Hyperspherical { dim })
}

impl Hyperspherical {
    fn check_regular(&self, coords: &[f64]) -> Result<()> {
        check_dim(self.dim, coords)?;
        if !(coords[0] > 0.0) {
            return Err(Error::SingularCoordinates { index: 0, value: coords[0] });
        }
        for (index, &phi) in coords.iter().enumerate().take(self.dim - 1).skip(1) {
            if phi.sin() <= 0.0 || phi <= 0.0 || phi >= PI {
                return Err(Error::SingularCoordinates { index, value: phi });
            }
        }
        Ok(())
    }
}

impl Bijection for Hyperspherical {
    fn dim(&self) -> usize {
        self.dim
    }

    fn forward(&self, coords: &[f64]) -> Result<Vec<f64>> {
        self.check_regular(coords)?;
        let d = self.dim;
        let mut x = Vec::with_capacity(d);
        let mut sin_prod = coords[0];
        for &phi in &coords[1..d] {
            x.push(sin_prod * phi.cos());
            sin_prod *= phi.sin();
        }
        x.push(sin_prod);
        Ok(x)
    }

    fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x)?;
        let d = self.dim;
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::PointOutsideCodomain);
        }
        let mut coords = Vec::with_capacity(d);
        coords.push(r);
        let mut tail_sq: f64 = x.iter().map(|v| v * v).sum();
        for &xi in &x[..d - 2] {
            tail_sq -= xi * xi;
            coords.push(tail_sq.max(0.0).sqrt().atan2(xi));
        }
        let mut last = x[d - 1].atan2(x[d - 2]);
        if last < 0.0 {
            last += 2.0 * PI;
        }
        coords.push(last);
        Ok(coords)
    }

    fn log_abs_det_jacobian(&self, coords: &[f64]) -> Result<f64> {
        self.check_regular(coords)?;
        let d = self.dim;
        let mut total = (d - 1) as f64 * coords[0].ln();
        for (k, &phi) in coords.iter().enumerate().take(d - 1).skip(1) {
            total += (d - k - 1) as f64 * phi.sin().ln();
        }
        Ok(total)
    }

    fn domain(&self) -> Support {
        let mut lo = vec![0.0; self.dim];
        let mut hi = vec![PI; self.dim];
        hi[0] = f64::INFINITY;
        hi[self.dim - 1] = 2.0 * PI;
        lo[0] = 0.0;
        Support::Box { lo, hi }
    }

    fn codomain(&self) -> Support {
        Support::AllSpace { dim: self.dim }
    }

    fn describe(&self) -> Value {
        json!({ "type": "hyperspherical", "dim": self.dim })
    }
}

/// Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, x: &[f64]) -> bool {
        let d: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum();
        d.sqrt() <= self.radius
    }
}

type ScoreFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Target density level imposed on every point, bounded below by a
/// strictly positive constant.
#[derive(Clone)]
pub struct ScoreFunction {
    eval: Arc<ScoreFn>,
    lower_bound: f64,
    upper_bound: Option<f64>,
    region: Option<Ball>,
    description: Value,
}

impl fmt::Debug for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScoreFunction")
            .field("lower_bound", &self.lower_bound)
            .field("upper_bound", &self.upper_bound)
            .field("description", &self.description)
            .finish()
    }
}

impl ScoreFunction {
    pub fn new<F>(eval: F, lower_bound: f64, description: Value) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(lower_bound > 0.0) {
            return Err(Error::DomainError("score lower bound must be strictly positive".into()));
        }
        Ok(Self { eval: Arc::new(eval), lower_bound, upper_bound: None, region: None, description })
    }

    pub fn constant(level: f64) -> Result<Self> {
        let mut s = Self::new(move |_| level, level, json!({ "kind": "constant", "level": level }))?;
        s.upper_bound = Some(level);
        Ok(s)
    }

    /// `s = p`, with a declared floor that the probes must respect.
    pub fn from_density(p: Arc<dyn Density>, lower_bound: f64) -> Result<Self> {
        let description = json!({ "kind": "density", "density": p.describe() });
        Self::new(move |x| p.density_unchecked(x).unwrap_or(f64::NAN), lower_bound, description)
    }

    /// `inside` on a ball, `outside` beyond a shell of relative width
    /// `ramp_width`, joined by a cosine ramp so the score stays continuous.
    pub fn ball_ramp(ball: Ball, inside: f64, outside: f64, ramp_width: f64) -> Result<Self> {
        if !(ball.radius > 0.0 && ramp_width > 0.0) {
            return Err(Error::DomainError("ball radius and ramp width must be positive".into()));
        }
        let (center, radius) = (ball.center.clone(), ball.radius);
        let shell = radius * ramp_width;
        let description = json!({
            "kind": "ball-ramp",
            "center": center,
            "radius": radius,
            "inside": inside,
            "outside": outside,
            "ramp_width": ramp_width,
        });
        let mut s = Self::new(
            move |x| {
                let r = x.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                if r <= radius {
                    inside
                } else if r >= radius + shell {
                    outside
                } else {
                    let t = (r - radius) / shell;
                    inside + (outside - inside) * 0.5 * (1.0 - (PI * t).cos())
                }
            },
            inside.min(outside),
            description,
        )?;
        s.upper_bound = Some(inside.max(outside));
        s.region = Some(ball);
        Ok(s)
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn upper_bound(&self) -> Option<f64> {
        self.upper_bound
    }

    /// The region a ramp score singles out, if any.
    pub fn region(&self) -> Option<&Ball> {
        self.region.as_ref()
    }

    pub fn describe(&self) -> Value {
        self.description.clone()
    }

    /// Score at `x`; fails if the value drops below the declared bound.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let v = (self.eval)(x);
        if !(v >= self.lower_bound) {
            return Err(Error::ScoreBelowBound { value: v, lower_bound: self.lower_bound });
        }
        Ok(v)
    }
}

/// Map whose pushforward density equals a prescribed score.
///
/// The first D−1 coordinates pass through. The last becomes
/// `∫_{anchor}^{x_D} p(x_{<D}, t) / s(x_{<D}, t) dt`, where the anchor is
/// the lower edge of the support in that coordinate (0 for unbounded
/// supports).
#[derive(Debug, Clone)]
pub struct ArbitraryScore {
    density: Arc<dyn Density>,
    score: ScoreFunction,
    anchor: f64,
    last_bounds: (f64, f64),
    total: Option<f64>,
}

pub fn arbitrary_score_bijection(p: Arc<dyn Density>, s: ScoreFunction) -> Result<ArbitraryScore> {
    let support = p.support();
    let last = p.dim() - 1;
    let (lo, hi) = support.coordinate_bounds(last);
    let anchor = if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi.min(0.0)
    } else {
        0.0
    };
    let mut map = ArbitraryScore { density: p, score: s, anchor, last_bounds: (lo, hi), total: None };
    if hi.is_finite() {
        map.total = Some(map.last_coordinate(&[], hi, ScoreCheck::Skip)?);
    }
    Ok(map)
}

#[derive(Clone, Copy, PartialEq)]
enum ScoreCheck {
    Enforce,
    Skip,
}

impl ArbitraryScore {
    pub fn score(&self) -> &ScoreFunction {
        &self.score
    }

    /// Integral of p/s along the last coordinate from the anchor to `t`,
    /// with the other coordinates fixed to `prefix`.
    fn last_coordinate(&self, prefix: &[f64], t: f64, check: ScoreCheck) -> Result<f64> {
        if t == self.anchor {
            return Ok(0.0);
        }
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let mut point = prefix.to_vec();
        point.push(0.0);
        let point = RefCell::new(point);
        let integrand = |u: f64| {
            let mut pt = point.borrow_mut();
            *pt.last_mut().unwrap() = u;
            let p = match self.density.density_unchecked(&pt) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    return f64::NAN;
                }
            };
            let s = match check {
                ScoreCheck::Enforce => match self.score.value(&pt) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        return f64::NAN;
                    }
                },
                ScoreCheck::Skip => (self.score.eval)(&pt).max(self.score.lower_bound),
            };
            p / s
        };
        let (a, b, sign) = if t > self.anchor { (self.anchor, t, 1.0) } else { (t, self.anchor, -1.0) };
        let result = integrate_1d(integrand, Interval::new(a, b)?, MAP_QUADRATURE_TOL);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(sign * result?)
    }

    fn bracket_for(&self, prefix: &[f64], target: f64) -> Result<Interval> {
        let (lo, hi) = self.last_bounds;
        if let (true, true, Some(total)) = (lo.is_finite(), hi.is_finite(), self.total) {
            let slack = 1e-12 * total.abs().max(1.0);
            if target < -slack || target > total + slack {
                return Err(Error::PointOutsideCodomain);
            }
            return Interval::new(lo, hi);
        }
        let mut a = if lo.is_finite() { lo } else { self.anchor - 1.0 };
        let mut b = if hi.is_finite() { hi } else { self.anchor + 1.0 };
        for _ in 0..40 {
            let fa = self.last_coordinate(prefix, a, ScoreCheck::Skip)?;
            let fb = self.last_coordinate(prefix, b, ScoreCheck::Skip)?;
            if fa <= target && target <= fb {
                return Interval::new(a, b);
            }
            let w = b - a;
            if fa > target {
                if lo.is_finite() {
                    return Err(Error::PointOutsideCodomain);
                }
                a -= w;
            }
            if fb < target {
                if hi.is_finite() {
                    return Err(Error::PointOutsideCodomain);
                }
                b += w;
            }
        }
        Err(Error::PointOutsideCodomain)
    }
}

impl Bijection for ArbitraryScore {
    fn dim(&self) -> usize {
        self.density.dim()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        let (prefix, last) = x.split_at(self.dim() - 1);
        let mut z = prefix.to_vec();
        z.push(self.last_coordinate(prefix, last[0], ScoreCheck::Enforce)?);
        Ok(z)
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z)?;
        let (prefix, last) = z.split_at(self.dim() - 1);
        let target = last[0];
        let bracket = self.bracket_for(prefix, target)?;
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let g = |t: f64| match self.last_coordinate(prefix, t, ScoreCheck::Skip) {
            Ok(v) => v - target,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        };
        let root = find_root_monotone(g, bracket, ROOT_TOL);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let t = match root {
            Ok(t) => t,
            // Target sits within rounding of a bracket end.
            Err(Error::NoSignChange { lo, hi, g_lo, .. }) => {
                if g_lo > 0.0 {
                    lo
                } else {
                    hi
                }
            }
            Err(e) => return Err(e),
        };
        let mut x = prefix.to_vec();
        x.push(t);
        Ok(x)
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        let s = self.score.value(x)?;
        Ok(self.density.log_density_unchecked(x)? - s.ln())
    }

    fn domain(&self) -> Support {
        self.density.support()
    }

    fn codomain(&self) -> Support {
        match (self.density.support(), self.total) {
            (support, Some(total)) if support.is_bounded() => {
                let d = self.dim();
                let mut lo: Vec<f64> = (0..d).map(|i| support.coordinate_bounds(i).0).collect();
                let mut hi: Vec<f64> = (0..d).map(|i| support.coordinate_bounds(i).1).collect();
                lo[d - 1] = 0.0;
                hi[d - 1] = total;
                Support::Box { lo, hi }
            }
            _ => Support::AllSpace { dim: self.dim() },
        }
    }

    fn describe(&self) -> Value {
        json!({
            "type": "arbitrary-score",
            "density": self.density.describe(),
            "score": self.score.describe(),
            "anchor": self.anchor,
            "last_coordinate_total": self.total,
        })
    }
}

/// Parameters of a norm-dependent rotation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationParams {
    pub center: Vec<f64>,
    pub r0: f64,
    pub r_max: f64,
    pub plane_e1: Vec<f64>,
    pub plane_e2: Vec<f64>,
}

impl RotationParams {
    pub fn new(center: Vec<f64>, r0: f64, r_max: f64, plane_e1: Vec<f64>, plane_e2: Vec<f64>) -> Result<Self> {
        let d = center.len();
        if plane_e1.len() != d || plane_e2.len() != d {
            return Err(Error::DomainError("rotation plane vectors must match the center's dimension".into()));
        }
        check_unit(&plane_e1)?;
        check_unit(&plane_e2)?;
        if dot(&plane_e1, &plane_e2).abs() > 1e-12 {
            return Err(Error::DomainError("rotation plane vectors must be orthogonal".into()));
        }
        if !(r0 > 0.0 && r_max > r0 && r_max.is_finite()) {
            return Err(Error::DomainError("rotation radii must satisfy r_max > r0 > 0".into()));
        }
        Ok(Self { center, r0, r_max, plane_e1, plane_e2 })
    }
}

/// Rotation plane spanned by `u` and the Gram-Schmidt residual of the
/// standard basis vector least aligned with it.
pub fn rotation_plane(u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_unit(u)?;
    if u.len() < 2 {
        return Err(Error::DimensionTooLow { required: 2, got: u.len() });
    }
    let j = (0..u.len()).min_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs())).unwrap();
    let mut e2: Vec<f64> = u.iter().map(|v| -u[j] * v).collect();
    e2[j] += 1.0;
    Ok((u.to_vec(), normalized(&e2)?))
}

/// Rotation of one 2-plane around a center by an angle that decays
/// linearly with the distance to the center: π at `r0`, zero from `r_max`
/// on. Each sphere around the center is mapped onto itself, so volume is
/// preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct NormDependentRotation {
    params: RotationParams,
}

pub fn norm_dependent_rotation(params: RotationParams, dim: usize) -> Result<NormDependentRotation> {
    if dim < 2 {
        return Err(Error::DimensionTooLow { required: 2, got: dim });
    }
    if params.center.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: params.center.len() });
    }
    Ok(NormDependentRotation { params })
}

impl NormDependentRotation {
    pub fn params(&self) -> &RotationParams {
        &self.params
    }

    pub fn angle(&self, r: f64) -> f64 {
        let p = &self.params;
        PI * (p.r_max - r).max(0.0) / (p.r_max - p.r0)
    }

    /// Whether `x` lies strictly inside the ball where the map acts.
    pub fn is_active(&self, x: &[f64]) -> bool {
        let r = norm(&self.offset(x));
        r < self.params.r_max
    }

    fn offset(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.params.center).map(|(a, c)| a - c).collect()
    }

    fn rotate(&self, x: &[f64], sign: f64) -> Result<Vec<f64>> {
        check_dim(self.params.center.len(), x)?;
        let v = self.offset(x);
        let r = norm(&v);
        if r >= self.params.r_max {
            return Ok(x.to_vec());
        }
        let (e1, e2) = (&self.params.plane_e1, &self.params.plane_e2);
        let (a, b) = (dot(&v, e1), dot(&v, e2));
        let (sin, cos) = (sign * self.angle(r)).sin_cos();
        let (da, db) = (a * cos - b * sin - a, a * sin + b * cos - b);
        Ok(x.iter().zip(e1.iter().zip(e2)).map(|(xi, (u1, u2))| xi + da * u1 + db * u2).collect())
    }
}

impl Bijection for NormDependentRotation {
    fn dim(&self) -> usize {
        self.params.center.len()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.rotate(x, 1.0)
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.rotate(z, -1.0)
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(0.0)
    }

    fn domain(&self) -> Support {
        Support::AllSpace { dim: self.dim() }
    }

    fn codomain(&self) -> Support {
        Support::AllSpace { dim: self.dim() }
    }

    fn describe(&self) -> Value {
        json!({ "type": "norm-dependent-rotation", "params": self.params })
    }
}

/// Linear map keeping the component along `u` and scaling the orthogonal
/// complement by `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalSqueeze {
    u: Vec<f64>,
    k: f64,
}

pub fn orthogonal_squeeze(u: Vec<f64>, k: f64) -> Result<OrthogonalSqueeze> {
    check_unit(&u)?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::DomainError("squeeze factor must be positive".into()));
    }
    Ok(OrthogonalSqueeze { u, k })
}

impl OrthogonalSqueeze {
    fn apply(&self, z: &[f64], k: f64) -> Result<Vec<f64>> {
        check_dim(self.u.len(), z)?;
        let along = dot(z, &self.u);
        Ok(z.iter().zip(&self.u).map(|(v, u)| along * u + k * (v - along * u)).collect())
    }

    pub fn factor(&self) -> f64 {
        self.k
    }
}

impl Bijection for OrthogonalSqueeze {
    fn dim(&self) -> usize {
        self.u.len()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.apply(x, self.k)
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.apply(z, 1.0 / self.k)
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok((self.dim() - 1) as f64 * self.k.ln())
    }

    fn domain(&self) -> Support {
        Support::AllSpace { dim: self.dim() }
    }

    fn codomain(&self) -> Support {
        Support::AllSpace { dim: self.dim() }
    }

    fn describe(&self) -> Value {
        json!({ "type": "orthogonal-squeeze", "direction": self.u, "factor": self.k })
    }
}

/// Householder reflection sending a unit vector `u` to e₁.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignRotation {
    u: Vec<f64>,
    /// `u − e₁`, or `None` when `u` already is e₁.
    normal: Option<Vec<f64>>,
}

pub fn align_rotation(u: Vec<f64>) -> Result<AlignRotation> {
    check_unit(&u)?;
    let mut v = u.clone();
    v[0] -= 1.0;
    let normal = (norm(&v) > 1e-15).then_some(v);
    Ok(AlignRotation { u, normal })
}

impl AlignRotation {
    fn reflect(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.u.len(), x)?;
        Ok(match &self.normal {
            None => x.to_vec(),
            Some(v) => {
                let scale = 2.0 * dot(v, x) / dot(v, v);
                x.iter().zip(v).map(|(a, b)| a - scale * b).collect()
            }
        })
    }
}

impl Bijection for AlignRotation {
    fn dim(&self) -> usize {
        self.u.len()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.reflect(x)
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.reflect(z)
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(0.0)
    }

    fn domain(&self) -> Support {
        Support::AllSpace { dim: self.dim() }
    }

    fn codomain(&self) -> Support {
        Support::AllSpace { dim: self.dim() }
    }

    fn describe(&self) -> Value {
        json!({ "type": "align-rotation", "direction": self.u })
    }
}

fn central_jacobian(f: &dyn Bijection, x: &[f64], h: f64) -> Result<nalgebra::DMatrix<f64>> {
    let d = f.dim();
    let mut jac = nalgebra::DMatrix::<f64>::zeros(d, d);
    let mut probe = x.to_vec();
    for j in 0..d {
        let step = h * x[j].abs().max(1.0);
        probe[j] = x[j] + step;
        let plus = f.forward(&probe)?;
        probe[j] = x[j] - step;
        let minus = f.forward(&probe)?;
        probe[j] = x[j];
        for i in 0..d {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// log |det J| of `f` at `x` from central differences with column step
/// `h·max(1, |xⱼ|)`, Richardson-extrapolated from steps `h` and `h/2`.
pub fn finite_difference_log_det(f: &dyn Bijection, x: &[f64], h: f64) -> Result<f64> {
    check_dim(f.dim(), x)?;
    let coarse = central_jacobian(f, x, h)?;
    let fine = central_jacobian(f, x, 0.5 * h)?;
    let jac = (fine * 4.0 - coarse) / 3.0;
    Ok(jac.determinant().abs().ln())
}
