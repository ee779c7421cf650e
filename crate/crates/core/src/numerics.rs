//! Scalar numerics shared by every other module: adaptive quadrature,
//! bracketed root finding, the standard normal CDF and quantile, a seeded
//! random stream and Monte Carlo mean estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

/// ln(2π).
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Maximum recursion depth of [`integrate_1d`].
pub const MAX_QUADRATURE_DEPTH: usize = 40;
/// Panels are always split this many times before the error test applies,
/// so narrow features are not missed by the first coarse Simpson estimate.
const MIN_QUADRATURE_DEPTH: usize = 3;

/// Width tolerance used by the root finder when callers have no better value.
pub const ROOT_TOL: f64 = 1e-12;
/// Iteration budget of [`find_root_monotone`].
pub const MAX_ROOT_ITERATIONS: usize = 200;

/// A finite, non-empty interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::DomainError(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Seeded random stream.
///
/// Backed by ChaCha12, a counter-based generator, so a seed and a call
/// sequence reproduce the same draws on every platform. The stream
/// position is the ChaCha word counter.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    rng: ChaCha12Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha12Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// Adaptive Simpson quadrature of `f` over `domain`.
///
/// The absolute error budget is halved at every split. Fails if `f`
/// returns a non-finite value or if the depth limit is reached before
/// the local error estimate drops below its budget.
pub fn integrate_1d<F>(f: F, domain: Interval, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(abs_tol > 0.0) {
        return Err(Error::DomainError(format!("quadrature tolerance must be positive, got {abs_tol}")));
    }
    let eval = |x: f64| -> Result<f64> {
        let value = f(x);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteIntegrand { x, value })
        }
    };
    let (a, b) = (domain.lo, domain.hi);
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (eval(a)?, eval(m)?, eval(b)?);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&eval, [a, m, b], [fa, fm, fb], whole, abs_tol, 0)
}

fn simpson_step<F>(
    eval: &F,
    [a, m, b]: [f64; 3],
    [fa, fm, fb]: [f64; 3],
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (eval(lm)?, eval(rm)?);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth >= MIN_QUADRATURE_DEPTH && delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_QUADRATURE_DEPTH {
        return Err(Error::MaxDepthExceeded { lo: a, hi: b });
    }
    let l = simpson_step(eval, [a, lm, m], [fa, flm, fm], left, 0.5 * tol, depth + 1)?;
    let r = simpson_step(eval, [m, rm, b], [fm, frm, fb], right, 0.5 * tol, depth + 1)?;
    Ok(l + r)
}

/// Root of a monotone function on a bracket with a sign change.
///
/// Alternates false-position and bisection steps so the bracket at least
/// halves every two iterations. Stops once the bracket is narrower than
/// `tol`, when `g` vanishes exactly, or when the bracket can no longer be
/// split in floating point.
pub fn find_root_monotone<G>(g: G, bracket: Interval, tol: f64) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let (mut g_lo, mut g_hi) = (g(lo), g(hi));
    if g_lo.is_nan() || g_hi.is_nan() {
        return Err(Error::DomainError("root function returned NaN".into()));
    }
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::NoSignChange { lo, hi, g_lo, g_hi });
    }
    for iteration in 0..MAX_ROOT_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo < tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let mut x = mid;
        if iteration % 2 == 1 && g_lo.is_finite() && g_hi.is_finite() {
            let secant = hi - g_hi * (hi - lo) / (g_hi - g_lo);
            if secant > lo && secant < hi {
                x = secant;
            }
        }
        let gx = g(x);
        if gx == 0.0 {
            return Ok(x);
        }
        if gx.is_nan() {
            return Err(Error::DomainError(format!("root function is NaN at {x}")));
        }
        if gx.signum() == g_lo.signum() {
            lo = x;
            g_lo = gx;
        } else {
            hi = x;
            g_hi = gx;
        }
    }
    Err(Error::MaxIterations(MAX_ROOT_ITERATIONS))
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - 0.5 * LN_2PI).exp()
}

/// Standard normal CDF, Φ(x) = erfc(−x/√2)/2.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of [`std_normal_cdf`].
///
/// Rational initial guess (Acklam's approximation, relative error about
/// 1e-9) followed by one Newton step. The upper half is computed by
/// symmetry from `1 − p`, which is exact for `p ≥ 0.5`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(format!("quantile argument must lie in (0, 1), got {p}")));
    }
    if p > 0.5 {
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile(p: f64) -> f64 {
    let x0 = acklam(p);
    let err = std_normal_cdf(x0) - p;
    let density = std_normal_pdf(x0);
    if density > 0.0 {
        x0 - err / density
    } else {
        x0
    }
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0 }
    }
}

/// Sample mean and standard error of `values`; needs at least two values.
pub fn mean_estimate(values: &[f64]) -> Result<Estimate> {
    let n = values.len();
    if n < 2 {
        return Err(Error::DomainError("a Monte Carlo estimate needs at least two draws".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(Estimate { value: mean, std_error: (var / n as f64).sqrt() })
}

/// Linear-interpolation empirical quantile of already sorted values.
pub fn sorted_quantile(sorted: &[f64], level: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}
