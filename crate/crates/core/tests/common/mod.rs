//! Fixtures shared by the integration suites: one instance of every
//! bijection type, a pair of densities on its domain, and probe points.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use reparam::bijections::{
    align_rotation, arbitrary_score_bijection, cdf_bijection_1d, compose, hyperspherical, invert, knothe_rosenblatt,
    norm_dependent_rotation, normalized, orthogonal_squeeze, rotation_plane, Affine, Bijection, RotationParams,
    ScoreFunction,
};
use reparam::constructions::{build_canonical_swap, gaussian_ball_score, SwapInputs};
use reparam::densities::{Density, Gaussian, Mixture, Product, Uniform};
use reparam::RngState;

pub struct Case {
    pub name: &'static str,
    pub map: Arc<dyn Bijection>,
    pub fg: Arc<dyn Density>,
    pub bg: Arc<dyn Density>,
    pub points: Vec<Vec<f64>>,
    /// Difference step suited to the map's smallest feature.
    pub fd_step: f64,
}

pub const POINTS_PER_CASE: usize = 100;

fn arc<B: Bijection + 'static>(b: B) -> Arc<dyn Bijection> {
    Arc::new(b)
}

fn gauss(mean: &[f64], std: &[f64]) -> Arc<dyn Density> {
    Arc::new(Gaussian::new(mean.to_vec(), std.to_vec()).unwrap())
}

fn uniform(lo: &[f64], hi: &[f64]) -> Arc<dyn Density> {
    Arc::new(Uniform::new(lo.to_vec(), hi.to_vec()).unwrap())
}

fn mix(a: Arc<dyn Density>, b: Arc<dyn Density>) -> Arc<dyn Density> {
    Arc::new(Mixture::new(vec![0.5, 0.5], vec![a, b]).unwrap())
}

fn draws(p: &Arc<dyn Density>, n: usize, rng: &mut RngState) -> Vec<Vec<f64>> {
    p.sample(n, rng).unwrap()
}

/// Uniform draw from the ball of radius `radius` around `center`.
pub fn ball_point(center: &[f64], radius: f64, rng: &mut RngState) -> Vec<f64> {
    let d = center.len();
    let dir: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let dir = normalized(&dir).unwrap();
    let r = radius * rng.uniform().powf(1.0 / d as f64);
    center.iter().zip(dir).map(|(c, u)| c + r * u).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Keeps points whose distance to `center` is away from both the center
/// and the sphere of radius `r_max`, where the rotation is not smooth.
fn away_from_kinks(
    points: Vec<Vec<f64>>,
    latent: impl Fn(&[f64]) -> Vec<f64>,
    center: &[f64],
    r_max: f64,
) -> Vec<Vec<f64>> {
    points
        .into_iter()
        .filter(|x| {
            let r = distance(&latent(x), center);
            r > 1e-2 * r_max && (r - r_max).abs() > 1e-2 * r_max
        })
        .collect()
}

pub fn catalog(seed: u64) -> Vec<Case> {
    let mut rng = RngState::new(seed);
    let n = POINTS_PER_CASE;
    let mut cases = Vec::new();

    let fg = gauss(&[0.3, -0.2, 0.5], &[0.8, 1.1, 0.6]);
    cases.push(Case {
        name: "affine",
        map: arc(Affine::new(vec![2.0, -0.5, 1.5], vec![1.0, 0.0, -3.0]).unwrap()),
        bg: gauss(&[0.0; 3], &[1.5; 3]),
        points: draws(&fg, n, &mut rng),
        fg,
        fd_step: 1e-5,
    });

    let normal: Arc<dyn Density> = Arc::new(Gaussian::standard(1));
    let fg = gauss(&[0.2], &[0.9]);
    cases.push(Case {
        name: "cdf-gaussian",
        map: arc(cdf_bijection_1d(normal.clone()).unwrap()),
        bg: gauss(&[0.0], &[1.5]),
        points: draws(&fg, n, &mut rng),
        fg,
        fd_step: 1e-5,
    });

    let bimodal: Arc<dyn Density> = Arc::new(Mixture::bimodal());
    let fg = gauss(&[0.5], &[1.2]);
    cases.push(Case {
        name: "cdf-bimodal",
        map: arc(cdf_bijection_1d(bimodal.clone()).unwrap()),
        bg: gauss(&[0.0], &[2.5]),
        points: draws(&fg, n, &mut rng),
        fg,
        fd_step: 1e-5,
    });

    let product: Arc<dyn Density> =
        Arc::new(Product::new(vec![gauss(&[0.0], &[1.0]), uniform(&[-1.0], &[2.0])]).unwrap());
    let kr = arc(knothe_rosenblatt(product.clone()).unwrap());
    let fg: Arc<dyn Density> = Arc::new(Product::new(vec![gauss(&[0.3], &[0.7]), uniform(&[-0.5], &[1.5])]).unwrap());
    let bg: Arc<dyn Density> = Arc::new(
        Product::new(vec![gauss(&[0.0], &[1.2]), mix(uniform(&[-1.0], &[2.0]), uniform(&[0.0], &[1.0]))]).unwrap(),
    );
    cases.push(Case {
        name: "knothe-rosenblatt",
        map: kr.clone(),
        points: draws(&fg, n, &mut rng),
        fg,
        bg,
        fd_step: 1e-5,
    });

    let fg = uniform(&[0.15, 0.15], &[0.85, 0.85]);
    cases.push(Case {
        name: "inverted-knothe-rosenblatt",
        map: arc(invert(kr)),
        bg: mix(uniform(&[0.0, 0.0], &[1.0, 1.0]), uniform(&[0.1, 0.1], &[0.6, 0.9])),
        points: draws(&fg, n, &mut rng),
        fg,
        fd_step: 1e-5,
    });

    let fg = uniform(&[0.5, 0.3, 0.2], &[2.0, 2.8, 6.0]);
    cases.push(Case {
        name: "hyperspherical",
        map: arc(hyperspherical(3).unwrap()),
        bg: mix(uniform(&[0.5, 0.3, 0.2], &[2.0, 2.8, 6.0]), uniform(&[0.2, 0.1, 0.1], &[3.0, 3.0, 6.2])),
        points: draws(&fg, n, &mut rng),
        fg,
        fd_step: 1e-5,
    });

    let ramp = gaussian_ball_score(1, 0.025, 0.1, 1.0).unwrap();
    let fg = gauss(&[0.1], &[0.8]);
    cases.push(Case {
        name: "arbitrary-score-ramp-1d",
        map: arc(arbitrary_score_bijection(normal.clone(), ramp).unwrap()),
        bg: gauss(&[0.0], &[1.3]),
        points: draws(&fg, n, &mut rng),
        fg,
        fd_step: 1e-5,
    });

    let ramp2 = gaussian_ball_score(2, 0.025, 0.1, 1.0).unwrap();
    let fg = gauss(&[0.1, -0.1], &[0.8, 0.9]);
    cases.push(Case {
        name: "arbitrary-score-ramp-2d",
        map: arc(arbitrary_score_bijection(Arc::new(Gaussian::standard(2)), ramp2).unwrap()),
        bg: gauss(&[0.0, 0.0], &[1.3, 1.3]),
        points: draws(&fg, n, &mut rng),
        fg,
        fd_step: 1e-5,
    });

    let fg = uniform(&[0.2], &[0.7]);
    cases.push(Case {
        name: "arbitrary-score-constant",
        map: arc(
            arbitrary_score_bijection(Arc::new(Uniform::unit_cube(1)), ScoreFunction::constant(0.5).unwrap()).unwrap()
        ),
        bg: mix(uniform(&[0.0], &[1.0]), uniform(&[0.1], &[0.4])),
        points: draws(&fg, n, &mut rng),
        fg,
        fd_step: 1e-5,
    });

    let center = vec![0.1, -0.2, 0.3];
    let (e1, e2) = rotation_plane(&normalized(&[1.0, 2.0, -1.0]).unwrap()).unwrap();
    let params = RotationParams::new(center.clone(), 0.3, 0.5, e1, e2).unwrap();
    let rotation = arc(norm_dependent_rotation(params, 3).unwrap());
    let ball: Vec<Vec<f64>> = (0..n).map(|_| ball_point(&center, 0.6, &mut rng)).collect();
    cases.push(Case {
        name: "norm-dependent-rotation",
        map: rotation.clone(),
        fg: gauss(&center, &[0.3; 3]),
        bg: gauss(&[0.0; 3], &[1.0; 3]),
        points: away_from_kinks(ball, |x| x.to_vec(), &center, 0.5),
        fd_step: 1e-5,
    });

    let fg = gauss(&[0.0; 3], &[1.0; 3]);
    cases.push(Case {
        name: "orthogonal-squeeze",
        map: arc(orthogonal_squeeze(normalized(&[1.0, -1.0, 2.0]).unwrap(), 3.5).unwrap()),
        bg: gauss(&[0.5; 3], &[2.0; 3]),
        points: draws(&fg, n, &mut rng),
        fg,
        fd_step: 1e-5,
    });

    let fg = gauss(&[0.2; 4], &[1.0; 4]);
    cases.push(Case {
        name: "align-rotation",
        map: arc(align_rotation(normalized(&[0.3, 0.4, -0.5, 0.2]).unwrap()).unwrap()),
        bg: gauss(&[0.0; 4], &[1.7; 4]),
        points: draws(&fg, n, &mut rng),
        fg,
        fd_step: 1e-5,
    });

    let fg = gauss(&center, &[0.3; 3]);
    let composed = compose(arc(Affine::uniform(3, 0.5, 0.05).unwrap()), rotation).unwrap();
    let pre: Vec<Vec<f64>> =
        (0..n).map(|_| ball_point(&center, 0.6, &mut rng).iter().map(|v| (v - 0.05) / 0.5).collect()).collect();
    cases.push(Case {
        name: "composed",
        map: arc(composed),
        bg: gauss(&[0.0; 3], &[1.0; 3]),
        points: away_from_kinks(pre, |x| x.iter().map(|v| 0.5 * v + 0.05).collect(), &center, 0.5),
        fg,
        fd_step: 1e-5,
    });

    let p: Arc<dyn Density> = Arc::new(Gaussian::standard(2));
    let swap =
        build_canonical_swap(&SwapInputs { density: p.clone(), x_in: vec![0.0, 0.0], x_out: vec![2.0, 2.0] }).unwrap();
    let c = swap.rotation.params().center.clone();
    let r_max = swap.rotation.params().r_max;
    let mut pts = draws(&p, n / 2, &mut rng);
    for _ in 0..n / 2 {
        pts.push(swap.to_latent.inverse(&ball_point(&c, r_max, &mut rng)).unwrap());
    }
    let latent = swap.to_latent.clone();
    cases.push(Case {
        name: "canonical-swap",
        map: arc(swap.map.clone()),
        fg: p,
        bg: gauss(&[0.5, 0.5], &[1.5, 1.5]),
        points: away_from_kinks(pts, |x| latent.forward(x).unwrap(), &c, r_max),
        fd_step: 1e-6,
    });

    cases
}

/// Central-difference Jacobian refined by one Richardson step.
pub fn fd_jacobian(f: &dyn Bijection, x: &[f64], h: f64) -> DMatrix<f64> {
    let central = |h: f64| {
        let d = x.len();
        let mut jac = DMatrix::zeros(d, d);
        for j in 0..d {
            let step = h * x[j].abs().max(1.0);
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[j] += step;
            minus[j] -= step;
            let fp = f.forward(&plus).unwrap();
            let fm = f.forward(&minus).unwrap();
            for i in 0..d {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        jac
    };
    (central(0.5 * h) * 4.0 - central(h)) / 3.0
}

pub fn fd_abs_det(f: &dyn Bijection, x: &[f64], h: f64) -> f64 {
    fd_jacobian(f, x, h).determinant().abs()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
