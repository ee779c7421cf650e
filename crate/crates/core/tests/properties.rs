use std::sync::Arc;

use proptest::prelude::*;
use reparam::bijections::{
    align_rotation, cdf_bijection_1d, norm_dependent_rotation, normalized, rotation_plane, Affine, Bijection,
    RotationParams,
};
use reparam::densities::{Density, Gaussian, Mixture};
use reparam::detectors::TypicalityTest;
use reparam::numerics::{std_normal_cdf, std_normal_quantile};

fn direction(raw: &[f64]) -> Option<Vec<f64>> {
    let n: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    (n > 1e-3).then(|| normalized(raw).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn typicality_statistic_ignores_batch_order(
        logs in prop::collection::vec(-50.0f64..5.0, 1..40),
        seed in any::<u64>(),
    ) {
        let p: Arc<dyn Density> = Arc::new(Gaussian::standard(1));
        let test = TypicalityTest::with_entropy(p, 1.4189385332046727, 1.0).unwrap();
        let mut shuffled = logs.clone();
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let a = test.statistic_from_log_densities(&logs).unwrap();
        let b = test.statistic_from_log_densities(&shuffled).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn affine_round_trip(
        scale in prop::collection::vec(prop_oneof![0.05f64..20.0, -20.0f64..-0.05], 3),
        shift in prop::collection::vec(-100.0f64..100.0, 3),
        x in prop::collection::vec(-1e3f64..1e3, 3),
    ) {
        let f = Affine::new(scale.clone(), shift).unwrap();
        let back = f.inverse(&f.forward(&x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0) * 20.0);
        }
        let expected: f64 = scale.iter().map(|s| s.abs().ln()).sum();
        prop_assert!((f.log_abs_det_jacobian(&x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn rotation_round_trip_and_radius(
        raw in prop::collection::vec(-1.0f64..1.0, 3),
        center in prop::collection::vec(-2.0f64..2.0, 3),
        offset in prop::collection::vec(-1.0f64..1.0, 3),
        r0 in 0.05f64..0.5,
        width in 0.01f64..0.5,
    ) {
        let Some(u) = direction(&raw) else { return Ok(()); };
        let (e1, e2) = rotation_plane(&u).unwrap();
        let params = RotationParams::new(center.clone(), r0, r0 + width, e1, e2).unwrap();
        let f = norm_dependent_rotation(params, 3).unwrap();
        let x: Vec<f64> = center.iter().zip(&offset).map(|(c, o)| c + o).collect();
        let y = f.forward(&x).unwrap();
        let back = f.inverse(&y).unwrap();
        let radius = |v: &[f64]| v.iter().zip(&center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
        prop_assert!((radius(&y) - radius(&x)).abs() < 1e-12);
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn align_rotation_sends_direction_to_first_axis(raw in prop::collection::vec(-1.0f64..1.0, 4)) {
        let Some(u) = direction(&raw) else { return Ok(()); };
        let f = align_rotation(u.clone()).unwrap();
        let e = f.forward(&u).unwrap();
        prop_assert!((e[0] - 1.0).abs() < 1e-12);
        for v in &e[1..] {
            prop_assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn normal_cdf_and_quantile_are_inverse(p in 1e-12f64..(1.0 - 1e-12)) {
        let x = std_normal_quantile(p).unwrap();
        let q = std_normal_cdf(x);
        prop_assert!(((q - p) / p.min(1.0 - p)).abs() < 1e-9, "p {} -> x {} -> {}", p, x, q);
    }

    #[test]
    fn bimodal_cdf_map_is_monotone_and_invertible(a in -6.0f64..6.0, b in -6.0f64..6.0) {
        let f = cdf_bijection_1d(Arc::new(Mixture::bimodal())).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (zl, zh) = (f.forward(&[lo]).unwrap()[0], f.forward(&[hi]).unwrap()[0]);
        prop_assert!(zl <= zh);
        prop_assert!((f.inverse(&[zl]).unwrap()[0] - lo).abs() < 1e-8);
    }
}
