use std::sync::Arc;

use plgd_core::descent::{build_ledger, contraction, run, Outcome, RunOptions, StepSize};
use plgd_core::integrand::{Dataset, IntegralFunctional, Integrand, LeastSquares, Sample, SoftmaxCe};
use plgd_core::model::{ntk_gram, InducedMap, Model, RandomFeatures, ShallowNet};
use plgd_core::objective::{
    check_lg_corollaries, check_pl, fd_check_gradient, sampled_gradient_bound, Objective, Quadratic,
};
use plgd_core::rng;
use plgd_core::smoothmap::{
    conditioning_at, estimate_certificate, estimate_lj, AffineMap, Ball, Constant, MapCertificate, SmoothMap,
};
use plgd_core::space::{op_norm, DenseOp, WeightedSpace};
use proptest::prelude::*;

fn gaussian_data(points: usize, dim: usize, out: usize, seed: u64) -> Arc<Dataset> {
    let mut r = rng::seeded(seed);
    let samples = (0..points)
        .map(|_| Sample::with_target(rng::gaussian_vec(&mut r, dim), rng::gaussian_vec(&mut r, out)))
        .collect();
    Arc::new(Dataset::uniform(samples).unwrap())
}

fn identity_cert() -> MapCertificate {
    MapCertificate::new(
        Constant::analytic(1.0),
        Constant::analytic(0.0),
        Some(Constant::analytic(1.0)),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_shift_invariant(z in prop::collection::vec(-5.0f64..5.0, 2..6), c in -100.0f64..100.0, pick in 0usize..6) {
        let k = z.len();
        let ce = SoftmaxCe::new(k).unwrap();
        let s = Sample::with_target(vec![0.0], vec![(pick % k + 1) as f64]);
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let (a, b) = (ce.value(&s, &z).unwrap(), ce.value(&s, &shifted).unwrap());
        prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        let (ga, gb) = (ce.gradient(&s, &z).unwrap(), ce.gradient(&s, &shifted).unwrap());
        for (x, y) in ga.iter().zip(&gb) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn linear_map_has_zero_lj(rows in 1usize..4, cols in 1usize..4, seed in 0u64..1000) {
        let mut r = rng::seeded(seed);
        let op = DenseOp::from_rows(rows, cols, &rng::gaussian_vec(&mut r, rows * cols)).unwrap();
        let map = AffineMap::new(op, rng::gaussian_vec(&mut r, rows)).unwrap();
        let ball = Ball::new(vec![0.0; cols], 3.0).unwrap();
        prop_assert!(estimate_lj(&map, &ball, 50, seed).unwrap().raw() <= 1e-12);
    }

    #[test]
    fn sampled_certificate_is_consistent(rows in 1usize..4, extra in 0usize..3, seed in 0u64..1000) {
        // Wide maps have a positive outer Gram, and λ_F never exceeds K_F².
        let cols = rows + extra;
        let mut r = rng::seeded(seed);
        let op = DenseOp::from_rows(rows, cols, &rng::gaussian_vec(&mut r, rows * cols)).unwrap();
        let map = AffineMap::linear(op);
        let ball = Ball::new(vec![0.0; cols], 1.0).unwrap();
        let cert = estimate_certificate(&map, &ball, 40, seed).unwrap();
        if let Some(uc) = cert.uc {
            prop_assert!(uc.raw() <= cert.bj.raw() * cert.bj.raw() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn ntk_matches_outer_gram(points in 1usize..4, width in 2usize..6, seed in 0u64..500) {
        let data = gaussian_data(points, 2, 1, seed);
        let net = ShallowNet::new(2, width, 1).unwrap();
        let theta = net.init(seed);
        let map = InducedMap::new(Arc::new(net), data).unwrap();
        let g = ntk_gram(&map, &theta).unwrap();
        let (lo, hi) = conditioning_at(&map, &theta).unwrap();
        prop_assert!(g.asymmetry <= 1e-10);
        prop_assert!((g.lambda_min - lo).abs() <= 1e-9 * hi.max(1.0));
        prop_assert!((g.lambda_max - hi).abs() <= 1e-9 * hi.max(1.0));
    }

    #[test]
    fn jacobian_norm_below_sample_aggregate(points in 1usize..5, width in 2usize..6, seed in 0u64..500) {
        let data = gaussian_data(points, 3, 2, seed);
        let net = ShallowNet::new(3, width, 2).unwrap();
        let theta = net.init(seed);
        let map = InducedMap::new(Arc::new(net), data.clone()).unwrap();
        let norm = op_norm(&map.jacobian(&theta).unwrap(), 1e-12, 2000).value;
        let per = map.per_sample_norms(&theta).unwrap();
        let agg = data.weights().iter().zip(&per).map(|(w, k)| w * k * k).sum::<f64>().sqrt();
        prop_assert!(norm <= agg * (1.0 + 1e-9), "{norm} > {agg}");
    }

    #[test]
    fn quadratic_constants_hold(diag in prop::collection::vec(0.2f64..5.0, 1..5), seed in 0u64..1000) {
        let mut r = rng::seeded(seed);
        let b = rng::gaussian_vec(&mut r, diag.len());
        let obj = Quadratic::diagonal(&diag, b).unwrap();
        let ball = Ball::new(rng::gaussian_vec(&mut r, diag.len()), 2.0).unwrap();
        let cor = check_lg_corollaries(&obj, &ball, 60, seed).unwrap();
        let scale = obj.lg().unwrap().value * 16.0;
        prop_assert!(cor.taylor_slack <= 1e-10 * scale);
        prop_assert!(cor.descent_slack.unwrap() <= 1e-10 * scale);
        let pl = check_pl(&obj, &ball, 60, seed, None).unwrap();
        prop_assert!(pl.violations.is_empty(), "{:?} {:?}", pl.violations, obj.pl());
        // A gradient bounded on a ball grows at most L per unit radius.
        let l = obj.lg().unwrap().value;
        let g0 = {
            let g = obj.gradient(&ball.center).unwrap();
            g.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        prop_assert!(sampled_gradient_bound(&obj, &ball, 60, seed).unwrap() <= (g0 + l * ball.radius) * (1.0 + 1e-12));
    }

    #[test]
    fn descent_on_quadratics_meets_every_bound(
        diag in prop::collection::vec(0.5f64..4.0, 1..4),
        frac in 0.05f64..1.95,
        seed in 0u64..1000,
    ) {
        let n = diag.len();
        let mut r = rng::seeded(seed);
        let obj = Quadratic::diagonal(&diag, rng::gaussian_vec(&mut r, n)).unwrap();
        let map = AffineMap::identity(WeightedSpace::unit(n));
        let x0 = rng::gaussian_vec(&mut r, n);
        let l = diag.iter().copied().fold(0.0, f64::max);
        let ledger = build_ledger(&map, &obj, &x0, &identity_cert(), StepSize::Fixed(frac / l)).unwrap();
        prop_assert!(ledger.consistency_defect() <= 1e-15);
        let opts = RunOptions { max_iter: 5000, ..RunOptions::default() };
        let out = run(&map, &obj, &x0, &ledger, &opts).unwrap();
        for m in &out.verdicts.monitors {
            prop_assert!(m.outcome() == Outcome::Pass, "{} {:?}", m.name, m.worst_slack());
        }
        let walked: f64 = out.trace.step_norms.iter().sum();
        let dist = *out.trace.dist_from_init.last().unwrap();
        prop_assert!(dist <= walked * (1.0 + 1e-12) + 1e-15);
        prop_assert!(walked <= ledger.distance_bound().unwrap() * (1.0 + 1e-9) + 1e-15);
    }

    #[test]
    fn contraction_is_a_rate(l in 0.1f64..10.0, ratio in 0.01f64..1.0, frac in 0.01f64..1.99) {
        let lambda = l * ratio;
        let alpha = frac / l;
        let q = contraction(l, lambda, alpha);
        prop_assert!((0.0..1.0).contains(&q));
        prop_assert!(q >= (1.0 - lambda * alpha).powi(2) - 1e-12);
    }

    #[test]
    fn least_squares_gradient_matches_differences(
        sigma in prop::collection::vec(0.3f64..3.0, 1..3),
        points in 1usize..4,
        seed in 0u64..1000,
    ) {
        let out = sigma.len();
        let data = gaussian_data(points, 1, out, seed);
        let f = IntegralFunctional::new(Arc::new(LeastSquares::new(sigma).unwrap()), data).unwrap();
        let mut r = rng::seeded(seed ^ 0x5eed);
        let h = rng::gaussian_vec(&mut r, points * out);
        prop_assert!(fd_check_gradient(&f, &h, 1e-5).unwrap() <= 1e-6);
    }
}

#[test]
fn wide_random_features_are_uniformly_conditioned() {
    // m ≥ 4·d·l features on d Gaussian points in dimension d.
    let (d, l) = (4, 1);
    let width = 4 * d * l;
    let seeds = 40;
    let conditioned = (0..seeds)
        .filter(|&s| {
            let data = gaussian_data(d, d, l, 1000 + s);
            let rf = RandomFeatures::new(d, width, l, s).unwrap();
            let theta = rf.init(s);
            let map = InducedMap::new(Arc::new(rf), data).unwrap();
            ntk_gram(&map, &theta).unwrap().lambda_min > 1e-10
        })
        .count();
    assert!(conditioned * 100 >= 95 * seeds as usize, "{conditioned}/{seeds}");
}
