//! Scalar objectives `f: H → ℝ` with gradients taken in the weighted metric,
//! their LG / PL constants, and sampled checks of both conditions.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng;
use crate::smoothmap::{relative_error, Ball, Constant, INFLATE};
use crate::space::{self, WeightedSpace};

/// Points whose optimality gap is below this are skipped by the PL ratio.
pub const GAP_FLOOR: f64 = 1e-12;

pub trait Objective: Send + Sync {
    fn space(&self) -> &WeightedSpace;
    fn value(&self, h: &[f64]) -> Result<f64>;
    /// Riesz representative of the derivative in the space's inner product.
    fn gradient(&self, h: &[f64]) -> Result<Vec<f64>>;

    /// `f_* = inf f`, when known.
    fn infimum(&self) -> Option<f64> {
        None
    }

    /// `L_f`: Lipschitz constant of the gradient.
    fn lg(&self) -> Option<Constant> {
        None
    }

    /// `λ_f`: PL constant relative to [`Objective::infimum`].
    fn pl(&self) -> Option<Constant> {
        None
    }

    /// The minimizer when the optimum set is a single known point.
    fn unique_minimizer(&self) -> Option<Vec<f64>> {
        None
    }
}

/// `f(h) = ½ ‖h − y‖²`.
#[derive(Debug, Clone)]
pub struct SquaredDistance {
    space: WeightedSpace,
    target: Vec<f64>,
}

impl SquaredDistance {
    pub fn new(space: WeightedSpace, target: Vec<f64>) -> Result<Self> {
        space.check(&target)?;
        Ok(SquaredDistance { space, target })
    }
}

impl Objective for SquaredDistance {
    fn space(&self) -> &WeightedSpace {
        &self.space
    }

    fn value(&self, h: &[f64]) -> Result<f64> {
        let d = self.space.distance(h, &self.target)?;
        Ok(0.5 * d * d)
    }

    fn gradient(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.space.check(h)?;
        Ok(h.iter().zip(&self.target).map(|(a, b)| a - b).collect())
    }

    fn infimum(&self) -> Option<f64> {
        Some(0.0)
    }

    fn lg(&self) -> Option<Constant> {
        Some(Constant::analytic(1.0))
    }

    fn pl(&self) -> Option<Constant> {
        Some(Constant::analytic(1.0))
    }

    fn unique_minimizer(&self) -> Option<Vec<f64>> {
        Some(self.target.clone())
    }
}

/// `f(x) = ½ ⟨x, A x⟩ − ⟨b, x⟩` on Euclidean `ℝⁿ` with `A` symmetric
/// positive definite. `L_f = λ_max(A)`, `λ_f = λ_min(A)`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    space: WeightedSpace,
    a: DMatrix<f64>,
    b: Vec<f64>,
    lambda_min: f64,
    lambda_max: f64,
    minimizer: Vec<f64>,
    infimum: f64,
}

impl Quadratic {
    pub fn new(a: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        let space = WeightedSpace::unit(b.len());
        let sym = space::symmetric_form(&space, &a)?;
        let (lambda_min, lambda_max) = space::symmetric_extremes(sym.clone())?;
        if lambda_min <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "quadratic form is not positive definite (λ_min = {lambda_min})"
            )));
        }
        let x = sym
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidConfig("quadratic form is not positive definite".into()))?
            .solve(&DVector::from_column_slice(&b));
        let minimizer: Vec<f64> = x.iter().copied().collect();
        let infimum = -0.5 * minimizer.iter().zip(&b).map(|(x, b)| x * b).sum::<f64>();
        Ok(Quadratic {
            space,
            a: sym,
            b,
            lambda_min,
            lambda_max,
            minimizer,
            infimum,
        })
    }

    pub fn diagonal(diag: &[f64], b: Vec<f64>) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)), b)
    }
}

impl Objective for Quadratic {
    fn space(&self) -> &WeightedSpace {
        &self.space
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.space.check(x)?;
        let v = DVector::from_column_slice(x);
        Ok(0.5 * v.dot(&(&self.a * &v)) - v.iter().zip(&self.b).map(|(x, b)| x * b).sum::<f64>())
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.space.check(x)?;
        let g = &self.a * DVector::from_column_slice(x);
        Ok(g.iter().zip(&self.b).map(|(g, b)| g - b).collect())
    }

    fn infimum(&self) -> Option<f64> {
        Some(self.infimum)
    }

    fn lg(&self) -> Option<Constant> {
        Some(Constant::analytic(self.lambda_max))
    }

    fn pl(&self) -> Option<Constant> {
        Some(Constant::analytic(self.lambda_min))
    }

    fn unique_minimizer(&self) -> Option<Vec<f64>> {
        Some(self.minimizer.clone())
    }
}

/// Replaces any of `f_*`, `L_f`, `λ_f` of an inner objective.
pub struct WithConstants<O> {
    pub inner: O,
    pub infimum: Option<f64>,
    pub lg: Option<Constant>,
    pub pl: Option<Constant>,
}

impl<O: Objective> WithConstants<O> {
    pub fn new(inner: O) -> Self {
        WithConstants {
            inner,
            infimum: None,
            lg: None,
            pl: None,
        }
    }
}

impl<O: Objective> Objective for WithConstants<O> {
    fn space(&self) -> &WeightedSpace {
        self.inner.space()
    }
    fn value(&self, h: &[f64]) -> Result<f64> {
        self.inner.value(h)
    }
    fn gradient(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.inner.gradient(h)
    }
    fn infimum(&self) -> Option<f64> {
        self.infimum.or_else(|| self.inner.infimum())
    }
    fn lg(&self) -> Option<Constant> {
        self.lg.or_else(|| self.inner.lg())
    }
    fn pl(&self) -> Option<Constant> {
        self.pl.or_else(|| self.inner.pl())
    }
    fn unique_minimizer(&self) -> Option<Vec<f64>> {
        self.inner.unique_minimizer()
    }
}

impl<O: Objective + ?Sized> Objective for alloc::boxed::Box<O> {
    fn space(&self) -> &WeightedSpace {
        (**self).space()
    }
    fn value(&self, h: &[f64]) -> Result<f64> {
        (**self).value(h)
    }
    fn gradient(&self, h: &[f64]) -> Result<Vec<f64>> {
        (**self).gradient(h)
    }
    fn infimum(&self) -> Option<f64> {
        (**self).infimum()
    }
    fn lg(&self) -> Option<Constant> {
        (**self).lg()
    }
    fn pl(&self) -> Option<Constant> {
        (**self).pl()
    }
    fn unique_minimizer(&self) -> Option<Vec<f64>> {
        (**self).unique_minimizer()
    }
}

/// Finite-difference check of the gradient: the central-difference
/// derivative along each coordinate, divided by the coordinate weight, is
/// compared to the gradient in the space norm.
pub fn fd_check_gradient<O: Objective + ?Sized>(f: &O, h: &[f64], step: f64) -> Result<f64> {
    if !(1e-8..=1e-2).contains(&step) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step {step} outside [1e-8, 1e-2]"
        )));
    }
    let space = f.space();
    space.check(h)?;
    let grad = f.gradient(h)?;
    let mut fd = alloc::vec![0.0; h.len()];
    let mut p = h.to_vec();
    for k in 0..h.len() {
        p[k] = h[k] + step;
        let fp = f.value(&p)?;
        p[k] = h[k] - step;
        let fm = f.value(&p)?;
        p[k] = h[k];
        fd[k] = (fp - fm) / (2.0 * step * space.weights()[k]);
    }
    Ok(relative_error(space, &fd, &grad))
}

/// Sampled LG constant: `1.1 · max ‖∇f(x) − ∇f(y)‖ / ‖x − y‖`.
pub fn estimate_lg<O: Objective + ?Sized>(f: &O, ball: &Ball, n_pairs: usize, seed: u64) -> Result<Constant> {
    let space = f.space();
    space.check(&ball.center)?;
    let mut r = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    let mut counted = 0;
    let mut attempts = 0;
    while counted < n_pairs && attempts < 100 * n_pairs.max(1) {
        attempts += 1;
        let (x, y) = ball.sample_pair(space, &mut r);
        let d = space.distance(&x, &y)?;
        if d < 1e-12 {
            continue;
        }
        let gx = f.gradient(&x)?;
        let gy = f.gradient(&y)?;
        worst = worst.max(space.distance(&gx, &gy)? / d);
        counted += 1;
    }
    Ok(Constant::sampled(worst, INFLATE, counted))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlViolation {
    pub point: Vec<f64>,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlReport {
    /// `min ½‖∇f‖² / (f − f_*)` over valid samples; `None` when every sample
    /// was within [`GAP_FLOOR`] of optimal.
    pub lambda_hat: Option<f64>,
    pub valid_samples: usize,
    /// Samples whose ratio fell below the requested constant.
    pub violations: Vec<PlViolation>,
}

impl PlReport {
    /// True when the sampled constant is at least `threshold`.
    pub fn certifies(&self, threshold: f64) -> bool {
        self.lambda_hat.is_some_and(|l| l >= threshold)
    }
}

/// Samples the PL ratio on the center and `n` points of `ball`.
/// `requested` defaults to the objective's own `λ_f`.
pub fn check_pl<O: Objective + ?Sized>(
    f: &O,
    ball: &Ball,
    n: usize,
    seed: u64,
    requested: Option<f64>,
) -> Result<PlReport> {
    let f_star = f
        .infimum()
        .ok_or_else(|| Error::Unsupported("PL check needs the infimum f_*".into()))?;
    let requested = requested.or_else(|| f.pl().map(|c| c.value));
    let space = f.space();
    space.check(&ball.center)?;
    let mut r = rng::seeded(seed);
    let mut points = alloc::vec![ball.center.clone()];
    points.extend((0..n).map(|_| ball.sample(space, &mut r)));

    let mut lambda_hat: Option<f64> = None;
    let mut valid = 0;
    let mut violations = Vec::new();
    for x in points {
        let fx = f.value(&x)?;
        let gap = fx - f_star;
        if gap < GAP_FLOOR {
            continue;
        }
        let g = space.nrm(&f.gradient(&x)?);
        let ratio = 0.5 * g * g / gap;
        valid += 1;
        lambda_hat = Some(lambda_hat.map_or(ratio, |l| l.min(ratio)));
        if let Some(req) = requested {
            // The gap loses about ε·(|f(x)| + |f_*|) to cancellation.
            let rounding = 8.0 * f64::EPSILON * (fx.abs() + f_star.abs()) / gap;
            if ratio < req * (1.0 - 1e-12 - rounding) {
                violations.push(PlViolation { point: x, ratio });
            }
        }
    }
    Ok(PlReport {
        lambda_hat,
        valid_samples: valid,
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorollaryReport {
    /// `max |f(y) − f(x) − ⟨∇f(x), y−x⟩| − (L/2)‖y−x‖²` over sampled pairs.
    pub taylor_slack: f64,
    /// `max ½‖∇f(x)‖² − L (f(x) − f_*)` over sampled points; `None` without `f_*`.
    pub descent_slack: Option<f64>,
    pub samples: usize,
}

/// Samples both consequences of the LG condition. Non-positive slack means
/// the inequality held everywhere it was probed.
pub fn check_lg_corollaries<O: Objective + ?Sized>(f: &O, ball: &Ball, n: usize, seed: u64) -> Result<CorollaryReport> {
    let l = f
        .lg()
        .ok_or_else(|| Error::Unsupported("LG corollaries need L_f".into()))?
        .value;
    let f_star = f.infimum();
    let space = f.space();
    space.check(&ball.center)?;
    let mut r = rng::seeded(seed);
    let mut taylor = f64::NEG_INFINITY;
    let mut descent: Option<f64> = None;
    for _ in 0..n {
        let x = ball.sample(space, &mut r);
        let y = ball.sample(space, &mut r);
        let fx = f.value(&x)?;
        let gx = f.gradient(&x)?;
        let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let lhs = (f.value(&y)? - fx - space.ip(&gx, &d)).abs();
        let nd = space.nrm(&d);
        taylor = taylor.max(lhs - 0.5 * l * nd * nd);
        if let Some(fs) = f_star {
            let g = space.nrm(&gx);
            let s = 0.5 * g * g - l * (fx - fs);
            descent = Some(descent.map_or(s, |v| v.max(s)));
        }
    }
    Ok(CorollaryReport {
        taylor_slack: taylor,
        descent_slack: descent,
        samples: n,
    })
}

/// `sup ‖∇f‖` over the center and `n` samples of the ball.
pub fn sampled_gradient_bound<O: Objective + ?Sized>(f: &O, ball: &Ball, n: usize, seed: u64) -> Result<f64> {
    let space = f.space();
    let mut r = rng::seeded(seed);
    let mut worst = space.nrm(&f.gradient(&ball.center)?);
    for _ in 0..n {
        let x = ball.sample(space, &mut r);
        worst = worst.max(space.nrm(&f.gradient(&x)?));
    }
    Ok(worst)
}

#[cfg(test)]
pub(crate) mod testobjs {
    use super::*;

    /// Objective from closures on Euclidean space, for tests.
    pub struct FnObjective<V, G> {
        pub space: WeightedSpace,
        pub value: V,
        pub grad: G,
        pub infimum: Option<f64>,
        pub lg: Option<Constant>,
        pub pl: Option<Constant>,
    }

    impl<V, G> Objective for FnObjective<V, G>
    where
        V: Fn(&[f64]) -> f64 + Send + Sync,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync,
    {
        fn space(&self) -> &WeightedSpace {
            &self.space
        }
        fn value(&self, h: &[f64]) -> Result<f64> {
            Ok((self.value)(h))
        }
        fn gradient(&self, h: &[f64]) -> Result<Vec<f64>> {
            Ok((self.grad)(h))
        }
        fn infimum(&self) -> Option<f64> {
            self.infimum
        }
        fn lg(&self) -> Option<Constant> {
            self.lg
        }
        fn pl(&self) -> Option<Constant> {
            self.pl
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testobjs::FnObjective;
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    fn quartic() -> impl Objective {
        // f = ¼‖h‖⁴, ∇f = ‖h‖² h, Hessian norm 3‖h‖²
        FnObjective {
            space: WeightedSpace::unit(2),
            value: |h: &[f64]| 0.25 * (h[0] * h[0] + h[1] * h[1]).powi(2),
            grad: |h: &[f64]| {
                let s = h[0] * h[0] + h[1] * h[1];
                vec![s * h[0], s * h[1]]
            },
            infimum: Some(0.0),
            lg: None,
            pl: None,
        }
    }

    fn cosine() -> impl Objective {
        FnObjective {
            space: WeightedSpace::unit(2),
            value: |h: &[f64]| libm::cos(h[0]),
            grad: |h: &[f64]| vec![-libm::sin(h[0]), 0.0],
            infimum: Some(-1.0),
            lg: Some(Constant::analytic(1.0)),
            pl: None,
        }
    }

    #[test]
    fn lg_examples() {
        let f = SquaredDistance::new(WeightedSpace::unit(3), vec![1.0, -2.0, 0.5]).unwrap();
        let ball = Ball::new(vec![0.0; 3], 2.0).unwrap();
        assert_eq!(f.lg().unwrap().value, 1.0);
        assert!((estimate_lg(&f, &ball, 40, 1).unwrap().raw() - 1.0).abs() < 1e-12);

        let affine = FnObjective {
            space: WeightedSpace::unit(2),
            value: |h: &[f64]| 3.0 * h[0] - h[1] + 1.0,
            grad: |_: &[f64]| vec![3.0, -1.0],
            infimum: None,
            lg: None,
            pl: None,
        };
        let ball2 = Ball::new(vec![0.0; 2], 2.0).unwrap();
        assert_eq!(estimate_lg(&affine, &ball2, 40, 1).unwrap().value, 0.0);

        let q = estimate_lg(&quartic(), &Ball::new(vec![0.0, 0.0], 1.0).unwrap(), 5000, 7).unwrap();
        assert!(q.raw() <= 3.0 + 1e-12, "{}", q.raw());
        assert!(q.raw() >= 2.9, "{}", q.raw());
    }

    #[test]
    fn pl_examples() {
        let f = SquaredDistance::new(WeightedSpace::weighted(vec![0.5, 2.0]).unwrap(), vec![1.0, 1.0]).unwrap();
        let ball = Ball::new(vec![0.0, 0.0], 3.0).unwrap();
        let rep = check_pl(&f, &ball, 100, 2, None).unwrap();
        assert!((rep.lambda_hat.unwrap() - 1.0).abs() < 1e-12);
        assert!(rep.violations.is_empty());

        let constant = FnObjective {
            space: WeightedSpace::unit(2),
            value: |_: &[f64]| 5.0,
            grad: |_: &[f64]| vec![0.0, 0.0],
            infimum: Some(5.0),
            lg: None,
            pl: None,
        };
        let rep = check_pl(&constant, &ball, 50, 2, Some(1.0)).unwrap();
        assert_eq!(rep.lambda_hat, None);
        assert!(rep.violations.is_empty());
        assert!(!rep.certifies(1e-6));

        let missing = FnObjective {
            space: WeightedSpace::unit(2),
            value: |_: &[f64]| 5.0,
            grad: |_: &[f64]| vec![0.0, 0.0],
            infimum: None,
            lg: None,
            pl: None,
        };
        assert!(matches!(
            check_pl(&missing, &ball, 5, 0, None),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn pl_reports_violations() {
        let f = SquaredDistance::new(WeightedSpace::unit(2), vec![0.0, 0.0]).unwrap();
        let rep = check_pl(&f, &Ball::new(vec![1.0, 1.0], 0.5).unwrap(), 20, 2, Some(2.0)).unwrap();
        assert_eq!(rep.violations.len(), rep.valid_samples);
    }

    #[test]
    fn corollary_examples() {
        let f = SquaredDistance::new(WeightedSpace::unit(2), vec![1.0, 2.0]).unwrap();
        let rep = check_lg_corollaries(&f, &Ball::new(vec![0.0, 0.0], 5.0).unwrap(), 200, 3).unwrap();
        // both are equalities for the squared distance
        assert!(rep.taylor_slack.abs() <= 1e-9);
        assert!(rep.descent_slack.unwrap().abs() <= 1e-9);
        // at the optimum both sides of the descent inequality vanish
        let at_opt = check_lg_corollaries(&f, &Ball::new(vec![1.0, 2.0], 0.0).unwrap(), 5, 3).unwrap();
        assert_eq!(at_opt.descent_slack, Some(0.0));

        let c = check_lg_corollaries(&cosine(), &Ball::new(vec![0.0, 0.0], PI).unwrap(), 500, 4).unwrap();
        assert!(c.taylor_slack <= 1e-9);
        assert!(c.descent_slack.unwrap() <= 1e-9);
    }

    #[test]
    fn gradient_bounded_on_bounded_sets() {
        let f = cosine();
        let ball = Ball::new(vec![0.3, -0.2], 2.0).unwrap();
        let sup = sampled_gradient_bound(&f, &ball, 500, 9).unwrap();
        let center = f.space().nrm(&f.gradient(&ball.center).unwrap());
        assert!(sup <= center + 1.0 * ball.radius);
    }

    #[test]
    fn quadratic_constants_and_gradient() {
        let q = Quadratic::diagonal(&[1.0, 4.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(q.lg().unwrap().value, 4.0);
        assert_eq!(q.pl().unwrap().value, 1.0);
        let xs = q.unique_minimizer().unwrap();
        assert!((xs[0] - 1.0).abs() < 1e-14 && (xs[1] - 0.5).abs() < 1e-14);
        assert!((q.infimum().unwrap() - (-1.0)).abs() < 1e-14);
        assert!(fd_check_gradient(&q, &[0.3, -0.7], 1e-5).unwrap() <= 1e-8);
        assert!(Quadratic::diagonal(&[1.0, 0.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn weighted_gradient_fd() {
        let f = SquaredDistance::new(WeightedSpace::weighted(vec![0.2, 0.8]).unwrap(), vec![1.0, -1.0]).unwrap();
        assert!(fd_check_gradient(&f, &[0.4, 0.9], 1e-5).unwrap() <= 1e-8);
    }
}
