//! Differentiable maps `F: G → H` and sampled estimators for the bounded
//! Jacobian (BJ), Lipschitz Jacobian (LJ) and uniform conditioning (UC)
//! constants on a ball.
//!
//! Upper constants are inflated by [`INFLATE`] and lower constants deflated
//! by [`DEFLATE`]; every estimate keeps its raw sampled value and is tagged
//! with [`Provenance::Sampled`].

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::rng::{self, SeededRng};
use crate::space::{self, op_norm, DenseOp, LinearOperator, OuterGram, WeightedSpace};

pub const INFLATE: f64 = 1.1;
pub const DEFLATE: f64 = 0.9;

/// Power iteration settings used by the estimators.
pub const NORM_TOL: f64 = 1e-12;
pub const NORM_MAX_ITER: usize = 20_000;

/// Below this (relative to the largest eigenvalue) `∂F ∂F*` is treated as
/// singular.
pub const UC_FLOOR: f64 = 1e-10;

/// Relative length of the local pairs drawn by [`Ball::sample_pair`].
pub const PAIR_STEP: f64 = 1e-3;

/// A Fréchet-differentiable map between weighted spaces.
pub trait SmoothMap: Send + Sync {
    fn domain(&self) -> &WeightedSpace;
    fn codomain(&self) -> &WeightedSpace;
    fn value(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<DenseOp>;

    /// `Some((A, c))` when `F(x) = A x + c` exactly.
    fn affine_part(&self) -> Option<(DenseOp, Vec<f64>)> {
        None
    }
}

/// `F(x) = A x + c`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    op: DenseOp,
    offset: Vec<f64>,
}

impl AffineMap {
    pub fn linear(op: DenseOp) -> Self {
        let offset = alloc::vec![0.0; op.codomain().dim()];
        AffineMap { op, offset }
    }

    pub fn new(op: DenseOp, offset: Vec<f64>) -> Result<Self> {
        op.codomain().check(&offset)?;
        Ok(AffineMap { op, offset })
    }

    pub fn identity(space: WeightedSpace) -> Self {
        Self::linear(DenseOp::identity(space))
    }
}

impl SmoothMap for AffineMap {
    fn domain(&self) -> &WeightedSpace {
        self.op.domain()
    }

    fn codomain(&self) -> &WeightedSpace {
        self.op.codomain()
    }

    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.domain().check(x)?;
        let mut y = self.op.apply(x);
        y.iter_mut().zip(&self.offset).for_each(|(a, b)| *a += b);
        Ok(y)
    }

    fn jacobian(&self, x: &[f64]) -> Result<DenseOp> {
        self.domain().check(x)?;
        Ok(self.op.clone())
    }

    fn affine_part(&self) -> Option<(DenseOp, Vec<f64>)> {
        Some((self.op.clone(), self.offset.clone()))
    }
}

/// Closed ball `{x : ‖x − center‖ ≤ radius}` in a weighted space.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ball radius {radius} must be finite and ≥ 0"
            )));
        }
        Ok(Ball { center, radius })
    }

    pub fn contains(&self, space: &WeightedSpace, x: &[f64], rel_tol: f64) -> Result<bool> {
        Ok(space.distance(x, &self.center)? <= self.radius * (1.0 + rel_tol))
    }

    /// Draws a pair for Lipschitz-ratio estimation. `x` is uniform in the ball
    /// shrunk by `1e-3`; half of the time `y` is an independent uniform point,
    /// otherwise `y = x + 1e-3·radius·u` for a uniform unit direction `u`, so
    /// local (Hessian-scale) ratios are probed as well as global ones.
    pub fn sample_pair(&self, space: &WeightedSpace, rng: &mut SeededRng) -> (Vec<f64>, Vec<f64>) {
        use rand::Rng;
        let inner = Ball {
            center: self.center.clone(),
            radius: self.radius * (1.0 - PAIR_STEP),
        };
        let x = inner.sample(space, rng);
        if rng.random_bool(0.5) {
            return (x, self.sample(space, rng));
        }
        let mut u = rng::gaussian_vec(rng, space.dim());
        let nu = libm::sqrt(u.iter().map(|v| v * v).sum::<f64>()).max(1e-300);
        u.iter_mut().for_each(|v| *v /= nu);
        space.embed_euclidean(&mut u);
        let step = self.radius * PAIR_STEP;
        let y = x.iter().zip(&u).map(|(a, d)| a + step * d).collect();
        (x, y)
    }

    /// Uniform sample in the ball w.r.t. the space's metric.
    pub fn sample(&self, space: &WeightedSpace, rng: &mut SeededRng) -> Vec<f64> {
        let mut y = rng::unit_ball_point(rng, space.dim());
        space.embed_euclidean(&mut y);
        y.iter_mut()
            .zip(&self.center)
            .for_each(|(v, c)| *v = c + self.radius * *v);
        y
    }
}

/// Where a constant came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    /// Exact closed form.
    Analytic,
    /// A closed-form bound known to be valid but possibly loose.
    AnalyticUpper,
    /// Supplied by the user.
    User,
    /// Estimated from `samples` probes; `raw` is the unadjusted extreme and
    /// `factor` the safety factor applied to it.
    Sampled { samples: usize, factor: f64, raw: f64 },
}

impl Provenance {
    /// True when the constant is a proven bound rather than an estimate.
    pub fn is_analytic(&self) -> bool {
        matches!(self, Provenance::Analytic | Provenance::AnalyticUpper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
}

impl Constant {
    pub fn analytic(value: f64) -> Self {
        Constant {
            value,
            provenance: Provenance::Analytic,
        }
    }

    pub fn analytic_upper(value: f64) -> Self {
        Constant {
            value,
            provenance: Provenance::AnalyticUpper,
        }
    }

    pub fn user(value: f64) -> Self {
        Constant {
            value,
            provenance: Provenance::User,
        }
    }

    pub fn sampled(raw: f64, factor: f64, samples: usize) -> Self {
        Constant {
            value: raw * factor,
            provenance: Provenance::Sampled { samples, factor, raw },
        }
    }

    /// Raw sampled value, or the value itself for non-sampled constants.
    pub fn raw(&self) -> f64 {
        match self.provenance {
            Provenance::Sampled { raw, .. } => raw,
            _ => self.value,
        }
    }
}

/// BJ, LJ and (optional) UC constants of a map on a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapCertificate {
    pub bj: Constant,
    pub lj: Constant,
    pub uc: Option<Constant>,
}

impl MapCertificate {
    /// Checks `λ_F ≤ K_F²` on the raw values.
    pub fn new(bj: Constant, lj: Constant, uc: Option<Constant>) -> Result<Self> {
        if let Some(uc) = uc {
            let k = bj.raw();
            if uc.raw() > k * k * (1.0 + 1e-9) {
                return Err(Error::InvalidConfig(format!(
                    "conditioning constant {} exceeds squared Jacobian bound {}",
                    uc.raw(),
                    k * k
                )));
            }
        }
        Ok(MapCertificate { bj, lj, uc })
    }

    pub fn is_analytic(&self) -> bool {
        self.bj.provenance.is_analytic()
            && self.lj.provenance.is_analytic()
            && self.uc.is_none_or(|c| c.provenance.is_analytic())
    }
}

/// Central finite-difference check of the Jacobian at `x`.
///
/// For every coordinate direction `e_k` compares `(F(x+h e_k) − F(x−h e_k))/2h`
/// against `∂F(x) e_k` and returns the largest relative error in the codomain
/// norm. Correct Jacobians give ≲ 1e-5 for `h ∈ [1e-8, 1e-2]`.
pub fn fd_check<F: SmoothMap + ?Sized>(f: &F, x: &[f64], h: f64) -> Result<f64> {
    if !(1e-8..=1e-2).contains(&h) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step {h} outside [1e-8, 1e-2]"
        )));
    }
    let dom = f.domain();
    dom.check(x)?;
    let cod = f.codomain();
    let jac = f.jacobian(x)?;
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    let mut e = alloc::vec![0.0; dom.dim()];
    for k in 0..dom.dim() {
        xp[k] = x[k] + h;
        let fp = f.value(&xp)?;
        xp[k] = x[k] - h;
        let fm = f.value(&xp)?;
        xp[k] = x[k];
        e[k] = 1.0;
        let col = jac.apply(&e);
        e[k] = 0.0;
        let fd: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        worst = worst.max(relative_error(cod, &fd, &col));
    }
    Ok(worst)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-4)`; the floor keeps vanishing columns from
/// turning round-off into large relative errors.
pub(crate) fn relative_error(space: &WeightedSpace, a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let denom = space.nrm(a).max(space.nrm(b)).max(1e-4);
    space.nrm(&diff) / denom
}

fn jac_norm(op: &DenseOp) -> f64 {
    op_norm(op, NORM_TOL, NORM_MAX_ITER).value
}

/// Sampled BJ constant: `1.1 · max ‖∂F(x)‖` over the center and `n` uniform
/// points of the ball.
pub fn estimate_bj<F: SmoothMap + ?Sized>(f: &F, ball: &Ball, n: usize, seed: u64) -> Result<Constant> {
    let dom = f.domain();
    dom.check(&ball.center)?;
    let mut r = rng::seeded(seed);
    let mut worst = jac_norm(&f.jacobian(&ball.center)?);
    for _ in 0..n {
        let x = ball.sample(dom, &mut r);
        worst = worst.max(jac_norm(&f.jacobian(&x)?));
    }
    Ok(Constant::sampled(worst, INFLATE, n + 1))
}

/// Sampled LJ constant: `1.1 · max ‖∂F(x) − ∂F(y)‖ / ‖x − y‖` over `n_pairs`
/// uniform pairs. Coincident pairs are redrawn.
pub fn estimate_lj<F: SmoothMap + ?Sized>(f: &F, ball: &Ball, n_pairs: usize, seed: u64) -> Result<Constant> {
    let dom = f.domain();
    dom.check(&ball.center)?;
    let mut r = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    let mut counted = 0;
    let mut attempts = 0;
    while counted < n_pairs {
        attempts += 1;
        if attempts > 100 * n_pairs.max(1) {
            // zero-radius ball: every pair coincides
            break;
        }
        let (x, y) = ball.sample_pair(dom, &mut r);
        let d = dom.nrm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        if d < 1e-12 {
            continue;
        }
        let diff = f.jacobian(&x)?.sub(&f.jacobian(&y)?)?;
        worst = worst.max(jac_norm(&diff) / d);
        counted += 1;
    }
    Ok(Constant::sampled(worst, INFLATE, counted))
}

/// Smallest eigenvalue and largest eigenvalue of `∂F(x) ∂F(x)*`.
pub fn conditioning_at<F: SmoothMap + ?Sized>(f: &F, x: &[f64]) -> Result<(f64, f64)> {
    let jac = f.jacobian(x)?;
    space::spectrum(&OuterGram(&jac))
}

/// Sampled UC constant: `0.9 · min λ_min(∂F(x) ∂F(x)*)` over the center and
/// `n` uniform points. `None` when some sample is singular (≤ `UC_FLOOR`
/// relative to its largest eigenvalue), i.e. the map is not certified.
pub fn estimate_uc<F: SmoothMap + ?Sized>(f: &F, ball: &Ball, n: usize, seed: u64) -> Result<Option<Constant>> {
    let dom = f.domain();
    dom.check(&ball.center)?;
    let cod_dim = f.codomain().dim();
    if cod_dim > space::DENSE_CAP {
        return Err(Error::TooLarge {
            dim: cod_dim,
            cap: space::DENSE_CAP,
        });
    }
    let mut r = rng::seeded(seed);
    let mut worst = f64::INFINITY;
    let mut points = alloc::vec![ball.center.clone()];
    points.extend((0..n).map(|_| ball.sample(dom, &mut r)));
    for x in &points {
        let (lo, hi) = conditioning_at(f, x)?;
        if lo <= UC_FLOOR * hi.max(1.0) {
            return Ok(None);
        }
        worst = worst.min(lo);
    }
    Ok(Some(Constant::sampled(worst, DEFLATE, points.len())))
}

/// Certificate with all three constants sampled on `ball`.
pub fn estimate_certificate<F: SmoothMap + ?Sized>(f: &F, ball: &Ball, n: usize, seed: u64) -> Result<MapCertificate> {
    let bj = estimate_bj(f, ball, n, seed)?;
    let lj = estimate_lj(f, ball, n, seed.wrapping_add(1))?;
    let uc = estimate_uc(f, ball, n, seed)?;
    MapCertificate::new(bj, lj, uc)
}

/// Relative residual of `F(y) − F(x) = ∫₀¹ ∂F(x + t(y−x))(y − x) dt` with an
/// `nodes`-point Gauss–Legendre rule.
pub fn segment_residual<F: SmoothMap + ?Sized>(f: &F, x: &[f64], y: &[f64], nodes: usize) -> Result<f64> {
    let dom = f.domain();
    dom.check(x)?;
    dom.check(y)?;
    let dir: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let (ts, ws) = gauss_legendre(nodes);
    let mut integral = alloc::vec![0.0; f.codomain().dim()];
    for (t, w) in ts.iter().zip(&ws) {
        let p: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
        let jd = f.jacobian(&p)?.apply(&dir);
        integral.iter_mut().zip(&jd).for_each(|(s, v)| *s += w * v);
    }
    let fy = f.value(y)?;
    let fx = f.value(x)?;
    let diff: Vec<f64> = fy.iter().zip(&fx).map(|(a, b)| a - b).collect();
    let cod = f.codomain();
    let err: Vec<f64> = diff.iter().zip(&integral).map(|(a, b)| a - b).collect();
    Ok(cod.nrm(&err) / cod.nrm(&diff).max(1e-300))
}

#[cfg(test)]
pub(crate) mod testmaps {
    use super::*;
    use alloc::vec;
    use nalgebra::DMatrix;

    /// Maps given by closures, for tests.
    pub struct FnMap<V, J> {
        pub dom: WeightedSpace,
        pub cod: WeightedSpace,
        pub value: V,
        pub jac: J,
    }

    impl<V, J> SmoothMap for FnMap<V, J>
    where
        V: Fn(&[f64]) -> Vec<f64> + Send + Sync,
        J: Fn(&[f64]) -> Vec<f64> + Send + Sync,
    {
        fn domain(&self) -> &WeightedSpace {
            &self.dom
        }
        fn codomain(&self) -> &WeightedSpace {
            &self.cod
        }
        fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok((self.value)(x))
        }
        fn jacobian(&self, x: &[f64]) -> Result<DenseOp> {
            let m = DMatrix::from_row_slice(self.cod.dim(), self.dom.dim(), &(self.jac)(x));
            DenseOp::new(self.dom.clone(), self.cod.clone(), m)
        }
    }

    pub fn fn_map<V, J>(n: usize, m: usize, value: V, jac: J) -> FnMap<V, J>
    where
        V: Fn(&[f64]) -> Vec<f64> + Send + Sync,
        J: Fn(&[f64]) -> Vec<f64> + Send + Sync,
    {
        FnMap {
            dom: WeightedSpace::unit(n),
            cod: WeightedSpace::unit(m),
            value,
            jac,
        }
    }

    pub fn row_11() -> AffineMap {
        AffineMap::linear(DenseOp::from_rows(1, 2, &[1.0, 1.0]).unwrap())
    }

    pub fn square_first() -> impl SmoothMap {
        fn_map(2, 2, |x| vec![x[0] * x[0], x[1]], |x| vec![2.0 * x[0], 0.0, 0.0, 1.0])
    }
}

#[cfg(test)]
mod tests {
    use super::testmaps::*;
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    #[test]
    fn fd_check_examples() {
        let lin = row_11();
        assert!(fd_check(&lin, &[0.3, -1.2], 1e-5).unwrap() <= 1e-10);
        assert!(fd_check(&square_first(), &[1.0, 1.0], 1e-5).unwrap() <= 1e-8);
        let wrong = fn_map(2, 2, |x| vec![x[0] * x[0], x[1]], |x| vec![4.0 * x[0], 0.0, 0.0, 2.0]);
        let err = fd_check(&wrong, &[1.0, 1.0], 1e-5).unwrap();
        assert!((err - 0.5).abs() < 1e-6, "err = {err}");
    }

    #[test]
    fn fd_check_rejects_bad_step() {
        assert!(fd_check(&row_11(), &[0.0, 0.0], 0.1).is_err());
        assert!(fd_check(&row_11(), &[0.0, 0.0], 1e-9).is_err());
    }

    #[test]
    fn bj_examples() {
        let ball = Ball::new(vec![0.0, 0.0], 3.0).unwrap();
        let k = estimate_bj(&row_11(), &ball, 50, 1).unwrap();
        assert!((k.value - 1.1 * libm::sqrt(2.0)).abs() < 1e-10);
        assert!((k.raw() - libm::sqrt(2.0)).abs() < 1e-10);

        let constant = fn_map(2, 1, |_| vec![3.0], |_| vec![0.0, 0.0]);
        assert_eq!(estimate_bj(&constant, &ball, 50, 1).unwrap().value, 0.0);

        let sin = fn_map(1, 1, |x| vec![libm::sin(x[0])], |x| vec![libm::cos(x[0])]);
        let k = estimate_bj(&sin, &Ball::new(vec![0.0], PI).unwrap(), 50, 1).unwrap();
        assert!((1.0..=1.1 + 1e-12).contains(&k.value), "{}", k.value);
        assert!((k.raw() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lj_examples() {
        let ball = Ball::new(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(estimate_lj(&row_11(), &ball, 50, 2).unwrap().value, 0.0);

        let half_sq = fn_map(1, 1, |x| vec![0.5 * x[0] * x[0]], |x| vec![x[0]]);
        let l = estimate_lj(&half_sq, &Ball::new(vec![0.0], 1.0).unwrap(), 50, 2).unwrap();
        assert!((l.raw() - 1.0).abs() < 1e-9);
        assert!(l.value <= 1.1 + 1e-12);

        // F = x₁x₂: ∂F(x) − ∂F(y) = (x₂−y₂, x₁−y₁), Hessian norm 1 ≤ √2
        let prod = fn_map(2, 1, |x| vec![x[0] * x[1]], |x| vec![x[1], x[0]]);
        let l = estimate_lj(&prod, &ball, 100, 3).unwrap();
        assert!(l.raw() <= libm::sqrt(2.0));
        assert!((l.raw() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lj_zero_radius_terminates() {
        let half_sq = fn_map(1, 1, |x| vec![0.5 * x[0] * x[0]], |x| vec![x[0]]);
        let l = estimate_lj(&half_sq, &Ball::new(vec![1.0], 0.0).unwrap(), 5, 0).unwrap();
        assert_eq!(l.value, 0.0);
    }

    #[test]
    fn uc_examples() {
        let ball = Ball::new(vec![0.0, 0.0], 1.0).unwrap();
        let uc = estimate_uc(&row_11(), &ball, 20, 4).unwrap().unwrap();
        assert!((uc.value - 1.8).abs() < 1e-12);

        let under = AffineMap::linear(DenseOp::from_rows(2, 1, &[1.0, 2.0]).unwrap());
        assert!(estimate_uc(&under, &Ball::new(vec![0.0], 1.0).unwrap(), 20, 4)
            .unwrap()
            .is_none());

        let id = AffineMap::identity(WeightedSpace::unit(2));
        let uc = estimate_uc(&id, &ball, 20, 4).unwrap().unwrap();
        assert!((uc.value - 0.9).abs() < 1e-12);
    }

    #[test]
    fn certificate_side_condition() {
        let bj = Constant::analytic(1.0);
        let lj = Constant::analytic(0.0);
        assert!(MapCertificate::new(bj, lj, Some(Constant::analytic(1.0))).is_ok());
        assert!(MapCertificate::new(bj, lj, Some(Constant::analytic(1.5))).is_err());
    }

    #[test]
    fn sampled_bj_dominates_fresh_probes() {
        let f = fn_map(
            2,
            2,
            |x| vec![libm::sin(x[0]) * x[1], libm::tanh(x[0] + x[1])],
            |x| {
                let s = 1.0 - libm::tanh(x[0] + x[1]).powi(2);
                vec![libm::cos(x[0]) * x[1], libm::sin(x[0]), s, s]
            },
        );
        let ball = Ball::new(vec![0.2, -0.1], 1.5).unwrap();
        let k = estimate_bj(&f, &ball, 200, 11).unwrap();
        let mut r = rng::seeded(99);
        let mut violations = 0;
        for _ in 0..1000 {
            let x = ball.sample(f.domain(), &mut r);
            if jac_norm(&f.jacobian(&x).unwrap()) > k.value {
                violations += 1;
            }
        }
        assert!(violations <= 1, "{violations} violations of sampled K_F");
        let lam = estimate_uc(&f, &ball, 200, 11).unwrap();
        if let Some(lam) = lam {
            assert!(lam.raw() <= k.raw() * k.raw());
        }
    }

    #[test]
    fn segment_fundamental_theorem() {
        let f = fn_map(
            2,
            2,
            |x| vec![libm::sin(x[0]) * x[1], libm::exp(0.3 * x[0]) - x[1] * x[1]],
            |x| {
                vec![
                    libm::cos(x[0]) * x[1],
                    libm::sin(x[0]),
                    0.3 * libm::exp(0.3 * x[0]),
                    -2.0 * x[1],
                ]
            },
        );
        let ball = Ball::new(vec![0.0, 0.0], 2.0).unwrap();
        let mut r = rng::seeded(5);
        for _ in 0..20 {
            let x = ball.sample(f.domain(), &mut r);
            let y = ball.sample(f.domain(), &mut r);
            assert!(segment_residual(&f, &x, &y, 64).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn ball_sampling_stays_inside_weighted_ball() {
        let space = WeightedSpace::weighted(vec![0.1, 5.0, 1.0]).unwrap();
        let ball = Ball::new(vec![1.0, 2.0, 3.0], 0.7).unwrap();
        let mut r = rng::seeded(3);
        for _ in 0..500 {
            let x = ball.sample(&space, &mut r);
            assert!(ball.contains(&space, &x, 1e-12).unwrap());
        }
    }
}
