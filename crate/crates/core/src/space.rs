//! Finite weighted Hilbert spaces and linear operators between them.
//!
//! A [`WeightedSpace`] is `ℝⁿ` with inner product `⟨u, v⟩ = Σ w_k u_k v_k`.
//! Parameter spaces use unit weights. An empirical `L²(μ, ℝˡ)` stores each
//! function by its raw values at the sample points, one block of `l`
//! coordinates per point, and every coordinate of block `i` carries the
//! μ-mass of point `i`. All weighting lives in the inner product.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng;

/// Largest dimension handed to the dense symmetric eigensolver.
pub const DENSE_CAP: usize = 4096;

/// Tolerance on the relative asymmetry of a supposedly self-adjoint operator.
pub const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSpace {
    weights: Arc<[f64]>,
}

impl WeightedSpace {
    /// `ℝⁿ` with the Euclidean inner product.
    pub fn unit(dim: usize) -> Self {
        WeightedSpace {
            weights: vec![1.0; dim].into(),
        }
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSpace("empty weight vector".into()));
        }
        if let Some((k, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidSpace(format!(
                "weight {k} is {w}, weights must be finite and positive"
            )));
        }
        Ok(WeightedSpace {
            weights: weights.into(),
        })
    }

    /// `L²(μ, ℝˡ)` for an empirical measure with the given point masses.
    /// Masses must sum to one within `1e-12`.
    pub fn empirical(masses: &[f64], block: usize) -> Result<Self> {
        if block == 0 {
            return Err(Error::InvalidSpace("output block size must be positive".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpace(format!("point masses sum to {total}, expected 1")));
        }
        let weights = masses.iter().flat_map(|&m| core::iter::repeat_n(m, block)).collect();
        Self::weighted(weights)
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_unit(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    pub fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `Σ_k w_k u_k v_k`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.ip(u, v))
    }

    pub fn norm(&self, u: &[f64]) -> Result<f64> {
        self.check(u)?;
        Ok(self.nrm(u))
    }

    pub fn distance(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(libm::sqrt(
            self.weights
                .iter()
                .zip(u.iter().zip(v))
                .map(|(w, (a, b))| w * (a - b) * (a - b))
                .sum(),
        ))
    }

    pub(crate) fn ip(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dim());
        debug_assert_eq!(v.len(), self.dim());
        self.weights
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub(crate) fn nrm(&self, u: &[f64]) -> f64 {
        libm::sqrt(self.ip(u, u))
    }

    /// Maps Euclidean coordinates `y` to `D^{-1/2} y`, an isometry from
    /// `ℝⁿ` onto this space.
    pub(crate) fn embed_euclidean(&self, y: &mut [f64]) {
        for (v, w) in y.iter_mut().zip(self.weights.iter()) {
            *v /= libm::sqrt(*w);
        }
    }
}

/// A bounded linear operator between weighted spaces.
///
/// `adjoint_apply` is the adjoint with respect to both weighted inner
/// products: `⟨A u, v⟩_codomain = ⟨u, A* v⟩_domain`.
pub trait LinearOperator {
    fn domain(&self) -> &WeightedSpace;
    fn codomain(&self) -> &WeightedSpace;
    fn apply(&self, u: &[f64]) -> Vec<f64>;
    fn adjoint_apply(&self, v: &[f64]) -> Vec<f64>;
}

/// Operator stored as a dense coordinate matrix `M` (`codomain.dim × domain.dim`).
///
/// The adjoint in the weighted metrics is `D_dom⁻¹ Mᵀ D_cod`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOp {
    domain: WeightedSpace,
    codomain: WeightedSpace,
    matrix: DMatrix<f64>,
}

impl DenseOp {
    pub fn new(domain: WeightedSpace, codomain: WeightedSpace, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: matrix.ncols(),
            });
        }
        if matrix.nrows() != codomain.dim() {
            return Err(Error::DimensionMismatch {
                expected: codomain.dim(),
                got: matrix.nrows(),
            });
        }
        Ok(DenseOp {
            domain,
            codomain,
            matrix,
        })
    }

    /// Euclidean matrix operator, `rows × cols`, from row-major data.
    pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Self::new(
            WeightedSpace::unit(cols),
            WeightedSpace::unit(rows),
            DMatrix::from_row_slice(rows, cols, data),
        )
    }

    pub fn identity(space: WeightedSpace) -> Self {
        let n = space.dim();
        DenseOp {
            domain: space.clone(),
            codomain: space,
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn zero(domain: WeightedSpace, codomain: WeightedSpace) -> Self {
        let matrix = DMatrix::zeros(codomain.dim(), domain.dim());
        DenseOp {
            domain,
            codomain,
            matrix,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `self − other`; both must act between the same spaces.
    pub fn sub(&self, other: &DenseOp) -> Result<DenseOp> {
        if self.domain != other.domain || self.codomain != other.codomain {
            return Err(Error::InvalidSpace("operators act between different spaces".into()));
        }
        Ok(DenseOp {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            matrix: &self.matrix - &other.matrix,
        })
    }

    pub fn scaled(&self, factor: f64) -> DenseOp {
        DenseOp {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            matrix: &self.matrix * factor,
        }
    }

    /// Coordinate matrix of `A ∘ A*` acting on the codomain.
    pub fn outer_gram(&self) -> DMatrix<f64> {
        let mut at = self.matrix.transpose();
        for (k, w) in self.domain.weights().iter().enumerate() {
            at.row_mut(k).scale_mut(1.0 / w);
        }
        for (k, w) in self.codomain.weights().iter().enumerate() {
            at.column_mut(k).scale_mut(*w);
        }
        &self.matrix * at
    }
}

impl LinearOperator for DenseOp {
    fn domain(&self) -> &WeightedSpace {
        &self.domain
    }

    fn codomain(&self) -> &WeightedSpace {
        &self.codomain
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.domain.dim());
        let mut out = vec![0.0; self.codomain.dim()];
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.matrix.row(r).iter().zip(u).map(|(a, b)| a * b).sum();
        }
        out
    }

    fn adjoint_apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.codomain.dim());
        let cw = self.codomain.weights();
        let dw = self.domain.weights();
        let mut out = vec![0.0; self.domain.dim()];
        for (c, o) in out.iter_mut().enumerate() {
            let col = self.matrix.column(c);
            let s: f64 = col.iter().zip(v.iter().zip(cw)).map(|(a, (b, w))| a * b * w).sum();
            *o = s / dw[c];
        }
        out
    }
}

/// `A ∘ A*` as an operator on the codomain of `A`.
pub struct OuterGram<'a, A: LinearOperator + ?Sized>(pub &'a A);

impl<A: LinearOperator + ?Sized> LinearOperator for OuterGram<'_, A> {
    fn domain(&self) -> &WeightedSpace {
        self.0.codomain()
    }

    fn codomain(&self) -> &WeightedSpace {
        self.0.codomain()
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.0.apply(&self.0.adjoint_apply(u))
    }

    fn adjoint_apply(&self, v: &[f64]) -> Vec<f64> {
        self.apply(v)
    }
}

/// Result of a power-iteration operator-norm estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest singular value of `A` in the weighted metrics, by power iteration
/// on `A* A`. Stops when the Rayleigh quotient changes by less than `tol`
/// relative; `converged` is false when `max_iter` ran out first.
pub fn op_norm<A: LinearOperator + ?Sized>(a: &A, tol: f64, max_iter: usize) -> NormEstimate {
    let dom = a.domain();
    let n = dom.dim();
    if n == 0 || a.codomain().dim() == 0 {
        return NormEstimate {
            value: 0.0,
            converged: true,
            iterations: 0,
        };
    }
    let mut r = rng::seeded(0x5_eed0_fa11);
    let mut v = rng::gaussian_vec(&mut r, n);
    dom.embed_euclidean(&mut v);
    let nv = dom.nrm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut rayleigh = 0.0;
    for it in 1..=max_iter.max(1) {
        let av = a.apply(&v);
        let next_rayleigh = a.codomain().nrm(&av).powi(2);
        let w = a.adjoint_apply(&av);
        let nw = dom.nrm(&w);
        if nw == 0.0 || !nw.is_finite() {
            return NormEstimate {
                value: libm::sqrt(next_rayleigh),
                converged: nw == 0.0,
                iterations: it,
            };
        }
        let done = (next_rayleigh - rayleigh).abs() <= tol * next_rayleigh;
        rayleigh = next_rayleigh;
        v = w.into_iter().map(|x| x / nw).collect();
        if done {
            // One more application of A*A raises the quotient to `‖A*A v‖`
            // for the normalized iterate, which is never below it.
            return NormEstimate {
                value: libm::sqrt(rayleigh.max(nw)),
                converged: true,
                iterations: it,
            };
        }
    }
    NormEstimate {
        value: libm::sqrt(rayleigh),
        converged: false,
        iterations: max_iter,
    }
}

/// Coordinate matrix of `B`, column `k` = `B e_k`.
pub fn materialize<A: LinearOperator + ?Sized>(b: &A) -> DMatrix<f64> {
    let n = b.domain().dim();
    let m = b.codomain().dim();
    let mut out = DMatrix::zeros(m, n);
    let mut e = vec![0.0; n];
    for k in 0..n {
        e[k] = 1.0;
        let col = b.apply(&e);
        out.column_mut(k).copy_from_slice(&col);
        e[k] = 0.0;
    }
    out
}

/// Symmetric representation `D^{1/2} M D^{-1/2}` of a self-adjoint operator
/// with coordinate matrix `M` on a weighted space.
pub fn symmetric_form(space: &WeightedSpace, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = space.dim();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.nrows(),
        });
    }
    let w = space.weights();
    let mut s = m.clone();
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] *= libm::sqrt(w[i] / w[j]);
        }
    }
    let scale = s.amax().max(1.0);
    let asym = (&s - s.transpose()).amax() / scale;
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSelfAdjoint(asym));
    }
    Ok((&s + s.transpose()) * 0.5)
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn symmetric_extremes(s: DMatrix<f64>) -> Result<(f64, f64)> {
    let n = s.nrows();
    if n > DENSE_CAP {
        return Err(Error::TooLarge { dim: n, cap: DENSE_CAP });
    }
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let eig = s.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((min, max))
}

/// Spectrum bounds `(min, max)` of a self-adjoint operator.
pub fn spectrum<A: LinearOperator + ?Sized>(b: &A) -> Result<(f64, f64)> {
    let space = b.domain();
    if b.codomain() != space {
        return Err(Error::InvalidSpace("operator is not an endomorphism".into()));
    }
    if space.dim() > DENSE_CAP {
        return Err(Error::TooLarge {
            dim: space.dim(),
            cap: DENSE_CAP,
        });
    }
    let m = materialize(b);
    symmetric_extremes(symmetric_form(space, &m)?)
}

/// Largest `λ` with `⟨y, B y⟩ ≥ λ ‖y‖²`, i.e. the smallest eigenvalue of a
/// self-adjoint `B`. A non-positive value means `B` is not coercive.
pub fn coercivity<A: LinearOperator + ?Sized>(b: &A) -> Result<f64> {
    spectrum(b).map(|(min, _)| min)
}

/// Largest relative adjoint defect `|⟨Au,v⟩ − ⟨u,A*v⟩| / (1 + |⟨Au,v⟩|)` over
/// random probe pairs.
pub fn adjoint_defect<A: LinearOperator + ?Sized>(a: &A, probes: usize, seed: u64) -> f64 {
    let mut r = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let u = rng::gaussian_vec(&mut r, a.domain().dim());
        let v = rng::gaussian_vec(&mut r, a.codomain().dim());
        let lhs = a.codomain().ip(&a.apply(&u), &v);
        let rhs = a.domain().ip(&u, &a.adjoint_apply(&v));
        worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    worst
}
