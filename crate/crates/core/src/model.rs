//! Parametric models `N(x, θ)`, the induced map `N_μ: Θ → L²(μ, ℝˡ)` and
//! its NTK Gram operator `∂N_μ(θ) ∘ ∂N_μ(θ)*`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrand::Dataset;
use crate::rng;
use crate::smoothmap::{Ball, Constant, SmoothMap, INFLATE};
use crate::space::{self, DenseOp, WeightedSpace, DENSE_CAP};

pub trait Model: Send + Sync {
    fn input_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn value(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>>;
    /// `∂_θ N(x, θ)` as an `l × p` matrix.
    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>>;

    /// `∂_x N(x, θ)` as an `l × n` matrix.
    fn input_jacobian(&self, _x: &[f64], _theta: &[f64]) -> Result<DMatrix<f64>> {
        Err(Error::Unsupported("model does not expose its input Jacobian".into()))
    }

    /// True when `N(x, ·)` is affine for every `x`.
    fn linear_in_params(&self) -> bool {
        false
    }

    /// Seeded initial parameters.
    fn init(&self, seed: u64) -> Vec<f64>;

    fn name(&self) -> &'static str;
}

fn check_dims(x: &[f64], n: usize, theta: &[f64], p: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    if theta.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: theta.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Features {
    /// `φ(x) = x`.
    #[default]
    Identity,
    /// `φ(x) = (x, 1)`.
    Affine,
}

/// `N(x, θ) = Θ φ(x)` with `Θ ∈ ℝ^{l×q}` stored row-major in `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    input_dim: usize,
    output_dim: usize,
    features: Features,
}

impl LinearModel {
    pub fn new(input_dim: usize, output_dim: usize, features: Features) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidConfig("linear model needs positive dimensions".into()));
        }
        Ok(LinearModel {
            input_dim,
            output_dim,
            features,
        })
    }

    fn feature_dim(&self) -> usize {
        match self.features {
            Features::Identity => self.input_dim,
            Features::Affine => self.input_dim + 1,
        }
    }

    fn phi(&self, x: &[f64]) -> Vec<f64> {
        let mut f = x.to_vec();
        if self.features == Features::Affine {
            f.push(1.0);
        }
        f
    }
}

impl Model for LinearModel {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn param_dim(&self) -> usize {
        self.output_dim * self.feature_dim()
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn value(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        check_dims(x, self.input_dim, theta, self.param_dim())?;
        let phi = self.phi(x);
        Ok(theta
            .chunks(phi.len())
            .map(|row| row.iter().zip(&phi).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        check_dims(x, self.input_dim, theta, self.param_dim())?;
        let phi = self.phi(x);
        let q = phi.len();
        let mut j = DMatrix::zeros(self.output_dim, self.param_dim());
        for r in 0..self.output_dim {
            for (k, v) in phi.iter().enumerate() {
                j[(r, r * q + k)] = *v;
            }
        }
        Ok(j)
    }

    fn input_jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        check_dims(x, self.input_dim, theta, self.param_dim())?;
        let q = self.feature_dim();
        Ok(DMatrix::from_fn(self.output_dim, self.input_dim, |r, k| {
            theta[r * q + k]
        }))
    }

    fn linear_in_params(&self) -> bool {
        true
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        rng::gaussian_vec(&mut rng::seeded(seed), self.param_dim())
    }

    fn name(&self) -> &'static str {
        "linear"
    }
}

/// Random features: `N(x, θ) = (1/√m) Θ tanh(W x)` with `W ∈ ℝ^{m×n}` drawn
/// once from the seed and frozen; `θ = Θ ∈ ℝ^{l×m}` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatures {
    w: DMatrix<f64>,
    output_dim: usize,
}

impl RandomFeatures {
    pub fn new(input_dim: usize, width: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || width == 0 || output_dim == 0 {
            return Err(Error::InvalidConfig("random features need positive dimensions".into()));
        }
        let data = rng::gaussian_vec(&mut rng::seeded(seed), width * input_dim);
        Ok(RandomFeatures {
            w: DMatrix::from_row_slice(width, input_dim, &data),
            output_dim,
        })
    }

    pub fn width(&self) -> usize {
        self.w.nrows()
    }

    fn features(&self, x: &[f64]) -> DVector<f64> {
        let s = 1.0 / libm::sqrt(self.width() as f64);
        (&self.w * DVector::from_column_slice(x)).map(|u| s * libm::tanh(u))
    }
}

impl Model for RandomFeatures {
    fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    fn param_dim(&self) -> usize {
        self.output_dim * self.width()
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn value(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        check_dims(x, self.input_dim(), theta, self.param_dim())?;
        let phi = self.features(x);
        Ok(theta
            .chunks(self.width())
            .map(|row| row.iter().zip(phi.iter()).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        check_dims(x, self.input_dim(), theta, self.param_dim())?;
        let phi = self.features(x);
        let m = self.width();
        let mut j = DMatrix::zeros(self.output_dim, self.param_dim());
        for r in 0..self.output_dim {
            for k in 0..m {
                j[(r, r * m + k)] = phi[k];
            }
        }
        Ok(j)
    }

    fn input_jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        check_dims(x, self.input_dim(), theta, self.param_dim())?;
        let m = self.width();
        let s = 1.0 / libm::sqrt(m as f64);
        let u = &self.w * DVector::from_column_slice(x);
        let theta = DMatrix::from_row_slice(self.output_dim, m, theta);
        let mut scaled = self.w.clone();
        for j in 0..m {
            let t = libm::tanh(u[j]);
            scaled.row_mut(j).scale_mut(s * (1.0 - t * t));
        }
        Ok(theta * scaled)
    }

    fn linear_in_params(&self) -> bool {
        true
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        rng::gaussian_vec(&mut rng::seeded(seed), self.param_dim())
    }

    fn name(&self) -> &'static str {
        "random_features"
    }
}

/// Two-layer tanh network `N(x, θ) = (1/√m) A tanh(W x)` with
/// `θ = (W ∈ ℝ^{m×n}, A ∈ ℝ^{l×m})`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowNet {
    input_dim: usize,
    width: usize,
    output_dim: usize,
}

/// Hidden-layer quantities at one input.
struct Hidden {
    /// `tanh(W x)`.
    t: DVector<f64>,
    /// `1 − tanh²(W x)`.
    d: DVector<f64>,
    w: DMatrix<f64>,
    a: DMatrix<f64>,
    scale: f64,
}

impl ShallowNet {
    pub fn new(input_dim: usize, width: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || width == 0 || output_dim == 0 {
            return Err(Error::InvalidConfig("shallow net needs positive dimensions".into()));
        }
        Ok(ShallowNet {
            input_dim,
            width,
            output_dim,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn w_len(&self) -> usize {
        self.width * self.input_dim
    }

    fn hidden(&self, x: &[f64], theta: &[f64]) -> Result<Hidden> {
        check_dims(x, self.input_dim, theta, self.param_dim())?;
        let (wd, ad) = theta.split_at(self.w_len());
        let w = DMatrix::from_row_slice(self.width, self.input_dim, wd);
        let a = DMatrix::from_row_slice(self.output_dim, self.width, ad);
        let u = &w * DVector::from_column_slice(x);
        let t = u.map(libm::tanh);
        let d = t.map(|t| 1.0 - t * t);
        Ok(Hidden {
            t,
            d,
            w,
            a,
            scale: 1.0 / libm::sqrt(self.width as f64),
        })
    }
}

impl Model for ShallowNet {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn param_dim(&self) -> usize {
        self.w_len() + self.output_dim * self.width
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn value(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let h = self.hidden(x, theta)?;
        Ok((&h.a * &h.t * h.scale).iter().copied().collect())
    }

    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        let h = self.hidden(x, theta)?;
        let (n, m) = (self.input_dim, self.width);
        let mut jac = DMatrix::zeros(self.output_dim, self.param_dim());
        for r in 0..self.output_dim {
            for j in 0..m {
                let c = h.scale * h.a[(r, j)] * h.d[j];
                for k in 0..n {
                    jac[(r, j * n + k)] = c * x[k];
                }
                jac[(r, self.w_len() + r * m + j)] = h.scale * h.t[j];
            }
        }
        Ok(jac)
    }

    fn input_jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        let h = self.hidden(x, theta)?;
        let mut scaled = h.w.clone();
        for j in 0..self.width {
            scaled.row_mut(j).scale_mut(h.scale * h.d[j]);
        }
        Ok(&h.a * scaled)
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        rng::gaussian_vec(&mut rng::seeded(seed), self.param_dim())
    }

    fn name(&self) -> &'static str {
        "shallow_net"
    }
}

/// Wraps a model and scales its reported Jacobian, leaving values intact.
/// A deliberately wrong derivative for exercising the finite-difference oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct MisreportedJacobian<M> {
    pub inner: M,
    pub factor: f64,
}

impl<M: Model> Model for MisreportedJacobian<M> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }
    fn value(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.inner.value(x, theta)
    }
    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.inner.jacobian(x, theta)? * self.factor)
    }
    fn linear_in_params(&self) -> bool {
        self.inner.linear_in_params()
    }
    fn init(&self, seed: u64) -> Vec<f64> {
        self.inner.init(seed)
    }
    fn name(&self) -> &'static str {
        "misreported_jacobian"
    }
}

impl<M: Model + ?Sized> Model for Arc<M> {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn param_dim(&self) -> usize {
        (**self).param_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn value(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        (**self).value(x, theta)
    }
    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        (**self).jacobian(x, theta)
    }
    fn input_jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        (**self).input_jacobian(x, theta)
    }
    fn linear_in_params(&self) -> bool {
        (**self).linear_in_params()
    }
    fn init(&self, seed: u64) -> Vec<f64> {
        (**self).init(seed)
    }
    fn name(&self) -> &'static str {
        (**self).name()
    }
}

/// Scalar discriminator `D(x, θ)` with the derivatives a gradient-penalized
/// integrand needs: `∇_x D`, `∂_θ D` and the mixed `∂_θ ∇_x D`.
pub trait Discriminator: Send + Sync {
    fn input_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn value(&self, x: &[f64], theta: &[f64]) -> Result<f64>;
    fn input_grad(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>>;
    fn param_grad(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>>;
    /// `k × p` matrix with rows `∂_θ (∂D/∂x_k)`.
    fn mixed(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>>;
    fn init(&self, seed: u64) -> Vec<f64>;
    /// True when every output lies in `(0, 1)`.
    fn bounded_unit(&self) -> bool {
        false
    }
}

impl<T: Discriminator + ?Sized> Discriminator for Arc<T> {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn param_dim(&self) -> usize {
        (**self).param_dim()
    }
    fn value(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        (**self).value(x, theta)
    }
    fn input_grad(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        (**self).input_grad(x, theta)
    }
    fn param_grad(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        (**self).param_grad(x, theta)
    }
    fn mixed(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        (**self).mixed(x, theta)
    }
    fn init(&self, seed: u64) -> Vec<f64> {
        (**self).init(seed)
    }
    fn bounded_unit(&self) -> bool {
        (**self).bounded_unit()
    }
}

/// `D(x, θ) = ⟨x, θ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDiscriminator {
    dim: usize,
}

impl LinearDiscriminator {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "discriminator input dimension must be positive".into(),
            ));
        }
        Ok(LinearDiscriminator { dim })
    }
}

impl Discriminator for LinearDiscriminator {
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn param_dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        check_dims(x, self.dim, theta, self.dim)?;
        Ok(x.iter().zip(theta).map(|(a, b)| a * b).sum())
    }
    fn input_grad(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        check_dims(x, self.dim, theta, self.dim)?;
        Ok(theta.to_vec())
    }
    fn param_grad(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        check_dims(x, self.dim, theta, self.dim)?;
        Ok(x.to_vec())
    }
    fn mixed(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        check_dims(x, self.dim, theta, self.dim)?;
        Ok(DMatrix::identity(self.dim, self.dim))
    }
    fn init(&self, seed: u64) -> Vec<f64> {
        rng::gaussian_vec(&mut rng::seeded(seed), self.dim)
    }
}

/// `D(x, θ) = σ((1/√m) aᵀ tanh(W x))` with `θ = (W ∈ ℝ^{m×n}, a ∈ ℝ^m)`
/// and `σ` the identity or the logistic sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowDiscriminator {
    net: ShallowNet,
    sigmoid: bool,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

impl ShallowDiscriminator {
    pub fn new(input_dim: usize, width: usize, sigmoid: bool) -> Result<Self> {
        Ok(ShallowDiscriminator {
            net: ShallowNet::new(input_dim, width, 1)?,
            sigmoid,
        })
    }

    /// `(σ(z), σ'(z), σ''(z))` at the pre-activation `z`.
    fn outer(&self, z: f64) -> (f64, f64, f64) {
        if self.sigmoid {
            let s = logistic(z);
            let d1 = s * (1.0 - s);
            (s, d1, d1 * (1.0 - 2.0 * s))
        } else {
            (z, 1.0, 0.0)
        }
    }
}

impl Discriminator for ShallowDiscriminator {
    fn input_dim(&self) -> usize {
        self.net.input_dim
    }

    fn param_dim(&self) -> usize {
        self.net.param_dim()
    }

    fn value(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        Ok(self.outer(self.net.value(x, theta)?[0]).0)
    }

    fn input_grad(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let z = self.net.value(x, theta)?[0];
        let g = self.net.input_jacobian(x, theta)?;
        let s1 = self.outer(z).1;
        Ok(g.iter().map(|v| s1 * v).collect())
    }

    fn param_grad(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let z = self.net.value(x, theta)?[0];
        let j = self.net.jacobian(x, theta)?;
        let s1 = self.outer(z).1;
        Ok(j.iter().map(|v| s1 * v).collect())
    }

    fn mixed(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        let net = &self.net;
        let h = net.hidden(x, theta)?;
        let (n, m) = (net.input_dim, net.width);
        let s = h.scale;
        // g_k = ∂z/∂x_k = s Σ_j a_j d_j W_jk, and its θ-derivative.
        let mut g = vec![0.0; n];
        let mut dg = DMatrix::zeros(n, net.param_dim());
        for j in 0..m {
            let a = h.a[(0, j)];
            let (t, d) = (h.t[j], h.d[j]);
            let dd = -2.0 * t * d;
            for k in 0..n {
                let wjk = h.w[(j, k)];
                g[k] += s * a * d * wjk;
                for i in 0..n {
                    let mut v = s * a * wjk * dd * x[i];
                    if i == k {
                        v += s * a * d;
                    }
                    dg[(k, j * n + i)] = v;
                }
                dg[(k, net.w_len() + j)] = s * d * wjk;
            }
        }
        let z = s * (0..m).map(|j| h.a[(0, j)] * h.t[j]).sum::<f64>();
        let (_, s1, s2) = self.outer(z);
        if !self.sigmoid {
            return Ok(dg);
        }
        let dz = net.jacobian(x, theta)?;
        let mut out = dg * s1;
        for k in 0..n {
            for c in 0..net.param_dim() {
                out[(k, c)] += s2 * dz[(0, c)] * g[k];
            }
        }
        Ok(out)
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        self.net.init(seed)
    }

    fn bounded_unit(&self) -> bool {
        self.sigmoid
    }
}

/// `N(x, θ) = (D(x, θ), ∇_x D(x, θ))`, `l = 1 + k`.
pub struct GanModel<D> {
    pub disc: D,
}

impl<D: Discriminator> Model for GanModel<D> {
    fn input_dim(&self) -> usize {
        self.disc.input_dim()
    }

    fn param_dim(&self) -> usize {
        self.disc.param_dim()
    }

    fn output_dim(&self) -> usize {
        1 + self.disc.input_dim()
    }

    fn value(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![self.disc.value(x, theta)?];
        out.extend(self.disc.input_grad(x, theta)?);
        Ok(out)
    }

    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.param_dim();
        let mut j = DMatrix::zeros(self.output_dim(), p);
        j.row_mut(0).copy_from_slice(&self.disc.param_grad(x, theta)?);
        j.rows_mut(1, self.disc.input_dim())
            .copy_from(&self.disc.mixed(x, theta)?);
        Ok(j)
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        self.disc.init(seed)
    }

    fn name(&self) -> &'static str {
        "gan_discriminator"
    }
}

/// VAE model `N((y, w), θ) = (E(y, θ_E), D(r(w, E(y, θ_E)), θ_D))` with the
/// reparameterization `r(w, (m, log s)) = m + e^{log s} ⊙ w`. The input is
/// `y` followed by the noise draw `w`; `θ = (θ_E, θ_D)`.
pub struct VaeModel<E, D> {
    encoder: E,
    decoder: D,
    latent: usize,
}

impl<E: Model, D: Model> VaeModel<E, D> {
    pub fn new(encoder: E, decoder: D, latent: usize) -> Result<Self> {
        if encoder.output_dim() != 2 * latent {
            return Err(Error::InvalidConfig(format!(
                "encoder output dimension {} must be twice the latent dimension {latent}",
                encoder.output_dim()
            )));
        }
        if decoder.input_dim() != latent {
            return Err(Error::InvalidConfig(format!(
                "decoder input dimension {} must equal the latent dimension {latent}",
                decoder.input_dim()
            )));
        }
        Ok(VaeModel {
            encoder,
            decoder,
            latent,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent(&self) -> usize {
        self.latent
    }

    fn split<'a>(&self, x: &'a [f64], theta: &'a [f64]) -> Result<[&'a [f64]; 4]> {
        check_dims(x, self.input_dim(), theta, self.param_dim())?;
        let (y, w) = x.split_at(self.data_dim());
        let (te, td) = theta.split_at(self.encoder.param_dim());
        Ok([y, w, te, td])
    }

    fn reparam(&self, enc: &[f64], w: &[f64]) -> Vec<f64> {
        let (m, ls) = enc.split_at(self.latent);
        m.iter()
            .zip(ls)
            .zip(w)
            .map(|((m, l), w)| m + libm::exp(*l) * w)
            .collect()
    }
}

impl<E: Model, D: Model> Model for VaeModel<E, D> {
    fn input_dim(&self) -> usize {
        self.data_dim() + self.latent
    }

    fn param_dim(&self) -> usize {
        self.encoder.param_dim() + self.decoder.param_dim()
    }

    fn output_dim(&self) -> usize {
        2 * self.latent + self.decoder.output_dim()
    }

    fn value(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let [y, w, te, td] = self.split(x, theta)?;
        let mut out = self.encoder.value(y, te)?;
        let r = self.reparam(&out, w);
        out.extend(self.decoder.value(&r, td)?);
        Ok(out)
    }

    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        let [y, w, te, td] = self.split(x, theta)?;
        let k = self.latent;
        let pe = self.encoder.param_dim();
        let enc = self.encoder.value(y, te)?;
        let je = self.encoder.jacobian(y, te)?;
        let r = self.reparam(&enc, w);
        // ∂r/∂(m, log s) = [I, diag(e^{log s} ⊙ w)].
        let mut dr = DMatrix::zeros(k, 2 * k);
        for i in 0..k {
            dr[(i, i)] = 1.0;
            dr[(i, k + i)] = libm::exp(enc[k + i]) * w[i];
        }
        let jdx = self.decoder.input_jacobian(&r, td)?;
        let jdt = self.decoder.jacobian(&r, td)?;
        let mut j = DMatrix::zeros(self.output_dim(), self.param_dim());
        j.view_mut((0, 0), (2 * k, pe)).copy_from(&je);
        let chain = jdx * dr * &je;
        let ld = self.decoder.output_dim();
        j.view_mut((2 * k, 0), (ld, pe)).copy_from(&chain);
        j.view_mut((2 * k, pe), (ld, self.decoder.param_dim())).copy_from(&jdt);
        Ok(j)
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        let mut t = self.encoder.init(seed);
        t.extend(self.decoder.init(seed.wrapping_add(1)));
        t
    }

    fn name(&self) -> &'static str {
        "vae"
    }
}

/// `N_μ: Θ → L²(μ, ℝˡ)`, `θ ↦ (N(x_i, θ))_i`.
#[derive(Clone)]
pub struct InducedMap {
    model: Arc<dyn Model>,
    data: Arc<Dataset>,
    domain: WeightedSpace,
    codomain: WeightedSpace,
}

impl InducedMap {
    pub fn new(model: Arc<dyn Model>, data: Arc<Dataset>) -> Result<Self> {
        if let Some((i, s)) = data
            .samples()
            .iter()
            .enumerate()
            .find(|(_, s)| s.input.len() != model.input_dim())
        {
            return Err(Error::InvalidDataset(format!(
                "sample {i} has input dimension {}, model expects {}",
                s.input.len(),
                model.input_dim()
            )));
        }
        let codomain = data.feature_space(model.output_dim())?;
        Ok(InducedMap {
            domain: WeightedSpace::unit(model.param_dim()),
            codomain,
            model,
            data,
        })
    }

    pub fn model(&self) -> &dyn Model {
        &*self.model
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// `‖∂_θ N(x_i, θ)‖` for every sample.
    pub fn per_sample_norms(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.data
            .samples()
            .iter()
            .map(|s| {
                let j = self.model.jacobian(&s.input, theta)?;
                Ok(j.singular_values().iter().copied().fold(0.0, f64::max))
            })
            .collect()
    }

    /// `√(Σ_i μ_i K̂_N(x_i)²)` with `K̂_N(x_i)` the largest per-sample Jacobian
    /// norm over the ball's center and `n` samples, inflated by 1.1.
    /// Draws the same points as [`crate::smoothmap::estimate_bj`] for a seed.
    pub fn aggregated_bj(&self, ball: &Ball, n: usize, seed: u64) -> Result<Constant> {
        let mut r = rng::seeded(seed);
        let mut worst = self.per_sample_norms(&ball.center)?;
        for _ in 0..n {
            let t = ball.sample(&self.domain, &mut r);
            for (w, v) in worst.iter_mut().zip(self.per_sample_norms(&t)?) {
                *w = w.max(v);
            }
        }
        let raw = libm::sqrt(
            self.data
                .weights()
                .iter()
                .zip(&worst)
                .map(|(m, k)| m * k * k)
                .sum::<f64>(),
        );
        Ok(Constant::sampled(raw, INFLATE, n + 1))
    }
}

impl SmoothMap for InducedMap {
    fn domain(&self) -> &WeightedSpace {
        &self.domain
    }

    fn codomain(&self) -> &WeightedSpace {
        &self.codomain
    }

    fn value(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.domain.check(theta)?;
        let mut out = Vec::with_capacity(self.codomain.dim());
        for (i, s) in self.data.samples().iter().enumerate() {
            let v = self.model.value(&s.input, theta)?;
            if let Some(k) = v.iter().position(|v| !v.is_finite()) {
                return Err(Error::numeric(
                    format!("model output {k} at sample {i}"),
                    "non-finite value",
                ));
            }
            out.extend(v);
        }
        Ok(out)
    }

    fn jacobian(&self, theta: &[f64]) -> Result<DenseOp> {
        self.domain.check(theta)?;
        let l = self.model.output_dim();
        let mut m = DMatrix::zeros(self.codomain.dim(), self.domain.dim());
        for (i, s) in self.data.samples().iter().enumerate() {
            m.rows_mut(i * l, l).copy_from(&self.model.jacobian(&s.input, theta)?);
        }
        DenseOp::new(self.domain.clone(), self.codomain.clone(), m)
    }

    fn affine_part(&self) -> Option<(DenseOp, Vec<f64>)> {
        if !self.model.linear_in_params() {
            return None;
        }
        let zero = vec![0.0; self.domain.dim()];
        Some((self.jacobian(&zero).ok()?, self.value(&zero).ok()?))
    }
}

/// The NTK operator `∂N_μ(θ) ∘ ∂N_μ(θ)*` at one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct NtkGram {
    pub theta: Vec<f64>,
    /// Coordinate matrix in function coordinates, block `(i, j)` equal to
    /// `∂_θN(x_i) ∂_θN(x_j)ᵀ μ_j`.
    pub matrix: DMatrix<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Largest `|S − Sᵀ|` of the symmetric form before symmetrization.
    pub asymmetry: f64,
}

pub fn ntk_gram(map: &InducedMap, theta: &[f64]) -> Result<NtkGram> {
    let dim = map.codomain.dim();
    if dim > DENSE_CAP {
        return Err(Error::TooLarge { dim, cap: DENSE_CAP });
    }
    let matrix = map.jacobian(theta)?.outer_gram();
    let w = map.codomain.weights();
    let raw = DMatrix::from_fn(dim, dim, |i, j| matrix[(i, j)] * libm::sqrt(w[i] / w[j]));
    let asymmetry = (&raw - raw.transpose()).amax();
    let (lambda_min, lambda_max) = space::symmetric_extremes(space::symmetric_form(&map.codomain, &matrix)?)?;
    Ok(NtkGram {
        theta: theta.to_vec(),
        matrix,
        lambda_min,
        lambda_max,
        asymmetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::Sample;
    use crate::smoothmap::{conditioning_at, estimate_bj, estimate_lj, estimate_uc, fd_check};
    use crate::space::{adjoint_defect, LinearOperator};

    fn data(points: &[&[f64]]) -> Arc<Dataset> {
        Arc::new(Dataset::uniform(points.iter().map(|p| Sample::new(p.to_vec())).collect()).unwrap())
    }

    fn induced(model: impl Model + 'static, d: Arc<Dataset>) -> InducedMap {
        InducedMap::new(Arc::new(model), d).unwrap()
    }

    #[test]
    fn linear_adjoint_example() {
        let map = induced(
            LinearModel::new(2, 1, Features::Identity).unwrap(),
            data(&[&[1.0, 0.0], &[0.0, 1.0]]),
        );
        let j = map.jacobian(&[0.3, 0.4]).unwrap();
        assert_eq!(j.adjoint_apply(&[3.0, 5.0]), vec![1.5, 2.5]);
        assert!(adjoint_defect(&j, 100, 1) <= 1e-10);
    }

    #[test]
    fn constant_model_has_zero_jacobian() {
        let map = induced(ShallowNet::new(2, 3, 1).unwrap(), data(&[&[0.0, 0.0], &[0.0, 0.0]]));
        // Zero inputs make tanh(Wx) = 0 and ∂/∂W vanish; with a = 0 all of it does.
        let theta = vec![0.0; map.model().param_dim()];
        let j = map.jacobian(&theta).unwrap();
        assert!(j.matrix().amax() == 0.0);
        assert!(j.adjoint_apply(&[1.0, 1.0]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ntk_examples() {
        let orth = induced(
            LinearModel::new(2, 1, Features::Identity).unwrap(),
            data(&[&[1.0, 0.0], &[0.0, 1.0]]),
        );
        let g = ntk_gram(&orth, &[0.0, 0.0]).unwrap();
        assert!((g.lambda_min - 0.5).abs() < 1e-14 && (g.lambda_max - 0.5).abs() < 1e-14);

        let under = induced(
            LinearModel::new(1, 1, Features::Identity).unwrap(),
            data(&[&[1.0], &[2.0]]),
        );
        assert!(ntk_gram(&under, &[0.7]).unwrap().lambda_min.abs() <= 1e-10);

        let dup = induced(
            RandomFeatures::new(2, 16, 1, 3).unwrap(),
            data(&[&[0.3, 1.0], &[0.3, 1.0], &[-1.0, 0.2]]),
        );
        let theta = dup.model().init(1);
        assert!(ntk_gram(&dup, &theta).unwrap().lambda_min.abs() <= 1e-10);
    }

    #[test]
    fn gram_matches_sampled_conditioning() {
        let d = data(&[&[1.0, 0.5], &[-0.3, 0.2], &[0.8, -1.1], &[0.1, 0.9]]);
        let map = induced(ShallowNet::new(2, 8, 1).unwrap(), d);
        for seed in 0..5 {
            let theta = map.model().init(seed);
            let g = ntk_gram(&map, &theta).unwrap();
            let (lo, hi) = conditioning_at(&map, &theta).unwrap();
            assert!((g.lambda_min - lo).abs() <= 1e-9 * hi.max(1.0));
            assert!(g.lambda_min <= g.lambda_max);
            assert!(g.asymmetry <= 1e-10);
            let ball = Ball::new(theta.clone(), 0.0).unwrap();
            let uc = estimate_uc(&map, &ball, 0, 0).unwrap().unwrap();
            assert!((uc.raw() - g.lambda_min).abs() <= 1e-9);
            let kn = estimate_bj(&map, &ball, 0, 0).unwrap();
            assert!(g.lambda_min <= kn.raw() * kn.raw() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn random_features_are_linear() {
        let map = induced(
            RandomFeatures::new(3, 10, 2, 5).unwrap(),
            data(&[&[1.0, 0.0, 0.5], &[0.2, 0.3, -1.0]]),
        );
        let theta = map.model().init(0);
        let ball = Ball::new(theta, 2.0).unwrap();
        assert_eq!(estimate_lj(&map, &ball, 50, 1).unwrap().value, 0.0);
        assert!(map.affine_part().is_some());
    }

    #[test]
    fn shallow_net_examples() {
        let net = ShallowNet::new(3, 5, 2).unwrap();
        let mut theta = net.init(9);
        let wl = net.w_len();
        theta[wl..].iter_mut().for_each(|v| *v = 0.0);
        for x in [[1.0, 2.0, 3.0], [-0.5, 0.0, 4.0]] {
            assert_eq!(net.value(&x, &theta).unwrap(), vec![0.0, 0.0]);
        }
        let d = data(&[&[1.0, 0.0, 0.5], &[0.2, 0.3, -1.0], &[0.0, -0.7, 0.4]]);
        let map = induced(net, d);
        let mut r = rng::seeded(4);
        for _ in 0..50 {
            let theta = rng::gaussian_vec(&mut r, map.model().param_dim());
            assert!(fd_check(&map, &theta, 1e-6).unwrap() <= 1e-5);
            assert!(adjoint_defect(&map.jacobian(&theta).unwrap(), 5, 2) <= 1e-10);
        }
    }

    #[test]
    fn input_jacobians_match_fd() {
        let models: Vec<Arc<dyn Model>> = vec![
            Arc::new(LinearModel::new(3, 2, Features::Affine).unwrap()),
            Arc::new(RandomFeatures::new(3, 6, 2, 1).unwrap()),
            Arc::new(ShallowNet::new(3, 6, 2).unwrap()),
        ];
        let mut r = rng::seeded(2);
        for m in models {
            for _ in 0..10 {
                let theta = rng::gaussian_vec(&mut r, m.param_dim());
                let x = rng::gaussian_vec(&mut r, 3);
                let j = m.input_jacobian(&x, &theta).unwrap();
                let h = 1e-6;
                for k in 0..3 {
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[k] += h;
                    xm[k] -= h;
                    let (fp, fm) = (m.value(&xp, &theta).unwrap(), m.value(&xm, &theta).unwrap());
                    for o in 0..2 {
                        let fd = (fp[o] - fm[o]) / (2.0 * h);
                        assert!((fd - j[(o, k)]).abs() <= 1e-6 * (1.0 + fd.abs()), "{}", m.name());
                    }
                }
            }
        }
    }

    #[test]
    fn planted_jacobian_bug_is_caught() {
        let m = MisreportedJacobian {
            inner: ShallowNet::new(2, 4, 1).unwrap(),
            factor: 2.0,
        };
        let theta = m.init(0);
        let map = induced(m, data(&[&[1.0, 0.5], &[-0.3, 0.2]]));
        let e = fd_check(&map, &theta, 1e-6).unwrap();
        assert!((e - 0.5).abs() < 1e-3, "{e}");
    }

    #[test]
    fn linear_discriminator_jacobian() {
        let gm = GanModel {
            disc: LinearDiscriminator::new(2).unwrap(),
        };
        let j = gm.jacobian(&[3.0, -1.0], &[0.5, 0.25]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(3, 2, &[3.0, -1.0, 1.0, 0.0, 0.0, 1.0]));
        assert_eq!(gm.value(&[3.0, -1.0], &[0.5, 0.25]).unwrap(), vec![1.25, 0.5, 0.25]);
    }

    #[test]
    fn discriminator_models_pass_fd() {
        let d = data(&[&[1.0, 0.5], &[-0.3, 0.2], &[0.4, -0.9]]);
        for sigmoid in [false, true] {
            let map = induced(
                GanModel {
                    disc: ShallowDiscriminator::new(2, 5, sigmoid).unwrap(),
                },
                d.clone(),
            );
            let mut r = rng::seeded(11);
            for _ in 0..50 {
                let theta = rng::gaussian_vec(&mut r, map.model().param_dim());
                let e = fd_check(&map, &theta, 1e-6).unwrap();
                assert!(e <= 1e-5, "sigmoid={sigmoid}: {e}");
            }
        }
    }

    #[test]
    fn vae_model_chain_rule() {
        let enc = ShallowNet::new(2, 4, 2).unwrap();
        let dec = ShallowNet::new(1, 3, 2).unwrap();
        let vae = VaeModel::new(enc, dec, 1).unwrap();
        assert_eq!((vae.input_dim(), vae.output_dim()), (3, 4));
        let d = data(&[&[1.0, 0.5, 0.3], &[-0.3, 0.2, -1.2], &[0.4, -0.9, 0.0]]);
        let map = induced(vae, d);
        let mut r = rng::seeded(12);
        for _ in 0..50 {
            let theta: Vec<f64> = rng::gaussian_vec(&mut r, map.model().param_dim())
                .iter()
                .map(|v| 0.7 * v)
                .collect();
            assert!(fd_check(&map, &theta, 1e-6).unwrap() <= 1e-5);
        }
        assert!(matches!(
            VaeModel::new(ShallowNet::new(2, 4, 3).unwrap(), ShallowNet::new(1, 3, 2).unwrap(), 1),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn per_sample_aggregate_dominates_bj() {
        let d = Arc::new(
            Dataset::new(
                vec![
                    Sample::new(vec![1.0, 0.5]),
                    Sample::new(vec![-0.3, 0.2]),
                    Sample::new(vec![0.4, -0.9]),
                ],
                vec![0.5, 0.3, 0.2],
            )
            .unwrap(),
        );
        let map = induced(ShallowNet::new(2, 6, 1).unwrap(), d);
        let theta = map.model().init(3);
        let ball = Ball::new(theta, 1.0).unwrap();
        let bj = estimate_bj(&map, &ball, 30, 5).unwrap();
        let agg = map.aggregated_bj(&ball, 30, 5).unwrap();
        assert!(bj.value <= agg.value * (1.0 + 1e-12), "{} vs {}", bj.value, agg.value);
    }
}
