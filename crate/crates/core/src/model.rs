//! SDE coefficients `dX = b(X) dt + sigma(X) dB` with closed-form partials.
//!
//! Flat layouts, with `d` the state dimension and `r` the noise dimension:
//! `drift_jacobian[i * d + j] = d_j b_i`, `diffusion[i * r + k] = sigma_ik`,
//! `diffusion_gradient[(i * r + k) * d + j] = d_j sigma_ik` and
//! `diffusion_hessian[((i * r + k) * d + j) * d + l] = d_j d_l sigma_ik`.

use std::fmt;
use std::sync::Arc;

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    Gaussian,
    Ou,
    Trig,
    Frozen,
    Custom,
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Gaussian => "gaussian",
            ModelFamily::Ou => "ou",
            ModelFamily::Trig => "trig",
            ModelFamily::Frozen => "frozen",
            ModelFamily::Custom => "custom",
        })
    }
}

pub trait SdeModel<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn noise_dim(&self) -> usize;

    fn family(&self) -> ModelFamily;

    fn drift(&self, x: &[T], out: &mut [T]);

    fn drift_jacobian(&self, x: &[T], out: &mut [T]);

    fn diffusion(&self, x: &[T], out: &mut [T]);

    fn diffusion_gradient(&self, x: &[T], out: &mut [T]);

    fn diffusion_hessian(&self, x: &[T], out: &mut [T]);

    /// `K` with `|sigma(x)| + |b(x)| <= K (1 + |x|)` (Frobenius norm for sigma).
    fn growth_constant(&self) -> T;

    /// True when sigma does not depend on `x`.
    fn additive_noise(&self) -> bool {
        false
    }
}

/// Every coefficient and partial of a model evaluated at one point.
#[derive(Clone, Debug)]
pub struct ModelJet<T> {
    pub dim: usize,
    pub noise_dim: usize,
    pub drift: Vec<T>,
    pub drift_jacobian: Vec<T>,
    pub diffusion: Vec<T>,
    pub diffusion_gradient: Vec<T>,
    pub diffusion_hessian: Vec<T>,
}

impl<T: Real> ModelJet<T> {
    pub fn at(model: &dyn SdeModel<T>, x: &[T]) -> Self {
        let (d, r) = (model.dim(), model.noise_dim());
        let mut jet = Self {
            dim: d,
            noise_dim: r,
            drift: vec![T::zero(); d],
            drift_jacobian: vec![T::zero(); d * d],
            diffusion: vec![T::zero(); d * r],
            diffusion_gradient: vec![T::zero(); d * r * d],
            diffusion_hessian: vec![T::zero(); d * r * d * d],
        };
        model.drift(x, &mut jet.drift);
        model.drift_jacobian(x, &mut jet.drift_jacobian);
        model.diffusion(x, &mut jet.diffusion);
        model.diffusion_gradient(x, &mut jet.diffusion_gradient);
        model.diffusion_hessian(x, &mut jet.diffusion_hessian);
        jet
    }

    #[inline]
    pub fn sigma(&self, i: usize, k: usize) -> T {
        self.diffusion[i * self.noise_dim + k]
    }

    /// `d_j sigma_ik`
    #[inline]
    pub fn dsigma(&self, i: usize, k: usize, j: usize) -> T {
        self.diffusion_gradient[(i * self.noise_dim + k) * self.dim + j]
    }

    /// `d_j d_l sigma_ik`
    #[inline]
    pub fn d2sigma(&self, i: usize, k: usize, j: usize, l: usize) -> T {
        self.diffusion_hessian[((i * self.noise_dim + k) * self.dim + j) * self.dim + l]
    }

    /// `d_j b_i`
    #[inline]
    pub fn db(&self, i: usize, j: usize) -> T {
        self.drift_jacobian[i * self.dim + j]
    }

    /// `a_ij = sum_k sigma_ik sigma_jk`
    pub fn a(&self, i: usize, j: usize) -> T {
        (0..self.noise_dim).map(|k| self.sigma(i, k) * self.sigma(j, k)).sum()
    }

    /// `d_l a_ij`
    pub fn da(&self, i: usize, j: usize, l: usize) -> T {
        (0..self.noise_dim)
            .map(|k| self.dsigma(i, k, l) * self.sigma(j, k) + self.sigma(i, k) * self.dsigma(j, k, l))
            .sum()
    }

    /// `d_l d_m a_ij`
    pub fn d2a(&self, i: usize, j: usize, l: usize, m: usize) -> T {
        (0..self.noise_dim)
            .map(|k| {
                self.d2sigma(i, k, l, m) * self.sigma(j, k)
                    + self.dsigma(i, k, l) * self.dsigma(j, k, m)
                    + self.dsigma(i, k, m) * self.dsigma(j, k, l)
                    + self.sigma(i, k) * self.d2sigma(j, k, l, m)
            })
            .sum()
    }
}

fn fill_identity<T: Real>(out: &mut [T], d: usize, scale: T) {
    out.iter_mut().for_each(|v| *v = T::zero());
    for i in 0..d {
        out[i * d + i] = scale;
    }
}

fn zero<T: Real>(out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::zero());
}

/// `b = 0`, `sigma = I`: the flow is the translation `x + B_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianModel {
    dim: usize,
}

impl GaussianModel {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        Self { dim }
    }
}

impl<T: Real> SdeModel<T> for GaussianModel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.dim
    }
    fn family(&self) -> ModelFamily {
        ModelFamily::Gaussian
    }
    fn drift(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn drift_jacobian(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn diffusion(&self, _x: &[T], out: &mut [T]) {
        fill_identity(out, self.dim, T::one())
    }
    fn diffusion_gradient(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn diffusion_hessian(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn growth_constant(&self) -> T {
        T::from_count(self.dim).sqrt()
    }
    fn additive_noise(&self) -> bool {
        true
    }
}

/// `b = -lambda x`, `sigma = s I`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrnsteinUhlenbeck<T> {
    dim: usize,
    pub lambda: T,
    pub s: T,
}

impl<T: Real> OrnsteinUhlenbeck<T> {
    pub fn new(dim: usize, lambda: T, s: T) -> Self {
        assert!(dim >= 1);
        Self { dim, lambda, s }
    }

    /// `e^{-lambda t}`
    pub fn decay(&self, t: T) -> T {
        (-self.lambda * t).exp()
    }
}

impl<T: Real> SdeModel<T> for OrnsteinUhlenbeck<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.dim
    }
    fn family(&self) -> ModelFamily {
        ModelFamily::Ou
    }
    fn drift(&self, x: &[T], out: &mut [T]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = -self.lambda * xi;
        }
    }
    fn drift_jacobian(&self, _x: &[T], out: &mut [T]) {
        fill_identity(out, self.dim, -self.lambda)
    }
    fn diffusion(&self, _x: &[T], out: &mut [T]) {
        fill_identity(out, self.dim, self.s)
    }
    fn diffusion_gradient(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn diffusion_hessian(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn growth_constant(&self) -> T {
        self.lambda.abs() + self.s.abs() * T::from_count(self.dim).sqrt()
    }
    fn additive_noise(&self) -> bool {
        true
    }
}

/// Scalar model `sigma(x) = 1 + amplitude sin x`, `b(x) = drift_amplitude sin x`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigModel<T> {
    pub amplitude: T,
    pub drift_amplitude: T,
}

impl<T: Real> TrigModel<T> {
    pub fn new(amplitude: T, drift_amplitude: T) -> Self {
        Self {
            amplitude,
            drift_amplitude,
        }
    }
}

impl<T: Real> Default for TrigModel<T> {
    fn default() -> Self {
        Self::new(T::lit(0.5), T::zero())
    }
}

impl<T: Real> SdeModel<T> for TrigModel<T> {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn family(&self) -> ModelFamily {
        ModelFamily::Trig
    }
    fn drift(&self, x: &[T], out: &mut [T]) {
        out[0] = self.drift_amplitude * x[0].sin();
    }
    fn drift_jacobian(&self, x: &[T], out: &mut [T]) {
        out[0] = self.drift_amplitude * x[0].cos();
    }
    fn diffusion(&self, x: &[T], out: &mut [T]) {
        out[0] = T::one() + self.amplitude * x[0].sin();
    }
    fn diffusion_gradient(&self, x: &[T], out: &mut [T]) {
        out[0] = self.amplitude * x[0].cos();
    }
    fn diffusion_hessian(&self, x: &[T], out: &mut [T]) {
        out[0] = -self.amplitude * x[0].sin();
    }
    fn growth_constant(&self) -> T {
        T::one() + self.amplitude.abs() + self.drift_amplitude.abs()
    }
}

/// `b = 0`, `sigma = 0`: every point stays put.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenModel {
    dim: usize,
}

impl FrozenModel {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        Self { dim }
    }
}

impl<T: Real> SdeModel<T> for FrozenModel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.dim
    }
    fn family(&self) -> ModelFamily {
        ModelFamily::Frozen
    }
    fn drift(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn drift_jacobian(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn diffusion(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn diffusion_gradient(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn diffusion_hessian(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn growth_constant(&self) -> T {
        T::zero()
    }
    fn additive_noise(&self) -> bool {
        true
    }
}

/// Keeps the drift of `inner` and sets its dispersion to zero.
#[derive(Clone)]
pub struct DriftOnly<T> {
    inner: Arc<dyn SdeModel<T>>,
}

impl<T: Real> DriftOnly<T> {
    pub fn new(inner: Arc<dyn SdeModel<T>>) -> Self {
        Self { inner }
    }
}

impl<T: Real> SdeModel<T> for DriftOnly<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn family(&self) -> ModelFamily {
        ModelFamily::Custom
    }
    fn drift(&self, x: &[T], out: &mut [T]) {
        self.inner.drift(x, out)
    }
    fn drift_jacobian(&self, x: &[T], out: &mut [T]) {
        self.inner.drift_jacobian(x, out)
    }
    fn diffusion(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn diffusion_gradient(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn diffusion_hessian(&self, _x: &[T], out: &mut [T]) {
        zero(out)
    }
    fn growth_constant(&self) -> T {
        self.inner.growth_constant()
    }
    fn additive_noise(&self) -> bool {
        true
    }
}
