//! The transition semigroup `S_t f(x) = E f(X(t, x))` and its dual
//! `S_t* psi = E Z_t(psi)`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::basis::quadrature::{gauss_legendre_rule, QuadratureRule};
use crate::error::{Error, Result};
use crate::flow::{grid_steps, propagate, simulate_flow};
use crate::model::{OrnsteinUhlenbeck, SdeModel};
use crate::rng::{nested_stream_id, stream_id, BrownianPath, StreamPurpose};
use crate::scalar::Real;
use crate::sobolev::CoeffVector;
use crate::testfn::TestFunction;

use super::initial::DiscreteInitial;

/// A Monte Carlo mean with its standard error (zero for closed forms).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub std_error: T,
}

impl<T: Real> Estimate<T> {
    pub fn exact(value: T) -> Self {
        Self {
            value,
            std_error: T::zero(),
        }
    }

    /// Sample mean and standard error of the mean (`samples.len() >= 2`).
    pub fn from_samples(samples: &[T]) -> Self {
        let m = samples.len();
        debug_assert!(m >= 2);
        let mf = T::from_count(m);
        let mean = samples.iter().copied().sum::<T>() / mf;
        let var = samples.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::from_count(m - 1);
        Self {
            value: mean,
            std_error: (var / mf).sqrt(),
        }
    }
}

fn check_paths(paths: usize) -> Result<()> {
    if paths < 2 {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo estimates need at least 2 paths, got {paths}"
        )));
    }
    Ok(())
}

/// `S_t f(x)` from `paths` independent Euler–Maruyama paths.
pub fn semigroup_apply<T: Real>(
    f: &(dyn Fn(&[T]) -> T + Sync),
    model: &dyn SdeModel<T>,
    t: T,
    x: &[T],
    dt: T,
    paths: usize,
    seed: u64,
) -> Result<Estimate<T>> {
    check_paths(paths)?;
    let steps = grid_steps(t, dt)?;
    if steps == 0 {
        return Ok(Estimate::exact(f(x)));
    }
    let samples = (0..paths)
        .into_par_iter()
        .map(|m| {
            let stream = stream_id(m as u64, StreamPurpose::Semigroup);
            let path = BrownianPath::generate(seed, stream, model.noise_dim(), steps, dt)?;
            let (xt, _) = propagate(model, x, &path, 0, steps)?;
            Ok(f(&xt))
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(Estimate::from_samples(&samples))
}

/// Identifies the inner ensemble of a nested estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InnerKey {
    pub outer: u64,
    pub time_index: u64,
}

/// Weighted evaluations of `S_u phi` and its gradient for one fixed `phi`.
pub trait SemigroupOracle<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    /// `sum_j w_j (S_u phi)(y_j)`
    fn weighted_values(&self, u: T, points: &[T], weights: &[T], key: InnerKey) -> Result<Estimate<T>>;

    /// `sum_j v_j . grad (S_u phi)(y_j)` with `directions[j * d + l] = (v_j)_l`.
    fn weighted_gradients(&self, u: T, points: &[T], directions: &[T], key: InnerKey) -> Result<Estimate<T>>;
}

fn check_points<T>(dim: usize, points: &[T], per_point: &[T], stride: usize) -> Result<usize> {
    let count = points.len() / dim;
    if !points.len().is_multiple_of(dim) || per_point.len() != count * stride {
        return Err(Error::ShapeMismatch(format!(
            "{} coordinates and {} weights for dimension {dim}",
            points.len(),
            per_point.len()
        )));
    }
    Ok(count)
}

/// `phi(x) = x_axis` under the Ornstein–Uhlenbeck model:
/// `S_u phi(y) = e^{-lambda u} y_axis`.
#[derive(Clone, Debug)]
pub struct OuLinearSemigroup<T> {
    pub ou: OrnsteinUhlenbeck<T>,
    pub axis: usize,
}

impl<T: Real> SemigroupOracle<T> for OuLinearSemigroup<T> {
    fn dim(&self) -> usize {
        self.ou.dim()
    }

    fn weighted_values(&self, u: T, points: &[T], weights: &[T], _key: InnerKey) -> Result<Estimate<T>> {
        let d = self.dim();
        let count = check_points(d, points, weights, 1)?;
        let decay = self.ou.decay(u);
        Ok(Estimate::exact(
            (0..count).map(|j| weights[j] * decay * points[j * d + self.axis]).sum(),
        ))
    }

    fn weighted_gradients(&self, u: T, points: &[T], directions: &[T], _key: InnerKey) -> Result<Estimate<T>> {
        let d = self.dim();
        let count = check_points(d, points, directions, d)?;
        let decay = self.ou.decay(u);
        Ok(Estimate::exact(
            (0..count).map(|j| decay * directions[j * d + self.axis]).sum(),
        ))
    }
}

/// `S_u phi = phi * N(0, u I)` for the Brownian model, by Gauss–Legendre
/// quadrature over the support of `phi` intersected with an 8-sigma window.
pub struct GaussianConvolution<T: Real> {
    phi: Arc<dyn TestFunction<T>>,
    /// Gauss–Legendre rule on `[-1, 1]`, mapped onto each window.
    reference: QuadratureRule<T>,
}

/// Standard deviations covered on each side of the convolution window.
const WINDOW_SIGMAS: f64 = 8.0;

impl<T: Real> GaussianConvolution<T> {
    pub fn new(phi: Arc<dyn TestFunction<T>>, nodes_per_axis: usize) -> Result<Self> {
        Ok(Self {
            phi,
            reference: gauss_legendre_rule(nodes_per_axis, -T::one(), T::one())?,
        })
    }

    // sum_q w_q g(z_q) N(z_q - y; u) over the window around y
    fn convolve(&self, u: T, y: &[T], mut g: impl FnMut(&[T], T)) {
        let d = y.len();
        let half = T::lit(WINDOW_SIGMAS) * u.sqrt();
        let mut lo: Vec<T> = y.iter().map(|&v| v - half).collect();
        let mut hi: Vec<T> = y.iter().map(|&v| v + half).collect();
        if let Some(ball) = self.phi.support() {
            let (blo, bhi) = ball.bounding_box();
            for i in 0..d {
                lo[i] = lo[i].max(blo[i]);
                hi[i] = hi[i].min(bhi[i]);
                if lo[i] >= hi[i] {
                    return;
                }
            }
        }
        let two = T::lit(2.0);
        let norm = (two * T::PI() * u).powf(-T::from_count(d) / two);
        let n = self.reference.len();
        let (nodes, weights) = (self.reference.nodes(), self.reference.weights());
        let mut z = vec![T::zero(); d];
        let mut idx = vec![0usize; d];
        loop {
            let mut w = norm;
            let mut r2 = T::zero();
            for i in 0..d {
                let (c, h) = ((lo[i] + hi[i]) / two, (hi[i] - lo[i]) / two);
                z[i] = c + h * nodes[idx[i]];
                w = w * h * weights[idx[i]];
                r2 = r2 + (z[i] - y[i]) * (z[i] - y[i]);
            }
            g(&z, w * (-r2 / (two * u)).exp());
            let mut axis = 0;
            loop {
                if axis == d {
                    return;
                }
                idx[axis] += 1;
                if idx[axis] < n {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    }
}

impl<T: Real> SemigroupOracle<T> for GaussianConvolution<T> {
    fn dim(&self) -> usize {
        self.phi.dim()
    }

    fn weighted_values(&self, u: T, points: &[T], weights: &[T], _key: InnerKey) -> Result<Estimate<T>> {
        let d = self.dim();
        let count = check_points(d, points, weights, 1)?;
        let mut total = T::zero();
        for j in 0..count {
            let y = &points[j * d..(j + 1) * d];
            if u == T::zero() {
                total = total + weights[j] * self.phi.value(y);
                continue;
            }
            let mut acc = T::zero();
            self.convolve(u, y, |z, w| acc = acc + w * self.phi.value(z));
            total = total + weights[j] * acc;
        }
        Ok(Estimate::exact(total))
    }

    fn weighted_gradients(&self, u: T, points: &[T], directions: &[T], _key: InnerKey) -> Result<Estimate<T>> {
        let d = self.dim();
        let count = check_points(d, points, directions, d)?;
        let mut grad = vec![T::zero(); d];
        let mut total = T::zero();
        for j in 0..count {
            let y = &points[j * d..(j + 1) * d];
            let v = &directions[j * d..(j + 1) * d];
            if u == T::zero() {
                self.phi.gradient(y, &mut grad)?;
                total = total + v.iter().zip(&grad).map(|(&a, &b)| a * b).sum::<T>();
                continue;
            }
            let mut failure = None;
            self.convolve(u, y, |z, w| {
                if let Err(e) = self.phi.gradient(z, &mut grad) {
                    failure = Some(e);
                    return;
                }
                total = total + w * v.iter().zip(&grad).map(|(&a, &b)| a * b).sum::<T>();
            });
            if let Some(e) = failure {
                return Err(e);
            }
        }
        Ok(Estimate::exact(total))
    }
}

/// Nested Monte Carlo: `inner_paths` fresh inner ensembles per call, keyed by
/// `(outer, time index, replica)`. Gradients use the pathwise derivative
/// `grad S_u phi(y) = E[J(u, y)^T grad phi(X(u, y))]`.
pub struct MonteCarloSemigroup<T: Real> {
    model: Arc<dyn SdeModel<T>>,
    phi: Arc<dyn TestFunction<T>>,
    dt: T,
    inner_paths: usize,
    seed: u64,
}

impl<T: Real> MonteCarloSemigroup<T> {
    pub fn new(
        model: Arc<dyn SdeModel<T>>,
        phi: Arc<dyn TestFunction<T>>,
        dt: T,
        inner_paths: usize,
        seed: u64,
    ) -> Result<Self> {
        check_paths(inner_paths)?;
        if phi.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                found: phi.dim(),
            });
        }
        Ok(Self {
            model,
            phi,
            dt,
            inner_paths,
            seed,
        })
    }

    pub fn inner_paths(&self) -> usize {
        self.inner_paths
    }

    fn replicas(
        &self,
        u: T,
        key: InnerKey,
        sample: impl Fn(&BrownianPath<T>, usize) -> Result<T> + Sync,
    ) -> Result<Estimate<T>> {
        let steps = grid_steps(u, self.dt)?;
        let samples = (0..self.inner_paths)
            .into_par_iter()
            .map(|r| {
                let stream = nested_stream_id(key.outer, key.time_index, r as u64);
                let path = BrownianPath::generate(self.seed, stream, self.model.noise_dim(), steps, self.dt)?;
                sample(&path, steps)
            })
            .collect::<Result<Vec<T>>>()?;
        Ok(Estimate::from_samples(&samples))
    }
}

impl<T: Real> SemigroupOracle<T> for MonteCarloSemigroup<T> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn weighted_values(&self, u: T, points: &[T], weights: &[T], key: InnerKey) -> Result<Estimate<T>> {
        let d = self.dim();
        let count = check_points(d, points, weights, 1)?;
        let model = self.model.as_ref();
        self.replicas(u, key, |path, steps| {
            let mut acc = T::zero();
            for j in 0..count {
                if weights[j] == T::zero() {
                    continue;
                }
                let (x, _) = propagate(model, &points[j * d..(j + 1) * d], path, 0, steps)?;
                acc = acc + weights[j] * self.phi.value(&x);
            }
            Ok(acc)
        })
    }

    fn weighted_gradients(&self, u: T, points: &[T], directions: &[T], key: InnerKey) -> Result<Estimate<T>> {
        let d = self.dim();
        let count = check_points(d, points, directions, d)?;
        let model = self.model.as_ref();
        self.replicas(u, key, |path, steps| {
            let mut grad = vec![T::zero(); d];
            let mut acc = T::zero();
            for j in 0..count {
                let v = &directions[j * d..(j + 1) * d];
                if v.iter().all(|&c| c == T::zero()) {
                    continue;
                }
                let (x, jac) = propagate(model, &points[j * d..(j + 1) * d], path, 0, steps)?;
                self.phi.gradient(&x, &mut grad)?;
                for l in 0..d {
                    let dl: T = (0..d).map(|i| grad[i] * jac[i * d + l]).sum();
                    acc = acc + v[l] * dl;
                }
            }
            Ok(acc)
        })
    }
}

/// Monte Carlo estimate of the coefficients of `S_t* psi` with per-coefficient
/// standard errors.
#[derive(Clone, Debug)]
pub struct DualCoeffs<T> {
    pub mean: CoeffVector<T>,
    pub std_errors: Vec<T>,
}

/// Average of the time-`t` coefficients of `Z_t(psi)` over `ensembles`
/// independent outer ensembles (ids `0..ensembles`).
pub fn dual_semigroup_coeffs<T: Real>(
    discrete: &DiscreteInitial<T>,
    model: Arc<dyn SdeModel<T>>,
    t: T,
    trunc: usize,
    dt: T,
    ensembles: usize,
    seed: u64,
) -> Result<DualCoeffs<T>> {
    check_paths(ensembles)?;
    let steps = grid_steps(t, dt)?;
    if steps == 0 {
        let proj = discrete.source().projection(trunc, super::initial::DEFAULT_PSI_NODES)?;
        let zeros = vec![T::zero(); proj.len()];
        return Ok(DualCoeffs {
            mean: proj,
            std_errors: zeros,
        });
    }
    let samples = (0..ensembles)
        .into_par_iter()
        .map(|m| {
            let ens = simulate_flow(model.clone(), discrete.nodes(), t, dt, seed, m as u64)?;
            discrete.coefficients(&ens, steps, trunc)
        })
        .collect::<Result<Vec<_>>>()?;
    let len = samples[0].len();
    let mut mean = Vec::with_capacity(len);
    let mut std_errors = Vec::with_capacity(len);
    let mut column = vec![T::zero(); ensembles];
    for k in 0..len {
        for (c, s) in column.iter_mut().zip(&samples) {
            *c = s.values()[k];
        }
        let e = Estimate::from_samples(&column);
        mean.push(e.value);
        std_errors.push(e.std_error);
    }
    Ok(DualCoeffs {
        mean: CoeffVector::from_values(discrete.dim(), trunc, mean)?,
        std_errors,
    })
}
