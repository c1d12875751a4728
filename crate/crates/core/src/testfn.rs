//! Smooth test functions with closed-form partials.
//!
//! Gradients use `out[i] = d_i f`, Hessians `out[i * d + j] = d_i d_j f`.

use std::sync::Arc;

use crate::basis::hermite::{basis_values, hermite_derivatives_1d, BasisJet};
use crate::basis::multi_index::MultiIndex;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sobolev::CoeffVector;

/// Closed ball `{|x - center| <= radius}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball<T> {
    pub center: Vec<T>,
    pub radius: T,
}

impl<T: Real> Ball<T> {
    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        (
            self.center.iter().map(|&c| c - self.radius).collect(),
            self.center.iter().map(|&c| c + self.radius).collect(),
        )
    }

    pub fn contains(&self, x: &[T]) -> bool {
        distance(x, &self.center) <= self.radius
    }
}

pub(crate) fn distance<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt()
}

pub trait TestFunction<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[T]) -> T;

    fn gradient(&self, _x: &[T], _out: &mut [T]) -> Result<()> {
        Err(Error::MissingPartials(1))
    }

    fn hessian(&self, _x: &[T], _out: &mut [T]) -> Result<()> {
        Err(Error::MissingPartials(2))
    }

    /// Highest order of partials available.
    fn derivative_order(&self) -> usize;

    /// A ball containing the support, for compactly supported functions.
    fn support(&self) -> Option<Ball<T>> {
        None
    }
}

/// `a exp(-1 / (1 - |x - c|^2 / s^2))` inside `|x - c| < s`, zero outside.
#[derive(Clone, Debug, PartialEq)]
pub struct Bump<T> {
    pub amplitude: T,
    pub center: Vec<T>,
    pub scale: T,
}

impl<T: Real> Bump<T> {
    pub fn new(amplitude: T, center: Vec<T>, scale: T) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidArgument("bump needs a center".into()));
        }
        if !(scale > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "bump scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            amplitude,
            center,
            scale,
        })
    }

    pub fn centered_1d(amplitude: T, center: T, scale: T) -> Result<Self> {
        Self::new(amplitude, vec![center], scale)
    }

    // (u, y) with y = x - c and u = |y|^2 / s^2
    fn local(&self, x: &[T]) -> (T, Vec<T>) {
        let y: Vec<T> = x.iter().zip(&self.center).map(|(&a, &c)| a - c).collect();
        let u = y.iter().map(|&v| v * v).sum::<T>() / (self.scale * self.scale);
        (u, y)
    }
}

impl<T: Real> TestFunction<T> for Bump<T> {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[T]) -> T {
        let (u, _) = self.local(x);
        if u >= T::one() {
            return T::zero();
        }
        self.amplitude * (-T::one() / (T::one() - u)).exp()
    }

    fn gradient(&self, x: &[T], out: &mut [T]) -> Result<()> {
        let (u, y) = self.local(x);
        if u >= T::one() {
            out.iter_mut().for_each(|v| *v = T::zero());
            return Ok(());
        }
        let w = T::one() - u;
        let g = self.amplitude * (-T::one() / w).exp();
        // d/du of -1/(1-u)
        let q = -T::one() / (w * w);
        let s2 = self.scale * self.scale;
        for (o, &yi) in out.iter_mut().zip(&y) {
            *o = g * q * T::lit(2.0) * yi / s2;
        }
        Ok(())
    }

    fn hessian(&self, x: &[T], out: &mut [T]) -> Result<()> {
        let d = self.dim();
        let (u, y) = self.local(x);
        if u >= T::one() {
            out.iter_mut().for_each(|v| *v = T::zero());
            return Ok(());
        }
        let two = T::lit(2.0);
        let w = T::one() - u;
        let g = self.amplitude * (-T::one() / w).exp();
        let q = -T::one() / (w * w);
        let dq = -two / (w * w * w);
        let s2 = self.scale * self.scale;
        for i in 0..d {
            for j in 0..d {
                let mut v = g * (q * q + dq) * T::lit(4.0) * y[i] * y[j] / (s2 * s2);
                if i == j {
                    v = v + g * q * two / s2;
                }
                out[i * d + j] = v;
            }
        }
        Ok(())
    }

    fn derivative_order(&self) -> usize {
        2
    }

    fn support(&self) -> Option<Ball<T>> {
        Some(Ball {
            center: self.center.clone(),
            radius: self.scale,
        })
    }
}

/// The tensor Hermite function `h_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteFunction {
    pub index: MultiIndex,
}

impl HermiteFunction {
    pub fn new(index: MultiIndex) -> Self {
        Self { index }
    }

    pub fn one_d(k: usize) -> Self {
        Self::new(MultiIndex::new(vec![k]))
    }

    fn axis_tables<T: Real>(&self, x: &[T]) -> Vec<[T; 3]> {
        self.index
            .entries()
            .iter()
            .zip(x)
            .map(|(&k, &xi)| {
                let v = hermite_derivatives_1d(k, xi, 0)[k];
                let d1 = hermite_derivatives_1d(k, xi, 1)[k];
                // h'' = (x^2 - (2k + 1)) h
                let d2 = (xi * xi - T::from_count(2 * k + 1)) * v;
                [v, d1, d2]
            })
            .collect()
    }
}

impl<T: Real> TestFunction<T> for HermiteFunction {
    fn dim(&self) -> usize {
        self.index.dim()
    }

    fn value(&self, x: &[T]) -> T {
        self.axis_tables(x).iter().fold(T::one(), |acc, t| acc * t[0])
    }

    fn gradient(&self, x: &[T], out: &mut [T]) -> Result<()> {
        let tables = self.axis_tables(x);
        for (i, o) in out.iter_mut().enumerate() {
            *o = tables
                .iter()
                .enumerate()
                .fold(T::one(), |acc, (a, t)| acc * t[usize::from(a == i)]);
        }
        Ok(())
    }

    fn hessian(&self, x: &[T], out: &mut [T]) -> Result<()> {
        let d = self.index.dim();
        let tables = self.axis_tables(x);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = tables.iter().enumerate().fold(T::one(), |acc, (a, t)| {
                    acc * t[usize::from(a == i) + usize::from(a == j)]
                });
            }
        }
        Ok(())
    }

    fn derivative_order(&self) -> usize {
        2
    }
}

/// `x_axis`
#[derive(Clone, Debug, PartialEq)]
pub struct Coordinate {
    pub dim: usize,
    pub axis: usize,
}

impl<T: Real> TestFunction<T> for Coordinate {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[T]) -> T {
        x[self.axis]
    }

    fn gradient(&self, _x: &[T], out: &mut [T]) -> Result<()> {
        for (i, o) in out.iter_mut().enumerate() {
            *o = if i == self.axis { T::one() } else { T::zero() };
        }
        Ok(())
    }

    fn hessian(&self, _x: &[T], out: &mut [T]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = T::zero());
        Ok(())
    }

    fn derivative_order(&self) -> usize {
        2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constant<T> {
    pub dim: usize,
    pub value: T,
}

impl<T: Real> TestFunction<T> for Constant<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _x: &[T]) -> T {
        self.value
    }

    fn gradient(&self, _x: &[T], out: &mut [T]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = T::zero());
        Ok(())
    }

    fn hessian(&self, _x: &[T], out: &mut [T]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = T::zero());
        Ok(())
    }

    fn derivative_order(&self) -> usize {
        2
    }
}

/// `sum_i c_i f_i`
#[derive(Clone)]
pub struct LinearCombination<T> {
    terms: Vec<(T, Arc<dyn TestFunction<T>>)>,
}

impl<T: Real> LinearCombination<T> {
    pub fn new(terms: Vec<(T, Arc<dyn TestFunction<T>>)>) -> Result<Self> {
        let dim = terms
            .first()
            .map(|t| t.1.dim())
            .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?;
        if let Some(bad) = terms.iter().find(|t| t.1.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.1.dim(),
            });
        }
        Ok(Self { terms })
    }

    fn accumulate(&self, out: &mut [T], f: impl Fn(&dyn TestFunction<T>, &mut [T]) -> Result<()>) -> Result<()> {
        let mut scratch = vec![T::zero(); out.len()];
        out.iter_mut().for_each(|v| *v = T::zero());
        for (c, term) in &self.terms {
            f(term.as_ref(), &mut scratch)?;
            for (o, &s) in out.iter_mut().zip(&scratch) {
                *o = *o + *c * s;
            }
        }
        Ok(())
    }
}

impl<T: Real> TestFunction<T> for LinearCombination<T> {
    fn dim(&self) -> usize {
        self.terms[0].1.dim()
    }

    fn value(&self, x: &[T]) -> T {
        self.terms.iter().map(|(c, f)| *c * f.value(x)).sum()
    }

    fn gradient(&self, x: &[T], out: &mut [T]) -> Result<()> {
        self.accumulate(out, |f, o| f.gradient(x, o))
    }

    fn hessian(&self, x: &[T], out: &mut [T]) -> Result<()> {
        self.accumulate(out, |f, o| f.hessian(x, o))
    }

    fn derivative_order(&self) -> usize {
        self.terms.iter().map(|t| t.1.derivative_order()).min().unwrap_or(0)
    }

    fn support(&self) -> Option<Ball<T>> {
        let balls: Option<Vec<Ball<T>>> = self.terms.iter().map(|t| t.1.support()).collect();
        let balls = balls?;
        // ball around the centroid of the term centers, wide enough for every term
        let d = self.dim();
        let n = T::from_count(balls.len());
        let center: Vec<T> = (0..d)
            .map(|i| balls.iter().map(|b| b.center[i]).sum::<T>() / n)
            .collect();
        let radius = balls
            .iter()
            .map(|b| distance(&b.center, &center) + b.radius)
            .fold(T::zero(), T::max);
        Some(Ball { center, radius })
    }
}

type ValueFn<T> = dyn Fn(&[T]) -> T + Send + Sync;
type PartialFn<T> = dyn Fn(&[T], &mut [T]) + Send + Sync;

/// A test function assembled from closures; partials are optional.
#[derive(Clone)]
pub struct FnTestFunction<T> {
    dim: usize,
    value: Arc<ValueFn<T>>,
    gradient: Option<Arc<PartialFn<T>>>,
    hessian: Option<Arc<PartialFn<T>>>,
    support: Option<Ball<T>>,
}

impl<T: Real> FnTestFunction<T> {
    pub fn new(dim: usize, value: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            gradient: None,
            hessian: None,
            support: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn with_support(mut self, ball: Ball<T>) -> Self {
        self.support = Some(ball);
        self
    }
}

impl<T: Real> TestFunction<T> for FnTestFunction<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[T]) -> T {
        (self.value)(x)
    }

    fn gradient(&self, x: &[T], out: &mut [T]) -> Result<()> {
        let g = self.gradient.as_ref().ok_or(Error::MissingPartials(1))?;
        g(x, out);
        Ok(())
    }

    fn hessian(&self, x: &[T], out: &mut [T]) -> Result<()> {
        let h = self.hessian.as_ref().ok_or(Error::MissingPartials(2))?;
        h(x, out);
        Ok(())
    }

    fn derivative_order(&self) -> usize {
        match (&self.gradient, &self.hessian) {
            (Some(_), Some(_)) => 2,
            (Some(_), None) => 1,
            _ => 0,
        }
    }

    fn support(&self) -> Option<Ball<T>> {
        self.support.clone()
    }
}

/// The function `sum_k c_k h_k` represented by a coefficient vector.
#[derive(Clone, Debug)]
pub struct Expansion<T> {
    coeffs: CoeffVector<T>,
}

impl<T: Real> Expansion<T> {
    pub fn new(coeffs: CoeffVector<T>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &CoeffVector<T> {
        &self.coeffs
    }
}

impl<T: Real> TestFunction<T> for Expansion<T> {
    fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    fn value(&self, x: &[T]) -> T {
        basis_values(&self.coeffs.index_set(), x)
            .iter()
            .zip(self.coeffs.values())
            .map(|(&h, &c)| h * c)
            .sum()
    }

    fn gradient(&self, x: &[T], out: &mut [T]) -> Result<()> {
        let jet = BasisJet::at(&self.coeffs.index_set(), x);
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate() {
            *o = self
                .coeffs
                .values()
                .iter()
                .enumerate()
                .map(|(pos, &c)| c * jet.gradients[pos * d + i])
                .sum();
        }
        Ok(())
    }

    fn hessian(&self, x: &[T], out: &mut [T]) -> Result<()> {
        let jet = BasisJet::at(&self.coeffs.index_set(), x);
        let d = self.dim();
        for (ij, o) in out.iter_mut().enumerate() {
            *o = self
                .coeffs
                .values()
                .iter()
                .enumerate()
                .map(|(pos, &c)| c * jet.hessians[pos * d * d + ij])
                .sum();
        }
        Ok(())
    }

    fn derivative_order(&self) -> usize {
        2
    }
}
