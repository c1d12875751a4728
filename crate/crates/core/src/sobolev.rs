//! Truncated Hermite–Sobolev coordinates.
//!
//! A [`CoeffVector`] stores `<f, h_k>` for every `|k| <= N` in graded-lex
//! order. The `p`-pairing weights shell `|k|` by `(2|k| + d)^{2p}`. Every
//! norm is finite at finite truncation, for negative `p` too: the truncation
//! is the regularization.

use std::io::{BufRead, Write};

use crate::basis::hermite::{basis_derivatives, basis_values, hermite_derivatives_1d};
use crate::basis::multi_index::{IndexSet, MultiIndex};
use crate::basis::quadrature::{QuadratureKind, QuadratureRule};
use crate::error::{Error, Result};
use crate::scalar::{shell_weight, Real};

/// Hermite coefficients of a (truncated) tempered distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffVector<T> {
    dim: usize,
    trunc: usize,
    values: Vec<T>,
}

impl<T: Real> CoeffVector<T> {
    pub fn zeros(dim: usize, trunc: usize) -> Self {
        Self {
            dim,
            trunc,
            values: vec![T::zero(); IndexSet::size(dim, trunc)],
        }
    }

    /// The basis vector for the multi-index at graded-lex `position`.
    pub fn unit(dim: usize, trunc: usize, position: usize) -> Result<Self> {
        let mut v = Self::zeros(dim, trunc);
        if position >= v.values.len() {
            return Err(Error::OutOfRange {
                value: position as f64,
                lo: 0.0,
                hi: (v.values.len() - 1) as f64,
            });
        }
        v.values[position] = T::one();
        Ok(v)
    }

    pub fn from_values(dim: usize, trunc: usize, values: Vec<T>) -> Result<Self> {
        let expected = IndexSet::size(dim, trunc);
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "(d={dim}, N={trunc}) needs {expected} coefficients, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("coefficient {bad} is not finite")));
        }
        Ok(Self { dim, trunc, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trunc(&self) -> usize {
        self.trunc
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn index_set(&self) -> IndexSet {
        IndexSet::new(self.dim, self.trunc).expect("shape validated at construction")
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.trunc != other.trunc {
            return Err(Error::ShapeMismatch(format!(
                "(d={}, N={}) vs (d={}, N={})",
                self.dim, self.trunc, other.dim, other.trunc
            )));
        }
        Ok(())
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: T, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            dim: self.dim,
            trunc: self.trunc,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + alpha * b)
                .collect(),
        })
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            dim: self.dim,
            trunc: self.trunc,
            values: self.values.iter().map(|&v| alpha * v).collect(),
        }
    }

    /// Re-expresses the vector at truncation `trunc`, zero-padding or dropping shells.
    pub fn retruncated(&self, trunc: usize) -> Self {
        if trunc == self.trunc {
            return self.clone();
        }
        let small = trunc.min(self.trunc);
        // graded-lex ordering makes the shells |k| <= small a common prefix
        let keep = IndexSet::size(self.dim, small);
        let mut values = vec![T::zero(); IndexSet::size(self.dim, trunc)];
        values[..keep].copy_from_slice(&self.values[..keep]);
        Self {
            dim: self.dim,
            trunc,
            values,
        }
    }

    /// `sum_k c_k h_k(x)`, the function represented by the coefficients.
    pub fn evaluate(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let basis = basis_values(&self.index_set(), x);
        Ok(basis.iter().zip(&self.values).map(|(&h, &c)| h * c).sum())
    }

    /// Coefficient layout: a header line `dim,trunc,ordering`, its values,
    /// then one coefficient per line in graded-lex order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dim,trunc,ordering")?;
        writeln!(w, "{},{},graded-lex", self.dim, self.trunc)?;
        for v in &self.values {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty coefficient file".into()))??;
        if header.trim() != "dim,trunc,ordering" {
            return Err(Error::Parse(format!("bad coefficient header {header:?}")));
        }
        let meta = lines
            .next()
            .ok_or_else(|| Error::Parse("missing coefficient metadata".into()))??;
        let fields: Vec<&str> = meta.trim().split(',').collect();
        if fields.len() != 3 || fields[2] != "graded-lex" {
            return Err(Error::Parse(format!("bad coefficient metadata {meta:?}")));
        }
        let dim = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad dim {:?}", fields[0])))?;
        let trunc = fields[1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad trunc {:?}", fields[1])))?;
        let mut values = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            values.push(
                line.parse::<T>()
                    .map_err(|_| Error::Parse(format!("bad coefficient {line:?}")))?,
            );
        }
        Self::from_values(dim, trunc, values)
    }
}

/// Sobolev index `p`; negative values index the dual spaces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevIndex<T>(T);

impl<T: Real> SobolevIndex<T> {
    pub fn new(p: T) -> Result<Self> {
        if !p.is_finite() {
            return Err(Error::InvalidArgument(format!("Sobolev index {p} is not finite")));
        }
        Ok(Self(p))
    }

    pub fn value(self) -> T {
        self.0
    }

    /// `(2 order + d)^{2p}`
    pub fn shell_weight(self, order: usize, dim: usize) -> T {
        shell_weight::<T>(order, dim).powf(T::lit(2.0) * self.0)
    }
}

/// `sum_{|k| <= N} (2|k| + d)^{2p} f_k g_k`
pub fn sobolev_inner<T: Real>(f: &CoeffVector<T>, g: &CoeffVector<T>, p: SobolevIndex<T>) -> Result<T> {
    f.check_same_shape(g)?;
    let set = f.index_set();
    let weights: Vec<T> = (0..=f.trunc).map(|n| p.shell_weight(n, f.dim)).collect();
    Ok(set
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(k, (&a, &b))| weights[k.order()] * a * b)
        .sum())
}

pub fn sobolev_norm<T: Real>(f: &CoeffVector<T>, p: SobolevIndex<T>) -> T {
    sobolev_inner(f, f, p).expect("same shape").sqrt()
}

/// Coefficients `<d^gamma delta_x, h_k> = (-1)^{|gamma|} (d^gamma h_k)(x)`.
pub fn delta_coeffs<T: Real>(gamma: &MultiIndex, x: &[T], trunc: usize) -> Result<CoeffVector<T>> {
    let dim = x.len();
    if gamma.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: gamma.dim(),
        });
    }
    let set = IndexSet::new(dim, trunc)?;
    let mut values = basis_derivatives(&set, x, gamma)?;
    if gamma.order() % 2 == 1 {
        values.iter_mut().for_each(|v| *v = -*v);
    }
    CoeffVector::from_values(dim, trunc, values)
}

/// `c_k = int f h_k` estimated with `rule`. Gauss–Hermite rules use their
/// Lebesgue weights, so `f` itself need not carry a Gaussian factor.
pub fn project_function<T, F>(f: F, trunc: usize, rule: &QuadratureRule<T>) -> Result<CoeffVector<T>>
where
    T: Real,
    F: Fn(&[T]) -> T,
{
    let set = IndexSet::new(rule.dim(), trunc)?;
    if rule.kind() == QuadratureKind::GaussHermite && rule.order() < trunc + 1 {
        log::warn!(
            "projection at N={trunc} with a {}-node rule per axis is under-resolved (need >= {})",
            rule.order(),
            trunc + 1
        );
    }
    let mut values = vec![T::zero(); set.len()];
    for (i, &w) in rule.lebesgue_weights().iter().enumerate() {
        let x = rule.node(i);
        let fx = f(x);
        if fx == T::zero() {
            continue;
        }
        let wf = w * fx;
        for (c, h) in values.iter_mut().zip(basis_values(&set, x)) {
            *c = *c + wf * h;
        }
    }
    CoeffVector::from_values(rule.dim(), trunc, values)
}

/// Partial sums of `||d^gamma delta_x||^2_{-p}` over the shells.
#[derive(Clone, Debug, PartialEq)]
pub struct MembershipProfile<T> {
    pub p: T,
    /// `partial_sums[n - 1]` sums every shell `|k| <= n`, for `n = 1..=N_max`.
    pub partial_sums: Vec<T>,
}

impl<T: Real> MembershipProfile<T> {
    /// Increment contributed by shell `n` (`n >= 1`).
    pub fn increment(&self, n: usize) -> T {
        if n == 1 {
            // shell 0 and shell 1 are both folded into the first partial sum
            self.partial_sums[0]
        } else {
            self.partial_sums[n - 1] - self.partial_sums[n - 2]
        }
    }

    /// Least-squares slope of `log(increment)` against `log n` over the last
    /// `tail_fraction` of shells, skipping shells whose increment vanishes
    /// (odd shells for `delta_0`, by parity).
    pub fn log_increment_slope(&self, tail_fraction: f64) -> Option<f64> {
        let n_max = self.partial_sums.len();
        let start = ((1.0 - tail_fraction.clamp(0.0, 1.0)) * n_max as f64).floor() as usize;
        let points: Vec<(f64, f64)> = (start.max(2)..=n_max)
            .filter_map(|n| {
                let inc = self.increment(n).as_f64();
                let scale = self.partial_sums[n - 1].as_f64().abs().max(f64::MIN_POSITIVE);
                // increments at rounding level carry no slope information
                (inc > 1e-12 * scale).then(|| ((n as f64).ln(), inc.ln()))
            })
            .collect();
        least_squares_slope(&points)
    }
}

pub(crate) fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Partial sums `sum_{|k| <= n} (2|k| + d)^{-2p} <d^gamma delta_x, h_k>^2` for
/// `n = 1..=n_max`. Convergence versus divergence is left to the caller.
pub fn membership_profile<T: Real>(gamma: &MultiIndex, x: &[T], p: T, n_max: usize) -> Result<MembershipProfile<T>> {
    if !(p > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "membership profile needs p > 0, got {p}"
        )));
    }
    if n_max == 0 {
        return Err(Error::InvalidArgument("membership profile needs N_max >= 1".into()));
    }
    let dim = x.len();
    if gamma.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: gamma.dim(),
        });
    }
    let neg = SobolevIndex::new(-p)?;
    let mut shells = vec![T::zero(); n_max + 1];
    if dim == 1 {
        let derivs = hermite_derivatives_1d(n_max, x[0], gamma.get(0));
        for (n, v) in derivs.into_iter().enumerate() {
            shells[n] = v * v;
        }
    } else {
        let coeffs = delta_coeffs(gamma, x, n_max)?;
        for (k, &c) in coeffs.index_set().iter().zip(coeffs.values()) {
            shells[k.order()] = shells[k.order()] + c * c;
        }
    }
    let mut acc = T::zero();
    let mut partial_sums = Vec::with_capacity(n_max);
    for (n, s) in shells.into_iter().enumerate() {
        acc = acc + neg.shell_weight(n, dim) * s;
        if n >= 1 {
            partial_sums.push(acc);
        }
    }
    Ok(MembershipProfile { p, partial_sums })
}
