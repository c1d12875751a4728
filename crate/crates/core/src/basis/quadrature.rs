//! Gauss–Hermite and Gauss–Legendre rules, built by Golub–Welsch: the nodes
//! are eigenvalues of the symmetric Jacobi matrix of the three-term
//! recurrence, then polished by Newton steps on the degree-`n` polynomial.

use crate::basis::hermite::hermite_eval_1d_into;
use crate::basis::multi_index::MAX_DIM;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QuadratureKind {
    /// Weight `e^{-|x|^2}` on `R^d`.
    GaussHermite,
    /// Unit weight on a box.
    GaussLegendre,
}

/// A (possibly tensorized) quadrature rule on `R^d`.
///
/// `weights` integrate against the rule's weight function. For Gauss–Hermite
/// the `lebesgue_weights` are `w_i e^{|x_i|^2}`, so `sum_i W_i f(x_i)`
/// approximates `int f dx` for integrands that already decay like
/// `e^{-|x|^2}` (products of Hermite functions, for instance). For
/// Gauss–Legendre both weight sets coincide.
#[derive(Clone, Debug)]
pub struct QuadratureRule<T> {
    kind: QuadratureKind,
    dim: usize,
    order: usize,
    nodes: Vec<T>,
    weights: Vec<T>,
    lebesgue_weights: Vec<T>,
    intervals: Vec<(T, T)>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn kind(&self) -> QuadratureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per axis.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[T] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn lebesgue_weights(&self) -> &[T] {
        &self.lebesgue_weights
    }

    /// Per-axis intervals of a Legendre rule; empty for Hermite rules.
    pub fn intervals(&self) -> &[(T, T)] {
        &self.intervals
    }

    /// `int f dx` (Lebesgue measure).
    pub fn integrate<F: Fn(&[T]) -> T>(&self, f: F) -> T {
        (0..self.len())
            .map(|i| self.lebesgue_weights[i] * f(self.node(i)))
            .sum()
    }

    /// `int f(x) w(x) dx` with the rule's own weight function.
    pub fn integrate_weighted<F: Fn(&[T]) -> T>(&self, f: F) -> T {
        (0..self.len()).map(|i| self.weights[i] * f(self.node(i))).sum()
    }

    /// Tensor power `rule^{dim}` of a one-dimensional rule.
    pub fn tensor(&self, dim: usize) -> Result<Self> {
        if self.dim != 1 {
            return Err(Error::InvalidArgument("tensor() expects a one-dimensional rule".into()));
        }
        let axes = vec![self.clone(); dim];
        Self::tensor_product(&axes)
    }

    /// Tensor product of one-dimensional rules of the same kind, one per axis.
    pub fn tensor_product(axes: &[Self]) -> Result<Self> {
        let dim = axes.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("empty tensor product".into()));
        }
        if dim > MAX_DIM {
            return Err(Error::DimensionTooLarge(dim));
        }
        let kind = axes[0].kind;
        if axes.iter().any(|a| a.dim != 1 || a.kind != kind) {
            return Err(Error::InvalidArgument(
                "tensor factors must be one-dimensional rules of the same kind".into(),
            ));
        }
        let count: usize = axes.iter().map(|a| a.len()).product();
        let mut nodes = Vec::with_capacity(count * dim);
        let mut weights = Vec::with_capacity(count);
        let mut lebesgue = Vec::with_capacity(count);
        let mut digits = vec![0usize; dim];
        for _ in 0..count {
            let mut w = T::one();
            let mut wl = T::one();
            for (axis, &i) in digits.iter().enumerate() {
                nodes.push(axes[axis].nodes[i]);
                w = w * axes[axis].weights[i];
                wl = wl * axes[axis].lebesgue_weights[i];
            }
            weights.push(w);
            lebesgue.push(wl);
            // odometer, last axis fastest
            for axis in (0..dim).rev() {
                digits[axis] += 1;
                if digits[axis] < axes[axis].len() {
                    break;
                }
                digits[axis] = 0;
            }
        }
        Ok(Self {
            kind,
            dim,
            order: axes.iter().map(|a| a.order).min().unwrap_or(0),
            nodes,
            weights,
            lebesgue_weights: lebesgue,
            intervals: axes.iter().flat_map(|a| a.intervals.iter().copied()).collect(),
        })
    }
}

/// `n`-point Gauss–Hermite rule for the weight `e^{-x^2}`; exact for
/// polynomials of degree `<= 2n - 1`.
pub fn gauss_hermite_rule<T: Real>(n: usize) -> Result<QuadratureRule<T>> {
    if n == 0 {
        return Err(Error::Quadrature("Gauss-Hermite rule needs n >= 1".into()));
    }
    let half = T::lit(0.5);
    let diag = vec![T::zero(); n];
    let off: Vec<T> = (1..n).map(|k| (T::from_count(k) * half).sqrt()).collect();
    let mut nodes = symmetric_tridiagonal_eigenvalues(diag, off)?;
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));

    let mut table = vec![T::zero(); n + 1];
    let two = T::lit(2.0);
    for x in nodes.iter_mut() {
        // Newton on h_n, with h_n' = sqrt(2n) h_{n-1} - x h_n.
        for _ in 0..3 {
            hermite_eval_1d_into(*x, &mut table);
            let slope = (two * T::from_count(n)).sqrt() * table[n - 1] - *x * table[n];
            if slope == T::zero() {
                break;
            }
            *x = *x - table[n] / slope;
        }
    }
    // Symmetrize: the rule is exactly symmetric about 0.
    for i in 0..n / 2 {
        let m = (nodes[n - 1 - i] - nodes[i]) * half;
        nodes[i] = -m;
        nodes[n - 1 - i] = m;
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }

    let mut lebesgue = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut values = vec![T::zero(); n];
    for &x in &nodes {
        // Christoffel weight: W = 1 / sum_{k<n} h_k(x)^2 is w e^{x^2}.
        hermite_eval_1d_into(x, &mut values);
        let w_leb = T::one() / values.iter().map(|v| *v * *v).sum::<T>();
        lebesgue.push(w_leb);
        weights.push(w_leb * (-x * x).exp());
    }
    Ok(QuadratureRule {
        kind: QuadratureKind::GaussHermite,
        dim: 1,
        order: n,
        nodes,
        weights,
        lebesgue_weights: lebesgue,
        intervals: Vec::new(),
    })
}

/// `n`-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre_rule<T: Real>(n: usize, a: T, b: T) -> Result<QuadratureRule<T>> {
    if n == 0 {
        return Err(Error::Quadrature("Gauss-Legendre rule needs n >= 1".into()));
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Quadrature(format!("degenerate interval [{a}, {b}]")));
    }
    let diag = vec![T::zero(); n];
    let off: Vec<T> = (1..n)
        .map(|k| {
            let kf = T::from_count(k);
            kf / (T::lit(4.0) * kf * kf - T::one()).sqrt()
        })
        .collect();
    let mut xs = symmetric_tridiagonal_eigenvalues(diag, off)?;
    xs.sort_by(|p, q| p.partial_cmp(q).expect("finite nodes"));

    let half = T::lit(0.5);
    let mut ref_weights = Vec::with_capacity(n);
    for x in xs.iter_mut() {
        let mut dp = T::one();
        for _ in 0..3 {
            let (p, d) = legendre_with_derivative(n, *x);
            dp = d;
            if d == T::zero() {
                break;
            }
            *x = *x - p / d;
        }
        let (_, d) = legendre_with_derivative(n, *x);
        if d != T::zero() {
            dp = d;
        }
        ref_weights.push(T::lit(2.0) / ((T::one() - *x * *x) * dp * dp));
    }
    for i in 0..n / 2 {
        let m = (xs[n - 1 - i] - xs[i]) * half;
        xs[i] = -m;
        xs[n - 1 - i] = m;
        let w = (ref_weights[i] + ref_weights[n - 1 - i]) * half;
        ref_weights[i] = w;
        ref_weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        xs[n / 2] = T::zero();
    }

    let scale = (b - a) * half;
    let shift = (a + b) * half;
    let nodes: Vec<T> = xs.iter().map(|&x| scale * x + shift).collect();
    let weights: Vec<T> = ref_weights.iter().map(|&w| w * scale).collect();
    Ok(QuadratureRule {
        kind: QuadratureKind::GaussLegendre,
        dim: 1,
        order: n,
        nodes,
        lebesgue_weights: weights.clone(),
        weights,
        intervals: vec![(a, b)],
    })
}

/// Tensor Gauss–Legendre rule on the box `prod_i [lo_i, hi_i]`.
pub fn gauss_legendre_box<T: Real>(n: usize, lo: &[T], hi: &[T]) -> Result<QuadratureRule<T>> {
    if lo.len() != hi.len() {
        return Err(Error::DimensionMismatch {
            expected: lo.len(),
            found: hi.len(),
        });
    }
    let axes = lo
        .iter()
        .zip(hi)
        .map(|(&a, &b)| gauss_legendre_rule(n, a, b))
        .collect::<Result<Vec<_>>>()?;
    QuadratureRule::tensor_product(&axes)
}

fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p_prev = T::one();
    let mut p = x;
    for k in 1..n {
        let kf = T::from_count(k);
        let next = ((T::lit(2.0) * kf + T::one()) * x * p - kf * p_prev) / (kf + T::one());
        p_prev = p;
        p = next;
    }
    if n == 0 {
        return (T::one(), T::zero());
    }
    let d = T::from_count(n) * (x * p - p_prev) / (x * x - T::one());
    (p, d)
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with
/// Wilkinson shifts (eigenvectors not accumulated).
pub(crate) fn symmetric_tridiagonal_eigenvalues<T: Real>(mut d: Vec<T>, off: Vec<T>) -> Result<Vec<T>> {
    let n = d.len();
    if n == 0 {
        return Ok(d);
    }
    let mut e = off;
    e.push(T::zero());
    let two = T::lit(2.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Quadrature("tridiagonal QL failed to converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::hermite::hermite_eval_1d;
    use approx::assert_abs_diff_eq;

    #[test]
    fn classical_hermite_rules() {
        let r1 = gauss_hermite_rule::<f64>(1).unwrap();
        assert_abs_diff_eq!(r1.nodes()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r1.weights()[0], std::f64::consts::PI.sqrt(), epsilon = 1e-13);
        let r2 = gauss_hermite_rule::<f64>(2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(r2.nodes()[0], -s, epsilon = 1e-13);
        assert_abs_diff_eq!(r2.nodes()[1], s, epsilon = 1e-13);
        for &w in r2.weights() {
            assert_abs_diff_eq!(w, std::f64::consts::PI.sqrt() / 2.0, epsilon = 1e-13);
        }
        // n = 3: nodes 0, +-sqrt(3/2); weights 2 sqrt(pi)/3, sqrt(pi)/6
        let r3 = gauss_hermite_rule::<f64>(3).unwrap();
        let sp = std::f64::consts::PI.sqrt();
        assert_abs_diff_eq!(r3.nodes()[2], 1.5f64.sqrt(), epsilon = 1e-13);
        assert_abs_diff_eq!(r3.weights()[1], 2.0 * sp / 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(r3.weights()[0], sp / 6.0, epsilon = 1e-13);
    }

    #[test]
    fn classical_legendre_rules() {
        let r1 = gauss_legendre_rule::<f64>(1, -1.0, 1.0).unwrap();
        assert_abs_diff_eq!(r1.nodes()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r1.weights()[0], 2.0, epsilon = 1e-14);
        let r2 = gauss_legendre_rule::<f64>(2, -1.0, 1.0).unwrap();
        assert_abs_diff_eq!(r2.nodes()[1], 1.0 / 3f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(r2.weights()[0], 1.0, epsilon = 1e-14);
        let r3 = gauss_legendre_rule::<f64>(3, -1.0, 1.0).unwrap();
        assert_abs_diff_eq!(r3.nodes()[2], 0.6f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(r3.weights()[1], 8.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r3.weights()[0], 5.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn legendre_polynomial_exactness() {
        let r = gauss_legendre_rule::<f64>(16, -3.0, 3.0).unwrap();
        assert_abs_diff_eq!(r.integrate(|x| x[0].powi(4)), 97.2, epsilon = 1e-12);
        assert!(r.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn hermite_rule_orthonormality() {
        let r = gauss_hermite_rule::<f64>(20).unwrap();
        let val = r.integrate(|x| {
            let h = hermite_eval_1d(3, x[0]);
            h[3] * h[3]
        });
        assert_abs_diff_eq!(val, 1.0, epsilon = 1e-12);
        assert!(r.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn hermite_rule_exactness_degree() {
        // int x^{2m} e^{-x^2} dx = Gamma(m + 1/2)
        let n = 6;
        let r = gauss_hermite_rule::<f64>(n).unwrap();
        let mut gamma = std::f64::consts::PI.sqrt();
        for m in 0..n {
            let val = r.integrate_weighted(|x| x[0].powi(2 * m as i32));
            assert_abs_diff_eq!(val, gamma, epsilon = 1e-10 * gamma.max(1.0));
            gamma *= m as f64 + 0.5;
        }
    }

    #[test]
    fn large_hermite_rule_has_finite_lebesgue_weights() {
        let r = gauss_hermite_rule::<f64>(400).unwrap();
        assert!(r.lebesgue_weights().iter().all(|w| w.is_finite() && *w > 0.0));
        let val = r.integrate(|x| {
            let h = hermite_eval_1d(300, x[0]);
            h[300] * h[300]
        });
        assert_abs_diff_eq!(val, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn tensor_rule_counts_and_integrates() {
        let r = gauss_hermite_rule::<f64>(5).unwrap().tensor(2).unwrap();
        assert_eq!(r.len(), 25);
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(r.integrate_weighted(|_| 1.0), pi, epsilon = 1e-12);
        assert!(gauss_hermite_rule::<f64>(2).unwrap().tensor(4).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(gauss_hermite_rule::<f64>(0).is_err());
        assert!(gauss_legendre_rule::<f64>(0, 0.0, 1.0).is_err());
        assert!(gauss_legendre_rule::<f64>(4, 1.0, 1.0).is_err());
    }
}
