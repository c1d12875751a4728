//! Hermite functions `h_k(x) = (2^k k! sqrt(pi))^{-1/2} e^{-x^2/2} H_k(x)`.
//!
//! Values come from the normalized three-term recurrence seeded with
//! `h_0 = pi^{-1/4} e^{-x^2/2}`, which never forms `H_k` itself and so stays
//! finite for degrees in the thousands.

use crate::basis::multi_index::{IndexSet, MultiIndex};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `h_0(x), ..., h_{n_max}(x)`.
pub fn hermite_eval_1d<T: Real>(n_max: usize, x: T) -> Vec<T> {
    let mut out = vec![T::zero(); n_max + 1];
    hermite_eval_1d_into(x, &mut out);
    out
}

/// Fills `out[k] = h_k(x)` for `k < out.len()`.
pub fn hermite_eval_1d_into<T: Real>(x: T, out: &mut [T]) {
    if out.is_empty() {
        return;
    }
    let two = T::lit(2.0);
    out[0] = T::PI().powf(T::lit(-0.25)) * (-x * x / two).exp();
    if out.len() > 1 {
        out[1] = two.sqrt() * x * out[0];
    }
    for k in 1..out.len() - 1 {
        let kf = T::from_count(k);
        let k1 = kf + T::one();
        out[k + 1] = x * (two / k1).sqrt() * out[k] - (kf / k1).sqrt() * out[k - 1];
    }
}

/// Derivatives of the given `order` of `h_0..h_{n_max}` at `x`, using
/// `h_k' = sqrt(k/2) h_{k-1} - sqrt((k+1)/2) h_{k+1}` repeatedly.
pub fn hermite_derivatives_1d<T: Real>(n_max: usize, x: T, order: usize) -> Vec<T> {
    let mut table = hermite_eval_1d(n_max + order, x);
    let half = T::lit(0.5);
    for pass in 0..order {
        let valid = n_max + order - pass; // table[0..=valid] holds the previous order
        let mut next = vec![T::zero(); valid];
        for (k, slot) in next.iter_mut().enumerate() {
            let down = if k > 0 {
                (T::from_count(k) * half).sqrt() * table[k - 1]
            } else {
                T::zero()
            };
            let up = (T::from_count(k + 1) * half).sqrt() * table[k + 1];
            *slot = down - up;
        }
        table = next;
    }
    table.truncate(n_max + 1);
    table
}

/// Values, first and second derivatives of `h_0..h_{n_max}` at `x`.
#[derive(Clone, Debug)]
pub struct HermiteJet<T> {
    pub values: Vec<T>,
    pub first: Vec<T>,
    pub second: Vec<T>,
}

impl<T: Real> HermiteJet<T> {
    pub fn at(n_max: usize, x: T) -> Self {
        let ext = hermite_eval_1d(n_max + 1, x);
        let half = T::lit(0.5);
        let mut first = vec![T::zero(); n_max + 1];
        let mut second = vec![T::zero(); n_max + 1];
        for k in 0..=n_max {
            let kf = T::from_count(k);
            let down = if k > 0 {
                (kf * half).sqrt() * ext[k - 1]
            } else {
                T::zero()
            };
            first[k] = down - ((kf + T::one()) * half).sqrt() * ext[k + 1];
            // h_k'' = (x^2 - (2k + 1)) h_k
            second[k] = (x * x - (T::lit(2.0) * kf + T::one())) * ext[k];
        }
        let mut values = ext;
        values.truncate(n_max + 1);
        Self { values, first, second }
    }
}

/// `h_k(x) = prod_i h_{k_i}(x_i)`.
pub fn hermite_eval_multi<T: Real>(k: &MultiIndex, x: &[T]) -> Result<T> {
    if k.dim() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            found: x.len(),
        });
    }
    Ok(k.entries()
        .iter()
        .zip(x)
        .map(|(&ki, &xi)| hermite_eval_1d(ki, xi)[ki])
        .fold(T::one(), |acc, v| acc * v))
}

/// `h_k(x)` for every `k` of `set`, in set order.
pub fn basis_values<T: Real>(set: &IndexSet, x: &[T]) -> Vec<T> {
    debug_assert_eq!(set.dim(), x.len());
    let tables: Vec<Vec<T>> = x.iter().map(|&xi| hermite_eval_1d(set.trunc(), xi)).collect();
    tensor_values(set, &tables)
}

/// `(d^gamma h_k)(x)` for every `k` of `set`.
pub fn basis_derivatives<T: Real>(set: &IndexSet, x: &[T], gamma: &MultiIndex) -> Result<Vec<T>> {
    if gamma.dim() != set.dim() || x.len() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            found: if gamma.dim() != set.dim() { gamma.dim() } else { x.len() },
        });
    }
    let tables: Vec<Vec<T>> = x
        .iter()
        .zip(gamma.entries())
        .map(|(&xi, &g)| hermite_derivatives_1d(set.trunc(), xi, g))
        .collect();
    Ok(tensor_values(set, &tables))
}

pub(crate) fn tensor_values<T: Real>(set: &IndexSet, tables: &[Vec<T>]) -> Vec<T> {
    set.iter()
        .map(|k| {
            k.entries()
                .iter()
                .zip(tables)
                .fold(T::one(), |acc, (&ki, table)| acc * table[ki])
        })
        .collect()
}

/// Values, gradients and Hessians of every basis function of `set` at one point.
#[derive(Clone, Debug)]
pub struct BasisJet<T> {
    pub dim: usize,
    pub values: Vec<T>,
    /// `gradients[pos * d + i] = d_i h_k(x)`
    pub gradients: Vec<T>,
    /// `hessians[(pos * d + i) * d + j] = d_i d_j h_k(x)`
    pub hessians: Vec<T>,
}

impl<T: Real> BasisJet<T> {
    pub fn at(set: &IndexSet, x: &[T]) -> Self {
        let d = set.dim();
        let jets: Vec<HermiteJet<T>> = x.iter().map(|&xi| HermiteJet::at(set.trunc(), xi)).collect();
        let n = set.len();
        let mut values = Vec::with_capacity(n);
        let mut gradients = vec![T::zero(); n * d];
        let mut hessians = vec![T::zero(); n * d * d];
        for (pos, k) in set.iter().enumerate() {
            let ks = k.entries();
            values.push(
                ks.iter()
                    .zip(&jets)
                    .fold(T::one(), |acc, (&ki, jet)| acc * jet.values[ki]),
            );
            for i in 0..d {
                for j in 0..d {
                    let mut prod = T::one();
                    for (axis, (&ka, jet)) in ks.iter().zip(&jets).enumerate() {
                        let order = usize::from(axis == i) + usize::from(axis == j);
                        prod = prod
                            * match order {
                                0 => jet.values[ka],
                                1 => jet.first[ka],
                                _ => jet.second[ka],
                            };
                    }
                    hessians[(pos * d + i) * d + j] = prod;
                }
                let mut prod = T::one();
                for (axis, (&ka, jet)) in ks.iter().zip(&jets).enumerate() {
                    prod = prod * if axis == i { jet.first[ka] } else { jet.values[ka] };
                }
                gradients[pos * d + i] = prod;
            }
        }
        Self {
            dim: d,
            values,
            gradients,
            hessians,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const PI_M14: f64 = 0.751_125_544_464_942_5;

    #[test]
    fn closed_forms_at_small_degree() {
        let v = hermite_eval_1d(1, 0.0_f64);
        assert_abs_diff_eq!(v[0], PI_M14, epsilon = 1e-15);
        assert_eq!(v[1], 0.0);
        let v = hermite_eval_1d(0, 1.0_f64);
        assert_abs_diff_eq!(v[0], PI_M14 * (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(v[0], 0.455_581, epsilon = 1e-6);
        let v = hermite_eval_1d(2, 0.0_f64);
        assert_abs_diff_eq!(v[2], -PI_M14 / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn degree_five_matches_high_precision_reference() {
        // h_5(1.3) from the same recurrence run in 50-digit arithmetic (mpmath).
        let reference = -0.399_391_462_813_750_7_f64;
        let v = hermite_eval_1d(5, 1.3_f64);
        assert_abs_diff_eq!(v[5], reference, epsilon = 1e-13);
    }

    #[test]
    fn multi_dimensional_products() {
        let k = MultiIndex::new(vec![0, 0]);
        assert_abs_diff_eq!(
            hermite_eval_multi(&k, &[0.0, 0.0]).unwrap(),
            std::f64::consts::PI.powf(-0.5),
            epsilon = 1e-15
        );
        let k = MultiIndex::new(vec![1, 0]);
        assert_eq!(hermite_eval_multi(&k, &[0.0, 2.0]).unwrap(), 0.0);
        let k = MultiIndex::new(vec![2, 3]);
        let expected = hermite_eval_1d(2, 0.5)[2] * hermite_eval_1d(3, -0.7)[3];
        assert_abs_diff_eq!(hermite_eval_multi(&k, &[0.5, -0.7]).unwrap(), expected, epsilon = 1e-16);
        assert!(hermite_eval_multi(&k, &[0.5]).is_err());
    }

    #[test]
    fn derivative_tables_match_finite_differences() {
        let x = 0.37_f64;
        let h = 1e-5;
        let d1 = hermite_derivatives_1d(8, x, 1);
        let d2 = hermite_derivatives_1d(8, x, 2);
        let jet = HermiteJet::at(8, x);
        let plus = hermite_eval_1d(8, x + h);
        let minus = hermite_eval_1d(8, x - h);
        let mid = hermite_eval_1d(8, x);
        for k in 0..=8 {
            let fd1 = (plus[k] - minus[k]) / (2.0 * h);
            let fd2 = (plus[k] - 2.0 * mid[k] + minus[k]) / (h * h);
            assert_abs_diff_eq!(d1[k], fd1, epsilon = 1e-8);
            assert_abs_diff_eq!(jet.first[k], d1[k], epsilon = 1e-13);
            assert_abs_diff_eq!(d2[k], fd2, epsilon = 1e-4);
            assert_abs_diff_eq!(jet.second[k], d2[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn high_degree_stays_finite() {
        let v = hermite_eval_1d(4000, 3.0_f64);
        assert!(v.iter().all(|x| x.is_finite()));
        // |h_k(x)| <= pi^{-1/4} (Cramer's bound)
        assert!(v.iter().all(|x| x.abs() <= PI_M14 + 1e-12));
    }

    #[test]
    fn single_precision_agrees() {
        let v32 = hermite_eval_1d(10, 0.8_f32);
        let v64 = hermite_eval_1d(10, 0.8_f64);
        for (a, b) in v32.iter().zip(&v64) {
            assert!((f64::from(*a) - b).abs() < 1e-6);
        }
    }
}
