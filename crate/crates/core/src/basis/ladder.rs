//! Hermite ladder identities as banded matrices:
//!
//! `x h_k = sqrt((k+1)/2) h_{k+1} + sqrt(k/2) h_{k-1}`
//! `h_k' = sqrt(k/2) h_{k-1} - sqrt((k+1)/2) h_{k+1}`
//!
//! applied along one axis of the tensor basis. Images that leave the
//! truncation are dropped; [`ladder_edge_mass`] reports how much was lost.

use crate::basis::multi_index::IndexSet;
use crate::error::{Error, Result};
use crate::matrix::{OperatorMatrix, OperatorTag};
use crate::scalar::Real;
use crate::sobolev::CoeffVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LadderKind {
    /// Multiplication by the coordinate `x_axis`.
    Multiply(usize),
    /// `d/dx_axis`
    Differentiate(usize),
}

impl LadderKind {
    fn axis(self) -> usize {
        match self {
            LadderKind::Multiply(a) | LadderKind::Differentiate(a) => a,
        }
    }

    // (coefficient on h_{k+e}, coefficient on h_{k-e}) for the image of h_k
    fn coefficients<T: Real>(self, k: usize) -> (T, T) {
        let half = T::lit(0.5);
        let up = (T::from_count(k + 1) * half).sqrt();
        let down = (T::from_count(k) * half).sqrt();
        match self {
            LadderKind::Multiply(_) => (up, down),
            LadderKind::Differentiate(_) => (-up, down),
        }
    }
}

pub fn ladder_matrix<T: Real>(kind: LadderKind, trunc: usize, dim: usize) -> Result<OperatorMatrix<T>> {
    let axis = kind.axis();
    if axis >= dim {
        return Err(Error::InvalidAxis { axis, dim });
    }
    let set = IndexSet::new(dim, trunc)?;
    let tag = match kind {
        LadderKind::Multiply(a) => OperatorTag::Position(a),
        LadderKind::Differentiate(a) => OperatorTag::Derivative(a),
    };
    let mut m = OperatorMatrix::zeros(tag, dim, trunc);
    for (col, k) in set.iter().enumerate() {
        let (up, down) = kind.coefficients::<T>(k.get(axis));
        if let Some(row) = k.shifted(axis, true).and_then(|kk| set.position(&kk)) {
            m.set(row, col, up);
        }
        if let Some(row) = k.shifted(axis, false).and_then(|kk| set.position(&kk)) {
            m.set(row, col, down);
        }
    }
    Ok(m)
}

/// Squared L² mass of the ladder image of `v` that falls outside the truncation.
pub fn ladder_edge_mass<T: Real>(kind: LadderKind, v: &CoeffVector<T>) -> Result<T> {
    let axis = kind.axis();
    if axis >= v.dim() {
        return Err(Error::InvalidAxis { axis, dim: v.dim() });
    }
    let set = IndexSet::new(v.dim(), v.trunc())?;
    let mut lost = std::collections::HashMap::new();
    for (pos, k) in set.iter().enumerate() {
        if k.order() != v.trunc() {
            continue;
        }
        let (up, _) = kind.coefficients::<T>(k.get(axis));
        let target = k.shifted(axis, true).expect("raising never fails");
        let entry = lost.entry(target).or_insert(T::zero());
        *entry = *entry + up * v.values()[pos];
    }
    Ok(lost.values().map(|&c| c * c).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn basis(trunc: usize, k: usize) -> CoeffVector<f64> {
        CoeffVector::unit(1, trunc, k).unwrap()
    }

    #[test]
    fn single_axis_images() {
        let d = ladder_matrix::<f64>(LadderKind::Differentiate(0), 2, 1).unwrap();
        let out = d.apply(&basis(2, 0)).unwrap();
        assert_abs_diff_eq!(out.values()[1], -0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(out.values()[0], 0.0);

        let x = ladder_matrix::<f64>(LadderKind::Multiply(0), 2, 1).unwrap();
        let out = x.apply(&basis(2, 0)).unwrap();
        assert_abs_diff_eq!(out.values()[1], 0.5f64.sqrt(), epsilon = 1e-15);

        let d3 = ladder_matrix::<f64>(LadderKind::Differentiate(0), 3, 1).unwrap();
        let out = d3.apply(&basis(3, 1)).unwrap();
        assert_abs_diff_eq!(out.values()[0], 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(out.values()[2], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn canonical_commutation_in_the_interior() {
        for dim in 1..=2 {
            let trunc = 12;
            for axis in 0..dim {
                let x = ladder_matrix::<f64>(LadderKind::Multiply(axis), trunc, dim).unwrap();
                let d = ladder_matrix::<f64>(LadderKind::Differentiate(axis), trunc, dim).unwrap();
                let comm = x.compose(&d).unwrap().difference(&d.compose(&x).unwrap()).unwrap();
                let set = IndexSet::new(dim, trunc).unwrap();
                for r in 0..set.len() {
                    for c in 0..set.len() {
                        if set.get(r).order() + 2 > trunc || set.get(c).order() + 2 > trunc {
                            continue;
                        }
                        let expected = if r == c { -1.0 } else { 0.0 };
                        assert_abs_diff_eq!(comm.get(r, c), expected, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn edge_mass_counts_dropped_images() {
        let v = basis(3, 3);
        let lost = ladder_edge_mass(LadderKind::Differentiate(0), &v).unwrap();
        assert_abs_diff_eq!(lost, 2.0, epsilon = 1e-14);
        assert_eq!(ladder_edge_mass(LadderKind::Multiply(0), &basis(3, 1)).unwrap(), 0.0);
    }

    #[test]
    fn invalid_axis() {
        assert!(matches!(
            ladder_matrix::<f64>(LadderKind::Multiply(1), 3, 1),
            Err(Error::InvalidAxis { .. })
        ));
    }
}
