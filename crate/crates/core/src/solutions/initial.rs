//! Initial data `psi`: smooth bumps, `delta_x` and first derivatives of `delta_x`.

use crate::basis::hermite::{basis_values, BasisJet};
use crate::basis::multi_index::{IndexSet, MultiIndex};
use crate::basis::quadrature::gauss_legendre_box;
use crate::error::{Error, Result};
use crate::flow::{norm, FlowEnsemble};
use crate::scalar::Real;
use crate::sobolev::{delta_coeffs, project_function, CoeffVector};
use crate::testfn::{Bump, TestFunction};

/// Gauss–Legendre nodes per axis over the support of a smooth `psi`.
pub const DEFAULT_PSI_NODES: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition<T> {
    Smooth(Bump<T>),
    Delta {
        point: Vec<T>,
    },
    /// `d^gamma delta_x` with `|gamma| = 1`.
    DerivativeDelta {
        point: Vec<T>,
        axis: usize,
    },
}

impl<T: Real> InitialCondition<T> {
    pub fn bump(amplitude: T, center: Vec<T>, scale: T) -> Result<Self> {
        Ok(Self::Smooth(Bump::new(amplitude, center, scale)?))
    }

    pub fn delta(point: Vec<T>) -> Self {
        Self::Delta { point }
    }

    /// `d^gamma delta_x`; only `|gamma| = 1` is supported.
    pub fn derivative_delta(point: Vec<T>, gamma: &MultiIndex) -> Result<Self> {
        if gamma.dim() != point.len() {
            return Err(Error::DimensionMismatch {
                expected: point.len(),
                found: gamma.dim(),
            });
        }
        match gamma.order() {
            0 => Ok(Self::Delta { point }),
            1 => Ok(Self::DerivativeDelta {
                axis: gamma.entries().iter().position(|&g| g == 1).expect("order one"),
                point,
            }),
            n => Err(Error::Unsupported(format!(
                "derivatives of delta of order {n} need second flow derivatives"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Smooth(b) => b.center.len(),
            Self::Delta { point } | Self::DerivativeDelta { point, .. } => point.len(),
        }
    }

    /// `lambda` with `supp psi` inside the closed ball `B(0, lambda)`.
    pub fn support_radius(&self) -> T {
        match self {
            Self::Smooth(b) => norm(&b.center) + b.scale,
            Self::Delta { point } | Self::DerivativeDelta { point, .. } => norm(point),
        }
    }

    /// Coefficients of `psi` itself at truncation `trunc`.
    pub fn projection(&self, trunc: usize, nodes_per_axis: usize) -> Result<CoeffVector<T>> {
        match self {
            Self::Smooth(b) => {
                let (lo, hi) = b.support().expect("bump support").bounding_box();
                let rule = gauss_legendre_box(nodes_per_axis, &lo, &hi)?;
                project_function(|x: &[T]| b.value(x), trunc, &rule)
            }
            Self::Delta { point } => delta_coeffs(&MultiIndex::zeros(point.len()), point, trunc),
            Self::DerivativeDelta { point, axis } => delta_coeffs(&MultiIndex::unit(point.len(), *axis), point, trunc),
        }
    }

    /// Points and weights for evaluating pairings against the flow.
    pub fn discretize(&self, nodes_per_axis: usize) -> Result<DiscreteInitial<T>> {
        match self {
            Self::Smooth(b) => {
                let (lo, hi) = b.support().expect("bump support").bounding_box();
                let rule = gauss_legendre_box(nodes_per_axis, &lo, &hi)?;
                let mut points = Vec::with_capacity(rule.len() * b.center.len());
                let mut weights = Vec::with_capacity(rule.len());
                for q in 0..rule.len() {
                    points.extend_from_slice(rule.node(q));
                    weights.push(rule.weights()[q] * b.value(rule.node(q)));
                }
                Ok(DiscreteInitial {
                    source: self.clone(),
                    kind: DiscreteKind::Smooth,
                    dim: b.center.len(),
                    points,
                    weights,
                })
            }
            Self::Delta { point } => Ok(DiscreteInitial {
                source: self.clone(),
                kind: DiscreteKind::Delta,
                dim: point.len(),
                points: point.clone(),
                weights: vec![T::one()],
            }),
            Self::DerivativeDelta { point, axis } => Ok(DiscreteInitial {
                source: self.clone(),
                kind: DiscreteKind::DerivativeDelta(*axis),
                dim: point.len(),
                points: point.clone(),
                weights: vec![T::one()],
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscreteKind {
    Smooth,
    Delta,
    DerivativeDelta(usize),
}

/// `psi` reduced to weighted points: `<psi, g> = sum_j w_j g(x_j)` for smooth
/// and delta data, `-d_axis g(x)` for a derivative of delta.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteInitial<T> {
    source: InitialCondition<T>,
    kind: DiscreteKind,
    dim: usize,
    points: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> DiscreteInitial<T> {
    pub fn source(&self) -> &InitialCondition<T> {
        &self.source
    }

    pub fn kind(&self) -> DiscreteKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Flat coordinates; an ensemble must start with exactly these nodes.
    pub fn nodes(&self) -> &[T] {
        &self.points
    }

    pub fn num_points(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, j: usize) -> &[T] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    /// For smooth data `w_j psi(x_j)`; `1` otherwise.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Checks that the first nodes of `ens` are this data's points.
    pub fn check_ensemble(&self, ens: &FlowEnsemble<T>) -> Result<()> {
        if ens.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: ens.dim(),
            });
        }
        if ens.num_nodes() < self.num_points() {
            return Err(Error::NodeMismatch(format!(
                "ensemble has {} nodes, initial data needs {}",
                ens.num_nodes(),
                self.num_points()
            )));
        }
        for j in 0..self.num_points() {
            if ens.node(j) != self.point(j) {
                return Err(Error::NodeMismatch(format!(
                    "ensemble node {j} differs from the initial data point"
                )));
            }
        }
        Ok(())
    }

    /// `<psi, g>`
    pub fn pair_initial(&self, g: &dyn TestFunction<T>) -> Result<T> {
        match self.kind {
            DiscreteKind::DerivativeDelta(axis) => {
                let mut grad = vec![T::zero(); self.dim];
                g.gradient(&self.points, &mut grad)?;
                Ok(-grad[axis])
            }
            _ => Ok((0..self.num_points())
                .map(|j| self.weights[j] * g.value(self.point(j)))
                .sum()),
        }
    }

    /// `<Y_{t_n}, g>` evaluated through the flow: `sum_j w_j g(X(t_n, x_j))`,
    /// or `-grad g(X) . J e_axis` for a derivative of delta.
    pub fn pair(&self, ens: &FlowEnsemble<T>, n: usize, g: &dyn TestFunction<T>) -> Result<T> {
        match self.kind {
            DiscreteKind::DerivativeDelta(axis) => {
                let d = self.dim;
                let mut grad = vec![T::zero(); d];
                g.gradient(ens.state(n, 0), &mut grad)?;
                let jac = ens.jacobian(n, 0);
                Ok(-(0..d).map(|i| grad[i] * jac[i * d + axis]).sum::<T>())
            }
            _ => Ok(self.pair_values(ens, n, |y| g.value(y))),
        }
    }

    /// `sum_j w_j g(X(t_n, x_j))` for smooth and delta data.
    pub fn pair_values(&self, ens: &FlowEnsemble<T>, n: usize, g: impl Fn(&[T]) -> T) -> T {
        debug_assert!(self.kind != DiscreteKind::Smooth || ens.num_nodes() >= self.num_points());
        (0..self.num_points())
            .map(|j| {
                let w = self.weights[j];
                if w == T::zero() {
                    T::zero()
                } else {
                    w * g(ens.state(n, j))
                }
            })
            .sum()
    }

    /// `<Z_{t_n}(psi), h_k>` for every `|k| <= trunc`.
    pub fn coefficients(&self, ens: &FlowEnsemble<T>, n: usize, trunc: usize) -> Result<CoeffVector<T>> {
        let set = IndexSet::new(self.dim, trunc)?;
        let mut values = vec![T::zero(); set.len()];
        match self.kind {
            DiscreteKind::DerivativeDelta(axis) => {
                let d = self.dim;
                let jet = BasisJet::at(&set, ens.state(n, 0));
                let jac = ens.jacobian(n, 0);
                for (pos, v) in values.iter_mut().enumerate() {
                    *v = -(0..d)
                        .map(|i| jet.gradients[pos * d + i] * jac[i * d + axis])
                        .sum::<T>();
                }
            }
            _ => {
                for j in 0..self.num_points() {
                    let w = self.weights[j];
                    if w == T::zero() {
                        continue;
                    }
                    for (v, h) in values.iter_mut().zip(basis_values(&set, ens.state(n, j))) {
                        *v = *v + w * h;
                    }
                }
            }
        }
        CoeffVector::from_values(self.dim, trunc, values)
    }
}
