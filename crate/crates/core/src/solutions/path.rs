//! `Z_t(psi)` in Hermite coordinates along one flow ensemble.

use crate::error::{Error, Result};
use crate::flow::FlowEnsemble;
use crate::scalar::Real;
use crate::sobolev::CoeffVector;
use crate::testfn::{Bump, TestFunction};

use super::initial::{DiscreteInitial, InitialCondition};

/// Coefficients of `Z_{t_n}(psi)` at every grid time of one ensemble.
#[derive(Clone, Debug)]
pub struct DistributionPath<T> {
    times: Vec<T>,
    coeffs: Vec<CoeffVector<T>>,
    seed: u64,
    stream: u64,
    psi: InitialCondition<T>,
}

impl<T: Real> DistributionPath<T> {
    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn at(&self, n: usize) -> &CoeffVector<T> {
        &self.coeffs[n]
    }

    pub fn coeffs(&self) -> &[CoeffVector<T>] {
        &self.coeffs
    }

    pub fn trunc(&self) -> usize {
        self.coeffs[0].trunc()
    }

    /// Seed and stream id of the driving Brownian path.
    pub fn provenance(&self) -> (u64, u64) {
        (self.seed, self.stream)
    }

    pub fn initial(&self) -> &InitialCondition<T> {
        &self.psi
    }

    /// Rows `n,t,k,value` with `k` the graded-lex position.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,t,k,value")?;
        for (n, (t, c)) in self.times.iter().zip(&self.coeffs).enumerate() {
            for (k, v) in c.values().iter().enumerate() {
                writeln!(w, "{n},{t:e},{k},{v:e}")?;
            }
        }
        Ok(())
    }
}

/// `<Z_{t_n}(psi), h_k>` for `|k| <= trunc` at every grid time. Smooth data
/// integrates `psi(x) h_k(X(t, x))` over the Gauss–Legendre nodes of
/// `supp psi`; deltas evaluate `h_k(X(t, x0))`; a first derivative of a delta
/// uses the chain rule `-grad h_k(X) . J e_axis`.
pub fn z_coeffs<T: Real>(
    discrete: &DiscreteInitial<T>,
    ens: &FlowEnsemble<T>,
    trunc: usize,
) -> Result<DistributionPath<T>> {
    discrete.check_ensemble(ens)?;
    let coeffs = (0..=ens.steps())
        .map(|n| discrete.coefficients(ens, n, trunc))
        .collect::<Result<Vec<_>>>()?;
    Ok(DistributionPath {
        times: (0..=ens.steps()).map(|n| ens.time(n)).collect(),
        coeffs,
        seed: ens.path().seed(),
        stream: ens.path().stream(),
        psi: discrete.source().clone(),
    })
}

/// `|<Z_{t_n}(psi), phi>_coeff - <psi, phi(X(t_n, .))>|` with `phi` given by
/// its expansion coefficients `phi_coeffs` and values `phi`.
pub fn duality_gap<T: Real>(
    discrete: &DiscreteInitial<T>,
    ens: &FlowEnsemble<T>,
    n: usize,
    phi: &dyn TestFunction<T>,
    phi_coeffs: &CoeffVector<T>,
) -> Result<T> {
    discrete.check_ensemble(ens)?;
    let z = discrete.coefficients(ens, n, phi_coeffs.trunc())?;
    let coeff_pairing: T = z.values().iter().zip(phi_coeffs.values()).map(|(&a, &b)| a * b).sum();
    Ok((coeff_pairing - discrete.pair(ens, n, phi)?).abs())
}

/// Pushforward density `psi(X_t^{-1} y) / J(t, X_t^{-1} y)` of a smooth bump
/// in `d = 1`, evaluated at each `y` of `grid`.
///
/// The flow is increasing, so points outside `[X(t, c - s), X(t, c + s)]`
/// have preimages outside the support and get the value zero.
pub fn z_density_1d<T: Real>(psi: &Bump<T>, ens: &FlowEnsemble<T>, n: usize, grid: &[T]) -> Result<Vec<T>> {
    if psi.center.len() != 1 || ens.dim() != 1 {
        return Err(Error::Unsupported("pushforward densities are one-dimensional".into()));
    }
    let (lo, hi) = (psi.center[0] - psi.scale, psi.center[0] + psi.scale);
    let (y_lo, _) = ens.propagate_point(&[lo], n)?;
    let (y_hi, _) = ens.propagate_point(&[hi], n)?;
    grid.iter()
        .map(|&y| {
            if y <= y_lo[0] || y >= y_hi[0] {
                return Ok(T::zero());
            }
            let x = ens.invert_in_bracket(n, y, (lo, hi), (y_lo[0], y_hi[0]))?;
            let (_, jac) = ens.propagate_point(&[x], n)?;
            Ok(psi.value(&[x]) / jac[0].abs())
        })
        .collect()
}
