//! The operators `A_k phi = sum_j sigma_jk d_j phi` and
//! `L phi = 1/2 sum_ij a_ij d_i d_j phi + sum_i b_i d_i phi` (`a = sigma sigma^T`),
//! their adjoints, and the monotonicity form
//! `2 <L* phi, phi> + sum_k |A*_k phi|^2`, which integration by parts turns
//! into `int m phi^2` for the weight returned by [`monotonicity_weight`].

use rand::Rng;
use rayon::prelude::*;

use crate::basis::hermite::BasisJet;
use crate::basis::multi_index::IndexSet;
use crate::basis::quadrature::{gauss_hermite_rule, gauss_legendre_box, QuadratureKind, QuadratureRule};
use crate::error::{Error, Result};
use crate::matrix::{OperatorMatrix, OperatorTag};
use crate::model::{ModelJet, SdeModel};
use crate::report::{ReportBuilder, VerificationReport};
use crate::rng::{stream_id, stream_rng, StreamPurpose};
use crate::scalar::Real;
use crate::sobolev::CoeffVector;
use crate::testfn::{Ball, Bump, TestFunction};

/// Extra Gauss–Hermite nodes per axis, beyond `N`, needed to resolve the
/// coefficients of polynomial-degree-one models in Galerkin entries.
pub const GALERKIN_MARGIN: usize = 4;

/// Differential operators with pointwise evaluations. Axes are zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointwiseOp {
    /// `A_k`, built from column `k` of sigma.
    Dispersion(usize),
    /// `L`
    Generator,
}

fn check_op<T: Real>(op: PointwiseOp, model: &dyn SdeModel<T>, phi: &dyn TestFunction<T>) -> Result<()> {
    if phi.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: phi.dim(),
        });
    }
    let needed = match op {
        PointwiseOp::Dispersion(k) => {
            if k >= model.noise_dim() {
                return Err(Error::InvalidAxis {
                    axis: k,
                    dim: model.noise_dim(),
                });
            }
            1
        }
        PointwiseOp::Generator => 2,
    };
    if phi.derivative_order() < needed {
        return Err(Error::MissingPartials(needed));
    }
    Ok(())
}

// value, gradient and Hessian of phi at x
struct PhiJet<T> {
    value: T,
    grad: Vec<T>,
    hess: Vec<T>,
}

impl<T: Real> PhiJet<T> {
    fn at(phi: &dyn TestFunction<T>, x: &[T], order: usize) -> Result<Self> {
        let d = x.len();
        let mut grad = vec![T::zero(); d];
        let mut hess = vec![T::zero(); d * d];
        if order >= 1 {
            phi.gradient(x, &mut grad)?;
        }
        if order >= 2 {
            phi.hessian(x, &mut hess)?;
        }
        Ok(Self {
            value: phi.value(x),
            grad,
            hess,
        })
    }
}

fn op_from_jets<T: Real>(op: PointwiseOp, m: &ModelJet<T>, grad: &[T], hess: &[T]) -> T {
    let d = m.dim;
    match op {
        PointwiseOp::Dispersion(k) => (0..d).map(|j| m.sigma(j, k) * grad[j]).sum(),
        PointwiseOp::Generator => {
            let mut acc = T::zero();
            for i in 0..d {
                for j in 0..d {
                    acc = acc + T::lit(0.5) * m.a(i, j) * hess[i * d + j];
                }
                acc = acc + m.drift[i] * grad[i];
            }
            acc
        }
    }
}

fn adjoint_from_jets<T: Real>(op: PointwiseOp, m: &ModelJet<T>, phi: &PhiJet<T>) -> T {
    let d = m.dim;
    match op {
        // -sum_j d_j(sigma_jk phi)
        PointwiseOp::Dispersion(k) => -(0..d)
            .map(|j| m.dsigma(j, k, j) * phi.value + m.sigma(j, k) * phi.grad[j])
            .sum::<T>(),
        // 1/2 sum_ij d_i d_j(a_ij phi) - sum_i d_i(b_i phi)
        PointwiseOp::Generator => {
            let half = T::lit(0.5);
            let mut acc = T::zero();
            for i in 0..d {
                for j in 0..d {
                    let second = m.d2a(i, j, i, j) * phi.value
                        + m.da(i, j, i) * phi.grad[j]
                        + m.da(i, j, j) * phi.grad[i]
                        + m.a(i, j) * phi.hess[i * d + j];
                    acc = acc + half * second;
                }
                acc = acc - (m.db(i, i) * phi.value + m.drift[i] * phi.grad[i]);
            }
            acc
        }
    }
}

/// Buffers for evaluating `phi`, `L phi` and every `A_k phi` at many points.
pub(crate) struct OperatorScratch<T> {
    drift: Vec<T>,
    sigma: Vec<T>,
    grad: Vec<T>,
    hess: Vec<T>,
    /// `A_k phi` after the last `eval`.
    pub(crate) dispersion: Vec<T>,
}

impl<T: Real> OperatorScratch<T> {
    /// Checks that `phi` has the partials `L` needs.
    pub(crate) fn new(model: &dyn SdeModel<T>, phi: &dyn TestFunction<T>) -> Result<Self> {
        check_op(PointwiseOp::Generator, model, phi)?;
        let (d, r) = (model.dim(), model.noise_dim());
        Ok(Self {
            drift: vec![T::zero(); d],
            sigma: vec![T::zero(); d * r],
            grad: vec![T::zero(); d],
            hess: vec![T::zero(); d * d],
            dispersion: vec![T::zero(); r],
        })
    }

    /// Returns `(phi(x), L phi(x))` and leaves `A_k phi(x)` in `dispersion`.
    pub(crate) fn eval(&mut self, model: &dyn SdeModel<T>, phi: &dyn TestFunction<T>, x: &[T]) -> Result<(T, T)> {
        let (d, r) = (model.dim(), model.noise_dim());
        model.drift(x, &mut self.drift);
        model.diffusion(x, &mut self.sigma);
        phi.gradient(x, &mut self.grad)?;
        phi.hessian(x, &mut self.hess)?;
        let half = T::lit(0.5);
        let mut l = T::zero();
        for i in 0..d {
            l = l + self.drift[i] * self.grad[i];
            for j in 0..d {
                let a: T = (0..r).map(|k| self.sigma[i * r + k] * self.sigma[j * r + k]).sum();
                l = l + half * a * self.hess[i * d + j];
            }
        }
        for k in 0..r {
            self.dispersion[k] = (0..d).map(|j| self.sigma[j * r + k] * self.grad[j]).sum();
        }
        Ok((phi.value(x), l))
    }
}

/// `(Op phi)(x)` from the closed-form partials of the model and of `phi`.
pub fn operator_at<T: Real>(op: PointwiseOp, model: &dyn SdeModel<T>, phi: &dyn TestFunction<T>, x: &[T]) -> Result<T> {
    check_op(op, model, phi)?;
    let order = if op == PointwiseOp::Generator { 2 } else { 1 };
    let pj = PhiJet::at(phi, x, order)?;
    Ok(op_from_jets(op, &ModelJet::at(model, x), &pj.grad, &pj.hess))
}

/// `Op phi` as a callable; partial availability is checked once, up front.
pub fn apply_operator_pointwise<'a, T: Real>(
    op: PointwiseOp,
    model: &'a dyn SdeModel<T>,
    phi: &'a dyn TestFunction<T>,
) -> Result<impl Fn(&[T]) -> T + 'a> {
    check_op(op, model, phi)?;
    Ok(move |x: &[T]| operator_at(op, model, phi, x).expect("partials checked at construction"))
}

/// `(Op* phi)(x)` assembled directly from the divergence form of the adjoint.
/// Galerkin adjoints are transposes instead; this is the independent route.
pub fn adjoint_at<T: Real>(op: PointwiseOp, model: &dyn SdeModel<T>, phi: &dyn TestFunction<T>, x: &[T]) -> Result<T> {
    check_op(op, model, phi)?;
    let order = if op == PointwiseOp::Generator { 2 } else { 1 };
    let pj = PhiJet::at(phi, x, order)?;
    Ok(adjoint_from_jets(op, &ModelJet::at(model, x), &pj))
}

/// `M[k, l] = <h_k, Op h_l>` by quadrature with `rule`, rows in parallel.
pub fn assemble_galerkin<T: Real>(
    tag: &OperatorTag,
    model: &dyn SdeModel<T>,
    trunc: usize,
    rule: &QuadratureRule<T>,
) -> Result<OperatorMatrix<T>> {
    let d = model.dim();
    if rule.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: rule.dim(),
        });
    }
    match *tag {
        OperatorTag::Dispersion(k) if k >= model.noise_dim() => {
            return Err(Error::InvalidAxis {
                axis: k,
                dim: model.noise_dim(),
            })
        }
        OperatorTag::Derivative(i) | OperatorTag::Position(i) if i >= d => {
            return Err(Error::InvalidAxis { axis: i, dim: d })
        }
        OperatorTag::Composite => return Err(Error::Unsupported("composite matrices are built by composition".into())),
        _ => {}
    }
    if rule.kind() == QuadratureKind::GaussHermite && rule.order() < trunc + GALERKIN_MARGIN {
        log::warn!(
            "Galerkin assembly at N={trunc} with {} nodes per axis is under-resolved (need >= {})",
            rule.order(),
            trunc + GALERKIN_MARGIN
        );
    }
    let set = IndexSet::new(d, trunc)?;
    let size = set.len();
    let q = rule.len();
    // basis[node * size + k] = W_q h_k(x_q), image[node * size + l] = (Op h_l)(x_q)
    let per_node: Vec<(Vec<T>, Vec<T>)> = (0..q)
        .into_par_iter()
        .map(|node| {
            let x = rule.node(node);
            let w = rule.lebesgue_weights()[node];
            let jet = BasisJet::at(&set, x);
            let mj = ModelJet::at(model, x);
            let image: Vec<T> = (0..size)
                .map(|l| {
                    let grad = &jet.gradients[l * d..(l + 1) * d];
                    let hess = &jet.hessians[l * d * d..(l + 1) * d * d];
                    match *tag {
                        OperatorTag::Generator => op_from_jets(PointwiseOp::Generator, &mj, grad, hess),
                        OperatorTag::Dispersion(k) => op_from_jets(PointwiseOp::Dispersion(k), &mj, grad, hess),
                        OperatorTag::Derivative(i) => grad[i],
                        OperatorTag::Position(i) => x[i] * jet.values[l],
                        OperatorTag::Composite => unreachable!(),
                    }
                })
                .collect();
            let weighted: Vec<T> = jet.values.iter().map(|&h| w * h).collect();
            (weighted, image)
        })
        .collect();
    let mut entries = vec![T::zero(); size * size];
    entries.par_chunks_mut(size).enumerate().for_each(|(k, row)| {
        for (weighted, image) in &per_node {
            let wk = weighted[k];
            if wk == T::zero() {
                continue;
            }
            for (m, &v) in row.iter_mut().zip(image) {
                *m = *m + wk * v;
            }
        }
    });
    Ok(OperatorMatrix::from_entries(tag.clone(), d, trunc, entries))
}

/// `M^T psi`, the adjoint action, so `<M^T psi, phi> = <psi, M phi>` exactly.
pub fn adjoint_apply<T: Real>(m: &OperatorMatrix<T>, psi: &CoeffVector<T>) -> Result<CoeffVector<T>> {
    m.apply_transpose(psi)
}

/// The weight `m` with `2 <L* phi, phi> + sum_k |A*_k phi|^2 = int m phi^2`:
///
/// `m = -sum_i d_i b_i + sum_{i,j,k} [1/2 d_i d_j (sigma_ik sigma_jk) - d_i d_j sigma_jk sigma_ik]`.
///
/// The dispersion part contributes `-sum d_i d_j sigma_jk sigma_ik` after its
/// gradient cross terms are integrated by parts, and `2 <L_2* phi, phi>`
/// contributes `+1/2 sum d_i d_j a_ij` (two integrations by parts, each
/// flipping the sign). In one dimension `m = sigma'^2 - b'`.
pub struct MonotonicityWeight<'a, T> {
    model: &'a dyn SdeModel<T>,
}

pub fn monotonicity_weight<T: Real>(model: &dyn SdeModel<T>) -> MonotonicityWeight<'_, T> {
    MonotonicityWeight { model }
}

/// Default number of samples per axis when estimating `sup m` on a ball.
pub const WEIGHT_SAMPLES_PER_AXIS: usize = 10_000;
/// Cap on the total sample count in `d >= 2`.
pub const WEIGHT_SAMPLES_TOTAL: usize = 1_000_000;

impl<T: Real> MonotonicityWeight<'_, T> {
    pub fn value(&self, x: &[T]) -> T {
        weight_from_jet(&ModelJet::at(self.model, x))
    }

    /// `C_K = max m` over the closed ball by dense grid sampling.
    pub fn sup_on_ball(&self, ball: &Ball<T>) -> T {
        let d = ball.center.len();
        let per_axis = if d == 1 {
            WEIGHT_SAMPLES_PER_AXIS
        } else {
            (WEIGHT_SAMPLES_TOTAL as f64).powf(1.0 / d as f64).floor() as usize
        }
        .max(2);
        let (lo, hi) = ball.bounding_box();
        let step: Vec<T> = (0..d).map(|i| (hi[i] - lo[i]) / T::from_count(per_axis - 1)).collect();
        let total = per_axis.pow(d as u32);
        (0..total)
            .into_par_iter()
            .filter_map(|flat| {
                let mut rem = flat;
                let mut x = vec![T::zero(); d];
                for i in (0..d).rev() {
                    x[i] = lo[i] + step[i] * T::from_count(rem % per_axis);
                    rem /= per_axis;
                }
                ball.contains(&x).then(|| self.value(&x))
            })
            .reduce_with(T::max)
            .unwrap_or_else(|| self.value(&ball.center))
    }
}

fn weight_from_jet<T: Real>(m: &ModelJet<T>) -> T {
    let (d, r) = (m.dim, m.noise_dim);
    let half = T::lit(0.5);
    let mut acc = T::zero();
    for i in 0..d {
        acc = acc - m.db(i, i);
        for j in 0..d {
            for k in 0..r {
                // d_i d_j (sigma_ik sigma_jk)
                let product = m.d2sigma(i, k, i, j) * m.sigma(j, k)
                    + m.dsigma(i, k, i) * m.dsigma(j, k, j)
                    + m.dsigma(i, k, j) * m.dsigma(j, k, i)
                    + m.sigma(i, k) * m.d2sigma(j, k, i, j);
                acc = acc + half * product - m.d2sigma(j, k, i, j) * m.sigma(i, k);
            }
        }
    }
    acc
}

/// Pieces of the monotonicity form for one test function, all by the same rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormBreakdown<T> {
    /// `2 <L* phi, phi>`
    pub generator_part: T,
    /// `sum_k |A*_k phi|^2`
    pub dispersion_part: T,
    /// `int m phi^2`
    pub weight_integral: T,
    /// `|phi|_0^2`
    pub norm_sq: T,
}

impl<T: Real> FormBreakdown<T> {
    pub fn form(&self) -> T {
        self.generator_part + self.dispersion_part
    }
}

fn check_window<T: Real>(phi: &dyn TestFunction<T>, rule: &QuadratureRule<T>) -> Result<()> {
    if rule.kind() != QuadratureKind::GaussLegendre {
        return Ok(());
    }
    let ball = phi.support().ok_or(Error::SupportOutsideWindow)?;
    let (lo, hi) = ball.bounding_box();
    let slack = T::lit(1e-12);
    for (i, &(a, b)) in rule.intervals().iter().enumerate() {
        if lo[i] < a - slack * (T::one() + a.abs()) || hi[i] > b + slack * (T::one() + b.abs()) {
            return Err(Error::SupportOutsideWindow);
        }
    }
    Ok(())
}

/// Evaluates the form pointwise: `L* phi` and `A*_k phi` from their
/// divergence forms, integrated with `rule`. A Gauss–Legendre rule must cover
/// the support of `phi`.
pub fn monotonicity_breakdown<T: Real>(
    phi: &dyn TestFunction<T>,
    model: &dyn SdeModel<T>,
    rule: &QuadratureRule<T>,
) -> Result<FormBreakdown<T>> {
    check_op(PointwiseOp::Generator, model, phi)?;
    if rule.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: rule.dim(),
        });
    }
    check_window(phi, rule)?;
    let r = model.noise_dim();
    let parts: Vec<[T; 4]> = (0..rule.len())
        .into_par_iter()
        .map(|q| -> Result<[T; 4]> {
            let x = rule.node(q);
            let w = rule.lebesgue_weights()[q];
            let pj = PhiJet::at(phi, x, 2)?;
            if pj.value == T::zero() && pj.grad.iter().all(|g| *g == T::zero()) {
                return Ok([T::zero(); 4]);
            }
            let mj = ModelJet::at(model, x);
            let lstar = adjoint_from_jets(PointwiseOp::Generator, &mj, &pj);
            let astar: T = (0..r)
                .map(|k| {
                    let v = adjoint_from_jets(PointwiseOp::Dispersion(k), &mj, &pj);
                    v * v
                })
                .sum();
            let v2 = pj.value * pj.value;
            Ok([
                w * T::lit(2.0) * lstar * pj.value,
                w * astar,
                w * weight_from_jet(&mj) * v2,
                w * v2,
            ])
        })
        .collect::<Result<_>>()?;
    let sum = |i: usize| parts.iter().map(|p| p[i]).sum::<T>();
    Ok(FormBreakdown {
        generator_part: sum(0),
        dispersion_part: sum(1),
        weight_integral: sum(2),
        norm_sq: sum(3),
    })
}

/// `2 <L* phi, phi>_0 + sum_k |A*_k phi|_0^2` for a test function with partials.
pub fn monotonicity_form<T: Real>(
    phi: &dyn TestFunction<T>,
    model: &dyn SdeModel<T>,
    rule: &QuadratureRule<T>,
) -> Result<T> {
    Ok(monotonicity_breakdown(phi, model, rule)?.form())
}

/// The same form for a coefficient vector, through Galerkin matrices:
/// `phi` is zero-padded to `N + padding`, the adjoints act as transposes and
/// the pairings are `p = 0` Sobolev products. The padding controls how much of
/// `A*_k phi` escaping the truncation is kept.
pub fn monotonicity_form_galerkin<T: Real>(phi: &CoeffVector<T>, model: &dyn SdeModel<T>, padding: usize) -> Result<T> {
    use crate::sobolev::{sobolev_inner, SobolevIndex};
    if phi.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: phi.dim(),
        });
    }
    let trunc = phi.trunc() + padding;
    let padded = phi.retruncated(trunc);
    let rule = gauss_hermite_rule::<T>(trunc + 2 * GALERKIN_MARGIN)?.tensor(model.dim())?;
    let p0 = SobolevIndex::new(T::zero())?;
    let l = assemble_galerkin(&OperatorTag::Generator, model, trunc, &rule)?;
    let mut form = T::lit(2.0) * sobolev_inner(&adjoint_apply(&l, &padded)?, &padded, p0)?;
    for k in 0..model.noise_dim() {
        let a = assemble_galerkin(&OperatorTag::Dispersion(k), model, trunc, &rule)?;
        let image = adjoint_apply(&a, &padded)?;
        form = form + sobolev_inner(&image, &image, p0)?;
    }
    Ok(form)
}

/// Random bump with support inside `B(0, radius)`: scale in
/// `[0.2, 0.6] radius`, amplitude in `[0.5, 2]`, center uniform among the
/// admissible centers.
pub fn random_bump<T: Real, R: Rng>(rng: &mut R, dim: usize, radius: T) -> Bump<T> {
    let radius = radius.as_f64();
    let scale = radius * rng.random_range(0.2..0.6);
    let room = radius - scale;
    let center = loop {
        let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-room..=room)).collect();
        if c.iter().map(|v| v * v).sum::<f64>().sqrt() <= room {
            break c;
        }
    };
    let amplitude = rng.random_range(0.5..2.0);
    Bump::new(
        T::lit(amplitude),
        center.into_iter().map(T::lit).collect(),
        T::lit(scale),
    )
    .expect("positive scale")
}

/// Default Gauss–Legendre nodes per axis over each bump's bounding box.
pub const BUMP_RULE_NODES: usize = 128;

/// Sweeps `trials` random bumps supported in `B(0, radius)`. Each trial must
/// satisfy `|form - int m phi^2| <= tol |phi|^2` and
/// `form <= (C_K + tol) |phi|^2` with `C_K = sup_{B(0,R)} m`.
pub fn monotonicity_check<T: Real>(
    model: &dyn SdeModel<T>,
    scenario: &str,
    radius: T,
    trials: usize,
    tolerance: f64,
    seed: u64,
) -> Result<VerificationReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument(
            "monotonicity sweep needs at least one trial".into(),
        ));
    }
    let d = model.dim();
    let ball = Ball {
        center: vec![T::zero(); d],
        radius,
    };
    let c_k = monotonicity_weight(model).sup_on_ball(&ball).as_f64();
    let mut builder = ReportBuilder::new("monotonicity", scenario, seed)
        .param("radius", radius.as_f64())
        .param("trials", trials)
        .param("C_K", c_k)
        .param("rule_nodes_per_axis", BUMP_RULE_NODES)
        .tolerance(format!("{tolerance:e} absolute on form / |phi|^2"));
    let mut ratios = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut rng = stream_rng(seed, stream_id(trial as u64, StreamPurpose::Trials));
        let bump = random_bump(&mut rng, d, radius);
        let (lo, hi) = bump.support().expect("bumps are compactly supported").bounding_box();
        let rule = gauss_legendre_box(BUMP_RULE_NODES, &lo, &hi)?;
        let parts = monotonicity_breakdown(&bump, model, &rule)?;
        let norm = parts.norm_sq.as_f64();
        let ratio = parts.form().as_f64() / norm;
        let identity = (parts.form() - parts.weight_integral).as_f64() / norm;
        ratios.push(ratio);
        let t = trial as f64;
        builder.labeled_point(format!("identity-{trial}"), t, identity, 0.0, tolerance);
        builder.labeled_point(format!("bound-{trial}"), t, (ratio - c_k).max(0.0), 0.0, tolerance);
    }
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    builder.set_param("max_ratio", max_ratio);
    builder.set_param("min_ratio", min_ratio);
    Ok(builder.build())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::ladder::{ladder_matrix, LadderKind};
    use crate::basis::quadrature::gauss_legendre_rule;
    use crate::model::{FrozenModel, GaussianModel, OrnsteinUhlenbeck, TrigModel};
    use crate::testfn::{Coordinate, HermiteFunction};
    use approx::assert_abs_diff_eq;

    #[test]
    fn pointwise_examples() {
        let g = GaussianModel::new(1);
        let h0 = HermiteFunction::one_d(0);
        let h1 = HermiteFunction::one_d(1);
        for x in [-1.0, 0.3, 2.0] {
            let a = operator_at(PointwiseOp::Dispersion(0), &g, &h0, &[x]).unwrap();
            assert_abs_diff_eq!(a, -(0.5f64).sqrt() * h1.value(&[x]), epsilon = 1e-15);
        }
        let ou = OrnsteinUhlenbeck::new(1, 0.8, 0.5);
        let id = Coordinate { dim: 1, axis: 0 };
        let lphi = apply_operator_pointwise(PointwiseOp::Generator, &ou, &id).unwrap();
        assert_abs_diff_eq!(lphi(&[1.5]), -0.8 * 1.5, epsilon = 1e-15);
        let aphi = apply_operator_pointwise(PointwiseOp::Dispersion(0), &ou, &id).unwrap();
        assert_abs_diff_eq!(aphi(&[1.5]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn missing_partials_rejected() {
        let f = crate::testfn::FnTestFunction::new(1, |x: &[f64]| x[0]).with_gradient(|_, o| o[0] = 1.0);
        let g = GaussianModel::new(1);
        assert!(apply_operator_pointwise(PointwiseOp::Dispersion(0), &g, &f).is_ok());
        assert!(matches!(
            apply_operator_pointwise(PointwiseOp::Generator, &g, &f),
            Err(Error::MissingPartials(2))
        ));
    }

    #[test]
    fn generator_of_h0_under_brownian_motion() {
        let rule = gauss_hermite_rule::<f64>(20).unwrap();
        let l = assemble_galerkin(&OperatorTag::Generator, &GaussianModel::new(1), 4, &rule).unwrap();
        let out = l.apply(&CoeffVector::unit(1, 4, 0).unwrap()).unwrap();
        assert_abs_diff_eq!(out.values()[0], -0.25, epsilon = 1e-13);
        assert_abs_diff_eq!(out.values()[2], 1.0 / (2.0 * 2f64.sqrt()), epsilon = 1e-13);
        for k in 0..=4 {
            assert_abs_diff_eq!(l.get(k, k), -0.25 * (2 * k + 1) as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn galerkin_derivative_matches_ladder() {
        let trunc = 12;
        let rule = gauss_hermite_rule::<f64>(trunc + GALERKIN_MARGIN)
            .unwrap()
            .tensor(2)
            .unwrap();
        let model = GaussianModel::new(2);
        for axis in 0..2 {
            let g = assemble_galerkin(&OperatorTag::Derivative(axis), &model, trunc, &rule).unwrap();
            let a = assemble_galerkin(&OperatorTag::Dispersion(axis), &model, trunc, &rule).unwrap();
            let l = ladder_matrix::<f64>(LadderKind::Differentiate(axis), trunc, 2).unwrap();
            for (x, (y, z)) in g.entries().iter().zip(l.entries().iter().zip(a.entries())) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-10);
                assert_abs_diff_eq!(x, z, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn adjoint_of_dispersion_flips_the_ladder() {
        let rule = gauss_hermite_rule::<f64>(10).unwrap();
        let a = assemble_galerkin(&OperatorTag::Dispersion(0), &GaussianModel::new(1), 3, &rule).unwrap();
        let out = adjoint_apply(&a, &CoeffVector::unit(1, 3, 0).unwrap()).unwrap();
        assert_abs_diff_eq!(out.values()[1], 0.5f64.sqrt(), epsilon = 1e-14);
        let zero = adjoint_apply(&a, &CoeffVector::zeros(1, 3)).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weights_of_builtin_models() {
        let ou = OrnsteinUhlenbeck::new(1, 0.8, 0.5);
        let g = GaussianModel::new(2);
        let trig = TrigModel::default();
        for x in [-2.0f64, 0.0, 1.3] {
            assert_abs_diff_eq!(monotonicity_weight(&ou).value(&[x]), 0.8, epsilon = 1e-15);
            assert_eq!(monotonicity_weight(&g).value(&[x, -x]), 0.0);
            // sigma'^2 - b' with sigma = 1 + sin(x) / 2, b = 0
            let expected = 0.25 * x.cos().powi(2);
            assert_abs_diff_eq!(monotonicity_weight(&trig).value(&[x]), expected, epsilon = 1e-15);
        }
        let sup = monotonicity_weight(&trig).sup_on_ball(&Ball {
            center: vec![0.0],
            radius: 4.0,
        });
        assert_abs_diff_eq!(sup, 0.25, epsilon = 1e-8);
    }

    #[test]
    fn form_identity_for_single_bumps() {
        let bump = Bump::centered_1d(1.0, 0.3, 1.5).unwrap();
        let rule = gauss_legendre_rule(128, -1.2, 1.8).unwrap();
        for model in [
            Box::new(GaussianModel::new(1)) as Box<dyn SdeModel<f64>>,
            Box::new(OrnsteinUhlenbeck::new(1, 0.8, 0.5)),
            Box::new(TrigModel::new(0.5, 0.3)),
            Box::new(FrozenModel::new(1)),
        ] {
            let parts = monotonicity_breakdown(&bump, model.as_ref(), &rule).unwrap();
            assert_abs_diff_eq!(parts.form(), parts.weight_integral, epsilon = 1e-9 * parts.norm_sq);
        }
        let wide = gauss_legendre_rule(64, -1.0, 1.0).unwrap();
        assert_eq!(
            monotonicity_form(&bump, &GaussianModel::new(1), &wide),
            Err(Error::SupportOutsideWindow)
        );
    }

    #[test]
    fn galerkin_form_agrees_with_pointwise_for_ou() {
        let ou = OrnsteinUhlenbeck::new(1, 0.8, 0.5);
        let phi = CoeffVector::from_values(1, 6, vec![0.5, -0.2, 0.3, 0.0, 0.1, 0.05, -0.02]).unwrap();
        let galerkin = monotonicity_form_galerkin(&phi, &ou, 2).unwrap();
        let norm: f64 = phi.values().iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(galerkin, 0.8 * norm, epsilon = 1e-12);
    }

    // sigma = [[1 + 0.3 sin x, 0.2 cos y], [0, 1 + 0.2 sin(x + y)]], b = (sin y, -y / 2)
    struct Twisted;

    impl SdeModel<f64> for Twisted {
        fn dim(&self) -> usize {
            2
        }
        fn noise_dim(&self) -> usize {
            2
        }
        fn family(&self) -> crate::model::ModelFamily {
            crate::model::ModelFamily::Custom
        }
        fn drift(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[1].sin();
            out[1] = -0.5 * x[1];
        }
        fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&[0.0, x[1].cos(), 0.0, -0.5]);
        }
        fn diffusion(&self, x: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&[
                1.0 + 0.3 * x[0].sin(),
                0.2 * x[1].cos(),
                0.0,
                1.0 + 0.2 * (x[0] + x[1]).sin(),
            ]);
        }
        fn diffusion_gradient(&self, x: &[f64], out: &mut [f64]) {
            let c = 0.2 * (x[0] + x[1]).cos();
            // (i, k) blocks of (d_x, d_y)
            out.copy_from_slice(&[0.3 * x[0].cos(), 0.0, 0.0, -0.2 * x[1].sin(), 0.0, 0.0, c, c]);
        }
        fn diffusion_hessian(&self, x: &[f64], out: &mut [f64]) {
            let s = -0.2 * (x[0] + x[1]).sin();
            out.copy_from_slice(&[
                -0.3 * x[0].sin(),
                0.0,
                0.0,
                0.0, // sigma_00
                0.0,
                0.0,
                0.0,
                -0.2 * x[1].cos(), // sigma_01
                0.0,
                0.0,
                0.0,
                0.0, // sigma_10
                s,
                s,
                s,
                s, // sigma_11
            ]);
        }
        fn growth_constant(&self) -> f64 {
            3.0
        }
    }

    #[test]
    fn form_identity_in_two_dimensions() {
        let bump = Bump::new(1.3, vec![0.4, -0.2], 1.4).unwrap();
        let (lo, hi) = bump.support().unwrap().bounding_box();
        let rule = gauss_legendre_box(96, &lo, &hi).unwrap();
        let parts = monotonicity_breakdown(&bump, &Twisted, &rule).unwrap();
        assert!(parts.dispersion_part.abs() > 0.1);
        assert_abs_diff_eq!(parts.form(), parts.weight_integral, epsilon = 1e-7 * parts.norm_sq);
    }
}
