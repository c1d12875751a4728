//! Residuals of the strong, mild, martingale and generator identities, the
//! finite-variation estimate, support containment and moment diagnostics.
//!
//! Every report applies `|r| <= 3 sigma + allowance`, where `sigma` is the
//! propagated Monte Carlo error and the allowance covers time discretization.

use std::sync::Arc;

use rayon::prelude::*;

use crate::basis::hermite::BasisJet;
use crate::basis::multi_index::IndexSet;
use crate::basis::quadrature::gauss_legendre_box;
use crate::error::{Error, Result};
use crate::flow::{grid_steps, simulate_flow, simulate_flow_on_path, FlowEnsemble};
use crate::model::{ModelJet, SdeModel};
use crate::operators::OperatorScratch;
use crate::report::{ReportBuilder, VerificationReport};
use crate::rng::{stream_id, BrownianPath, StreamPurpose};
use crate::scalar::Real;
use crate::sobolev::{project_function, sobolev_norm, CoeffVector, SobolevIndex};
use crate::testfn::{Bump, TestFunction};

use super::initial::{DiscreteInitial, DiscreteKind};
use super::semigroup::{Estimate, InnerKey, MonteCarloSemigroup, SemigroupOracle};

fn require_point_data<T: Real>(discrete: &DiscreteInitial<T>, what: &str) -> Result<()> {
    if let DiscreteKind::DerivativeDelta(_) = discrete.kind() {
        return Err(Error::Unsupported(format!(
            "{what} with derivative-of-delta data needs second flow derivatives"
        )));
    }
    Ok(())
}

// (<Y_n, phi>, <Y_n, L phi>, <Y_n, A_i phi> for each i) at one grid time
fn pair_all<T: Real>(
    discrete: &DiscreteInitial<T>,
    ens: &FlowEnsemble<T>,
    phi: &dyn TestFunction<T>,
    n: usize,
    scratch: &mut OperatorScratch<T>,
) -> Result<(T, T, Vec<T>)> {
    let model = ens.model().as_ref();
    let (mut p, mut l) = (T::zero(), T::zero());
    let mut a = vec![T::zero(); model.noise_dim()];
    for (j, &w) in discrete.weights().iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        let (v, lv) = scratch.eval(model, phi, ens.state(n, j))?;
        p = p + w * v;
        l = l + w * lv;
        for (ai, &av) in a.iter_mut().zip(&scratch.dispersion) {
            *ai = *ai + w * av;
        }
    }
    Ok((p, l, a))
}

fn pairings<T: Real>(
    discrete: &DiscreteInitial<T>,
    ens: &FlowEnsemble<T>,
    phi: &dyn TestFunction<T>,
) -> Result<Vec<(T, T, Vec<T>)>> {
    OperatorScratch::new(ens.model().as_ref(), phi)?;
    (0..=ens.steps())
        .into_par_iter()
        .map_init(
            || OperatorScratch::new(ens.model().as_ref(), phi).expect("checked above"),
            |scratch, n| pair_all(discrete, ens, phi, n, scratch),
        )
        .collect()
}

/// `r(t_n) = <Y_{t_n}, phi> - <psi, phi> - sum_{m<n} <Y_m, L phi> dt
/// - sum_i sum_{m<n} <Y_m, A_i phi> dB_i[m]` at every grid time.
pub fn strong_residual_series<T: Real>(
    discrete: &DiscreteInitial<T>,
    phi: &dyn TestFunction<T>,
    ens: &FlowEnsemble<T>,
) -> Result<Vec<T>> {
    require_point_data(discrete, "the strong residual")?;
    discrete.check_ensemble(ens)?;
    let p0 = discrete.pair_initial(phi)?;
    let dt = ens.dt();
    let mut acc = T::zero();
    let mut out = Vec::with_capacity(ens.steps() + 1);
    for (n, (p, l, a)) in pairings(discrete, ens, phi)?.into_iter().enumerate() {
        out.push(p - p0 - acc);
        if n < ens.steps() {
            let db = ens.path().increment(n);
            acc = acc + l * dt + a.iter().zip(db).map(|(&ai, &b)| ai * b).sum::<T>();
        }
    }
    Ok(out)
}

/// Strong residual of one ensemble against the allowance `c sqrt(dt)`.
pub fn strong_residual<T: Real>(
    discrete: &DiscreteInitial<T>,
    phi: &dyn TestFunction<T>,
    ens: &FlowEnsemble<T>,
    scenario: &str,
    c: f64,
) -> Result<VerificationReport> {
    let series = strong_residual_series(discrete, phi, ens)?;
    let dt = ens.dt().as_f64();
    let bound = c * dt.sqrt();
    let mut b = ReportBuilder::new("strong", scenario, ens.path().seed())
        .param("dt", dt)
        .param("steps", ens.steps())
        .param("stream", ens.path().stream())
        .param("c", c)
        .tolerance(format!("|r| <= {c} sqrt(dt)"));
    for (n, r) in series.iter().enumerate() {
        b.point(ens.time(n).as_f64(), r.as_f64(), 0.0, bound);
    }
    Ok(b.build())
}

fn ladder_factors<T: Real>(dts: &[T]) -> Result<(T, Vec<usize>)> {
    let finest = dts.iter().copied().fold(T::infinity(), T::min);
    if dts.is_empty() || !(finest > T::zero()) {
        return Err(Error::InvalidArgument(
            "time-step ladder must be non-empty and positive".into(),
        ));
    }
    let factors = dts
        .iter()
        .map(|&dt| {
            let f = (dt / finest).round();
            if ((f * finest - dt) / dt).abs() > T::lit(1e-9) {
                Err(Error::MisalignedGrid {
                    time: dt.as_f64(),
                    dt: finest.as_f64(),
                })
            } else {
                Ok(f.to_usize().expect("positive factor"))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((finest, factors))
}

/// RMS over `paths` outer paths of the strong residual at `t_end`, one entry
/// per step size in `dts`. Every level replays the same Brownian paths,
/// coarsened from the finest level.
pub fn strong_residual_rms<T: Real>(
    model: Arc<dyn SdeModel<T>>,
    discrete: &DiscreteInitial<T>,
    phi: &dyn TestFunction<T>,
    t_end: T,
    dts: &[T],
    paths: usize,
    seed: u64,
) -> Result<Vec<T>> {
    if paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let (finest, factors) = ladder_factors(dts)?;
    let steps = grid_steps(t_end, finest)?;
    let finals = (0..paths)
        .into_par_iter()
        .map(|p| {
            let fine = BrownianPath::generate(
                seed,
                stream_id(p as u64, StreamPurpose::Flow),
                model.noise_dim(),
                steps,
                finest,
            )?;
            factors
                .iter()
                .map(|&f| {
                    let path = if f == 1 { fine.clone() } else { fine.coarsened(f)? };
                    let ens = simulate_flow_on_path(model.clone(), discrete.nodes(), path)?;
                    let r = strong_residual_series(discrete, phi, &ens)?;
                    Ok(*r.last().expect("non-empty series"))
                })
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let pf = T::from_count(paths);
    Ok((0..dts.len())
        .map(|l| (finals.iter().map(|r| r[l] * r[l]).sum::<T>() / pf).sqrt())
        .collect())
}

// Packs (n, m) into a stream key; n, m < 2^31.
fn pair_key(outer: u64, n: usize, m: usize) -> InnerKey {
    InnerKey {
        outer,
        time_index: ((n as u64) << 32) | m as u64,
    }
}

// `w_j sum_i sigma_li(y_j) dB_i`: the direction field of `sum_i dB_i A_i`.
fn dispersion_directions<T: Real>(
    model: &dyn SdeModel<T>,
    discrete: &DiscreteInitial<T>,
    ens: &FlowEnsemble<T>,
    m: usize,
) -> (Vec<T>, Vec<T>) {
    let (d, r) = (model.dim(), model.noise_dim());
    let db = ens.path().increment(m);
    let mut sigma = vec![T::zero(); d * r];
    let mut points = Vec::with_capacity(discrete.num_points() * d);
    let mut dirs = Vec::with_capacity(discrete.num_points() * d);
    for (j, &w) in discrete.weights().iter().enumerate() {
        let y = ens.state(m, j);
        points.extend_from_slice(y);
        model.diffusion(y, &mut sigma);
        for l in 0..d {
            let s: T = (0..r).map(|i| sigma[l * r + i] * db[i]).sum();
            dirs.push(w * s);
        }
    }
    (points, dirs)
}

// <psi, S_u phi>
fn initial_semigroup_pairing<T: Real>(
    discrete: &DiscreteInitial<T>,
    oracle: &dyn SemigroupOracle<T>,
    u: T,
    key: InnerKey,
) -> Result<Estimate<T>> {
    match discrete.kind() {
        DiscreteKind::DerivativeDelta(axis) => {
            let mut dir = vec![T::zero(); discrete.dim()];
            dir[axis] = -T::one();
            oracle.weighted_gradients(u, discrete.nodes(), &dir, key)
        }
        _ => oracle.weighted_values(u, discrete.nodes(), discrete.weights(), key),
    }
}

/// Pathwise mild residual on one ensemble:
/// `r(t_n) = <Y_{t_n}, phi> - <psi, S_{t_n} phi>
/// - sum_{m<n} <Y_{t_m}, sum_i dB_i[m] A_i S_{t_n - t_m} phi>`,
/// every semigroup term supplied by `oracle`. The bound at each time is
/// `3 sigma + c sqrt(dt)` with `sigma` propagated from the oracle's errors.
pub fn mild_residual_pathwise<T: Real>(
    discrete: &DiscreteInitial<T>,
    phi: &dyn TestFunction<T>,
    ens: &FlowEnsemble<T>,
    oracle: &dyn SemigroupOracle<T>,
    scenario: &str,
    c: f64,
) -> Result<VerificationReport> {
    require_point_data(discrete, "the pathwise mild residual")?;
    discrete.check_ensemble(ens)?;
    let model = ens.model().as_ref();
    let dt = ens.dt();
    let outer = ens.path().stream();
    let terms = (1..=ens.steps())
        .into_par_iter()
        .map(|n| -> Result<(T, T)> {
            let init = initial_semigroup_pairing(
                discrete,
                oracle,
                T::from_count(n) * dt,
                pair_key(outer, n, u32::MAX as usize),
            )?;
            let mut value = discrete.pair(ens, n, phi)? - init.value;
            let mut var = init.std_error * init.std_error;
            for m in 0..n {
                let (points, dirs) = dispersion_directions(model, discrete, ens, m);
                let e = oracle.weighted_gradients(T::from_count(n - m) * dt, &points, &dirs, pair_key(outer, n, m))?;
                value = value - e.value;
                var = var + e.std_error * e.std_error;
            }
            Ok((value, var.sqrt()))
        })
        .collect::<Result<Vec<_>>>()?;
    let allowance = c * dt.as_f64().sqrt();
    let mut b = ReportBuilder::new("mild-pathwise", scenario, ens.path().seed())
        .param("dt", dt.as_f64())
        .param("steps", ens.steps())
        .param("stream", outer)
        .param("c", c)
        .tolerance(format!("|r| <= 3 sigma + {c} sqrt(dt)"));
    b.point(
        0.0,
        (discrete.pair(ens, 0, phi)? - discrete.pair_initial(phi)?).as_f64(),
        0.0,
        allowance,
    );
    for (n, (r, s)) in terms.into_iter().enumerate() {
        let s = s.as_f64();
        b.point(ens.time(n + 1).as_f64(), r.as_f64(), s, 3.0 * s + allowance);
    }
    Ok(b.build())
}

/// Outer key reserved for the semigroup side of the expectation check.
const EXPECTATION_OUTER: u64 = u64::MAX;

/// `E <Y_t, phi>` over `paths` outer ensembles against an independent nested
/// Monte Carlo estimate of `<psi, S_t phi>`, at each `t` of `times`.
#[allow(clippy::too_many_arguments)]
pub fn mild_residual_expectation<T: Real>(
    discrete: &DiscreteInitial<T>,
    phi: Arc<dyn TestFunction<T>>,
    model: Arc<dyn SdeModel<T>>,
    times: &[T],
    dt: T,
    paths: usize,
    seed: u64,
    scenario: &str,
    c: f64,
) -> Result<VerificationReport> {
    let oracle = MonteCarloSemigroup::new(model.clone(), phi.clone(), dt, paths, seed)?;
    let indices = times.iter().map(|&t| grid_steps(t, dt)).collect::<Result<Vec<_>>>()?;
    let horizon = indices.iter().copied().max().unwrap_or(0);
    let samples: Vec<Vec<T>> = if horizon == 0 {
        vec![vec![discrete.pair_initial(phi.as_ref())?; indices.len()]; paths]
    } else {
        (0..paths)
            .into_par_iter()
            .map(|m| {
                let ens = simulate_flow(
                    model.clone(),
                    discrete.nodes(),
                    T::from_count(horizon) * dt,
                    dt,
                    seed,
                    m as u64,
                )?;
                indices.iter().map(|&n| discrete.pair(&ens, n, phi.as_ref())).collect()
            })
            .collect::<Result<_>>()?
    };
    let allowance = c * dt.as_f64().sqrt();
    let mut b = ReportBuilder::new("mild-expectation", scenario, seed)
        .param("dt", dt.as_f64())
        .param("paths", paths)
        .param("c", c)
        .tolerance(format!("|r| <= 3 sigma + {c} sqrt(dt)"));
    for (col, &n) in indices.iter().enumerate() {
        let column: Vec<T> = samples.iter().map(|s| s[col]).collect();
        let (lhs, rhs) = if n == 0 {
            let exact = Estimate::exact(discrete.pair_initial(phi.as_ref())?);
            (exact, exact)
        } else {
            let key = InnerKey {
                outer: EXPECTATION_OUTER,
                time_index: n as u64,
            };
            let rhs = initial_semigroup_pairing(discrete, &oracle, T::from_count(n) * dt, key)?;
            (Estimate::from_samples(&column), rhs)
        };
        let sigma = (lhs.std_error * lhs.std_error + rhs.std_error * rhs.std_error)
            .sqrt()
            .as_f64();
        b.point(
            (T::from_count(n) * dt).as_f64(),
            (lhs.value - rhs.value).as_f64(),
            sigma,
            3.0 * sigma + allowance,
        );
    }
    Ok(b.build())
}

/// `f(X(t, x)) - S_t f(x) - sum_{m<n} sum_i dB_i[m] (A_i S_{t - t_m} f)(X(t_m, x))`
/// at the horizon `t` of `ens`, for the trajectory started at node 0.
pub fn martingale_repr_residual<T: Real>(
    f: &dyn TestFunction<T>,
    ens: &FlowEnsemble<T>,
    oracle: &dyn SemigroupOracle<T>,
) -> Result<Estimate<T>> {
    let model = ens.model().as_ref();
    let (d, r) = (model.dim(), model.noise_dim());
    let steps = ens.steps();
    let dt = ens.dt();
    let outer = ens.path().stream();
    let x = ens.node(0);
    let mean = oracle.weighted_values(
        T::from_count(steps) * dt,
        x,
        &[T::one()],
        pair_key(outer, steps, u32::MAX as usize),
    )?;
    let terms = (0..steps)
        .into_par_iter()
        .map(|m| {
            let y = ens.state(m, 0);
            let db = ens.path().increment(m);
            let mut sigma = vec![T::zero(); d * r];
            model.diffusion(y, &mut sigma);
            let dirs: Vec<T> = (0..d).map(|l| (0..r).map(|i| sigma[l * r + i] * db[i]).sum()).collect();
            oracle.weighted_gradients(T::from_count(steps - m) * dt, y, &dirs, pair_key(outer, steps, m))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut value = f.value(ens.state(steps, 0)) - mean.value;
    let mut var = mean.std_error * mean.std_error;
    for e in terms {
        value = value - e.value;
        var = var + e.std_error * e.std_error;
    }
    Ok(Estimate {
        value,
        std_error: var.sqrt(),
    })
}

/// Aggregates per-path martingale residuals: the RMS must stay within
/// `3 sigma_rms + c sqrt(dt)`.
pub fn martingale_repr_report<T: Real>(
    residuals: &[Estimate<T>],
    t: T,
    dt: T,
    scenario: &str,
    seed: u64,
    c: f64,
) -> VerificationReport {
    let n = residuals.len().max(1) as f64;
    let rms = (residuals.iter().map(|e| e.value.as_f64().powi(2)).sum::<f64>() / n).sqrt();
    let sigma = (residuals.iter().map(|e| e.std_error.as_f64().powi(2)).sum::<f64>() / n).sqrt();
    let max = residuals.iter().map(|e| e.value.as_f64().abs()).fold(0.0, f64::max);
    let mut b = ReportBuilder::new("martingale", scenario, seed)
        .param("paths", residuals.len())
        .param("dt", dt.as_f64())
        .param("c", c)
        .param("max_abs_residual", max)
        .tolerance(format!("rms <= 3 sigma + {c} sqrt(dt)"));
    b.labeled_point("rms", t.as_f64(), rms, sigma, 3.0 * sigma + c * dt.as_f64().sqrt());
    b.build()
}

/// `<S_t* psi - S_s* psi, phi> - int_s^t <S_u* psi, L phi> du` (trapezoid on
/// the grid) as a mean over `paths` outer ensembles.
///
/// Each path contributes
/// `<Y_t, phi> - <Y_s, phi> - int_s^t <Y_u, L phi> du - sum_{s <= t_m < t} <Y_m, A_i phi> dB_i[m]`.
/// The subtracted Itô sum has
/// mean exactly zero under Euler–Maruyama, so it only removes variance.
#[allow(clippy::too_many_arguments)]
pub fn generator_identity_residual<T: Real>(
    discrete: &DiscreteInitial<T>,
    phi: &dyn TestFunction<T>,
    model: Arc<dyn SdeModel<T>>,
    s: T,
    t: T,
    dt: T,
    paths: usize,
    seed: u64,
) -> Result<Estimate<T>> {
    require_point_data(discrete, "the generator identity")?;
    if s > t {
        return Err(Error::InvalidArgument(format!(
            "generator identity needs s <= t, got s = {s}, t = {t}"
        )));
    }
    if paths < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 paths, got {paths}")));
    }
    let (ns, nt) = (grid_steps(s, dt)?, grid_steps(t, dt)?);
    if ns == nt {
        return Ok(Estimate::exact(T::zero()));
    }
    let half = T::lit(0.5);
    let samples = (0..paths)
        .into_par_iter()
        .map(|m| {
            let ens = simulate_flow(model.clone(), discrete.nodes(), t, dt, seed, m as u64)?;
            let pr = pairings_window(discrete, &ens, phi, ns, nt)?;
            let mut v = pr[nt - ns].0 - pr[0].0;
            for (k, (_, l, a)) in pr.iter().enumerate() {
                let w = if k == 0 || k == nt - ns { half } else { T::one() };
                v = v - w * *l * dt;
                if k < nt - ns {
                    let db = ens.path().increment(ns + k);
                    v = v - a.iter().zip(db).map(|(&ai, &b)| ai * b).sum::<T>();
                }
            }
            Ok(v)
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(Estimate::from_samples(&samples))
}

// pairings for n in ns..=nt, sequential (called inside an outer parallel loop)
fn pairings_window<T: Real>(
    discrete: &DiscreteInitial<T>,
    ens: &FlowEnsemble<T>,
    phi: &dyn TestFunction<T>,
    ns: usize,
    nt: usize,
) -> Result<Vec<(T, T, Vec<T>)>> {
    let mut scratch = OperatorScratch::new(ens.model().as_ref(), phi)?;
    (ns..=nt)
        .map(|n| pair_all(discrete, ens, phi, n, &mut scratch))
        .collect()
}

/// Total-variation estimates of `t -> S_t* psi` in `S_{-q}` on dyadic
/// partitions of `[0, T]` with `2, 4, ..., 2^levels` intervals, and the
/// bound `int_0^T |S_u* L* psi|_{-q} du`.
#[derive(Clone, Debug, PartialEq)]
pub struct TvEstimate<T> {
    pub intervals: Vec<usize>,
    pub tv: Vec<T>,
    pub integral_bound: T,
}

/// The coefficients of `S_t* psi` are averaged over `paths` ensembles after
/// subtracting the Itô sums `sum_m <Y_m, A_i h_k> dB_i[m]`, which have mean
/// zero; the derivative `S_u* L* psi` has coefficients `E <Y_u, L h_k>`.
#[allow(clippy::too_many_arguments)]
pub fn semigroup_tv_estimate<T: Real>(
    discrete: &DiscreteInitial<T>,
    model: Arc<dyn SdeModel<T>>,
    t_end: T,
    levels: usize,
    dt: T,
    trunc: usize,
    paths: usize,
    seed: u64,
    q: T,
) -> Result<TvEstimate<T>> {
    require_point_data(discrete, "the variation estimate")?;
    if levels < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 refinement levels, got {levels}"
        )));
    }
    if paths < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 paths, got {paths}")));
    }
    let steps = grid_steps(t_end, dt)?;
    if steps % (1 << levels) != 0 {
        return Err(Error::MisalignedGrid {
            time: t_end.as_f64(),
            dt: (t_end / T::from_count(1 << levels)).as_f64(),
        });
    }
    let set = IndexSet::new(discrete.dim(), trunc)?;
    let len = set.len();
    let width = (steps + 1) * len;
    let (sum_c, sum_g) = (0..paths)
        .into_par_iter()
        .map(|m| -> Result<(Vec<T>, Vec<T>)> {
            let ens = simulate_flow(model.clone(), discrete.nodes(), t_end, dt, seed, m as u64)?;
            tv_sample(discrete, &ens, &set)
        })
        .try_reduce(
            || (vec![T::zero(); width], vec![T::zero(); width]),
            |mut a, b| {
                for (x, y) in a.0.iter_mut().zip(&b.0) {
                    *x = *x + *y;
                }
                for (x, y) in a.1.iter_mut().zip(&b.1) {
                    *x = *x + *y;
                }
                Ok(a)
            },
        )?;
    let pf = T::from_count(paths);
    let index = SobolevIndex::new(-q)?;
    let mean_at = |sum: &[T], n: usize| -> Result<CoeffVector<T>> {
        CoeffVector::from_values(
            discrete.dim(),
            trunc,
            sum[n * len..(n + 1) * len].iter().map(|&v| v / pf).collect(),
        )
    };
    let mut intervals = Vec::with_capacity(levels);
    let mut tv = Vec::with_capacity(levels);
    for level in 1..=levels {
        let count = 1 << level;
        let stride = steps / count;
        let mut total = T::zero();
        for i in 0..count {
            let diff = mean_at(&sum_c, (i + 1) * stride)?.axpy(-T::one(), &mean_at(&sum_c, i * stride)?)?;
            total = total + sobolev_norm(&diff, index);
        }
        intervals.push(count);
        tv.push(total);
    }
    let mut integral_bound = T::zero();
    for n in 0..=steps {
        let w = if n == 0 || n == steps { T::lit(0.5) } else { T::one() };
        integral_bound = integral_bound + w * dt * sobolev_norm(&mean_at(&sum_g, n)?, index);
    }
    Ok(TvEstimate {
        intervals,
        tv,
        integral_bound,
    })
}

// Per-ensemble (corrected coefficients, generator coefficients) at every step.
fn tv_sample<T: Real>(
    discrete: &DiscreteInitial<T>,
    ens: &FlowEnsemble<T>,
    set: &IndexSet,
) -> Result<(Vec<T>, Vec<T>)> {
    let model = ens.model().as_ref();
    let (d, r) = (model.dim(), model.noise_dim());
    let len = set.len();
    let steps = ens.steps();
    let mut c = vec![T::zero(); (steps + 1) * len];
    let mut g = vec![T::zero(); (steps + 1) * len];
    let mut ito = vec![T::zero(); len];
    let half = T::lit(0.5);
    for n in 0..=steps {
        let (cn, gn) = (&mut c[n * len..(n + 1) * len], &mut g[n * len..(n + 1) * len]);
        let db = (n < steps).then(|| ens.path().increment(n));
        let mut next_ito = ito.clone();
        for (j, &w) in discrete.weights().iter().enumerate() {
            if w == T::zero() {
                continue;
            }
            let y = ens.state(n, j);
            let jet = BasisJet::at(set, y);
            let mj = ModelJet::at(model, y);
            for k in 0..len {
                let grad = &jet.gradients[k * d..(k + 1) * d];
                let hess = &jet.hessians[k * d * d..(k + 1) * d * d];
                let mut lh = T::zero();
                for a in 0..d {
                    lh = lh + mj.drift[a] * grad[a];
                    for bb in 0..d {
                        lh = lh + half * mj.a(a, bb) * hess[a * d + bb];
                    }
                }
                cn[k] = cn[k] + w * jet.values[k];
                gn[k] = gn[k] + w * lh;
                if let Some(db) = db {
                    let mut ah = T::zero();
                    for (i, &dbi) in db.iter().enumerate().take(r) {
                        let s: T = (0..d).map(|l| mj.sigma(l, i) * grad[l]).sum();
                        ah = ah + s * dbi;
                    }
                    next_ito[k] = next_ito[k] + w * ah;
                }
            }
        }
        for k in 0..len {
            cn[k] = cn[k] - ito[k];
        }
        ito = next_ito;
    }
    Ok((c, g))
}

/// `E |Z_{t_n}(psi)|^2_{-p}` at every grid time, averaged over `paths`
/// ensembles, at truncation `trunc`.
#[allow(clippy::too_many_arguments)]
pub fn second_moment_profile<T: Real>(
    discrete: &DiscreteInitial<T>,
    model: Arc<dyn SdeModel<T>>,
    t_end: T,
    dt: T,
    trunc: usize,
    paths: usize,
    seed: u64,
    p: T,
) -> Result<Vec<T>> {
    if paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let index = SobolevIndex::new(-p)?;
    let steps = grid_steps(t_end, dt)?;
    let sums = (0..paths)
        .into_par_iter()
        .map(|m| -> Result<Vec<T>> {
            let ens = simulate_flow(model.clone(), discrete.nodes(), t_end, dt, seed, m as u64)?;
            (0..=steps)
                .map(|n| Ok(sobolev_norm(&discrete.coefficients(&ens, n, trunc)?, index).powi(2)))
                .collect()
        })
        .try_reduce(
            || vec![T::zero(); steps + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x = *x + *y;
                }
                Ok(a)
            },
        )?;
    let pf = T::from_count(paths);
    Ok(sums.into_iter().map(|v| v / pf).collect())
}

fn determinant<T: Real>(m: &[T], d: usize) -> T {
    match d {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => unreachable!("dimension is capped at 3"),
    }
}

/// Checks `E |Z_t(psi_1) - Z_t(psi_2)|_0^2 <= e^{(C_K + eps) t} |psi_1 - psi_2|_0^2`
/// at every grid time. `|Z_t(f)|_0^2 = int f(x)^2 / |det J(t, x)| dx` is
/// evaluated exactly by change of variables on the flow nodes.
#[allow(clippy::too_many_arguments)]
pub fn uniqueness_proxy<T: Real>(
    psi1: &Bump<T>,
    psi2: &Bump<T>,
    model: Arc<dyn SdeModel<T>>,
    t_end: T,
    dt: T,
    paths: usize,
    seed: u64,
    c_k: T,
    eps: T,
    nodes_per_axis: usize,
    scenario: &str,
) -> Result<VerificationReport> {
    if paths < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 paths, got {paths}")));
    }
    let d = model.dim();
    let (lo1, hi1) = psi1.support().expect("bump support").bounding_box();
    let (lo2, hi2) = psi2.support().expect("bump support").bounding_box();
    let lo: Vec<T> = lo1.iter().zip(&lo2).map(|(&a, &b)| a.min(b)).collect();
    let hi: Vec<T> = hi1.iter().zip(&hi2).map(|(&a, &b)| a.max(b)).collect();
    let rule = gauss_legendre_box(nodes_per_axis, &lo, &hi)?;
    let f2: Vec<T> = (0..rule.len())
        .map(|q| {
            let v = psi1.value(rule.node(q)) - psi2.value(rule.node(q));
            rule.weights()[q] * v * v
        })
        .collect();
    let norm0: T = f2.iter().copied().sum();
    let steps = grid_steps(t_end, dt)?;
    let samples = (0..paths)
        .into_par_iter()
        .map(|m| -> Result<Vec<T>> {
            let ens = simulate_flow(model.clone(), rule.nodes(), t_end, dt, seed, m as u64)?;
            Ok((0..=steps)
                .map(|n| {
                    f2.iter()
                        .enumerate()
                        .map(|(j, &w)| w / determinant(ens.jacobian(n, j), d).abs())
                        .sum()
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    let mut b = ReportBuilder::new("uniqueness", scenario, seed)
        .param("C_K", c_k.as_f64())
        .param("eps", eps.as_f64())
        .param("paths", paths)
        .param("dt", dt.as_f64())
        .param("norm0_sq", norm0.as_f64())
        .tolerance("excess over the exponential bound <= 3 sigma, relative to |psi_1 - psi_2|^2");
    let mut column = vec![T::zero(); paths];
    for n in 0..=steps {
        for (c, s) in column.iter_mut().zip(&samples) {
            *c = s[n];
        }
        let e = Estimate::from_samples(&column);
        let t = T::from_count(n) * dt;
        let rhs = ((c_k + eps) * t).exp() * norm0;
        let excess = ((e.value - rhs) / norm0).max(T::zero()).as_f64();
        let sigma = (e.std_error / norm0).as_f64();
        b.point(t.as_f64(), excess, sigma, 3.0 * sigma);
    }
    Ok(b.build())
}

/// Nodes per axis for projecting the outside bump.
const LEAKAGE_RULE_NODES: usize = 128;

/// Pairs `Z_{t_n}(psi)` with a bump supported outside `B(0, R)`. Before the
/// exit time `tau_R` of the flowed support the direct pairing must vanish
/// exactly; the truncated-coefficient pairing is recorded as a leakage
/// diagnostic against `leakage_tol`. Grid times at or after the first
/// grid exit are only reported, since the exit overshoots on a grid.
#[allow(clippy::too_many_arguments)]
pub fn support_containment_check<T: Real>(
    discrete: &DiscreteInitial<T>,
    ens: &FlowEnsemble<T>,
    radius: T,
    phi_out: &Bump<T>,
    trunc: usize,
    leakage_tol: f64,
    scenario: &str,
) -> Result<VerificationReport> {
    discrete.check_ensemble(ens)?;
    let gap = crate::flow::norm(&phi_out.center) - phi_out.scale;
    if gap < radius {
        return Err(Error::OverlappingSupports(format!(
            "outside bump reaches radius {gap}, inside B(0, {radius})"
        )));
    }
    let lambda = discrete.source().support_radius();
    if lambda >= radius {
        return Err(Error::OverlappingSupports(format!(
            "initial support radius {lambda} is not inside B(0, {radius})"
        )));
    }
    let tau = ens.hitting_time(lambda, radius)?;
    let (lo, hi) = phi_out.support().expect("bump support").bounding_box();
    let rule = gauss_legendre_box(LEAKAGE_RULE_NODES, &lo, &hi)?;
    let out_coeffs = project_function(|x: &[T]| phi_out.value(x), trunc, &rule)?;
    let mut b = ReportBuilder::new("support", scenario, ens.path().seed())
        .param("radius", radius.as_f64())
        .param("lambda", lambda.as_f64())
        .param("tau", if tau.is_finite() { Some(tau.as_f64()) } else { None })
        .param("trunc", trunc)
        .param("stream", ens.path().stream())
        .tolerance(format!(
            "direct pairing exactly 0 before tau; leakage <= {leakage_tol:e}"
        ));
    // For point masses the coefficient pairing is the pointwise truncation
    // error of the outside bump, so it is recorded but not enforced.
    let enforce_leakage = discrete.kind() == DiscreteKind::Smooth;
    let mut first_nonzero = None;
    let mut max_leak = 0.0f64;
    for n in 0..=ens.steps() {
        let t = ens.time(n);
        let direct = discrete.pair(ens, n, phi_out)?;
        if t < tau {
            let z = discrete.coefficients(ens, n, trunc)?;
            let leak: T = z.values().iter().zip(out_coeffs.values()).map(|(&a, &c)| a * c).sum();
            max_leak = max_leak.max(leak.as_f64().abs());
            b.labeled_point("direct", t.as_f64(), direct.as_f64(), 0.0, 0.0);
            if enforce_leakage {
                b.labeled_point("leakage", t.as_f64(), leak.as_f64(), 0.0, leakage_tol);
            }
        } else if first_nonzero.is_none() && direct != T::zero() {
            first_nonzero = Some(t.as_f64());
        }
    }
    if !enforce_leakage {
        b.note("leakage not enforced for point-mass data: it equals the truncation error of the outside bump at the flowed point");
    }
    b.set_param("max_leakage", max_leak);
    b.set_param("first_nonzero_time", first_nonzero);
    Ok(b.build())
}
