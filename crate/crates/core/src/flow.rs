//! Euler–Maruyama simulation of the stochastic flow `x -> X(t, x)`.
//!
//! Every node of an ensemble is driven by the same Brownian increments, so an
//! ensemble samples one realization of the flow map at finitely many points.
//! Jacobians follow the variational recursion
//! `J_{n+1} = J_n + (sum_k d sigma_.k dB_k) J_n + (grad b) J_n dt`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{OrnsteinUhlenbeck, SdeModel};
use crate::rng::{stream_id, BrownianPath, StreamPurpose};
use crate::scalar::Real;

/// Simulated flow on a finite node set.
#[derive(Clone)]
pub struct FlowEnsemble<T: Real> {
    model: Arc<dyn SdeModel<T>>,
    dim: usize,
    nodes: Vec<T>,
    /// `states[(n * nodes + j) * d + i]`
    states: Vec<T>,
    /// `jacobians[((n * nodes + j) * d + i) * d + l] = d X_i / d x_l`
    jacobians: Vec<T>,
    path: BrownianPath<T>,
    scheme: Scheme<T>,
}

/// Time stepper that produced an ensemble; single points are re-propagated
/// with the same map.
#[derive(Clone, Debug)]
enum Scheme<T> {
    EulerMaruyama,
    ExactOu(OrnsteinUhlenbeck<T>),
}

/// Number of grid steps covering `[0, t_end]`, or an error if `t_end` is not
/// a multiple of `dt`.
pub fn grid_steps<T: Real>(t_end: T, dt: T) -> Result<usize> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if t_end < T::zero() {
        return Err(Error::InvalidArgument(format!("negative time {t_end}")));
    }
    let ratio = (t_end / dt).as_f64();
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
        return Err(Error::MisalignedGrid {
            time: t_end.as_f64(),
            dt: dt.as_f64(),
        });
    }
    Ok(steps as usize)
}

// Buffers for one Euler–Maruyama step, reused along a trajectory.
pub(crate) struct StepScratch<T> {
    drift: Vec<T>,
    drift_jacobian: Vec<T>,
    sigma: Vec<T>,
    dsigma: Vec<T>,
    g: Vec<T>,
    next: Vec<T>,
}

impl<T: Real> StepScratch<T> {
    pub(crate) fn new(d: usize, r: usize) -> Self {
        Self {
            drift: vec![T::zero(); d],
            drift_jacobian: vec![T::zero(); d * d],
            sigma: vec![T::zero(); d * r],
            dsigma: vec![T::zero(); d * r * d],
            g: vec![T::zero(); d * d],
            next: vec![T::zero(); d * d],
        }
    }
}

// One Euler–Maruyama step for a single point and its Jacobian.
pub(crate) fn em_step<T: Real>(
    model: &dyn SdeModel<T>,
    x: &mut [T],
    jac: &mut [T],
    db: &[T],
    dt: T,
    s: &mut StepScratch<T>,
) {
    let (d, r) = (model.dim(), model.noise_dim());
    model.drift(x, &mut s.drift);
    model.drift_jacobian(x, &mut s.drift_jacobian);
    model.diffusion(x, &mut s.sigma);
    model.diffusion_gradient(x, &mut s.dsigma);
    // G = sum_k (d sigma_.k) dB_k + (grad b) dt, a d x d matrix
    for i in 0..d {
        for l in 0..d {
            let mut v = s.drift_jacobian[i * d + l] * dt;
            for (k, &dbk) in db.iter().enumerate().take(r) {
                v = v + s.dsigma[(i * r + k) * d + l] * dbk;
            }
            s.g[i * d + l] = v;
        }
    }
    for i in 0..d {
        for l in 0..d {
            let mut v = jac[i * d + l];
            for m in 0..d {
                v = v + s.g[i * d + m] * jac[m * d + l];
            }
            s.next[i * d + l] = v;
        }
    }
    jac.copy_from_slice(&s.next);
    for (i, xi) in x.iter_mut().enumerate().take(d) {
        let mut dx = s.drift[i] * dt;
        for (k, &dbk) in db.iter().enumerate().take(r) {
            dx = dx + s.sigma[i * r + k] * dbk;
        }
        *xi = *xi + dx;
    }
}

fn identity<T: Real>(d: usize) -> Vec<T> {
    let mut m = vec![T::zero(); d * d];
    for i in 0..d {
        m[i * d + i] = T::one();
    }
    m
}

/// Propagates one point along `path` from step `from` to step `to`, returning
/// the final state and Jacobian.
pub fn propagate<T: Real>(
    model: &dyn SdeModel<T>,
    x0: &[T],
    path: &BrownianPath<T>,
    from: usize,
    to: usize,
) -> Result<(Vec<T>, Vec<T>)> {
    check_path(model, path)?;
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x0.len(),
        });
    }
    if from > to || to > path.steps() {
        return Err(Error::OutOfRange {
            value: to as f64,
            lo: from as f64,
            hi: path.steps() as f64,
        });
    }
    let mut x = x0.to_vec();
    let mut jac = identity(model.dim());
    let mut scratch = StepScratch::new(model.dim(), model.noise_dim());
    for n in from..to {
        em_step(model, &mut x, &mut jac, path.increment(n), path.dt(), &mut scratch);
    }
    Ok((x, jac))
}

fn check_path<T: Real>(model: &dyn SdeModel<T>, path: &BrownianPath<T>) -> Result<()> {
    if path.noise_dim() != model.noise_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.noise_dim(),
            found: path.noise_dim(),
        });
    }
    Ok(())
}

/// Simulates the flow from every node (flat, `d` coordinates per node) up to
/// `t_end`, drawing increments from the stream of `ensemble_id`.
pub fn simulate_flow<T: Real>(
    model: Arc<dyn SdeModel<T>>,
    nodes: &[T],
    t_end: T,
    dt: T,
    seed: u64,
    ensemble_id: u64,
) -> Result<FlowEnsemble<T>> {
    let steps = grid_steps(t_end, dt)?;
    if steps == 0 {
        return Err(Error::InvalidArgument(format!(
            "horizon {t_end} is shorter than one step {dt}"
        )));
    }
    let path = BrownianPath::generate(
        seed,
        stream_id(ensemble_id, StreamPurpose::Flow),
        model.noise_dim(),
        steps,
        dt,
    )?;
    simulate_flow_on_path(model, nodes, path)
}

/// Simulates the flow along a given Brownian path.
pub fn simulate_flow_on_path<T: Real>(
    model: Arc<dyn SdeModel<T>>,
    nodes: &[T],
    path: BrownianPath<T>,
) -> Result<FlowEnsemble<T>> {
    check_path(model.as_ref(), &path)?;
    let d = model.dim();
    if nodes.is_empty() || !nodes.len().is_multiple_of(d) {
        return Err(Error::ShapeMismatch(format!(
            "{} node coordinates do not form points in dimension {d}",
            nodes.len()
        )));
    }
    let count = nodes.len() / d;
    let steps = path.steps();
    let trajectories: Vec<(Vec<T>, Vec<T>)> = (0..count)
        .into_par_iter()
        .map(|j| -> Result<(Vec<T>, Vec<T>)> {
            let mut x = nodes[j * d..(j + 1) * d].to_vec();
            let mut jac = identity(d);
            let mut scratch = StepScratch::new(d, model.noise_dim());
            let mut xs = Vec::with_capacity((steps + 1) * d);
            let mut js = Vec::with_capacity((steps + 1) * d * d);
            xs.extend_from_slice(&x);
            js.extend_from_slice(&jac);
            for n in 0..steps {
                em_step(
                    model.as_ref(),
                    &mut x,
                    &mut jac,
                    path.increment(n),
                    path.dt(),
                    &mut scratch,
                );
                if d == 1 && (jac[0] <= T::zero() || !jac[0].is_finite()) {
                    return Err(Error::JacobianSignChange { node: j, step: n + 1 });
                }
                xs.extend_from_slice(&x);
                js.extend_from_slice(&jac);
            }
            Ok((xs, js))
        })
        .collect::<Result<_>>()?;
    Ok(FlowEnsemble::from_trajectories(
        model,
        nodes.to_vec(),
        trajectories,
        path,
    ))
}

/// Flow of the Ornstein–Uhlenbeck model by its exponential scheme
/// `X_{n+1} = e^{-lambda dt} (X_n + s dB_n)`, i.e.
/// `X(t_n) = e^{-lambda t_n} x + s sum_{m<n} e^{-lambda (t_n - t_m)} dB_m`,
/// the closed form with the stochastic integral taken on the same increments.
pub fn exact_ou_flow<T: Real>(
    ou: &OrnsteinUhlenbeck<T>,
    nodes: &[T],
    path: BrownianPath<T>,
) -> Result<FlowEnsemble<T>> {
    let model: Arc<dyn SdeModel<T>> = Arc::new(ou.clone());
    check_path(model.as_ref(), &path)?;
    let d = model.dim();
    if nodes.is_empty() || !nodes.len().is_multiple_of(d) {
        return Err(Error::ShapeMismatch("bad node array".into()));
    }
    let count = nodes.len() / d;
    let trajectories = (0..count)
        .map(|j| exact_ou_trajectory(ou, &nodes[j * d..(j + 1) * d], &path, 0, path.steps()))
        .collect();
    let mut ens = FlowEnsemble::from_trajectories(model, nodes.to_vec(), trajectories, path);
    ens.scheme = Scheme::ExactOu(ou.clone());
    Ok(ens)
}

/// States and Jacobians at steps `from..=to` of the exact Ornstein–Uhlenbeck
/// recursion `x <- e^{-lambda dt}(x + s dB)`.
fn exact_ou_trajectory<T: Real>(
    ou: &OrnsteinUhlenbeck<T>,
    x0: &[T],
    path: &BrownianPath<T>,
    from: usize,
    to: usize,
) -> (Vec<T>, Vec<T>) {
    let d = x0.len();
    let decay = ou.decay(path.dt());
    let mut x = x0.to_vec();
    let mut xs = x.clone();
    let mut js = identity::<T>(d);
    let mut scale = T::one();
    for n in from..to {
        for (xi, &db) in x.iter_mut().zip(path.increment(n)) {
            *xi = decay * (*xi + ou.s * db);
        }
        scale = scale * decay;
        xs.extend_from_slice(&x);
        let mut jac = identity::<T>(d);
        jac.iter_mut().for_each(|v| *v = *v * scale);
        js.extend_from_slice(&jac);
    }
    (xs, js)
}

impl<T: Real> FlowEnsemble<T> {
    fn from_trajectories(
        model: Arc<dyn SdeModel<T>>,
        nodes: Vec<T>,
        trajectories: Vec<(Vec<T>, Vec<T>)>,
        path: BrownianPath<T>,
    ) -> Self {
        let d = model.dim();
        let count = trajectories.len();
        let steps = path.steps();
        let mut states = vec![T::zero(); (steps + 1) * count * d];
        let mut jacobians = vec![T::zero(); (steps + 1) * count * d * d];
        for (j, (xs, js)) in trajectories.into_iter().enumerate() {
            for n in 0..=steps {
                let s = (n * count + j) * d;
                states[s..s + d].copy_from_slice(&xs[n * d..(n + 1) * d]);
                let t = s * d;
                jacobians[t..t + d * d].copy_from_slice(&js[n * d * d..(n + 1) * d * d]);
            }
        }
        Self {
            model,
            dim: d,
            nodes,
            states,
            jacobians,
            path,
            scheme: Scheme::EulerMaruyama,
        }
    }

    pub fn model(&self) -> &Arc<dyn SdeModel<T>> {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn node(&self, j: usize) -> &[T] {
        &self.nodes[j * self.dim..(j + 1) * self.dim]
    }

    pub fn steps(&self) -> usize {
        self.path.steps()
    }

    pub fn dt(&self) -> T {
        self.path.dt()
    }

    pub fn time(&self, n: usize) -> T {
        self.path.dt() * T::from_count(n)
    }

    pub fn path(&self) -> &BrownianPath<T> {
        &self.path
    }

    /// `X(t_n, x_j)`
    pub fn state(&self, n: usize, j: usize) -> &[T] {
        let s = (n * self.num_nodes() + j) * self.dim;
        &self.states[s..s + self.dim]
    }

    /// `d X(t_n, x_j) / d x`, row-major `d x d`.
    pub fn jacobian(&self, n: usize, j: usize) -> &[T] {
        let s = (n * self.num_nodes() + j) * self.dim * self.dim;
        &self.jacobians[s..s + self.dim * self.dim]
    }

    /// Re-simulates a single point on this ensemble's Brownian path.
    pub fn propagate_point(&self, x0: &[T], n: usize) -> Result<(Vec<T>, Vec<T>)> {
        match &self.scheme {
            Scheme::EulerMaruyama => propagate(self.model.as_ref(), x0, &self.path, 0, n),
            Scheme::ExactOu(ou) => {
                if x0.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: x0.len(),
                    });
                }
                if n > self.steps() {
                    return Err(Error::OutOfRange {
                        value: n as f64,
                        lo: 0.0,
                        hi: self.steps() as f64,
                    });
                }
                let (xs, js) = exact_ou_trajectory(ou, x0, &self.path, 0, n);
                let d = self.dim;
                Ok((xs[n * d..].to_vec(), js[n * d * d..].to_vec()))
            }
        }
    }

    /// Node indices sorted by position (`d = 1`).
    fn sorted_nodes(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.num_nodes()).collect();
        idx.sort_by(|&a, &b| self.nodes[a].partial_cmp(&self.nodes[b]).expect("finite nodes"));
        idx
    }

    /// `x` with `X(t_n, x) = y` in one dimension: bracket on the node grid,
    /// then safeguarded Newton on re-propagated single points.
    pub fn inverse_flow_1d(&self, n: usize, y: T) -> Result<T> {
        if self.dim != 1 {
            return Err(Error::Unsupported("inverse flow is implemented for d = 1".into()));
        }
        if n > self.steps() {
            return Err(Error::OutOfRange {
                value: n as f64,
                lo: 0.0,
                hi: self.steps() as f64,
            });
        }
        let order = self.sorted_nodes();
        let image: Vec<T> = order.iter().map(|&j| self.state(n, j)[0]).collect();
        if image.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::NonMonotoneFlow { step: n });
        }
        let (lo_y, hi_y) = (image[0], *image.last().expect("non-empty"));
        if y < lo_y || y > hi_y {
            return Err(Error::OutOfRange {
                value: y.as_f64(),
                lo: lo_y.as_f64(),
                hi: hi_y.as_f64(),
            });
        }
        let tol = T::lit(1e-8) * (T::one() + y.abs());
        let pos = image.partition_point(|&v| v < y);
        if pos < image.len() && (image[pos] - y).abs() <= tol {
            return Ok(self.nodes[order[pos]]);
        }
        if pos == 0 {
            return Ok(self.nodes[order[0]]);
        }
        let bracket = (self.nodes[order[pos - 1]], self.nodes[order[pos]]);
        self.invert_in_bracket(n, y, bracket, (image[pos - 1], image[pos]))
    }

    /// Safeguarded Newton for `X(t_n, x) = y` with `x` in `[a, b]`, where
    /// `images` are `X(t_n, a) <= y <= X(t_n, b)`.
    pub(crate) fn invert_in_bracket(&self, n: usize, y: T, (mut a, mut b): (T, T), (ya, yb): (T, T)) -> Result<T> {
        let tol = T::lit(1e-8) * (T::one() + y.abs());
        // linear interpolation inside the bracket as the starting guess
        let mut x = if yb > ya {
            a + (b - a) * (y - ya) / (yb - ya)
        } else {
            (a + b) * T::lit(0.5)
        };
        for _ in 0..100 {
            let (state, jac) = self.propagate_point(&[x], n)?;
            let f = state[0] - y;
            if f.abs() <= tol {
                return Ok(x);
            }
            if f > T::zero() {
                b = x;
            } else {
                a = x;
            }
            let newton = x - f / jac[0];
            x = if jac[0] > T::zero() && newton > a && newton < b {
                newton
            } else {
                (a + b) * T::lit(0.5)
            };
            if b - a <= T::epsilon() * (T::one() + x.abs()) {
                break;
            }
        }
        let (state, _) = self.propagate_point(&[x], n)?;
        if (state[0] - y).abs() <= tol {
            Ok(x)
        } else {
            Err(Error::InversionFailed(y.as_f64()))
        }
    }

    /// First grid time with `max_{|x_j| <= lambda} |X(t_n, x_j)| >= radius`,
    /// or `+inf` if that never happens on the horizon.
    pub fn hitting_time(&self, lambda: T, radius: T) -> Result<T> {
        let inside: Vec<usize> = (0..self.num_nodes())
            .filter(|&j| norm(self.node(j)) <= lambda)
            .collect();
        if inside.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no ensemble node lies in the ball of radius {lambda}"
            )));
        }
        Ok(self
            .hitting_step(&inside, radius)
            .map_or(T::infinity(), |n| self.time(n)))
    }

    pub(crate) fn hitting_step(&self, nodes: &[usize], radius: T) -> Option<usize> {
        (0..=self.steps()).find(|&n| nodes.iter().any(|&j| norm(self.state(n, j)) >= radius))
    }

    /// Columns `n,t,j,x_j,X,J` (per-component columns when `d > 1`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim;
        if d == 1 {
            writeln!(w, "n,t,j,x_j,X,J")?;
        } else {
            let mut header = vec!["n".to_string(), "t".into(), "j".into()];
            header.extend((0..d).map(|i| format!("x_j_{i}")));
            header.extend((0..d).map(|i| format!("X_{i}")));
            header.extend((0..d * d).map(|il| format!("J_{}{}", il / d, il % d)));
            writeln!(w, "{}", header.join(","))?;
        }
        for n in 0..=self.steps() {
            for j in 0..self.num_nodes() {
                let mut row = vec![n.to_string(), format!("{:e}", self.time(n)), j.to_string()];
                row.extend(self.node(j).iter().map(|v| format!("{v:e}")));
                row.extend(self.state(n, j).iter().map(|v| format!("{v:e}")));
                row.extend(self.jacobian(n, j).iter().map(|v| format!("{v:e}")));
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

pub(crate) fn norm<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// `|X(t + s, x) - X(s, X(t, x), theta_t omega)|`, the discrepancy between a
/// straight run and a restart from the time-`t` state on the shifted path.
pub fn flow_composition_residual<T: Real>(
    model: Arc<dyn SdeModel<T>>,
    x: &[T],
    t: T,
    s: T,
    dt: T,
    seed: u64,
) -> Result<T> {
    let nt = grid_steps(t, dt)?;
    let ns = grid_steps(s, dt)?;
    let path = BrownianPath::generate(seed, stream_id(0, StreamPurpose::Flow), model.noise_dim(), nt + ns, dt)?;
    let (straight, _) = propagate(model.as_ref(), x, &path, 0, nt + ns)?;
    let (mid, _) = propagate(model.as_ref(), x, &path, 0, nt)?;
    let shifted = path.shifted(nt)?;
    let (restarted, _) = propagate(model.as_ref(), &mid, &shifted, 0, ns)?;
    Ok(straight
        .iter()
        .zip(&restarted)
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), T::max))
}

/// Uniformly spaced nodes on `[lo, hi]` (`count >= 2`).
pub fn uniform_nodes<T: Real>(lo: T, hi: T, count: usize) -> Vec<T> {
    assert!(count >= 2);
    let h = (hi - lo) / T::from_count(count - 1);
    (0..count).map(|j| lo + h * T::from_count(j)).collect()
}
