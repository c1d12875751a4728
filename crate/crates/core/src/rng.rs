//! Reproducible random streams and Brownian increments.
//!
//! Every random draw comes from a ChaCha8 generator keyed by the run seed and
//! a 64-bit stream id. Stream ids are hashes of an ensemble id and a purpose
//! tag, so outer paths, nested inner ensembles and bump trials never share a
//! stream and results do not depend on scheduling.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    /// Brownian increments of an outer ensemble.
    Flow,
    /// Brownian increments of a nested inner ensemble.
    InnerFlow,
    /// Random test-function parameters.
    Trials,
    /// Paths of a plain Monte Carlo semigroup estimate.
    Semigroup,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Flow => 0x666c_6f77,
            StreamPurpose::InnerFlow => 0x696e_6e72,
            StreamPurpose::Trials => 0x7472_6c73,
            StreamPurpose::Semigroup => 0x736d_6770,
        }
    }
}

/// The splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `hash(ensemble id, purpose)`
pub fn stream_id(ensemble_id: u64, purpose: StreamPurpose) -> u64 {
    mix64(mix64(purpose.tag()) ^ ensemble_id)
}

/// Stream for an inner ensemble keyed by `(outer path, time index, replica)`.
pub fn nested_stream_id(outer: u64, time_index: u64, replica: u64) -> u64 {
    let key = mix64(mix64(mix64(outer) ^ time_index) ^ replica);
    stream_id(key, StreamPurpose::InnerFlow)
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Increments `dB[n][k]` of an `r`-dimensional Brownian motion on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath<T> {
    dt: T,
    noise_dim: usize,
    increments: Vec<T>,
    seed: u64,
    stream: u64,
}

impl<T: Real> BrownianPath<T> {
    /// Draws `steps` i.i.d. `N(0, dt I_r)` increments. Normals are drawn in
    /// `f64` and converted, so `f32` and `f64` runs see the same path.
    pub fn generate(seed: u64, stream: u64, noise_dim: usize, steps: usize, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let mut rng = stream_rng(seed, stream);
        let scale = dt.as_f64().sqrt();
        let increments = (0..steps * noise_dim)
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal) * scale))
            .collect();
        Ok(Self {
            dt,
            noise_dim,
            increments,
            seed,
            stream,
        })
    }

    pub fn from_increments(dt: T, noise_dim: usize, increments: Vec<T>) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if noise_dim == 0 || !increments.len().is_multiple_of(noise_dim) {
            return Err(Error::ShapeMismatch(format!(
                "{} increments do not split into {noise_dim} noise components",
                increments.len()
            )));
        }
        Ok(Self {
            dt,
            noise_dim,
            increments,
            seed: 0,
            stream: 0,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.noise_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// `dB[n]`, an `r`-vector.
    pub fn increment(&self, n: usize) -> &[T] {
        &self.increments[n * self.noise_dim..(n + 1) * self.noise_dim]
    }

    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    /// `B(t_n)`, with `B(0) = 0`.
    pub fn value(&self, n: usize) -> Vec<T> {
        let mut b = vec![T::zero(); self.noise_dim];
        for m in 0..n {
            for (bk, &db) in b.iter_mut().zip(self.increment(m)) {
                *bk = *bk + db;
            }
        }
        b
    }

    /// The shifted path `theta_{t_n} omega`: increments from step `n` on.
    pub fn shifted(&self, n: usize) -> Result<Self> {
        if n > self.steps() {
            return Err(Error::OutOfRange {
                value: n as f64,
                lo: 0.0,
                hi: self.steps() as f64,
            });
        }
        Ok(Self {
            dt: self.dt,
            noise_dim: self.noise_dim,
            increments: self.increments[n * self.noise_dim..].to_vec(),
            seed: self.seed,
            stream: self.stream,
        })
    }

    /// The first `steps` increments.
    pub fn truncated(&self, steps: usize) -> Self {
        let mut out = self.clone();
        out.increments.truncate(steps.min(self.steps()) * self.noise_dim);
        out
    }

    /// Sums blocks of `factor` consecutive increments: the same Brownian path
    /// on a grid `factor` times coarser.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.steps()
            )));
        }
        let r = self.noise_dim;
        let coarse_steps = self.steps() / factor;
        let mut increments = vec![T::zero(); coarse_steps * r];
        for n in 0..self.steps() {
            for k in 0..r {
                let c = (n / factor) * r + k;
                increments[c] = increments[c] + self.increments[n * r + k];
            }
        }
        Ok(Self {
            dt: self.dt * T::from_count(factor),
            noise_dim: r,
            increments,
            seed: self.seed,
            stream: self.stream,
        })
    }

    /// Replay format: `dt,noise_dim,seed,stream` header, then `n,k,dB` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dt,noise_dim,seed,stream")?;
        writeln!(w, "{:e},{},{},{}", self.dt, self.noise_dim, self.seed, self.stream)?;
        writeln!(w, "n,k,dB")?;
        for n in 0..self.steps() {
            for (k, db) in self.increment(n).iter().enumerate() {
                writeln!(w, "{n},{k},{db:e}")?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
        let bad = |what: &str| Error::Parse(format!("bad Brownian path file: {what}"));
        if lines.len() < 3 || lines[0].trim() != "dt,noise_dim,seed,stream" || lines[2].trim() != "n,k,dB" {
            return Err(bad("header"));
        }
        let meta: Vec<&str> = lines[1].trim().split(',').collect();
        if meta.len() != 4 {
            return Err(bad("metadata"));
        }
        let dt: T = meta[0].parse().map_err(|_| bad("dt"))?;
        let noise_dim: usize = meta[1].parse().map_err(|_| bad("noise_dim"))?;
        let seed: u64 = meta[2].parse().map_err(|_| bad("seed"))?;
        let stream: u64 = meta[3].parse().map_err(|_| bad("stream"))?;
        let mut increments = Vec::new();
        for (row, line) in lines[3..].iter().filter(|l| !l.trim().is_empty()).enumerate() {
            let parts: Vec<&str> = line.trim().split(',').collect();
            if parts.len() != 3 {
                return Err(bad(line));
            }
            let n: usize = parts[0].parse().map_err(|_| bad(line))?;
            let k: usize = parts[1].parse().map_err(|_| bad(line))?;
            if noise_dim == 0 || n * noise_dim + k != row {
                return Err(bad("rows out of order"));
            }
            increments.push(parts[2].parse().map_err(|_| bad(line))?);
        }
        let mut path = Self::from_increments(dt, noise_dim, increments)?;
        path.seed = seed;
        path.stream = stream;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = BrownianPath::<f64>::generate(42, stream_id(0, StreamPurpose::Flow), 1, 100, 0.01).unwrap();
        let b = BrownianPath::<f64>::generate(42, stream_id(0, StreamPurpose::Flow), 1, 100, 0.01).unwrap();
        let c = BrownianPath::<f64>::generate(42, stream_id(1, StreamPurpose::Flow), 1, 100, 0.01).unwrap();
        let d = BrownianPath::<f64>::generate(42, stream_id(0, StreamPurpose::InnerFlow), 1, 100, 0.01).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.increments(), c.increments());
        assert_ne!(a.increments(), d.increments());
        assert_ne!(nested_stream_id(1, 2, 3), nested_stream_id(1, 3, 2));
    }

    #[test]
    fn f32_and_f64_paths_agree() {
        let s = stream_id(5, StreamPurpose::Flow);
        let a = BrownianPath::<f64>::generate(9, s, 2, 50, 0.01).unwrap();
        let b = BrownianPath::<f32>::generate(9, s, 2, 50, 0.01).unwrap();
        for (x, y) in a.increments().iter().zip(b.increments()) {
            assert!((x - *y as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn increments_have_the_right_variance() {
        let p = BrownianPath::<f64>::generate(1, 2, 1, 200_000, 0.01).unwrap();
        let n = p.steps() as f64;
        let mean = p.increments().iter().sum::<f64>() / n;
        let var = p.increments().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 * (0.01f64 / n).sqrt());
        assert!((var / 0.01 - 1.0).abs() < 0.02);
    }

    #[test]
    fn coarsening_preserves_endpoints() {
        let p = BrownianPath::<f64>::generate(3, 4, 2, 64, 1e-3).unwrap();
        let c = p.coarsened(4).unwrap();
        assert_eq!(c.steps(), 16);
        assert!((c.dt() - 4e-3).abs() < 1e-18);
        for k in 0..2 {
            assert!((c.value(16)[k] - p.value(64)[k]).abs() < 1e-14);
            assert!((c.value(5)[k] - p.value(20)[k]).abs() < 1e-14);
        }
        assert!(p.coarsened(3).is_err());
    }

    #[test]
    fn shift_and_replay() {
        let p = BrownianPath::<f64>::generate(3, 4, 1, 10, 0.1).unwrap();
        assert_eq!(p.shifted(4).unwrap().increment(0), p.increment(4));
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(BrownianPath::<f64>::read_csv(&buf[..]).unwrap(), p);
    }
}
