//! Dense Galerkin matrices on the truncated Hermite basis.

use std::fmt;
use std::io::{BufRead, Write};

use crate::basis::multi_index::IndexSet;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sobolev::CoeffVector;

/// Which operator a matrix represents. Axes are zero-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OperatorTag {
    /// The generator `L`.
    Generator,
    /// `A_i`, the `i`-th column of the dispersion acting as a derivation.
    Dispersion(usize),
    /// `d/dx_i`
    Derivative(usize),
    /// Multiplication by `x_i`.
    Position(usize),
    /// Product or other derived matrix.
    Composite,
}

impl fmt::Display for OperatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorTag::Generator => write!(f, "L"),
            OperatorTag::Dispersion(i) => write!(f, "A_{i}"),
            OperatorTag::Derivative(i) => write!(f, "derivative_{i}"),
            OperatorTag::Position(i) => write!(f, "position_{i}"),
            OperatorTag::Composite => write!(f, "composite"),
        }
    }
}

impl OperatorTag {
    fn parse(s: &str) -> Result<Self> {
        let axis = |rest: &str| {
            rest.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad operator tag {s:?}")))
        };
        match s {
            "L" => Ok(Self::Generator),
            "composite" => Ok(Self::Composite),
            _ => {
                if let Some(rest) = s.strip_prefix("A_") {
                    Ok(Self::Dispersion(axis(rest)?))
                } else if let Some(rest) = s.strip_prefix("derivative_") {
                    Ok(Self::Derivative(axis(rest)?))
                } else if let Some(rest) = s.strip_prefix("position_") {
                    Ok(Self::Position(axis(rest)?))
                } else {
                    Err(Error::Parse(format!("bad operator tag {s:?}")))
                }
            }
        }
    }
}

/// `M[k, l] = <h_k, Op h_l>` over all `|k|, |l| <= trunc`, row-major.
///
/// The adjoint acts as the transpose, so `<M^T psi, phi> = <psi, M phi>`
/// holds exactly at every truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix<T> {
    tag: OperatorTag,
    dim: usize,
    trunc: usize,
    size: usize,
    entries: Vec<T>,
}

impl<T: Real> OperatorMatrix<T> {
    pub fn zeros(tag: OperatorTag, dim: usize, trunc: usize) -> Self {
        let size = IndexSet::size(dim, trunc);
        Self {
            tag,
            dim,
            trunc,
            size,
            entries: vec![T::zero(); size * size],
        }
    }

    pub fn identity(dim: usize, trunc: usize) -> Self {
        let mut m = Self::zeros(OperatorTag::Composite, dim, trunc);
        for i in 0..m.size {
            m.set(i, i, T::one());
        }
        m
    }

    pub(crate) fn from_entries(tag: OperatorTag, dim: usize, trunc: usize, entries: Vec<T>) -> Self {
        let size = IndexSet::size(dim, trunc);
        assert_eq!(entries.len(), size * size);
        Self {
            tag,
            dim,
            trunc,
            size,
            entries,
        }
    }

    pub fn tag(&self) -> &OperatorTag {
        &self.tag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trunc(&self) -> usize {
        self.trunc
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.entries[row * self.size + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.entries[row * self.size + col] = value;
    }

    fn check_vector(&self, v: &CoeffVector<T>) -> Result<()> {
        if v.dim() != self.dim || v.trunc() != self.trunc {
            return Err(Error::ShapeMismatch(format!(
                "matrix is (d={}, N={}), vector is (d={}, N={})",
                self.dim,
                self.trunc,
                v.dim(),
                v.trunc()
            )));
        }
        Ok(())
    }

    /// `M v`
    pub fn apply(&self, v: &CoeffVector<T>) -> Result<CoeffVector<T>> {
        self.check_vector(v)?;
        let x = v.values();
        let out = (0..self.size)
            .map(|r| {
                self.entries[r * self.size..(r + 1) * self.size]
                    .iter()
                    .zip(x)
                    .map(|(&m, &xi)| m * xi)
                    .sum()
            })
            .collect();
        CoeffVector::from_values(self.dim, self.trunc, out)
    }

    /// `M^T v`
    pub fn apply_transpose(&self, v: &CoeffVector<T>) -> Result<CoeffVector<T>> {
        self.check_vector(v)?;
        let mut out = vec![T::zero(); self.size];
        for (r, &vr) in v.values().iter().enumerate() {
            if vr == T::zero() {
                continue;
            }
            let row = &self.entries[r * self.size..(r + 1) * self.size];
            for (o, &m) in out.iter_mut().zip(row) {
                *o = *o + m * vr;
            }
        }
        CoeffVector::from_values(self.dim, self.trunc, out)
    }

    pub fn transpose(&self) -> Self {
        let n = self.size;
        let mut entries = vec![T::zero(); n * n];
        for r in 0..n {
            for c in 0..n {
                entries[c * n + r] = self.entries[r * n + c];
            }
        }
        Self {
            tag: OperatorTag::Composite,
            dim: self.dim,
            trunc: self.trunc,
            size: n,
            entries,
        }
    }

    /// `self * other`
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim || self.trunc != other.trunc {
            return Err(Error::ShapeMismatch("composing matrices of different shapes".into()));
        }
        let n = self.size;
        let mut entries = vec![T::zero(); n * n];
        for r in 0..n {
            for k in 0..n {
                let a = self.entries[r * n + k];
                if a == T::zero() {
                    continue;
                }
                for c in 0..n {
                    entries[r * n + c] = entries[r * n + c] + a * other.entries[k * n + c];
                }
            }
        }
        Ok(Self::from_entries(
            OperatorTag::Composite,
            self.dim,
            self.trunc,
            entries,
        ))
    }

    /// `self - other`
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim || self.trunc != other.trunc {
            return Err(Error::ShapeMismatch("subtracting matrices of different shapes".into()));
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(&a, &b)| a - b).collect();
        Ok(Self::from_entries(
            OperatorTag::Composite,
            self.dim,
            self.trunc,
            entries,
        ))
    }

    /// Writes the coefficient CSV header followed by a `row,col,value`
    /// triplet section listing the nonzero entries.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dim,trunc,ordering,tag,rows,cols")?;
        writeln!(
            w,
            "{},{},graded-lex,{},{},{}",
            self.dim, self.trunc, self.tag, self.size, self.size
        )?;
        writeln!(w, "row,col,value")?;
        for r in 0..self.size {
            for c in 0..self.size {
                let v = self.get(r, c);
                if v != T::zero() {
                    writeln!(w, "{r},{c},{v}")?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse("unexpected end of operator file".into()))?
                .map_err(Error::from)
        };
        let header = next()?;
        if header.trim() != "dim,trunc,ordering,tag,rows,cols" {
            return Err(Error::Parse(format!("bad operator header {header:?}")));
        }
        let meta = next()?;
        let fields: Vec<&str> = meta.trim().split(',').collect();
        if fields.len() != 6 || fields[2] != "graded-lex" {
            return Err(Error::Parse(format!("bad operator metadata {meta:?}")));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
        let dim = parse_usize(fields[0])?;
        let trunc = parse_usize(fields[1])?;
        let tag = OperatorTag::parse(fields[3])?;
        let mut m = Self::zeros(tag, dim, trunc);
        if parse_usize(fields[4])? != m.size || parse_usize(fields[5])? != m.size {
            return Err(Error::Parse("operator size disagrees with (dim, trunc)".into()));
        }
        if next()?.trim() != "row,col,value" {
            return Err(Error::Parse("missing triplet header".into()));
        }
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Parse(format!("bad triplet {line:?}")));
            }
            let (row, col) = (parse_usize(parts[0])?, parse_usize(parts[1])?);
            if row >= m.size || col >= m.size {
                return Err(Error::Parse(format!("triplet index out of range: {line:?}")));
            }
            let value = parts[2]
                .parse::<T>()
                .map_err(|_| Error::Parse(format!("bad value in {line:?}")))?;
            m.set(row, col, value);
        }
        Ok(m)
    }
}
