use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Largest ambient dimension for which tensor grids and index sets are built.
pub const MAX_DIM: usize = 3;

/// Multi-index `k = (k_1, ..., k_d)` of a tensor Hermite function.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    entries: Vec<usize>,
}

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        assert!(!entries.is_empty(), "multi-index needs at least one entry");
        Self { entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0; dim])
    }

    /// `e_axis` in dimension `dim`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut entries = vec![0; dim];
        entries[axis] = 1;
        Self::new(entries)
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    /// `|k|`
    pub fn order(&self) -> usize {
        self.entries.iter().sum()
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn get(&self, axis: usize) -> usize {
        self.entries[axis]
    }

    pub(crate) fn shifted(&self, axis: usize, up: bool) -> Option<Self> {
        let mut entries = self.entries.clone();
        if up {
            entries[axis] += 1;
        } else {
            entries[axis] = entries[axis].checked_sub(1)?;
        }
        Some(Self { entries })
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(entries: Vec<usize>) -> Self {
        Self::new(entries)
    }
}

/// Graded lexicographic: by `|k|`, ties broken lexicographically.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.entries.cmp(&other.entries))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// All multi-indices with `|k| <= trunc` in graded lexicographic order.
///
/// The position of an index in this set is its slot in every coefficient
/// vector and operator matrix.
#[derive(Clone, Debug)]
pub struct IndexSet {
    dim: usize,
    trunc: usize,
    indices: Vec<MultiIndex>,
    positions: HashMap<MultiIndex, usize>,
}

impl IndexSet {
    pub fn new(dim: usize, trunc: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if dim > MAX_DIM {
            return Err(Error::DimensionTooLarge(dim));
        }
        let mut indices = Vec::with_capacity(Self::size(dim, trunc));
        let mut scratch = vec![0; dim];
        for order in 0..=trunc {
            compositions(order, 0, &mut scratch, &mut indices);
        }
        let positions = indices.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Ok(Self {
            dim,
            trunc,
            indices,
            positions,
        })
    }

    /// `C(trunc + dim, dim)`
    pub fn size(dim: usize, trunc: usize) -> usize {
        (1..=dim).fold(1usize, |acc, i| acc * (trunc + i) / i)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trunc(&self) -> usize {
        self.trunc
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, position: usize) -> &MultiIndex {
        &self.indices[position]
    }

    pub fn position(&self, k: &MultiIndex) -> Option<usize> {
        self.positions.get(k).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> {
        self.indices.iter()
    }
}

// Writes every composition of `remaining` into the slots `axis..` in
// ascending lexicographic order.
fn compositions(remaining: usize, axis: usize, scratch: &mut [usize], out: &mut Vec<MultiIndex>) {
    let dim = scratch.len();
    if axis + 1 == dim {
        scratch[axis] = remaining;
        out.push(MultiIndex::new(scratch.to_vec()));
        return;
    }
    for first in 0..=remaining {
        scratch[axis] = first;
        compositions(remaining - first, axis + 1, scratch, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order_in_two_dimensions() {
        let set = IndexSet::new(2, 2).unwrap();
        let listed: Vec<Vec<usize>> = set.iter().map(|k| k.entries().to_vec()).collect();
        assert_eq!(
            listed,
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![0, 2], vec![1, 1], vec![2, 0]]
        );
    }

    #[test]
    fn set_is_sorted_and_sized() {
        for dim in 1..=3 {
            for trunc in 0..6 {
                let set = IndexSet::new(dim, trunc).unwrap();
                assert_eq!(set.len(), IndexSet::size(dim, trunc));
                let v: Vec<_> = set.iter().cloned().collect();
                assert!(v.windows(2).all(|w| w[0] < w[1]));
                for (i, k) in v.iter().enumerate() {
                    assert_eq!(set.position(k), Some(i));
                }
            }
        }
    }

    #[test]
    fn rejects_large_dimensions() {
        assert_eq!(IndexSet::new(4, 2).unwrap_err(), Error::DimensionTooLarge(4));
        assert!(IndexSet::new(0, 2).is_err());
    }
}
