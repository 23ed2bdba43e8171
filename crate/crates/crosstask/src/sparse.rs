//! Sparse feature vectors.
//!
//! Every document and every class centroid is a [`SparseVector`]: a list of
//! `(feature_id, value)` pairs with strictly increasing ids, finite values and
//! no explicit zeros. Construction normalizes input (sorting, dropping zeros)
//! and rejects anything else, so the rest of the crate can rely on the
//! invariants without re-checking.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Builds a vector from arbitrary `(feature_id, value)` pairs.
    ///
    /// Pairs are sorted by feature id, explicit zeros are dropped, duplicate
    /// ids and non-finite values are rejected.
    pub fn new(mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.sort_unstable_by_key(|&(id, _)| id);
        for window in entries.windows(2) {
            if window[0].0 == window[1].0 {
                return Err(Error::InvalidVector(format!(
                    "duplicate feature id {}",
                    window[0].0
                )));
            }
        }
        for &(id, value) in &entries {
            if !value.is_finite() {
                return Err(Error::InvalidVector(format!(
                    "non-finite value {value} at feature {id}"
                )));
            }
        }
        entries.retain(|&(_, value)| value != 0.0);
        Ok(SparseVector { entries })
    }

    pub fn empty() -> Self {
        SparseVector {
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_feature_id(&self) -> Option<u32> {
        self.entries.last().map(|&(id, _)| id)
    }

    /// Value at `feature_id`, zero when absent.
    pub fn get(&self, feature_id: u32) -> f64 {
        match self.entries.binary_search_by_key(&feature_id, |&(id, _)| id) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Inner product via a sorted merge walk.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let mut sum = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < self.entries.len() && j < other.entries.len() {
            let (ida, va) = self.entries[i];
            let (idb, vb) = other.entries[j];
            match ida.cmp(&idb) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += va * vb;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }

    pub fn scaled(&self, factor: f64) -> SparseVector {
        if factor == 0.0 {
            return SparseVector::empty();
        }
        SparseVector {
            entries: self
                .entries
                .iter()
                .map(|&(id, v)| (id, v * factor))
                .collect(),
        }
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn l2_normalized(&self) -> SparseVector {
        let norm = self.norm_sq().sqrt();
        if norm == 0.0 {
            return self.clone();
        }
        self.scaled(1.0 / norm)
    }

    /// Returns the first entry with a negative value, if any.
    pub fn first_negative(&self) -> Option<(u32, f64)> {
        self.entries.iter().copied().find(|&(_, v)| v < 0.0)
    }

    /// Element-wise arithmetic mean. Only ids present in at least one input
    /// appear in the result; an empty input yields the empty vector.
    pub fn mean<'a, I>(vectors: I) -> SparseVector
    where
        I: IntoIterator<Item = &'a SparseVector>,
    {
        let mut sums: BTreeMap<u32, f64> = BTreeMap::new();
        let mut count = 0usize;
        for v in vectors {
            count += 1;
            for &(id, value) in &v.entries {
                *sums.entry(id).or_insert(0.0) += value;
            }
        }
        if count == 0 {
            return SparseVector::empty();
        }
        let n = count as f64;
        SparseVector {
            entries: sums
                .into_iter()
                .map(|(id, s)| (id, s / n))
                .filter(|&(_, v)| v != 0.0)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_sorts_and_drops_zeros() {
        let v = SparseVector::new(vec![(7, 1.0), (0, 2.0), (3, 0.0)]).unwrap();
        assert_eq!(v.entries(), &[(0, 2.0), (7, 1.0)]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(SparseVector::new(vec![(1, 1.0), (1, 2.0)]).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(SparseVector::new(vec![(0, f64::NAN)]).is_err());
        assert!(SparseVector::new(vec![(0, f64::INFINITY)]).is_err());
    }

    #[test]
    fn dot_merge_walk() {
        let a = SparseVector::new(vec![(0, 1.0), (2, 3.0), (5, 2.0)]).unwrap();
        let b = SparseVector::new(vec![(2, 4.0), (5, 0.5), (9, 7.0)]).unwrap();
        assert_eq!(a.dot(&b), 3.0 * 4.0 + 2.0 * 0.5);
        assert_eq!(a.dot(&b), b.dot(&a));
    }

    #[test]
    fn mean_of_two_points() {
        let a = SparseVector::new(vec![(0, 2.0)]).unwrap();
        let b = SparseVector::new(vec![(0, 4.0)]).unwrap();
        assert_eq!(SparseVector::mean([&a, &b]).entries(), &[(0, 3.0)]);
    }

    #[test]
    fn mean_with_disjoint_support() {
        // Oracle: dense mean of [(1,0)] and [(0,1)] is (0.5, 0.5).
        let a = SparseVector::new(vec![(0, 1.0)]).unwrap();
        let b = SparseVector::new(vec![(1, 1.0)]).unwrap();
        assert_eq!(
            SparseVector::mean([&a, &b]).entries(),
            &[(0, 0.5), (1, 0.5)]
        );
    }

    #[test]
    fn normalization_unit_length() {
        let v = SparseVector::new(vec![(0, 3.0), (1, 4.0)]).unwrap();
        let n = v.l2_normalized();
        assert!((n.norm_sq() - 1.0).abs() < 1e-12);
        assert!(SparseVector::empty().l2_normalized().is_empty());
    }
}
