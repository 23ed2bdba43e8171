//! Task relatedness across the two sources.
//!
//! Classes are compared through their centroids with the continuous Tanimoto
//! coefficient, and each task gets the k most similar classes from the other
//! source. On binary vectors the coefficient reduces to the Jaccard index.

use std::collections::BTreeMap;

use crate::corpus::{Centroid, Source, TaskId};
use crate::error::{Error, Result};
use crate::sparse::SparseVector;

/// For every task of one source, its k nearest classes in the other source,
/// most similar first. Maps built for both directions can be merged into one.
#[derive(Debug, Clone)]
pub struct NeighborMap {
    k: usize,
    entries: BTreeMap<TaskId, Vec<(u32, f64)>>,
}

impl NeighborMap {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &BTreeMap<TaskId, Vec<(u32, f64)>> {
        &self.entries
    }

    /// Neighbor classes (in the other source) for `task`, best first.
    pub fn neighbors(&self, task: &TaskId) -> Option<&[(u32, f64)]> {
        self.entries.get(task).map(Vec::as_slice)
    }

    /// Combines two directional maps (S1→S2 and S2→S1) into one.
    pub fn merge(a: &NeighborMap, b: &NeighborMap) -> Result<NeighborMap> {
        if a.k != b.k {
            return Err(Error::Config(format!(
                "cannot merge neighbor maps with k={} and k={}",
                a.k, b.k
            )));
        }
        let mut entries = a.entries.clone();
        for (task, list) in &b.entries {
            if entries.insert(*task, list.clone()).is_some() {
                return Err(Error::Config(format!(
                    "neighbor maps overlap on task {task}"
                )));
            }
        }
        Ok(NeighborMap { k: a.k, entries })
    }
}

/// Continuous Tanimoto coefficient `<a,b> / (|a|^2 + |b|^2 - <a,b>)`.
///
/// Defined as 0 when both vectors are empty. Inputs must be non-negative,
/// otherwise the coefficient can leave `[0, 1]`.
pub fn tanimoto(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    for v in [a, b] {
        if let Some((feature, value)) = v.first_negative() {
            return Err(Error::NegativeFeature { feature, value });
        }
    }
    let dot = a.dot(b);
    let denom = a.norm_sq() + b.norm_sq() - dot;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / denom)
}

/// For every centroid in `src_centroids`, the `k` most Tanimoto-similar
/// classes among `other_centroids`. Ties break toward the lower class id.
pub fn knn_related(
    src_centroids: &[Centroid],
    other_centroids: &[Centroid],
    k: usize,
) -> Result<NeighborMap> {
    knn_related_with(src_centroids, other_centroids, k, false)
}

/// As [`knn_related`], optionally scaling centroids to unit length before
/// comparing them.
pub fn knn_related_with(
    src_centroids: &[Centroid],
    other_centroids: &[Centroid],
    k: usize,
    normalize: bool,
) -> Result<NeighborMap> {
    if k == 0 || k > other_centroids.len() {
        return Err(Error::BadK {
            k,
            available: other_centroids.len(),
        });
    }
    let src_source = expect_single_source(src_centroids, "src_centroids")?;
    let other_source = expect_single_source(other_centroids, "other_centroids")?;
    if src_source == other_source {
        return Err(Error::Config(
            "neighbor search needs centroids from two different sources".into(),
        ));
    }

    let prepared: Vec<(u32, SparseVector)> = other_centroids
        .iter()
        .map(|c| {
            let v = if normalize {
                c.vector.l2_normalized()
            } else {
                c.vector.clone()
            };
            (c.class_id, v)
        })
        .collect();

    let mut entries = BTreeMap::new();
    for centroid in src_centroids {
        let query = if normalize {
            centroid.vector.l2_normalized()
        } else {
            centroid.vector.clone()
        };
        let mut scored: Vec<(u32, f64)> = prepared
            .iter()
            .map(|(class, vector)| Ok((*class, tanimoto(&query, vector)?)))
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("similarities are finite")
                .then(a.0.cmp(&b.0))
        });
        scored.truncate(k);
        entries.insert(TaskId::original(src_source, centroid.class_id), scored);
    }
    Ok(NeighborMap { k, entries })
}

fn expect_single_source(centroids: &[Centroid], what: &str) -> Result<Source> {
    let mut sources = centroids.iter().map(|c| c.source);
    let first = sources
        .next()
        .ok_or_else(|| Error::Config(format!("{what} is empty")))?;
    if sources.any(|s| s != first) {
        return Err(Error::Config(format!("{what} mixes sources")));
    }
    Ok(first)
}
