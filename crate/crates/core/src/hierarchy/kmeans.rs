//! Spherical k-means: cosine assignment, normalized-sum centroids.

use rand::Rng;

use crate::error::{HceError, Result};
use crate::vector::{dot, normalize, UnitVector};

/// Iteration cap; clustering on every corpus we have seen converges well
/// before this.
pub const DEFAULT_MAX_ITERS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub centroid: UnitVector,
    /// Indices into the clustered input, ascending.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterForest {
    pub clusters: Vec<Cluster>,
    /// Cluster index of every input vector.
    pub assignments: Vec<usize>,
    /// Number of centroid/assignment rounds performed.
    pub iterations: usize,
    pub converged: bool,
    /// `Σᵢ vᵢ·c_{aᵢ}` after each centroid update.
    pub objective_trace: Vec<f64>,
}

impl ClusterForest {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Clusters unit vectors into exactly `k` non-empty clusters.
///
/// Labels start uniformly at random. Each round recomputes centroids as
/// normalized member sums, then reassigns every vector to its highest-cosine
/// centroid (lowest index wins ties). A cluster left empty is seeded with the
/// member of the largest cluster that is farthest from that cluster's current
/// centroid. Stops when assignments no longer change or after `max_iters`
/// rounds.
pub fn spherical_kmeans<R: Rng + ?Sized>(
    vectors: &[UnitVector],
    k: usize,
    rng: &mut R,
    max_iters: usize,
) -> Result<ClusterForest> {
    let n = vectors.len();
    if k == 0 || k > n {
        return Err(HceError::InvalidK { k, n });
    }
    let dim = vectors[0].dim();
    if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(HceError::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    let data: Vec<f64> = vectors.iter().flat_map(|v| v.iter().copied()).collect();
    let row = |i: usize| &data[i * dim..(i + 1) * dim];

    let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let init_centroids = partial_centroids(&data, dim, &labels, k);
    repair_empty(&data, dim, &mut labels, &init_centroids, k);

    let mut objective_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut centroids = centroids_for(&data, dim, &labels, k)?;
    let max_iters = max_iters.max(1);

    loop {
        iterations += 1;
        let objective: f64 = (0..n)
            .map(|i| dot(row(i), &centroids[labels[i] * dim..(labels[i] + 1) * dim]))
            .sum();
        debug_assert!(
            objective_trace
                .last()
                .is_none_or(|&prev: &f64| objective >= prev - 1e-9 * prev.abs().max(1.0)),
            "spherical k-means objective decreased"
        );
        objective_trace.push(objective);

        let mut next: Vec<usize> = (0..n)
            .map(|i| {
                let v = row(i);
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
                    let s = dot(v, centroid);
                    if s > best_score {
                        best_score = s;
                        best = c;
                    }
                }
                best
            })
            .collect();
        repair_empty(&data, dim, &mut next, &centroids, k);

        if next == labels {
            converged = true;
            break;
        }
        labels = next;
        centroids = centroids_for(&data, dim, &labels, k)?;
        if iterations >= max_iters {
            let objective: f64 = (0..n)
                .map(|i| dot(row(i), &centroids[labels[i] * dim..(labels[i] + 1) * dim]))
                .sum();
            objective_trace.push(objective);
            break;
        }
    }

    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let clusters = members
        .into_iter()
        .enumerate()
        .map(|(c, members)| Cluster {
            centroid: UnitVector::from_normalized_unchecked(centroids[c * dim..(c + 1) * dim].to_vec()),
            members,
        })
        .collect();
    Ok(ClusterForest {
        clusters,
        assignments: labels,
        iterations,
        converged,
        objective_trace,
    })
}

fn member_sums(data: &[f64], dim: usize, labels: &[usize], k: usize) -> (Vec<f64>, Vec<usize>) {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums[l * dim..(l + 1) * dim]
            .iter_mut()
            .zip(&data[i * dim..(i + 1) * dim])
        {
            *s += x;
        }
    }
    (sums, counts)
}

/// Normalized member sums; every cluster must be non-empty.
fn centroids_for(data: &[f64], dim: usize, labels: &[usize], k: usize) -> Result<Vec<f64>> {
    let (mut sums, _) = member_sums(data, dim, labels, k);
    for c in sums.chunks_exact_mut(dim) {
        let unit = normalize(c)?;
        c.copy_from_slice(&unit);
    }
    Ok(sums)
}

/// Like [`centroids_for`] but tolerates empty or zero-sum clusters, leaving
/// their rows zero. Only used to rank members during the initial repair.
fn partial_centroids(data: &[f64], dim: usize, labels: &[usize], k: usize) -> Vec<f64> {
    let (mut sums, _) = member_sums(data, dim, labels, k);
    for c in sums.chunks_exact_mut(dim) {
        match normalize(c) {
            Ok(unit) => c.copy_from_slice(&unit),
            Err(_) => c.iter_mut().for_each(|x| *x = 0.0),
        }
    }
    sums
}

fn repair_empty(data: &[f64], dim: usize, labels: &mut [usize], centroids: &[f64], k: usize) {
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        // max_by_key keeps the last maximum; scan manually for the first
        let mut largest = 0;
        for (c, &count) in counts.iter().enumerate() {
            if count > counts[largest] {
                largest = c;
            }
        }
        let centroid = &centroids[largest * dim..(largest + 1) * dim];
        let mut farthest = usize::MAX;
        let mut lowest = f64::INFINITY;
        for (i, &l) in labels.iter().enumerate() {
            if l == largest {
                let s = dot(&data[i * dim..(i + 1) * dim], centroid);
                if s < lowest {
                    lowest = s;
                    farthest = i;
                }
            }
        }
        labels[farthest] = empty;
        counts[largest] -= 1;
        counts[empty] += 1;
    }
}
