//! K-Means (Lloyd's algorithm with k-means++ seeding) over the
//! counterfactual states.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    /// k x d, row per centroid.
    pub centroids: Vec<Vec<f64>>,
    /// Final within-cluster sum of squares on the training set.
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, sq_dist(&centroids[0], p));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn kmeans_plus_plus<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining distances zero (duplicate points); pick uniformly
            points[rng.gen_range(0..points.len())].clone()
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut idx = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            points[idx].clone()
        };
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &next));
        }
        centroids.push(next);
    }
    centroids
}

/// One Lloyd run from the given initial centroids. Returns centroids,
/// labels, inertia, and the inertia measured at every iteration (which
/// never increases).
fn lloyd(
    points: &[Vec<f64>],
    mut centroids: Vec<Vec<f64>>,
    max_iter: usize,
) -> (Vec<Vec<f64>>, Vec<usize>, f64, Vec<f64>) {
    let k = centroids.len();
    let d = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();

    for _ in 0..max_iter {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, dist) = nearest(&centroids, p);
            inertia += dist;
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        debug_assert!(
            trace.last().is_none_or(|&prev| inertia <= prev + 1e-9),
            "Lloyd inertia increased"
        );
        trace.push(inertia);
        if !changed {
            break;
        }

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // move an empty cluster's centroid to the point farthest
                // from it, keeping k fixed
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &centroids[j])))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                centroids[j] = points[far].clone();
            } else {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            }
        }
    }
    // final pass so labels/inertia match the final centroids
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (j, dist) = nearest(&centroids, p);
        labels[i] = j;
        inertia += dist;
    }
    (centroids, labels, inertia, trace)
}

/// Runs a single seeded k-means++ restart and returns the inertia
/// observed at each Lloyd iteration (useful for convergence diagnostics).
pub fn kmeans_inertia_trace(
    points: &[Vec<f64>],
    k: usize,
    max_iter: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if k == 0 || points.len() < k {
        return Err(Error::InvalidInput(format!(
            "need at least k={k} points (k >= 1), got {}",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans_plus_plus(points, k, &mut rng);
    let (_, _, _, trace) = lloyd(points, init, max_iter);
    Ok(trace)
}

/// Fits K-Means with `n_init` independent k-means++ restarts and keeps
/// the run with the lowest inertia (ties broken by restart index).
pub fn kmeans_fit(
    points: &[Vec<f64>],
    k: usize,
    n_init: usize,
    max_iter: usize,
    seed: u64,
) -> Result<KMeansModel> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    if points.len() < k {
        return Err(Error::InvalidInput(format!(
            "need at least k={k} points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput("points must be finite".into()));
    }

    let mut best: Option<(Vec<Vec<f64>>, f64)> = None;
    for restart in 0..n_init.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
        let init = kmeans_plus_plus(points, k, &mut rng);
        let (centroids, _, inertia, _) = lloyd(points, init, max_iter);
        if best.as_ref().is_none_or(|(_, bi)| inertia < *bi) {
            best = Some((centroids, inertia));
        }
    }
    let (centroids, inertia) = best.unwrap();
    Ok(KMeansModel { k, centroids, inertia })
}

impl KMeansModel {
    /// Index of the nearest centroid; ties break toward the lowest index.
    pub fn assign(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.centroids[0].len() {
            return Err(Error::DimensionMismatch {
                expected: self.centroids[0].len(),
                got: point.len(),
            });
        }
        Ok(nearest(&self.centroids, point).0)
    }
}

/// Within-cluster sum of squares for an explicit assignment.
pub fn wcss(centroids: &[Vec<f64>], points: &[Vec<f64>], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}
