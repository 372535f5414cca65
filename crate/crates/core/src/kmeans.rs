//! Lloyd's k-means with seeded greedy farthest-point initialization.

use rand::Rng;

use crate::error::{FgnsError, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// First centre drawn uniformly under `seed`; each further centre is the
/// point farthest from all chosen centres (lowest index wins ties).
pub fn farthest_point_init(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let mut rng = stream_rng(seed, "kmeans_init", n as u64);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let mut best = 0;
        for i in 1..n {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        chosen.push(best);
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(p, &points[best]));
        }
    }
    chosen
}

/// Index of the nearest centroid; lowest index wins ties.
pub fn nearest_centroid(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, squared_distance(p, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(FgnsError::arg("k-means needs at least one point"));
    }
    if k == 0 {
        return Err(FgnsError::arg("k must be at least 1"));
    }
    let k = k.min(points.len());
    let dim = points[0].len();
    let mut centroids: Vec<Vec<f64>> = farthest_point_init(points, k, seed)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();

    let mut assignments = vec![usize::MAX; points.len()];
    let mut wcss_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut changed = false;
        let mut wcss = 0.0;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let (j, d) = nearest_centroid(p, &centroids);
            wcss += d;
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        wcss_history.push(wcss);
        if !changed {
            converged = true;
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            // an empty cluster keeps its previous centroid
            if counts[j] > 0 {
                let n = counts[j] as f64;
                centroids[j] = sums[j].iter().map(|s| s / n).collect();
            }
        }
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        wcss_history,
        iterations,
        converged,
    })
}
