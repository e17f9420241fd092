use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once a Lloyd step improves inertia by less than this fraction.
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iters: 300,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    pub restarts_used: usize,
    /// Inertia after every assignment step of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from k-means++ seeds, best of `config.restarts` runs.
/// Restart seeds are drawn from a generator seeded with `seed`.
pub fn kmeans(
    x: &Matrix,
    clusters: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<ClusteringResult, ClusterError> {
    let n = x.rows();
    if clusters == 0 || clusters > n {
        return Err(ClusterError::TooManyClusters {
            clusters,
            samples: n,
        });
    }
    if let Some((r, c)) = x.first_non_finite() {
        return Err(ClusterError::NonFinite(r, c));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let restarts = config.restarts.max(1);
    let mut best: Option<ClusteringResult> = None;
    for _ in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        let run = lloyd(x, plus_plus(x, clusters, &mut rng), config);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.restarts_used = restarts;
    Ok(best)
}

fn plus_plus(x: &Matrix, clusters: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.rows();
    let mut centroids = Matrix::zeros(clusters, x.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..clusters {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centroids
}

/// Nearest-centroid assignment (ties to the lower index); returns inertia.
fn assign(x: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let mut best = (0, f64::INFINITY);
        for c in 0..centroids.rows() {
            let d = sq_dist(x.row(i), centroids.row(c));
            if d < best.1 {
                best = (c, d);
            }
        }
        *label = best.0;
        inertia += best.1;
    }
    inertia
}

fn inertia_of(x: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(x.row(i), centroids.row(l)))
        .sum()
}

fn update_means(x: &Matrix, labels: &[usize], centroids: &mut Matrix) {
    let k = centroids.rows();
    let mut counts = vec![0usize; k];
    let mut sums = Matrix::zeros(k, x.cols());
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let inv = 1.0 / count as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
    }
}

/// Gives every empty cluster the point farthest from its centroid, taken
/// from a cluster that keeps at least one member. Returns whether anything
/// moved.
fn repair_empty(x: &Matrix, labels: &mut [usize], centroids: &mut Matrix) -> bool {
    let k = centroids.rows();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    let mut moved = false;
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] < 2 {
                continue;
            }
            let d = sq_dist(x.row(i), centroids.row(l));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("clusters <= samples leaves a donor");
        counts[labels[i]] -= 1;
        labels[i] = c;
        counts[c] = 1;
        centroids.row_mut(c).copy_from_slice(x.row(i));
        moved = true;
    }
    moved
}

fn lloyd(x: &Matrix, mut centroids: Matrix, config: &KMeansConfig) -> ClusteringResult {
    let mut labels = vec![0; x.rows()];
    let mut inertia = assign(x, &centroids, &mut labels);
    if repair_empty(x, &mut labels, &mut centroids) {
        inertia = inertia_of(x, &centroids, &labels);
    }
    let mut history = vec![inertia];
    for _ in 0..config.max_iters {
        update_means(x, &labels, &mut centroids);
        let previous = inertia;
        inertia = assign(x, &centroids, &mut labels);
        if repair_empty(x, &mut labels, &mut centroids) {
            inertia = inertia_of(x, &centroids, &labels);
        }
        history.push(inertia);
        if previous - inertia <= config.tolerance * previous {
            break;
        }
    }
    ClusteringResult {
        labels,
        centroids,
        inertia,
        restarts_used: 1,
        history,
    }
}
