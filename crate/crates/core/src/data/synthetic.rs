//! Gaussian-blob multi-view benchmarks with known ground truth.
//!
//! Each cluster owns one latent center in `R^C`; centers are
//! `separation / √2 · e_c`, so every pair of centers is exactly
//! `separation` apart, measured in units of the unit within-cluster standard
//! deviation. A sample draws its latent point around its center; each view
//! observes the latent point through its own random Gaussian linear map
//! (entries `N(0, 1/C)`, so observed features have roughly unit
//! within-cluster variance) plus i.i.d. Gaussian noise. A fraction of every
//! view's columns can be replaced by pure noise with the same scale as the
//! informative columns. Finally every view is rescaled to unit mean squared
//! row norm, like row-normalized real-world features; separation and noise
//! are therefore relative to the within-cluster spread, not absolute.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, ViewSet};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_clusters: usize,
    /// One entry per view.
    pub view_dims: Vec<usize>,
    pub separation: f64,
    /// Per-view noise standard deviation; a single entry applies to every view.
    pub noise: Vec<f64>,
    /// Fraction of each view's columns that carry no cluster signal.
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 300,
            n_clusters: 3,
            view_dims: vec![20, 30, 40],
            separation: 6.0,
            noise: vec![0.1],
            noise_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn n_views(&self) -> usize {
        self.view_dims.len()
    }

    fn noise_for(&self, v: usize) -> f64 {
        if self.noise.len() == 1 {
            self.noise[0]
        } else {
            self.noise[v]
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Invalid(m));
        if self.n_clusters < 2 || self.n_samples < self.n_clusters {
            return bad(format!(
                "need N >= C >= 2, got N={} C={}",
                self.n_samples, self.n_clusters
            ));
        }
        if self.view_dims.is_empty() || self.view_dims.contains(&0) {
            return bad("every view needs at least one dimension".into());
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return bad(format!(
                "separation must be positive, got {}",
                self.separation
            ));
        }
        if self.noise.len() != 1 && self.noise.len() != self.n_views() {
            return bad(format!(
                "{} noise levels for {} views",
                self.noise.len(),
                self.n_views()
            ));
        }
        if self.noise.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise levels must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return bad(format!(
                "noise fraction must lie in [0, 1), got {}",
                self.noise_fraction
            ));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<ViewSet, DataError> {
    spec.validate()?;
    let n = spec.n_samples;
    let c = spec.n_clusters;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(&mut rng);

    let offset = spec.separation / std::f64::consts::SQRT_2;
    let latent = Matrix::from_fn(n, c, |i, j| {
        let center = if labels[i] == j { offset } else { 0.0 };
        center + rng.sample::<f64, _>(StandardNormal)
    });

    let map_scale = (c as f64).recip().sqrt();
    let mut views = Vec::with_capacity(spec.n_views());
    for (v, &dim) in spec.view_dims.iter().enumerate() {
        let noise_cols = ((spec.noise_fraction * dim as f64).round() as usize).min(dim - 1);
        let signal_cols = dim - noise_cols;
        let map = Matrix::from_fn(c, signal_cols, |_, _| {
            map_scale * rng.sample::<f64, _>(StandardNormal)
        });
        let signal = latent.matmul(&map).expect("latent map shapes agree");
        let sigma = spec.noise_for(v);

        let spread = signal_column_spread(&signal).hypot(sigma);
        let mut columns: Vec<usize> = (0..dim).collect();
        columns.shuffle(&mut rng);
        let mut view = Matrix::zeros(n, dim);
        for i in 0..n {
            for (k, &col) in columns.iter().enumerate() {
                view[(i, col)] = if k < signal_cols {
                    signal[(i, k)] + sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    spread * rng.sample::<f64, _>(StandardNormal)
                };
            }
        }
        views.push(unit_mean_row_norm(view));
    }

    ViewSet::new(
        format!("synthetic-n{n}-c{c}-v{}-s{}", spec.n_views(), spec.seed),
        views,
        Some(labels),
        c,
    )
}

/// Rescales so the mean squared row norm is 1.
fn unit_mean_row_norm(m: Matrix) -> Matrix {
    let ms = m.frobenius_norm_sq() / m.rows() as f64;
    if ms > 0.0 {
        m.scale(ms.sqrt().recip())
    } else {
        m
    }
}

/// Root-mean-square column standard deviation.
fn signal_column_spread(m: &Matrix) -> f64 {
    let stats = super::column_stats(m);
    let ms = stats.iter().map(|s| s.std * s.std).sum::<f64>() / stats.len().max(1) as f64;
    ms.sqrt()
}
