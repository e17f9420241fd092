//! Objective terms: graph autoencoder reconstruction, multi-view kernel
//! k-means, spectral smoothness, similarity-matrix alignment (SMAL), and
//! feature-representation alignment (FRAL).
//!
//! Each term has a tape builder (`*_expr`) used during training and a
//! value-level wrapper for direct evaluation.

use serde::{Deserialize, Serialize};

use crate::numerics::{pairwise_squared_distances, Expr, Matrix, NumericsError, Tape};

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("kernel bandwidth must be positive and finite, got {0}")]
    Bandwidth(f64),
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("{0}")]
    Shape(String),
    #[error("loss weight {name} must be finite and non-negative, got {value}")]
    Weight { name: &'static str, value: f64 },
}

/// Trade-off weights. The graph reconstruction term always has weight 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta: 0.1,
            lambda1: 0.1,
            lambda2: 0.1,
            lambda3: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        for (name, value) in [
            ("beta", self.beta),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(LossError::Weight { name, value });
            }
        }
        Ok(())
    }
}

/// Gaussian kernels for every view plus the fused representation.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    pub views: Vec<Matrix>,
    pub fused: Matrix,
    /// σ² per view.
    pub view_bandwidths: Vec<f64>,
    pub fused_bandwidth: f64,
}

impl KernelSet {
    /// Median-heuristic kernels of raw views and fused features.
    pub fn from_features(views: &[Matrix], fused: &Matrix) -> Result<Self, LossError> {
        let (views, view_bandwidths) = view_kernels(views)?;
        let d = pairwise_squared_distances(fused);
        let fused_bandwidth = median_bandwidth(&d);
        Ok(Self {
            views,
            fused: kernel_from_distances(&d, fused_bandwidth)?,
            view_bandwidths,
            fused_bandwidth,
        })
    }

    /// `(1/V)·Σ_v K^v`.
    pub fn mean_view_kernel(&self) -> Matrix {
        mean_kernel(&self.views)
    }
}

fn mean_kernel(kernels: &[Matrix]) -> Matrix {
    let n = kernels[0].rows();
    let mut acc = Matrix::zeros(n, n);
    for k in kernels {
        acc.add_scaled_assign(k, 1.0 / kernels.len() as f64);
    }
    acc
}

/// Median of the strictly positive off-diagonal entries of a squared
/// distance matrix; 1 when every point coincides.
pub fn median_bandwidth(distances: &Matrix) -> f64 {
    let n = distances.rows();
    let mut vals: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        vals.extend(
            distances.row(i)[i + 1..]
                .iter()
                .copied()
                .filter(|&d| d > 0.0),
        );
    }
    if vals.is_empty() {
        return 1.0;
    }
    let mid = vals.len() / 2;
    let (_, &mut upper, _) = vals.select_nth_unstable_by(mid, f64::total_cmp);
    if vals.len() % 2 == 1 {
        upper
    } else {
        let lower = vals[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

fn check_bandwidth(sigma2: f64) -> Result<(), LossError> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(LossError::Bandwidth(sigma2))
    }
}

fn kernel_from_distances(d: &Matrix, sigma2: f64) -> Result<Matrix, LossError> {
    check_bandwidth(sigma2)?;
    Ok(d.map(|v| (-v / sigma2).exp()))
}

/// `K_ij = exp(−‖x_i − x_j‖² / σ²)`.
pub fn gaussian_kernel(x: &Matrix, sigma2: f64) -> Result<Matrix, LossError> {
    kernel_from_distances(&pairwise_squared_distances(x), sigma2)
}

/// Median-heuristic kernel of each view with its σ².
pub fn view_kernels(views: &[Matrix]) -> Result<(Vec<Matrix>, Vec<f64>), LossError> {
    let mut kernels = Vec::with_capacity(views.len());
    let mut bandwidths = Vec::with_capacity(views.len());
    for x in views {
        let d = pairwise_squared_distances(x);
        let s = median_bandwidth(&d);
        kernels.push(kernel_from_distances(&d, s)?);
        bandwidths.push(s);
    }
    Ok((kernels, bandwidths))
}

/// Fused kernel from a Gram node. σ² is `bandwidth` if given, else read off
/// the current distances, and is held constant either way; with `detach`
/// the kernel itself is a constant.
pub fn fused_kernel_expr(
    tape: &mut Tape,
    gram: Expr,
    detach: bool,
    bandwidth: Option<f64>,
) -> Result<(Expr, f64), LossError> {
    let d = tape.squared_distances_from_gram(gram)?;
    let sigma2 = bandwidth.unwrap_or_else(|| median_bandwidth(tape.value(d)));
    check_bandwidth(sigma2)?;
    let scaled = tape.scale(d, -1.0 / sigma2)?;
    let k = tape.exp(scaled)?;
    if detach {
        let v = tape.value(k).clone();
        return Ok((tape.constant(v)?, sigma2));
    }
    Ok((k, sigma2))
}

/// `trace(K̂(I − HHᵀ)) + (1/V)Σ_v trace(K^v(I − HHᵀ))`, evaluated as
/// `trace(K) − trace(HᵀKH)` on the combined kernel `K = K̂ + mean_v K^v`.
/// `mean_view_kernel` is the (constant) average of the view kernels.
pub fn kernel_kmeans_expr(
    tape: &mut Tape,
    fused_kernel: Expr,
    mean_view_kernel: Expr,
    h: Expr,
) -> Result<Expr, LossError> {
    let k = tape.add(fused_kernel, mean_view_kernel)?;
    let kh = tape.matmul(k, h)?;
    let ht = tape.transpose(h)?;
    let hkh = tape.matmul(ht, kh)?;
    let t_full = tape.trace(k)?;
    let t_proj = tape.trace(hkh)?;
    Ok(tape.sub(t_full, t_proj)?)
}

/// `trace(Hᵀ(D − A)H)`.
pub fn spectral_expr(tape: &mut Tape, h: Expr, adjacency: Expr) -> Result<Expr, LossError> {
    let l = tape.laplacian(adjacency)?;
    let lh = tape.matmul(l, h)?;
    let ht = tape.transpose(h)?;
    let q = tape.matmul(ht, lh)?;
    Ok(tape.trace(q)?)
}

/// `S^v = F^v F^vᵀ` for every projected view.
pub fn view_grams_expr(tape: &mut Tape, views: &[Expr]) -> Result<Vec<Expr>, LossError> {
    Ok(views
        .iter()
        .map(|&f| tape.gram(f))
        .collect::<Result<_, _>>()?)
}

/// `Σ_v ‖HHᵀ − S^v‖² + ‖S_f − S^v‖²`; `similarity` is the activated dense
/// `max(F_f F_fᵀ, 0)`.
pub fn smal_expr(
    tape: &mut Tape,
    h: Expr,
    view_grams: &[Expr],
    similarity: Expr,
) -> Result<Expr, LossError> {
    let hh = tape.gram(h)?;
    let mut terms = Vec::with_capacity(2 * view_grams.len());
    for &s in view_grams {
        let a = tape.sub(hh, s)?;
        terms.push((tape.frobenius_sq(a)?, 1.0));
        let b = tape.sub(similarity, s)?;
        terms.push((tape.frobenius_sq(b)?, 1.0));
    }
    Ok(tape.weighted_sum(&terms)?)
}

/// `Σ_v ‖X^v X^vᵀ − S^v‖²`; `raw_grams` are the constant `X^v X^vᵀ`.
pub fn fral_expr(
    tape: &mut Tape,
    raw_grams: &[Expr],
    view_grams: &[Expr],
) -> Result<Expr, LossError> {
    if raw_grams.len() != view_grams.len() {
        return Err(LossError::Shape(format!(
            "{} raw views for {} projected views",
            raw_grams.len(),
            view_grams.len()
        )));
    }
    let mut terms = Vec::with_capacity(view_grams.len());
    for (&g, &s) in raw_grams.iter().zip(view_grams) {
        let d = tape.sub(g, s)?;
        terms.push((tape.frobenius_sq(d)?, 1.0));
    }
    Ok(tape.weighted_sum(&terms)?)
}

/// `‖A − HHᵀ‖²`.
pub fn autoencoder_expr(tape: &mut Tape, adjacency: Expr, h: Expr) -> Result<Expr, LossError> {
    let hh = tape.gram(h)?;
    let d = tape.sub(adjacency, hh)?;
    Ok(tape.frobenius_sq(d)?)
}

/// Handles of the individual terms; `None` marks a disabled term.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossExprs {
    pub autoencoder: Option<Expr>,
    pub kernel_kmeans: Option<Expr>,
    pub spectral: Option<Expr>,
    pub smal: Option<Expr>,
    pub fral: Option<Expr>,
}

/// Term values of one evaluation; disabled terms read 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub autoencoder: f64,
    pub kernel_kmeans: f64,
    pub spectral: f64,
    pub smal: f64,
    pub fral: f64,
}

impl LossBreakdown {
    /// Recombines the stored terms with `weights`.
    pub fn weighted_total(&self, weights: &LossWeights) -> f64 {
        self.autoencoder
            + weights.beta * self.kernel_kmeans
            + weights.lambda1 * self.spectral
            + weights.lambda2 * self.smal
            + weights.lambda3 * self.fral
    }
}

impl LossExprs {
    fn weighted(&self, w: &LossWeights) -> Vec<(Expr, f64)> {
        [
            (self.autoencoder, 1.0),
            (self.kernel_kmeans, w.beta),
            (self.spectral, w.lambda1),
            (self.smal, w.lambda2),
            (self.fral, w.lambda3),
        ]
        .into_iter()
        .filter_map(|(e, weight)| e.map(|e| (e, weight)))
        .collect()
    }

    /// `L_a + β·L_kkm + λ1·L_spec + λ2·L_smal + λ3·L_fral` over the enabled terms.
    pub fn total(&self, tape: &mut Tape, weights: &LossWeights) -> Result<Expr, LossError> {
        let terms = self.weighted(weights);
        if terms.is_empty() {
            return Err(LossError::Shape("no loss term enabled".into()));
        }
        Ok(tape.weighted_sum(&terms)?)
    }

    pub fn breakdown(&self, tape: &Tape, total: Expr) -> Result<LossBreakdown, LossError> {
        let read = |e: Option<Expr>| -> Result<f64, LossError> {
            Ok(match e {
                Some(e) => tape.scalar(e)?,
                None => 0.0,
            })
        };
        Ok(LossBreakdown {
            total: tape.scalar(total)?,
            autoencoder: read(self.autoencoder)?,
            kernel_kmeans: read(self.kernel_kmeans)?,
            spectral: read(self.spectral)?,
            smal: read(self.smal)?,
            fral: read(self.fral)?,
        })
    }
}

fn eval(build: impl FnOnce(&mut Tape) -> Result<Expr, LossError>) -> Result<f64, LossError> {
    let mut tape = Tape::new();
    let e = build(&mut tape)?;
    Ok(tape.scalar(e)?)
}

pub fn kernel_kmeans_loss(kernels: &KernelSet, h: &Matrix) -> Result<f64, LossError> {
    let n = kernels.fused.rows();
    if h.rows() != n || kernels.views.iter().any(|k| k.shape() != (n, n)) {
        return Err(LossError::Shape(format!(
            "H is {:?} for {n}×{n} kernels",
            h.shape()
        )));
    }
    eval(|t| {
        let kf = t.constant(kernels.fused.clone())?;
        let kv = t.constant(kernels.mean_view_kernel())?;
        let h = t.constant(h.clone())?;
        kernel_kmeans_expr(t, kf, kv, h)
    })
}

pub fn spectral_loss(h: &Matrix, adjacency: &Matrix) -> Result<f64, LossError> {
    eval(|t| {
        let h = t.constant(h.clone())?;
        let a = t.constant(adjacency.clone())?;
        spectral_expr(t, h, a)
    })
}

pub fn smal_loss(h: &Matrix, views: &[Matrix], fused: &Matrix) -> Result<f64, LossError> {
    eval(|t| {
        let h = t.constant(h.clone())?;
        let f = views
            .iter()
            .map(|m| t.constant(m.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let ff = t.constant(fused.clone())?;
        let g = t.gram(ff)?;
        let s = t.relu(g)?;
        let grams = view_grams_expr(t, &f)?;
        smal_expr(t, h, &grams, s)
    })
}

pub fn fral_loss(raw: &[Matrix], views: &[Matrix]) -> Result<f64, LossError> {
    eval(|t| {
        let g = raw
            .iter()
            .map(|x| t.constant(x.clone()).and_then(|x| t.gram(x)))
            .collect::<Result<Vec<_>, _>>()?;
        let f = views
            .iter()
            .map(|m| t.constant(m.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let grams = view_grams_expr(t, &f)?;
        fral_expr(t, &g, &grams)
    })
}

pub fn autoencoder_loss(adjacency: &Matrix, h: &Matrix) -> Result<f64, LossError> {
    eval(|t| {
        let a = t.constant(adjacency.clone())?;
        let h = t.constant(h.clone())?;
        autoencoder_expr(t, a, h)
    })
}

/// Inputs for evaluating every term directly from matrices.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub raw_views: &'a [Matrix],
    pub views: &'a [Matrix],
    pub fused: &'a Matrix,
    pub adjacency: &'a Matrix,
    pub h: &'a Matrix,
    pub kernels: &'a KernelSet,
}

pub fn total_loss(
    inputs: &LossInputs<'_>,
    weights: &LossWeights,
) -> Result<LossBreakdown, LossError> {
    weights.validate()?;
    let mut b = LossBreakdown {
        total: 0.0,
        autoencoder: autoencoder_loss(inputs.adjacency, inputs.h)?,
        kernel_kmeans: kernel_kmeans_loss(inputs.kernels, inputs.h)?,
        spectral: spectral_loss(inputs.h, inputs.adjacency)?,
        smal: smal_loss(inputs.h, inputs.views, inputs.fused)?,
        fral: fral_loss(inputs.raw_views, inputs.views)?,
    };
    b.total = b.weighted_total(weights);
    Ok(b)
}

/// Kernel k-means distortion of a hard assignment, computed by expanding
/// every point-to-centroid distance with the kernel trick. Quadratic per
/// view and intended as a reference for the trace form in tests.
pub fn kernel_kmeans_assignment_oracle(
    kernels: &KernelSet,
    assignment: &[usize],
) -> Result<f64, LossError> {
    let n = assignment.len();
    let c = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &a) in assignment.iter().enumerate() {
        members[a].push(i);
    }
    if let Some(j) = members.iter().position(Vec::is_empty) {
        return Err(LossError::EmptyCluster(j));
    }
    let distortion = |k: &Matrix| -> Result<f64, LossError> {
        if k.shape() != (n, n) {
            return Err(LossError::Shape(format!(
                "{:?} kernel for {n} assignments",
                k.shape()
            )));
        }
        let mut total = 0.0;
        for cluster in &members {
            let nj = cluster.len() as f64;
            let mut within = 0.0;
            for &l in cluster {
                for &m in cluster {
                    within += k[(l, m)];
                }
            }
            for &i in cluster {
                let cross: f64 = cluster.iter().map(|&l| k[(i, l)]).sum();
                total += k[(i, i)] - 2.0 * cross / nj + within / (nj * nj);
            }
        }
        Ok(total)
    };
    let mut total = distortion(&kernels.fused)?;
    let v = kernels.views.len() as f64;
    for k in &kernels.views {
        total += distortion(k)? / v;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_kernels(n: usize, v: usize) -> KernelSet {
        KernelSet {
            views: vec![Matrix::filled(n, n, 1.0); v],
            fused: Matrix::filled(n, n, 1.0),
            view_bandwidths: vec![1.0; v],
            fused_bandwidth: 1.0,
        }
    }

    #[test]
    fn kernel_examples() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 4.0]]);
        let k = gaussian_kernel(&x, 4.0).unwrap();
        assert_eq!(k[(0, 1)], 1.0);
        assert!((k[(0, 2)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!(gaussian_kernel(&x, 0.0).is_err());
        assert!(gaussian_kernel(&x, -1.0).is_err());
    }

    #[test]
    fn median_heuristic() {
        let d = Matrix::from_rows(&[[0.0, 1.0, 4.0], [1.0, 0.0, 9.0], [4.0, 9.0, 0.0]]);
        assert_eq!(median_bandwidth(&d), 4.0);
        let d = Matrix::from_rows(&[
            [0.0, 1.0, 2.0, 0.0],
            [1.0, 0.0, 3.0, 4.0],
            [2.0, 3.0, 0.0, 5.0],
            [0.0, 4.0, 5.0, 0.0],
        ]);
        assert_eq!(median_bandwidth(&d), 3.0);
        let d = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(median_bandwidth(&d), 1.0);
        let d = Matrix::from_rows(&[
            [0.0, 1.0, 2.0, 6.0],
            [1.0, 0.0, 3.0, 4.0],
            [2.0, 3.0, 0.0, 5.0],
            [6.0, 4.0, 5.0, 0.0],
        ]);
        assert_eq!(median_bandwidth(&d), 3.5);
        assert_eq!(median_bandwidth(&Matrix::zeros(3, 3)), 1.0);
    }

    #[test]
    fn kkm_trivial_cases() {
        let k = KernelSet {
            views: vec![Matrix::from_rows(&[[1.0, 0.3], [0.3, 1.0]])],
            fused: Matrix::from_rows(&[[1.0, 0.7], [0.7, 1.0]]),
            view_bandwidths: vec![1.0],
            fused_bandwidth: 1.0,
        };
        assert!(kernel_kmeans_loss(&k, &Matrix::identity(2)).unwrap().abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = Matrix::from_rows(&[[s], [s]]);
        assert!(kernel_kmeans_loss(&ones_kernels(2, 2), &h).unwrap().abs() < 1e-14);
    }

    #[test]
    fn oracle_trivial_cases() {
        assert!(
            kernel_kmeans_assignment_oracle(&ones_kernels(4, 2), &[0, 0, 0, 0])
                .unwrap()
                .abs()
                < 1e-15
        );
        let k = KernelSet {
            views: vec![Matrix::from_rows(&[[1.0, 0.2], [0.2, 1.0]])],
            fused: Matrix::from_rows(&[[1.0, 0.5], [0.5, 1.0]]),
            view_bandwidths: vec![1.0],
            fused_bandwidth: 1.0,
        };
        assert_eq!(kernel_kmeans_assignment_oracle(&k, &[0, 1]).unwrap(), 0.0);
        assert!(matches!(
            kernel_kmeans_assignment_oracle(&k, &[1, 1]),
            Err(LossError::EmptyCluster(0))
        ));
    }

    #[test]
    fn spectral_examples() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(
            spectral_loss(&Matrix::from_rows(&[[1.0], [0.0]]), &a).unwrap(),
            1.0
        );
        assert_eq!(spectral_loss(&Matrix::filled(2, 3, 0.4), &a).unwrap(), 0.0);
        assert_eq!(
            spectral_loss(&Matrix::from_rows(&[[1.0], [0.0]]), &Matrix::zeros(2, 2)).unwrap(),
            0.0
        );
    }

    #[test]
    fn smal_fral_autoencoder_examples() {
        let f = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(smal_loss(&f, std::slice::from_ref(&f), &f).unwrap(), 0.0);
        let h = Matrix::from_rows(&[[0.6], [0.8]]);
        let g = Matrix::from_rows(&[[0.2, 0.1], [0.5, -0.3]]);
        let once = smal_loss(&h, &[g.clone()], &g).unwrap();
        let twice = smal_loss(&h, &[g.clone(), g.clone()], &g).unwrap();
        assert!((twice - 2.0 * once).abs() < 1e-15);

        assert_eq!(fral_loss(&[g.clone()], &[g.clone()]).unwrap(), 0.0);
        let scaled = fral_loss(&[g.scale(2.0)], &[g.clone()]).unwrap();
        let gram = g.matmul(&g.transpose()).unwrap();
        assert!((scaled - gram.scale(3.0).frobenius_norm_sq()).abs() < 1e-14);

        let a = h.matmul(&h.transpose()).unwrap();
        assert!(autoencoder_loss(&a, &h).unwrap().abs() < 1e-15);
        assert_eq!(
            autoencoder_loss(&a, &Matrix::zeros(2, 1)).unwrap(),
            a.frobenius_norm_sq()
        );
    }

    #[test]
    fn weights_validated() {
        assert!(LossWeights::default().validate().is_ok());
        let bad = LossWeights {
            lambda2: -0.1,
            ..LossWeights::default()
        };
        assert!(bad.validate().is_err());
        let nan = LossWeights {
            beta: f64::NAN,
            ..LossWeights::default()
        };
        assert!(nan.validate().is_err());
    }
}
