//! Forward pipeline: per-view projection and fusion, the learned consensus
//! graph, adjacency normalization, the three-layer GCN, and Cholesky
//! orthogonalization of its output.
//!
//! Everything is expressed on a [`Tape`] so the trainer can differentiate
//! it; the free functions at the bottom of this module run the same code on
//! constant inputs for callers that only want values.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointIndex, ParamShape, CHECKPOINT_INDEX,
};

use crate::data::ViewSet;
use crate::numerics::{pairwise_squared_distances, Expr, Matrix, NumericsError, Tape};

/// Multiplier applied to ε after each failed factorization.
pub const EPSILON_GROWTH: f64 = 10.0;
/// Escalations allowed before orthogonalization gives up.
pub const EPSILON_MAX_ESCALATIONS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("orthogonalization failed after raising epsilon to {epsilon:e}: {source}")]
    Orthogonalization {
        epsilon: f64,
        #[source]
        source: NumericsError,
    },
    #[error("k = {k} outside [1, {max}] for {n} samples")]
    KOutOfRange { k: usize, max: usize, n: usize },
    #[error("parameter shapes do not fit the data: {0}")]
    Shape(String),
}

/// Trainable matrices. `u` is empty for the static-graph baseline, which
/// feeds raw concatenated features straight into the GCN.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub u: Vec<Matrix>,
    pub w1: Matrix,
    pub w2: Matrix,
    pub w3: Matrix,
}

impl ModelParams {
    pub fn is_static(&self) -> bool {
        self.u.is_empty()
    }

    /// `(name, matrix)` pairs in a fixed order: `U0..U{V-1}, W1, W2, W3`.
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = self
            .u
            .iter()
            .enumerate()
            .map(|(v, m)| (format!("U{v}"), m))
            .collect();
        out.push(("W1".into(), &self.w1));
        out.push(("W2".into(), &self.w2));
        out.push(("W3".into(), &self.w3));
        out
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.u.iter_mut().collect();
        out.push(&mut self.w1);
        out.push(&mut self.w2);
        out.push(&mut self.w3);
        out
    }

    pub fn matrices(&self) -> Vec<&Matrix> {
        self.named().into_iter().map(|(_, m)| m).collect()
    }

    /// Checks the parameters against a dataset.
    pub fn check_against(&self, data: &ViewSet) -> Result<(), ModelError> {
        let fused_width = if self.is_static() {
            data.view_dims().iter().sum()
        } else {
            if self.u.len() != data.n_views() {
                return Err(ModelError::Shape(format!(
                    "{} projections for {} views",
                    self.u.len(),
                    data.n_views()
                )));
            }
            let d = self.u[0].cols();
            for (v, (u, x)) in self.u.iter().zip(data.views()).enumerate() {
                if u.rows() != x.cols() || u.cols() != d {
                    return Err(ModelError::Shape(format!(
                        "U{v} is {:?}, view {v} has {} columns and the fusion width is {d}",
                        u.shape(),
                        x.cols()
                    )));
                }
            }
            d * data.n_views()
        };
        if self.w1.rows() != fused_width
            || self.w2.rows() != self.w1.cols()
            || self.w3.rows() != self.w2.cols()
        {
            return Err(ModelError::Shape(format!(
                "W1 {:?}, W2 {:?}, W3 {:?} do not chain from width {fused_width}",
                self.w1.shape(),
                self.w2.shape(),
                self.w3.shape()
            )));
        }
        if self.w3.cols() > data.n_samples() {
            return Err(ModelError::Shape(format!(
                "{} clusters for {} samples",
                self.w3.cols(),
                data.n_samples()
            )));
        }
        Ok(())
    }
}

/// Learned graph quantities for one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusGraph {
    /// `max(F_f F_fᵀ, 0)`.
    pub similarity: Matrix,
    /// Row-wise top-k mask (diagonal excluded).
    pub mask: Matrix,
    /// `(Ṡ + Ṡᵀ) / 2` with `Ṡ = S ⊙ M`.
    pub adjacency: Matrix,
    /// `D^{-1/2}(A + I)D^{-1/2}`.
    pub normalized: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutputs {
    pub views: Vec<Matrix>,
    pub fused: Matrix,
    pub graph: ConsensusGraph,
    pub h1: Matrix,
    pub h2: Matrix,
    pub h3: Matrix,
    pub h: Matrix,
    /// ε actually used by the orthogonalization after any escalation.
    pub epsilon: f64,
}

/// Parameter handles on a tape.
#[derive(Debug, Clone)]
pub struct ParamExprs {
    pub u: Vec<Expr>,
    pub w1: Expr,
    pub w2: Expr,
    pub w3: Expr,
}

impl ParamExprs {
    /// Pushes parameters as differentiable inputs (or constants).
    pub fn push(
        tape: &mut Tape,
        params: &ModelParams,
        trainable: bool,
    ) -> Result<Self, NumericsError> {
        let mut leaf = |m: &Matrix| {
            if trainable {
                tape.input(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        Ok(Self {
            u: params.u.iter().map(&mut leaf).collect::<Result<_, _>>()?,
            w1: leaf(&params.w1)?,
            w2: leaf(&params.w2)?,
            w3: leaf(&params.w3)?,
        })
    }

    /// Same order as [`ModelParams::named`].
    pub fn all(&self) -> Vec<Expr> {
        let mut out = self.u.clone();
        out.extend([self.w1, self.w2, self.w3]);
        out
    }
}

/// How the graph fed to the GCN is obtained.
#[derive(Debug, Clone, Copy)]
pub enum GraphSource<'a> {
    /// Learned from the fused projections with row-wise top-k.
    Learned { k: usize },
    /// Fixed adjacency over raw concatenated features.
    Static { adjacency: &'a Matrix },
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardExprs {
    /// `F^v`; empty for the static graph.
    pub views: Vec<Expr>,
    pub fused: Expr,
    /// `F_f F_fᵀ` before activation (learned graph only).
    pub fused_gram: Option<Expr>,
    /// `S_f` (learned graph only).
    pub similarity: Option<Expr>,
    /// `S_f ⊙ M` (learned graph only).
    pub sparse: Option<Expr>,
    pub adjacency: Expr,
    pub normalized: Expr,
    pub h1: Expr,
    pub h2: Expr,
    pub h3: Expr,
    pub h: Expr,
    pub epsilon: f64,
}

/// Records the whole forward pass. `views` are the raw data matrices already
/// on the tape (as constants).
pub fn forward_on_tape(
    tape: &mut Tape,
    params: &ParamExprs,
    views: &[Expr],
    graph: GraphSource<'_>,
    epsilon: f64,
) -> Result<ForwardExprs, ModelError> {
    let n = tape.shape(views[0]).0;
    let (f_views, fused, fused_gram, similarity, sparse, adjacency) = match graph {
        GraphSource::Learned { k } => {
            check_k(k, n)?;
            let (f_views, fused) = fuse_on_tape(tape, &params.u, views)?;
            let gram = tape.gram(fused)?;
            let s = tape.relu(gram)?;
            let sparse = tape.row_topk_mask_apply(s, k, true)?;
            let adjacency = symmetrize(tape, sparse)?;
            (f_views, fused, Some(gram), Some(s), Some(sparse), adjacency)
        }
        GraphSource::Static { adjacency } => {
            let raw: Vec<Matrix> = views.iter().map(|&e| tape.value(e).clone()).collect();
            let fused = tape.constant(Matrix::hconcat(&raw.iter().collect::<Vec<_>>())?)?;
            let a = tape.constant(adjacency.clone())?;
            (Vec::new(), fused, None, None, None, a)
        }
    };
    let normalized = tape.normalize_adjacency(adjacency)?;
    let (h1, h2, h3) = gcn_on_tape(tape, normalized, fused, params)?;
    let (h, epsilon) = orthogonalize_on_tape(tape, h3, epsilon)?;
    Ok(ForwardExprs {
        views: f_views,
        fused,
        fused_gram,
        similarity,
        sparse,
        adjacency,
        normalized,
        h1,
        h2,
        h3,
        h,
        epsilon,
    })
}

fn check_k(k: usize, n: usize) -> Result<(), ModelError> {
    if k == 0 || k + 1 > n {
        return Err(ModelError::KOutOfRange {
            k,
            max: n.saturating_sub(1),
            n,
        });
    }
    Ok(())
}

/// `F^v = colnorm(X^v U^v)`, `F_f = [F^0, F^1, ...]`.
pub fn fuse_on_tape(
    tape: &mut Tape,
    u: &[Expr],
    views: &[Expr],
) -> Result<(Vec<Expr>, Expr), ModelError> {
    if u.len() != views.len() {
        return Err(ModelError::Shape(format!(
            "{} projections for {} views",
            u.len(),
            views.len()
        )));
    }
    let mut f_views = Vec::with_capacity(views.len());
    for (&x, &p) in views.iter().zip(u) {
        let projected = tape.matmul(x, p)?;
        f_views.push(tape.column_normalize(projected)?);
    }
    let fused = tape.hconcat(&f_views)?;
    Ok((f_views, fused))
}

fn symmetrize(tape: &mut Tape, s: Expr) -> Result<Expr, NumericsError> {
    let st = tape.transpose(s)?;
    let sum = tape.add(s, st)?;
    tape.scale(sum, 0.5)
}

/// Two graph-convolution layers and a linear output layer:
/// `H1 = relu(Â F W1)`, `H2 = relu(Â H1 W2)`, `H3 = H2 W3`.
pub fn gcn_on_tape(
    tape: &mut Tape,
    normalized: Expr,
    fused: Expr,
    params: &ParamExprs,
) -> Result<(Expr, Expr, Expr), NumericsError> {
    // Â·(F·W) is cheaper than (Â·F)·W since the hidden width is small.
    let fw = tape.matmul(fused, params.w1)?;
    let z1 = tape.matmul(normalized, fw)?;
    let h1 = tape.relu(z1)?;
    let hw = tape.matmul(h1, params.w2)?;
    let z2 = tape.matmul(normalized, hw)?;
    let h2 = tape.relu(z2)?;
    let h3 = tape.matmul(h2, params.w3)?;
    Ok((h1, h2, h3))
}

/// Orthogonalizes `h3`, raising ε by [`EPSILON_GROWTH`] up to
/// [`EPSILON_MAX_ESCALATIONS`] times when the factorization fails.
pub fn orthogonalize_on_tape(
    tape: &mut Tape,
    h3: Expr,
    epsilon: f64,
) -> Result<(Expr, f64), ModelError> {
    let (n, c) = tape.shape(h3);
    if c > n {
        return Err(ModelError::Shape(format!(
            "{c} output columns for {n} samples"
        )));
    }
    let mut eps = epsilon;
    let mut attempt = 0;
    loop {
        match tape.cholesky_orthogonalize(h3, eps) {
            Ok(h) => return Ok((h, eps)),
            Err(e @ NumericsError::CholeskyFailed { .. }) => {
                if attempt == EPSILON_MAX_ESCALATIONS {
                    return Err(ModelError::Orthogonalization {
                        epsilon: eps,
                        source: e,
                    });
                }
                attempt += 1;
                eps = (eps * EPSILON_GROWTH).max(1e-12);
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Averaged per-view kNN graph on raw features, used by the static-graph
/// baseline. Each view contributes a binary Euclidean kNN graph (self
/// excluded) symmetrized as `(M + Mᵀ)/2`.
pub fn static_knn_graph(data: &ViewSet, k: usize) -> Result<Matrix, ModelError> {
    let n = data.n_samples();
    check_k(k, n)?;
    let mut acc = Matrix::zeros(n, n);
    for x in data.views() {
        let neg_dist = pairwise_squared_distances(x).scale(-1.0);
        let mask = crate::numerics::row_topk_mask(&neg_dist, k, true)?;
        acc.add_scaled_assign(&mask, 0.5);
        acc.add_scaled_assign(&mask.transpose(), 0.5);
    }
    Ok(acc.scale(1.0 / data.n_views() as f64))
}

fn constant_views(tape: &mut Tape, data: &ViewSet) -> Result<Vec<Expr>, NumericsError> {
    data.views()
        .iter()
        .map(|m| tape.constant(m.clone()))
        .collect()
}

/// Full forward pass on fixed parameters.
pub fn forward(
    params: &ModelParams,
    data: &ViewSet,
    k: usize,
    epsilon: f64,
    static_adjacency: Option<&Matrix>,
) -> Result<ForwardOutputs, ModelError> {
    params.check_against(data)?;
    let mut tape = Tape::new();
    let views = constant_views(&mut tape, data)?;
    let p = ParamExprs::push(&mut tape, params, false)?;
    let source = match static_adjacency {
        Some(adjacency) => GraphSource::Static { adjacency },
        None => GraphSource::Learned { k },
    };
    let f = forward_on_tape(&mut tape, &p, &views, source, epsilon)?;
    let n = data.n_samples();
    let value = |e: Option<Expr>| e.map_or_else(|| Matrix::zeros(n, n), |e| tape.value(e).clone());
    let mask = match f.sparse {
        Some(s) => tape
            .mask_of(s)
            .cloned()
            .expect("sparse node carries its mask"),
        None => Matrix::zeros(n, n),
    };
    Ok(ForwardOutputs {
        views: f.views.iter().map(|&e| tape.value(e).clone()).collect(),
        fused: tape.value(f.fused).clone(),
        graph: ConsensusGraph {
            similarity: value(f.similarity),
            mask,
            adjacency: tape.value(f.adjacency).clone(),
            normalized: tape.value(f.normalized).clone(),
        },
        h1: tape.value(f.h1).clone(),
        h2: tape.value(f.h2).clone(),
        h3: tape.value(f.h3).clone(),
        h: tape.value(f.h).clone(),
        epsilon: f.epsilon,
    })
}

/// Per-view projections `F^v` and their concatenation `F_f`.
pub fn fuse_views(
    params: &ModelParams,
    data: &ViewSet,
) -> Result<(Vec<Matrix>, Matrix), ModelError> {
    if params.u.len() != data.n_views() {
        return Err(ModelError::Shape(format!(
            "{} projections for {} views",
            params.u.len(),
            data.n_views()
        )));
    }
    let mut tape = Tape::new();
    let views = constant_views(&mut tape, data)?;
    let u: Vec<Expr> = params
        .u
        .iter()
        .map(|m| tape.constant(m.clone()))
        .collect::<Result<_, _>>()?;
    let (f, fused) = fuse_on_tape(&mut tape, &u, &views)?;
    Ok((
        f.iter().map(|&e| tape.value(e).clone()).collect(),
        tape.value(fused).clone(),
    ))
}

/// Consensus graph of fused features with row-wise top-`k` sparsification.
pub fn build_consensus_graph(fused: &Matrix, k: usize) -> Result<ConsensusGraph, ModelError> {
    check_k(k, fused.rows())?;
    let mut tape = Tape::new();
    let f = tape.constant(fused.clone())?;
    let gram = tape.gram(f)?;
    let s = tape.relu(gram)?;
    let sparse = tape.row_topk_mask_apply(s, k, true)?;
    let a = symmetrize(&mut tape, sparse)?;
    let a_hat = tape.normalize_adjacency(a)?;
    Ok(ConsensusGraph {
        similarity: tape.value(s).clone(),
        mask: tape.mask_of(sparse).cloned().expect("mask recorded"),
        adjacency: tape.value(a).clone(),
        normalized: tape.value(a_hat).clone(),
    })
}

/// `D^{-1/2}(A + I)D^{-1/2}` with `D` the row sums of `A + I`.
pub fn normalize_adjacency(adjacency: &Matrix) -> Result<Matrix, ModelError> {
    let mut tape = Tape::new();
    let a = tape.constant(adjacency.clone())?;
    let a_hat = tape.normalize_adjacency(a)?;
    Ok(tape.value(a_hat).clone())
}

/// `(H1, H2, H3)` for a given normalized adjacency and fused features.
pub fn gcn_forward(
    normalized: &Matrix,
    fused: &Matrix,
    params: &ModelParams,
) -> Result<(Matrix, Matrix, Matrix), ModelError> {
    let mut tape = Tape::new();
    let a = tape.constant(normalized.clone())?;
    let f = tape.constant(fused.clone())?;
    let p = ParamExprs::push(&mut tape, params, false)?;
    let (h1, h2, h3) = gcn_on_tape(&mut tape, a, f, &p)?;
    Ok((
        tape.value(h1).clone(),
        tape.value(h2).clone(),
        tape.value(h3).clone(),
    ))
}

/// `H = H3·L⁻ᵀ` with `L·Lᵀ = H3ᵀH3 + εI`; returns the ε actually used.
pub fn orthogonalize(h3: &Matrix, epsilon: f64) -> Result<(Matrix, f64), ModelError> {
    let mut tape = Tape::new();
    let x = tape.constant(h3.clone())?;
    let (h, eps) = orthogonalize_on_tape(&mut tape, x, epsilon)?;
    Ok((tape.value(h).clone(), eps))
}
