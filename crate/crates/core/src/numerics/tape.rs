//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every node eagerly: the forward value is computed (and
//! checked for shape and finiteness) when the node is pushed. The backward
//! pass walks the tape in reverse, accumulating adjoints only along nodes
//! that depend on at least one [`Tape::input`].

use std::collections::HashMap;

use super::linalg::{
    cholesky_lower, solve_triangular, solve_triangular_transposed, squared_distances_from_gram,
};
use super::matrix::{gemm, gemm_into};
use super::{Matrix, NumericsError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr(usize);

impl Expr {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Constant,
    MatMul(Expr, Expr),
    Transpose(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Scale(Expr, f64),
    Relu(Expr),
    Exp(Expr),
    Hadamard(Expr, Expr),
    Trace(Expr),
    FrobeniusSq(Expr),
    /// `H = X·L⁻ᵀ` with `L·Lᵀ = XᵀX + εI`; `L` is kept for the backward pass.
    CholeskyOrthogonalize {
        input: Expr,
        lower: Matrix,
    },
    /// `S ⊙ M`; the mask is detached.
    RowTopkMask {
        input: Expr,
        mask: Matrix,
    },
    /// `X·Xᵀ`.
    Gram(Expr),
    /// Pairwise squared distances read off a Gram matrix.
    SquaredDistancesFromGram(Expr),
    /// Column-wise unit L2 normalization; zero columns stay zero.
    ColumnNormalize {
        input: Expr,
        norms: Vec<f64>,
    },
    HConcat(Vec<Expr>),
    /// `D^{-1/2}(A + I)D^{-1/2}`, D the row sums of `A + I`.
    NormalizeAdjacency {
        input: Expr,
        inv_sqrt_degree: Vec<f64>,
    },
    /// `diag(rowsum(A)) − A`.
    Laplacian(Expr),
    /// Weighted sum of scalars.
    WeightedSum(Vec<(Expr, f64)>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "subtract",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::Hadamard(..) => "hadamard",
            Op::Trace(_) => "trace",
            Op::FrobeniusSq(_) => "frobenius_sq",
            Op::CholeskyOrthogonalize { .. } => "cholesky_orthogonalize",
            Op::RowTopkMask { .. } => "row_topk_mask",
            Op::Gram(_) => "gram",
            Op::SquaredDistancesFromGram(_) => "squared_distances",
            Op::ColumnNormalize { .. } => "column_normalize",
            Op::HConcat(_) => "hconcat",
            Op::NormalizeAdjacency { .. } => "normalize_adjacency",
            Op::Laplacian(_) => "laplacian",
            Op::WeightedSum(_) => "weighted_sum",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

/// Computation tape.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to requested inputs.
#[derive(Debug, Clone, Default)]
pub struct GradientSet {
    grads: HashMap<Expr, Matrix>,
}

impl GradientSet {
    pub fn get(&self, input: Expr) -> Option<&Matrix> {
        self.grads.get(&input)
    }

    pub fn take(&mut self, input: Expr) -> Option<Matrix> {
        self.grads.remove(&input)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, e: Expr) -> &Matrix {
        &self.nodes[e.0].value
    }

    pub fn shape(&self, e: Expr) -> (usize, usize) {
        self.nodes[e.0].value.shape()
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, e: Expr) -> Result<f64, NumericsError> {
        let v = self.value(e);
        if v.shape() != (1, 1) {
            return Err(NumericsError::NotScalar { shape: v.shape() });
        }
        Ok(v[(0, 0)])
    }

    fn push(&mut self, op: Op, value: Matrix) -> Result<Expr, NumericsError> {
        if let Some((row, col)) = value.first_non_finite() {
            return Err(NumericsError::NonFinite {
                op: op.name(),
                row,
                col,
            });
        }
        let requires_grad = match &op {
            Op::Input => true,
            Op::Constant => false,
            _ => self
                .parents(&op)
                .iter()
                .any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Expr(self.nodes.len() - 1))
    }

    fn parents(&self, op: &Op) -> Vec<Expr> {
        match op {
            Op::Input | Op::Constant => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Hadamard(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Trace(a)
            | Op::FrobeniusSq(a)
            | Op::Gram(a)
            | Op::SquaredDistancesFromGram(a)
            | Op::Laplacian(a) => vec![*a],
            Op::CholeskyOrthogonalize { input, .. }
            | Op::RowTopkMask { input, .. }
            | Op::ColumnNormalize { input, .. }
            | Op::NormalizeAdjacency { input, .. } => vec![*input],
            Op::HConcat(parts) => parts.clone(),
            Op::WeightedSum(terms) => terms.iter().map(|(e, _)| *e).collect(),
        }
    }

    /// Differentiable leaf.
    pub fn input(&mut self, m: Matrix) -> Result<Expr, NumericsError> {
        self.push(Op::Input, m)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, m: Matrix) -> Result<Expr, NumericsError> {
        self.push(Op::Constant, m)
    }

    pub fn matmul(&mut self, a: Expr, b: Expr) -> Result<Expr, NumericsError> {
        let v = gemm(self.value(a), false, self.value(b), false)?;
        self.push(Op::MatMul(a, b), v)
    }

    pub fn transpose(&mut self, a: Expr) -> Result<Expr, NumericsError> {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    pub fn add(&mut self, a: Expr, b: Expr) -> Result<Expr, NumericsError> {
        let v = self.value(a).add(self.value(b))?;
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Expr, b: Expr) -> Result<Expr, NumericsError> {
        let v = self.value(a).sub(self.value(b))?;
        self.push(Op::Sub(a, b), v)
    }

    pub fn scale(&mut self, a: Expr, factor: f64) -> Result<Expr, NumericsError> {
        let v = self.value(a).scale(factor);
        self.push(Op::Scale(a, factor), v)
    }

    pub fn relu(&mut self, a: Expr) -> Result<Expr, NumericsError> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn exp(&mut self, a: Expr) -> Result<Expr, NumericsError> {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn hadamard(&mut self, a: Expr, b: Expr) -> Result<Expr, NumericsError> {
        let v = self.value(a).hadamard(self.value(b))?;
        self.push(Op::Hadamard(a, b), v)
    }

    pub fn trace(&mut self, a: Expr) -> Result<Expr, NumericsError> {
        let m = self.value(a);
        if !m.is_square() {
            return Err(NumericsError::NotSquare {
                op: "trace",
                shape: m.shape(),
            });
        }
        let v = Matrix::scalar(m.trace());
        self.push(Op::Trace(a), v)
    }

    pub fn frobenius_sq(&mut self, a: Expr) -> Result<Expr, NumericsError> {
        let v = Matrix::scalar(self.value(a).frobenius_norm_sq());
        self.push(Op::FrobeniusSq(a), v)
    }

    /// `X·L⁻ᵀ` where `L` is the lower Cholesky factor of `XᵀX + εI`.
    pub fn cholesky_orthogonalize(&mut self, a: Expr, epsilon: f64) -> Result<Expr, NumericsError> {
        let x = self.value(a);
        let mut gram = gemm(x, true, x, false)?;
        for i in 0..gram.rows() {
            gram[(i, i)] += epsilon;
        }
        let lower = cholesky_lower(&gram)?;
        // Hᵀ = L⁻¹ Xᵀ
        let ht = solve_triangular(&lower, &x.transpose())?;
        let v = ht.transpose();
        self.push(Op::CholeskyOrthogonalize { input: a, lower }, v)
    }

    /// `S ⊙ M` with `M` the row-wise top-k mask of `S` (see
    /// [`super::row_topk_mask`]). The mask is treated as a constant when
    /// differentiating.
    pub fn row_topk_mask_apply(
        &mut self,
        a: Expr,
        k: usize,
        exclude_diagonal: bool,
    ) -> Result<Expr, NumericsError> {
        let mask = super::row_topk_mask(self.value(a), k, exclude_diagonal)?;
        let v = self.value(a).hadamard(&mask)?;
        self.push(Op::RowTopkMask { input: a, mask }, v)
    }

    /// Mask recorded by a [`Tape::row_topk_mask_apply`] node.
    pub fn mask_of(&self, e: Expr) -> Option<&Matrix> {
        match &self.nodes[e.0].op {
            Op::RowTopkMask { mask, .. } => Some(mask),
            _ => None,
        }
    }

    pub fn gram(&mut self, a: Expr) -> Result<Expr, NumericsError> {
        let x = self.value(a);
        let v = gemm(x, false, x, true)?;
        self.push(Op::Gram(a), v)
    }

    /// `D_ij = G_ii + G_jj − 2 G_ij`, clamped at zero, for a Gram matrix `G`.
    pub fn squared_distances_from_gram(&mut self, g: Expr) -> Result<Expr, NumericsError> {
        let m = self.value(g);
        if !m.is_square() {
            return Err(NumericsError::NotSquare {
                op: "squared_distances",
                shape: m.shape(),
            });
        }
        let v = squared_distances_from_gram(m);
        self.push(Op::SquaredDistancesFromGram(g), v)
    }

    pub fn column_normalize(&mut self, a: Expr) -> Result<Expr, NumericsError> {
        let x = self.value(a);
        let mut norms = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for (n, v) in norms.iter_mut().zip(x.row(r)) {
                *n += v * v;
            }
        }
        norms.iter_mut().for_each(|n| *n = n.sqrt());
        let mut v = x.clone();
        for r in 0..v.rows() {
            for (val, &n) in v.row_mut(r).iter_mut().zip(&norms) {
                *val = if n > 0.0 { *val / n } else { 0.0 };
            }
        }
        self.push(Op::ColumnNormalize { input: a, norms }, v)
    }

    pub fn hconcat(&mut self, parts: &[Expr]) -> Result<Expr, NumericsError> {
        let blocks: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::hconcat(&blocks)?;
        self.push(Op::HConcat(parts.to_vec()), v)
    }

    pub fn normalize_adjacency(&mut self, a: Expr) -> Result<Expr, NumericsError> {
        let m = self.value(a);
        if !m.is_square() {
            return Err(NumericsError::NotSquare {
                op: "normalize_adjacency",
                shape: m.shape(),
            });
        }
        let n = m.rows();
        let inv_sqrt_degree: Vec<f64> = (0..n)
            .map(|i| (m.row(i).iter().sum::<f64>() + 1.0).sqrt().recip())
            .collect();
        let mut v = m.clone();
        for i in 0..n {
            v[(i, i)] += 1.0;
            for j in 0..n {
                v[(i, j)] *= inv_sqrt_degree[i] * inv_sqrt_degree[j];
            }
        }
        self.push(
            Op::NormalizeAdjacency {
                input: a,
                inv_sqrt_degree,
            },
            v,
        )
    }

    pub fn laplacian(&mut self, a: Expr) -> Result<Expr, NumericsError> {
        let m = self.value(a);
        if !m.is_square() {
            return Err(NumericsError::NotSquare {
                op: "laplacian",
                shape: m.shape(),
            });
        }
        let mut v = m.scale(-1.0);
        for i in 0..m.rows() {
            v[(i, i)] += m.row(i).iter().sum::<f64>();
        }
        self.push(Op::Laplacian(a), v)
    }

    /// `Σ wᵢ·eᵢ` over 1×1 nodes.
    pub fn weighted_sum(&mut self, terms: &[(Expr, f64)]) -> Result<Expr, NumericsError> {
        let mut total = 0.0;
        for &(e, w) in terms {
            total += w * self.scalar(e)?;
        }
        self.push(Op::WeightedSum(terms.to_vec()), Matrix::scalar(total))
    }

    /// Value of a scalar root together with its gradients with respect to
    /// `inputs`. Inputs the root does not depend on get zero gradients.
    pub fn evaluate_with_gradient(
        &self,
        root: Expr,
        inputs: &[Expr],
    ) -> Result<(f64, GradientSet), NumericsError> {
        let value = self.scalar(root)?;
        let mut adjoints: Vec<Option<Matrix>> = (0..=root.0).map(|_| None).collect();
        adjoints[root.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Input) {
                continue;
            }
            let Some(g) = adjoints[idx].take() else {
                continue;
            };
            self.backward_node(node, &g, &mut adjoints)?;
        }

        let mut grads = HashMap::with_capacity(inputs.len());
        for &inp in inputs {
            let (r, c) = self.shape(inp);
            let g = adjoints
                .get_mut(inp.0)
                .and_then(Option::take)
                .unwrap_or_else(|| Matrix::zeros(r, c));
            if let Some((row, col)) = g.first_non_finite() {
                return Err(NumericsError::NonFinite {
                    op: "gradient",
                    row,
                    col,
                });
            }
            grads.insert(inp, g);
        }
        Ok((value, GradientSet { grads }))
    }

    fn wants(&self, e: Expr) -> bool {
        self.nodes[e.0].requires_grad
    }

    fn backward_node(
        &self,
        node: &Node,
        g: &Matrix,
        adj: &mut [Option<Matrix>],
    ) -> Result<(), NumericsError> {
        match &node.op {
            Op::Input | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let slot = slot(adj, *a, av.shape());
                    gemm_into(1.0, g, false, bv, true, 1.0, slot);
                }
                if self.wants(*b) {
                    let slot = slot(adj, *b, bv.shape());
                    gemm_into(1.0, av, true, g, false, 1.0, slot);
                }
            }
            Op::Transpose(a) => {
                if self.wants(*a) {
                    accumulate(adj, *a, &g.transpose(), 1.0);
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(adj, *a, g, 1.0);
                }
                if self.wants(*b) {
                    accumulate(adj, *b, g, 1.0);
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    accumulate(adj, *a, g, 1.0);
                }
                if self.wants(*b) {
                    accumulate(adj, *b, g, -1.0);
                }
            }
            Op::Scale(a, f) => accumulate(adj, *a, g, *f),
            Op::Relu(a) => {
                let x = self.value(*a);
                let d = g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 })?;
                accumulate(adj, *a, &d, 1.0);
            }
            Op::Exp(a) => {
                let d = g.hadamard(&node.value)?;
                accumulate(adj, *a, &d, 1.0);
            }
            Op::Hadamard(a, b) => {
                if self.wants(*a) {
                    accumulate(adj, *a, &g.hadamard(self.value(*b))?, 1.0);
                }
                if self.wants(*b) {
                    accumulate(adj, *b, &g.hadamard(self.value(*a))?, 1.0);
                }
            }
            Op::Trace(a) => {
                let n = self.value(*a).rows();
                let slot = slot(adj, *a, (n, n));
                let s = g[(0, 0)];
                for i in 0..n {
                    slot[(i, i)] += s;
                }
            }
            Op::FrobeniusSq(a) => accumulate(adj, *a, self.value(*a), 2.0 * g[(0, 0)]),
            Op::CholeskyOrthogonalize { input, lower } => {
                let d = orthogonalize_backward(self.value(*input), &node.value, lower, g)?;
                accumulate(adj, *input, &d, 1.0);
            }
            Op::RowTopkMask { input, mask } => accumulate(adj, *input, &g.hadamard(mask)?, 1.0),
            Op::Gram(a) => {
                let x = self.value(*a);
                let mut sym = g.clone();
                sym.add_scaled_assign(&g.transpose(), 1.0);
                let slot = slot(adj, *a, x.shape());
                gemm_into(1.0, &sym, false, x, false, 1.0, slot);
            }
            Op::SquaredDistancesFromGram(a) => {
                let n = node.value.rows();
                let slot = slot(adj, *a, (n, n));
                for i in 0..n {
                    for j in 0..n {
                        if i == j || node.value[(i, j)] <= 0.0 {
                            continue;
                        }
                        let gij = g[(i, j)];
                        slot[(i, j)] -= 2.0 * gij;
                        slot[(i, i)] += gij;
                        slot[(j, j)] += gij;
                    }
                }
            }
            Op::ColumnNormalize { input, norms } => {
                let y = &node.value;
                let (rows, cols) = y.shape();
                let mut dots = vec![0.0; cols];
                for r in 0..rows {
                    for ((d, yv), gv) in dots.iter_mut().zip(y.row(r)).zip(g.row(r)) {
                        *d += yv * gv;
                    }
                }
                let mut d = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        let n = norms[c];
                        if n > 0.0 {
                            d[(r, c)] = (g[(r, c)] - y[(r, c)] * dots[c]) / n;
                        }
                    }
                }
                accumulate(adj, *input, &d, 1.0);
            }
            Op::HConcat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.wants(p) {
                        accumulate(adj, p, &g.column_block(offset, w), 1.0);
                    }
                    offset += w;
                }
            }
            Op::NormalizeAdjacency {
                input,
                inv_sqrt_degree: s,
            } => {
                let ahat = &node.value;
                let n = ahat.rows();
                // d̄_i = −½ s_i² Σ_l (Ḡ⊙Â)_il + (Ḡ⊙Â)_li
                let mut dbar = vec![0.0; n];
                for i in 0..n {
                    for l in 0..n {
                        let w = g[(i, l)] * ahat[(i, l)];
                        dbar[i] += w;
                        dbar[l] += w;
                    }
                }
                for (i, d) in dbar.iter_mut().enumerate() {
                    *d *= -0.5 * s[i] * s[i];
                }
                let mut d = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        d[(i, j)] = g[(i, j)] * s[i] * s[j] + dbar[i];
                    }
                }
                accumulate(adj, *input, &d, 1.0);
            }
            Op::Laplacian(a) => {
                let n = g.rows();
                let mut d = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        d[(i, j)] = g[(i, i)] - g[(i, j)];
                    }
                }
                accumulate(adj, *a, &d, 1.0);
            }
            Op::WeightedSum(terms) => {
                for &(e, w) in terms {
                    if self.wants(e) {
                        accumulate(adj, e, &Matrix::scalar(g[(0, 0)] * w), 1.0);
                    }
                }
            }
        }
        Ok(())
    }
}

fn slot(adj: &mut [Option<Matrix>], e: Expr, shape: (usize, usize)) -> &mut Matrix {
    adj[e.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

fn accumulate(adj: &mut [Option<Matrix>], e: Expr, g: &Matrix, factor: f64) {
    match &mut adj[e.0] {
        Some(existing) => existing.add_scaled_assign(g, factor),
        empty @ None => {
            *empty = Some(if factor == 1.0 {
                g.clone()
            } else {
                g.scale(factor)
            });
        }
    }
}

/// Adjoint of `H = X·L⁻ᵀ`, `L·Lᵀ = XᵀX + εI`, with respect to `X`.
fn orthogonalize_backward(
    x: &Matrix,
    h: &Matrix,
    lower: &Matrix,
    g: &Matrix,
) -> Result<Matrix, NumericsError> {
    // Direct path: X̄ = Ḡ·L⁻¹, i.e. (L⁻ᵀ Ḡᵀ)ᵀ.
    let direct = solve_triangular_transposed(lower, &g.transpose())?.transpose();
    // Through the factor: L̄ = −L⁻ᵀ Ḡᵀ H.
    let gth = gemm(g, true, h, false)?;
    let lbar = solve_triangular_transposed(lower, &gth)?.scale(-1.0);
    // Cholesky adjoint: Ā = L⁻ᵀ Φ(Lᵀ L̄) L⁻¹, Φ = lower triangle with half diagonal.
    let mut p = gemm(lower, true, &lbar, false)?;
    let c = p.rows();
    for i in 0..c {
        p[(i, i)] *= 0.5;
        for j in i + 1..c {
            p[(i, j)] = 0.0;
        }
    }
    let left = solve_triangular_transposed(lower, &p)?;
    let abar = solve_triangular_transposed(lower, &left.transpose())?.transpose();
    // A = XᵀX + εI ⇒ X̄ += X (Ā + Āᵀ).
    let mut sym = abar.clone();
    sym.add_scaled_assign(&abar.transpose(), 1.0);
    let mut out = direct;
    gemm_into(1.0, x, false, &sym, false, 1.0, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_square() {
        let mut t = Tape::new();
        let x = t.input(Matrix::scalar(3.0)).unwrap();
        let y = t.hadamard(x, x).unwrap();
        let (v, g) = t.evaluate_with_gradient(y, &[x]).unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(g.get(x).unwrap()[(0, 0)], 6.0);
    }

    #[test]
    fn trace_of_gram_is_twice_input() {
        let x0 = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let mut t = Tape::new();
        let x = t.input(x0.clone()).unwrap();
        let xt = t.transpose(x).unwrap();
        let p = t.matmul(xt, x).unwrap();
        let tr = t.trace(p).unwrap();
        let (v, g) = t.evaluate_with_gradient(tr, &[x]).unwrap();
        assert!((v - x0.frobenius_norm_sq()).abs() < 1e-12);
        assert!(g.get(x).unwrap().max_abs_diff(&x0.scale(2.0)) < 1e-12);
    }

    #[test]
    fn shape_errors_surface_at_construction() {
        let mut t = Tape::new();
        let a = t.input(Matrix::zeros(2, 3)).unwrap();
        let b = t.input(Matrix::zeros(2, 3)).unwrap();
        assert!(matches!(
            t.matmul(a, b),
            Err(NumericsError::ShapeMismatch { .. })
        ));
        assert!(matches!(t.trace(a), Err(NumericsError::NotSquare { .. })));
        assert!(matches!(
            t.evaluate_with_gradient(a, &[a]),
            Err(NumericsError::NotScalar { .. })
        ));
    }

    #[test]
    fn non_finite_forward_is_rejected() {
        let mut t = Tape::new();
        let a = t.input(Matrix::scalar(800.0)).unwrap();
        assert!(matches!(
            t.exp(a),
            Err(NumericsError::NonFinite { op: "exp", .. })
        ));
        assert!(t.input(Matrix::scalar(f64::NAN)).is_err());
    }

    #[test]
    fn constants_receive_no_gradient_work() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::identity(2)).unwrap();
        let x = t.input(Matrix::from_diag(&[1.0, 2.0])).unwrap();
        let p = t.matmul(c, x).unwrap();
        let s = t.frobenius_sq(p).unwrap();
        let (_, g) = t.evaluate_with_gradient(s, &[x, c]).unwrap();
        assert_eq!(g.get(x).unwrap(), &Matrix::from_diag(&[2.0, 4.0]));
        assert_eq!(g.get(c).unwrap(), &Matrix::zeros(2, 2));
    }
}
