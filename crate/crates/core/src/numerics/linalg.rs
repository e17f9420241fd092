//! Factorizations and graph-construction kernels on plain matrices.

use super::{gemm, Matrix, NumericsError};

const SYMMETRY_TOL: f64 = 1e-10;

/// Lower Cholesky factor `L` with `L·Lᵀ = m`.
///
/// A non-positive pivot yields [`NumericsError::CholeskyFailed`]; regularizing
/// is left to the caller.
pub fn cholesky_lower(m: &Matrix) -> Result<Matrix, NumericsError> {
    if !m.is_square() {
        return Err(NumericsError::NotSquare {
            op: "cholesky",
            shape: m.shape(),
        });
    }
    let scale = m.max_abs().max(1.0);
    if !m.is_symmetric(SYMMETRY_TOL * scale) {
        return Err(NumericsError::NotSymmetric { op: "cholesky" });
    }
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(NumericsError::CholeskyFailed {
                pivot: j,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

fn check_triangular_system(l: &Matrix, b_rows: usize) -> Result<(), NumericsError> {
    if !l.is_square() {
        return Err(NumericsError::NotSquare {
            op: "solve_triangular",
            shape: l.shape(),
        });
    }
    if l.rows() != b_rows {
        return Err(NumericsError::ShapeMismatch {
            op: "solve_triangular",
            left: l.shape(),
            right: (b_rows, 0),
        });
    }
    if let Some(i) = (0..l.rows()).find(|&i| l[(i, i)] == 0.0) {
        return Err(NumericsError::SingularTriangular { index: i });
    }
    Ok(())
}

/// Solves `L·X = B` by forward substitution.
pub fn solve_triangular(l: &Matrix, b: &Matrix) -> Result<Matrix, NumericsError> {
    check_triangular_system(l, b.rows())?;
    let n = l.rows();
    let mut x = b.clone();
    for i in 0..n {
        for k in 0..i {
            let lik = l[(i, k)];
            if lik != 0.0 {
                for c in 0..x.cols() {
                    let v = x[(k, c)];
                    x[(i, c)] -= lik * v;
                }
            }
        }
        let d = l[(i, i)];
        for v in x.row_mut(i) {
            *v /= d;
        }
    }
    Ok(x)
}

/// Solves `Lᵀ·X = B` by back substitution, reading `L` as lower triangular.
pub fn solve_triangular_transposed(l: &Matrix, b: &Matrix) -> Result<Matrix, NumericsError> {
    check_triangular_system(l, b.rows())?;
    let n = l.rows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki = l[(k, i)];
            if lki != 0.0 {
                for c in 0..x.cols() {
                    let v = x[(k, c)];
                    x[(i, c)] -= lki * v;
                }
            }
        }
        let d = l[(i, i)];
        for v in x.row_mut(i) {
            *v /= d;
        }
    }
    Ok(x)
}

/// Indices of the `k` largest entries of `row`, skipping `skip`. Ties go to
/// the lower column index.
fn topk_indices(row: &[f64], k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&j| Some(j) != skip).collect();
    let take = k.min(idx.len());
    let cmp = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
    if take < idx.len() {
        idx.select_nth_unstable_by(take, cmp);
        idx.truncate(take);
    }
    idx.sort_unstable();
    idx
}

/// Binary mask keeping the `k` largest entries of each row of `s`.
pub fn row_topk_mask(
    s: &Matrix,
    k: usize,
    exclude_diagonal: bool,
) -> Result<Matrix, NumericsError> {
    if !s.is_square() {
        return Err(NumericsError::NotSquare {
            op: "row_topk_mask",
            shape: s.shape(),
        });
    }
    let n = s.rows();
    let admissible = if exclude_diagonal {
        n.saturating_sub(1)
    } else {
        n
    };
    if k == 0 || k > admissible {
        return Err(NumericsError::TopKOutOfRange { k, admissible });
    }
    let mut mask = Matrix::zeros(n, n);
    for i in 0..n {
        let skip = exclude_diagonal.then_some(i);
        for j in topk_indices(s.row(i), k, skip) {
            mask[(i, j)] = 1.0;
        }
    }
    Ok(mask)
}

/// Squared Euclidean distances between the rows of `x`, clamped at zero.
pub fn pairwise_squared_distances(x: &Matrix) -> Matrix {
    let gram = gemm(x, false, x, true).expect("gram of a matrix with itself");
    squared_distances_from_gram(&gram)
}

pub(crate) fn squared_distances_from_gram(gram: &Matrix) -> Matrix {
    let n = gram.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Power-iteration estimate of the largest-magnitude eigenvalue of a
/// symmetric matrix (signed, via the Rayleigh quotient).
pub fn max_eigenvalue(m: &Matrix, iterations: usize) -> f64 {
    let n = m.rows();
    if n == 0 {
        return 0.0;
    }
    // Deterministic start vector with no special alignment to common
    // eigenvectors such as the all-ones vector.
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64) * 1.618_033_988_75).sin())
        .collect();
    normalize(&mut v);
    let mut lambda = rayleigh(m, &v);
    let mut w = vec![0.0; n];
    for _ in 0..iterations {
        matvec(m, &v, &mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        let next = rayleigh(m, &v);
        let converged = (next - lambda).abs() <= 1e-15 * next.abs().max(1.0);
        lambda = next;
        if converged {
            break;
        }
    }
    lambda
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn matvec(m: &Matrix, v: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o = m.row(r).iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn rayleigh(m: &Matrix, v: &[f64]) -> f64 {
    let mut w = vec![0.0; v.len()];
    matvec(m, v, &mut w);
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}
