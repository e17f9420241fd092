//! Independent reference implementations shared by the integration tests.
//! Everything here works on plain nested vectors and loops so that it shares
//! no code path with the library.
#![allow(dead_code)]

use fusion_gcn::data::ViewSet;
use fusion_gcn::model::ModelParams;
use fusion_gcn::numerics::Matrix;
use fusion_gcn::trainer::{objective, objective_with_bandwidth, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn to_matrix(d: &Dense) -> Matrix {
    Matrix::from_rows(d)
}

pub fn mul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i][l] * b[l][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn tr(a: &Dense) -> Dense {
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

pub fn relu(a: &Dense) -> Dense {
    a.iter()
        .map(|r| r.iter().map(|&x| x.max(0.0)).collect())
        .collect()
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Every column scaled to unit Euclidean norm (zero columns stay zero).
pub fn colnorm(a: &Dense) -> Dense {
    let cols = a[0].len();
    let norms: Vec<f64> = (0..cols)
        .map(|j| a.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt())
        .collect();
    a.iter()
        .map(|r| {
            r.iter()
                .zip(&norms)
                .map(|(&x, &n)| if n > 0.0 { x / n } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Keeps the `k` largest off-diagonal entries of every row, found by a full
/// sort of the row.
pub fn topk_rows(s: &Dense, k: usize) -> Dense {
    let n = s.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        idx.sort_by(|&a, &b| s[i][b].partial_cmp(&s[i][a]).unwrap());
        for &j in idx.iter().take(k) {
            out[i][j] = s[i][j];
        }
    }
    out
}

pub fn normalize_adjacency(a: &Dense) -> Dense {
    let n = a.len();
    let deg: Vec<f64> = (0..n).map(|i| a[i].iter().sum::<f64>() + 1.0).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let self_loop = if i == j { 1.0 } else { 0.0 };
                    (a[i][j] + self_loop) / (deg[i] * deg[j]).sqrt()
                })
                .collect()
        })
        .collect()
}

/// Textbook Cholesky–Banachiewicz factorization.
pub fn cholesky(a: &Dense) -> Dense {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// `X·L⁻ᵀ` by solving `L·Yᵀ = Xᵀ` column by column with forward substitution.
pub fn right_solve_lt(x: &Dense, l: &Dense) -> Dense {
    let c = l.len();
    x.iter()
        .map(|row| {
            let mut y = vec![0.0; c];
            for i in 0..c {
                let s: f64 = (0..i).map(|p| l[i][p] * y[p]).sum();
                y[i] = (row[i] - s) / l[i][i];
            }
            y
        })
        .collect()
}

/// `H3·L⁻ᵀ` with `L·Lᵀ = H3ᵀH3 + εI`.
pub fn orthogonalize(h3: &Dense, eps: f64) -> Dense {
    let mut g = mul(&tr(h3), h3);
    for (i, row) in g.iter_mut().enumerate() {
        row[i] += eps;
    }
    right_solve_lt(h3, &cholesky(&g))
}

/// Straight-line forward pass: projection, fusion, learned graph, GCN,
/// orthogonalization. Returns `(A_f, Â_f, H1, H2, H)`.
pub fn forward(
    views: &[Matrix],
    params: &ModelParams,
    k: usize,
    eps: f64,
) -> (Dense, Dense, Dense, Dense, Dense) {
    let projected: Vec<Dense> = views
        .iter()
        .zip(&params.u)
        .map(|(x, u)| colnorm(&mul(&dense(x), &dense(u))))
        .collect();
    let fused: Dense = (0..projected[0].len())
        .map(|i| projected.iter().flat_map(|f| f[i].clone()).collect())
        .collect();
    let s = relu(&mul(&fused, &tr(&fused)));
    let sparse = topk_rows(&s, k);
    let n = s.len();
    let a: Dense = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| 0.5 * (sparse[i][j] + sparse[j][i]))
                .collect()
        })
        .collect();
    let a_hat = normalize_adjacency(&a);
    let h1 = relu(&mul(&a_hat, &mul(&fused, &dense(&params.w1))));
    let h2 = relu(&mul(&a_hat, &mul(&h1, &dense(&params.w2))));
    let h3 = mul(&h2, &dense(&params.w3));
    let h = orthogonalize(&h3, eps);
    (a, a_hat, h1, h2, h)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &Dense) -> Vec<f64> {
    let n = a.len();
    let mut m = a.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let (mrp, mrq) = (m[r][p], m[r][q]);
                    m[r][p] = c * mrp - s * mrq;
                    m[r][q] = s * mrp + c * mrq;
                }
                for r in 0..n {
                    let (mpr, mqr) = (m[p][r], m[q][r]);
                    m[p][r] = c * mpr - s * mqr;
                    m[q][r] = s * mpr + c * mqr;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// Gaussian kernel `exp(−‖xᵢ − xⱼ‖²/σ²)` by double loop.
pub fn gaussian(x: &Matrix, sigma2: f64) -> Dense {
    let n = x.rows();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d: f64 = x
                        .row(i)
                        .iter()
                        .zip(x.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (-d / sigma2).exp()
                })
                .collect()
        })
        .collect()
}

/// Median of the strictly positive pairwise squared distances (1 if none).
pub fn median_sq_distance(x: &Matrix) -> f64 {
    let n = x.rows();
    let mut v = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d > 0.0 {
                v.push(d);
            }
        }
    }
    if v.is_empty() {
        return 1.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Kernel k-means distortion `Σᵢ ‖φ(xᵢ) − μ_{c(i)}‖²` of a hard assignment.
pub fn kernel_distortion(k: &Dense, assignment: &[usize]) -> f64 {
    let c = assignment.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for cluster in 0..c {
        let members: Vec<usize> = (0..assignment.len())
            .filter(|&i| assignment[i] == cluster)
            .collect();
        let nj = members.len() as f64;
        for &i in &members {
            let mut d = k[i][i];
            for &l in &members {
                d -= 2.0 * k[i][l] / nj;
                for &m in &members {
                    d += k[l][m] / (nj * nj);
                }
            }
            total += d;
        }
    }
    total
}

/// Largest number of samples matched by any one-to-one relabeling,
/// enumerating every injective map from predicted to true labels.
pub fn brute_force_matched(y_true: &[usize], y_pred: &[usize]) -> usize {
    let ct = y_true.iter().max().unwrap() + 1;
    let cp = y_pred.iter().max().unwrap() + 1;
    let m = ct.max(cp);
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        let hits = y_true
            .iter()
            .zip(y_pred)
            .filter(|&(&t, &q)| p[q] == t)
            .count();
        best = best.max(hits);
    });
    best
}

fn permute(v: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
    if start == v.len() {
        f(v);
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permute(v, start + 1, f);
        v.swap(start, i);
    }
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

/// Hubert–Arabie ARI from the contingency table.
pub fn ari_contingency(y_true: &[usize], y_pred: &[usize]) -> f64 {
    let ct = y_true.iter().max().unwrap() + 1;
    let cp = y_pred.iter().max().unwrap() + 1;
    let mut table = vec![vec![0u64; cp]; ct];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        table[t][p] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&x| choose2(x)).sum();
    let a: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let b: f64 = (0..cp)
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = choose2(y_true.len() as u64);
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    if max == expected {
        1.0
    } else {
        (index - expected) / (max - expected)
    }
}

/// Verdict of a finite-difference comparison.
#[derive(Debug, Clone, Default)]
pub struct GradCheck {
    pub entries: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
}

pub fn agrees(analytic: f64, numeric: f64, rel: f64, abs: f64) -> bool {
    let d = (analytic - numeric).abs();
    d <= abs || d <= rel * analytic.abs().max(numeric.abs())
}

/// Central differences of the total objective for every parameter entry,
/// with the fused bandwidth held at its unperturbed value.
pub fn finite_difference_check(
    data: &ViewSet,
    params: &ModelParams,
    config: &TrainConfig,
    step: f64,
    rel: f64,
    abs: f64,
) -> GradCheck {
    let obj = objective(data, params, config).expect("objective");
    let sigma2 = obj.fused_bandwidth;
    let eps = obj.epsilon;
    let inputs = obj.params.all();
    let (_, mut grads) = obj
        .tape
        .evaluate_with_gradient(obj.total, &inputs)
        .expect("gradient");
    let analytic: Vec<Matrix> = inputs.iter().map(|&e| grads.take(e).unwrap()).collect();
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();

    let eval = |p: &ModelParams| -> f64 {
        let o = objective_with_bandwidth(data, p, config, Some(sigma2)).expect("objective");
        assert_eq!(o.epsilon, eps, "epsilon escalated during a probe");
        o.tape.scalar(o.total).unwrap()
    };
    let mut check = GradCheck::default();
    for (idx, g) in analytic.iter().enumerate() {
        for r in 0..g.rows() {
            for c in 0..g.cols() {
                let mut plus = params.clone();
                plus.matrices_mut()[idx][(r, c)] += step;
                let mut minus = params.clone();
                minus.matrices_mut()[idx][(r, c)] -= step;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * step);
                let a = g[(r, c)];
                check.entries += 1;
                let scale = a.abs().max(numeric.abs());
                if scale > abs {
                    check.worst_rel = check.worst_rel.max((a - numeric).abs() / scale);
                }
                if !agrees(a, numeric, rel, abs) {
                    check.failures.push(format!(
                        "{}[{r},{c}]: analytic {a:e} numeric {numeric:e}",
                        names[idx]
                    ));
                }
            }
        }
    }
    check
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
