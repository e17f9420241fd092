mod common;

use common::*;
use fusion_gcn::cluster::{
    acc, ari, evaluate, f1_pairwise, hungarian_map, kmeans, nmi, F1Kind, KMeansConfig,
};
use fusion_gcn::data::{column_stats, generate_synthetic, SyntheticSpec, ViewSet};
use fusion_gcn::losses::{
    autoencoder_loss, fral_loss, gaussian_kernel, median_bandwidth, smal_loss, spectral_loss,
};
use fusion_gcn::model::{
    build_consensus_graph, forward, fuse_views, normalize_adjacency, ModelParams,
};
use fusion_gcn::numerics::{
    cholesky_lower, gemm, max_eigenvalue, pairwise_squared_distances, row_topk_mask,
    solve_triangular, solve_triangular_transposed, Matrix,
};
use fusion_gcn::trainer::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_GUARD};
use rand::Rng;
use rand_distr::StandardNormal;

fn normal(r: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

fn frob_sq(d: &Dense) -> f64 {
    d.iter().flatten().map(|x| x * x).sum()
}

fn sub(a: &Dense, b: &Dense) -> Dense {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect()
}

#[test]
fn cholesky_of_small_spd() {
    let l = cholesky_lower(&Matrix::from_rows(&[[4.0, 2.0], [2.0, 5.0]])).unwrap();
    assert_eq!(l, Matrix::from_rows(&[[2.0, 0.0], [1.0, 2.0]]));
}

#[test]
fn cholesky_reconstructs_random_spd() {
    let mut r = rng(1);
    for _ in 0..20 {
        let x = normal(&mut r, 9, 5);
        let a = gemm(&x, true, &x, false).unwrap();
        let l = cholesky_lower(&a).unwrap();
        let back = gemm(&l, false, &l, true).unwrap();
        assert!(back.max_abs_diff(&a) < 1e-12 * a.max_abs().max(1.0));
        assert!(dense(&l)
            .iter()
            .enumerate()
            .all(|(i, row)| row[i + 1..].iter().all(|&v| v == 0.0)));
        assert!(max_abs_diff(&dense(&l), &cholesky(&dense(&a))) < 1e-10);
    }
}

#[test]
fn triangular_solves_have_small_residuals() {
    let mut r = rng(2);
    let x = normal(&mut r, 8, 5);
    let mut a = gemm(&x, true, &x, false).unwrap();
    for i in 0..5 {
        a[(i, i)] += 1.0;
    }
    let l = cholesky_lower(&a).unwrap();
    let b = normal(&mut r, 5, 3);
    let y = solve_triangular(&l, &b).unwrap();
    assert!(l.matmul(&y).unwrap().max_abs_diff(&b) < 1e-12);
    let z = solve_triangular_transposed(&l, &b).unwrap();
    assert!(l.transpose().matmul(&z).unwrap().max_abs_diff(&b) < 1e-12);
}

#[test]
fn topk_mask_matches_full_sort() {
    let mut r = rng(3);
    for _ in 0..20 {
        let s = normal(&mut r, 8, 8);
        let mask = row_topk_mask(&s, 3, true).unwrap();
        let oracle = topk_rows(&dense(&s), 3);
        for i in 0..8 {
            assert_eq!(mask.row(i).iter().sum::<f64>(), 3.0);
            assert_eq!(mask[(i, i)], 0.0);
            for j in 0..8 {
                assert_eq!(mask[(i, j)] == 1.0, oracle[i][j] != 0.0, "({i},{j})");
            }
        }
    }
}

#[test]
fn pairwise_distances_match_double_loop() {
    let mut r = rng(4);
    let x = normal(&mut r, 6, 4);
    let d = pairwise_squared_distances(&x);
    for i in 0..6 {
        for j in 0..6 {
            let o: f64 = (0..4).map(|c| (x[(i, c)] - x[(j, c)]).powi(2)).sum();
            assert!((d[(i, j)] - o).abs() < 1e-12);
        }
    }
}

#[test]
fn power_iteration_matches_dense_eigensolver() {
    let mut r = rng(5);
    for _ in 0..10 {
        let x = uniform(&mut r, 5, 5, 0.0, 1.0);
        let s = x.add(&x.transpose()).unwrap();
        let eig = jacobi_eigenvalues(&dense(&s));
        let dominant = eig
            .iter()
            .copied()
            .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        assert!(
            (max_eigenvalue(&s, 2000) - dominant).abs() < 1e-8,
            "{eig:?}"
        );
    }
}

#[test]
fn normalized_adjacency_spectrum_is_bounded() {
    let mut r = rng(6);
    for _ in 0..20 {
        let x = uniform(&mut r, 6, 6, 0.0, 1.0);
        let mut a = x.add(&x.transpose()).unwrap();
        for i in 0..6 {
            a[(i, i)] = 0.0;
        }
        let a_hat = normalize_adjacency(&a).unwrap();
        assert!(max_abs_diff(&dense(&a_hat), &common::normalize_adjacency(&dense(&a))) < 1e-14);
        assert!(max_eigenvalue(&a_hat, 1000) <= 1.0 + 1e-8);
        let top = jacobi_eigenvalues(&dense(&a_hat))
            .into_iter()
            .fold(f64::MIN, f64::max);
        assert!(top <= 1.0 + 1e-8);
    }
}

#[test]
fn projected_views_have_unit_columns() {
    let mut r = rng(7);
    let data = ViewSet::new(
        "p",
        vec![normal(&mut r, 5, 3), normal(&mut r, 5, 4)],
        None,
        2,
    )
    .unwrap();
    let params = ModelParams {
        u: vec![normal(&mut r, 3, 2), normal(&mut r, 4, 2)],
        w1: normal(&mut r, 4, 2),
        w2: normal(&mut r, 2, 2),
        w3: normal(&mut r, 2, 2),
    };
    let (views, fused) = fuse_views(&params, &data).unwrap();
    assert_eq!(fused.cols(), 2 * 2);
    for f in &views {
        for c in 0..f.cols() {
            let norm = f.column(c).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn consensus_graph_support_matches_sort_oracle() {
    let mut r = rng(8);
    for _ in 0..20 {
        let f = normal(&mut r, 8, 4);
        let g = build_consensus_graph(&f, 3).unwrap();
        let s = relu(&mul(&dense(&f), &tr(&dense(&f))));
        let chosen = topk_rows(&s, 3);
        for i in 0..8 {
            for j in 0..8 {
                let expected = 0.5 * (chosen[i][j] + chosen[j][i]);
                assert!((g.adjacency[(i, j)] - expected).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn forward_matches_straight_line_oracle() {
    let mut r = rng(9);
    for _ in 0..10 {
        let views = vec![normal(&mut r, 6, 4), normal(&mut r, 6, 3)];
        let params = ModelParams {
            u: vec![normal(&mut r, 4, 3), normal(&mut r, 3, 3)],
            w1: normal(&mut r, 6, 4),
            w2: normal(&mut r, 4, 3),
            w3: normal(&mut r, 3, 2),
        };
        let data = ViewSet::new("f", views.clone(), None, 2).unwrap();
        let out = forward(&params, &data, 2, 1e-4, None).unwrap();
        assert_eq!(out.epsilon, 1e-4);
        let (a, a_hat, h1, h2, h) = common::forward(&views, &params, 2, 1e-4);
        assert!(max_abs_diff(&dense(&out.graph.adjacency), &a) < 1e-12);
        assert!(max_abs_diff(&dense(&out.graph.normalized), &a_hat) < 1e-12);
        assert!(max_abs_diff(&dense(&out.h1), &h1) < 1e-12);
        assert!(max_abs_diff(&dense(&out.h2), &h2) < 1e-12);
        assert!(max_abs_diff(&dense(&out.h), &h) < 1e-10);
    }
}

#[test]
fn orthogonalized_output_is_near_orthonormal() {
    let mut r = rng(10);
    let h3 = normal(&mut r, 10, 3);
    let (h, eps) = fusion_gcn::model::orthogonalize(&h3, 1e-4).unwrap();
    assert_eq!(eps, 1e-4);
    let gap = sub(
        &mul(&tr(&dense(&h)), &dense(&h)),
        &dense(&Matrix::identity(3)),
    );
    assert!(frob_sq(&gap).sqrt() <= 1e-3);
    assert!(max_abs_diff(&dense(&h), &orthogonalize(&dense(&h3), 1e-4)) < 1e-12);
}

#[test]
fn gaussian_kernel_matches_elementwise_oracle() {
    let mut r = rng(11);
    let x = normal(&mut r, 5, 3);
    let sigma2 = median_bandwidth(&pairwise_squared_distances(&x));
    assert!((sigma2 - median_sq_distance(&x)).abs() < 1e-12);
    let k = gaussian_kernel(&x, sigma2).unwrap();
    assert!(max_abs_diff(&dense(&k), &gaussian(&x, sigma2)) < 1e-12);
}

#[test]
fn spectral_loss_matches_edge_sum() {
    let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
    let h = Matrix::from_rows(&[[1.0], [0.0]]);
    assert!((spectral_loss(&h, &a).unwrap() - 1.0).abs() < 1e-15);

    let mut r = rng(12);
    let x = uniform(&mut r, 7, 7, 0.0, 1.0);
    let a = x.add(&x.transpose()).unwrap();
    let h = normal(&mut r, 7, 3);
    let mut oracle = 0.0;
    for i in 0..7 {
        for j in 0..7 {
            let d: f64 = (0..3).map(|c| (h[(i, c)] - h[(j, c)]).powi(2)).sum();
            oracle += 0.5 * a[(i, j)] * d;
        }
    }
    assert!((spectral_loss(&h, &a).unwrap() - oracle).abs() < 1e-10);
}

#[test]
fn alignment_and_autoencoder_losses_match_term_oracles() {
    let mut r = rng(13);
    let raw = vec![normal(&mut r, 6, 4), normal(&mut r, 6, 5)];
    let views = vec![normal(&mut r, 6, 3), normal(&mut r, 6, 3)];
    let fused: Dense = (0..6)
        .map(|i| views.iter().flat_map(|v| v.row(i).to_vec()).collect())
        .collect();
    let h = normal(&mut r, 6, 2);
    let hd = dense(&h);
    let hh = mul(&hd, &tr(&hd));
    let sf = relu(&mul(&fused, &tr(&fused)));

    let mut smal = 0.0;
    let mut fral = 0.0;
    for (x, f) in raw.iter().zip(&views) {
        let fd = dense(f);
        let sv = mul(&fd, &tr(&fd));
        smal += frob_sq(&sub(&hh, &sv)) + frob_sq(&sub(&sf, &sv));
        let xd = dense(x);
        fral += frob_sq(&sub(&mul(&xd, &tr(&xd)), &sv));
    }
    let got = smal_loss(&h, &views, &to_matrix(&fused)).unwrap();
    assert!((got - smal).abs() < 1e-10 * smal.max(1.0));
    let got = fral_loss(&raw, &views).unwrap();
    assert!((got - fral).abs() < 1e-10 * fral.max(1.0));

    let a = uniform(&mut r, 6, 6, 0.0, 1.0);
    let ae = frob_sq(&sub(&dense(&a), &hh));
    assert!((autoencoder_loss(&a, &h).unwrap() - ae).abs() < 1e-10);
}

/// Three Adam steps on f(x) = (x − 3)², traced with the recurrence written
/// out longhand.
#[test]
fn adam_matches_hand_trace() {
    let lr = 0.1;
    let mut x = 0.0f64;
    let (mut m, mut v) = (0.0f64, 0.0f64);
    let mut expected = Vec::new();
    for t in 1..=3 {
        let g = 2.0 * (x - 3.0);
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g;
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = m / (1.0 - ADAM_BETA1.powi(t));
        let v_hat = v / (1.0 - ADAM_BETA2.powi(t));
        x -= lr * m_hat / (v_hat.sqrt() + ADAM_GUARD);
        expected.push(x);
    }
    // With a constant-sign gradient every bias-corrected step is ≈ lr.
    assert!((expected[0] - 0.1).abs() < 1e-8);

    let mut p = Matrix::scalar(0.0);
    let mut state = AdamState::for_shapes([(1, 1)]);
    for want in expected {
        let g = Matrix::scalar(2.0 * (p[(0, 0)] - 3.0));
        state.update(&mut [&mut p], &[g], lr).unwrap();
        assert!((p[(0, 0)] - want).abs() < 1e-12);
    }
}

#[test]
fn column_stats_match_two_pass() {
    let mut r = rng(14);
    let x = Matrix::from_fn(100, 5, |_, c| {
        10.0 * c as f64 + r.sample::<f64, _>(StandardNormal)
    });
    let stats = column_stats(&x);
    for (c, s) in stats.iter().enumerate() {
        let col = x.column(c);
        let mean = col.iter().sum::<f64>() / 100.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0;
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.std - var.sqrt()).abs() < 1e-12);
        assert_eq!(s.min, col.iter().copied().fold(f64::INFINITY, f64::min));
        assert_eq!(s.max, col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
}

#[test]
fn single_view_kmeans_recovers_synthetic_blobs() {
    let data = generate_synthetic(&SyntheticSpec::default()).unwrap();
    let labels = data.labels().unwrap();
    for (v, view) in data.views().iter().enumerate() {
        let r = kmeans(view, 3, 0, &KMeansConfig::default()).unwrap();
        let a = acc(labels, &r.labels).unwrap();
        assert!(a >= 0.9, "view {v}: acc {a}");
    }
}

#[test]
fn kmeans_recovers_well_separated_blobs() {
    let mut r = rng(15);
    let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
    let truth: Vec<usize> = (0..60).map(|i| i % 3).collect();
    let x = Matrix::from_fn(60, 2, |i, c| {
        let (cx, cy) = centers[truth[i]];
        (if c == 0 { cx } else { cy }) + r.sample::<f64, _>(StandardNormal)
    });
    let result = kmeans(&x, 3, 1, &KMeansConfig::default()).unwrap();
    assert_eq!(acc(&truth, &result.labels).unwrap(), 1.0);
    assert!(result.history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn hungarian_matches_permutation_enumeration() {
    let mut r = rng(16);
    for _ in 0..50 {
        let t: Vec<usize> = (0..20)
            .map(|i| if i < 4 { i } else { r.random_range(0..4) })
            .collect();
        let p: Vec<usize> = (0..20)
            .map(|i| if i < 4 { i } else { r.random_range(0..4) })
            .collect();
        let mapping = hungarian_map(&t, &p).unwrap();
        let matched = t
            .iter()
            .zip(&p)
            .filter(|&(&ti, &pi)| mapping.iter().any(|&(a, b)| a == pi && b == ti))
            .count();
        assert_eq!(matched, brute_force_matched(&t, &p));
    }
}

#[test]
fn metric_examples() {
    assert_eq!(acc(&[0, 0, 1, 1], &[1, 1, 0, 1]).unwrap(), 0.75);
    assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-15);
    let (index, pc) = ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
    assert_eq!((pc.n1, pc.n2, pc.n3, pc.n4), (0, 2, 2, 2));
    // Pair enumeration: one expected agreement in (0 − 2/3)/(2 − 2/3).
    assert!((index + 0.5).abs() < 1e-12);
    assert!((ari_contingency(&[0, 0, 1, 1], &[0, 1, 0, 1]) + 0.5).abs() < 1e-12);
    assert!((f1_pairwise(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn random_labelings_have_zero_expected_ari() {
    let mut r = rng(17);
    let mut sum = 0.0;
    for _ in 0..1000 {
        let a: Vec<usize> = (0..50).map(|_| r.random_range(0..4)).collect();
        let b: Vec<usize> = (0..50).map(|_| r.random_range(0..4)).collect();
        sum += ari(&a, &b).unwrap().0;
    }
    assert!((sum / 1000.0).abs() <= 0.02);
}

#[test]
fn macro_and_pairwise_f1_agree_on_perfect_clustering() {
    let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
    let relabeled: Vec<usize> = y.iter().map(|&l| (l + 1) % 3).collect();
    for kind in [F1Kind::Pairwise, F1Kind::Macro] {
        let m = evaluate(&y, &relabeled, kind).unwrap();
        assert_eq!((m.acc, m.ari, m.f1), (1.0, 1.0, 1.0));
        assert!((m.nmi - 1.0).abs() < 1e-12);
    }
}
