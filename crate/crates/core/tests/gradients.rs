mod common;

use common::*;
use fusion_gcn::data::ViewSet;
use fusion_gcn::model::{forward, fuse_views, ModelParams};
use fusion_gcn::numerics::{Matrix, Tape};
use fusion_gcn::trainer::{init_params, objective, AblationSpec, TrainConfig};
use proptest::prelude::*;

fn small_data(seed: u64) -> ViewSet {
    let mut r = rng(seed);
    let views = vec![
        uniform(&mut r, 12, 5, -0.5, 0.5),
        uniform(&mut r, 12, 7, -0.5, 0.5),
    ];
    ViewSet::new("grad", views, None, 3).unwrap()
}

fn small_config(seed: u64, ablation: AblationSpec) -> TrainConfig {
    TrainConfig {
        fusion_dim: 4,
        h1: 3,
        h2: 3,
        k: 3,
        seed,
        ablation,
        ..TrainConfig::default()
    }
}

fn assert_check(check: &GradCheck) {
    assert!(
        check.failures.is_empty(),
        "{} of {} entries disagree: {:?}",
        check.failures.len(),
        check.entries,
        &check.failures[..check.failures.len().min(5)]
    );
}

#[test]
fn every_ablation_row_has_correct_gradients() {
    for (name, ablation) in AblationSpec::ladder() {
        let data = small_data(7);
        let config = small_config(1, ablation);
        let params = init_params(&data, &config);
        let check = finite_difference_check(&data, &params, &config, 1e-5, 1e-4, 1e-8);
        assert!(check.entries > 0, "{name}");
        assert_check(&check);
    }
}

fn analytic_gradient(
    data: &ViewSet,
    params: &ModelParams,
    config: &TrainConfig,
) -> (Vec<Matrix>, f64) {
    let obj = objective(data, params, config).unwrap();
    let inputs = obj.params.all();
    let (_, mut g) = obj.tape.evaluate_with_gradient(obj.total, &inputs).unwrap();
    (
        inputs.iter().map(|&e| g.take(e).unwrap()).collect(),
        obj.fused_bandwidth,
    )
}

/// Detaching the fused kernel removes exactly the path through `K̂`, i.e.
/// the gradient of `β·trace((I − H₀H₀ᵀ)·K̂(θ))` with `H₀` and σ² frozen.
#[test]
fn detaching_the_fused_kernel_removes_only_its_path() {
    let data = small_data(8);
    let live = small_config(2, AblationSpec::FULL);
    let detached = TrainConfig {
        detach_fused_kernel: true,
        ..live.clone()
    };
    let params = init_params(&data, &live);
    let (g_live, sigma2) = analytic_gradient(&data, &params, &live);
    let (g_detached, _) = analytic_gradient(&data, &params, &detached);

    let h0 = dense(
        &forward(&params, &data, live.k, live.epsilon, None)
            .unwrap()
            .h,
    );
    let n = h0.len();
    let projector: Dense = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let hh: f64 = h0[i].iter().zip(&h0[j]).map(|(a, b)| a * b).sum();
                    f64::from(u8::from(i == j)) - hh
                })
                .collect()
        })
        .collect();
    let kernel_path = |p: &ModelParams| -> f64 {
        let (_, fused) = fuse_views(p, &data).unwrap();
        let k = gaussian(&fused, sigma2);
        let pk = mul(&projector, &k);
        live.weights.beta * (0..n).map(|i| pk[i][i]).sum::<f64>()
    };
    let step = 1e-5;
    for (idx, (a, b)) in g_live.iter().zip(&g_detached).enumerate() {
        for r in 0..a.rows() {
            for c in 0..a.cols() {
                let mut plus = params.clone();
                plus.matrices_mut()[idx][(r, c)] += step;
                let mut minus = params.clone();
                minus.matrices_mut()[idx][(r, c)] -= step;
                let numeric = (kernel_path(&plus) - kernel_path(&minus)) / (2.0 * step);
                let diff = a[(r, c)] - b[(r, c)];
                assert!(
                    agrees(diff, numeric, 1e-4, 1e-8),
                    "param {idx} ({r},{c}): live − detached {diff:e}, kernel path {numeric:e}"
                );
            }
        }
    }
}

#[test]
fn weights_scale_gradients_linearly() {
    let data = small_data(9);
    let base = small_config(3, AblationSpec::FULL);
    let params = init_params(&data, &base);
    let grad = |config: &TrainConfig| analytic_gradient(&data, &params, config).0;
    let zero = TrainConfig {
        weights: fusion_gcn::losses::LossWeights {
            beta: 0.0,
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
        },
        ..base.clone()
    };
    let only_fral = |w: f64| TrainConfig {
        weights: fusion_gcn::losses::LossWeights {
            lambda3: w,
            ..zero.weights
        },
        ..base.clone()
    };
    let g0 = grad(&zero);
    let g1 = grad(&only_fral(0.2));
    let g2 = grad(&only_fral(0.4));
    for ((a, b), c) in g0.iter().zip(&g1).zip(&g2) {
        let lhs = c.sub(a).unwrap();
        let rhs = b.sub(a).unwrap().scale(2.0);
        assert!(lhs.max_abs_diff(&rhs) < 1e-9 * rhs.max_abs().max(1.0));
    }
}

fn tape_fd(
    build: impl Fn(&mut Tape, fusion_gcn::numerics::Expr) -> fusion_gcn::numerics::Expr,
    x: &Matrix,
) {
    let mut tape = Tape::new();
    let input = tape.input(x.clone()).unwrap();
    let root = build(&mut tape, input);
    let (_, mut grads) = tape.evaluate_with_gradient(root, &[input]).unwrap();
    let g = grads.take(input).unwrap();
    let eval = |m: &Matrix| {
        let mut t = Tape::new();
        let i = t.input(m.clone()).unwrap();
        let r = build(&mut t, i);
        t.scalar(r).unwrap()
    };
    let h = 1e-6;
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let mut p = x.clone();
            p[(r, c)] += h;
            let mut m = x.clone();
            m[(r, c)] -= h;
            let numeric = (eval(&p) - eval(&m)) / (2.0 * h);
            assert!(
                agrees(g[(r, c)], numeric, 1e-5, 1e-7),
                "({r},{c}): analytic {} numeric {numeric}",
                g[(r, c)]
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn orthogonalize_backward(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let x = uniform(&mut r, 7, 3, -1.0, 1.0);
        let w = uniform(&mut r, 7, 3, -1.0, 1.0);
        tape_fd(|t, x| {
            let h = t.cholesky_orthogonalize(x, 1e-3).unwrap();
            let wc = t.constant(w.clone()).unwrap();
            let p = t.hadamard(h, wc).unwrap();
            let s = t.frobenius_sq(p).unwrap();
            t.scale(s, 1.0).unwrap()
        }, &x);
    }

    #[test]
    fn normalization_and_laplacian_backward(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let x = uniform(&mut r, 5, 5, 0.1, 1.0);
        let y = uniform(&mut r, 5, 2, -1.0, 1.0);
        tape_fd(|t, a| {
            let at = t.transpose(a).unwrap();
            let sym = t.add(a, at).unwrap();
            let n = t.normalize_adjacency(sym).unwrap();
            let l = t.laplacian(sym).unwrap();
            let yc = t.constant(y.clone()).unwrap();
            let ny = t.matmul(n, yc).unwrap();
            let ly = t.matmul(l, yc).unwrap();
            let q = t.hadamard(ny, ly).unwrap();
            t.frobenius_sq(q).unwrap()
        }, &x);
    }

    #[test]
    fn fused_kernel_chain_backward(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let x = uniform(&mut r, 6, 3, -1.0, 1.0);
        tape_fd(|t, x| {
            let c = t.column_normalize(x).unwrap();
            let g = t.gram(c).unwrap();
            let d = t.squared_distances_from_gram(g).unwrap();
            let s = t.scale(d, -0.5).unwrap();
            let k = t.exp(s).unwrap();
            let rel = t.relu(g).unwrap();
            let both = t.hconcat(&[k, rel]).unwrap();
            let f = t.frobenius_sq(both).unwrap();
            let tr = t.trace(k).unwrap();
            t.weighted_sum(&[(f, 0.7), (tr, -1.3)]).unwrap()
        }, &x);
    }
}
