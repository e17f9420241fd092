//! Full-batch training: initialization, the epoch loop, Adam, and the
//! training log.

mod adam;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_GUARD};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ViewSet;
use crate::losses::{
    autoencoder_expr, fral_expr, fused_kernel_expr, gaussian_kernel, kernel_kmeans_expr,
    median_bandwidth, smal_expr, spectral_expr, view_grams_expr, view_kernels, LossBreakdown,
    LossError, LossExprs, LossWeights,
};
use crate::model::{
    forward, forward_on_tape, static_knn_graph, ForwardOutputs, GraphSource, ModelError,
    ModelParams, ParamExprs,
};
use crate::numerics::{gemm, pairwise_squared_distances, Expr, Matrix, NumericsError, Tape};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("epoch {epoch}: non-finite {what}")]
    NonFinite { epoch: usize, what: String },
}

impl TrainError {
    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        !matches!(
            self,
            TrainError::Config(_)
                | TrainError::Model(ModelError::KOutOfRange { .. } | ModelError::Shape(_))
                | TrainError::Loss(LossError::Weight { .. })
        )
    }
}

/// Which model components are active. With `uga` off the graph is the
/// static raw-feature kNN graph and raw concatenated features replace the
/// learned projections, so SMAL and FRAL have nothing to act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub uga: bool,
    pub smal: bool,
    pub fral: bool,
    pub autoencoder: bool,
}

impl Default for AblationSpec {
    fn default() -> Self {
        Self::FULL
    }
}

impl AblationSpec {
    pub const BASELINE: Self = Self {
        uga: false,
        smal: false,
        fral: false,
        autoencoder: false,
    };
    pub const FULL: Self = Self {
        uga: true,
        smal: true,
        fral: true,
        autoencoder: true,
    };

    /// Baseline, +UGA, +SMAL, +FRAL, full.
    pub fn ladder() -> [(&'static str, Self); 5] {
        let uga = Self {
            uga: true,
            ..Self::BASELINE
        };
        let smal = Self { smal: true, ..uga };
        let fral = Self { fral: true, ..smal };
        [
            ("baseline", Self::BASELINE),
            ("+UGA", uga),
            ("+UGA+SMAL", smal),
            ("+UGA+SMAL+FRAL", fral),
            ("full", Self::FULL),
        ]
    }

    pub fn is_baseline(&self) -> bool {
        !self.uga
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !self.uga && (self.smal || self.fral) {
            return Err(TrainError::Config(
                "SMAL and FRAL need the learned graph (static-graph baseline has no projections)"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub fusion_dim: usize,
    pub h1: usize,
    pub h2: usize,
    pub k: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    pub epsilon: f64,
    pub seed: u64,
    pub detach_fused_kernel: bool,
    pub ablation: AblationSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            fusion_dim: 256,
            h1: 16,
            h2: 16,
            k: 10,
            epochs: 200,
            learning_rate: 0.001,
            weights: LossWeights::default(),
            epsilon: 1e-4,
            seed: 0,
            detach_fused_kernel: false,
            ablation: AblationSpec::FULL,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        for (name, v) in [
            ("fusion_dim", self.fusion_dim),
            ("h1", self.h1),
            ("h2", self.h2),
            ("k", self.k),
        ] {
            if v == 0 {
                return Err(TrainError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(TrainError::Config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        self.weights
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        self.ablation.validate()
    }

    /// `sha256:<hex>` of the JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        format!("sha256:{hex}")
    }

    fn check_against(&self, data: &ViewSet) -> Result<(), TrainError> {
        let n = data.n_samples();
        if data.cluster_count() > n {
            return Err(TrainError::Config(format!(
                "{} clusters for {n} samples",
                data.cluster_count()
            )));
        }
        if self.k + 1 > n {
            return Err(TrainError::Config(format!(
                "k = {} needs more than {n} samples",
                self.k
            )));
        }
        Ok(())
    }
}

/// Losses of one epoch, measured on the parameters the epoch started with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: LossBreakdown,
    pub epsilon: f64,
    pub fused_bandwidth: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub outputs: ForwardOutputs,
    pub trajectory: Vec<EpochRecord>,
    pub config: TrainConfig,
    /// Static graph used by the baseline, if any.
    pub static_adjacency: Option<Matrix>,
    pub elapsed_secs: f64,
}

impl TrainedModel {
    pub fn log(&self, dataset: &str) -> TrainingLog {
        TrainingLog {
            dataset: dataset.to_string(),
            seed: self.config.seed,
            config_hash: self.config.hash(),
            config: self.config.clone(),
            epochs: self.trajectory.clone(),
            wall_time_secs: self.elapsed_secs,
        }
    }
}

/// JSON training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub dataset: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub wall_time_secs: f64,
}

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-a..=a))
}

/// Seeded uniform initialization with bound `√(6/(fan_in + fan_out))`.
pub fn init_params(data: &ViewSet, config: &TrainConfig) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (u, fused_width) = if config.ablation.uga {
        let u: Vec<Matrix> = data
            .view_dims()
            .into_iter()
            .map(|dv| uniform(dv, config.fusion_dim, &mut rng))
            .collect();
        (u, config.fusion_dim * data.n_views())
    } else {
        (Vec::new(), data.view_dims().iter().sum())
    };
    let w1 = uniform(fused_width, config.h1, &mut rng);
    let w2 = uniform(config.h1, config.h2, &mut rng);
    let w3 = uniform(config.h2, data.cluster_count(), &mut rng);
    ModelParams { u, w1, w2, w3 }
}

/// Per-run constants.
struct Prepared {
    mean_view_kernel: Matrix,
    raw_grams: Vec<Matrix>,
    static_adjacency: Option<Matrix>,
    static_kernel: Option<(Matrix, f64)>,
}

fn prepare(data: &ViewSet, config: &TrainConfig) -> Result<Prepared, TrainError> {
    let (kernels, _) = view_kernels(data.views())?;
    let n = data.n_samples();
    let mut mean_view_kernel = Matrix::zeros(n, n);
    for k in &kernels {
        mean_view_kernel.add_scaled_assign(k, 1.0 / kernels.len() as f64);
    }
    let raw_grams = if config.ablation.fral {
        data.views()
            .iter()
            .map(|x| gemm(x, false, x, true))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let (static_adjacency, static_kernel) = if config.ablation.uga {
        (None, None)
    } else {
        let raw = Matrix::hconcat(&data.views().iter().collect::<Vec<_>>())?;
        let sigma2 = median_bandwidth(&pairwise_squared_distances(&raw));
        (
            Some(static_knn_graph(data, config.k)?),
            Some((gaussian_kernel(&raw, sigma2)?, sigma2)),
        )
    };
    Ok(Prepared {
        mean_view_kernel,
        raw_grams,
        static_adjacency,
        static_kernel,
    })
}

/// One recorded objective evaluation.
pub struct Objective {
    pub tape: Tape,
    pub params: ParamExprs,
    pub total: Expr,
    pub terms: LossExprs,
    pub epsilon: f64,
    pub fused_bandwidth: f64,
}

fn build_objective(
    data: &ViewSet,
    params: &ModelParams,
    config: &TrainConfig,
    prep: &Prepared,
    fused_bandwidth: Option<f64>,
) -> Result<Objective, TrainError> {
    let ablation = config.ablation;
    let mut tape = Tape::new();
    let views: Vec<Expr> = data
        .views()
        .iter()
        .map(|x| tape.constant(x.clone()))
        .collect::<Result<_, _>>()?;
    let p = ParamExprs::push(&mut tape, params, true)?;
    let source = match &prep.static_adjacency {
        Some(adjacency) => GraphSource::Static { adjacency },
        None => GraphSource::Learned { k: config.k },
    };
    let f = forward_on_tape(&mut tape, &p, &views, source, config.epsilon)?;

    let (fused_kernel, fused_bandwidth) = match (&prep.static_kernel, f.fused_gram) {
        (Some((k, sigma2)), _) => (tape.constant(k.clone())?, *sigma2),
        (None, Some(gram)) => {
            fused_kernel_expr(&mut tape, gram, config.detach_fused_kernel, fused_bandwidth)?
        }
        (None, None) => unreachable!("learned graph records the fused Gram"),
    };
    let mean_view_kernel = tape.constant(prep.mean_view_kernel.clone())?;

    let mut terms = LossExprs {
        kernel_kmeans: Some(kernel_kmeans_expr(
            &mut tape,
            fused_kernel,
            mean_view_kernel,
            f.h,
        )?),
        spectral: Some(spectral_expr(&mut tape, f.h, f.adjacency)?),
        ..LossExprs::default()
    };
    if ablation.autoencoder {
        terms.autoencoder = Some(autoencoder_expr(&mut tape, f.adjacency, f.h)?);
    }
    if ablation.smal || ablation.fral {
        let grams = view_grams_expr(&mut tape, &f.views)?;
        if ablation.smal {
            let similarity = f.similarity.expect("learned graph records S_f");
            terms.smal = Some(smal_expr(&mut tape, f.h, &grams, similarity)?);
        }
        if ablation.fral {
            let raw: Vec<Expr> = prep
                .raw_grams
                .iter()
                .map(|g| tape.constant(g.clone()))
                .collect::<Result<_, _>>()?;
            terms.fral = Some(fral_expr(&mut tape, &raw, &grams)?);
        }
    }
    let total = terms.total(&mut tape, &config.weights)?;
    Ok(Objective {
        tape,
        params: p,
        total,
        terms,
        epsilon: f.epsilon,
        fused_bandwidth,
    })
}

/// Records the training objective for fixed parameters (exposed so the
/// gradient can be checked against finite differences).
pub fn objective(
    data: &ViewSet,
    params: &ModelParams,
    config: &TrainConfig,
) -> Result<Objective, TrainError> {
    objective_with_bandwidth(data, params, config, None)
}

/// [`objective`] with the fused-kernel σ² pinned to `fused_bandwidth`
/// instead of the median heuristic (the learned-graph case only).
pub fn objective_with_bandwidth(
    data: &ViewSet,
    params: &ModelParams,
    config: &TrainConfig,
    fused_bandwidth: Option<f64>,
) -> Result<Objective, TrainError> {
    config.validate()?;
    config.check_against(data)?;
    params.check_against(data)?;
    let prep = prepare(data, config)?;
    build_objective(data, params, config, &prep, fused_bandwidth)
}

/// Runs `config.epochs` full-batch Adam steps and the final forward pass.
pub fn train(data: &ViewSet, config: &TrainConfig) -> Result<TrainedModel, TrainError> {
    train_from(data, config, init_params(data, config))
}

/// [`train`] starting from given parameters.
pub fn train_from(
    data: &ViewSet,
    config: &TrainConfig,
    mut params: ModelParams,
) -> Result<TrainedModel, TrainError> {
    let start = Instant::now();
    config.validate()?;
    config.check_against(data)?;
    params.check_against(data)?;
    let prep = prepare(data, config)?;
    let mut adam = AdamState::new(&params);
    let mut trajectory = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let obj = build_objective(data, &params, config, &prep, None)?;
        let inputs = obj.params.all();
        let (_, mut grads) = obj
            .tape
            .evaluate_with_gradient(obj.total, &inputs)
            .map_err(|e| match e {
                NumericsError::NonFinite { op, .. } => TrainError::NonFinite {
                    epoch,
                    what: format!("gradient ({op})"),
                },
                other => other.into(),
            })?;
        let losses = obj.terms.breakdown(&obj.tape, obj.total)?;
        if !losses.total.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                what: "loss".into(),
            });
        }
        trajectory.push(EpochRecord {
            epoch,
            losses,
            epsilon: obj.epsilon,
            fused_bandwidth: obj.fused_bandwidth,
        });
        let grads: Vec<Matrix> = inputs
            .iter()
            .map(|&e| grads.take(e).expect("gradient for every parameter"))
            .collect();
        adam_step(&mut params, &grads, &mut adam, config.learning_rate).map_err(|name| {
            TrainError::NonFinite {
                epoch,
                what: format!("gradient or update for {name}"),
            }
        })?;
    }

    let outputs = forward(
        &params,
        data,
        config.k,
        config.epsilon,
        prep.static_adjacency.as_ref(),
    )?;
    Ok(TrainedModel {
        params,
        outputs,
        trajectory,
        config: config.clone(),
        static_adjacency: prep.static_adjacency,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
