//! C ABI over the training and clustering pipeline.
//!
//! Datasets and trained models are opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns an
//! [`FgStatus`]; on failure [`fg_last_error`] describes what went wrong on the
//! calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fusion_gcn::cli::{ablation_row, CliError};
use fusion_gcn::cluster::{concat_representation, evaluate, kmeans, F1Kind, KMeansConfig};
use fusion_gcn::data::{generate_synthetic, load_dataset, SyntheticSpec, ViewSet};
use fusion_gcn::losses::LossWeights;
use fusion_gcn::numerics::Matrix;
use fusion_gcn::trainer::{train, TrainConfig, TrainedModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FgStatus {
    Ok = 0,
    Other = 1,
    Config = 2,
    Data = 3,
    Numeric = 4,
    NullArgument = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque multi-view dataset.
pub struct FgDataset(ViewSet);

/// Opaque trained model.
pub struct FgModel(TrainedModel);

/// Training hyperparameters. Obtain defaults from [`fg_train_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FgTrainConfig {
    pub fusion_dim: usize,
    pub h1: usize,
    pub h2: usize,
    pub k: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub detach_fused_kernel: bool,
    /// 0 baseline, 1 +UGA, 2 +UGA+SMAL, 3 +UGA+SMAL+FRAL, 4 full.
    pub ablation_row: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FgMetrics {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
}

struct Failure(FgStatus, String);

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        let status = match e.exit_code() {
            2 => FgStatus::Config,
            3 => FgStatus::Data,
            4 => FgStatus::Numeric,
            _ => FgStatus::Other,
        };
        Failure(status, e.to_string())
    }
}

fn fail<E: Into<CliError>>(e: E) -> Failure {
    e.into().into()
}

fn null(what: &str) -> Failure {
    Failure(FgStatus::NullArgument, format!("{what} is null"))
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FgStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            FgStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(FgStatus::Config, format!("{what} is not valid UTF-8")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn fg_train_config_default() -> FgTrainConfig {
    let d = TrainConfig::default();
    FgTrainConfig {
        fusion_dim: d.fusion_dim,
        h1: d.h1,
        h2: d.h2,
        k: d.k,
        epochs: d.epochs,
        learning_rate: d.learning_rate,
        beta: d.weights.beta,
        lambda1: d.weights.lambda1,
        lambda2: d.weights.lambda2,
        lambda3: d.weights.lambda3,
        epsilon: d.epsilon,
        seed: d.seed,
        detach_fused_kernel: d.detach_fused_kernel,
        ablation_row: 4,
    }
}

fn to_config(c: &FgTrainConfig) -> Result<TrainConfig, Failure> {
    let (_, ablation) = ablation_row(&c.ablation_row.to_string())?;
    let config = TrainConfig {
        fusion_dim: c.fusion_dim,
        h1: c.h1,
        h2: c.h2,
        k: c.k,
        epochs: c.epochs,
        learning_rate: c.learning_rate,
        weights: LossWeights {
            beta: c.beta,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            lambda3: c.lambda3,
        },
        epsilon: c.epsilon,
        seed: c.seed,
        detach_fused_kernel: c.detach_fused_kernel,
        ablation,
    };
    config.validate().map_err(fail)?;
    Ok(config)
}

/// Loads a dataset from its manifest file.
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_load(
    manifest_path: *const c_char,
    out: *mut *mut FgDataset,
) -> FgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = path_arg(manifest_path, "manifest_path")?;
        let data = load_dataset(&path).map_err(fail)?;
        *out = Box::into_raw(Box::new(FgDataset(data)));
        Ok(())
    })
}

/// Builds a dataset from row-major view buffers. `views[v]` holds
/// `n_samples * view_cols[v]` doubles. `labels` may be null; otherwise it
/// holds `n_samples` values in `[0, n_clusters)`.
///
/// # Safety
/// Every pointer must be valid for the lengths described above.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_from_views(
    n_views: usize,
    views: *const *const f64,
    view_cols: *const usize,
    n_samples: usize,
    labels: *const usize,
    n_clusters: usize,
    out: *mut *mut FgDataset,
) -> FgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if views.is_null() || view_cols.is_null() {
            return Err(null("views"));
        }
        let ptrs = std::slice::from_raw_parts(views, n_views);
        let cols = std::slice::from_raw_parts(view_cols, n_views);
        let mut matrices = Vec::with_capacity(n_views);
        for (v, (&p, &c)) in ptrs.iter().zip(cols).enumerate() {
            if p.is_null() {
                return Err(null(&format!("views[{v}]")));
            }
            let data = std::slice::from_raw_parts(p, n_samples * c).to_vec();
            matrices.push(
                Matrix::from_vec(n_samples, c, data)
                    .map_err(|e| Failure(FgStatus::Data, e.to_string()))?,
            );
        }
        let labels =
            (!labels.is_null()).then(|| std::slice::from_raw_parts(labels, n_samples).to_vec());
        let data = ViewSet::new("ffi", matrices, labels, n_clusters).map_err(fail)?;
        *out = Box::into_raw(Box::new(FgDataset(data)));
        Ok(())
    })
}

/// Generates a synthetic dataset with a shared noise level.
///
/// # Safety
/// `view_dims` must hold `n_views` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_synthetic(
    n_samples: usize,
    n_clusters: usize,
    n_views: usize,
    view_dims: *const usize,
    separation: f64,
    noise: f64,
    noise_fraction: f64,
    seed: u64,
    out: *mut *mut FgDataset,
) -> FgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if view_dims.is_null() {
            return Err(null("view_dims"));
        }
        let spec = SyntheticSpec {
            n_samples,
            n_clusters,
            view_dims: std::slice::from_raw_parts(view_dims, n_views).to_vec(),
            separation,
            noise: vec![noise],
            noise_fraction,
            seed,
        };
        let data = generate_synthetic(&spec).map_err(fail)?;
        *out = Box::into_raw(Box::new(FgDataset(data)));
        Ok(())
    })
}

/// Reports sample, view, and cluster counts; any output pointer may be null.
///
/// # Safety
/// `dataset` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_shape(
    dataset: *const FgDataset,
    n_samples: *mut usize,
    n_views: *mut usize,
    n_clusters: *mut usize,
) -> FgStatus {
    guard(|| {
        let d = &dataset.as_ref().ok_or_else(|| null("dataset"))?.0;
        if let Some(p) = n_samples.as_mut() {
            *p = d.n_samples();
        }
        if let Some(p) = n_views.as_mut() {
            *p = d.n_views();
        }
        if let Some(p) = n_clusters.as_mut() {
            *p = d.cluster_count();
        }
        Ok(())
    })
}

/// Copies the ground-truth labels into `out` (`n_samples` entries). Returns
/// `Data` when the dataset is unlabeled.
///
/// # Safety
/// `out` must hold `capacity` writable entries.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_labels(
    dataset: *const FgDataset,
    out: *mut usize,
    capacity: usize,
) -> FgStatus {
    guard(|| {
        let d = &dataset.as_ref().ok_or_else(|| null("dataset"))?.0;
        let labels = d
            .labels()
            .ok_or_else(|| Failure(FgStatus::Data, "dataset has no labels".into()))?;
        copy_out(labels, out, capacity)
    })
}

/// # Safety
/// `dataset` must be null or come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fg_dataset_free(dataset: *mut FgDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Trains on `dataset`. A null `config` uses the defaults.
///
/// # Safety
/// Pointers must be valid; `dataset` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn fg_train(
    dataset: *const FgDataset,
    config: *const FgTrainConfig,
    out: *mut *mut FgModel,
) -> FgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let d = &dataset.as_ref().ok_or_else(|| null("dataset"))?.0;
        let config = to_config(
            &config
                .as_ref()
                .copied()
                .unwrap_or_else(|| fg_train_config_default()),
        )?;
        let model = train(d, &config).map_err(fail)?;
        *out = Box::into_raw(Box::new(FgModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fg_model_free(model: *mut FgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Total loss after the last epoch (NaN when trained for zero epochs).
///
/// # Safety
/// `model` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fg_model_final_loss(model: *const FgModel, out: *mut f64) -> FgStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        *out_ptr(out, "out")? = m.trajectory.last().map_or(f64::NAN, |r| r.losses.total);
        Ok(())
    })
}

unsafe fn copy_out<T: Copy>(src: &[T], out: *mut T, capacity: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if capacity < src.len() {
        return Err(Failure(
            FgStatus::BufferTooSmall,
            format!("need {} entries, buffer holds {capacity}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn matrix_out(
    m: &Matrix,
    out: *mut f64,
    capacity: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> Result<(), Failure> {
    if let Some(r) = rows.as_mut() {
        *r = m.rows();
    }
    if let Some(c) = cols.as_mut() {
        *c = m.cols();
    }
    if out.is_null() {
        return Ok(());
    }
    copy_out(m.as_slice(), out, capacity)
}

/// Writes the row-major `[H1, H2, H]` embedding. With a null `out` only the
/// shape is reported.
///
/// # Safety
/// `out` must be null or hold `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fg_model_embedding(
    model: *const FgModel,
    out: *mut f64,
    capacity: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> FgStatus {
    guard(|| {
        let o = &model.as_ref().ok_or_else(|| null("model"))?.0.outputs;
        let e = concat_representation(&o.h1, &o.h2, &o.h).map_err(fail)?;
        matrix_out(e.matrix(), out, capacity, rows, cols)
    })
}

/// Writes the row-major consensus adjacency `A_f`. With a null `out` only
/// the shape is reported.
///
/// # Safety
/// `out` must be null or hold `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fg_model_adjacency(
    model: *const FgModel,
    out: *mut f64,
    capacity: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> FgStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        matrix_out(&m.outputs.graph.adjacency, out, capacity, rows, cols)
    })
}

/// k-means on the model embedding into `n_clusters` groups; writes one label
/// per sample.
///
/// # Safety
/// `labels` must hold `capacity` writable entries.
#[no_mangle]
pub unsafe extern "C" fn fg_model_cluster(
    model: *const FgModel,
    n_clusters: usize,
    restarts: usize,
    seed: u64,
    labels: *mut usize,
    capacity: usize,
) -> FgStatus {
    guard(|| {
        let o = &model.as_ref().ok_or_else(|| null("model"))?.0.outputs;
        if restarts == 0 {
            return Err(Failure(
                FgStatus::Config,
                "restarts must be at least 1".into(),
            ));
        }
        let e = concat_representation(&o.h1, &o.h2, &o.h).map_err(fail)?;
        let config = KMeansConfig {
            restarts,
            ..KMeansConfig::default()
        };
        let r = kmeans(e.matrix(), n_clusters, seed, &config).map_err(fail)?;
        copy_out(&r.labels, labels, capacity)
    })
}

/// ACC, NMI, ARI and F1 (pairwise, or macro when `macro_f1`).
///
/// # Safety
/// `truth` and `predicted` must hold `n` entries; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fg_evaluate(
    truth: *const usize,
    predicted: *const usize,
    n: usize,
    macro_f1: bool,
    out: *mut FgMetrics,
) -> FgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if truth.is_null() || predicted.is_null() {
            return Err(null("labels"));
        }
        let t = std::slice::from_raw_parts(truth, n);
        let p = std::slice::from_raw_parts(predicted, n);
        let kind = if macro_f1 {
            F1Kind::Macro
        } else {
            F1Kind::Pairwise
        };
        let m = evaluate(t, p, kind).map_err(fail)?;
        *out = FgMetrics {
            acc: m.acc,
            nmi: m.nmi,
            ari: m.ari,
            f1: m.f1,
        };
        Ok(())
    })
}
