use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CliError, TrainOpts};
use crate::cluster::{concat_representation, evaluate, kmeans, F1Kind, KMeansConfig, MetricReport};
use crate::data::{
    column_stats, generate_synthetic, load_dataset, save_dataset, write_labels, write_matrix,
    DataError, MatrixFormat, SyntheticSpec, ViewSet,
};
use crate::model::{forward, load_checkpoint, save_checkpoint, static_knn_graph, CheckpointIndex};
use crate::trainer::{train, AblationSpec, EpochRecord, TrainConfig, TrainedModel};

/// Everything needed to reproduce and compare one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub seed: u64,
    pub variant: String,
    pub config: TrainConfig,
    pub config_hash: String,
    pub kmeans: KMeansConfig,
    pub f1_kind: F1Kind,
    pub metrics: Option<MetricReport>,
    pub predicted: Vec<usize>,
    pub trajectory: Vec<EpochRecord>,
    /// ε used by the final forward pass.
    pub epsilon: f64,
    pub wall_time_secs: f64,
}

impl RunRecord {
    /// Same record with the wall time zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> RunRecord {
        RunRecord {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }
}

fn variant_name(ablation: &AblationSpec) -> String {
    AblationSpec::ladder()
        .iter()
        .find(|(_, a)| a == ablation)
        .map_or_else(|| format!("{ablation:?}"), |(n, _)| n.to_string())
}

/// Trains, clusters `[H1, H2, H]`, and evaluates against labels if present.
pub fn run_on(
    data: &ViewSet,
    config: &TrainConfig,
    kmeans_config: &KMeansConfig,
    f1: F1Kind,
) -> Result<(RunRecord, TrainedModel), CliError> {
    let model = train(data, config)?;
    let o = &model.outputs;
    let embedding = concat_representation(&o.h1, &o.h2, &o.h)?;
    let clustering = kmeans(
        embedding.matrix(),
        data.cluster_count(),
        config.seed,
        kmeans_config,
    )?;
    let metrics = match data.labels() {
        Some(y) => Some(evaluate(y, &clustering.labels, f1)?),
        None => None,
    };
    let record = RunRecord {
        dataset: data.name().to_string(),
        seed: config.seed,
        variant: variant_name(&config.ablation),
        config: config.clone(),
        config_hash: config.hash(),
        kmeans: *kmeans_config,
        f1_kind: f1,
        metrics,
        predicted: clustering.labels,
        trajectory: model.trajectory.clone(),
        epsilon: o.epsilon,
        wall_time_secs: model.elapsed_secs,
    };
    Ok((record, model))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

/// Writes `record.json`, `training_log.json`, and `checkpoint/` under `out`.
pub fn cmd_train(data_path: &Path, out: &Path, opts: &TrainOpts) -> Result<RunRecord, CliError> {
    let config = opts.config()?;
    let kmeans_config = opts.kmeans()?;
    let data = load_dataset(data_path)?;
    let (record, model) = run_on(&data, &config, &kmeans_config, opts.f1)?;
    create_dir(out)?;
    write_json(&out.join("record.json"), &record)?;
    write_json(&out.join("training_log.json"), &model.log(data.name()))?;
    let index = CheckpointIndex {
        seed: config.seed,
        config_hash: config.hash(),
        config: serde_json::to_value(&config).expect("config serializes"),
        dataset: Some(fs::canonicalize(data_path).unwrap_or_else(|_| data_path.to_path_buf())),
        dataset_name: data.name().to_string(),
        epsilon: model.outputs.epsilon,
        static_graph: false,
        params: Vec::new(),
    };
    save_checkpoint(&out.join("checkpoint"), &model.params, index)?;
    Ok(record)
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median metrics of a set of labeled runs.
fn median_metrics(records: &[RunRecord]) -> [f64; 4] {
    let pick = |f: fn(&MetricReport) -> f64| -> f64 {
        median(
            &records
                .iter()
                .filter_map(|r| r.metrics.as_ref().map(f))
                .collect::<Vec<_>>(),
        )
    };
    [
        pick(|m| m.acc),
        pick(|m| m.nmi),
        pick(|m| m.ari),
        pick(|m| m.f1),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub ablation: AblationSpec,
    pub median_acc: f64,
    pub median_nmi: f64,
    pub median_ari: f64,
    pub median_f1: f64,
    pub records: Vec<RunRecord>,
}

fn require_labels(data: &ViewSet) -> Result<(), CliError> {
    if data.labels().is_none() {
        return Err(DataError::Labels(format!(
            "dataset {} has no labels; evaluation needs ground truth",
            data.name()
        ))
        .into());
    }
    Ok(())
}

/// Runs every ladder row for every seed; writes `ablation.json` and
/// `ablation.csv` under `out`.
pub fn cmd_ablate(
    data_path: &Path,
    out: &Path,
    opts: &TrainOpts,
    seeds: &[u64],
) -> Result<Vec<AblationRow>, CliError> {
    if seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".into()));
    }
    let base = opts.config()?;
    let kmeans_config = opts.kmeans()?;
    let data = load_dataset(data_path)?;
    require_labels(&data)?;
    let mut rows = Vec::new();
    for (name, ablation) in AblationSpec::ladder() {
        let mut records = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let config = TrainConfig {
                seed,
                ablation,
                ..base.clone()
            };
            records.push(run_on(&data, &config, &kmeans_config, opts.f1)?.0);
        }
        let [acc, nmi, ari, f1] = median_metrics(&records);
        rows.push(AblationRow {
            variant: name.to_string(),
            ablation,
            median_acc: acc,
            median_nmi: nmi,
            median_ari: ari,
            median_f1: f1,
            records,
        });
    }
    create_dir(out)?;
    write_json(&out.join("ablation.json"), &rows)?;
    let csv_path = out.join("ablation.csv");
    let mut w = csv::Writer::from_path(&csv_path)
        .map_err(|e| CliError::Other(format!("{}: {e}", csv_path.display())))?;
    let csv_err = |e: csv::Error| CliError::Other(format!("{}: {e}", csv_path.display()));
    w.write_record(["variant", "seed", "acc", "nmi", "ari", "f1"])
        .map_err(csv_err)?;
    for row in &rows {
        for r in &row.records {
            let m = r.metrics.as_ref().expect("labels required");
            w.write_record([
                row.variant.clone(),
                r.seed.to_string(),
                m.acc.to_string(),
                m.nmi.to_string(),
                m.ari.to_string(),
                m.f1.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()
        .map_err(|e| CliError::io(format!("writing {}", csv_path.display()), e))?;
    Ok(rows)
}

/// Fixed-width text table of ablation medians and per-seed ACC.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>8} {:>8} {:>8} {:>8}  per-seed acc",
        "variant", "acc", "nmi", "ari", "f1"
    );
    for row in rows {
        let per_seed: Vec<String> = row
            .records
            .iter()
            .filter_map(|r| r.metrics.as_ref().map(|m| format!("{:.4}", m.acc)))
            .collect();
        let _ = writeln!(
            s,
            "{:<16} {:>8.4} {:>8.4} {:>8.4} {:>8.4}  {}",
            row.variant,
            row.median_acc,
            row.median_nmi,
            row.median_ari,
            row.median_f1,
            per_seed.join(" ")
        );
    }
    s
}

/// One sweep dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub param: String,
    pub values: Vec<f64>,
}

const GRID_PARAMS: [&str; 11] = [
    "beta", "l1", "l2", "l3", "k", "lr", "dim", "h1", "h2", "epochs", "epsilon",
];

/// Parses `<param>=v1,v2,...`.
pub fn parse_grid(spec: &str) -> Result<GridAxis, CliError> {
    let (param, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("grid {spec:?} is not <param>=v1,v2,...")))?;
    let param = param.trim().to_string();
    if !GRID_PARAMS.contains(&param.as_str()) {
        return Err(CliError::Config(format!(
            "unknown grid parameter {param:?} (one of {})",
            GRID_PARAMS.join(", ")
        )));
    }
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("grid value {v:?} for {param}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Config(format!("grid for {param} is empty")));
    }
    Ok(GridAxis { param, values })
}

fn as_count(param: &str, v: f64) -> Result<usize, CliError> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(CliError::Config(format!(
            "{param} must be a whole number, got {v}"
        )))
    }
}

fn apply(config: &mut TrainConfig, param: &str, v: f64) -> Result<(), CliError> {
    match param {
        "beta" => config.weights.beta = v,
        "l1" => config.weights.lambda1 = v,
        "l2" => config.weights.lambda2 = v,
        "l3" => config.weights.lambda3 = v,
        "lr" => config.learning_rate = v,
        "epsilon" => config.epsilon = v,
        "k" => config.k = as_count(param, v)?,
        "dim" => config.fusion_dim = as_count(param, v)?,
        "h1" => config.h1 = as_count(param, v)?,
        "h2" => config.h2 = as_count(param, v)?,
        "epochs" => config.epochs = as_count(param, v)?,
        other => {
            return Err(CliError::Config(format!(
                "unknown grid parameter {other:?}"
            )))
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub values: Vec<f64>,
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
}

fn grid_cells(axes: &[GridAxis]) -> Vec<Vec<f64>> {
    let mut cells = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |&v| {
                    let mut c = prefix.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    cells
}

/// Runs the Cartesian grid (first axis varies slowest) with every cell
/// using the same seeds, and writes a CSV of median metrics.
pub fn cmd_sweep(
    data_path: &Path,
    out: &Path,
    opts: &TrainOpts,
    axes: &[GridAxis],
    seeds: &[u64],
    jobs: Option<usize>,
) -> Result<Vec<SweepRow>, CliError> {
    if axes.is_empty() {
        return Err(CliError::Config(
            "sweep needs at least one grid axis".into(),
        ));
    }
    if seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".into()));
    }
    let base = opts.config()?;
    let kmeans_config = opts.kmeans()?;
    let cells = grid_cells(axes);
    let mut configs = Vec::with_capacity(cells.len());
    for cell in &cells {
        let mut config = base.clone();
        for (axis, &v) in axes.iter().zip(cell) {
            apply(&mut config, &axis.param, v)?;
        }
        config.validate()?;
        configs.push(config);
    }
    let data = load_dataset(data_path)?;
    require_labels(&data)?;

    let run_cell = |(cell, config): (&Vec<f64>, &TrainConfig)| -> Result<SweepRow, CliError> {
        let records = seeds
            .iter()
            .map(|&seed| {
                let c = TrainConfig {
                    seed,
                    ..config.clone()
                };
                run_on(&data, &c, &kmeans_config, opts.f1).map(|(r, _)| r)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let [acc, nmi, ari, f1] = median_metrics(&records);
        Ok(SweepRow {
            values: cell.clone(),
            acc,
            nmi,
            ari,
            f1,
        })
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        cells
            .par_iter()
            .zip(configs.par_iter())
            .map(run_cell)
            .collect::<Result<Vec<_>, _>>()
    })?;

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let csv_err = |e: csv::Error| CliError::Other(format!("{}: {e}", out.display()));
    let mut w = csv::Writer::from_path(out).map_err(csv_err)?;
    let mut header: Vec<String> = axes.iter().map(|a| a.param.clone()).collect();
    header.extend(["acc", "nmi", "ari", "f1"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for row in &rows {
        let mut rec: Vec<String> = row.values.iter().map(f64::to_string).collect();
        rec.extend([row.acc, row.nmi, row.ari, row.f1].map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| CliError::io(format!("writing {}", out.display()), e))?;
    Ok(rows)
}

/// Sample indices sorted by label (stable), or the identity.
pub fn label_order(labels: Option<&[usize]>, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(l) = labels {
        order.sort_by_key(|&i| l[i]);
    }
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportSummary {
    pub adjacency: PathBuf,
    pub embedding: PathBuf,
    pub order: PathBuf,
    /// Mean off-diagonal edge weight within / between true clusters (NaN
    /// without labels).
    pub within_mean: f64,
    pub between_mean: f64,
}

fn block_contrast(adjacency: &crate::numerics::Matrix, labels: Option<&[usize]>) -> (f64, f64) {
    let Some(l) = labels else {
        return (f64::NAN, f64::NAN);
    };
    let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..adjacency.rows() {
        for j in 0..adjacency.cols() {
            if i == j {
                continue;
            }
            if l[i] == l[j] {
                within += adjacency[(i, j)];
                nw += 1;
            } else {
                between += adjacency[(i, j)];
                nb += 1;
            }
        }
    }
    (within / nw.max(1) as f64, between / nb.max(1) as f64)
}

/// Recomputes the forward pass of a checkpoint and writes `A_f` and
/// `[H1, H2, H]` ordered by ground-truth label when labels exist.
pub fn cmd_export_graph(
    checkpoint: &Path,
    data_path: Option<&Path>,
    out: &Path,
    format: MatrixFormat,
) -> Result<ExportSummary, CliError> {
    let (params, index) = load_checkpoint(checkpoint)?;
    let config: TrainConfig =
        serde_json::from_value(index.config.clone()).map_err(|e| DataError::Malformed {
            path: checkpoint.join(crate::model::CHECKPOINT_INDEX),
            reason: format!("config: {e}"),
        })?;
    let data_path = data_path
        .map(Path::to_path_buf)
        .or(index.dataset.clone())
        .ok_or_else(|| CliError::Config("checkpoint records no dataset; pass --data".into()))?;
    let data = load_dataset(&data_path)?;
    params.check_against(&data)?;
    let static_adjacency = if params.is_static() {
        Some(static_knn_graph(&data, config.k)?)
    } else {
        None
    };
    let outputs = forward(
        &params,
        &data,
        config.k,
        config.epsilon,
        static_adjacency.as_ref(),
    )?;
    let embedding = concat_representation(&outputs.h1, &outputs.h2, &outputs.h)?;
    let order = label_order(data.labels(), data.n_samples());
    let adjacency = outputs.graph.adjacency.permute_symmetric(&order);
    let embedding = embedding.matrix().permute_rows(&order);
    let sorted_labels: Option<Vec<usize>> =
        data.labels().map(|l| order.iter().map(|&i| l[i]).collect());
    let (within_mean, between_mean) = block_contrast(&adjacency, sorted_labels.as_deref());

    create_dir(out)?;
    let ext = format.extension();
    let adjacency_path = out.join(format!("adjacency.{ext}"));
    let embedding_path = out.join(format!("embedding.{ext}"));
    let order_path = out.join("order.txt");
    write_matrix(&adjacency_path, &adjacency, format)?;
    write_matrix(&embedding_path, &embedding, format)?;
    write_labels(&order_path, &order)?;
    if let Some(l) = &sorted_labels {
        write_labels(&out.join("labels.txt"), l)?;
    }
    Ok(ExportSummary {
        adjacency: adjacency_path,
        embedding: embedding_path,
        order: order_path,
        within_mean,
        between_mean,
    })
}

pub fn cmd_synth(
    spec: &SyntheticSpec,
    out: &Path,
    format: MatrixFormat,
) -> Result<PathBuf, CliError> {
    let data = generate_synthetic(spec).map_err(|e| match e {
        DataError::Invalid(m) => CliError::Config(m),
        other => other.into(),
    })?;
    Ok(save_dataset(&data, out, format)?)
}

pub fn cmd_stats(data_path: &Path) -> Result<String, CliError> {
    #[derive(Serialize)]
    struct ViewStats {
        rows: usize,
        cols: usize,
        columns: Vec<crate::data::ColumnSummary>,
    }
    #[derive(Serialize)]
    struct Report {
        name: String,
        cluster_count: usize,
        labeled: bool,
        views: Vec<ViewStats>,
    }
    let data = load_dataset(data_path)?;
    let report = Report {
        name: data.name().to_string(),
        cluster_count: data.cluster_count(),
        labeled: data.labels().is_some(),
        views: data
            .views()
            .iter()
            .map(|m| ViewStats {
                rows: m.rows(),
                cols: m.cols(),
                columns: column_stats(m),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&report).expect("serializable"))
}
