//! Command-line front end. `run` parses arguments, dispatches, and maps
//! failures onto exit codes.

mod commands;

pub use commands::{
    cmd_ablate, cmd_export_graph, cmd_stats, cmd_sweep, cmd_synth, cmd_train, label_order,
    parse_grid, run_on, AblationRow, ExportSummary, GridAxis, RunRecord, SweepRow,
};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::cluster::{ClusterError, F1Kind, KMeansConfig};
use crate::data::{DataError, MatrixFormat};
use crate::losses::LossWeights;
use crate::model::ModelError;
use crate::trainer::{AblationSpec, TrainConfig, TrainError};

/// Like `println!`, but a closed stdout is not an error.
macro_rules! emit {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Io { .. } | CliError::Other(_) => EXIT_OTHER,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match &e {
            TrainError::Config(m) => CliError::Config(m.clone()),
            TrainError::Model(ModelError::Shape(_) | ModelError::KOutOfRange { .. }) => {
                CliError::Config(e.to_string())
            }
            _ if e.is_numeric() => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        TrainError::from(e).into()
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::NonFinite(..) => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fusion-gcn",
    version,
    about = "Multi-view clustering with a learned consensus graph"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a dataset, cluster, evaluate, and write a record and checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Run the ablation ladder over several seeds.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Cartesian hyperparameter sweep written as CSV.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        /// `<param>=v1,v2,...`; repeat for more axes. Params: beta, l1, l2,
        /// l3, k, lr, dim, h1, h2, epochs, epsilon.
        #[arg(long, required = true)]
        grid: Vec<String>,
        /// Comma-separated seeds; metrics are medians over them.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads (defaults to the available cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Write the consensus graph and final embedding of a checkpoint.
    ExportGraph {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset; defaults to the one recorded in the checkpoint.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: MatrixFormat,
    },
    /// Generate a synthetic multi-view dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        clusters: usize,
        #[arg(long, value_delimiter = ',', default_value = "20,30,40")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 6.0)]
        separation: f64,
        /// One value, or one per view.
        #[arg(long, value_delimiter = ',', default_value = "0.1")]
        noise: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        noise_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "mvmat")]
        format: MatrixFormat,
    },
    /// Per-view column summaries as JSON.
    Stats {
        #[arg(long)]
        data: PathBuf,
    },
}

/// Training, clustering, and evaluation flags shared by several commands.
#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Fusion dimension d.
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    #[arg(long, default_value_t = 16)]
    pub h1: usize,
    #[arg(long, default_value_t = 16)]
    pub h2: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub l1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub l3: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// k-means restarts.
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long)]
    pub detach_fused_kernel: bool,
    /// baseline, uga, smal, fral or full (or 0-4).
    #[arg(long, default_value = "full")]
    pub ablation_row: String,
    /// pairwise or macro.
    #[arg(long, default_value = "pairwise")]
    pub f1: F1Kind,
}

impl Default for TrainOpts {
    fn default() -> Self {
        let d = TrainConfig::default();
        let w = LossWeights::default();
        Self {
            seed: d.seed,
            epochs: d.epochs,
            lr: d.learning_rate,
            dim: d.fusion_dim,
            h1: d.h1,
            h2: d.h2,
            k: d.k,
            beta: w.beta,
            l1: w.lambda1,
            l2: w.lambda2,
            l3: w.lambda3,
            epsilon: d.epsilon,
            restarts: KMeansConfig::default().restarts,
            detach_fused_kernel: d.detach_fused_kernel,
            ablation_row: "full".into(),
            f1: F1Kind::Pairwise,
        }
    }
}

/// Resolves an ablation row by name or ladder index.
pub fn ablation_row(name: &str) -> Result<(&'static str, AblationSpec), CliError> {
    let ladder = AblationSpec::ladder();
    let idx = match name.to_ascii_lowercase().as_str() {
        "0" | "baseline" => 0,
        "1" | "uga" | "+uga" => 1,
        "2" | "smal" | "+uga+smal" => 2,
        "3" | "fral" | "+uga+smal+fral" => 3,
        "4" | "full" => 4,
        other => {
            return Err(CliError::Config(format!(
                "unknown ablation row {other:?} (baseline, uga, smal, fral, full)"
            )))
        }
    };
    Ok(ladder[idx])
}

impl TrainOpts {
    pub fn config(&self) -> Result<TrainConfig, CliError> {
        let (_, ablation) = ablation_row(&self.ablation_row)?;
        let config = TrainConfig {
            fusion_dim: self.dim,
            h1: self.h1,
            h2: self.h2,
            k: self.k,
            epochs: self.epochs,
            learning_rate: self.lr,
            weights: LossWeights {
                beta: self.beta,
                lambda1: self.l1,
                lambda2: self.l2,
                lambda3: self.l3,
            },
            epsilon: self.epsilon,
            seed: self.seed,
            detach_fused_kernel: self.detach_fused_kernel,
            ablation,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn kmeans(&self) -> Result<KMeansConfig, CliError> {
        if self.restarts == 0 {
            return Err(CliError::Config("restarts must be at least 1".into()));
        }
        Ok(KMeansConfig {
            restarts: self.restarts,
            ..KMeansConfig::default()
        })
    }
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { data, out, opts } => {
            let record = cmd_train(&data, &out, &opts)?;
            match &record.metrics {
                Some(m) => emit!(
                    "{} seed {}: acc {:.4} nmi {:.4} ari {:.4} f1 {:.4}",
                    record.dataset,
                    record.seed,
                    m.acc,
                    m.nmi,
                    m.ari,
                    m.f1
                ),
                None => emit!(
                    "{} seed {}: trained (no labels)",
                    record.dataset,
                    record.seed
                ),
            }
            Ok(())
        }
        Command::Ablate {
            data,
            out,
            seeds,
            opts,
        } => {
            let rows = cmd_ablate(&data, &out, &opts, &seeds)?;
            emit!("{}", commands::ablation_table(&rows).trim_end());
            Ok(())
        }
        Command::Sweep {
            data,
            out,
            grid,
            seeds,
            jobs,
            opts,
        } => {
            let axes = grid
                .iter()
                .map(|g| parse_grid(g))
                .collect::<Result<Vec<_>, _>>()?;
            let seeds = seeds.unwrap_or_else(|| vec![opts.seed]);
            let rows = cmd_sweep(&data, &out, &opts, &axes, &seeds, jobs)?;
            emit!("{} cells written to {}", rows.len(), out.display());
            Ok(())
        }
        Command::ExportGraph {
            checkpoint,
            data,
            out,
            format,
        } => {
            let s = cmd_export_graph(&checkpoint, data.as_deref(), &out, format)?;
            emit!(
                "wrote {} and {} (within {:.4}, between {:.4})",
                s.adjacency.display(),
                s.embedding.display(),
                s.within_mean,
                s.between_mean
            );
            Ok(())
        }
        Command::Synth {
            out,
            n,
            clusters,
            dims,
            separation,
            noise,
            noise_fraction,
            seed,
            format,
        } => {
            let spec = crate::data::SyntheticSpec {
                n_samples: n,
                n_clusters: clusters,
                view_dims: dims,
                separation,
                noise,
                noise_fraction,
                seed,
            };
            let path = cmd_synth(&spec, &out, format)?;
            emit!("{}", path.display());
            Ok(())
        }
        Command::Stats { data } => {
            emit!("{}", cmd_stats(&data)?);
            Ok(())
        }
    }
}
