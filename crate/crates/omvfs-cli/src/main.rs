//! Command-line driver: streaming feature selection, evaluation sweeps,
//! synthetic data generation, the drift protocol, and scaling
//! benchmarks.
//!
//! Exit codes: 0 on success, 2 on usage or I/O errors, 3 on numerical
//! divergence. Progress goes to standard error; standard output carries
//! machine-readable summaries only.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use omvfs::driver;
use omvfs::ingest::{self, NormalizeMode};
use omvfs::synth::{self, PlantSpec};
use omvfs::types::{BandwidthPolicy, HyperParams};
use omvfs::Error;

#[derive(Parser)]
#[command(name = "omvfs", version, about = "Online multi-view feature selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream a manifest through the solver and write feature rankings.
    Select(SelectArgs),
    /// Score rankings by clustering on the selected features.
    Eval(EvalArgs),
    /// Generate a synthetic multi-view stream with planted structure.
    Synth(SynthArgs),
    /// Compare adaptive and static feature subsets across a drifting
    /// stream.
    Drift(DriftArgs),
    /// Time the core loop over a grid of stream sizes and dimensions.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Cluster count K.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Rows per chunk (m).
    #[arg(long = "chunk-size", default_value_t = 200)]
    chunk_size: usize,
    /// Buffered chunks (s).
    #[arg(long = "buffer", default_value_t = 2)]
    buffer: usize,
    /// Graph weights, one per view or a single broadcast value.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    alpha: Vec<f64>,
    /// Sparsity weights, one per view or a single broadcast value.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    beta: Vec<f64>,
    /// Orthogonality penalty.
    #[arg(long, default_value_t = 1e7)]
    gamma: f64,
    /// Fixed kernel bandwidth; mutually exclusive with --sigma-median.
    #[arg(long, conflicts_with = "sigma_median")]
    sigma: Option<f64>,
    /// Estimate the bandwidth from the first chunk (default policy).
    #[arg(long = "sigma-median", default_value_t = false)]
    sigma_median: bool,
    /// Relative objective tolerance for the inner loop.
    #[arg(long = "tol", default_value_t = 1e-4)]
    tol: f64,
    /// Cap on alternating iterations per chunk.
    #[arg(long = "max-iters", default_value_t = 200)]
    max_iters: usize,
    /// Chunk normalization: none, row-l2 or column-l2-in-chunk.
    #[arg(long = "norm", default_value = "row-l2")]
    norm: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// JSON file whose fields override the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Optional overrides loaded from --config.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    k: Option<usize>,
    chunk_size: Option<usize>,
    buffer: Option<usize>,
    alpha: Option<Vec<f64>>,
    beta: Option<Vec<f64>>,
    gamma: Option<f64>,
    sigma: Option<f64>,
    sigma_median: Option<bool>,
    tol: Option<f64>,
    max_iters: Option<usize>,
    norm: Option<String>,
    seed: Option<u64>,
}

impl ParamArgs {
    fn resolve(&self, n_views: usize) -> Result<(HyperParams, NormalizeMode), Error> {
        let mut a = self.clone();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let cfg: ConfigFile = serde_json::from_str(&text)
                .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
            if let Some(v) = cfg.k {
                a.k = v;
            }
            if let Some(v) = cfg.chunk_size {
                a.chunk_size = v;
            }
            if let Some(v) = cfg.buffer {
                a.buffer = v;
            }
            if let Some(v) = cfg.alpha {
                a.alpha = v;
            }
            if let Some(v) = cfg.beta {
                a.beta = v;
            }
            if let Some(v) = cfg.gamma {
                a.gamma = v;
            }
            if let Some(v) = cfg.sigma {
                a.sigma = Some(v);
            }
            if let Some(v) = cfg.sigma_median {
                a.sigma_median = v;
                if v {
                    a.sigma = None;
                }
            }
            if let Some(v) = cfg.tol {
                a.tol = v;
            }
            if let Some(v) = cfg.max_iters {
                a.max_iters = v;
            }
            if let Some(v) = cfg.norm {
                a.norm = v;
            }
            if let Some(v) = cfg.seed {
                a.seed = v;
            }
        }
        let broadcast = |values: &[f64]| -> Result<Vec<f64>, Error> {
            if values.len() == 1 {
                Ok(vec![values[0]; n_views])
            } else if values.len() == n_views {
                Ok(values.to_vec())
            } else {
                Err(Error::InvalidParam(format!(
                    "{} weights for {} views",
                    values.len(),
                    n_views
                )))
            }
        };
        let params = HyperParams {
            k: a.k,
            chunk_size: a.chunk_size,
            buffer_chunks: a.buffer,
            alpha: broadcast(&a.alpha)?,
            beta: broadcast(&a.beta)?,
            gamma: a.gamma,
            kernel_bandwidth: match a.sigma {
                Some(s) => BandwidthPolicy::Fixed(s),
                None => BandwidthPolicy::MedianHeuristic,
            },
            inner_tol: a.tol,
            max_inner_iters: a.max_iters,
            norm_eps: 1e-10,
            seed: a.seed,
        };
        Ok((params, NormalizeMode::parse(&a.norm)?))
    }
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding ranking_view<id>.json files.
    #[arg(long)]
    rankings: PathBuf,
    /// Selected-feature counts, e.g. 100,200,300.
    #[arg(long = "p", value_delimiter = ',', required = true)]
    p_list: Vec<usize>,
    /// Cluster count for evaluation; defaults to the distinct label
    /// count.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Per-view feature dimensions, e.g. 200,200.
    #[arg(long, value_delimiter = ',', default_value = "200,200")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Planted informative features per view.
    #[arg(long, value_delimiter = ',', default_value = "20,20")]
    informative: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    /// Instances between dominant-class switches; 0 = stationary.
    #[arg(long = "drift-period", default_value_t = 0)]
    drift_period: usize,
    #[arg(long = "dominant-share", default_value_t = 0.7)]
    dominant_share: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct DriftArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Instances per evaluation window.
    #[arg(long, default_value_t = 1000)]
    window: usize,
    /// Features kept by both tracks.
    #[arg(long = "static-p", default_value_t = 200)]
    static_p: usize,
    /// Leading instances used to train the frozen ranking.
    #[arg(long = "static-train-rows", default_value_t = 3000)]
    static_train_rows: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Instance counts to time, e.g. 1000,2000.
    #[arg(long = "n-grid", value_delimiter = ',', default_value = "1000,2000")]
    n_grid: Vec<usize>,
    /// Per-view dimensions to time, e.g. 400,800.
    #[arg(long = "d-grid", value_delimiter = ',', default_value = "400,800")]
    d_grid: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Select(args) => {
            let desc = ingest::read_manifest(&args.manifest)?;
            let (params, norm) = args.params.resolve(desc.views.len())?;
            let summary = driver::run_select(&args.manifest, params, norm, &args.out)?;
            println!("{}", serde_json::to_string(&summary).expect("summary"));
        }
        Command::Eval(args) => {
            let summary = driver::run_eval(
                &args.manifest,
                &args.rankings,
                &args.p_list,
                args.k,
                args.seed,
                &args.out,
            )?;
            for row in &summary.rows {
                match (row.acc, row.nmi) {
                    (Some(acc), Some(nmi)) => println!("p={} ACC={acc:.4} NMI={nmi:.4}", row.p),
                    _ => println!("p={} error: {}", row.p, row.note),
                }
            }
        }
        Command::Synth(args) => {
            let spec = PlantSpec {
                n: args.n,
                dims: args.dims,
                k: args.k,
                informative: args.informative,
                noise_scale: args.noise,
                drift_period: args.drift_period,
                dominant_share: args.dominant_share,
                seed: args.seed,
            };
            let (manifest, data) = synth::generate(&spec, &args.out)?;
            println!(
                "{}",
                serde_json::to_string(&serde_json::json!({
                    "manifest": manifest,
                    "rows": data.labels.len(),
                    "regimes": data.regimes.len(),
                }))
                .expect("summary")
            );
        }
        Command::Drift(args) => {
            let desc = ingest::read_manifest(&args.manifest)?;
            let (params, norm) = args.params.resolve(desc.views.len())?;
            let summary = driver::run_drift(
                &args.manifest,
                params,
                norm,
                args.window,
                args.static_p,
                args.static_train_rows,
                Some(&args.out),
            )?;
            println!(
                "{}",
                serde_json::to_string(&serde_json::json!({
                    "windows": summary.rows.len() / 2,
                    "final_adaptive_nmi": summary.final_adaptive_nmi,
                    "final_static_nmi": summary.final_static_nmi,
                }))
                .expect("summary")
            );
        }
        Command::Bench(args) => {
            let (params, _) = args.params.resolve(2)?;
            let rows = driver::run_bench(&args.n_grid, &args.d_grid, &params, params.seed)?;
            driver::write_bench_csv(&rows, &args.out)?;
            for r in &rows {
                println!("N={} D={} seconds={:.3}", r.n, r.d, r.seconds);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Divergence(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
