//! `ptlsi`: run selective inference on CSV data, estimate error rates on
//! synthetic suites, and collect timing data.
//!
//! Exit codes: 0 success, 1 invalid input or I/O failure, 2 numeric
//! degeneracy (singular systems, non-convergence, vanishing tail mass).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod plot;
mod run;

#[derive(Parser)]
#[command(
    name = "ptlsi",
    version,
    about = "Selective inference for transfer-learning lasso pipelines",
    propagate_version = true
)]
struct Cli {
    /// Cap the worker thread count (overrides the PTLSI_THREADS variable).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run inference on CSV data and report per-feature p-values as JSON.
    Infer(InferArgs),
    /// Estimate false positive rates on synthetic null data.
    Fpr(RateArgs),
    /// Estimate true positive rates on synthetic signal data.
    Tpr(RateArgs),
    /// Estimate null error rates under several noise families.
    Noise(NoiseArgs),
    /// Collect wall-time and scan-size data across target sample sizes.
    Bench(BenchArgs),
    /// Parse and validate a dataset without running inference.
    IngestCheck(IngestCheckArgs),
}

/// Shape of a synthetic configuration (defaults come from the preset).
#[derive(Args, Clone)]
struct ShapeArgs {
    /// Size preset: desk (small, CI-friendly) or paper (full size).
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Feature count.
    #[arg(long)]
    p: Option<usize>,
    /// Target sample size.
    #[arg(long)]
    n_t: Option<usize>,
    /// Per-source sample size.
    #[arg(long)]
    n_s: Option<usize>,
    /// Number of informative sources.
    #[arg(long)]
    informative: Option<usize>,
    /// Number of uninformative sources.
    #[arg(long)]
    uninformative: Option<usize>,
    /// Signal level of the coefficient patterns.
    #[arg(long)]
    gamma: Option<f64>,
    /// Source-coefficient perturbation scale.
    #[arg(long)]
    upsilon: Option<f64>,
    /// Noise family: gaussian | laplace | skewnormal10 | t20.
    #[arg(long, default_value = "gaussian")]
    noise: String,
}

#[derive(Args)]
struct RateArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Pipeline: transfusion | oracle-translasso.
    #[arg(long, default_value = "transfusion")]
    pipeline: String,
    /// Scale multiplier applied to the default penalty levels.
    #[arg(long)]
    lambda_scale: Option<f64>,
    /// Absolute co-training penalty (overrides the scaled default).
    #[arg(long)]
    lambda_stacked: Option<f64>,
    /// Absolute pooled-stage penalty for oracle-translasso.
    #[arg(long)]
    lambda_pooled: Option<f64>,
    /// Absolute debias-stage penalty (overrides the scaled default).
    #[arg(long)]
    lambda_debias: Option<f64>,
    /// Monte-Carlo trials per setting.
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Rejection level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Master seed; trial generators are split from it.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Method to report: selective | oc | naive | bonferroni | datasplit |
    /// all.
    #[arg(long, default_value = "selective")]
    method: String,
    /// Sweep the target sample size over comma-separated values, one suite
    /// per value.
    #[arg(long)]
    sweep_nt: Option<String>,
    /// Results file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Results format: csv | json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Write long-format plot data here, plus a line chart beside it
    /// (.svg).
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Manifest path (defaults next to --out).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Print progress to stderr.
    #[arg(long)]
    progress: bool,
}

#[derive(Args)]
struct NoiseArgs {
    #[command(flatten)]
    rate: RateArgs,
    /// Comma-separated families to run (default: all four).
    #[arg(long)]
    families: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Pipeline: transfusion | oracle-translasso.
    #[arg(long, default_value = "transfusion")]
    pipeline: String,
    /// Scale multiplier applied to the default penalty levels.
    #[arg(long)]
    lambda_scale: Option<f64>,
    /// Absolute co-training penalty (overrides the scaled default).
    #[arg(long)]
    lambda_stacked: Option<f64>,
    /// Absolute pooled-stage penalty for oracle-translasso.
    #[arg(long)]
    lambda_pooled: Option<f64>,
    /// Absolute debias-stage penalty (overrides the scaled default).
    #[arg(long)]
    lambda_debias: Option<f64>,
    /// Trials per target size.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Master seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Target sample sizes to time.
    #[arg(long, default_value = "30,40,50")]
    sweep_nt: String,
    /// Results file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Results format: csv (per-trial rows) | json (rows plus summary).
    #[arg(long, default_value = "csv")]
    format: String,
    /// Manifest path (defaults next to --out).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Print progress to stderr.
    #[arg(long)]
    progress: bool,
}

/// Flags describing how to read a dataset from CSV.
#[derive(Args, Clone)]
struct IngestArgs {
    /// Target CSV file (the whole dataset when --domain-column is given).
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated source CSV files (file-per-task layout).
    #[arg(long)]
    sources: Option<String>,
    /// Response column name.
    #[arg(long, default_value = "y")]
    response: String,
    /// Column holding the task label of each row (single-file layout).
    #[arg(long)]
    domain_column: Option<String>,
    /// Task label of the target rows (single-file layout).
    #[arg(long)]
    target_value: Option<String>,
    /// Rows to keep from the target task (default: all).
    #[arg(long)]
    target_rows: Option<usize>,
    /// Rows to keep from each source task (default: the smallest source).
    #[arg(long)]
    source_rows: Option<usize>,
    /// Subsampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep raw column scales (default rescales design columns to unit
    /// pooled RMS).
    #[arg(long)]
    no_standardize: bool,
    /// Known noise variance (estimated from target residuals when
    /// omitted).
    #[arg(long)]
    sigma2: Option<f64>,
}

#[derive(Args)]
struct IngestCheckArgs {
    #[command(flatten)]
    ingest: IngestArgs,
    /// Report file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest path (defaults next to --out).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    ingest: IngestArgs,
    /// Pipeline: transfusion | oracle-translasso.
    #[arg(long, default_value = "transfusion")]
    pipeline: String,
    /// Informative source indices for oracle-translasso (e.g. 0,1), in
    /// source order.
    #[arg(long)]
    informative: Option<String>,
    /// Rejection level recorded in the report.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Conditioning: full (scan the whole line) | oc (observed segment
    /// only).
    #[arg(long, default_value = "full")]
    mode: String,
    /// In full mode, also report the over-conditioned p-value.
    #[arg(long)]
    compute_oc: bool,
    /// Skip the Bonferroni baseline.
    #[arg(long)]
    no_bonferroni: bool,
    /// Run the sample-splitting baseline with this shuffle seed.
    #[arg(long)]
    datasplit_seed: Option<u64>,
    /// Scale multiplier applied to the default penalty levels.
    #[arg(long)]
    lambda_scale: Option<f64>,
    /// Explicit first-stage penalty level (stacked pipeline).
    #[arg(long)]
    lambda_stacked: Option<f64>,
    /// Explicit pooled-stage penalty level (oracle-translasso).
    #[arg(long)]
    lambda_pooled: Option<f64>,
    /// Explicit debias-stage penalty level.
    #[arg(long)]
    lambda_debias: Option<f64>,
    /// Coordinate-descent sweep cap.
    #[arg(long)]
    solver_max_sweeps: Option<usize>,
    /// Results file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest path (defaults next to --out).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn setup_threads(flag: Option<usize>) {
    let from_env = std::env::var("PTLSI_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    if let Some(n) = flag.filter(|&n| n > 0).or(from_env) {
        // Ignore the error if a pool already exists (e.g. under tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    setup_threads(cli.threads);
    if let Err(e) = run::dispatch(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(if e.is_numeric() { 2 } else { 1 });
    }
}
