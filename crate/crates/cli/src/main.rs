//! `folio` command-line front end.
//!
//! Exit codes: 0 success, 2 a check failed (reports are still written),
//! 1 structural or I/O error, 64 usage error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "folio", version, about = "Finite metric measure spaces, quotients and flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Output {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct GraphArgs {
    /// Kernel bandwidth `t`; without it a chain graph is built from the
    /// space's 1-D or circle structure.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Kernel normalization: quadrature, sampled or raw.
    #[arg(long, default_value = "quadrature")]
    scaling: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a space from a generator spec.
    Generate {
        /// Generator spec JSON.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Check the metric measure space axioms.
    Validate {
        #[arg(long)]
        space: PathBuf,
        /// Accept triangle defects up to this size.
        #[arg(long)]
        tol: Option<f64>,
        /// Optional output directory for `validation.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal transport between two measures.
    Ot {
        #[arg(long)]
        space: PathBuf,
        /// Source measure, a JSON array.
        #[arg(long)]
        mu: PathBuf,
        /// Target measure, a JSON array.
        #[arg(long)]
        nu: PathBuf,
        /// Cost exponent.
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value = "network-simplex")]
        solver: String,
        #[command(flatten)]
        output: Output,
    },
    /// Build a quotient and certify the foliation.
    Foliate {
        #[arg(long)]
        space: PathBuf,
        /// Partition JSON; alternatively `--bands` for a sphere mesh.
        #[arg(long, conflicts_with = "bands")]
        partition: Option<PathBuf>,
        /// Distance bands around the base point of a sphere mesh.
        #[arg(long)]
        bands: Option<usize>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Class-pair sweep: auto or exhaustive.
        #[arg(long, default_value = "auto")]
        sweep: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Laplacian eigenvalues.
    Spectrum {
        #[arg(long)]
        space: PathBuf,
        #[command(flatten)]
        graph: GraphArgs,
        /// Number of smallest eigenvalues; all when omitted.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = "dense")]
        solver: String,
        #[command(flatten)]
        output: Output,
    },
    /// The q-spectral gap.
    Gap {
        #[arg(long)]
        space: PathBuf,
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Heat flow with the entropy trace and the dissipation audit.
    Heat {
        #[arg(long)]
        space: PathBuf,
        #[command(flatten)]
        graph: GraphArgs,
        /// Initial density JSON; a seeded smooth density otherwise.
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.0)]
        t_min: f64,
        #[arg(long, default_value_t = 0.1)]
        t_max: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value = "spectral")]
        propagator: String,
        /// Largest accepted dissipation mismatch.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// K-convexity audit of the entropy on a 1-D grid.
    Audit {
        #[arg(long)]
        space: PathBuf,
        /// Curvature bound K.
        #[arg(long, default_value_t = 0.0)]
        k: f64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pass threshold in units of the grid step.
        #[arg(long, default_value_t = 5.0)]
        slack: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Run a named experiment.
    Experiment {
        /// Experiment name; may come from the config instead.
        name: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
        /// Comma-separated dimensions (sphere-collapse).
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        /// Grid size (sphere-collapse).
        #[arg(long = "B")]
        b: Option<usize>,
        /// Extra parameters as KEY=JSON.
        #[arg(long = "param")]
        params: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), commands::CliError> {
    let Ok(raw) = std::env::var("FOLIO_THREADS") else {
        return Ok(());
    };
    let threads: usize =
        raw.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
            commands::CliError::Usage(format!("FOLIO_THREADS must be a positive integer, got {raw:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| commands::CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = init_threads().and_then(|()| commands::run(cli.command));
    match outcome {
        Ok(commands::Status::Passed) => ExitCode::SUCCESS,
        Ok(commands::Status::Failed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("folio: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
