use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pdilqr::lqr::LqrBackend;
use pdilqr::nlp::HessianMode;
use pdilqr::sqp::PenaltyMode;

#[derive(Debug, Parser)]
#[command(name = "pdilqr", version, about = "Primal-dual iLQR solver harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a built-in benchmark or a problem spec file and print the iteration table.
    Solve(SolveArgs),
    /// Solve a standalone LQR problem given as JSON.
    Lqr(LqrArgs),
    /// Cross-check the LQR back-ends on random instances.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Registered problem name with default settings.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub problem: Option<String>,
    /// Problem spec JSON: `name` plus any fields to override.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Solver config JSON; flags below override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long, value_enum)]
    pub hessian: Option<HessianArg>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol_step: Option<f64>,
    #[arg(long)]
    pub tol_feas: Option<f64>,
    #[arg(long, value_enum)]
    pub penalty_mode: Option<PenaltyArg>,
    /// Full trace output; `.csv` selects CSV, anything else JSON.
    #[arg(long, value_name = "FILE")]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LqrArgs {
    /// LQR problem JSON.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "sequential")]
    pub backend: BackendArg,
    /// Solution output; standard output when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub num_instances: usize,
    /// Replace every pinned tolerance with this relative error bound.
    #[arg(long)]
    pub max_rel_err: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Sequential,
    Parallel,
}

impl From<BackendArg> for LqrBackend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Sequential => LqrBackend::Sequential,
            BackendArg::Parallel => LqrBackend::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HessianArg {
    #[value(name = "gauss_newton", alias = "gauss-newton")]
    GaussNewton,
    Exact,
}

impl From<HessianArg> for HessianMode {
    fn from(h: HessianArg) -> Self {
        match h {
            HessianArg::GaussNewton => HessianMode::GaussNewton,
            HessianArg::Exact => HessianMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    Recompute,
    Npsqp,
}

impl From<PenaltyArg> for PenaltyMode {
    fn from(p: PenaltyArg) -> Self {
        match p {
            PenaltyArg::Recompute => PenaltyMode::Recompute,
            PenaltyArg::Npsqp => PenaltyMode::NpsqpMonotone,
        }
    }
}
