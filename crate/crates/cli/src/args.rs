use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "spttn",
    version,
    about = "Plan, explain and run sparse tensor times tensor network kernels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for the best contraction path and loop order.
    Optimize(KernelArgs),
    /// Print the chosen loop nest as pseudo-code.
    Explain(KernelArgs),
    /// Execute the chosen loop nest.
    Run(RunArgs),
    /// Execute and compare against the unfactorized reference.
    Verify(VerifyArgs),
    /// Time the best model-ranked candidates.
    Bench(BenchArgs),
    /// Write a random sparse tensor in .tns format.
    Gen(GenArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Kernel, e.g. "T[i,j,k]*B[j,a]*C[k,a]->A[i,a]".
    #[arg(long)]
    pub kernel: String,

    /// Index sizes, e.g. "i=8,j=8,a=4".
    #[arg(long)]
    pub dims: Option<String>,

    /// Sparse input in .tns format; random when absent.
    #[arg(long)]
    pub tns: Option<PathBuf>,

    /// Dense input file, as NAME=path.tns; random when absent.
    #[arg(long = "factor", value_name = "NAME=PATH")]
    pub factors: Vec<String>,

    /// max-buf-dim | max-buf-size | cache:D=<d> | dense-loops:bound=<b>
    #[arg(long, default_value = "dense-loops:bound=2")]
    pub cost: String,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Nonzero fraction of the random sparse input.
    #[arg(long, default_value_t = 0.1)]
    pub density: f64,

    /// Search all contraction paths, not only those of minimum loop depth.
    #[arg(long)]
    pub no_depth_filter: bool,

    #[arg(long)]
    pub buffer_limit_bytes: Option<usize>,

    /// Fixed contraction tree, e.g. "((T*V)*U)".
    #[arg(long)]
    pub path: Option<String>,

    /// Fixed per-term loop orders, e.g. "i,j,s,k;i,j,s,r" (needs --path).
    #[arg(long)]
    pub order: Option<String>,

    /// CSF level order of the sparse tensor, e.g. "k,i,j".
    #[arg(long)]
    pub csf_order: Option<String>,

    /// Drop explicitly stored zeros from the sparse input.
    #[arg(long)]
    pub prune_zeros: bool,

    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    /// Also write the JSON report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,

    /// Output tensor file (.tns).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,

    /// Allowed max |fused - reference| relative to 1 + max |reference|.
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,

    #[arg(long, default_value_t = 4)]
    pub top_k: usize,

    #[arg(long, default_value_t = 3)]
    pub repeats: usize,

    /// Orders to time on --path instead of the model ranking (repeatable).
    #[arg(long = "compare", value_name = "ORDER")]
    pub compare: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Mode sizes, e.g. "8,8,8".
    #[arg(long)]
    pub shape: String,

    #[arg(long, default_value_t = 0.1)]
    pub density: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
