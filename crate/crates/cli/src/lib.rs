//! Command-line pipeline for regional white-matter lesion load analysis.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 registration
//! did not converge, 4 some subjects failed under `--keep-going`.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod svg;
pub mod tables;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "regionwise", version, about = "Regional white-matter lesion load toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a 12-dof affine transform aligning one image to another
    Register(RegisterArgs),
    /// Turn lesion probability maps into per-region lesion volumes
    Quantify(QuantifyArgs),
    /// Cross-validated diagnosis classification from lesion and brain volumes
    Cohort(CohortArgs),
    /// Agreement between quantified and reference lesion volumes
    BlandAltman(BlandAltmanArgs),
    /// Histograms of global lesion load
    Hist(HistArgs),
    /// Generate a synthetic cohort with planted lesions
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub moving: PathBuf,
    #[arg(long)]
    pub fixed: PathBuf,
    /// Output 4x4 transform (moving world to fixed world)
    #[arg(long)]
    pub out_transform: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Iteration cap per pyramid level
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
}

#[derive(Debug, Args)]
pub struct QuantifyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_report: PathBuf,
    /// Lesion probability cutoff; voxels at or above it are lesion
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Process every subject even if some fail
    #[arg(long)]
    pub keep_going: bool,
    /// Worker threads (default: number of processors)
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CohortArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// all, ad_cn, ad_mci or mci_cn
    #[arg(long, default_value = "all")]
    pub task: String,
    /// all, global, regional, brain or combined
    #[arg(long, default_value = "all")]
    pub features: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, env = "REGIONWISE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BlandAltmanArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long)]
    pub out_svg: PathBuf,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    /// One or more region reports; each becomes a series
    #[arg(long = "report", alias = "reports", required = true, num_args = 1..)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub bin_width: f64,
    #[arg(long)]
    pub out_svg: PathBuf,
    /// Bin counts (default: next to the SVG with a .csv extension)
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON cohort spec; built-in defaults when omitted
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overrides the seed in the spec
    #[arg(long, env = "REGIONWISE_SEED")]
    pub seed: Option<u64>,
}

/// Parse `args` (program name first) and run the command. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Register(a) => commands::register::run(&a),
        Command::Quantify(a) => commands::quantify::run(&a),
        Command::Cohort(a) => commands::cohort::run(&a),
        Command::BlandAltman(a) => commands::agreement::run(&a),
        Command::Hist(a) => commands::hist::run(&a),
        Command::Synth(a) => commands::synth::run(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

/// I/O failures anywhere in the error chain map to 1, everything else to 2.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    if e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) {
        EXIT_IO
    } else {
        EXIT_INPUT
    }
}
