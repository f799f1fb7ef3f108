mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hdindex::ingest::VecKind;
use hdindex::{FilterMode, SelectionMethod};

/// Build, query and evaluate HD-Index files.
#[derive(Parser, Debug)]
#[command(name = "hdindex", version)]
struct Cli {
    /// Worker threads (0 = all cores; builds default to 1).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an index file from a vecs dataset.
    Build(BuildArgs),
    /// Compute exact k nearest neighbors for a query set.
    Gtruth(GtruthArgs),
    /// Run approximate kNN queries against an index.
    Query(QueryArgs),
    /// Score a results file against ground truth.
    Eval(EvalArgs),
    /// Remove duplicate vectors from a dataset.
    Dedup(DedupArgs),
    /// Split random records off a dataset as queries.
    ReserveQueries(ReserveArgs),
    /// Rank images by Borda count over per-descriptor results.
    Borda(BordaArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Kind {
    F32,
    U8,
    I32,
}

impl From<Kind> for VecKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::F32 => VecKind::F32,
            Kind::U8 => VecKind::U8,
            Kind::I32 => VecKind::I32,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Filter {
    Triangular,
    TriangularPtolemaic,
}

impl From<Filter> for FilterMode {
    fn from(f: Filter) -> Self {
        match f {
            Filter::Triangular => FilterMode::Triangular,
            Filter::TriangularPtolemaic => FilterMode::TriangularPtolemaic,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Selection {
    Random,
    Sss,
    SssDyn,
}

impl From<Selection> for SelectionMethod {
    fn from(s: Selection) -> Self {
        match s {
            Selection::Random => SelectionMethod::Random,
            Selection::Sss => SelectionMethod::Sss,
            Selection::SssDyn => SelectionMethod::SssDyn,
        }
    }
}

/// A vecs file; the element kind defaults to the file extension.
#[derive(Args, Debug, Clone)]
pub struct VecsInput {
    /// Element kind, overriding the extension.
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Dataset (.fvecs, .bvecs or .ivecs).
    #[arg(long)]
    pub data: PathBuf,
    /// Output index file.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub input: VecsInput,
    /// Number of trees.
    #[arg(long)]
    pub tau: Option<usize>,
    /// Hilbert order (bits per dimension).
    #[arg(long, default_value_t = 8)]
    pub omega: u32,
    /// Number of reference objects.
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    /// SSS spread fraction.
    #[arg(long, default_value_t = 0.3)]
    pub f: f64,
    #[arg(long, value_enum, default_value = "sss")]
    pub selection: Selection,
    #[arg(long, default_value_t = 4096)]
    pub page_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Manifest path (default: <out>.manifest.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GtruthArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub input: VecsInput,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub input: VecsInput,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Candidates per tree from the leaf walk.
    #[arg(long)]
    pub alpha: Option<usize>,
    /// Candidates per tree kept by the triangular filter before the
    /// Ptolemaic stage (defaults to alpha).
    #[arg(long)]
    pub beta: Option<usize>,
    /// Candidates per tree passed to re-ranking.
    #[arg(long)]
    pub gamma: Option<usize>,
    #[arg(long, value_enum, default_value = "triangular")]
    pub filter: Filter,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Machine-readable report.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DedupArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub input: VecsInput,
}

#[derive(Args, Debug)]
pub struct ReserveArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub base_out: PathBuf,
    #[arg(long)]
    pub queries_out: PathBuf,
    #[command(flatten)]
    pub input: VecsInput,
}

#[derive(Args, Debug)]
pub struct BordaArgs {
    /// Results file of per-descriptor queries.
    #[arg(long)]
    pub results: PathBuf,
    /// Descriptor-to-image map (text or binary pairs).
    #[arg(long)]
    pub owners: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Number of images to report.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

/// Failure classes, mapped to exit codes 1, 2 and 3.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<hdindex::Error> for Failure {
    fn from(e: hdindex::Error) -> Self {
        Failure::Data(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = std::panic::catch_unwind(|| commands::run(cli.command, cli.threads))
        .unwrap_or_else(|_| Err(Failure::Internal("panic".into())));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("usage error: {m}"),
                Failure::Data(e) => eprintln!("error: {e:#}"),
                Failure::Internal(m) => eprintln!("internal error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
