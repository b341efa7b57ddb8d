//! `vsa-forge`: generate workloads, schedule, simulate, compare
//! configurations, and convert programs between text and binary form.
//!
//! Exit codes: 0 when every oracle check passes, 1 when a simulated result
//! differs from the oracle, 2 for any other error.

mod compare;
mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use vsa_forge::isa::{self, ControlMode, IsaError};
use vsa_forge::sim::{AccConfig, RunReport, SimError};
use vsa_forge::workloads::{Sizes, Workload, WorkloadError, WorkloadKind};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config file {}: {source}", path.display())]
    ConfigFile { path: PathBuf, source: std::io::Error },
    #[error("invalid config file {}: {msg}", path.display())]
    ConfigParse { path: PathBuf, msg: String },
    #[error("unknown configuration `{0}` (expected acc2, acc4, acc8, or a TOML file)")]
    UnknownConfig(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid manifest {}: {msg}", path.display())]
    Manifest { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("{}: {source}", path.display())]
    Asm { path: PathBuf, source: IsaError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_owned(), source }
}

#[derive(Parser)]
#[command(name = "vsa-forge", version, about = "Tiled VSA accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a workload, schedule it, simulate it, and check the oracle.
    Run(RunArgs),
    /// Sweep workloads x configurations x control modes.
    Compare(compare::CompareArgs),
    /// Assemble a text listing into a binary program.
    Asm(AsmArgs),
    /// Disassemble a binary program into a text listing.
    Disasm(AsmArgs),
    /// Compile and schedule a workload without simulating it.
    Gen(GenArgs),
}

/// Everything that determines a run. A manifest alone reproduces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Preset name or TOML path.
    pub config: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiles_mask: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_width: Option<usize>,
    pub workload: WorkloadKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Sizes>,
    pub seed: u64,
    pub dim: usize,
    pub control: ControlMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

pub const DEFAULT_DIM: usize = 2048;
pub const DEFAULT_SEED: u64 = 1;

/// Flags shared by `run` and `gen`. Unset flags fall back to the manifest,
/// then to defaults.
#[derive(Args, Debug, Clone)]
struct WorkloadFlags {
    /// mult, tree, fact, or react.
    #[arg(long)]
    workload: Option<WorkloadKind>,
    /// Preset name (acc2, acc4, acc8, or a file in $VSA_FORGE_CONFIG_DIR) or a TOML path.
    #[arg(long)]
    config: Option<String>,
    /// sopc or mopc.
    #[arg(long)]
    control: Option<ControlMode>,
    /// Active tiles as a bit mask (decimal, 0x.., or 0b..).
    #[arg(long, value_parser = config::parse_mask)]
    tiles_mask: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hypervector dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Overrides the configuration's fold width.
    #[arg(long)]
    fold_width: Option<usize>,
    /// Workload sizes as JSON, e.g. '{"workload":"fact","factors":4,...}'.
    #[arg(long)]
    sizes: Option<String>,
    /// Read settings from a manifest JSON file; flags override it.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    flags: WorkloadFlags,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write a per-cycle CSV trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    flags: WorkloadFlags,
    /// Output file; the listing goes to stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write the binary program format instead of a text listing.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct AsmArgs {
    input: PathBuf,
    /// Output file; defaults to stdout for listings and to INPUT.vsap for binaries.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl WorkloadFlags {
    fn manifest(&self, report: Option<PathBuf>, trace: Option<PathBuf>) -> Result<RunManifest, CliError> {
        let base = match &self.manifest {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(io_err(path))?;
                Some(
                    serde_json::from_str::<RunManifest>(&text)
                        .map_err(|e| CliError::Manifest { path: path.clone(), msg: e.to_string() })?,
                )
            }
            None => None,
        };
        let sizes = match &self.sizes {
            Some(s) => Some(parse_sizes(s)?),
            None => base.as_ref().and_then(|b| b.sizes),
        };
        let workload = self
            .workload
            .or(sizes.map(|s| s.kind()))
            .or(base.as_ref().map(|b| b.workload))
            .ok_or_else(|| CliError::Usage("--workload is required (or --sizes / --manifest)".into()))?;
        if let Some(s) = sizes {
            if s.kind() != workload {
                return Err(CliError::Usage(format!("sizes describe `{}` but the workload is `{workload}`", s.kind())));
            }
        }
        let b = base.as_ref();
        Ok(RunManifest {
            config: self.config.clone().or(b.map(|b| b.config.clone())).unwrap_or_else(|| "acc4".into()),
            tiles_mask: self.tiles_mask.or(b.and_then(|b| b.tiles_mask)),
            fold_width: self.fold_width.or(b.and_then(|b| b.fold_width)),
            workload,
            sizes,
            seed: self.seed.or(b.map(|b| b.seed)).unwrap_or(DEFAULT_SEED),
            dim: self.dim.or(b.map(|b| b.dim)).unwrap_or(DEFAULT_DIM),
            control: self.control.or(b.map(|b| b.control)).unwrap_or(ControlMode::Mopc),
            report: report.or(b.and_then(|b| b.report.clone())),
            trace: trace.or(b.and_then(|b| b.trace.clone())),
        })
    }
}

fn parse_sizes(text: &str) -> Result<Sizes, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Usage(format!("bad --sizes: {e}")))
}

impl RunManifest {
    pub fn accelerator(&self) -> Result<AccConfig, CliError> {
        config::apply(config::resolve(&self.config)?, self.tiles_mask, self.fold_width)
    }

    pub fn workload(&self, cfg: &AccConfig) -> Result<Workload, CliError> {
        let sizes = self.sizes.unwrap_or_else(|| Sizes::default_for(self.workload));
        Ok(Workload::with_sizes(sizes, self.seed, self.dim, cfg.fold_width)?)
    }
}

/// The JSON written by `run`.
#[derive(Serialize)]
struct RunOutput<'a> {
    manifest: &'a RunManifest,
    workload: WorkloadKind,
    oracle_match: bool,
    /// The oracle's own accuracy on the synthetic task's ground truth.
    oracle_accuracy: f64,
    #[serde(flatten)]
    report: &'a RunReport,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn cmd_run(args: RunArgs) -> Result<bool, CliError> {
    let m = args.flags.manifest(args.report, args.trace)?;
    let cfg = m.accelerator()?;
    let w = m.workload(&cfg)?;
    let mut machine = w.machine(&cfg, m.control)?;
    let report = match &m.trace {
        Some(path) => {
            let mut out = create(path)?;
            let r = machine.run_traced(&mut out)?;
            out.flush().map_err(io_err(path))?;
            r
        }
        None => machine.run()?,
    };
    let oracle_match = report.results == w.expected;
    let out = RunOutput { manifest: &m, workload: w.kind(), oracle_match, oracle_accuracy: w.oracle_accuracy(), report: &report };
    let json = serde_json::to_string_pretty(&out).expect("report serializes") + "\n";
    match &m.report {
        Some(path) => {
            std::fs::write(path, json).map_err(io_err(path))?;
            eprintln!(
                "{} on {} ({}): {} cycles, {:.1} energy, oracle match {}",
                w.kind(),
                cfg.name,
                m.control,
                report.total_cycles,
                report.energy_total,
                oracle_match
            );
        }
        None => print!("{json}"),
    }
    if !oracle_match {
        eprintln!("error: simulated results differ from the oracle");
    }
    Ok(oracle_match)
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let m = args.flags.manifest(None, None)?;
    let cfg = m.accelerator()?;
    let w = m.workload(&cfg)?;
    let (program, _) = w.program(&cfg, m.control)?;
    let ops = program.ops.len();
    let bytes = if args.binary { isa::to_bytes(&program) } else { isa::disassemble(&program).into_bytes() };
    match &args.out {
        Some(path) => std::fs::write(path, bytes).map_err(io_err(path))?,
        None if args.binary => return Err(CliError::Usage("--binary needs --out".into())),
        None => std::io::stdout().write_all(&bytes).map_err(io_err(Path::new("<stdout>")))?,
    }
    eprintln!("{} on {} ({}): {ops} primitive ops, {} words, expected digest {}", w.kind(), cfg.name, m.control, program.len(), w.expected.digest());
    Ok(())
}

fn cmd_asm(args: AsmArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.input).map_err(io_err(&args.input))?;
    let program = isa::assemble(&text).map_err(|source| CliError::Asm { path: args.input.clone(), source })?;
    let out = args.out.unwrap_or_else(|| args.input.with_extension("vsap"));
    std::fs::write(&out, isa::to_bytes(&program)).map_err(io_err(&out))?;
    eprintln!("{} words -> {}", program.len(), out.display());
    Ok(())
}

fn cmd_disasm(args: AsmArgs) -> Result<(), CliError> {
    let bytes = std::fs::read(&args.input).map_err(io_err(&args.input))?;
    let program = isa::from_bytes(&bytes).map_err(|source| CliError::Asm { path: args.input.clone(), source })?;
    let text = isa::disassemble(&program);
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(io_err(path)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Compare(a) => compare::cmd_compare(a),
        Cmd::Asm(a) => cmd_asm(a).map(|_| true),
        Cmd::Disasm(a) => cmd_disasm(a).map(|_| true),
        Cmd::Gen(a) => cmd_gen(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
