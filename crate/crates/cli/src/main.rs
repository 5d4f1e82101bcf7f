use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

mod commands;
mod error;
mod input;
mod suite;

use commands::Outcome;
use error::{CliError, CliResult};

/// Numerics on step-2 Carnot groups and their intrinsic graphs.
#[derive(Debug, Parser)]
#[command(name = "carnot", version)]
pub struct Cli {
    /// Seed for every sampled quantity; echoed into reports
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (all cores when omitted)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the report (CSV for characteristics) to this file
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print JSON instead of plain text
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check or describe a group definition
    #[command(subcommand)]
    Group(GroupAction),
    /// Intrinsic gradient D^phi phi at a base point
    Gradient(commands::GradientArgs),
    /// Weak-form residual of D^phi phi = w against a bump
    Residual(commands::ResidualArgs),
    /// Sampled intrinsic Lipschitz constant
    Lipschitz(commands::LipschitzArgs),
    /// Integrate a characteristic curve of D^phi_j
    Characteristics(commands::CharacteristicsArgs),
    /// Check phi against w along characteristics
    Broadstar(commands::BroadstarArgs),
    /// Area integral of the graph with an observed convergence order
    Area(commands::AreaArgs),
    /// Smooth approximations phi_alpha from the mollified subgraph
    Mollify(commands::MollifyArgs),
    /// Cone containment sweep for the opening derived from k
    Cone(commands::ConeArgs),
    /// Run a list of scenarios and compare against expectations
    Suite { config: PathBuf },
}

#[derive(Debug, Clone, Subcommand)]
pub enum GroupAction {
    Validate { file: String },
    Info { file: String },
}

/// Result of one subcommand, plus a partial outcome when a curve was cut short.
pub struct Run {
    pub result: CliResult<Outcome>,
    pub partial: Option<Outcome>,
}

impl From<CliResult<Outcome>> for Run {
    fn from(result: CliResult<Outcome>) -> Self {
        Run { result, partial: None }
    }
}

pub fn run_command(cmd: &Command, seed: u64) -> Run {
    use commands::*;
    match cmd {
        Command::Group(GroupAction::Validate { file }) => group_validate(file, seed).into(),
        Command::Group(GroupAction::Info { file }) => group_info(file, seed).into(),
        Command::Gradient(a) => gradient(a, seed).into(),
        Command::Residual(a) => residual(a, seed).into(),
        Command::Lipschitz(a) => lipschitz(a, seed).into(),
        Command::Characteristics(a) => {
            let (result, partial) = characteristics(a, seed);
            Run { result, partial }
        }
        Command::Broadstar(a) => broadstar(a, seed).into(),
        Command::Area(a) => area(a, seed).into(),
        Command::Mollify(a) => mollify(a, seed).into(),
        Command::Cone(a) => cone(a, seed).into(),
        Command::Suite { .. } => Err(CliError::Usage("suites cannot be nested".into())).into(),
    }
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

/// `key = value` lines; nested values stay compact JSON.
fn plain(v: &Value) -> String {
    match v {
        Value::Object(map) => map
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => format!("{k} = {s}\n"),
                other => format!("{k} = {other}\n"),
            })
            .collect(),
        other => format!("{other}\n"),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let wrap = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(contents.as_bytes()).map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

/// Where the main artefact of an outcome goes.
fn emit(outcome: &Outcome, out: Option<&Path>, json: bool) -> CliResult<()> {
    match (&outcome.csv, out) {
        (Some(csv), Some(path)) => {
            write_atomic(path, csv)?;
            print!("{}", if json { pretty(&outcome.report) } else { plain(&outcome.report) });
        }
        (Some(csv), None) => print!("{csv}"),
        (None, path) => {
            if let Some(path) = path {
                write_atomic(path, &pretty(&outcome.report))?;
            }
            print!("{}", if json { pretty(&outcome.report) } else { plain(&outcome.report) });
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot set up {t} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let code = match &cli.command {
        Command::Suite { config } => suite::run_suite(config, &cli),
        cmd => {
            let run = run_command(cmd, cli.seed);
            let out = cli.out.as_deref();
            match run.result.and_then(|o| emit(&o, out, cli.json)) {
                Ok(()) => 0,
                Err(e) => {
                    if let Some(partial) = &run.partial {
                        if let Err(w) = emit(partial, out, cli.json) {
                            eprintln!("error: {w}");
                        }
                    }
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
