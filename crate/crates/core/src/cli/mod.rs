//! Command-line driver behind the `lmg` binary.
//!
//! Every subcommand reads a [`config::RunConfig`], writes its CSV files into
//! `out_dir` together with a [`manifest::Manifest`], and maps failures to
//! exit codes: 0 success, 2 configuration error, 3 solver failure, 4
//! inconclusive run.

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::error::Error;
use config::{parse_config, split_assignment, ConfigError, RunConfig};
use manifest::{ErrorInfo, Manifest, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

/// Environment variable that overrides the `workers` key.
pub const WORKERS_ENV: &str = "LMG_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "lmg", version, about = "Monitored LMG model simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Flat key=value configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Overrides as `--key=value` or `key=value`, applied after the file.
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "KEY=VALUE"
    )]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One SSE (`n` particles) or semiclassical (`n=semiclassical`) run.
    Trajectory(CommonArgs),
    /// Ensemble moments and histograms of m_z.
    Ensemble(CommonArgs),
    /// Density-matrix evolution.
    Lindblad(CommonArgs),
    /// Matched-noise finite-N versus semiclassical comparison.
    Compare(CommonArgs),
    /// Absorption probability on an (h, gamma) grid.
    Sweep(CommonArgs),
    /// Unmonitored orbits and the separatrix.
    Flow(CommonArgs),
    /// Strong-monitoring ensemble against the exact distribution.
    Oracle(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Trajectory(_) => "trajectory",
            Command::Ensemble(_) => "ensemble",
            Command::Lindblad(_) => "lindblad",
            Command::Compare(_) => "compare",
            Command::Sweep(_) => "sweep",
            Command::Flow(_) => "flow",
            Command::Oracle(_) => "oracle",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Trajectory(a)
            | Command::Ensemble(a)
            | Command::Lindblad(a)
            | Command::Compare(a)
            | Command::Sweep(a)
            | Command::Flow(a)
            | Command::Oracle(a) => a,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] Error),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(Error::Inconclusive { .. }) => EXIT_INCONCLUSIVE,
            CliError::Solver(Error::InvalidArgument { .. }) => EXIT_CONFIG,
            CliError::Solver(_) | CliError::Io(_) => EXIT_SOLVER,
        }
    }

    fn info(&self) -> ErrorInfo {
        let (kind, key) = match self {
            CliError::Config(e) => ("config", Some(e.key.clone())),
            CliError::Solver(Error::Inconclusive { .. }) => ("inconclusive", None),
            CliError::Solver(Error::InvalidArgument { name, .. }) => {
                ("config", Some(name.to_string()))
            }
            CliError::Solver(_) => ("solver", None),
            CliError::Io(_) => ("io", None),
        };
        ErrorInfo {
            kind: kind.into(),
            message: self.to_string(),
            key,
        }
    }
}

/// Output directory that remembers every file it hands out.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn create(&mut self, name: &str) -> io::Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    /// Writes a file through `f`, flushing before returning.
    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    ) -> io::Result<()> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}

/// Result of a subcommand body.
#[derive(Default)]
pub struct Outcome {
    pub diagnostics: serde_json::Map<String, serde_json::Value>,
    pub cells: Option<Vec<crate::analysis::phase::PhaseCell>>,
    /// Artifacts were written but a reported estimate is inconclusive.
    pub inconclusive: bool,
}

impl Outcome {
    pub fn diag(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.diagnostics.insert(key.to_string(), value.into());
    }
}

fn worker_count(cfg: &RunConfig) -> Result<usize, ConfigError> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| ConfigError {
            key: WORKERS_ENV.into(),
            reason: format!("cannot parse `{v}`"),
        })?,
        Err(_) => cfg.workers,
    };
    Ok(if n == 0 {
        std::thread::available_parallelism().map_or(1, |p| p.get())
    } else {
        n
    })
}

fn resolve(args: &CommonArgs) -> Result<RunConfig, ConfigError> {
    let overrides = args
        .overrides
        .iter()
        .map(|s| split_assignment(s))
        .collect::<Result<Vec<_>, _>>()?;
    parse_config(args.config.as_deref(), &overrides)
}

fn print_error(subcommand: &str, e: &CliError) {
    let info = e.info();
    let doc = serde_json::json!({ "status": "error", "subcommand": subcommand, "error": info });
    eprintln!("{doc}");
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let name = cli.command.name();
    let cfg = match resolve(cli.command.args()) {
        Ok(c) => c,
        Err(e) => {
            let e = CliError::Config(e);
            print_error(name, &e);
            return e.exit_code();
        }
    };
    let started = Instant::now();
    let mut manifest = Manifest::new(name, &cfg);
    let dir = PathBuf::from(&cfg.out_dir);
    let mut outputs = match Outputs::new(&dir) {
        Ok(o) => o,
        Err(e) => {
            let e = CliError::Io(e);
            print_error(name, &e);
            return e.exit_code();
        }
    };
    let result = worker_count(&cfg)
        .map_err(CliError::from)
        .and_then(|workers| {
            manifest
                .diagnostics
                .insert("workers".into(), workers.into());
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| CliError::Io(io::Error::other(e)))?;
            pool.install(|| commands::dispatch(&cli.command, &cfg, &mut outputs))
        });
    if cfg.plot && result.is_ok() {
        let csvs: Vec<String> = outputs
            .files()
            .iter()
            .filter(|f| f.ends_with(".csv"))
            .cloned()
            .collect();
        if let Err(e) = outputs.write_with("plot.py", |w| commands::write_plot_script(w, &csvs)) {
            eprintln!("warning: plot script not written: {e}");
        }
    }
    let code = match result {
        Ok(outcome) => {
            let workers = manifest.diagnostics.remove("workers");
            manifest.diagnostics = outcome.diagnostics;
            if let Some(w) = workers {
                manifest.diagnostics.insert("workers".into(), w);
            }
            manifest.cells = outcome.cells;
            if outcome.inconclusive {
                manifest.status = Status::Inconclusive;
                EXIT_INCONCLUSIVE
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            manifest.status = Status::Error;
            manifest.error = Some(e.info());
            print_error(name, &e);
            e.exit_code()
        }
    };
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.files = outputs.files().to_vec();
    if let Err(e) = manifest.write(&dir) {
        eprintln!("error: manifest not written: {e}");
        return EXIT_SOLVER;
    }
    code
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
