//! `fkverify` command line: runs verification pipelines from a TOML config,
//! lists the built-in problems, fits calibration constants and turns reports
//! into plot tables.
//!
//! Exit codes: 0 when every requested check passes, 1 for failed checks or
//! missing reports, 2 for config and validation errors, 3 for internal
//! errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod error;
pub mod expr;
pub mod plots;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use fkverify::analysis::{calibrate_constants, CalibrationFile};
use fkverify::problem::{builtin, catalog};

pub use checks::{run_checks, Summary};
pub use config::{Check, RunConfig};
pub use error::{CliError, Result};
pub use plots::emit_plots;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "FKVERIFY_OUT";
pub const DEFAULT_OUT: &str = "fkverify-out";
pub const DEFAULT_FAMILY: &str = "heat,discount,transport-degenerate";

#[derive(Debug, Parser)]
#[command(name = "fkverify", version, about = "Cross-verifies FBSDE and backward PDE solvers")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true, env = OUT_ENV)]
    pub out: Option<PathBuf>,
    /// Root seed; overrides `mc.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the path loops.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the checks requested by a config.
    Run {
        /// Config path; same as `--config`.
        path: Option<PathBuf>,
    },
    /// List the built-in problems and their oracles.
    ListProblems,
    /// Write gnuplot tables for the reports in a run directory.
    EmitPlots {
        /// Run directory; defaults to `--out`.
        dir: Option<PathBuf>,
    },
    /// Fit the estimate constants on a family of built-in problems.
    Calibrate {
        /// Comma-separated built-in names.
        #[arg(long, default_value = DEFAULT_FAMILY)]
        family: String,
    },
}

/// Table of the built-in problems, sorted by name.
pub fn list_problems() -> String {
    let mut rows: Vec<_> = catalog().iter().collect();
    rows.sort_by_key(|e| e.name);
    let w = rows.iter().map(|e| e.name.len()).max().unwrap_or(4).max(4);
    let mut s = format!("{:<w$}  {:<5}  {}\n", "name", "d,d'", "oracle | summary");
    for e in rows {
        s.push_str(&format!(
            "{:<w$}  {:<5}  {} | {}\n",
            e.name,
            format!("{},{}", e.dim, e.noise_dim),
            e.oracle,
            e.summary
        ));
    }
    s
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Loads, validates and resolves a config, writes the echo and runs the
/// checks. Returns the summary even when checks fail.
pub fn run(config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(Summary, PathBuf)> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.mc.seed = s;
    }
    let spec = cfg.resolve()?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    cfg.output.dir = Some(dir.clone());
    create_dir(&dir)?;
    let echo = dir.join("resolved_config.toml");
    std::fs::write(&echo, cfg.to_toml()?).map_err(|e| CliError::io(&echo, e))?;
    let summary = run_checks(&cfg, &spec, &dir)?;
    Ok((summary, dir))
}

/// Calibrates on the named built-ins with the solver settings of `config`
/// (defaults otherwise) and merges the entry into `<out>/calibration.json`.
pub fn calibrate(family: &str, config: Option<&Path>, out: &Path) -> Result<(String, PathBuf)> {
    let specs = family
        .split(',')
        .map(|n| builtin(n.trim()).map_err(|e| CliError::config("--family", e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::from_toml("[problem]\nbuiltin = \"heat\"\n")?,
    };
    let cal = calibrate_constants(&specs, &cfg.pde_config(), &cfg.picard_config())?;
    create_dir(out)?;
    let path = out.join("calibration.json");
    let mut file = CalibrationFile::load(&path)?;
    let line = format!(
        "key {}: C1 = {}, C = {}, C_Lp = {}, C_inf = {}",
        cal.key, cal.constants.c1, cal.constants.est_sl, cal.constants.lp, cal.constants.sup
    );
    file.insert(cal);
    file.save(&path)?;
    Ok((line, path))
}

fn configure_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Err(CliError::config("--threads", "must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config("--threads", e.to_string()))?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        configure_threads(n)?;
    }
    match cli.command {
        Command::Run { path } => {
            let config = path
                .or(cli.config)
                .ok_or_else(|| CliError::config("run", "no config given; pass a path or --config"))?;
            let (summary, dir) = run(&config, cli.out.as_deref(), cli.seed)?;
            print!("{}", summary.text());
            println!("reports in {}", dir.display());
            if !summary.pass {
                return Err(CliError::ChecksFailed(summary.failing()));
            }
            Ok(())
        }
        Command::ListProblems => {
            print!("{}", list_problems());
            Ok(())
        }
        Command::EmitPlots { dir } => {
            let dir = dir
                .or(cli.out)
                .ok_or_else(|| CliError::config("emit-plots", "no report directory given"))?;
            for f in emit_plots(&dir)? {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Calibrate { family } => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            let (line, path) = calibrate(&family, cli.config.as_deref(), &out)?;
            println!("{line}");
            println!("written to {}", path.display());
            Ok(())
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
