//! Command-line harness: configuration, orchestration and CSV output.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod setup;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use commands::Ctx;
use config::RunConfig;
use error::{exit, CliError, CliResult};
use io::{OutDir, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "ouu", version, about = "Optimal control of PDEs under uncertainty")]
pub struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `rng.seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Overrides `output.directory`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides a single config key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Finite-difference checks of all derivatives and solve counts.
    CheckDerivatives,
    /// Generalized eigenvalue decay and trace-estimator errors.
    Eigdecay,
    /// Moment estimates and variance reduction at a control.
    Estimate,
    /// Optimal control for the selected method.
    Optimize,
    /// Prior samples and the states they induce.
    SampleField,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckDerivatives => "check-derivatives",
            Command::Eigdecay => "eigdecay",
            Command::Estimate => "estimate",
            Command::Optimize => "optimize",
            Command::SampleField => "sample-field",
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    match execute(&cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

/// Resolves the configuration from the file and command-line overrides.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::defaults(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set {o}: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.set("rng.seed", &s.to_string())?;
    }
    if let Some(d) = &cli.out {
        cfg.set("output.directory", &d.to_string_lossy())?;
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        // the global pool can only be built once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let problem = setup::build(&cfg)?;
    let resolved = cfg.resolved_text();
    let mut ctx = Ctx {
        out: OutDir::create(&cfg.out_dir)?,
        cfg,
        start: Instant::now(),
    };
    ctx.out.write_text(io::RESOLVED_CONFIG, &resolved)?;
    let result = match cli.command {
        Command::CheckDerivatives => commands::check::run(&mut ctx, &problem),
        Command::Eigdecay => commands::eigdecay::run(&mut ctx, &problem),
        Command::Estimate => commands::estimate::run(&mut ctx, &problem),
        Command::Optimize => commands::optimize::run(&mut ctx, &problem),
        Command::SampleField => commands::field::run(&mut ctx, &problem),
    };
    // failed checks and optimizer stops still leave a complete record
    RunManifest::build(&ctx.out, cli.command.name(), &ctx.cfg.identity_text(), ctx.cfg.seed)?.write(&ctx.out)?;
    result
}
