//! Command-line pipeline for the `fbi` library: configuration, caching and
//! report emission.
//!
//! Exit codes: 0 success, 1 configuration or output error, 2 cache
//! corruption, 3 failed validation or computation.

pub mod cache;
pub mod commands;
pub mod config;
pub mod report;

use clap::{Parser, Subcommand};
use commands::{CliError, CliResult, Command, Context, Outcome};
use config::{ConfigError, Origin, RunConfig};
use serde_json::json;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_CACHE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

/// Environment variable for `--threads`; read by the argument parser, not
/// by the configuration.
pub const THREADS_ENV: &str = "FBI_THREADS";

#[derive(Debug, Parser)]
#[command(name = "fbi", version, about = "Flat-band Hartree-Fock ground states of chiral twisted bilayer graphene")]
pub struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Report directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<String>,
    /// Cache directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub cache: Option<String>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, value_name = "N", env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<String>,
    /// spinless, valley or valley-spin.
    #[arg(long, global = true, value_name = "FLAVOR")]
    pub flavor: Option<String>,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum Sub {
    /// Locate the magic coupling.
    MagicAlpha,
    /// Low-energy spectra on the grid, as CSV.
    Bands,
    /// Build and validate the form-factor table.
    Formfactors,
    /// Hartree-Fock energy of the configured state.
    HfEnergy,
    /// Ground-state condition residuals of the configured state.
    CheckGs,
    /// Kernel dimensions for every momentum pair.
    Sylvester,
    /// Orbit sweep over the ground-state generators.
    Classify,
    /// Fock-space brute force on the oracle grid.
    Oracle,
    /// Every subcommand in turn.
    All,
}

impl Sub {
    fn commands(self) -> Vec<Command> {
        match self {
            Sub::MagicAlpha => vec![Command::MagicAlpha],
            Sub::Bands => vec![Command::Bands],
            Sub::Formfactors => vec![Command::Formfactors],
            Sub::HfEnergy => vec![Command::HfEnergy],
            Sub::CheckGs => vec![Command::CheckGs],
            Sub::Sylvester => vec![Command::Sylvester],
            Sub::Classify => vec![Command::Classify],
            Sub::Oracle => vec![Command::Oracle],
            Sub::All => Command::ALL.to_vec(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Sub::All => "all",
            s => s.commands()[0].name(),
        }
    }
}

/// File, then environment, then flags.
pub fn resolve_config<I>(cli: &Cli, env: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
                origin: None,
                field: None,
                message: format!("cannot read {}: {e}", path.display()),
            })?;
            RunConfig::parse(&text).map_err(|mut e| {
                e.message = format!("{} ({})", e.message, path.display());
                e
            })?
        }
        None => RunConfig::default(),
    };
    cfg.apply_env(env.into_iter().filter(|(k, _)| k != THREADS_ENV))?;
    let flags = [("out", &cli.out), ("cache", &cli.cache), ("seed", &cli.seed), ("flavor", &cli.flavor)];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).map_err(|message| ConfigError {
                origin: Some(Origin::Flag),
                field: Some(key.to_string()),
                message,
            })?;
        }
    }
    Ok(cfg)
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    report::write_file(path, bytes).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

/// Runs the selected subcommands and writes their reports. Returns whether
/// every validation passed.
fn execute(sub: Sub, ctx: &mut Context, threads: usize) -> CliResult<bool> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    let clock = Instant::now();
    let out = ctx.cfg.out.clone();
    write(&out.join("config.txt"), ctx.cfg.to_text().as_bytes())?;
    let mut summary = Vec::new();
    let mut all_passed = true;
    let single = sub.commands().len() == 1;
    for cmd in sub.commands() {
        match ctx.run(cmd) {
            Ok(Outcome { report, files }) => {
                write(&out.join(format!("{}.json", cmd.name())), &report::to_json(&report))?;
                for (name, bytes) in files {
                    write(&out.join(name), &bytes)?;
                }
                println!("{}: {}", cmd.name(), if report.passed { "PASS" } else { "FAIL" });
                for c in report.checks.iter().filter(|c| !c.passed) {
                    println!(
                        "  {} = {} violates {} {}",
                        c.name,
                        report::fmt_f64(c.value),
                        if c.relation == report::Relation::AtMost { "<=" } else { ">=" },
                        report::fmt_f64(c.limit)
                    );
                }
                all_passed &= report.passed;
                summary.push(json!({ "command": cmd.name(), "passed": report.passed }));
            }
            // in a single run the error is the result; in `all` it is
            // recorded and the remaining commands still run
            Err(CliError::Compute(e)) if !single => {
                println!("{}: FAIL\n  {e}", cmd.name());
                all_passed = false;
                summary.push(json!({ "command": cmd.name(), "passed": false, "error": e.to_string() }));
            }
            Err(e) => return Err(e),
        }
    }
    if !single {
        let s = json!({ "config_hash": ctx.config_hash(), "passed": all_passed, "commands": summary });
        write(&out.join("all.json"), &report::to_json(&s))?;
    }
    let stats = ctx.cache.stats;
    let meta = json!({
        "command": sub.name(),
        "config_hash": ctx.config_hash(),
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix_ms": started as u64,
        "elapsed_ms": clock.elapsed().as_millis() as u64,
        "threads": threads,
        "cache": { "dir": ctx.cache.dir().display().to_string(), "hits": stats.hits, "misses": stats.misses, "stale": stats.stale },
    });
    write(&out.join("run_meta.json"), &report::to_json(&meta))?;
    Ok(all_passed)
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<A, T, E>(args: A, env: E) -> i32
where
    A: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    E: IntoIterator<Item = (String, String)>,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cfg = match resolve_config(&cli, env) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let threads = cli.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("config error: cannot start {threads} threads: {e}");
            return EXIT_CONFIG;
        }
    };
    let used = pool.current_num_threads();
    let mut ctx = Context::new(cfg);
    match pool.install(|| execute(cli.command, &mut ctx, used)) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_VALIDATION,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
