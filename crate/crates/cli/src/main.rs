mod commands;
mod config;
mod error;
mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use commands::Context;
use config::{ExperimentConfig, Loaded};
use error::CliError;
use output::Out;

/// Experiments with straight-line flows on polysquare surfaces.
#[derive(Debug, Parser)]
#[command(name = "polysquare", version)]
struct Cli {
    /// Experiment config (JSON). A `{"runs": [...]}` file runs a batch.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; batch runs go to `run-NNN` below it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for batch runs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for Monte-Carlo checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Gluings, vertex classes and cone angles of a surface.
    Surface,
    /// Discrete orbit of the v-shift (or w-shift when `w3` is set).
    Orbit,
    /// Straight-line flow on the surface, or on `P × [0,1)` when `v3` is set.
    Geodesic,
    /// Visit counts of the v-shift against occupation times of sweep sets.
    Equivalence,
    /// Paired uniformity of a v-shift and its w-shift lift.
    Stepup,
    /// Search for multipliers with small circle gap.
    Lemma34,
    /// Grid-based ergodic decomposition of a shift.
    Decompose,
    /// Certify absence of integer relations up to a height.
    Certify,
}

fn run(command: Command, cfg: &ExperimentConfig, ctx: &Context) -> Result<Value, CliError> {
    match command {
        Command::Surface => {
            let spec = ExperimentConfig::require("surface", &cfg.surface)?;
            commands::surface(spec)
        }
        Command::Orbit => commands::orbit_cmd(cfg, ctx),
        Command::Geodesic => commands::geodesic_cmd(cfg, ctx),
        Command::Equivalence => commands::equivalence_cmd(cfg, ctx),
        Command::Stepup => commands::stepup_cmd(cfg, ctx),
        Command::Lemma34 => commands::lemma34_cmd(cfg, ctx),
        Command::Decompose => commands::decompose_cmd(cfg, ctx),
        Command::Certify => commands::certify_cmd(cfg, ctx),
    }
}

/// `surface` also accepts a bare surface spec in place of a config.
fn surface_only(path: &Path, out: &Out) -> Result<Option<Value>, CliError> {
    let value = config::read_json(path)?;
    if value.get("surface").is_some() || value.get("runs").is_some() {
        return Ok(None);
    }
    let r = commands::surface(&value)?;
    out.json("surface.json", &r)?;
    Ok(Some(r))
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_summary(v: &Value) {
    if let Some(s) = v.get("summary").and_then(Value::as_str) {
        emit(s);
    }
}

fn main_inner(cli: Cli) -> Result<Value, CliError> {
    let path = cli
        .config
        .clone()
        .ok_or_else(|| CliError::Config("missing --config".into()))?;
    if let Command::Surface = cli.command {
        let out = Out { dir: cli.out.clone() };
        if let Some(r) = surface_only(&path, &out)? {
            print_summary(&r);
            return Ok(r);
        }
    }
    match config::load(&path)? {
        Loaded::Single(cfg) => {
            let out = Out {
                dir: cli.out.clone().or_else(|| cfg.out.clone()),
            };
            let ctx = Context { out, seed: cli.seed };
            let r = run(cli.command, &cfg, &ctx)?;
            if let Command::Surface = cli.command {
                ctx.out.json("surface.json", &r)?;
                print_summary(&r);
            }
            Ok(r)
        }
        Loaded::Batch(batch) => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(j) = cli.jobs {
                builder = builder.num_threads(j);
            }
            let pool = builder
                .build()
                .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
            let base = cli.out.clone();
            let results: Vec<(usize, Result<Value, CliError>)> = pool.install(|| {
                batch
                    .runs
                    .par_iter()
                    .enumerate()
                    .map(|(i, cfg)| {
                        let dir = base
                            .as_ref()
                            .or(cfg.out.as_ref())
                            .map(|b| b.join(format!("run-{i:03}")));
                        let ctx = Context {
                            out: Out { dir },
                            seed: cli.seed.wrapping_add(i as u64),
                        };
                        (i, run(cli.command, cfg, &ctx))
                    })
                    .collect()
            });
            let mut first_err = None;
            let runs: Vec<Value> = results
                .into_iter()
                .map(|(i, r)| match r {
                    Ok(v) => json!({"run": i, "ok": true, "report": v}),
                    Err(e) => {
                        eprintln!("run {i}: {e}");
                        let v = json!({"run": i, "ok": false, "error": e.to_string(), "exit_code": e.code()});
                        first_err.get_or_insert(e);
                        v
                    }
                })
                .collect();
            let all = json!({"runs": runs});
            if let Some(b) = &base {
                Out { dir: Some(b.clone()) }.json("batch.json", &all)?;
            }
            emit(&serde_json::to_string_pretty(&all).expect("serializable"));
            match first_err {
                Some(e) => Err(e),
                None => Ok(Value::Null),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            emit(&serde_json::to_string_pretty(&v).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit()
        }
    }
}
