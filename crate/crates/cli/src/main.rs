//! `lift`: data generation, shortcut extraction, augmented collection,
//! evaluation, and verification for the positioning environments.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 verification
//! failure, 3 file format or io error.

mod commands;
mod config;
mod metrics;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::JobConfig;
use lift_core::Error;

#[derive(Parser)]
#[command(name = "lift", version, about = "Shortcut-augmented data collection")]
struct Cli {
    /// Configuration file with `key = value` lines; defaults are used for
    /// missing keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Inline override, repeatable: --set env.gamma=0.95
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Root of every random stream (config key `seed`).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Episodes to collect (config key `collect.n_episodes`).
    #[arg(long, global = true, value_name = "COUNT")]
    n: Option<usize>,

    /// Override probability (config key `collect.p`).
    #[arg(long, global = true, value_name = "FLOAT")]
    p: Option<f64>,

    /// Shortcut admission threshold (config key `shortcut.c`).
    #[arg(long = "C", global = true, value_name = "FLOAT")]
    c: Option<f64>,

    /// Candidate selection strategy (config key `shortcut.strategy`).
    #[arg(long, global = true, value_name = "NAME")]
    strategy: Option<String>,

    /// Max overrides per episode (config key `collect.cap_per_trajectory`).
    #[arg(long, global = true, value_name = "COUNT")]
    cap: Option<usize>,

    /// Worker threads; overrides the LIFT_THREADS environment variable.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll plain episodes under the configured policy and write a dataset.
    GenData {
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Extract shortcut tuples from a dataset produced by gen-data.
    ExtractShortcuts {
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Run the augmented collection loop, training at the configured
    /// checkpoints.
    CollectLift {
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Also write the final trained model.
        #[arg(long, value_name = "PATH")]
        model_out: Option<PathBuf>,
    },
    /// Print metrics of a dataset; optionally write per-episode rows.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Run the theory-check suite and report one line per check.
    Verify,
}

fn build_config(cli: &Cli) -> Result<JobConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            // a malformed config file is a configuration error, not an io one
            JobConfig::from_text(&text).map_err(|e| {
                Error::InvalidConfig(format!("{}: {e}", path.display()))
            })?
        }
        None => JobConfig::default(),
    };
    for pair in &cli.set {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("--set expects KEY=VALUE, got '{pair}'"))
        })?;
        cfg.set(key.trim(), value)?;
    }
    // dedicated flags beat both the file and --set
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(n) = cli.n {
        cfg.set("collect.n_episodes", &n.to_string())?;
    }
    if let Some(p) = cli.p {
        cfg.set("collect.p", &p.to_string())?;
    }
    if let Some(c) = cli.c {
        cfg.set("shortcut.c", &c.to_string())?;
    }
    if let Some(strategy) = &cli.strategy {
        cfg.set("shortcut.strategy", strategy)?;
    }
    if let Some(cap) = cli.cap {
        cfg.set("collect.cap_per_trajectory", &cap.to_string())?;
    }
    cfg.finalize()?;
    Ok(cfg)
}

fn init_threads(cli: &Cli) {
    let n = cli.threads.or_else(|| {
        std::env::var("LIFT_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        if n > 0 {
            // failure means a pool already exists, which is fine
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Parse { .. } => 3,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let cfg = build_config(cli)?;
    let lines = match &cli.command {
        Command::GenData { out } => commands::gen_data(&cfg, out)?,
        Command::ExtractShortcuts { data, out } => {
            commands::extract_shortcuts(&cfg, data, out)?
        }
        Command::CollectLift { out, model_out } => {
            commands::collect_lift(&cfg, out, model_out.as_deref())?
        }
        Command::Evaluate { data, csv } => {
            commands::evaluate_dataset(&cfg, data, csv.as_deref())?
        }
        Command::Verify => {
            let (lines, all_pass) = commands::verify(&cfg)?;
            for line in lines {
                println!("{line}");
            }
            return Ok(if all_pass { 0 } else { 2 });
        }
    };
    for line in lines {
        println!("{line}");
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    init_threads(&cli);
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
