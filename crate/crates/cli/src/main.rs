//! `smallnoise`: runs simulations, divergence estimates and scaling sweeps
//! from a TOML config.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration, 3 numeric
//! failure, 4 acceptance check failed (`--check`).

mod commands;
mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use config::{Command, ConfigError};

#[derive(Debug, Parser)]
#[command(
    name = "smallnoise",
    version,
    about = "Gaussian approximations of small-noise diffusions"
)]
struct Cli {
    /// Command to run; overrides `command` in the config.
    command: Option<String>,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config value on a dotted path, e.g. `problem.epsilon=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default: `out` in the config, else `./out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with code 4 if the command's acceptance check fails.
    #[arg(long)]
    check: bool,
    /// Validate the configuration without computing or writing anything.
    #[arg(long)]
    dry_run: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

enum Failure {
    Config(String),
    Core(smallnoise_core::Error),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Core(e) if e.is_numeric() => 3,
            Failure::Core(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(m) | Failure::Io(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| Failure::Io(format!("reading {}: {e}", cli.config.display())))?;
    let mut cfg = config::load(&text, &cli.overrides)?;
    if let Some(name) = &cli.command {
        cfg.command = Some(
            Command::parse(name)
                .ok_or_else(|| Failure::Config(format!("unknown command '{name}'")))?,
        );
    }
    let resolved = cfg.resolve()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(format!("thread pool: {e}")))?;
    }
    if cli.dry_run {
        println!(
            "{}",
            json!({ "command": resolved.command.name(), "dry_run": true, "valid": true, "seed": cfg.seed })
        );
        return Ok(0);
    }

    let report = commands::run(&cfg, &resolved).map_err(Failure::Core)?;
    let out = cli
        .out
        .or(cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out)
        .map_err(|e| Failure::Io(format!("creating {}: {e}", out.display())))?;
    for (name, bytes) in &report.files {
        let path = out.join(name);
        fs::write(&path, bytes)
            .map_err(|e| Failure::Io(format!("writing {}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
    }

    let mut summary = report.summary;
    summary["command"] = json!(resolved.command.name());
    summary["seed"] = json!(cfg.seed);
    if let Some(ok) = report.check {
        summary["check"] = json!(ok);
    }
    let line = serde_json::to_string(&summary).expect("serializable");
    let summary_path = out.join(format!("{}.summary.json", resolved.command.name()));
    fs::write(&summary_path, format!("{line}\n"))
        .map_err(|e| Failure::Io(format!("writing {}: {e}", summary_path.display())))?;
    println!("{line}");

    Ok(if cli.check && report.check == Some(false) {
        4
    } else {
        0
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => {
            if code == 4 {
                eprintln!("error: acceptance check failed");
            }
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
