#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{ConfigFile, Settings};
use error::CliError;

/// Section names accepted in config files.
pub const COMMANDS: &[&str] = &["sample", "efficiency", "compare", "diagnose", "oracle1d"];

/// Speed-up Zig-Zag sampler.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// `key = value` file; `[command]` sections override top-level keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; chain k uses a seed derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Target id: normal1d, exp1d, student:<nu>, cauchy5d.
    #[arg(long)]
    target: Option<String>,
    /// Speed id: unit, const:<c>, poly:<eps>.
    #[arg(long)]
    speed: Option<String>,
    /// Any other setting, e.g. `--set switches=1000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate chains and write events, skeletons and a summary.
    Sample(Common),
    /// Tabulate the asymptotic inverse efficiency of 1-D targets.
    Efficiency(Common),
    /// ESS and cube-probability grid over targets and speeds.
    Compare(Common),
    /// ESS, KS, QQ and cube diagnostics from saved events or a skeleton.
    Diagnose(Common),
    /// Compare a 1-D chain against the Zig-Zag process in transformed space.
    Oracle1d(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Self::Sample(c) => ("sample", c),
            Self::Efficiency(c) => ("efficiency", c),
            Self::Compare(c) => ("compare", c),
            Self::Diagnose(c) => ("diagnose", c),
            Self::Oracle1d(c) => ("oracle1d", c),
        }
    }
}

fn overrides(cli: &Cli, common: &Common) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for kv in &common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config {
            line: None,
            field: None,
            message: format!("--set expects KEY=VALUE, got '{kv}'"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    let named = [
        ("target", common.target.clone()),
        ("speed", common.speed.clone()),
        ("seed", cli.seed.map(|s| s.to_string())),
        ("threads", cli.threads.map(|t| t.to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
    ];
    out.extend(named.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    Ok(out)
}

fn init_threads(s: &Settings) -> Result<usize, CliError> {
    let n: usize = s.parse_or("threads", 0)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| s.error("threads", e.to_string()))?;
    Ok(rayon::current_num_threads())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let (name, common) = cli.command.parts();
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let settings = file.resolve(name, &overrides(cli, common)?);
    settings.check_keys(&commands::keys_for(name), &commands::all_keys())?;
    let threads = init_threads(&settings)?;

    let started = Instant::now();
    match name {
        "sample" => {
            commands::sample(&settings)?;
        }
        "efficiency" => print!("{}", commands::efficiency(&settings)?),
        "compare" => print!("{}", commands::compare(&settings)?),
        "diagnose" => {
            commands::diagnose(&settings)?;
        }
        _ => println!("{}", commands::oracle1d(&settings)?),
    }
    // Timing goes in a sidecar so the main outputs stay byte-reproducible.
    let dir = PathBuf::from(settings.str_or("out", "out"));
    let meta = json!({
        "command": name,
        "wall_seconds": started.elapsed().as_secs_f64(),
        "finished_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "threads": threads,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let path = dir.join("meta.json");
    std::fs::write(&path, format!("{meta:#}\n")).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("suzz: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
