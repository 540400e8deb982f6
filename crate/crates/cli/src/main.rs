use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use espar_core::sweep::{self, OneOrMany, RawConfig, RunConfig};
use espar_core::text::parse_power_list;
use espar_core::Error;

const SEED_ENV: &str = "ESPAR_SIM_SEED";

/// Ergodic sum-rate sweeps for a 3-user MIMO interference channel in which
/// TX 2 uses either an ideal ULA or a single-RF parasitic array (ESPAR).
#[derive(Debug, Parser)]
#[command(name = "espar-sim", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Named experiment preset (paper-fig2, paper-fig3).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,

    /// Comma-separated transmit powers in dB, strictly increasing.
    #[arg(long = "power-db", value_name = "LIST", allow_hyphen_values = true)]
    power_db: Option<String>,

    /// Monte-Carlo trials per power.
    #[arg(long, allow_hyphen_values = true)]
    trials: Option<i64>,

    /// Base seed [env: ESPAR_SIM_SEED, used when no seed is configured].
    #[arg(long)]
    seed: Option<u64>,

    /// ia-closed-form or max-sinr (comma-separated for several).
    #[arg(long, value_delimiter = ',')]
    precoder: Vec<String>,

    /// ula or espar (comma-separated for both).
    #[arg(long = "tx2-array", value_delimiter = ',')]
    tx2_array: Vec<String>,

    /// Output CSV path.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Worker threads (0 = all cores).
    #[arg(long, allow_hyphen_values = true)]
    jobs: Option<i64>,

    /// Increase log verbosity (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Print the resolved configuration and exit.
    #[arg(long)]
    check: bool,
}

fn list(values: Vec<String>) -> Option<OneOrMany> {
    (!values.is_empty()).then_some(OneOrMany::Many(values))
}

fn seed_to_raw(field: &str, s: u64) -> Result<i64, Error> {
    i64::try_from(s).map_err(|_| Error::Config {
        field: field.into(),
        message: format!("seed must be <= {}", i64::MAX),
    })
}

fn resolve(cli: Cli) -> Result<RunConfig, Error> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            RawConfig::from_toml(&text, path.parent())?
        }
        None => RawConfig::default(),
    };
    let power_db = cli
        .power_db
        .as_deref()
        .map(parse_power_list)
        .transpose()
        .map_err(|m| Error::Config {
            field: "power_db".into(),
            message: m,
        })?;
    let mut flags = RawConfig {
        preset: cli.preset,
        power_db,
        trials: cli.trials,
        seed: cli.seed.map(|s| seed_to_raw("seed", s)).transpose()?,
        precoder: list(cli.precoder),
        tx2_array: list(cli.tx2_array),
        out: cli.out,
        jobs: cli.jobs,
        verbosity: (cli.verbose > 0).then_some(cli.verbose as i64),
        ..RawConfig::default()
    };
    if flags.seed.is_none() && file.seed.is_none() {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let s = v.trim().parse::<u64>().map_err(|e| Error::Config {
                field: SEED_ENV.into(),
                message: format!("`{v}`: {e}"),
            })?;
            flags.seed = Some(seed_to_raw(SEED_ENV, s)?);
        }
    }
    // the preset sits beneath the file, whichever of the two names it
    let preset_name = flags.preset.take().or_else(|| file.preset.clone());
    let base = match preset_name {
        Some(name) => sweep::preset(&name)?,
        None => RawConfig::default(),
    };
    let mut merged = base.overlay(file).overlay(flags);
    merged.preset = None;
    RunConfig::resolve(merged)
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let check = cli.check;
    let config = resolve(cli)?;
    init_logging(config.options.verbosity);
    if check {
        print!("{}", config.to_toml());
        return Ok(());
    }
    log::debug!("resolved configuration:\n{}", config.to_toml());
    let out = sweep::run_sweep(&config).context("sweep failed")?;
    print!("{}", sweep::summary_table(&out.rows));
    if let Some(path) = &config.options.out {
        log::info!("wrote {}", path.display());
    } else {
        print!("\n{}", out.csv);
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("espar-sim: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Config { .. }) | Some(Error::Io(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
