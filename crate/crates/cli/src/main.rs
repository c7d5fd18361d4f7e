//! `bdris`: run ε-grid sweeps and write CSV, JSON reports and gnuplot
//! scripts.
//!
//! Settings come from built-in defaults, then an optional TOML file, then
//! flags. Exit status is 0 when every cell converged, 2 when some cell was
//! flagged, 1 on error.

use std::path::PathBuf;
use std::process::ExitCode;

use bdris::experiment::{run_experiment, summary, write_outputs, ExperimentSpec, Scenario};
use bdris::model::{generate_channels, save_channels, Architecture, SystemConfig};
use bdris::pdd::PddSettings;
use bdris::spectral::AoSettings;
use bdris::diagonal::DiagSettings;
use clap::Parser;
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "bdris", version, about = "BD-RIS Fisher-information design sweeps")]
struct Cli {
    /// TOML file with experiment settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RIS elements.
    #[arg(long)]
    r: Option<usize>,
    /// Complex parameters to estimate.
    #[arg(long)]
    k: Option<usize>,
    /// Receive antennas at Bob (default 2k).
    #[arg(long)]
    n_b: Option<usize>,
    /// Receive antennas at Eve (default 2k).
    #[arg(long)]
    n_e: Option<usize>,
    /// Total transmit power, split equally over the k streams.
    #[arg(long)]
    power: Option<f64>,
    /// Noise variance at both receivers.
    #[arg(long)]
    noise: Option<f64>,
    /// Seed of the channel generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated architectures: non-reciprocal, reciprocal, diagonal.
    #[arg(long, value_delimiter = ',')]
    arch: Option<Vec<Architecture>>,
    /// Comma-separated scenarios: no-eve, eve.
    #[arg(long, value_delimiter = ',')]
    scenario: Option<Vec<Scenario>>,
    /// Comma-separated Eve caps, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    eps_grid: Option<Vec<f64>>,
    /// Points of the default log-spaced grid.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Monte-Carlo MLE trials per row (0 disables).
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record per-cell wall time (output is then not reproducible).
    #[arg(long)]
    timing: bool,
    /// Read channels from a JSON fixture instead of generating them.
    #[arg(long)]
    channels: Option<PathBuf>,
    /// Write the generated channels to a JSON fixture and exit.
    #[arg(long)]
    save_channels: Option<PathBuf>,
}

/// Keys accepted in the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    r: Option<usize>,
    k: Option<usize>,
    n_b: Option<usize>,
    n_e: Option<usize>,
    power: Option<f64>,
    noise: Option<f64>,
    seed: Option<u64>,
    eve_present: Option<bool>,
    architectures: Option<Vec<Architecture>>,
    scenarios: Option<Vec<Scenario>>,
    epsilon_grid: Option<Vec<f64>>,
    grid_points: Option<usize>,
    mc_trials: Option<usize>,
    output: Option<PathBuf>,
    record_timing: Option<bool>,
    channels: Option<PathBuf>,
    ao: Option<AoSettings>,
    pdd: Option<PddSettings>,
    diagonal: Option<DiagSettings>,
}

fn load_file(path: &PathBuf) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn build_spec(cli: &Cli, file: FileConfig) -> ExperimentSpec {
    let k = cli.k.or(file.k).unwrap_or(10);
    let r = cli.r.or(file.r).unwrap_or(36);
    let seed = cli.seed.or(file.seed).unwrap_or(1);
    let mut cfg = SystemConfig::reference(k, r, seed);
    cfg.n_b = cli.n_b.or(file.n_b).unwrap_or(cfg.n_b);
    cfg.n_e = cli.n_e.or(file.n_e).unwrap_or(cfg.n_e);
    cfg.total_power = cli.power.or(file.power).unwrap_or(cfg.total_power);
    cfg.noise_variance = cli.noise.or(file.noise).unwrap_or(cfg.noise_variance);
    cfg.eve_present = file.eve_present.unwrap_or(true);

    let out = cli.out.clone().or(file.output).unwrap_or_else(|| PathBuf::from("bdris-out"));
    let mut spec = ExperimentSpec::new(cfg, out);
    if let Some(a) = cli.arch.clone().or(file.architectures) {
        spec.architectures = a;
    }
    if let Some(s) = cli.scenario.clone().or(file.scenarios) {
        spec.scenarios = s;
    } else if !spec.cfg.eve_present {
        spec.scenarios = vec![Scenario::NoEve];
    }
    spec.epsilon_grid = cli.eps_grid.clone().or(file.epsilon_grid);
    spec.grid_points = cli.grid_points.or(file.grid_points).unwrap_or(spec.grid_points);
    spec.mc_trials = cli.trials.or(file.mc_trials).unwrap_or(0);
    spec.record_timing = cli.timing || file.record_timing.unwrap_or(false);
    spec.channels_path = cli.channels.clone().or(file.channels);
    if let Some(ao) = file.ao {
        spec.ao = ao;
    }
    if let Some(pdd) = file.pdd {
        spec.pdd = pdd;
    }
    if let Some(d) = file.diagonal {
        spec.diagonal = d;
    }
    spec
}

fn run(cli: Cli) -> Result<bool, String> {
    let file = match &cli.config {
        Some(p) => load_file(p)?,
        None => FileConfig::default(),
    };
    let spec = build_spec(&cli, file);
    if let Some(path) = &cli.save_channels {
        let ch = generate_channels(&spec.cfg).map_err(|e| e.to_string())?;
        save_channels(&ch, path).map_err(|e| e.to_string())?;
        println!("channels written to {}", path.display());
        return Ok(true);
    }
    log::info!("running sweep: r={} k={} seed={}", spec.cfg.r, spec.cfg.k, spec.cfg.seed);
    let table = run_experiment(&spec).map_err(|e| e.to_string())?;
    write_outputs(&table, &spec.output_path).map_err(|e| e.to_string())?;
    print!("{}", summary(&table));
    println!("results written to {}", spec.output_path.join("results.csv").display());
    Ok(!table.any_failed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some cells did not converge or violate Eve's cap; see converged=false rows");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
