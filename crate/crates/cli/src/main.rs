mod compare;
mod manifest;
mod run;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use modal_stream::dynamics::{build_state_space, simulate, wgn_excitation, SimulationConfig};
use modal_stream::fixtures;
use modal_stream::io::{atomic_write, write_series_csv};

#[derive(Parser)]
#[command(name = "modal-stream", version, about = "Case studies for recursive identification of complex modes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and identify a case study, writing artifacts to <OUT>/<run-id>.
    Run {
        /// cs1, cs2, cs3 or benchmark.
        case: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Flat `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Override one configuration key; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Store per-stage wall-clock times in the manifest.
        #[arg(long)]
        record_timings: bool,
        /// Also write every pipeline output of the first member to outputs.csv.
        #[arg(long)]
        per_sample: bool,
    },
    /// Per-mode MAC and frequency differences between two run directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Simulate white-noise driven response of a fixture and print it as CSV.
    Simulate {
        /// Built-in fixture name or a fixture file.
        fixture: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        #[arg(long, default_value_t = 100.0)]
        duration: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("MODAL_STREAM_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| format!("MODAL_STREAM_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("MODAL_STREAM_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn simulate_fixture(fixture: &str, cfg: &SimulationConfig) -> Result<Vec<u8>, String> {
    let model = if std::path::Path::new(fixture).is_file() {
        let text = fs::read_to_string(fixture).map_err(|e| format!("{fixture}: {e}"))?;
        fixtures::parse_fixture(&text).map_err(|e| e.to_string())?
    } else {
        fixtures::named(fixture).map_err(|e| e.to_string())?
    };
    let ss = build_state_space(&model).map_err(|e| e.to_string())?;
    let forces = wgn_excitation(cfg, model.dof()).map_err(|e| e.to_string())?;
    let y = simulate(&ss, &forces, cfg, &[]).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_series_csv(&mut buf, &y, cfg.dt, 0.0).map_err(|e| e.to_string())?;
    Ok(buf)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match cli.command {
        Command::Run { case, seed, config, out, set, record_timings, per_sample } => {
            let args = run::RunArgs { case, seed, config, out, overrides: set, record_timings, per_sample };
            match run::run(&args) {
                Ok((manifest, dir)) => {
                    run::print_summary(&manifest, &dir);
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error in stage {}: {}", e.stage, e.message);
                    ExitCode::FAILURE
                }
            }
        }
        Command::Compare { a, b, json } => match compare::compare(&a, &b) {
            Ok(c) => {
                if json {
                    println!("{}", serde_json::to_string_pretty(&c).expect("comparison serializes"));
                } else {
                    compare::print(&c);
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Simulate { fixture, seed, dt, duration, noise, out } => {
            let cfg = SimulationConfig { dt, duration, noise_intensity: noise, seed, ..Default::default() };
            let result = cfg.validate().map_err(|e| e.to_string()).and_then(|_| simulate_fixture(&fixture, &cfg));
            let bytes = match result {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let written = match out {
                Some(path) => atomic_write(&path, &bytes),
                None => std::io::stdout().lock().write_all(&bytes),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
