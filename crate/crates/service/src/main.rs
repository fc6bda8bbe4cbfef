use std::io::{self, Write};
use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use bioskin_core::sim::ScenarioScript;
use bioskin_service::cli::{self, CalibrateArgs, EvaluateArgs, ReplayArgs, ServeArgs, SimArgs};
use bioskin_service::engine::END_OF_RECORDING;
use bioskin_service::server::{default_port, PORT_ENV};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bioskin", version, about = "Simulate, calibrate, stream and replay the tactile skin")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run a scenario and write its calibration dataset and ground truth.
    Sim {
        /// Builtin scenario name or scenario JSON file.
        scenario: Option<String>,
        #[arg(long, default_value = "sim-out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the raw frame stream as a recording.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Write ground_truth.csv even when the scenario has dataset cycles.
        #[arg(long)]
        truth: bool,
        /// List the builtin scenarios.
        #[arg(long)]
        list: bool,
    },
    /// Fit a profile on a dataset directory and print the validation report.
    Calibrate {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Profile id; defaults to the output file stem.
        #[arg(long)]
        id: Option<String>,
        /// Pick calibration cycles by a seeded shuffle instead of the first three.
        #[arg(long)]
        split_seed: Option<u64>,
        /// Also write the report as JSON.
        #[arg(long)]
        report_json: Option<PathBuf>,
    },
    /// Report a profile's accuracy on a dataset directory.
    Evaluate {
        profile: PathBuf,
        dataset: PathBuf,
        /// Use every cycle, not only the validation split.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        split_seed: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Stream a simulated scenario or a recording over TCP.
    Serve {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, conflicts_with = "scenario")]
        recording: Option<PathBuf>,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// NDJSON port; the wire-packet stream uses the next one.
        #[arg(long, env = PORT_ENV, default_value_t = default_port())]
        port: u16,
        #[arg(long)]
        binary_port: Option<u16>,
        /// Runtime configuration JSON (thermostat, detector, material).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Source speed relative to real time; 0 runs unpaced.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        record_dir: PathBuf,
        /// Stop after this much sensor time, s.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Stream a recording through a profile as NDJSON on stdout.
    Replay {
        recording: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        /// Speed relative to the recorded rate; 0 runs unpaced.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Include raw_frame messages.
        #[arg(long)]
        raw: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.verb {
        Verb::Sim { list: true, .. } => {
            for name in ScenarioScript::BUILTINS {
                writeln!(out, "{name}")?;
            }
        }
        Verb::Sim { scenario: None, .. } => bail!("missing scenario; see --list"),
        Verb::Sim { scenario: Some(scenario), out: dir, seed, record, truth, .. } => {
            cli::sim(&SimArgs { scenario, out: dir, seed, record, truth }, &mut out)?;
        }
        Verb::Calibrate { dataset, out: path, id, split_seed, report_json } => {
            cli::calibrate(&CalibrateArgs { dataset, out: path, id, split_seed, report_json }, &mut out)?;
        }
        Verb::Evaluate { profile, dataset, all, split_seed, json } => {
            cli::evaluate_cmd(&EvaluateArgs { profile, dataset, all, split_seed, json }, &mut out)?;
        }
        Verb::Serve { scenario, recording, profile, bind, port, binary_port, config, speed, seed, record_dir, duration } => {
            drop(out);
            cli::serve_cmd(&ServeArgs {
                scenario,
                recording,
                profile,
                bind,
                port,
                binary_port,
                config,
                speed,
                seed,
                record_dir,
                duration_s: duration,
            })?;
        }
        Verb::Replay { recording, profile, speed, config, raw } => {
            let s = cli::replay(&ReplayArgs { recording, profile, speed, config, raw }, &mut out)?;
            eprintln!("replayed {} frames into {} states in {:.2} s", s.frames, s.states, s.wall_s);
            if s.end != END_OF_RECORDING {
                bail!("recording is damaged: {}", s.end);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
