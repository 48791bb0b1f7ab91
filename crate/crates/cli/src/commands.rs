//! Command-line front end.
//!
//! Exit codes: 0 success, 1 bad arguments or input files, 2 calibration
//! failure.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use dmod::experiments::{run_experiment, ExperimentConfig, ExperimentError};
use dmod::scenario::ScenarioFile;
use dmod::testbed::DetectorKind;

use crate::files::{self, CalibrationFile};
use crate::service::{self, ServiceConfig};
use crate::session::{run_calibration, run_transmission, Session, SessionError, TransmitSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_CALIBRATION: i32 = 2;

/// Scenarios available by name wherever a scenario path is expected.
pub const BUILTIN_SCENARIOS: &[&str] = &["reference", "async-impairment", "drifting"];

pub fn builtin_scenario(name: &str) -> Option<ScenarioFile> {
    match name {
        "reference" => Some(ScenarioFile::reference()),
        "async-impairment" => Some(ScenarioFile::async_impairment()),
        "drifting" => Some(ScenarioFile::drifting()),
        _ => None,
    }
}

#[derive(Debug, Parser)]
#[command(name = "dmod", version, about = "Simulated directional-modulation testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print a built-in scenario as JSON, or write it to a file.
    Scenario {
        /// One of: reference, async-impairment, drifting.
        name: String,
        out: Option<PathBuf>,
    },
    /// Measure the channel matrix and write a calibration file.
    Calibrate {
        /// Scenario JSON file or built-in scenario name.
        scenario: String,
        out: PathBuf,
        /// Calibration number within the session; selects the noise seed.
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Simulated time at which the calibration starts, in seconds.
        #[arg(long, default_value_t = 0.0)]
        start_time: f64,
    },
    /// Send one message per receiver using a calibration file.
    Transmit {
        calibration: PathBuf,
        #[arg(long)]
        msg1: String,
        #[arg(long)]
        msg2: Option<String>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=4))]
        bits_per_symbol: u8,
        #[arg(long)]
        fec: bool,
        #[arg(long, default_value = "sync")]
        detector: DetectorKind,
        /// Transmission number within the session; selects the noise seed.
        #[arg(long, default_value_t = 0)]
        transmission_index: u64,
        /// Simulated time at which the transmission starts, in seconds;
        /// defaults to the moment calibration completed.
        #[arg(long)]
        start_time: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run a bit-error-rate experiment over random messages.
    Ber {
        /// Scenario JSON file or built-in scenario name.
        scenario: String,
        #[arg(long)]
        messages: usize,
        #[arg(long)]
        chars: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=4))]
        bits_per_symbol: u8,
        #[arg(long)]
        fec: bool,
        #[arg(long, default_value = "async")]
        detector: DetectorKind,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Serve the HTTP and WebSocket operator API.
    Serve {
        /// Scenario JSON file or built-in scenario name.
        scenario: String,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Simulated seconds streamed per wall-clock second; 0 disables pacing.
        #[arg(long, default_value_t = 1.0)]
        playback_rate: f64,
        /// Advance the simulated clock with wall-clock time between operations.
        #[arg(long)]
        realtime_clock: bool,
    },
}

#[derive(Debug, thiserror::Error)]
enum CommandError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Calibration(String),
}

impl CommandError {
    fn code(&self) -> i32 {
        match self {
            CommandError::Input(_) => EXIT_INPUT,
            CommandError::Calibration(_) => EXIT_CALIBRATION,
        }
    }
}

impl From<files::FileError> for CommandError {
    fn from(e: files::FileError) -> Self {
        CommandError::Input(e.to_string())
    }
}

impl From<SessionError> for CommandError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Calibration(_) => CommandError::Calibration(e.to_string()),
            other => CommandError::Input(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CommandError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Testbed(dmod::testbed::TestbedError::Calibration(c)) => CommandError::Calibration(format!("calibration failed: {c}")),
            other => CommandError::Input(other.to_string()),
        }
    }
}

/// Reads a scenario from a path, falling back to the built-in names when no
/// such file exists.
pub fn load_scenario(arg: &str) -> Result<ScenarioFile, String> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(s) = builtin_scenario(arg) {
            return Ok(s);
        }
    }
    let file = ScenarioFile::load(path).map_err(|e| e.to_string())?;
    file.build().map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(file)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_INPUT
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}

fn execute(command: Command, out: &mut impl Write) -> Result<(), CommandError> {
    let print = |out: &mut dyn Write, text: &str| {
        out.write_all(text.as_bytes())
            .map_err(|e| CommandError::Input(format!("cannot write output: {e}")))
    };
    match command {
        Command::Scenario { name, out: path } => {
            let scenario = builtin_scenario(&name)
                .ok_or_else(|| CommandError::Input(format!("unknown scenario {name:?}; expected one of {}", BUILTIN_SCENARIOS.join(", "))))?;
            let mut json = scenario.to_json();
            json.push('\n');
            match path {
                Some(p) => files::write_text(&p, &json)?,
                None => print(out, &json)?,
            }
        }
        Command::Calibrate {
            scenario,
            out: path,
            index,
            start_time,
        } => {
            let scenario = load_scenario(&scenario).map_err(CommandError::Input)?;
            if !(start_time.is_finite() && start_time >= 0.0) {
                return Err(CommandError::Input(format!("--start-time must be a non-negative number, got {start_time}")));
            }
            let file = run_calibration(&scenario, index, start_time)?;
            files::write_text(&path, &file.to_json())?;
            let r = &file.report;
            let mut text = format!("calibration {} written to {}\n", file.calibration_index, path.display());
            for (i, row) in r.theta_deg.iter().enumerate() {
                let thetas: Vec<String> = row.iter().map(|t| format!("{t:.6}")).collect();
                text += &format!("  receiver {}: theta_deg [{}]\n", i + 1, thetas.join(", "));
            }
            print(out, &text)?;
        }
        Command::Transmit {
            calibration,
            msg1,
            msg2,
            bits_per_symbol,
            fec,
            detector,
            transmission_index,
            start_time,
            out_dir,
        } => {
            let cal = CalibrationFile::load(&calibration)?;
            let start_time = start_time.unwrap_or(cal.completed_at_s);
            if !(start_time.is_finite() && start_time >= cal.completed_at_s) {
                return Err(CommandError::Input(format!(
                    "--start-time must not precede the end of calibration ({} s), got {start_time}",
                    cal.completed_at_s
                )));
            }
            let settings = TransmitSettings {
                messages: std::iter::once(msg1).chain(msg2).collect(),
                bits_per_symbol,
                fec,
                detector,
            };
            let (report, outcome) = run_transmission(&cal, &settings, transmission_index, start_time)?;
            files::write_transmission(&out_dir, &report, &outcome)?;
            print(out, &report.summary())?;
        }
        Command::Ber {
            scenario,
            messages,
            chars,
            seed,
            bits_per_symbol,
            fec,
            detector,
            out_dir,
        } => {
            let scenario = load_scenario(&scenario).map_err(CommandError::Input)?;
            let result = run_experiment(ExperimentConfig {
                num_messages: messages,
                chars_per_message: chars,
                bits_per_symbol,
                fec_enabled: fec,
                detector,
                master_seed: seed,
                scenario,
            })?;
            files::write_experiment(&out_dir, &result)?;
            print(out, &result.summary())?;
        }
        Command::Serve {
            scenario,
            host,
            port,
            playback_rate,
            realtime_clock,
        } => {
            let scenario = load_scenario(&scenario).map_err(CommandError::Input)?;
            if !(playback_rate.is_finite() && playback_rate >= 0.0) {
                return Err(CommandError::Input(format!(
                    "--playback-rate must be a non-negative number, got {playback_rate}"
                )));
            }
            let session = Session::new(scenario)?;
            let config = ServiceConfig { playback_rate, realtime_clock };
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CommandError::Input(format!("cannot start runtime: {e}")))?;
            runtime
                .block_on(service::serve(session, config, SocketAddr::new(host, port)))
                .map_err(|e| CommandError::Input(format!("cannot serve on {host}:{port}: {e}")))?;
        }
    }
    Ok(())
}
