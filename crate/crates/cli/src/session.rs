//! Calibrate/transmit logic shared by the CLI and the service.

use serde::{Deserialize, Serialize};

use dmod::calibration::{CalibrationError, CalibrationReport};
use dmod::channel::ChannelMatrix;
use dmod::phrases::generate_messages;
use dmod::scenario::{ScenarioError, ScenarioFile};
use dmod::seed::{derive_seed, tag};
use dmod::testbed::{DetectorKind, LinkOutcome, LinkRequest, Testbed, TestbedError};

use crate::files::{channel_reports, CalibrationFile, TransmissionReport, FORMAT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("calibration failed: {0}")]
    Calibration(CalibrationError),
    #[error("{field}: {message}")]
    Field { field: &'static str, message: String },
    #[error("calibration required")]
    CalibrationRequired,
    #[error(transparent)]
    Link(TestbedError),
}

impl From<TestbedError> for SessionError {
    fn from(e: TestbedError) -> Self {
        match e {
            TestbedError::Calibration(c) => SessionError::Calibration(c),
            TestbedError::Modem(dmod::modem::ModemError::NonAscii { index, ch }) => SessionError::Field {
                field: "messages",
                message: format!("character {ch:?} at index {index} is not 7-bit ASCII"),
            },
            TestbedError::MessageCount { expected, got } => SessionError::Field {
                field: "messages",
                message: format!("expected {expected} messages, got {got}"),
            },
            other => SessionError::Link(other),
        }
    }
}

pub fn calibration_seed(scenario: &ScenarioFile, index: u64) -> u64 {
    derive_seed(scenario.noise.seed, &[tag::CALIBRATION, index])
}

pub fn transmission_seed(scenario: &ScenarioFile, index: u64) -> u64 {
    derive_seed(scenario.noise.seed, &[tag::TRANSMIT, index])
}

/// Modem settings of one transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitSettings {
    pub messages: Vec<String>,
    pub bits_per_symbol: u8,
    pub fec: bool,
    pub detector: DetectorKind,
}

impl TransmitSettings {
    pub fn validate(&self, receivers: usize) -> Result<(), SessionError> {
        if !(1..=dmod::modem::MAX_BITS_PER_SYMBOL).contains(&self.bits_per_symbol) {
            return Err(SessionError::Field {
                field: "bits_per_symbol",
                message: format!("must be in 1..=4, got {}", self.bits_per_symbol),
            });
        }
        if self.messages.len() != receivers {
            return Err(SessionError::Field {
                field: "messages",
                message: format!("expected {receivers} messages, got {}", self.messages.len()),
            });
        }
        if let Some((i, m)) = self.messages.iter().enumerate().find(|(_, m)| !m.is_ascii() || m.contains('\0')) {
            return Err(SessionError::Field {
                field: "messages",
                message: format!("message {} must be ASCII without NUL characters: {m:?}", i + 1),
            });
        }
        Ok(())
    }
}

/// Runs calibration number `index` starting at `start_time`.
pub fn run_calibration(scenario: &ScenarioFile, index: u64, start_time: f64) -> Result<CalibrationFile, SessionError> {
    let testbed = Testbed::new(scenario.build()?)?;
    let seed = calibration_seed(scenario, index);
    let run = testbed.calibrate(seed, start_time)?;
    Ok(CalibrationFile {
        format_version: FORMAT_VERSION,
        scenario: scenario.clone(),
        calibration_index: index,
        seed,
        started_at_s: run.started_at_s,
        completed_at_s: run.completed_at_s,
        report: CalibrationReport::from_calibration(&run.calibration),
    })
}

/// Runs transmission number `index` at `start_time` with the matrix recorded
/// in `calibration`.
pub fn run_transmission(
    calibration: &CalibrationFile,
    settings: &TransmitSettings,
    index: u64,
    start_time: f64,
) -> Result<(TransmissionReport, LinkOutcome), SessionError> {
    let testbed = Testbed::new(calibration.scenario.build()?)?;
    settings.validate(testbed.scenario().num_receivers())?;
    let estimate: ChannelMatrix = calibration.report.channel().map_err(|e| SessionError::Field {
        field: "calibration",
        message: e.to_string(),
    })?;
    let seed = transmission_seed(&calibration.scenario, index);
    let req = LinkRequest::interactive(&settings.messages, settings.bits_per_symbol, settings.fec, settings.detector);
    let outcome = testbed.transmit(&estimate, &req, seed, start_time)?;
    let report = TransmissionReport {
        format_version: FORMAT_VERSION,
        transmission_index: index,
        calibration_index: calibration.calibration_index,
        seed,
        start_time_s: outcome.start_time,
        end_time_s: outcome.end_time,
        calibration_age_s: start_time - calibration.completed_at_s,
        bits_per_symbol: settings.bits_per_symbol,
        fec: settings.fec,
        detector: settings.detector,
        channels: channel_reports(&outcome),
    };
    Ok((report, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub transmissions: u64,
    pub bit_errors: Vec<u64>,
    pub bits: Vec<u64>,
}

/// State of one operator session. The clock is simulated time in seconds;
/// it advances by the duration of each calibration and transmission.
#[derive(Debug, Clone)]
pub struct Session {
    scenario: ScenarioFile,
    receivers: usize,
    clock_s: f64,
    calibration: Option<CalibrationFile>,
    calibrations_started: u64,
    transmissions_started: u64,
    phrase_draws: u64,
    counters: Counters,
    modem: ModemView,
    last_transmission: Option<TransmissionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModemView {
    pub bits_per_symbol: u8,
    pub fec: bool,
    pub detector: DetectorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationView {
    pub index: u64,
    pub seed: u64,
    pub started_at_s: f64,
    pub completed_at_s: f64,
    pub age_s: f64,
    pub report: CalibrationReport,
}

/// What `GET /session` returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub state: String,
    pub clock_s: f64,
    pub scenario: ScenarioFile,
    pub calibration: Option<CalibrationView>,
    pub modem: ModemView,
    pub counters: Counters,
    pub last_transmission: Option<TransmissionReport>,
}

/// Everything a transmission needs, captured so the work can run without
/// holding the session.
#[derive(Debug, Clone)]
pub struct PendingTransmission {
    pub calibration: CalibrationFile,
    pub settings: TransmitSettings,
    pub index: u64,
    pub start_time: f64,
}

impl Session {
    pub fn new(scenario: ScenarioFile) -> Result<Self, SessionError> {
        let receivers = scenario.build()?.num_receivers();
        Ok(Session {
            scenario,
            receivers,
            clock_s: 0.0,
            calibration: None,
            calibrations_started: 0,
            transmissions_started: 0,
            phrase_draws: 0,
            counters: Counters {
                transmissions: 0,
                bit_errors: vec![0; receivers],
                bits: vec![0; receivers],
            },
            modem: ModemView {
                bits_per_symbol: 1,
                fec: false,
                detector: DetectorKind::Sync,
            },
            last_transmission: None,
        })
    }

    pub fn scenario(&self) -> &ScenarioFile {
        &self.scenario
    }

    pub fn receivers(&self) -> usize {
        self.receivers
    }

    pub fn clock(&self) -> f64 {
        self.clock_s
    }

    /// Lets simulated time pass with nothing on the air.
    pub fn advance_clock(&mut self, seconds: f64) {
        if seconds > 0.0 {
            self.clock_s += seconds;
        }
    }

    pub fn calibration(&self) -> Option<&CalibrationFile> {
        self.calibration.as_ref()
    }

    pub fn calibration_age(&self) -> Option<f64> {
        self.calibration.as_ref().map(|c| self.clock_s - c.completed_at_s)
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    /// Calibrates at the current clock and keeps the result.
    pub fn calibrate(&mut self) -> Result<&CalibrationFile, SessionError> {
        let index = self.calibrations_started;
        self.calibrations_started += 1;
        let file = run_calibration(&self.scenario, index, self.clock_s)?;
        self.clock_s = file.completed_at_s;
        Ok(self.calibration.insert(file))
    }

    /// Reserves the next transmission slot. Fails without a calibration.
    pub fn begin_transmission(&mut self, settings: TransmitSettings) -> Result<PendingTransmission, SessionError> {
        settings.validate(self.receivers)?;
        let calibration = self.calibration.clone().ok_or(SessionError::CalibrationRequired)?;
        let index = self.transmissions_started;
        self.transmissions_started += 1;
        self.modem = ModemView {
            bits_per_symbol: settings.bits_per_symbol,
            fec: settings.fec,
            detector: settings.detector,
        };
        Ok(PendingTransmission {
            calibration,
            settings,
            index,
            start_time: self.clock_s,
        })
    }

    /// Marks the air time of a computed transmission as used.
    pub fn occupy_until(&mut self, end_time: f64) {
        self.clock_s = self.clock_s.max(end_time);
    }

    /// Adds a delivered transmission to the counters.
    pub fn commit(&mut self, report: TransmissionReport) {
        self.counters.transmissions += 1;
        for c in &report.channels {
            self.counters.bit_errors[c.receiver] += c.bit_errors as u64;
            self.counters.bits[c.receiver] += c.message_bits as u64;
        }
        self.last_transmission = Some(report);
    }

    /// Transmits synchronously and commits the result.
    pub fn transmit(&mut self, settings: TransmitSettings) -> Result<(TransmissionReport, LinkOutcome), SessionError> {
        let p = self.begin_transmission(settings)?;
        let (report, outcome) = run_transmission(&p.calibration, &p.settings, p.index, p.start_time)?;
        self.occupy_until(report.end_time_s);
        self.commit(report.clone());
        Ok((report, outcome))
    }

    /// One stock phrase per receiver.
    pub fn generate_messages(&mut self) -> Vec<String> {
        let draw = self.phrase_draws;
        self.phrase_draws += 1;
        generate_messages(self.scenario.noise.seed, draw, self.receivers)
    }

    pub fn view(&self, state: &str) -> SessionView {
        SessionView {
            state: state.to_string(),
            clock_s: self.clock_s,
            scenario: self.scenario.clone(),
            calibration: self.calibration.as_ref().map(|c| CalibrationView {
                index: c.calibration_index,
                seed: c.seed,
                started_at_s: c.started_at_s,
                completed_at_s: c.completed_at_s,
                age_s: self.clock_s - c.completed_at_s,
                report: c.report.clone(),
            }),
            modem: self.modem.clone(),
            counters: self.counters.clone(),
            last_transmission: self.last_transmission.clone(),
        }
    }
}
