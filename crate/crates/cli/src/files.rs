//! On-disk records written by the CLI and served by the service.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use dmod::calibration::CalibrationReport;
use dmod::experiments::{BitLog, ExperimentResult};
use dmod::modem::{decode_ascii, write_phase_csv, PhaseTrace};
use dmod::precoder::write_weight_csv;
use dmod::scenario::ScenarioFile;
use dmod::testbed::{DetectorKind, LinkOutcome};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: io::Error },
    #[error("malformed {path}: {reason}")]
    Malformed { path: String, reason: String },
}

pub fn read_text(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|source| FileError::Read {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FileError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| FileError::Write {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| FileError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("record serializes");
    s.push('\n');
    s
}

/// A finished calibration together with the scenario it was taken on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub format_version: u32,
    pub scenario: ScenarioFile,
    pub calibration_index: u64,
    pub seed: u64,
    pub started_at_s: f64,
    pub completed_at_s: f64,
    pub report: CalibrationReport,
}

impl CalibrationFile {
    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        let text = read_text(path)?;
        let file: Self = serde_json::from_str(&text).map_err(|e| FileError::Malformed {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if file.format_version != FORMAT_VERSION {
            return Err(FileError::Malformed {
                path: path.display().to_string(),
                reason: format!("unsupported format_version {}", file.format_version),
            });
        }
        Ok(file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FecReport {
    pub blocks: usize,
    pub converged_blocks: usize,
    pub length_mismatch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub receiver: usize,
    pub sent_text: String,
    pub decoded_text: String,
    pub message_bits: usize,
    pub bits_on_air: usize,
    pub detected_bits: usize,
    pub bit_errors: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub fec: Option<FecReport>,
}

/// Summary of one transmission, identical whether it came from the CLI or
/// the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionReport {
    pub format_version: u32,
    pub transmission_index: u64,
    pub calibration_index: u64,
    pub seed: u64,
    pub start_time_s: f64,
    pub end_time_s: f64,
    pub calibration_age_s: f64,
    pub bits_per_symbol: u8,
    pub fec: bool,
    pub detector: DetectorKind,
    pub channels: Vec<ChannelReport>,
}

impl TransmissionReport {
    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn summary(&self) -> String {
        self.channels
            .iter()
            .map(|c| {
                format!(
                    "channel {}: {:?}\n  bit errors {} of {} (insertions {}, deletions {}, flips {})\n",
                    c.receiver + 1,
                    c.decoded_text,
                    c.bit_errors,
                    c.message_bits,
                    c.insertions,
                    c.deletions,
                    c.substitutions
                )
            })
            .collect()
    }
}

pub fn channel_reports(outcome: &LinkOutcome) -> Vec<ChannelReport> {
    outcome
        .channels
        .iter()
        .map(|c| ChannelReport {
            receiver: c.receiver,
            sent_text: decode_ascii(&c.tx_bits).text,
            decoded_text: c.decoded.text.clone(),
            message_bits: c.tx_bits.len(),
            bits_on_air: c.tx_coded_len,
            detected_bits: c.rx_coded.len(),
            bit_errors: c.bit_errors,
            insertions: c.breakdown.insertions,
            deletions: c.breakdown.deletions,
            substitutions: c.breakdown.substitutions,
            fec: c.fec.as_ref().map(|f| FecReport {
                blocks: f.blocks,
                converged_blocks: f.converged_blocks,
                length_mismatch: f.length_mismatch,
            }),
        })
        .collect()
}

fn phase_csv(trace: &PhaseTrace) -> String {
    let mut buf = Vec::new();
    write_phase_csv(trace.rows(), &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// `phase_{channel}.csv` with channels numbered from 1.
pub fn phase_file_name(receiver: usize) -> String {
    format!("phase_{}.csv", receiver + 1)
}

/// Writes `transmit.json`, per-channel phase CSVs and bit logs, and the
/// transmitted weights.
pub fn write_transmission(dir: &Path, report: &TransmissionReport, outcome: &LinkOutcome) -> Result<Vec<PathBuf>, FileError> {
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<(), FileError> {
        let path = dir.join(name);
        write_text(&path, &text)?;
        written.push(path);
        Ok(())
    };
    put("transmit.json".into(), report.to_json())?;
    let mut weights = Vec::new();
    write_weight_csv(&outcome.weights, &mut weights).expect("in-memory write");
    put("weights.csv".into(), String::from_utf8(weights).expect("csv is utf-8"))?;
    for c in &outcome.channels {
        put(phase_file_name(c.receiver), phase_csv(&c.trace))?;
        let log = BitLog {
            channel: c.receiver + 1,
            message: report.transmission_index as usize,
            tx: c.tx_bits.clone(),
            rx: c.rx_bits.clone(),
        };
        put(log.file_name(), log.render())?;
    }
    Ok(written)
}

/// Writes `stats.json`, every bit log and the phase CSVs of message 0.
pub fn write_experiment(dir: &Path, result: &ExperimentResult) -> Result<(), FileError> {
    write_text(&dir.join("stats.json"), &result.stats.to_json())?;
    for log in result.messages.iter().flat_map(|m| &m.logs) {
        write_text(&dir.join(log.file_name()), &log.render())?;
    }
    for trace in &result.first_traces {
        write_text(&dir.join(phase_file_name(trace.receiver_id)), &phase_csv(trace))?;
    }
    Ok(())
}
