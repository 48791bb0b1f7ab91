//! Batch BER experiments over the simulated link.
//!
//! The headline metric is positional: an inserted symbol shifts every later
//! bit, so one spurious detection costs about half of the remaining bits.
//! An edit-distance breakdown separates insertions from flips alongside it.

mod align;
mod log;
mod stats;

pub use align::{classify_errors, positional_bit_errors, ErrorBreakdown};
pub use log::{BitLog, BitLogError, BIT_LOG_VERSION};
pub use stats::{ber_stats, BerStats};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CalibrationReport;
use crate::channel::ChannelMatrix;
use crate::modem::PhaseTrace;
use crate::scenario::{ScenarioError, ScenarioFile};
use crate::seed::{derive_seed, rng_from, tag};
use crate::testbed::{DetectorKind, LinkRequest, Testbed, TestbedError};

pub const STATS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("num_messages must be at least 1")]
    NoMessages,
    #[error("chars_per_message must be at least 1")]
    NoChars,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Testbed(#[from] TestbedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub num_messages: usize,
    pub chars_per_message: usize,
    pub bits_per_symbol: u8,
    pub fec_enabled: bool,
    pub detector: DetectorKind,
    pub master_seed: u64,
    pub scenario: ScenarioFile,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.num_messages == 0 {
            return Err(ExperimentError::NoMessages);
        }
        if self.chars_per_message == 0 {
            return Err(ExperimentError::NoChars);
        }
        Ok(())
    }
}

/// Uniform printable ASCII, codes 32 to 126.
pub fn random_printable(rng: &mut impl Rng, len: usize) -> String {
    (0..len).map(|_| char::from(rng.random_range(32u8..=126))).collect()
}

/// Outcome of one message across all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageRecord {
    pub index: usize,
    pub seed: u64,
    pub texts: Vec<String>,
    pub logs: Vec<BitLog>,
    pub bit_errors: Vec<usize>,
    pub breakdowns: Vec<ErrorBreakdown>,
    pub anomalies: Vec<String>,
}

/// A calibrated testbed ready to run messages of a configured shape.
pub struct Experiment {
    config: ExperimentConfig,
    testbed: Testbed,
    calibration: CalibrationReport,
    estimate: ChannelMatrix,
    calibration_seed: u64,
    first_message_at: f64,
    message_duration: f64,
}

impl Experiment {
    /// Validates the configuration and calibrates once.
    pub fn prepare(config: ExperimentConfig) -> Result<Self, ExperimentError> {
        config.validate()?;
        let testbed = Testbed::new(config.scenario.build()?)?;
        let calibration_seed = derive_seed(config.master_seed, &[tag::CALIBRATION]);
        let run = testbed.calibrate(calibration_seed, 0.0)?;
        let symbols = Testbed::frame_symbols(config.chars_per_message, config.bits_per_symbol, config.fec_enabled);
        let message_duration = symbols as f64 * testbed.scenario().symbol_duration();
        Ok(Experiment {
            calibration: CalibrationReport::from_calibration(&run.calibration),
            estimate: run.calibration.channel,
            calibration_seed,
            first_message_at: run.completed_at_s,
            message_duration,
            testbed,
            config,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn message_seed(&self, index: usize) -> u64 {
        derive_seed(self.config.master_seed, &[tag::MESSAGE, index as u64])
    }

    /// Runs message `index`. Depends only on the configuration and the index.
    pub fn run_message(&self, index: usize) -> Result<(MessageRecord, Vec<PhaseTrace>), ExperimentError> {
        let seed = self.message_seed(index);
        let n_rx = self.testbed.scenario().num_receivers();
        let texts: Vec<String> = (0..n_rx)
            .map(|n| random_printable(&mut rng_from(derive_seed(seed, &[tag::TEXT, n as u64])), self.config.chars_per_message))
            .collect();
        let req = LinkRequest {
            messages: texts.clone(),
            bits_per_symbol: self.config.bits_per_symbol,
            fec: self.config.fec_enabled,
            detector: self.config.detector,
        };
        let at = self.first_message_at + index as f64 * self.message_duration;
        let out = self.testbed.transmit(&self.estimate, &req, derive_seed(seed, &[tag::NOISE]), at)?;
        let mut anomalies = Vec::new();
        for ch in &out.channels {
            if ch.rx_coded.len() != ch.tx_coded_len {
                anomalies.push(format!(
                    "channel {}: detected {} bits, sent {}",
                    ch.receiver + 1,
                    ch.rx_coded.len(),
                    ch.tx_coded_len
                ));
            }
            if ch.fec.as_ref().is_some_and(|f| f.length_mismatch) {
                anomalies.push(format!("channel {}: codeword framing lost, FEC bypassed", ch.receiver + 1));
            }
        }
        let record = MessageRecord {
            index,
            seed,
            texts,
            logs: out
                .channels
                .iter()
                .map(|ch| BitLog {
                    channel: ch.receiver + 1,
                    message: index,
                    tx: ch.tx_bits.clone(),
                    rx: ch.rx_bits.clone(),
                })
                .collect(),
            bit_errors: out.channels.iter().map(|ch| ch.bit_errors).collect(),
            breakdowns: out.channels.iter().map(|ch| ch.breakdown).collect(),
            anomalies,
        };
        Ok((record, out.channels.into_iter().map(|ch| ch.trace).collect()))
    }

    /// Runs every message in parallel and aggregates in index order.
    pub fn run(self) -> Result<ExperimentResult, ExperimentError> {
        let mut outcomes = (0..self.config.num_messages)
            .into_par_iter()
            .map(|i| self.run_message(i).map(|(rec, traces)| (rec, if i == 0 { traces } else { Vec::new() })))
            .collect::<Result<Vec<_>, _>>()?;
        let first_traces = std::mem::take(&mut outcomes[0].1);
        let messages: Vec<MessageRecord> = outcomes.into_iter().map(|(r, _)| r).collect();
        Ok(ExperimentResult::aggregate(self, messages, first_traces))
    }
}

/// Per-channel aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub channel: usize,
    pub stats: BerStats,
    pub percent_bit_error_2dp: String,
    pub mean_bit_errors_2dp: String,
    pub std_bit_errors_2dp: String,
    pub breakdown: ErrorBreakdown,
    pub messages_with_insertion: usize,
    pub per_message_breakdown: Vec<ErrorBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEcho {
    pub master_seed: u64,
    pub calibration_seed: u64,
    pub message_seeds: Vec<u64>,
}

/// Contents of `stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub seeds: SeedEcho,
    pub calibration: CalibrationReport,
    pub bits_per_channel: u64,
    pub channels: Vec<ChannelSummary>,
    pub anomalies: Vec<String>,
}

impl StatsFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stats serialize");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub struct ExperimentResult {
    pub stats: StatsFile,
    pub messages: Vec<MessageRecord>,
    /// Phase traces of message 0, one per receiver.
    pub first_traces: Vec<PhaseTrace>,
}

impl ExperimentResult {
    fn aggregate(exp: Experiment, messages: Vec<MessageRecord>, first_traces: Vec<PhaseTrace>) -> Self {
        let cfg = &exp.config;
        let bits_per_message = (cfg.chars_per_message * 8) as u64;
        let bits_per_channel = bits_per_message * cfg.num_messages as u64;
        let n_rx = messages[0].bit_errors.len();
        let channels = (0..n_rx)
            .map(|n| {
                let counts: Vec<u64> = messages.iter().map(|m| m.bit_errors[n] as u64).collect();
                let per_message_breakdown: Vec<ErrorBreakdown> = messages.iter().map(|m| m.breakdowns[n]).collect();
                let mut breakdown = ErrorBreakdown::default();
                for b in &per_message_breakdown {
                    breakdown.add(b);
                }
                let stats = ber_stats(&counts, bits_per_channel, cfg.num_messages as u64);
                ChannelSummary {
                    channel: n + 1,
                    percent_bit_error_2dp: stats.percent_2dp(),
                    mean_bit_errors_2dp: stats.mean_2dp(),
                    std_bit_errors_2dp: stats.std_2dp(),
                    stats,
                    breakdown,
                    messages_with_insertion: per_message_breakdown.iter().filter(|b| b.insertions > 0).count(),
                    per_message_breakdown,
                }
            })
            .collect();
        let anomalies = messages
            .iter()
            .flat_map(|m| m.anomalies.iter().map(move |a| format!("message {}: {a}", m.index)))
            .collect();
        let stats = StatsFile {
            format_version: STATS_FORMAT_VERSION,
            seeds: SeedEcho {
                master_seed: cfg.master_seed,
                calibration_seed: exp.calibration_seed,
                message_seeds: messages.iter().map(|m| m.seed).collect(),
            },
            config: exp.config.clone(),
            calibration: exp.calibration.clone(),
            bits_per_channel,
            channels,
            anomalies,
        };
        ExperimentResult { stats, messages, first_traces }
    }

    /// Mean positional BER over channels, as a fraction.
    pub fn mean_ber(&self) -> f64 {
        let ch = &self.stats.channels;
        ch.iter().map(|c| c.stats.percent_bit_error / 100.0).sum::<f64>() / ch.len() as f64
    }

    /// Table-shaped text summary.
    pub fn summary(&self) -> String {
        let cfg = &self.stats.config;
        let mut s = format!(
            "{} messages x {} chars, B = {}, FEC {}, {} detector: {} bits per channel\n",
            cfg.num_messages,
            cfg.chars_per_message,
            cfg.bits_per_symbol,
            if cfg.fec_enabled { "on" } else { "off" },
            cfg.detector,
            self.stats.bits_per_channel
        );
        s.push_str("Channel | Total Bit Errors | % Bit Error | Mean Bit Errors | STD Bit Errors | Insertions | Deletions | Flips\n");
        for c in &self.stats.channels {
            s.push_str(&format!(
                "{:>7} | {:>16} | {:>11} | {:>15} | {:>14} | {:>10} | {:>9} | {:>5}\n",
                c.channel,
                c.stats.total_bit_errors,
                c.percent_bit_error_2dp,
                c.mean_bit_errors_2dp,
                c.std_bit_errors_2dp,
                c.breakdown.insertions,
                c.breakdown.deletions,
                c.breakdown.substitutions
            ));
        }
        s
    }
}

/// Calibrates and runs the whole batch.
pub fn run_experiment(config: ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    Experiment::prepare(config)?.run()
}
