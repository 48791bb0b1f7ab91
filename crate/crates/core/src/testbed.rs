//! The simulated link: calibration captures and end-to-end transmissions
//! against a scenario's true channel. The CLI, the service and the BER
//! harness all go through here.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;
use thiserror::Error;

use crate::calibration::{calibrate, calibration_schedule, steady_state_amplitude, Calibration, CalibrationConfig, CalibrationError};
use crate::channel::{propagate, synth_channel, ChannelError, ChannelMatrix};
use crate::experiments::{classify_errors, positional_bit_errors, ErrorBreakdown};
use crate::fec::{FecError, LdpcCode, DEFAULT_CODE_LENGTH, DEFAULT_MAX_ITERATIONS};
use crate::modem::{
    async_detect, decode_ascii, dpsk_modulate, encode_ascii, pad_messages, sync_detect, uniform_boundaries, DecodedText, DetectorConfig, DpskConfig,
    ModemError, PhaseTrace,
};
use crate::precoder::{build_weight_stream, PowerPolicy, PrecoderError, WeightStream};
use crate::scenario::Scenario;
use crate::seed::{derive_seed, tag};

/// Seed of the shared LDPC code.
pub const FEC_CODE_SEED: u64 = 1;

/// The (3,6) code used whenever FEC is enabled.
pub fn fec_code() -> &'static LdpcCode {
    static CODE: OnceLock<LdpcCode> = OnceLock::new();
    CODE.get_or_init(|| LdpcCode::build(FEC_CODE_SEED, DEFAULT_CODE_LENGTH).expect("default code builds"))
}

#[derive(Debug, Error)]
pub enum TestbedError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Precoder(#[from] PrecoderError),
    #[error(transparent)]
    Modem(#[from] ModemError),
    #[error("expected {expected} messages, one per receiver, got {got}")]
    MessageCount { expected: usize, got: usize },
    #[error("estimated channel is {got_rows}x{got_cols}, scenario needs {rows}x{cols}")]
    EstimateShape {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Sync,
    Async,
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorKind::Sync => "sync",
            DetectorKind::Async => "async",
        })
    }
}

impl FromStr for DetectorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sync" => Ok(DetectorKind::Sync),
            "async" => Ok(DetectorKind::Async),
            other => Err(format!("detector must be sync or async, got {other:?}")),
        }
    }
}

/// Ends every operator-typed message on the air.
pub const MESSAGE_TERMINATOR: char = '\0';

/// One transmission: a message per receiver plus modem settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRequest {
    pub messages: Vec<String>,
    pub bits_per_symbol: u8,
    pub fec: bool,
    pub detector: DetectorKind,
}

impl LinkRequest {
    /// Operator messages, each sent NUL-terminated. The terminator decodes
    /// as padding, so the received text equals the typed text.
    pub fn interactive<S: AsRef<str>>(messages: &[S], bits_per_symbol: u8, fec: bool, detector: DetectorKind) -> Self {
        LinkRequest {
            messages: messages
                .iter()
                .map(|m| {
                    let mut s = m.as_ref().to_owned();
                    s.push(MESSAGE_TERMINATOR);
                    s
                })
                .collect(),
            bits_per_symbol,
            fec,
            detector,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FecOutcome {
    pub blocks: usize,
    pub converged_blocks: usize,
    /// The detected stream was not a whole number of codewords; message bits
    /// were read from the systematic positions without decoding.
    pub length_mismatch: bool,
}

/// What one receiver got.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOutcome {
    pub receiver: usize,
    /// Message after NUL padding to the common length.
    pub sent: String,
    /// Message bits before FEC and modulation padding.
    pub tx_bits: Vec<u8>,
    /// Bits on the air (coded when FEC is on), before modulation padding.
    pub tx_coded_len: usize,
    /// Detected bits with the modulation padding removed.
    pub rx_coded: Vec<u8>,
    /// Recovered message bits, compared against `tx_bits`.
    pub rx_bits: Vec<u8>,
    pub decoded: DecodedText,
    pub bit_errors: usize,
    pub breakdown: ErrorBreakdown,
    pub fec: Option<FecOutcome>,
    pub trace: PhaseTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkOutcome {
    pub channels: Vec<ChannelOutcome>,
    pub weights: WeightStream,
    pub start_time: f64,
    pub end_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRun {
    pub calibration: Calibration,
    pub started_at_s: f64,
    pub completed_at_s: f64,
}

/// A scenario with its ground-truth channel.
#[derive(Debug, Clone)]
pub struct Testbed {
    scenario: Scenario,
    truth: ChannelMatrix,
}

impl Testbed {
    pub fn new(scenario: Scenario) -> Result<Self, TestbedError> {
        let truth = synth_channel(&scenario.geometry, &scenario.receivers)?;
        Ok(Testbed { scenario, truth })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn truth(&self) -> &ChannelMatrix {
        &self.truth
    }

    /// Simulated seconds one calibration takes.
    pub fn calibration_duration(&self) -> f64 {
        let steps = calibration_schedule(self.truth.num_elements()).len();
        (steps * self.scenario.file.calibration_symbols) as f64 * self.scenario.symbol_duration()
    }

    /// Runs the calibration sequence starting at `start_time`. Each capture
    /// holds its weights for the scenario's calibration length and draws
    /// noise from `(seed, step)`.
    pub fn calibrate(&self, seed: u64, start_time: f64) -> Result<CalibrationRun, TestbedError> {
        let symbols = self.scenario.file.calibration_symbols;
        let capture = symbols as f64 * self.scenario.symbol_duration();
        let mut step = 0u64;
        let mut channel_error = None;
        let result = calibrate(self.truth.num_elements(), &CalibrationConfig::default(), |w| {
            let at = start_time + step as f64 * capture;
            let noise = self.scenario.noise.with_seed(derive_seed(seed, &[tag::CALIBRATION, step]));
            step += 1;
            let stream = WeightStream::constant(w.to_vec(), symbols, self.scenario.symbol_duration());
            match propagate(&self.truth, &stream, &noise, self.scenario.sample_rate(), at) {
                Ok(rx) => Ok(rx.samples.iter().map(|s| steady_state_amplitude(s)).collect()),
                Err(e) => {
                    let msg = e.to_string();
                    channel_error = Some(e);
                    Err(msg)
                }
            }
        });
        if let Some(e) = channel_error {
            return Err(e.into());
        }
        Ok(CalibrationRun {
            calibration: result?,
            started_at_s: start_time,
            completed_at_s: start_time + self.calibration_duration(),
        })
    }

    /// Symbols on the air, reference included, for messages of `chars`
    /// characters.
    pub fn frame_symbols(chars: usize, bits_per_symbol: u8, fec: bool) -> usize {
        let bits = chars * 8;
        let coded = if fec { fec_code().n() * bits.div_ceil(fec_code().k()) } else { bits };
        coded.div_ceil(bits_per_symbol as usize) + 1
    }

    /// Encodes, precodes with `estimate`, propagates through the true channel
    /// and detects at every receiver.
    pub fn transmit(&self, estimate: &ChannelMatrix, req: &LinkRequest, seed: u64, start_time: f64) -> Result<LinkOutcome, TestbedError> {
        let n_rx = self.truth.num_receivers();
        if req.messages.len() != n_rx {
            return Err(TestbedError::MessageCount {
                expected: n_rx,
                got: req.messages.len(),
            });
        }
        if estimate.num_receivers() != n_rx || estimate.num_elements() != self.truth.num_elements() {
            return Err(TestbedError::EstimateShape {
                rows: n_rx,
                cols: self.truth.num_elements(),
                got_rows: estimate.num_receivers(),
                got_cols: estimate.num_elements(),
            });
        }
        let cfg = DpskConfig::new(req.bits_per_symbol, self.scenario.symbol_rate(), 0.0)?;
        let sent = pad_messages(&req.messages);
        let tx_bits = sent.iter().map(|m| encode_ascii(m).map(|b| b.bits)).collect::<Result<Vec<_>, _>>()?;
        let coded: Vec<Vec<u8>> = if req.fec {
            tx_bits.iter().map(|b| fec_code().encode_stream(b).0).collect()
        } else {
            tx_bits.clone()
        };
        let symbols: Vec<_> = coded.iter().map(|c| dpsk_modulate(c, &cfg)).collect();
        let phases: Vec<Vec<f64>> = symbols.iter().map(|s| s.phases.clone()).collect();
        let weights = build_weight_stream(estimate, &phases, PowerPolicy::PeakUnit, cfg.symbol_duration())?;
        let fs = self.scenario.sample_rate();
        let noise = self.scenario.noise.with_seed(seed);
        let rx = propagate(&self.truth, &weights, &noise, fs, start_time)?;
        let sps = self.scenario.samples_per_symbol();

        let mut channels = Vec::with_capacity(n_rx);
        for (n, samples) in rx.samples.iter().enumerate() {
            let trace = PhaseTrace::from_samples(n, samples, fs, start_time);
            let detected = match req.detector {
                DetectorKind::Sync => sync_detect(&trace, &cfg, &uniform_boundaries(phases[n].len(), sps))?,
                DetectorKind::Async => async_detect(&trace, &cfg, &DetectorConfig::default_for(&cfg))?,
            };
            let mut rx_coded = detected.bits;
            let pad = symbols[n].padding_bits.min(rx_coded.len());
            rx_coded.truncate(rx_coded.len() - pad);
            let (rx_bits, fec) = if req.fec {
                recover_fec(&rx_coded, tx_bits[n].len())
            } else {
                (rx_coded.clone(), None)
            };
            let message_len = tx_bits[n].len().min(rx_bits.len());
            channels.push(ChannelOutcome {
                receiver: n,
                sent: sent[n].clone(),
                tx_coded_len: coded[n].len(),
                bit_errors: positional_bit_errors(&tx_bits[n], &rx_bits),
                breakdown: classify_errors(&tx_bits[n], &rx_bits),
                decoded: decode_ascii(&rx_bits[..message_len]),
                tx_bits: tx_bits[n].clone(),
                rx_coded,
                rx_bits,
                fec,
                trace,
            });
        }
        let end_time = start_time + rx.len() as f64 / fs;
        Ok(LinkOutcome {
            channels,
            weights,
            start_time,
            end_time,
        })
    }
}

/// Decodes a detected coded stream. When insertions or deletions broke the
/// codeword framing the decoder cannot run, so the systematic message
/// positions of each block are read as they are.
fn recover_fec(rx_coded: &[u8], message_len: usize) -> (Vec<u8>, Option<FecOutcome>) {
    let code = fec_code();
    match code.decode_stream(rx_coded, message_len, DEFAULT_MAX_ITERATIONS) {
        Ok(out) => (
            out.bits,
            Some(FecOutcome {
                blocks: out.blocks,
                converged_blocks: out.converged_blocks,
                length_mismatch: false,
            }),
        ),
        Err(FecError::LengthMismatch { .. }) => {
            let mut bits: Vec<u8> = rx_coded.chunks(code.n()).flat_map(|c| c[..code.k().min(c.len())].to_vec()).collect();
            bits.truncate(message_len);
            (
                bits,
                Some(FecOutcome {
                    blocks: message_len.div_ceil(code.k()),
                    converged_blocks: 0,
                    length_mismatch: true,
                }),
            )
        }
        Err(e) => unreachable!("decode_stream only fails on length: {e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioFile;

    fn reference() -> Testbed {
        Testbed::new(ScenarioFile::reference().build().unwrap()).unwrap()
    }

    fn request(b: u8, fec: bool, detector: DetectorKind) -> LinkRequest {
        LinkRequest::interactive(&["To satisfy some very young mathematician.", "It should be obvious."], b, fec, detector)
    }

    #[test]
    fn noiseless_reference_link_is_error_free() {
        let tb = reference();
        let cal = tb.calibrate(1, 0.0).unwrap();
        for b in 1..=4 {
            for det in [DetectorKind::Sync, DetectorKind::Async] {
                let out = tb.transmit(&cal.calibration.channel, &request(b, false, det), 9, cal.completed_at_s).unwrap();
                assert!(out.channels.iter().all(|c| c.tx_bits.len() == 336));
                assert_eq!(out.channels[0].decoded.text, "To satisfy some very young mathematician.");
                assert_eq!(out.channels[1].decoded.text, "It should be obvious.");
                assert!(out.channels.iter().all(|c| c.bit_errors == 0), "B={b} {det}");
            }
        }
    }

    #[test]
    fn fec_doubles_bits_on_air() {
        let tb = reference();
        let cal = tb.calibrate(1, 0.0).unwrap();
        let out = tb.transmit(&cal.calibration.channel, &request(2, true, DetectorKind::Sync), 3, 0.0).unwrap();
        let ch = &out.channels[0];
        assert_eq!(ch.tx_coded_len, DEFAULT_CODE_LENGTH);
        assert_eq!(ch.decoded.text, "To satisfy some very young mathematician.");
        assert_eq!(ch.fec.as_ref().unwrap().converged_blocks, 1);
    }

    #[test]
    fn systematic_fallback_on_broken_framing() {
        let code = fec_code();
        let msg: Vec<u8> = (0..code.k()).map(|i| (i % 3 == 0) as u8).collect();
        let mut coded = code.encode_stream(&msg).0;
        coded.insert(700, 1);
        let (bits, fec) = recover_fec(&coded, msg.len());
        assert!(fec.unwrap().length_mismatch);
        assert_eq!(bits, msg);
    }

    #[test]
    fn wrong_message_count_rejected() {
        let tb = reference();
        let mut req = request(1, false, DetectorKind::Sync);
        req.messages.pop();
        let err = tb.transmit(tb.truth(), &req, 0, 0.0).unwrap_err();
        assert!(matches!(err, TestbedError::MessageCount { expected: 2, got: 1 }));
    }

    #[test]
    fn frame_symbols_counts_reference() {
        assert_eq!(Testbed::frame_symbols(100, 1, false), 801);
        assert_eq!(Testbed::frame_symbols(10, 3, false), 28);
        assert_eq!(Testbed::frame_symbols(10, 1, true), DEFAULT_CODE_LENGTH + 1);
    }
}
