//! Scenario files: array geometry, receivers, impairments and link timing.
//!
//! Angles are degrees on disk and radians in memory.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::channel::{ArrayGeometry, ChannelError, NoiseConfig, ReceiverSpec, MIN_SAMPLES_PER_SYMBOL, SPEED_OF_LIGHT};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_SYMBOL_RATE_HZ: f64 = 1000.0;
pub const DEFAULT_SAMPLES_PER_SYMBOL: usize = 16;
pub const DEFAULT_CALIBRATION_SYMBOLS: usize = 64;

/// Four feet, the receive-antenna distance of the reference setup.
pub const REFERENCE_RANGE_M: f64 = 1.2192;
pub const REFERENCE_CARRIER_HZ: f64 = 4.2e9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(#[from] ChannelError),
    #[error("invalid scenario: {0}")]
    Link(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverEntry {
    pub angle_deg: f64,
    pub range_m: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEntry {
    pub awgn_sigma: f64,
    pub phase_noise_sigma_deg: f64,
    pub timing_jitter: f64,
    pub drift_deg_per_s: f64,
    pub seed: u64,
}

fn default_format_version() -> u32 {
    FORMAT_VERSION
}
fn default_symbol_rate() -> f64 {
    DEFAULT_SYMBOL_RATE_HZ
}
fn default_sps() -> usize {
    DEFAULT_SAMPLES_PER_SYMBOL
}
fn default_cal_symbols() -> usize {
    DEFAULT_CALIBRATION_SYMBOLS
}
fn default_positions() -> Vec<f64> {
    vec![0.0, 0.5]
}

/// On-disk scenario. Link-timing fields are optional and default to 1000
/// symbols/s, 16 samples per symbol and 64-symbol calibration captures;
/// element positions default to two elements half a wavelength apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub carrier_hz: f64,
    #[serde(default = "default_positions")]
    pub element_positions_wavelengths: Vec<f64>,
    pub receivers: Vec<ReceiverEntry>,
    pub noise: NoiseEntry,
    #[serde(default = "default_symbol_rate")]
    pub symbol_rate_hz: f64,
    #[serde(default = "default_sps")]
    pub samples_per_symbol: usize,
    #[serde(default = "default_cal_symbols")]
    pub calibration_symbols: usize,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Two elements at λ/2, receivers at 80° and 165°, four feet away, no
    /// impairments.
    pub fn reference() -> Self {
        ScenarioFile {
            format_version: FORMAT_VERSION,
            carrier_hz: REFERENCE_CARRIER_HZ,
            element_positions_wavelengths: default_positions(),
            receivers: [80.0, 165.0]
                .iter()
                .map(|&angle_deg| ReceiverEntry {
                    angle_deg,
                    range_m: REFERENCE_RANGE_M,
                    gain: 1.0,
                })
                .collect(),
            noise: NoiseEntry {
                awgn_sigma: 0.0,
                phase_noise_sigma_deg: 0.0,
                timing_jitter: 0.0,
                drift_deg_per_s: 0.0,
                seed: 1,
            },
            symbol_rate_hz: DEFAULT_SYMBOL_RATE_HZ,
            samples_per_symbol: DEFAULT_SAMPLES_PER_SYMBOL,
            calibration_symbols: DEFAULT_CALIBRATION_SYMBOLS,
        }
    }

    /// The reference geometry with the impairments used for the
    /// long-versus-short message experiment: element-transition jitter that
    /// lets the asynchronous detector fire on intermediate phases, plus mild
    /// phase noise and AWGN.
    pub fn async_impairment() -> Self {
        let mut s = Self::reference();
        s.noise = NoiseEntry {
            awgn_sigma: 0.05,
            phase_noise_sigma_deg: 4.0,
            timing_jitter: 0.028,
            drift_deg_per_s: 0.0,
            seed: 7,
        };
        s
    }

    /// Reference geometry whose second column drifts, so a calibration goes
    /// stale within a few seconds of simulated time.
    pub fn drifting() -> Self {
        let mut s = Self::reference();
        s.noise.drift_deg_per_s = 20.0;
        s
    }

    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        let lambda = SPEED_OF_LIGHT / self.carrier_hz;
        let positions = self.element_positions_wavelengths.iter().map(|x| x * lambda).collect();
        let geometry = ArrayGeometry::new(positions, self.carrier_hz)?;
        let receivers: Vec<ReceiverSpec> = self
            .receivers
            .iter()
            .map(|r| ReceiverSpec {
                angle: r.angle_deg.to_radians(),
                range: r.range_m,
                gain: r.gain,
            })
            .collect();
        if receivers.is_empty() {
            return Err(ChannelError::NoReceivers.into());
        }
        for (i, r) in receivers.iter().enumerate() {
            r.validate(i)?;
        }
        let noise = NoiseConfig {
            awgn_sigma: self.noise.awgn_sigma,
            phase_noise_sigma: self.noise.phase_noise_sigma_deg.to_radians(),
            timing_jitter: self.noise.timing_jitter,
            drift_rate: self.noise.drift_deg_per_s.to_radians(),
            seed: self.noise.seed,
        };
        noise.validate()?;
        if !(self.symbol_rate_hz.is_finite() && self.symbol_rate_hz > 0.0) {
            return Err(ScenarioError::Link(format!("symbol_rate_hz must be positive, got {}", self.symbol_rate_hz)));
        }
        if self.samples_per_symbol < MIN_SAMPLES_PER_SYMBOL {
            return Err(ScenarioError::Link(format!(
                "samples_per_symbol must be at least {MIN_SAMPLES_PER_SYMBOL}, got {}",
                self.samples_per_symbol
            )));
        }
        if self.calibration_symbols == 0 {
            return Err(ScenarioError::Link("calibration_symbols must be at least 1".into()));
        }
        Ok(Scenario {
            file: self.clone(),
            geometry,
            receivers,
            noise,
        })
    }
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub geometry: ArrayGeometry,
    pub receivers: Vec<ReceiverSpec>,
    pub noise: NoiseConfig,
}

impl Scenario {
    pub fn symbol_rate(&self) -> f64 {
        self.file.symbol_rate_hz
    }

    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.file.symbol_rate_hz
    }

    pub fn samples_per_symbol(&self) -> usize {
        self.file.samples_per_symbol
    }

    pub fn sample_rate(&self) -> f64 {
        self.file.symbol_rate_hz * self.file.samples_per_symbol as f64
    }

    pub fn num_receivers(&self) -> usize {
        self.receivers.len()
    }
}
