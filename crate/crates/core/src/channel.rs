//! Far-field channel synthesis for a linear array and simulated propagation of
//! weighted transmissions into noisy complex-baseband receiver streams.
//!
//! The simulator never sees the carrier: 4.2 GHz only enters through the
//! wavelength used for the inter-element phase. Angles are measured from
//! endfire (the +x array axis), so broadside is `π/2`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use thiserror::Error;

use crate::precoder::WeightStream;
use crate::seed::{derive_seed, rng_from, tag};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Minimum number of samples per symbol accepted by [`propagate`].
pub const MIN_SAMPLES_PER_SYMBOL: usize = 8;

/// Largest timing offset applied to an element transition, as a fraction of
/// the symbol period. Keeps jittered boundaries ordered.
const MAX_JITTER_FRACTION: f64 = 0.45;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("array needs at least 2 elements, got {0}")]
    TooFewElements(usize),
    #[error("element positions must be strictly increasing and finite")]
    UnorderedPositions,
    #[error("carrier frequency must be positive and finite, got {0}")]
    BadCarrier(f64),
    #[error("receiver {index}: angle {angle} rad outside [0, pi]")]
    BadAngle { index: usize, angle: f64 },
    #[error("receiver {index}: range must be positive, got {range}")]
    SingularRange { index: usize, range: f64 },
    #[error("receiver {index}: gain must be finite and non-negative, got {gain}")]
    BadGain { index: usize, gain: f64 },
    #[error("no receivers given")]
    NoReceivers,
    #[error("channel matrix must be at least 1x2 with finite entries")]
    BadMatrix,
    #[error("noise parameter {0} must be finite and non-negative")]
    BadNoise(&'static str),
    #[error("dimension mismatch: H has {expected} columns, weight vector has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample rate gives {0} samples per symbol, need at least {MIN_SAMPLES_PER_SYMBOL}")]
    InsufficientSampleRate(usize),
}

/// Positions of the array elements along the array axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    element_positions: Vec<f64>,
    carrier_frequency: f64,
}

impl ArrayGeometry {
    pub fn new(element_positions: Vec<f64>, carrier_frequency: f64) -> Result<Self, ChannelError> {
        if element_positions.len() < 2 {
            return Err(ChannelError::TooFewElements(element_positions.len()));
        }
        if !(carrier_frequency.is_finite() && carrier_frequency > 0.0) {
            return Err(ChannelError::BadCarrier(carrier_frequency));
        }
        let ordered = element_positions.iter().all(|x| x.is_finite()) && element_positions.windows(2).all(|w| w[1] > w[0]);
        if !ordered {
            return Err(ChannelError::UnorderedPositions);
        }
        Ok(ArrayGeometry {
            element_positions,
            carrier_frequency,
        })
    }

    /// Uniform linear array with `spacing_wavelengths` between neighbours.
    pub fn uniform(num_elements: usize, spacing_wavelengths: f64, carrier_frequency: f64) -> Result<Self, ChannelError> {
        let lambda = SPEED_OF_LIGHT / carrier_frequency;
        let positions = (0..num_elements).map(|m| m as f64 * spacing_wavelengths * lambda).collect();
        Self::new(positions, carrier_frequency)
    }

    pub fn element_positions(&self) -> &[f64] {
        &self.element_positions
    }

    pub fn carrier_frequency(&self) -> f64 {
        self.carrier_frequency
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn num_elements(&self) -> usize {
        self.element_positions.len()
    }
}

/// A receive antenna in the far field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverSpec {
    /// Radians from endfire.
    pub angle: f64,
    /// Meters.
    pub range: f64,
    /// Linear amplitude gain, ≥ 0.
    pub gain: f64,
}

impl ReceiverSpec {
    pub fn validate(&self, index: usize) -> Result<(), ChannelError> {
        if !(self.angle.is_finite() && (0.0..=PI).contains(&self.angle)) {
            return Err(ChannelError::BadAngle { index, angle: self.angle });
        }
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(ChannelError::SingularRange { index, range: self.range });
        }
        // zero is allowed: a dead receiver is for calibration to detect
        if !(self.gain.is_finite() && self.gain >= 0.0) {
            return Err(ChannelError::BadGain { index, gain: self.gain });
        }
        Ok(())
    }
}

/// Impairments applied by [`propagate`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseConfig {
    /// Standard deviation of the complex AWGN sample (total over I and Q).
    pub awgn_sigma: f64,
    /// Radians, per sample.
    pub phase_noise_sigma: f64,
    /// Std of the instant at which a receiver observes each element's symbol
    /// change, as a fraction of the symbol period. Drawn independently per
    /// receiver, element and boundary.
    pub timing_jitter: f64,
    /// Radians per second rotation of column 2 relative to column 1.
    pub drift_rate: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        NoiseConfig::default()
    }

    pub fn with_seed(self, seed: u64) -> Self {
        NoiseConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !nonneg(self.awgn_sigma) {
            return Err(ChannelError::BadNoise("awgn_sigma"));
        }
        if !nonneg(self.phase_noise_sigma) {
            return Err(ChannelError::BadNoise("phase_noise_sigma"));
        }
        if !nonneg(self.timing_jitter) {
            return Err(ChannelError::BadNoise("timing_jitter"));
        }
        if !self.drift_rate.is_finite() {
            return Err(ChannelError::BadNoise("drift_rate"));
        }
        Ok(())
    }
}

/// N×M complex gains from transmit element `m` (column) to receiver `n` (row).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: DMatrix<Complex64>,
}

impl ChannelMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self, ChannelError> {
        if entries.nrows() < 1 || entries.ncols() < 2 || entries.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(ChannelError::BadMatrix);
        }
        Ok(ChannelMatrix { entries })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self, ChannelError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(ChannelError::BadMatrix);
        }
        Self::new(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }

    pub fn num_receivers(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_elements(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.entries[(n, m)]
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        (0..self.num_receivers()).map(|n| self.entries.row(n).iter().copied().collect()).collect()
    }

    /// `H · w`.
    pub fn apply(&self, w: &[Complex64]) -> Result<Vec<Complex64>, ChannelError> {
        if w.len() != self.num_elements() {
            return Err(ChannelError::DimensionMismatch {
                expected: self.num_elements(),
                got: w.len(),
            });
        }
        Ok((0..self.num_receivers())
            .map(|n| self.entries.row(n).iter().zip(w).map(|(h, w)| h * w).sum())
            .collect())
    }
}

/// Complex baseband samples captured at each receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct RxSampleStream {
    pub sample_rate: f64,
    pub start_time: f64,
    pub samples: Vec<Vec<Complex64>>,
}

impl RxSampleStream {
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds the far-field channel matrix:
/// `h_nm = (g_n / r_n) · exp(−j·2π·(r_n − x_m·cos θ_n) / λ)`.
pub fn synth_channel(geometry: &ArrayGeometry, receivers: &[ReceiverSpec]) -> Result<ChannelMatrix, ChannelError> {
    if receivers.is_empty() {
        return Err(ChannelError::NoReceivers);
    }
    for (n, rx) in receivers.iter().enumerate() {
        rx.validate(n)?;
    }
    let lambda = geometry.wavelength();
    let positions = geometry.element_positions();
    let entries = DMatrix::from_fn(receivers.len(), positions.len(), |n, m| {
        let rx = &receivers[n];
        let path = rx.range - positions[m] * rx.angle.cos();
        Complex64::from_polar(rx.gain / rx.range, -2.0 * PI * path / lambda)
    });
    ChannelMatrix::new(entries)
}

/// Number of samples per symbol implied by a symbol duration and sample rate.
pub fn samples_per_symbol(symbol_duration: f64, sample_rate: f64) -> usize {
    (symbol_duration * sample_rate).round().max(0.0) as usize
}

/// Sends `weights` through `h`, one weight vector per symbol period, and
/// returns the samples seen by every receiver.
///
/// Per sample `t` receiver `n` gets `Σ_m h_nm(t)·w_m(t)` rotated by phase
/// noise plus complex AWGN. Column 2 rotates by `exp(−j·drift_rate·t)`.
/// Output is a pure function of the inputs and `noise.seed`.
pub fn propagate(h: &ChannelMatrix, weights: &WeightStream, noise: &NoiseConfig, sample_rate: f64, start_time: f64) -> Result<RxSampleStream, ChannelError> {
    noise.validate()?;
    let m_count = h.num_elements();
    if let Some(bad) = weights.vectors.iter().find(|w| w.len() != m_count) {
        return Err(ChannelError::DimensionMismatch {
            expected: m_count,
            got: bad.len(),
        });
    }
    let sps = samples_per_symbol(weights.symbol_duration, sample_rate);
    if sps < MIN_SAMPLES_PER_SYMBOL {
        return Err(ChannelError::InsufficientSampleRate(sps));
    }
    let num_symbols = weights.vectors.len();
    let total = num_symbols * sps;
    let dt = 1.0 / sample_rate;

    let samples = (0..h.num_receivers())
        .map(|n| {
            let boundaries = jittered_boundaries(noise, n, m_count, num_symbols, sps);
            let mut noise_rng = rng_from(derive_seed(noise.seed, &[tag::NOISE, n as u64]));
            let mut current = vec![0usize; m_count];
            let row: Vec<Complex64> = (0..m_count).map(|m| h.get(n, m)).collect();
            let mut out = Vec::with_capacity(total);
            for i in 0..total {
                let t = start_time + i as f64 * dt;
                let pos = i as f64;
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..m_count {
                    let b = &boundaries[m];
                    while current[m] < b.len() && b[current[m]] <= pos {
                        current[m] += 1;
                    }
                    let mut gain = row[m];
                    if m == 1 && noise.drift_rate != 0.0 {
                        gain *= Complex64::from_polar(1.0, -noise.drift_rate * t);
                    }
                    acc += gain * weights.vectors[current[m]][m];
                }
                if noise.phase_noise_sigma > 0.0 {
                    let phi: f64 = noise_rng.sample(StandardNormal);
                    acc *= Complex64::from_polar(1.0, noise.phase_noise_sigma * phi);
                }
                if noise.awgn_sigma > 0.0 {
                    let s = noise.awgn_sigma / std::f64::consts::SQRT_2;
                    let re: f64 = noise_rng.sample(StandardNormal);
                    let im: f64 = noise_rng.sample(StandardNormal);
                    acc += Complex64::new(s * re, s * im);
                }
                out.push(acc);
            }
            out
        })
        .collect();

    Ok(RxSampleStream {
        sample_rate,
        start_time,
        samples,
    })
}

/// For receiver `n`, the (fractional) sample index at which each element's
/// symbol `k` (k ≥ 1) begins to be observed.
fn jittered_boundaries(noise: &NoiseConfig, n: usize, m_count: usize, num_symbols: usize, sps: usize) -> Vec<Vec<f64>> {
    let mut rng = rng_from(derive_seed(noise.seed, &[tag::JITTER, n as u64]));
    let limit = MAX_JITTER_FRACTION * sps as f64;
    (0..m_count)
        .map(|_| {
            (1..num_symbols)
                .map(|k| {
                    let nominal = (k * sps) as f64;
                    if noise.timing_jitter > 0.0 {
                        let z: f64 = rng.sample(StandardNormal);
                        nominal + (z * noise.timing_jitter * sps as f64).clamp(-limit, limit)
                    } else {
                        nominal
                    }
                })
                .collect()
        })
        .collect()
}
