//! DPSK framing, modulation and detection.
//!
//! Information rides on the phase change between consecutive symbols. The
//! increments are the odd multiples of `π/2^B`, so no symbol is a zero
//! transition and an asynchronous receiver can see every symbol boundary.

mod ascii;
mod constellation;
mod detect;
mod trace;

pub use ascii::{decode_ascii, encode_ascii, pad_messages, DecodedText};
pub use constellation::Constellation;
pub use detect::{async_detect, sync_detect, uniform_boundaries, DetectorConfig};
pub use trace::{read_phase_csv, write_phase_csv, PhaseRow, PhaseTrace};

use std::f64::consts::PI;
use thiserror::Error;

pub const MAX_BITS_PER_SYMBOL: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModemError {
    #[error("character {ch:?} at index {index} is not 7-bit ASCII")]
    NonAscii { index: usize, ch: char },
    #[error("bits per symbol must be in 1..={MAX_BITS_PER_SYMBOL}, got {0}")]
    BitsPerSymbol(u8),
    #[error("symbol rate must be positive, got {0}")]
    SymbolRate(f64),
    #[error("symbol interval {0} contains no samples")]
    EmptyInterval(usize),
    #[error("symbol boundary {0} lies outside the trace")]
    BoundaryOutOfRange(usize),
    #[error("invalid detector setting: {0}")]
    Detector(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpskConfig {
    bits_per_symbol: u8,
    /// Symbols per second.
    pub symbol_rate: f64,
    /// Phase of the reference symbol, radians.
    pub initial_phase: f64,
}

impl DpskConfig {
    pub fn new(bits_per_symbol: u8, symbol_rate: f64, initial_phase: f64) -> Result<Self, ModemError> {
        if !(1..=MAX_BITS_PER_SYMBOL).contains(&bits_per_symbol) {
            return Err(ModemError::BitsPerSymbol(bits_per_symbol));
        }
        if !(symbol_rate.is_finite() && symbol_rate > 0.0) {
            return Err(ModemError::SymbolRate(symbol_rate));
        }
        Ok(DpskConfig {
            bits_per_symbol,
            symbol_rate,
            initial_phase,
        })
    }

    pub fn bits_per_symbol(&self) -> u8 {
        self.bits_per_symbol
    }

    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.symbol_rate
    }

    pub fn constellation(&self) -> Constellation {
        Constellation::new(self.bits_per_symbol)
    }
}

/// Ordered bits (each 0 or 1) with framing metadata.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitStream {
    pub bits: Vec<u8>,
    /// Bit offsets where each message starts.
    pub message_offsets: Vec<usize>,
    /// Zero bits appended at the tail to fill a symbol or codeword.
    pub padding_bits: usize,
}

impl BitStream {
    pub fn from_bits(bits: Vec<u8>) -> Self {
        BitStream {
            bits,
            message_offsets: vec![0],
            padding_bits: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Bits without the recorded tail padding.
    pub fn payload(&self) -> &[u8] {
        &self.bits[..self.bits.len().saturating_sub(self.padding_bits)]
    }
}

/// Renders bits as a `0`/`1` string.
pub fn bits_to_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

/// Parses a `0`/`1` string; any other character is rejected.
pub fn bits_from_str(s: &str) -> Option<Vec<u8>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(0),
            '1' => Some(1),
            _ => None,
        })
        .collect()
}

/// Symbol phases produced by [`dpsk_modulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPhases {
    /// `K + 1` accumulated (unwrapped) phases; the first is the reference.
    pub phases: Vec<f64>,
    /// Zero bits appended so the bit count divides by `B`.
    pub padding_bits: usize,
}

/// Maps each `B`-bit group (MSB first) to its Gray-labelled increment and
/// accumulates: `φ(k+1) = φ(k) + Δφ(group k)`.
pub fn dpsk_modulate(bits: &[u8], cfg: &DpskConfig) -> SymbolPhases {
    let b = cfg.bits_per_symbol as usize;
    let constellation = cfg.constellation();
    let padding_bits = (b - bits.len() % b) % b;
    let mut phases = Vec::with_capacity(bits.len() / b + 2);
    let mut phi = cfg.initial_phase;
    phases.push(phi);
    let padded = bits.iter().copied().chain(std::iter::repeat_n(0, padding_bits));
    let groups: Vec<u8> = padded.collect();
    for group in groups.chunks(b) {
        let label = group.iter().fold(0u8, |acc, &bit| (acc << 1) | (bit & 1));
        phi += constellation.increment_for_label(label);
        phases.push(phi);
    }
    SymbolPhases { phases, padding_bits }
}

/// Wraps an angle to (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}
