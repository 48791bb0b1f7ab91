use thiserror::Error;

use super::align::{classify_errors, positional_bit_errors};
use crate::modem::{bits_from_str, bits_to_string};

pub const BIT_LOG_VERSION: u32 = 1;

/// Transmitted and received bits of one message on one channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitLog {
    /// 1-based, as channels are numbered on screen.
    pub channel: usize,
    pub message: usize,
    pub tx: Vec<u8>,
    pub rx: Vec<u8>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitLogError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("missing field {0}")]
    Missing(&'static str),
    #[error("unsupported format_version {0}")]
    Version(u32),
    #[error("field {field} is {stored} but the rows give {computed}")]
    Inconsistent { field: &'static str, stored: usize, computed: usize },
}

impl BitLog {
    /// Header of counts, then the rows `tx`, `rx` and a `^` under every
    /// position that counts as a positional error.
    pub fn render(&self) -> String {
        let breakdown = classify_errors(&self.tx, &self.rx);
        let marks: String = (0..self.tx.len().max(self.rx.len()))
            .map(|i| match self.tx.get(i) {
                Some(b) if self.rx.get(i) != Some(b) => '^',
                _ => ' ',
            })
            .collect();
        format!(
            "format_version: {BIT_LOG_VERSION}\nchannel: {}\nmessage: {}\ntx_bits: {}\nrx_bits: {}\n\
             positional_errors: {}\ninsertions: {}\ndeletions: {}\nsubstitutions: {}\n\
             tx: {}\nrx: {}\n    {}\n",
            self.channel,
            self.message,
            self.tx.len(),
            self.rx.len(),
            positional_bit_errors(&self.tx, &self.rx),
            breakdown.insertions,
            breakdown.deletions,
            breakdown.substitutions,
            bits_to_string(&self.tx),
            bits_to_string(&self.rx),
            marks.trim_end(),
        )
    }

    /// Parses [`BitLog::render`] output and checks the stored counts
    /// against the rows.
    pub fn parse(text: &str) -> Result<Self, BitLogError> {
        let mut fields: Vec<(&str, &str)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.starts_with("    ") || line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| BitLogError::Syntax {
                line: n + 1,
                reason: "expected `key: value`".into(),
            })?;
            fields.push((key, value.strip_prefix(' ').unwrap_or(value)));
        }
        let get = |key: &'static str| fields.iter().find(|(k, _)| *k == key).map(|&(_, v)| v).ok_or(BitLogError::Missing(key));
        let number = |key: &'static str| -> Result<usize, BitLogError> {
            get(key)?.parse().map_err(|_| BitLogError::Syntax {
                line: 0,
                reason: format!("{key} is not a number"),
            })
        };
        let bits = |key: &'static str| -> Result<Vec<u8>, BitLogError> {
            bits_from_str(get(key)?).ok_or_else(|| BitLogError::Syntax {
                line: 0,
                reason: format!("{key} row holds a character other than 0 or 1"),
            })
        };
        let version = number("format_version")? as u32;
        if version != BIT_LOG_VERSION {
            return Err(BitLogError::Version(version));
        }
        let log = BitLog {
            channel: number("channel")?,
            message: number("message")?,
            tx: bits("tx")?,
            rx: bits("rx")?,
        };
        let breakdown = classify_errors(&log.tx, &log.rx);
        let checks = [
            ("tx_bits", log.tx.len()),
            ("rx_bits", log.rx.len()),
            ("positional_errors", positional_bit_errors(&log.tx, &log.rx)),
            ("insertions", breakdown.insertions),
            ("deletions", breakdown.deletions),
            ("substitutions", breakdown.substitutions),
        ];
        for (field, computed) in checks {
            let stored = number(field)?;
            if stored != computed {
                return Err(BitLogError::Inconsistent { field, stored, computed });
            }
        }
        Ok(log)
    }

    pub fn file_name(&self) -> String {
        format!("bits_{}_{}.log", self.channel, self.message)
    }
}
