use serde::{Deserialize, Serialize};

/// Per-channel error statistics over a batch of messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerStats {
    pub total_bit_errors: u64,
    pub total_bits: u64,
    pub num_messages: u64,
    /// `100 · total / total_bits`, unrounded.
    pub percent_bit_error: f64,
    pub mean_bit_errors: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std_bit_errors: f64,
    pub per_message_errors: Vec<u64>,
}

/// Rounds `num / den` to hundredths, halves away from zero, in exact integer
/// arithmetic, and renders it with two decimals.
fn hundredths(num: u128, den: u128) -> String {
    let h = (200 * num + den) / (2 * den);
    format!("{}.{:02}", h / 100, h % 100)
}

impl BerStats {
    pub fn percent_2dp(&self) -> String {
        hundredths(100 * u128::from(self.total_bit_errors), u128::from(self.total_bits))
    }

    pub fn mean_2dp(&self) -> String {
        hundredths(u128::from(self.total_bit_errors), u128::from(self.num_messages))
    }

    pub fn std_2dp(&self) -> String {
        format!("{:.2}", self.std_bit_errors)
    }
}

/// Builds the statistics from per-message error counts. `total_bits` is the
/// number of transmitted bits over the whole batch.
pub fn ber_stats(per_message_counts: &[u64], total_bits: u64, num_messages: u64) -> BerStats {
    debug_assert_eq!(per_message_counts.len() as u64, num_messages);
    debug_assert!(total_bits > 0 && num_messages > 0);
    let total: u64 = per_message_counts.iter().sum();
    let n = num_messages as f64;
    let mean = total as f64 / n;
    let std = if num_messages > 1 {
        let ss: f64 = per_message_counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    BerStats {
        total_bit_errors: total,
        total_bits,
        num_messages,
        percent_bit_error: 100.0 * total as f64 / total_bits as f64,
        mean_bit_errors: mean,
        std_bit_errors: std,
        per_message_errors: per_message_counts.to_vec(),
    }
}
