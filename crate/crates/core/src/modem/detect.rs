use num_complex::Complex64;

use super::{wrap_phase, BitStream, DpskConfig, ModemError, PhaseTrace};

/// Knobs of the asynchronous transition detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Radians of phase change (relative to the last accepted symbol) that
    /// count as a transition.
    pub transition_threshold: f64,
    /// Consecutive samples the change must persist.
    pub confirmation_window: usize,
    /// Fraction of a symbol period during which new events are ignored.
    pub refractory: f64,
}

impl DetectorConfig {
    pub const DEFAULT_WINDOW: usize = 3;
    pub const DEFAULT_REFRACTORY: f64 = 0.5;

    /// Threshold at half the smallest increment `π/2^B`, i.e. midway between
    /// "no transition" and the smallest real one.
    pub fn default_for(cfg: &DpskConfig) -> Self {
        DetectorConfig {
            transition_threshold: 0.5 * cfg.constellation().min_increment(),
            confirmation_window: Self::DEFAULT_WINDOW,
            refractory: Self::DEFAULT_REFRACTORY,
        }
    }

    pub fn validate(&self) -> Result<(), ModemError> {
        if !(self.transition_threshold > 0.0 && self.transition_threshold.is_finite()) {
            return Err(ModemError::Detector("transition_threshold must be > 0"));
        }
        if self.confirmation_window < 1 {
            return Err(ModemError::Detector("confirmation_window must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.refractory) {
            return Err(ModemError::Detector("refractory must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Start sample of each of `num_symbols` equal-length symbol intervals.
pub fn uniform_boundaries(num_symbols: usize, samples_per_symbol: usize) -> Vec<usize> {
    (0..num_symbols).map(|k| k * samples_per_symbol).collect()
}

/// Circular mean of a run of phases, unwrapped next to its first sample.
fn circular_mean(phases: &[f64]) -> f64 {
    let anchor = phases[0];
    let sum: Complex64 = phases.iter().map(|&p| Complex64::from_polar(1.0, p)).sum();
    anchor + wrap_phase(sum.arg() - anchor)
}

/// Decodes with known symbol timing. `boundaries[k]` is the first sample of
/// symbol interval `k`; the last interval runs to the end of the trace. The
/// first interval is the phase reference, so `K + 1` boundaries yield `K·B`
/// bits.
pub fn sync_detect(trace: &PhaseTrace, cfg: &DpskConfig, boundaries: &[usize]) -> Result<BitStream, ModemError> {
    let constellation = cfg.constellation();
    if let Some(&b) = boundaries.iter().find(|&&b| b > trace.len()) {
        return Err(ModemError::BoundaryOutOfRange(b));
    }
    let mut means = Vec::with_capacity(boundaries.len());
    for (k, &start) in boundaries.iter().enumerate() {
        let end = boundaries.get(k + 1).copied().unwrap_or(trace.len());
        if end <= start {
            return Err(ModemError::EmptyInterval(k));
        }
        means.push(circular_mean(&trace.phase[start..end]));
    }
    let mut bits = Vec::with_capacity(means.len().saturating_sub(1) * cfg.bits_per_symbol() as usize);
    for pair in means.windows(2) {
        let label = constellation.decide(pair[1] - pair[0]);
        constellation.push_label_bits(label, &mut bits);
    }
    Ok(BitStream::from_bits(bits))
}

/// Decodes without symbol timing by watching for phase transitions.
///
/// A symbol event fires when the phase departs from the last accepted symbol
/// phase by more than the threshold for `confirmation_window` consecutive
/// samples, outside the refractory period of the previous event. The first
/// window of the trace is the initial reference. Noise or a short-lived
/// intermediate phase can fire an extra event; the resulting insertions are
/// part of the output, not an error.
pub fn async_detect(trace: &PhaseTrace, cfg: &DpskConfig, det: &DetectorConfig) -> Result<BitStream, ModemError> {
    det.validate()?;
    let constellation = cfg.constellation();
    let window = det.confirmation_window;
    let phase = &trace.phase;
    let mut bits = Vec::new();
    if phase.len() < window {
        return Ok(BitStream::from_bits(bits));
    }
    let samples_per_symbol = trace.sample_rate / cfg.symbol_rate;
    let refractory_samples = (det.refractory * samples_per_symbol).round() as usize;
    let threshold = det.transition_threshold;

    let mut reference = circular_mean(&phase[..window]);
    let mut quiet_until = refractory_samples;
    let mut i = 0;
    while i + window <= phase.len() {
        if i < quiet_until {
            i = quiet_until;
            continue;
        }
        let departed = |p: f64| wrap_phase(p - reference).abs() > threshold;
        match phase[i..i + window].iter().rposition(|&p| !departed(p)) {
            // a sample inside the window is still near the reference: resume after it
            Some(j) => i += j + 1,
            None => {
                let new_ref = circular_mean(&phase[i..i + window]);
                let label = constellation.decide(new_ref - reference);
                constellation.push_label_bits(label, &mut bits);
                reference = new_ref;
                quiet_until = i + refractory_samples;
                i += 1;
            }
        }
    }
    Ok(BitStream::from_bits(bits))
}
