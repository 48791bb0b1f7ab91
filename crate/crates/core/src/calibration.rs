//! Amplitude-only over-the-air calibration.
//!
//! Four constant-weight transmissions recover every receiver's row of the
//! channel matrix up to a unit-modulus factor:
//!
//! 1. element 1 alone → `|T_n1|`
//! 2. element 2 alone → `|T_n2|`
//! 3. both, no programmed offset → `|T_n1 + T_n2|`, which fixes `|θ_n|`
//! 4. both, element 2 advanced by 90° → picks the sign of `θ_n`
//!
//! The estimated row is `[|T_n1|, |T_n2|·e^{jθ_n}]`. Arrays with more than two
//! elements repeat steps 2–4 for each further element against element 1.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

use crate::channel::ChannelMatrix;

pub const DEFAULT_MEASUREMENT_FLOOR: f64 = 1e-6;

/// Fraction of each calibration capture discarded as settling time.
pub const SETTLING_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("receiver {receiver} hears element {element} at amplitude {amplitude:.3e}, below floor {floor:.1e}")]
    MeasurementFloor {
        receiver: usize,
        element: usize,
        amplitude: f64,
        floor: f64,
    },
    #[error("magnitude {0:.3e} at or below the floor; phase is undefined")]
    DegenerateMagnitude(f64),
    #[error("measurement returned {got} amplitudes, expected {expected}")]
    MeasurementShape { expected: usize, got: usize },
    #[error("calibration needs at least 2 elements, got {0}")]
    TooFewElements(usize),
    #[error("amplitude {0} is negative or not finite")]
    BadAmplitude(f64),
    #[error("transmission failed: {0}")]
    Transmission(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    /// Single-element amplitudes below this abort the calibration.
    pub floor: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            floor: DEFAULT_MEASUREMENT_FLOOR,
        }
    }
}

/// Amplitudes seen at every receiver for one reference/element pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeasurements {
    pub amp_element_only: Vec<f64>,
    pub amp_both_zero: Vec<f64>,
    pub amp_both_quadrature: Vec<f64>,
}

/// The raw amplitude sets. For two elements these are exactly the four
/// transmissions; each further element adds one [`PairMeasurements`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMeasurements {
    pub amp_tx1_only: Vec<f64>,
    pub amp_tx2_only: Vec<f64>,
    pub amp_both_zero: Vec<f64>,
    pub amp_both_quadrature: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_elements: Vec<PairMeasurements>,
}

impl CalibrationMeasurements {
    pub fn num_receivers(&self) -> usize {
        self.amp_tx1_only.len()
    }

    pub fn num_elements(&self) -> usize {
        2 + self.extra_elements.len()
    }

    /// Measurements of element `m ≥ 1` against element 0.
    fn pair(&self, m: usize) -> (&[f64], &[f64], &[f64]) {
        if m == 1 {
            (&self.amp_tx2_only, &self.amp_both_zero, &self.amp_both_quadrature)
        } else {
            let p = &self.extra_elements[m - 2];
            (&p.amp_element_only, &p.amp_both_zero, &p.amp_both_quadrature)
        }
    }
}

/// Magnitudes `|T_nm|` and signed inter-element phases `θ_n` (element `m`
/// relative to element 1, per receiver).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedCsi {
    /// N rows × M columns.
    pub magnitudes: Vec<Vec<f64>>,
    /// N rows × (M − 1) columns, radians in (−π, π].
    pub theta: Vec<Vec<f64>>,
}

/// Everything a calibration run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub measurements: CalibrationMeasurements,
    pub csi: EstimatedCsi,
    pub channel: ChannelMatrix,
}

/// The weight vectors transmitted, in order, for an `m_count`-element array.
pub fn calibration_schedule(m_count: usize) -> Vec<Vec<Complex64>> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let quarter = Complex64::from_polar(1.0, FRAC_PI_2);
    let basis = |pairs: &[(usize, Complex64)]| {
        let mut w = vec![zero; m_count];
        for &(m, v) in pairs {
            w[m] = v;
        }
        w
    };
    let mut schedule = vec![basis(&[(0, one)])];
    for m in 1..m_count {
        schedule.push(basis(&[(m, one)]));
        schedule.push(basis(&[(0, one), (m, one)]));
        schedule.push(basis(&[(0, one), (m, quarter)]));
    }
    schedule
}

/// Performs the calibration transmissions, strictly in sequence.
///
/// `transmit_and_measure` sends one constant weight vector and returns the
/// steady-state amplitude at each of the `N` receivers.
pub fn run_calibration<F, E>(m_count: usize, config: &CalibrationConfig, mut transmit_and_measure: F) -> Result<CalibrationMeasurements, CalibrationError>
where
    F: FnMut(&[Complex64]) -> Result<Vec<f64>, E>,
    E: std::fmt::Display,
{
    if m_count < 2 {
        return Err(CalibrationError::TooFewElements(m_count));
    }
    let mut expected_len: Option<usize> = None;
    let mut measure = |w: &[Complex64]| -> Result<Vec<f64>, CalibrationError> {
        let amps = transmit_and_measure(w).map_err(|e| CalibrationError::Transmission(e.to_string()))?;
        if let Some(&bad) = amps.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(CalibrationError::BadAmplitude(bad));
        }
        match expected_len {
            Some(n) if n != amps.len() => return Err(CalibrationError::MeasurementShape { expected: n, got: amps.len() }),
            _ => expected_len = Some(amps.len()),
        }
        Ok(amps)
    };
    let check_floor = |amps: &[f64], element: usize| -> Result<(), CalibrationError> {
        match amps.iter().enumerate().find(|(_, &a)| a < config.floor) {
            Some((receiver, &amplitude)) => Err(CalibrationError::MeasurementFloor {
                receiver,
                element,
                amplitude,
                floor: config.floor,
            }),
            None => Ok(()),
        }
    };

    let schedule = calibration_schedule(m_count);
    let amp_tx1_only = measure(&schedule[0])?;
    check_floor(&amp_tx1_only, 0)?;

    let mut pairs = Vec::with_capacity(m_count - 1);
    for m in 1..m_count {
        let base = 1 + 3 * (m - 1);
        let only = measure(&schedule[base])?;
        check_floor(&only, m)?;
        let zero = measure(&schedule[base + 1])?;
        let quad = measure(&schedule[base + 2])?;
        pairs.push(PairMeasurements {
            amp_element_only: only,
            amp_both_zero: zero,
            amp_both_quadrature: quad,
        });
    }
    let first = pairs.remove(0);
    Ok(CalibrationMeasurements {
        amp_tx1_only,
        amp_tx2_only: first.amp_element_only,
        amp_both_zero: first.amp_both_zero,
        amp_both_quadrature: first.amp_both_quadrature,
        extra_elements: pairs,
    })
}

/// `|θ|` from the law of cosines on `|T1 + T2|`, with the arccos argument
/// clamped to [−1, 1].
pub fn solve_abs_phase(t1: f64, t2: f64, both: f64, floor: f64) -> Result<f64, CalibrationError> {
    for t in [t1, t2] {
        if t.is_nan() || t <= floor {
            return Err(CalibrationError::DegenerateMagnitude(t));
        }
    }
    let cos_theta = (both * both - t1 * t1 - t2 * t2) / (2.0 * t1 * t2);
    Ok(cos_theta.clamp(-1.0, 1.0).acos())
}

/// Picks the sign of `θ` whose predicted quadrature amplitude is closest to
/// the measured one. Ties resolve to `+1`.
pub fn resolve_sign(t1: f64, t2: f64, abs_theta: f64, quadrature_amp: f64) -> i8 {
    let predict = |phase: f64| (Complex64::new(t1, 0.0) + Complex64::from_polar(t2, phase)).norm();
    let p_plus = predict(FRAC_PI_2 + abs_theta);
    let p_minus = predict(FRAC_PI_2 - abs_theta);
    if (quadrature_amp - p_plus).abs() <= (quadrature_amp - p_minus).abs() {
        1
    } else {
        -1
    }
}

/// Turns raw amplitude sets into magnitudes and signed phases.
pub fn estimate_csi(meas: &CalibrationMeasurements, floor: f64) -> Result<EstimatedCsi, CalibrationError> {
    let n_count = meas.num_receivers();
    let m_count = meas.num_elements();
    let mut magnitudes = vec![vec![0.0; m_count]; n_count];
    let mut theta = vec![vec![0.0; m_count - 1]; n_count];
    for m in 1..m_count {
        let (only, zero, quad) = meas.pair(m);
        for set in [only, zero, quad] {
            if set.len() != n_count {
                return Err(CalibrationError::MeasurementShape {
                    expected: n_count,
                    got: set.len(),
                });
            }
        }
        for n in 0..n_count {
            let t1 = meas.amp_tx1_only[n];
            let t2 = only[n];
            let abs_theta = solve_abs_phase(t1, t2, zero[n], floor)?;
            let sign = resolve_sign(t1, t2, abs_theta, quad[n]);
            magnitudes[n][0] = t1;
            magnitudes[n][m] = t2;
            // keep θ in (−π, π]
            theta[n][m - 1] = if abs_theta == std::f64::consts::PI {
                abs_theta
            } else {
                f64::from(sign) * abs_theta
            };
        }
    }
    Ok(EstimatedCsi { magnitudes, theta })
}

/// Row `n` becomes `[|T_n1|, |T_n2|·e^{jθ_n}, …]`; the first column is real
/// and non-negative.
pub fn assemble_h(csi: &EstimatedCsi) -> ChannelMatrix {
    let rows: Vec<Vec<Complex64>> = csi
        .magnitudes
        .iter()
        .zip(&csi.theta)
        .map(|(mags, thetas)| {
            std::iter::once(Complex64::new(mags[0], 0.0))
                .chain(mags[1..].iter().zip(thetas).map(|(&a, &t)| Complex64::from_polar(a, t)))
                .collect()
        })
        .collect();
    ChannelMatrix::from_rows(&rows).expect("csi rows are finite and at least 1x2")
}

/// Full calibration: transmit, estimate, assemble.
pub fn calibrate<F, E>(m_count: usize, config: &CalibrationConfig, transmit_and_measure: F) -> Result<Calibration, CalibrationError>
where
    F: FnMut(&[Complex64]) -> Result<Vec<f64>, E>,
    E: std::fmt::Display,
{
    let measurements = run_calibration(m_count, config, transmit_and_measure)?;
    let csi = estimate_csi(&measurements, config.floor)?;
    let channel = assemble_h(&csi);
    Ok(Calibration { measurements, csi, channel })
}

/// Mean `|x|` over a capture, skipping the first 10% as settling time.
pub fn steady_state_amplitude(samples: &[Complex64]) -> f64 {
    let skip = (samples.len() as f64 * SETTLING_FRACTION).floor() as usize;
    let window = &samples[skip.min(samples.len())..];
    if window.is_empty() {
        return 0.0;
    }
    window.iter().map(|z| z.norm()).sum::<f64>() / window.len() as f64
}

/// Serializable calibration record: magnitudes, signed phases in degrees, the
/// raw amplitude sets and the assembled matrix as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub magnitudes: Vec<Vec<f64>>,
    pub theta_deg: Vec<Vec<f64>>,
    pub measurements: CalibrationMeasurements,
    pub h: Vec<Vec<[f64; 2]>>,
}

impl CalibrationReport {
    pub fn from_calibration(cal: &Calibration) -> Self {
        CalibrationReport {
            magnitudes: cal.csi.magnitudes.clone(),
            theta_deg: cal.csi.theta.iter().map(|row| row.iter().map(|t| t.to_degrees()).collect()).collect(),
            measurements: cal.measurements.clone(),
            h: cal.channel.rows().iter().map(|row| row.iter().map(|z| [z.re, z.im]).collect()).collect(),
        }
    }

    /// The matrix exactly as recorded.
    pub fn channel(&self) -> Result<ChannelMatrix, crate::channel::ChannelError> {
        let rows: Vec<Vec<Complex64>> = self.h.iter().map(|row| row.iter().map(|&[re, im]| Complex64::new(re, im)).collect()).collect();
        ChannelMatrix::from_rows(&rows)
    }
}
