use num_complex::Complex64;
use std::io::{Read, Write};

use super::wrap_phase;

/// Received phase over time at one receiver, unwrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrace {
    pub receiver_id: usize,
    pub start_time: f64,
    pub sample_rate: f64,
    /// Radians, unwrapped.
    pub phase: Vec<f64>,
}

impl PhaseTrace {
    /// Phase of each complex sample, unwrapped sample to sample.
    pub fn from_samples(receiver_id: usize, samples: &[Complex64], sample_rate: f64, start_time: f64) -> Self {
        let mut phase = Vec::with_capacity(samples.len());
        let mut prev: Option<f64> = None;
        for z in samples {
            let raw = z.arg();
            let p = match prev {
                Some(p) => p + wrap_phase(raw - p),
                None => raw,
            };
            phase.push(p);
            prev = Some(p);
        }
        PhaseTrace {
            receiver_id,
            start_time,
            sample_rate,
            phase,
        }
    }

    /// Holds each symbol phase for `samples_per_symbol` samples.
    pub fn ideal(receiver_id: usize, symbol_phases: &[f64], samples_per_symbol: usize, sample_rate: f64) -> Self {
        PhaseTrace {
            receiver_id,
            start_time: 0.0,
            sample_rate,
            phase: symbol_phases.iter().flat_map(|&p| std::iter::repeat_n(p, samples_per_symbol)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.sample_rate
    }

    /// Export rows with phase wrapped to (−180°, 180°].
    pub fn rows(&self) -> impl Iterator<Item = PhaseRow> + '_ {
        self.phase.iter().enumerate().map(move |(i, &p)| PhaseRow {
            time_s: self.time(i),
            receiver_id: self.receiver_id,
            phase_deg: wrap_phase(p).to_degrees(),
        })
    }
}

/// One line of the phase CSV export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRow {
    pub time_s: f64,
    pub receiver_id: usize,
    pub phase_deg: f64,
}

pub fn write_phase_csv<W: Write, I: IntoIterator<Item = PhaseRow>>(rows: I, mut out: W) -> csv::Result<()> {
    writeln!(out, "# format_version: 1")?;
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["time_s", "receiver_id", "phase_deg"])?;
    for r in rows {
        wtr.write_record([r.time_s.to_string(), r.receiver_id.to_string(), r.phase_deg.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_phase_csv<R: Read>(input: R) -> Result<Vec<PhaseRow>, String> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            if rec.len() != 3 {
                return Err(format!("expected 3 fields, got {}", rec.len()));
            }
            Ok(PhaseRow {
                time_s: rec[0].parse().map_err(|e| format!("time_s: {e}"))?,
                receiver_id: rec[1].parse().map_err(|e| format!("receiver_id: {e}"))?,
                phase_deg: rec[2].parse().map_err(|e| format!("phase_deg: {e}"))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn unwraps_across_the_branch_cut() {
        let samples: Vec<Complex64> = (0..40).map(|i| Complex64::from_polar(1.0, 0.3 * i as f64)).collect();
        let t = PhaseTrace::from_samples(0, &samples, 1.0, 0.0);
        for (i, p) in t.phase.iter().enumerate() {
            assert!((p - 0.3 * i as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn export_wraps_to_half_open_range() {
        let t = PhaseTrace::ideal(1, &[PI, -PI, 3.5 * PI], 1, 10.0);
        let rows: Vec<_> = t.rows().collect();
        assert_eq!(rows[0].phase_deg, 180.0);
        assert_eq!(rows[1].phase_deg, 180.0);
        assert!((rows[2].phase_deg + 90.0).abs() < 1e-9);
        assert_eq!(rows[2].time_s, 0.2);
    }

    #[test]
    fn csv_round_trip_is_a_fixed_point() {
        let t = PhaseTrace::from_samples(
            2,
            &(0..25).map(|i| Complex64::from_polar(1.0, 1.7 * i as f64)).collect::<Vec<_>>(),
            16000.0,
            0.125,
        );
        let mut first = Vec::new();
        write_phase_csv(t.rows(), &mut first).unwrap();
        let parsed = read_phase_csv(first.as_slice()).unwrap();
        assert_eq!(parsed.len(), 25);
        let mut second = Vec::new();
        write_phase_csv(parsed, &mut second).unwrap();
        assert_eq!(first, second);
    }
}
