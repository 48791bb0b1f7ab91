use std::f64::consts::PI;

use super::wrap_phase;

/// Differential increments `(2i+1)·π/2^B`, i = 0..2^B, wrapped to (−π, π],
/// with Gray labels so neighbouring increments differ in one bit.
///
/// For B = 1 the labels are inverted so bit 1 maps to +π/2 and bit 0 to −π/2.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    bits_per_symbol: u8,
    increments: Vec<f64>,
    labels: Vec<u8>,
    index_of_label: Vec<usize>,
}

impl Constellation {
    pub fn new(bits_per_symbol: u8) -> Self {
        let size = 1usize << bits_per_symbol;
        let step = PI / size as f64;
        let increments = (0..size).map(|i| wrap_phase((2 * i + 1) as f64 * step)).collect();
        let flip = u8::from(bits_per_symbol == 1);
        let labels: Vec<u8> = (0..size).map(|i| ((i ^ (i >> 1)) as u8) ^ flip).collect();
        let mut index_of_label = vec![0; size];
        for (i, &l) in labels.iter().enumerate() {
            index_of_label[l as usize] = i;
        }
        Constellation {
            bits_per_symbol,
            increments,
            labels,
            index_of_label,
        }
    }

    pub fn bits_per_symbol(&self) -> u8 {
        self.bits_per_symbol
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn increment_for_label(&self, label: u8) -> f64 {
        self.increments[self.index_of_label[label as usize]]
    }

    /// Smallest increment magnitude, `π/2^B`.
    pub fn min_increment(&self) -> f64 {
        PI / self.len() as f64
    }

    /// Index of the increment circularly closest to `delta`; the smaller
    /// index wins an exact tie.
    pub fn nearest_index(&self, delta: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, &inc) in self.increments.iter().enumerate() {
            let d = wrap_phase(delta - inc).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        best
    }

    pub fn decide(&self, delta: f64) -> u8 {
        self.labels[self.nearest_index(delta)]
    }

    /// Appends the `B` bits of `label`, MSB first.
    pub fn push_label_bits(&self, label: u8, out: &mut Vec<u8>) {
        for shift in (0..self.bits_per_symbol).rev() {
            out.push((label >> shift) & 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn one_bit_polarity() {
        let c = Constellation::new(1);
        assert_eq!(c.increment_for_label(1), FRAC_PI_2);
        assert_eq!(c.increment_for_label(0), -FRAC_PI_2);
    }

    #[test]
    fn two_bit_gray_map() {
        let c = Constellation::new(2);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
        assert!(close(c.increment_for_label(0b00), FRAC_PI_4));
        assert!(close(c.increment_for_label(0b01), 3.0 * FRAC_PI_4));
        assert!(close(c.increment_for_label(0b11), -3.0 * FRAC_PI_4));
        assert!(close(c.increment_for_label(0b10), -FRAC_PI_4));
    }

    #[test]
    fn non_degenerate_bijective_gray() {
        for b in 1..=4u8 {
            let c = Constellation::new(b);
            let size = 1usize << b;
            let mut seen = vec![false; size];
            for &l in c.labels() {
                assert!(!seen[l as usize]);
                seen[l as usize] = true;
            }
            let mut min_dist = f64::INFINITY;
            for (i, &a) in c.increments().iter().enumerate() {
                assert!(a.abs() > 1e-9, "zero increment at B={b}");
                for &bb in &c.increments()[i + 1..] {
                    min_dist = min_dist.min(wrap_phase(a - bb).abs());
                }
                let next = (i + 1) % size;
                assert_eq!((c.labels()[i] ^ c.labels()[next]).count_ones(), 1);
            }
            assert!((min_dist - PI / (1u32 << (b - 1)) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_midpoint_takes_smaller_index() {
        let c = Constellation::new(2);
        // π/2 lies halfway between π/4 (index 0) and 3π/4 (index 1)
        assert_eq!(c.nearest_index(FRAC_PI_2), 0);
        let c1 = Constellation::new(1);
        assert_eq!(c1.nearest_index(0.0), 0);
    }
}
