use serde::{Deserialize, Serialize};

/// Index-by-index mismatches over the transmitted length. Missing received
/// bits count as errors; surplus received bits are ignored.
pub fn positional_bit_errors(tx: &[u8], rx: &[u8]) -> usize {
    tx.iter().enumerate().filter(|&(i, &b)| rx.get(i) != Some(&b)).count()
}

/// Edit operations turning `tx` into `rx`. An insertion is a surplus
/// received bit, a deletion a transmitted bit missing from `rx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
}

impl ErrorBreakdown {
    pub fn edit_distance(&self) -> usize {
        self.insertions + self.deletions + self.substitutions
    }

    pub fn add(&mut self, other: &ErrorBreakdown) {
        self.insertions += other.insertions;
        self.deletions += other.deletions;
        self.substitutions += other.substitutions;
    }
}

const UNREACHED: u32 = u32::MAX / 2;

/// Cost table restricted to cells with `|j − i| ≤ band`.
struct Banded {
    band: usize,
    width: usize,
    cells: Vec<u32>,
}

impl Banded {
    fn get(&self, i: usize, j: usize) -> u32 {
        if j + self.band < i || j > i + self.band {
            return UNREACHED;
        }
        self.cells[i * self.width + (j + self.band - i)]
    }

    fn set(&mut self, i: usize, j: usize, v: u32) {
        self.cells[i * self.width + (j + self.band - i)] = v;
    }
}

fn fill(tx: &[u8], rx: &[u8], band: usize) -> Banded {
    let width = 2 * band + 1;
    let mut t = Banded {
        band,
        width,
        cells: vec![UNREACHED; (tx.len() + 1) * width],
    };
    for i in 0..=tx.len() {
        let lo = i.saturating_sub(band);
        let hi = (i + band).min(rx.len());
        for j in lo..=hi {
            let v = if i == 0 {
                j as u32
            } else if j == 0 {
                i as u32
            } else {
                let diag = t.get(i - 1, j - 1) + u32::from(tx[i - 1] != rx[j - 1]);
                let del = t.get(i - 1, j) + 1;
                let ins = t.get(i, j - 1) + 1;
                diag.min(del).min(ins)
            };
            t.set(i, j, v);
        }
    }
    t
}

/// Minimal unit-cost alignment of `rx` against `tx`. The traceback prefers a
/// diagonal step (match or substitution), then a deletion, then an insertion.
///
/// Works in a diagonal band that doubles until the distance fits inside it,
/// at which point no cheaper path can leave the band and the result equals
/// the full table's.
pub fn classify_errors(tx: &[u8], rx: &[u8]) -> ErrorBreakdown {
    let mut band = tx.len().abs_diff(rx.len()) + 8;
    let table = loop {
        let t = fill(tx, rx, band);
        let d = t.get(tx.len(), rx.len()) as usize;
        if d <= band || band >= tx.len().max(rx.len()) {
            break t;
        }
        band *= 2;
    };
    let mut out = ErrorBreakdown::default();
    let (mut i, mut j) = (tx.len(), rx.len());
    while i > 0 || j > 0 {
        let here = table.get(i, j);
        if i > 0 && j > 0 {
            let sub = u32::from(tx[i - 1] != rx[j - 1]);
            if table.get(i - 1, j - 1) + sub == here {
                out.substitutions += sub as usize;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && table.get(i - 1, j) + 1 == here {
            out.deletions += 1;
            i -= 1;
            continue;
        }
        out.insertions += 1;
        j -= 1;
    }
    out
}
