//! Regular (3,6) Gallager LDPC code with a systematic encoder and a
//! hard-decision bit-flipping decoder.
//!
//! Bit flipping only corrects substitutions. A stream that gained or lost a
//! bit no longer splits into codewords, and the decoder refuses it with
//! [`FecError::LengthMismatch`].

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::seed::rng_from;

pub const DEFAULT_CODE_LENGTH: usize = 816;
pub const DEFAULT_MAX_ITERATIONS: usize = 50;
pub const COLUMN_WEIGHT: usize = 3;
pub const ROW_WEIGHT: usize = 6;
const MIN_CODE_LENGTH: usize = 48;
const ATTEMPTS_PER_SEED: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FecError {
    #[error("code length {0} must be even and at least {MIN_CODE_LENGTH}")]
    InvalidLength(usize),
    #[error("no usable parity matrix for n = {n} from seeds {seed} and {}", seed + 1)]
    ConstructionFailed { seed: u64, n: usize },
    #[error("expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("alist: {0}")]
    Alist(String),
}

/// Sparse binary parity-check matrix stored as the column indices of each row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityMatrix {
    pub n: usize,
    pub rows: Vec<Vec<usize>>,
}

impl ParityMatrix {
    pub fn num_checks(&self) -> usize {
        self.rows.len()
    }

    pub fn columns(&self) -> Vec<Vec<usize>> {
        let mut cols = vec![Vec::new(); self.n];
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row {
                cols[c].push(r);
            }
        }
        cols
    }

    pub fn syndrome(&self, word: &[u8]) -> Vec<u8> {
        self.rows.iter().map(|row| row.iter().fold(0u8, |acc, &c| acc ^ (word[c] & 1))).collect()
    }

    pub fn is_codeword(&self, word: &[u8]) -> bool {
        self.syndrome(word).iter().all(|&s| s == 0)
    }

    /// MacKay's alist text format (1-based indices, zero-padded lists).
    pub fn to_alist(&self) -> String {
        let cols = self.columns();
        let max_col = cols.iter().map(Vec::len).max().unwrap_or(0);
        let max_row = self.rows.iter().map(Vec::len).max().unwrap_or(0);
        let join = |v: &mut dyn Iterator<Item = usize>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let padded = |list: &[usize], width: usize| {
            let mut v: Vec<usize> = list.iter().map(|x| x + 1).collect();
            v.resize(width, 0);
            v
        };
        let mut out = String::new();
        out.push_str(&format!("{} {}\n{} {}\n", self.n, self.rows.len(), max_col, max_row));
        out.push_str(&join(&mut cols.iter().map(Vec::len)));
        out.push('\n');
        out.push_str(&join(&mut self.rows.iter().map(Vec::len)));
        out.push('\n');
        for c in &cols {
            out.push_str(&join(&mut padded(c, max_col).into_iter()));
            out.push('\n');
        }
        for r in &self.rows {
            out.push_str(&join(&mut padded(r, max_row).into_iter()));
            out.push('\n');
        }
        out
    }

    pub fn from_alist(text: &str) -> Result<Self, FecError> {
        let err = |m: &str| FecError::Alist(m.to_owned());
        let mut nums = text.split_whitespace().map(|t| t.parse::<usize>().map_err(|e| FecError::Alist(e.to_string())));
        let mut next = || nums.next().unwrap_or_else(|| Err(err("truncated")));
        let n = next()?;
        let m = next()?;
        let max_col = next()?;
        let max_row = next()?;
        let col_weights = (0..n).map(|_| next()).collect::<Result<Vec<_>, _>>()?;
        let row_weights = (0..m).map(|_| next()).collect::<Result<Vec<_>, _>>()?;
        for _ in 0..n * max_col {
            next()?;
        }
        let mut rows = Vec::with_capacity(m);
        for &w in &row_weights {
            let mut row = Vec::with_capacity(w);
            for slot in 0..max_row {
                let v = next()?;
                if slot < w {
                    if v == 0 || v > n {
                        return Err(err("column index out of range"));
                    }
                    row.push(v - 1);
                }
            }
            rows.push(row);
        }
        let matrix = ParityMatrix { n, rows };
        let derived: Vec<usize> = matrix.columns().iter().map(Vec::len).collect();
        if derived != col_weights {
            return Err(err("column lists disagree with row lists"));
        }
        Ok(matrix)
    }
}

/// A constructed code together with its systematic encoder.
///
/// Codeword layout: `k = n/2` message bits, then the remaining positions,
/// which are determined by the message. Gallager matrices always contain
/// dependent rows; the extra dimension this leaves is frozen to zero so the
/// rate stays exactly 1/2.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    matrix: ParityMatrix,
    bit_checks: Vec<Vec<usize>>,
    /// `column_permutation[p]` is the construction column placed at position `p`.
    column_permutation: Vec<usize>,
    seed: u64,
    rank: usize,
    /// For each parity position, the message bits it sums (as a bitset).
    parity_rules: Vec<(usize, Vec<u64>)>,
}

/// Result of [`LdpcCode::decode`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutcome {
    pub message: Vec<u8>,
    /// The full word the decoder stopped at.
    pub codeword: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

impl LdpcCode {
    /// Deterministic (3,6)-regular code of length `n` from `seed`.
    pub fn build(seed: u64, n: usize) -> Result<Self, FecError> {
        if !n.is_multiple_of(2) || n < MIN_CODE_LENGTH {
            return Err(FecError::InvalidLength(n));
        }
        for s in [seed, seed.wrapping_add(1)] {
            let mut rng = rng_from(s);
            for _ in 0..ATTEMPTS_PER_SEED {
                let rows = gallager_rows(n, &mut rng);
                if let Some(code) = Self::from_rows(rows, n, s) {
                    return Ok(code);
                }
            }
        }
        Err(FecError::ConstructionFailed { seed, n })
    }

    fn from_rows(rows: Vec<Vec<usize>>, n: usize, seed: u64) -> Option<Self> {
        let original = ParityMatrix { n, rows };
        let cols = original.columns();
        // Identical columns make single flips ambiguous.
        let mut sorted = cols.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        let k = n / 2;
        let (rref, pivots) = reduce(&original);
        let rank = pivots.len();
        if n - rank < k {
            return None;
        }
        let is_pivot = {
            let mut v = vec![false; n];
            for &(_, c) in &pivots {
                v[c] = true;
            }
            v
        };
        let mut column_permutation: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        column_permutation.extend(pivots.iter().map(|&(_, c)| c));
        let mut position_of = vec![0; n];
        for (p, &c) in column_permutation.iter().enumerate() {
            position_of[c] = p;
        }
        let words = k.div_ceil(64);
        let parity_rules = pivots
            .iter()
            .map(|&(r, c)| {
                let mut mask = vec![0u64; words];
                for (col, &p) in position_of.iter().enumerate() {
                    if col != c && get_bit(&rref[r], col) {
                        // positions in k..n-rank are frozen at zero
                        if p < k {
                            mask[p / 64] |= 1 << (p % 64);
                        }
                    }
                }
                (position_of[c], mask)
            })
            .collect();
        let matrix = ParityMatrix {
            n,
            rows: original
                .rows
                .iter()
                .map(|row| {
                    let mut r: Vec<usize> = row.iter().map(|&c| position_of[c]).collect();
                    r.sort_unstable();
                    r
                })
                .collect(),
        };
        let bit_checks = matrix.columns();
        Some(LdpcCode {
            matrix,
            bit_checks,
            column_permutation,
            seed,
            rank,
            parity_rules,
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.n
    }

    /// Message bits per codeword.
    pub fn k(&self) -> usize {
        self.matrix.n / 2
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Seed the matrix was finally built from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &ParityMatrix {
        &self.matrix
    }

    pub fn column_permutation(&self) -> &[usize] {
        &self.column_permutation
    }

    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>, FecError> {
        let k = self.k();
        if message.len() != k {
            return Err(FecError::LengthMismatch {
                expected: k,
                got: message.len(),
            });
        }
        let mut packed = vec![0u64; k.div_ceil(64)];
        for (i, &b) in message.iter().enumerate() {
            if b & 1 == 1 {
                packed[i / 64] |= 1 << (i % 64);
            }
        }
        let mut word = vec![0u8; self.n()];
        word[..k].copy_from_slice(message);
        for (pos, mask) in &self.parity_rules {
            let ones: u32 = mask.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            word[*pos] = (ones & 1) as u8;
        }
        Ok(word)
    }

    /// Bit flipping: repeatedly flip the bit in the most unsatisfied checks
    /// (lowest index on ties) until the syndrome clears.
    pub fn decode(&self, received: &[u8], max_iterations: usize) -> Result<DecodeOutcome, FecError> {
        let n = self.n();
        if received.len() != n {
            return Err(FecError::LengthMismatch {
                expected: n,
                got: received.len(),
            });
        }
        let mut word: Vec<u8> = received.iter().map(|b| b & 1).collect();
        let mut syndrome = self.matrix.syndrome(&word);
        let mut unsatisfied: Vec<u32> = self
            .bit_checks
            .iter()
            .map(|checks| checks.iter().map(|&c| u32::from(syndrome[c])).sum())
            .collect();
        let mut failing: usize = syndrome.iter().map(|&s| s as usize).sum();
        let mut iterations = 0;
        while failing > 0 && iterations < max_iterations {
            iterations += 1;
            let (flip, _) = unsatisfied
                .iter()
                .enumerate()
                .fold((0, 0), |best, (i, &u)| if u > best.1 { (i, u) } else { best });
            word[flip] ^= 1;
            for &c in &self.bit_checks[flip] {
                syndrome[c] ^= 1;
                let delta: i64 = if syndrome[c] == 1 { 1 } else { -1 };
                failing = (failing as i64 + delta) as usize;
                for &b in &self.matrix.rows[c] {
                    unsatisfied[b] = (i64::from(unsatisfied[b]) + delta) as u32;
                }
            }
        }
        Ok(DecodeOutcome {
            message: word[..self.k()].to_vec(),
            codeword: word,
            converged: failing == 0,
            iterations,
        })
    }

    /// Splits `bits` into `k`-bit blocks (zero-padding the last) and encodes
    /// each. Returns the coded stream and the number of padding bits.
    pub fn encode_stream(&self, bits: &[u8]) -> (Vec<u8>, usize) {
        let k = self.k();
        let padding = (k - bits.len() % k) % k;
        let mut padded = bits.to_vec();
        padded.resize(bits.len() + padding, 0);
        let coded = padded.chunks(k).flat_map(|block| self.encode(block).expect("block is k bits")).collect();
        (coded, padding)
    }

    /// Decodes a coded stream back to `message_len` bits. The stream must be
    /// exactly the transmitted length.
    pub fn decode_stream(&self, received: &[u8], message_len: usize, max_iterations: usize) -> Result<StreamDecode, FecError> {
        let blocks = message_len.div_ceil(self.k());
        let expected = blocks * self.n();
        if received.len() != expected {
            return Err(FecError::LengthMismatch { expected, got: received.len() });
        }
        let mut bits = Vec::with_capacity(blocks * self.k());
        let mut converged_blocks = 0;
        for chunk in received.chunks(self.n()) {
            let out = self.decode(chunk, max_iterations)?;
            converged_blocks += usize::from(out.converged);
            bits.extend(out.message);
        }
        bits.truncate(message_len);
        Ok(StreamDecode {
            bits,
            blocks,
            converged_blocks,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamDecode {
    pub bits: Vec<u8>,
    pub blocks: usize,
    pub converged_blocks: usize,
}

/// Gallager's construction: three bands of `⌊n/6⌋` rows each; the first band
/// takes consecutive runs of six columns (the last row also takes any
/// remainder), the other two bands are random column permutations of it.
fn gallager_rows(n: usize, rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    let band_rows = n / ROW_WEIGHT;
    let mut rows = Vec::with_capacity(band_rows * COLUMN_WEIGHT);
    for band in 0..COLUMN_WEIGHT {
        let mut perm: Vec<usize> = (0..n).collect();
        if band > 0 {
            perm.shuffle(rng);
        }
        for r in 0..band_rows {
            let end = if r + 1 == band_rows { n } else { (r + 1) * ROW_WEIGHT };
            let mut row: Vec<usize> = perm[r * ROW_WEIGHT..end].to_vec();
            row.sort_unstable();
            rows.push(row);
        }
    }
    rows
}

fn get_bit(row: &[u64], c: usize) -> bool {
    (row[c / 64] >> (c % 64)) & 1 == 1
}

/// Gauss-Jordan elimination over GF(2), choosing pivot columns from the
/// right. Returns the reduced rows and `(row, pivot column)` pairs.
fn reduce(matrix: &ParityMatrix) -> (Vec<Vec<u64>>, Vec<(usize, usize)>) {
    let words = matrix.n.div_ceil(64);
    let mut rows: Vec<Vec<u64>> = matrix
        .rows
        .iter()
        .map(|cols| {
            let mut bits = vec![0u64; words];
            for &c in cols {
                bits[c / 64] ^= 1 << (c % 64);
            }
            bits
        })
        .collect();
    let mut pivots = Vec::new();
    let mut next_row = 0;
    for col in (0..matrix.n).rev() {
        if next_row == rows.len() {
            break;
        }
        let Some(found) = (next_row..rows.len()).find(|&r| get_bit(&rows[r], col)) else {
            continue;
        };
        rows.swap(next_row, found);
        let pivot_row = rows[next_row].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != next_row && get_bit(row, col) {
                for (a, b) in row.iter_mut().zip(&pivot_row) {
                    *a ^= b;
                }
            }
        }
        pivots.push((next_row, col));
        next_row += 1;
    }
    (rows, pivots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_bits(rng: &mut impl Rng, len: usize) -> Vec<u8> {
        (0..len).map(|_| rng.random_range(0..2u8)).collect()
    }

    #[test]
    fn small_code_is_regular() {
        let code = LdpcCode::build(7, 48).unwrap();
        assert_eq!(code.matrix().num_checks(), 24);
        assert!(code.matrix().rows.iter().all(|r| r.len() == ROW_WEIGHT));
        assert!(code.matrix().columns().iter().all(|c| c.len() == COLUMN_WEIGHT));
        assert_eq!(code.k(), 24);
    }

    #[test]
    fn construction_is_deterministic() {
        let a = LdpcCode::build(7, 48).unwrap();
        let b = LdpcCode::build(7, 48).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert_eq!(a.column_permutation(), b.column_permutation());
    }

    #[test]
    fn indivisible_length_absorbs_remainder() {
        let code = LdpcCode::build(3, 50).unwrap();
        let m = code.matrix();
        assert!(m.columns().iter().all(|c| c.len() == COLUMN_WEIGHT));
        let weights: Vec<usize> = m.rows.iter().map(Vec::len).collect();
        assert_eq!(weights.iter().filter(|&&w| w == ROW_WEIGHT).count(), weights.len() - 3);
        assert_eq!(weights.iter().sum::<usize>(), 150);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert_eq!(LdpcCode::build(1, 47).unwrap_err(), FecError::InvalidLength(47));
        assert_eq!(LdpcCode::build(1, 46).unwrap_err(), FecError::InvalidLength(46));
    }

    #[test]
    fn encoder_rank_accounts_for_dependent_rows() {
        let code = LdpcCode::build(11, DEFAULT_CODE_LENGTH).unwrap();
        assert!(code.rank() <= code.matrix().num_checks() - 2);
        assert!(code.n() - code.rank() >= code.k());
    }

    #[test]
    fn encoded_words_have_zero_syndrome() {
        let code = LdpcCode::build(7, 48).unwrap();
        let mut rng = rng_from(1);
        for _ in 0..100 {
            let msg = random_bits(&mut rng, code.k());
            let word = code.encode(&msg).unwrap();
            assert_eq!(&word[..code.k()], &msg[..]);
            assert!(code.matrix().is_codeword(&word));
        }
    }

    #[test]
    fn encoder_is_linear() {
        let code = LdpcCode::build(5, 96).unwrap();
        assert!(code.encode(&[0; 48]).unwrap().iter().all(|&b| b == 0));
        let mut rng = rng_from(2);
        let a = random_bits(&mut rng, 48);
        let b = random_bits(&mut rng, 48);
        let ab: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let ea = code.encode(&a).unwrap();
        let eb = code.encode(&b).unwrap();
        let eab = code.encode(&ab).unwrap();
        assert!(ea.iter().zip(&eb).zip(&eab).all(|((x, y), z)| x ^ y == *z));
    }

    #[test]
    fn length_mismatch() {
        let code = LdpcCode::build(7, 48).unwrap();
        assert_eq!(code.encode(&[0; 23]).unwrap_err(), FecError::LengthMismatch { expected: 24, got: 23 });
        assert_eq!(code.decode(&[0; 49], 50).unwrap_err(), FecError::LengthMismatch { expected: 48, got: 49 });
    }

    #[test]
    fn clean_codeword_needs_no_iterations() {
        let code = LdpcCode::build(7, DEFAULT_CODE_LENGTH).unwrap();
        let msg = random_bits(&mut rng_from(3), code.k());
        let word = code.encode(&msg).unwrap();
        let out = code.decode(&word, DEFAULT_MAX_ITERATIONS).unwrap();
        assert_eq!(
            out,
            DecodeOutcome {
                message: msg,
                codeword: word,
                converged: true,
                iterations: 0
            }
        );
    }

    #[test]
    fn every_single_flip_is_corrected() {
        let code = LdpcCode::build(7, 96).unwrap();
        let msg = random_bits(&mut rng_from(4), code.k());
        let word = code.encode(&msg).unwrap();
        for i in 0..code.n() {
            let mut bad = word.clone();
            bad[i] ^= 1;
            let out = code.decode(&bad, DEFAULT_MAX_ITERATIONS).unwrap();
            assert!(out.converged, "flip at {i}");
            assert_eq!(out.iterations, 1);
            assert_eq!(out.message, msg);
        }
    }

    #[test]
    fn heavy_corruption_is_reported_honestly() {
        let code = LdpcCode::build(7, DEFAULT_CODE_LENGTH).unwrap();
        let mut rng = rng_from(5);
        let msg = random_bits(&mut rng, code.k());
        let word = code.encode(&msg).unwrap();
        let mut failures = 0;
        for _ in 0..20 {
            let mut bad = word.clone();
            let mut idx: Vec<usize> = (0..code.n()).collect();
            idx.shuffle(&mut rng);
            for &i in &idx[..code.n() / 2] {
                bad[i] ^= 1;
            }
            let out = code.decode(&bad, DEFAULT_MAX_ITERATIONS).unwrap();
            if out.converged {
                assert!(code.matrix().is_codeword(&out.codeword));
            } else {
                failures += 1;
            }
        }
        assert!(failures >= 18, "{failures}");
    }

    #[test]
    fn stream_framing() {
        let code = LdpcCode::build(7, 48).unwrap();
        let msg = random_bits(&mut rng_from(6), 50);
        let (coded, pad) = code.encode_stream(&msg);
        assert_eq!(pad, 22);
        assert_eq!(coded.len(), 3 * 48);
        let out = code.decode_stream(&coded, 50, DEFAULT_MAX_ITERATIONS).unwrap();
        assert_eq!(out.bits, msg);
        assert_eq!(out.converged_blocks, 3);
        let mut longer = coded.clone();
        longer.insert(10, 1);
        assert_eq!(
            code.decode_stream(&longer, 50, DEFAULT_MAX_ITERATIONS).unwrap_err(),
            FecError::LengthMismatch { expected: 144, got: 145 }
        );
    }

    #[test]
    fn alist_round_trip() {
        let code = LdpcCode::build(9, 96).unwrap();
        let text = code.matrix().to_alist();
        let parsed = ParityMatrix::from_alist(&text).unwrap();
        assert_eq!(&parsed, code.matrix());
        assert_eq!(parsed.to_alist(), text);
        assert!(ParityMatrix::from_alist("4 2\n1").is_err());
    }
}
