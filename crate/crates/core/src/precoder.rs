//! Transmit weight synthesis: solve `r = H·w` for `w` with the Moore-Penrose
//! pseudoinverse, then build per-symbol weight streams under a single
//! amplitude ceiling.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::io::{Read, Write};
use thiserror::Error;

use crate::channel::ChannelMatrix;

/// Singular values below `RELATIVE_CUTOFF · σ_max` are treated as zero.
pub const RELATIVE_CUTOFF: f64 = 1e-12;

/// Residual tolerance (relative to `‖r‖`) before a rank-deficient solve is
/// declared inconsistent.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecoderError {
    #[error("target length {got} does not match {expected} receivers")]
    TargetLength { expected: usize, got: usize },
    #[error("channel has rank {rank}; targets unreachable (residual {residual:.3e})")]
    RankDeficient { rank: usize, residual: f64 },
    #[error("receiver phase sequences have unequal lengths")]
    RaggedPhases,
    #[error("singular value decomposition failed")]
    SvdFailed,
}

/// Desired complex value at each receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector(pub Vec<Complex64>);

impl TargetVector {
    /// Unit-modulus targets `e^{jφ_n}`.
    pub fn from_phases(phases: &[f64]) -> Self {
        TargetVector(phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect())
    }
}

/// One M-element weight vector per symbol interval.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStream {
    pub vectors: Vec<Vec<Complex64>>,
    /// Seconds.
    pub symbol_duration: f64,
}

impl WeightStream {
    /// Holds one weight vector for `num_symbols` symbol periods.
    pub fn constant(w: Vec<Complex64>, num_symbols: usize, symbol_duration: f64) -> Self {
        WeightStream {
            vectors: vec![w; num_symbols],
            symbol_duration,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.vectors.iter().flatten().map(|w| w.norm()).fold(0.0, f64::max)
    }
}

/// How the weight stream is scaled before transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerPolicy {
    /// One scalar for the whole stream so that the largest `|w_m(k)|` is 1.
    #[default]
    PeakUnit,
    /// Leave the raw pseudoinverse solutions untouched.
    Unscaled,
}

/// Pseudoinverse of a channel matrix, computed once and reused per symbol.
#[derive(Debug, Clone)]
pub struct Pseudoinverse {
    channel: DMatrix<Complex64>,
    pinv: DMatrix<Complex64>,
    rank: usize,
}

impl Pseudoinverse {
    pub fn new(h: &ChannelMatrix) -> Result<Self, PrecoderError> {
        let a = h.as_matrix().clone();
        let svd = a.clone().svd(true, true);
        let u = svd.u.as_ref().ok_or(PrecoderError::SvdFailed)?;
        let v_t = svd.v_t.as_ref().ok_or(PrecoderError::SvdFailed)?;
        let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let cutoff = RELATIVE_CUTOFF * sigma_max;

        // pinv = V · Σ⁺ · Uᴴ over the retained singular triplets.
        let mut pinv = DMatrix::<Complex64>::zeros(a.ncols(), a.nrows());
        let mut rank = 0;
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s <= cutoff || s == 0.0 {
                continue;
            }
            rank += 1;
            let v_col = v_t.row(i).adjoint();
            let u_col = u.column(i);
            pinv += (v_col * u_col.adjoint()).unscale(s);
        }
        Ok(Pseudoinverse { channel: a, pinv, rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.pinv
    }

    /// Minimum-norm least-squares `w` for `H·w = r`.
    pub fn solve(&self, r: &TargetVector) -> Result<Vec<Complex64>, PrecoderError> {
        let n = self.channel.nrows();
        if r.0.len() != n {
            return Err(PrecoderError::TargetLength { expected: n, got: r.0.len() });
        }
        let target = DVector::from_column_slice(&r.0);
        let w = &self.pinv * &target;
        let full_rank = self.rank == n.min(self.channel.ncols());
        if !full_rank {
            let residual = (&self.channel * &w - &target).norm();
            if residual > RESIDUAL_TOLERANCE * target.norm() {
                return Err(PrecoderError::RankDeficient { rank: self.rank, residual });
            }
        }
        Ok(w.iter().copied().collect())
    }
}

/// Solves `H·w = r` with the pseudoinverse.
///
/// Exact minimum-norm solution when `H` has full row rank, least squares
/// otherwise. Fails with [`PrecoderError::RankDeficient`] only when `H` is
/// rank deficient and the targets fall outside its range.
pub fn pinv_weights(h: &ChannelMatrix, r: &TargetVector) -> Result<Vec<Complex64>, PrecoderError> {
    Pseudoinverse::new(h)?.solve(r)
}

/// Builds the per-symbol weight stream that places phase `phases[n][k]` at
/// receiver `n` during symbol `k`.
pub fn build_weight_stream(h: &ChannelMatrix, phases: &[Vec<f64>], policy: PowerPolicy, symbol_duration: f64) -> Result<WeightStream, PrecoderError> {
    if phases.len() != h.num_receivers() {
        return Err(PrecoderError::TargetLength {
            expected: h.num_receivers(),
            got: phases.len(),
        });
    }
    let k_len = phases.first().map_or(0, Vec::len);
    if phases.iter().any(|p| p.len() != k_len) {
        return Err(PrecoderError::RaggedPhases);
    }
    let pinv = Pseudoinverse::new(h)?;
    let mut vectors = (0..k_len)
        .map(|k| {
            let per_rx: Vec<f64> = phases.iter().map(|p| p[k]).collect();
            pinv.solve(&TargetVector::from_phases(&per_rx))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut stream = WeightStream {
        vectors: Vec::new(),
        symbol_duration,
    };
    if policy == PowerPolicy::PeakUnit {
        let peak = vectors.iter().flatten().map(|w| w.norm()).fold(0.0, f64::max);
        if peak > 0.0 {
            let s = 1.0 / peak;
            for w in vectors.iter_mut().flatten() {
                *w *= s;
            }
        }
    }
    stream.vectors = vectors;
    Ok(stream)
}

/// Writes `symbol_index,element_index,re,im` rows.
pub fn write_weight_csv<W: Write>(stream: &WeightStream, out: W) -> csv::Result<()> {
    let mut out = out;
    writeln!(out, "# format_version: 1")?;
    writeln!(out, "# symbol_duration_s: {}", stream.symbol_duration)?;
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["symbol_index", "element_index", "re", "im"])?;
    for (k, w) in stream.vectors.iter().enumerate() {
        for (m, z) in w.iter().enumerate() {
            wtr.write_record([k.to_string(), m.to_string(), z.re.to_string(), z.im.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_weight_csv<R: Read>(input: R) -> Result<WeightStream, String> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text).map_err(|e| e.to_string())?;
    let symbol_duration = text
        .lines()
        .find_map(|l| l.strip_prefix("# symbol_duration_s:"))
        .ok_or("missing symbol_duration_s header")?
        .trim()
        .parse::<f64>()
        .map_err(|e| e.to_string())?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut vectors: Vec<Vec<Complex64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let field = |i: usize| rec.get(i).ok_or_else(|| format!("short record {rec:?}"));
        let k: usize = field(0)?.parse().map_err(|e| format!("{e}"))?;
        let m: usize = field(1)?.parse().map_err(|e| format!("{e}"))?;
        let re: f64 = field(2)?.parse().map_err(|e| format!("{e}"))?;
        let im: f64 = field(3)?.parse().map_err(|e| format!("{e}"))?;
        if k == vectors.len() {
            vectors.push(Vec::new());
        }
        if k + 1 != vectors.len() || m != vectors[k].len() {
            return Err(format!("out-of-order row: symbol {k}, element {m}"));
        }
        vectors[k].push(Complex64::new(re, im));
    }
    Ok(WeightStream { vectors, symbol_duration })
}
