//! Message algebra shared by every detector.
//!
//! Symbol messages are linear-domain probability mass functions over the
//! constellation. Bit messages are log-likelihood ratios `ln P(0)/P(1)`,
//! clamped to [`LLR_MAX`]. The functions here implement the modulation
//! factor in both directions and the moment extraction used by the
//! Gaussian interference approximation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitude clamp for every bit LLR crossing a module boundary.
pub const LLR_MAX: f64 = 50.0;

/// Supported symbol alphabets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Bpsk,
    Qpsk,
}

/// A unit-average-energy symbol alphabet.
///
/// Points are stored in label order: the point at index `i` carries the bit
/// label given by the binary expansion of `i`, most significant bit first.
/// With that convention the labeling map is the identity on indices and is a
/// bijection by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Modulation", into = "Modulation")]
pub struct Constellation {
    modulation: Modulation,
    points: Vec<Complex64>,
    bits_per_symbol: usize,
}

impl From<Modulation> for Constellation {
    fn from(m: Modulation) -> Self {
        Self::new(m)
    }
}

impl From<Constellation> for Modulation {
    fn from(c: Constellation) -> Self {
        c.modulation
    }
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        match modulation {
            Modulation::Bpsk => Self::bpsk(),
            Modulation::Qpsk => Self::qpsk(),
        }
    }

    /// BPSK: bit 0 -> +1, bit 1 -> -1.
    pub fn bpsk() -> Self {
        Self {
            modulation: Modulation::Bpsk,
            points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            bits_per_symbol: 1,
        }
    }

    /// Gray-labeled QPSK, `(±1 ± j)/√2`. The first label bit selects the sign
    /// of the real part and the second bit the sign of the imaginary part.
    pub fn qpsk() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let points = (0..4)
            .map(|label| {
                let re = if label & 0b10 == 0 { a } else { -a };
                let im = if label & 0b01 == 0 { a } else { -a };
                Complex64::new(re, im)
            })
            .collect();
        Self {
            modulation: Modulation::Qpsk,
            points,
            bits_per_symbol: 2,
        }
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Modulation order M.
    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Bit `bit` (0 = first/most significant) of the label of point `index`.
    #[inline]
    pub fn label_bit(&self, index: usize, bit: usize) -> u8 {
        ((index >> (self.bits_per_symbol - 1 - bit)) & 1) as u8
    }

    /// Index of the point labeled by `bits` (most significant first).
    pub fn index_of_label(&self, bits: &[u8]) -> usize {
        debug_assert_eq!(bits.len(), self.bits_per_symbol);
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b as usize & 1))
    }

    /// Nearest point (minimum Euclidean distance), returned as an index.
    pub fn hard_decision(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// A discrete distribution over the points of a constellation.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolPmf {
    probs: Vec<f64>,
}

impl SymbolPmf {
    pub fn uniform(order: usize) -> Self {
        Self {
            probs: vec![1.0 / order as f64; order],
        }
    }

    /// Point mass on `index`.
    pub fn degenerate(order: usize, index: usize) -> Self {
        let mut probs = vec![0.0; order];
        probs[index] = 1.0;
        Self { probs }
    }

    /// Wraps values the caller guarantees are already normalized.
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the most probable point (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Elementwise product with `other`, renormalized.
    pub fn product(&self, other: &SymbolPmf) -> Result<SymbolPmf> {
        let raw: Vec<f64> = self.probs.iter().zip(&other.probs).map(|(a, b)| a * b).collect();
        normalize_pmf(&raw)
    }
}

/// Mean and variance of a symbol message.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianMoment {
    pub mean: Complex64,
    pub variance: f64,
}

impl GaussianMoment {
    /// Moment of a symbol known exactly.
    pub fn known(value: Complex64) -> Self {
        Self {
            mean: value,
            variance: 0.0,
        }
    }
}

/// A bit log-likelihood ratio `ln P(bit = 0) / P(bit = 1)`, clamped to
/// `±LLR_MAX`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct BitLlr(f64);

impl BitLlr {
    pub const ZERO: BitLlr = BitLlr(0.0);

    /// Clamps into `[-LLR_MAX, LLR_MAX]`. NaN maps to zero.
    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            BitLlr(0.0)
        } else {
            BitLlr(value.clamp(-LLR_MAX, LLR_MAX))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Probability that the bit is 0.
    pub fn prob_zero(self) -> f64 {
        1.0 / (1.0 + (-self.0).exp())
    }
}

impl From<f64> for BitLlr {
    fn from(value: f64) -> Self {
        BitLlr::new(value)
    }
}

/// Scales nonnegative weights to sum to one.
pub fn normalize_pmf(raw_weights: &[f64]) -> Result<SymbolPmf> {
    let sum: f64 = raw_weights.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::AllZero);
    }
    Ok(SymbolPmf {
        probs: raw_weights.iter().map(|w| w / sum).collect(),
    })
}

/// In-place normalization used on hot paths. Returns `false` (and writes the
/// uniform distribution) when the weights collapse.
#[inline]
pub(crate) fn normalize_in_place(weights: &mut [f64]) -> bool {
    let sum: f64 = weights.iter().sum();
    if sum >= f64::MIN_POSITIVE && sum.is_finite() {
        let inv = 1.0 / sum;
        weights.iter_mut().for_each(|w| *w *= inv);
        true
    } else if sum > 0.0 && sum.is_finite() {
        // subnormal: bring the largest weight to one first
        let max = weights.iter().cloned().fold(0.0, f64::max);
        weights.iter_mut().for_each(|w| *w /= max);
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        true
    } else {
        let u = 1.0 / weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = u);
        false
    }
}

/// Mean and variance of `pmf` over the points of `c`.
pub fn pmf_moments(pmf: &SymbolPmf, c: &Constellation) -> GaussianMoment {
    moments_of(pmf.probs(), c.points())
}

#[inline]
pub(crate) fn moments_of(probs: &[f64], points: &[Complex64]) -> GaussianMoment {
    let mean: Complex64 = probs.iter().zip(points).map(|(&p, &x)| x * p).sum();
    let variance = probs
        .iter()
        .zip(points)
        .map(|(&p, &x)| (x - mean).norm_sqr() * p)
        .sum::<f64>()
        .max(0.0);
    GaussianMoment { mean, variance }
}

/// Modulation factor, decoder-to-detector direction: symbol prior from
/// independent bit priors.
pub fn bits_to_symbol_prior(bit_llrs: &[BitLlr], c: &Constellation) -> Result<SymbolPmf> {
    let bps = c.bits_per_symbol();
    if bit_llrs.len() != bps {
        return Err(Error::LengthMismatch {
            what: "bit llrs per symbol",
            expected: bps,
            got: bit_llrs.len(),
        });
    }
    // Work in the log domain so that two clamped bits cannot underflow.
    let mut logw: Vec<f64> = (0..c.order())
        .map(|idx| {
            bit_llrs
                .iter()
                .enumerate()
                .map(|(b, llr)| {
                    let l = llr.value();
                    // ln P(bit) = -ln(1 + e^{∓l})
                    if c.label_bit(idx, b) == 0 {
                        -ln_1p_exp(-l)
                    } else {
                        -ln_1p_exp(l)
                    }
                })
                .sum()
        })
        .collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    logw.iter_mut().for_each(|w| *w = (*w - max).exp());
    normalize_pmf(&logw)
}

/// Modulation factor, detector-to-decoder direction: per-bit LLRs of the
/// posterior with each bit's own prior removed.
pub fn symbol_to_bit_extrinsic(posterior: &SymbolPmf, prior_llrs: &[BitLlr], c: &Constellation) -> Result<Vec<BitLlr>> {
    let bps = c.bits_per_symbol();
    if prior_llrs.len() != bps {
        return Err(Error::LengthMismatch {
            what: "prior llrs per symbol",
            expected: bps,
            got: prior_llrs.len(),
        });
    }
    Ok((0..bps)
        .map(|b| {
            let (mut p0, mut p1) = (0.0, 0.0);
            for (idx, &p) in posterior.probs().iter().enumerate() {
                if c.label_bit(idx, b) == 0 {
                    p0 += p;
                } else {
                    p1 += p;
                }
            }
            let total = match (p0 > 0.0, p1 > 0.0) {
                (true, true) => (p0 / p1).ln(),
                (true, false) => LLR_MAX,
                (false, true) => -LLR_MAX,
                (false, false) => 0.0,
            };
            BitLlr::new(total - prior_llrs[b].value())
        })
        .collect())
}

/// Same quantity as [`symbol_to_bit_extrinsic`] applied to
/// `normalize(extrinsic · prior)`, computed from the detector's symbol
/// extrinsic directly so that no saturated LLR is ever subtracted from
/// another.
pub fn symbol_extrinsic_to_bits(
    extrinsic: &SymbolPmf,
    prior_llrs: &[BitLlr],
    c: &Constellation,
) -> Result<Vec<BitLlr>> {
    let bps = c.bits_per_symbol();
    if prior_llrs.len() != bps {
        return Err(Error::LengthMismatch {
            what: "prior llrs per symbol",
            expected: bps,
            got: prior_llrs.len(),
        });
    }
    let bit_logp = |idx: usize, b: usize| {
        let l = prior_llrs[b].value();
        if c.label_bit(idx, b) == 0 {
            -ln_1p_exp(-l)
        } else {
            -ln_1p_exp(l)
        }
    };
    Ok((0..bps)
        .map(|b| {
            let mut side = [f64::NEG_INFINITY; 2];
            for (idx, &e) in extrinsic.probs().iter().enumerate() {
                let others: f64 = (0..bps).filter(|&o| o != b).map(|o| bit_logp(idx, o)).sum();
                let lw = e.ln() + others;
                let s = &mut side[c.label_bit(idx, b) as usize];
                *s = log_add(*s, lw);
            }
            BitLlr::new(side[0] - side[1])
        })
        .collect())
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub(crate) fn ln_1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
