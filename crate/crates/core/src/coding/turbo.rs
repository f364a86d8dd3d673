//! Rate-1/2 parallel concatenated (turbo) code built from two identical RSC
//! constituents.
//!
//! Coded frame layout, for `n_info` information bits and constituent memory
//! `ν`:
//!
//! ```text
//! [u_0, p_0, u_1, p_1, ..., u_{K-1}, p_{K-1}, tail_1 (2ν bits), tail_2 (2ν bits)]
//! ```
//!
//! where `p_k` is the parity of the constituent chosen by the puncturing
//! schedule at step `k`, and each tail is the interleaved `(input, parity)`
//! pairs of the termination steps of that constituent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rsc::{rsc_bcjr, RscTrellis};
use crate::error::{Error, Result};
use crate::messages::{BitLlr, LLR_MAX};
use crate::receiver::decide_bits;

/// Turbo code parameters. Serialized verbatim inside scenario files, with the
/// interleaver as an explicit index list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurboConfig {
    pub feedback_octal: u32,
    pub feedforward_octal: u32,
    /// `interleaver[j]` is the natural-order index of the `j`th bit fed to
    /// the second constituent.
    pub interleaver: Vec<usize>,
    pub n_info: usize,
    pub n_coded: usize,
    /// Cycled over info steps: which constituent (1 or 2) sends its parity.
    pub puncturing: Vec<u8>,
    /// Constituent sweep pairs per decoder invocation.
    pub inner_iterations: usize,
}

impl TurboConfig {
    /// The default frame: `(1, 5/7)` constituents, 246 info bits, 500 coded
    /// bits, alternating parity, one sweep pair per call.
    pub fn standard(interleaver_seed: u64) -> Self {
        Self::with_length(246, interleaver_seed)
    }

    /// `(1, 5/7)` code with `n_info` info bits and a seeded random interleaver.
    pub fn with_length(n_info: usize, interleaver_seed: u64) -> Self {
        Self {
            feedback_octal: 0o7,
            feedforward_octal: 0o5,
            interleaver: random_interleaver(n_info, interleaver_seed),
            n_info,
            n_coded: 2 * n_info + 8,
            puncturing: vec![1, 2],
            inner_iterations: 1,
        }
    }

    pub fn trellis(&self) -> Result<RscTrellis> {
        RscTrellis::new(self.feedback_octal, self.feedforward_octal)
    }

    pub fn validate(&self) -> Result<()> {
        let trellis = self.trellis()?;
        if self.interleaver.len() != self.n_info {
            return Err(Error::LengthMismatch {
                what: "interleaver",
                expected: self.n_info,
                got: self.interleaver.len(),
            });
        }
        let mut seen = vec![false; self.n_info];
        for &i in &self.interleaver {
            if i >= self.n_info || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidConfig("interleaver is not a permutation".into()));
            }
        }
        if self.puncturing.is_empty() || self.puncturing.iter().any(|&p| p != 1 && p != 2) {
            return Err(Error::InvalidConfig("puncturing entries must be 1 or 2".into()));
        }
        let expected = 2 * self.n_info + 4 * trellis.memory();
        if self.n_coded != expected {
            return Err(Error::InvalidConfig(format!(
                "n_coded {} does not match layout size {expected}",
                self.n_coded
            )));
        }
        if self.inner_iterations == 0 {
            return Err(Error::InvalidConfig("inner_iterations must be at least 1".into()));
        }
        Ok(())
    }

    fn parity_owner(&self, k: usize) -> u8 {
        self.puncturing[k % self.puncturing.len()]
    }
}

/// Seeded Fisher-Yates permutation of `0..n`.
pub fn random_interleaver(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

pub fn turbo_encode(info_bits: &[u8], cfg: &TurboConfig) -> Result<Vec<u8>> {
    if info_bits.len() != cfg.n_info {
        return Err(Error::LengthMismatch {
            what: "info bits",
            expected: cfg.n_info,
            got: info_bits.len(),
        });
    }
    let trellis = cfg.trellis()?;
    let interleaved: Vec<u8> = cfg.interleaver.iter().map(|&i| info_bits[i]).collect();
    let (s1, p1) = trellis.encode_terminated(info_bits);
    let (s2, p2) = trellis.encode_terminated(&interleaved);

    let k = cfg.n_info;
    let mut coded = Vec::with_capacity(cfg.n_coded);
    for i in 0..k {
        coded.push(info_bits[i] & 1);
        coded.push(if cfg.parity_owner(i) == 1 { p1[i] } else { p2[i] });
    }
    for (s, p) in [(&s1, &p1), (&s2, &p2)] {
        for t in k..k + trellis.memory() {
            coded.push(s[t]);
            coded.push(p[t]);
        }
    }
    Ok(coded)
}

/// Decoder memory carried between invocations: the second constituent's
/// extrinsic information on the info bits, in natural order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TurboState {
    pub feedback: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurboOutput {
    /// Total posterior LLRs of the info bits.
    pub info_llrs: Vec<BitLlr>,
    /// Extrinsic LLRs on every coded bit (channel input excluded), for
    /// feedback to the detector.
    pub coded_extrinsic: Vec<BitLlr>,
    pub hard_info_bits: Vec<u8>,
    pub state: TurboState,
}

/// Runs `cfg.inner_iterations` constituent sweep pairs.
///
/// `state` seeds the first constituent's prior with the second constituent's
/// extrinsic from a previous call; `None` starts from zero.
pub fn turbo_decode(coded_llrs: &[BitLlr], cfg: &TurboConfig, state: Option<&TurboState>) -> Result<TurboOutput> {
    if coded_llrs.len() != cfg.n_coded {
        return Err(Error::LengthMismatch {
            what: "coded llrs",
            expected: cfg.n_coded,
            got: coded_llrs.len(),
        });
    }
    let trellis = cfg.trellis()?;
    let k = cfg.n_info;
    let nu = trellis.memory();
    let n = k + nu;
    let lc = |i: usize| coded_llrs[i].value();

    let mut sys1 = vec![0.0; n];
    let mut par1 = vec![0.0; n];
    let mut sys2 = vec![0.0; n];
    let mut par2 = vec![0.0; n];
    for i in 0..k {
        sys1[i] = lc(2 * i);
        if cfg.parity_owner(i) == 1 {
            par1[i] = lc(2 * i + 1);
        } else {
            par2[i] = lc(2 * i + 1);
        }
    }
    for j in 0..k {
        sys2[j] = sys1[cfg.interleaver[j]];
    }
    let tail1 = 2 * k;
    let tail2 = 2 * k + 2 * nu;
    for t in 0..nu {
        sys1[k + t] = lc(tail1 + 2 * t);
        par1[k + t] = lc(tail1 + 2 * t + 1);
        sys2[k + t] = lc(tail2 + 2 * t);
        par2[k + t] = lc(tail2 + 2 * t + 1);
    }

    let mut feedback = match state {
        Some(s) if s.feedback.len() == k => s.feedback.clone(),
        Some(s) if !s.feedback.is_empty() => {
            return Err(Error::LengthMismatch {
                what: "turbo state",
                expected: k,
                got: s.feedback.len(),
            })
        }
        _ => vec![0.0; k],
    };
    let mut prior1 = vec![0.0; n];
    let mut prior2 = vec![0.0; n];
    let mut ext1 = None;
    let mut ext2 = None;
    for _ in 0..cfg.inner_iterations {
        prior1[..k].copy_from_slice(&feedback);
        let e1 = rsc_bcjr(&trellis, &sys1, &par1, &prior1)?;
        for j in 0..k {
            prior2[j] = e1.info[cfg.interleaver[j]];
        }
        let e2 = rsc_bcjr(&trellis, &sys2, &par2, &prior2)?;
        for j in 0..k {
            feedback[cfg.interleaver[j]] = e2.info[j];
        }
        ext1 = Some(e1);
        ext2 = Some(e2);
    }
    let (e1, e2) = (ext1.expect("at least one sweep"), ext2.expect("at least one sweep"));

    let info_llrs: Vec<BitLlr> = (0..k)
        .map(|i| BitLlr::new(sys1[i] + e1.info[i] + feedback[i]))
        .collect();

    let mut coded_extrinsic = Vec::with_capacity(cfg.n_coded);
    let mut e2_parity_natural = vec![0.0; k];
    e2_parity_natural.copy_from_slice(&e2.parity[..k]);
    for i in 0..k {
        coded_extrinsic.push(BitLlr::new(e1.info[i] + feedback[i]));
        let p = if cfg.parity_owner(i) == 1 {
            e1.parity[i]
        } else {
            e2_parity_natural[i]
        };
        coded_extrinsic.push(BitLlr::new(p));
    }
    for e in [&e1, &e2] {
        for t in k..n {
            coded_extrinsic.push(BitLlr::new(e.info[t]));
            coded_extrinsic.push(BitLlr::new(e.parity[t]));
        }
    }
    let hard_info_bits = decide_bits(&info_llrs);
    Ok(TurboOutput {
        info_llrs,
        coded_extrinsic,
        hard_info_bits,
        state: TurboState {
            feedback: feedback.iter().map(|f| f.clamp(-LLR_MAX, LLR_MAX)).collect(),
        },
    })
}
