//! Recursive systematic convolutional code and its log-MAP BCJR decoder.

use crate::error::{Error, Result};
use crate::messages::LLR_MAX;

/// State-transition tables for a rate-1/2 RSC code.
///
/// Generators are given in octal with the most significant bit as the `D^0`
/// coefficient, so `(7, 5)` is feedback `1 + D + D²` and feedforward
/// `1 + D²`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RscTrellis {
    memory: usize,
    /// `next[state][input]`
    next: Vec<[usize; 2]>,
    /// `parity[state][input]`
    parity: Vec<[u8; 2]>,
    /// Input bit that drives `state` toward zero.
    flush: Vec<u8>,
}

impl RscTrellis {
    pub fn new(feedback_octal: u32, feedforward_octal: u32) -> Result<Self> {
        if feedback_octal < 2 || feedback_octal.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "feedback polynomial {feedback_octal:o} must have a nonzero delay term"
            )));
        }
        let memory = (u32::BITS - 1 - feedback_octal.leading_zeros()) as usize;
        if feedforward_octal == 0 || feedforward_octal >= (1 << (memory + 1)) {
            return Err(Error::InvalidConfig(format!(
                "feedforward polynomial {feedforward_octal:o} does not fit memory {memory}"
            )));
        }
        // coefficient of D^j
        let coef = |poly: u32, j: usize| ((poly >> (memory - j)) & 1) as u8;
        if coef(feedback_octal, 0) != 1 {
            return Err(Error::InvalidConfig("feedback polynomial needs a D^0 term".into()));
        }
        let n_states = 1 << memory;
        let mut next = vec![[0; 2]; n_states];
        let mut parity = vec![[0; 2]; n_states];
        let mut flush = vec![0; n_states];
        for s in 0..n_states {
            // state bit (j-1) holds a_{k-j}
            let past = |j: usize| ((s >> (j - 1)) & 1) as u8;
            let fb: u8 = (1..=memory)
                .map(|j| coef(feedback_octal, j) & past(j))
                .fold(0, |a, b| a ^ b);
            let ff: u8 = (1..=memory)
                .map(|j| coef(feedforward_octal, j) & past(j))
                .fold(0, |a, b| a ^ b);
            flush[s] = fb;
            for u in 0..2u8 {
                let a = u ^ fb;
                next[s][u as usize] = ((s << 1) | a as usize) & (n_states - 1);
                parity[s][u as usize] = (coef(feedforward_octal, 0) & a) ^ ff;
            }
        }
        Ok(Self {
            memory,
            next,
            parity,
            flush,
        })
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn num_states(&self) -> usize {
        self.next.len()
    }

    /// Encodes `bits` and appends `memory` termination steps. Returns the
    /// systematic stream (including tail inputs) and the parity stream, both
    /// of length `bits.len() + memory`.
    pub fn encode_terminated(&self, bits: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let mut sys = Vec::with_capacity(bits.len() + self.memory);
        let mut par = Vec::with_capacity(bits.len() + self.memory);
        let mut s = 0;
        for &b in bits {
            let u = (b & 1) as usize;
            sys.push(u as u8);
            par.push(self.parity[s][u]);
            s = self.next[s][u];
        }
        for _ in 0..self.memory {
            let u = self.flush[s] as usize;
            sys.push(u as u8);
            par.push(self.parity[s][u]);
            s = self.next[s][u];
        }
        debug_assert_eq!(s, 0);
        (sys, par)
    }
}

/// Extrinsic outputs of one constituent BCJR pass.
#[derive(Clone, Debug, PartialEq)]
pub struct RscExtrinsic {
    /// Per trellis step, posterior LLR of the input bit minus its systematic
    /// and prior LLRs.
    pub info: Vec<f64>,
    /// Per trellis step, posterior LLR of the parity bit minus its channel LLR.
    pub parity: Vec<f64>,
}

#[inline]
fn max_star(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

#[inline]
fn signed(bit: u8, llr: f64) -> f64 {
    if bit == 0 {
        0.5 * llr
    } else {
        -0.5 * llr
    }
}

/// Log-MAP BCJR over a terminated trellis. All three inputs cover the full
/// trellis length (info steps followed by tail steps).
pub fn rsc_bcjr(
    trellis: &RscTrellis,
    systematic_llrs: &[f64],
    parity_llrs: &[f64],
    prior_llrs: &[f64],
) -> Result<RscExtrinsic> {
    let n = systematic_llrs.len();
    for (what, len) in [("parity llrs", parity_llrs.len()), ("prior llrs", prior_llrs.len())] {
        if len != n {
            return Err(Error::LengthMismatch {
                what,
                expected: n,
                got: len,
            });
        }
    }
    let ns = trellis.num_states();
    let neg = f64::NEG_INFINITY;

    let mut alpha = vec![neg; (n + 1) * ns];
    alpha[0] = 0.0;
    for k in 0..n {
        let (cur, nxt) = alpha[k * ns..(k + 2) * ns].split_at_mut(ns);
        let su = systematic_llrs[k] + prior_llrs[k];
        for s in 0..ns {
            if cur[s] == neg {
                continue;
            }
            for u in 0..2 {
                let g = signed(u as u8, su) + signed(trellis.parity[s][u], parity_llrs[k]);
                let t = trellis.next[s][u];
                nxt[t] = max_star(nxt[t], cur[s] + g);
            }
        }
        let m = nxt.iter().cloned().fold(neg, f64::max);
        nxt.iter_mut().for_each(|a| *a -= m);
    }

    let mut beta_next = vec![neg; ns];
    beta_next[0] = 0.0;
    let mut beta = vec![neg; ns];
    let mut info = vec![0.0; n];
    let mut parity = vec![0.0; n];
    for k in (0..n).rev() {
        let a = &alpha[k * ns..(k + 1) * ns];
        let su = systematic_llrs[k] + prior_llrs[k];
        let (mut u0, mut u1, mut p0, mut p1) = (neg, neg, neg, neg);
        beta.iter_mut().for_each(|b| *b = neg);
        for s in 0..ns {
            for u in 0..2 {
                let t = trellis.next[s][u];
                if beta_next[t] == neg {
                    continue;
                }
                let pbit = trellis.parity[s][u];
                let gs = signed(u as u8, su);
                let gp = signed(pbit, parity_llrs[k]);
                beta[s] = max_star(beta[s], beta_next[t] + gs + gp);
                if a[s] == neg {
                    continue;
                }
                let base = a[s] + beta_next[t];
                // info extrinsic excludes the systematic and prior terms,
                // parity extrinsic excludes the parity channel term
                if u == 0 {
                    u0 = max_star(u0, base + gp);
                } else {
                    u1 = max_star(u1, base + gp);
                }
                if pbit == 0 {
                    p0 = max_star(p0, base + gs);
                } else {
                    p1 = max_star(p1, base + gs);
                }
            }
        }
        info[k] = clamp_diff(u0, u1);
        parity[k] = clamp_diff(p0, p1);
        let m = beta.iter().cloned().fold(neg, f64::max);
        beta.iter_mut().for_each(|b| *b -= m);
        std::mem::swap(&mut beta, &mut beta_next);
    }
    Ok(RscExtrinsic { info, parity })
}

fn clamp_diff(a: f64, b: f64) -> f64 {
    match (a == f64::NEG_INFINITY, b == f64::NEG_INFINITY) {
        (true, true) => 0.0,
        (false, true) => LLR_MAX,
        (true, false) => -LLR_MAX,
        (false, false) => (a - b).clamp(-LLR_MAX, LLR_MAX),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trellis() -> RscTrellis {
        RscTrellis::new(0o7, 0o5).unwrap()
    }

    #[test]
    fn rejects_bad_polynomials() {
        assert!(RscTrellis::new(0o4, 0o5).is_err());
        assert!(RscTrellis::new(0o7, 0o17).is_err());
        assert!(RscTrellis::new(0o7, 0).is_err());
    }

    #[test]
    fn four_state_code_tables() {
        let t = trellis();
        assert_eq!(t.memory(), 2);
        assert_eq!(t.num_states(), 4);
        // impulse response of (1, 5/7): parity 1,1,1,0,1,1,0,1,1,...
        let (_, par) = t.encode_terminated(&[1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&par[..7], &[1, 1, 1, 0, 1, 1, 0]);
    }

    #[test]
    fn termination_returns_to_zero() {
        let t = trellis();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let bits: Vec<u8> = (0..30).map(|_| rng.random_range(0..2)).collect();
            let (sys, par) = t.encode_terminated(&bits);
            assert_eq!(sys.len(), 32);
            assert_eq!(par.len(), 32);
            assert_eq!(&sys[..30], &bits[..]);
        }
    }

    #[test]
    fn zero_inputs_give_zero_extrinsics() {
        let z = vec![0.0; 12];
        let out = rsc_bcjr(&trellis(), &z, &z, &z).unwrap();
        assert!(out.info.iter().chain(&out.parity).all(|&e| e.abs() < 1e-12));
    }

    #[test]
    fn certain_channel_propagates_signs() {
        let t = trellis();
        let bits = [1, 0, 1, 1, 0, 0, 1, 0];
        let (sys, par) = t.encode_terminated(&bits);
        let to_llr = |b: &u8| if *b == 0 { LLR_MAX } else { -LLR_MAX };
        let sl: Vec<f64> = sys.iter().map(to_llr).collect();
        let pl: Vec<f64> = par.iter().map(to_llr).collect();
        let out = rsc_bcjr(&t, &sl, &pl, &vec![0.0; sl.len()]).unwrap();
        for (e, b) in out.info.iter().zip(&sys) {
            assert_eq!(*e > 0.0, *b == 0, "{:?}", out.info);
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(rsc_bcjr(&trellis(), &[0.0; 4], &[0.0; 3], &[0.0; 4]).is_err());
    }

    /// Exhaustive posterior over all info words as an oracle.
    fn brute_force(t: &RscTrellis, k: usize, sys: &[f64], par: &[f64], prior: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = k + t.memory();
        let mut u0 = vec![f64::NEG_INFINITY; n];
        let mut u1 = vec![f64::NEG_INFINITY; n];
        let mut q0 = vec![f64::NEG_INFINITY; n];
        let mut q1 = vec![f64::NEG_INFINITY; n];
        let lse = |a: f64, b: f64| {
            if a == f64::NEG_INFINITY {
                b
            } else {
                a.max(b) + (-(a - b).abs()).exp().ln_1p()
            }
        };
        for word in 0..(1u32 << k) {
            let bits: Vec<u8> = (0..k).map(|i| ((word >> i) & 1) as u8).collect();
            let (s, p) = t.encode_terminated(&bits);
            let metric: f64 = (0..n)
                .map(|i| signed(s[i], sys[i] + prior[i]) + signed(p[i], par[i]))
                .sum();
            for i in 0..n {
                let without_u = metric - signed(s[i], sys[i] + prior[i]);
                let without_p = metric - signed(p[i], par[i]);
                if s[i] == 0 {
                    u0[i] = lse(u0[i], without_u)
                } else {
                    u1[i] = lse(u1[i], without_u)
                }
                if p[i] == 0 {
                    q0[i] = lse(q0[i], without_p)
                } else {
                    q1[i] = lse(q1[i], without_p)
                }
            }
        }
        (
            (0..n).map(|i| clamp_diff(u0[i], u1[i])).collect(),
            (0..n).map(|i| clamp_diff(q0[i], q1[i])).collect(),
        )
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let t = trellis();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in [1usize, 4, 9, 12] {
            let n = k + t.memory();
            for _ in 0..3 {
                let sys: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
                let par: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
                let mut prior: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                prior[k..].iter_mut().for_each(|p| *p = 0.0);
                let out = rsc_bcjr(&t, &sys, &par, &prior).unwrap();
                let (bi, bp) = brute_force(&t, k, &sys, &par, &prior);
                for i in 0..n {
                    assert!((out.info[i] - bi[i]).abs() < 1e-6, "k={k} i={i}");
                    assert!((out.parity[i] - bp[i]).abs() < 1e-6, "k={k} i={i}");
                }
            }
        }
    }

    #[test]
    fn extrinsic_is_independent_of_own_prior() {
        let t = trellis();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20;
        let sys: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let par: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let prior: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let base = rsc_bcjr(&t, &sys, &par, &prior).unwrap();
        for i in 0..n {
            let mut p = prior.clone();
            p[i] += 0.7;
            let out = rsc_bcjr(&t, &sys, &par, &p).unwrap();
            assert!((out.info[i] - base.info[i]).abs() < 1e-9);
        }
    }
}
