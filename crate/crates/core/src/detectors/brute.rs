//! Exhaustive marginalization of the joint posterior. Test and validation
//! oracle only; exponential in `U·N`.

use num_complex::Complex64;

use super::DetectorInput;
use crate::error::{Error, Result};
use crate::messages::{normalize_pmf, SymbolPmf};

/// Largest number of joint symbol assignments the oracle will enumerate.
pub const BRUTE_FORCE_CAP: u128 = 1 << 24;

/// Exact `p(x_k^(u) | r)` under the priors, by enumerating every symbol
/// matrix.
pub fn brute_force_symbol_posteriors(input: &DetectorInput) -> Result<Vec<Vec<SymbolPmf>>> {
    let dims = input.dims()?;
    let (users, n, m) = (dims.users, dims.frame_len, dims.order);
    let vars = users * n;
    let assignments = (m as u128).checked_pow(vars as u32).unwrap_or(u128::MAX);
    if assignments > BRUTE_FORCE_CAP {
        return Err(Error::TooLarge {
            assignments,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let points = input.constellation.points();
    let var = input.noise.variance;

    let log_weight = |assign: u64| -> f64 {
        let sym = |u: usize, k: usize| ((assign / (m as u64).pow((u * n + k) as u32)) % m as u64) as usize;
        let mut lw = 0.0;
        for (s, &r) in input.r.iter().enumerate() {
            let mut mean = Complex64::new(0.0, 0.0);
            for (u, taps) in input.taps.iter().enumerate() {
                for (lag, h) in taps.taps.iter().enumerate() {
                    if s >= lag && s - lag < n {
                        mean += h * points[sym(u, s - lag)];
                    }
                }
            }
            lw -= (r - mean).norm_sqr() / var;
        }
        for u in 0..users {
            for k in 0..n {
                lw += input.priors[u][k].probs()[sym(u, k)].ln();
            }
        }
        lw
    };

    let total = assignments as u64;
    let max = (0..total).map(log_weight).fold(f64::NEG_INFINITY, f64::max);
    let mut acc = vec![vec![vec![0.0; m]; n]; users];
    for assign in 0..total {
        let w = (log_weight(assign) - max).exp();
        for u in 0..users {
            for k in 0..n {
                let x = ((assign / (m as u64).pow((u * n + k) as u32)) % m as u64) as usize;
                acc[u][k][x] += w;
            }
        }
    }
    acc.into_iter()
        .map(|user| user.iter().map(|w| normalize_pmf(w)).collect())
        .collect()
}
