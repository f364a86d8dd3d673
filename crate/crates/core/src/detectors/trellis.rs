//! Forward-backward recursion over the joint state space
//! `m_n = (x_{n-L+1..n-1}^(1), ..., x_{n-L+1..n-1}^(U))`.
//!
//! Each user contributes `M^{L-1}` sub-states; a joint state is the
//! mixed-radix combination of the sub-states and every state has exactly
//! `M^U` successors. Sub-state digit 0 holds the newest past symbol.
//! Symbols outside the frame are zero, so the recursion starts in the
//! all-zero state and the `L-1` tail steps accept only the zero input.

use num_complex::Complex64;

use super::OpCounter;
use crate::error::{Error, Result};
use crate::messages::normalize_in_place;

/// Largest permitted `U·(L-1)·log2(M)`. The forward pass stores every α
/// row, so memory grows as `(N + L)·2^bits`.
pub const MAX_STATE_BITS: u32 = 16;

/// One forward-backward problem: a subset of users seen through an effective
/// observation sequence with per-sample noise variance.
pub(crate) struct TrellisProblem<'a> {
    /// Effective observation, `N + L - 1` samples.
    pub r: &'a [Complex64],
    /// Noise (plus residual interference) variance per sample.
    pub variance: &'a [f64],
    /// Per user, `L` taps.
    pub taps: Vec<&'a [Complex64]>,
    /// Per user, flat `N·M` prior pmfs.
    pub priors: Vec<&'a [f64]>,
    pub frame_len: usize,
    pub points: &'a [Complex64],
}

/// Per-user outputs, flat `N·M` and normalized per symbol.
pub(crate) struct TrellisOutput {
    pub extrinsic: Vec<Vec<f64>>,
}

pub(crate) fn state_count(users: usize, taps: usize, order: usize) -> Result<usize> {
    let bits = (users * (taps.max(1) - 1)) as u32 * order.trailing_zeros();
    if bits > MAX_STATE_BITS {
        return Err(Error::StateSpaceTooLarge {
            states: 1u128 << bits,
            cap: 1u128 << MAX_STATE_BITS,
        });
    }
    Ok(1usize << bits)
}

pub(crate) fn forward_backward(p: &TrellisProblem<'_>, counter: &mut OpCounter) -> Result<TrellisOutput> {
    let users = p.taps.len();
    let l = p.taps[0].len();
    let m = p.points.len();
    let n_sym = p.frame_len;
    let steps = n_sym + l - 1;
    debug_assert_eq!(p.r.len(), steps);
    debug_assert!(p.taps.iter().all(|t| t.len() == l));

    let sub_states = m.pow((l - 1) as u32);
    let states = state_count(users, l, m)?;
    let inputs = m.pow(users as u32);
    // per joint input / joint state, the per-user digits
    let input_digits: Vec<usize> = (0..inputs)
        .flat_map(|a| (0..users).map(move |u| (a / m.pow(u as u32)) % m))
        .collect();
    let state_digits: Vec<usize> = (0..states)
        .flat_map(|s| (0..users).map(move |u| (s / sub_states.pow(u as u32)) % sub_states))
        .collect();
    let mut next_state = vec![0usize; states * inputs];
    for s in 0..states {
        for a in 0..inputs {
            let mut t = 0;
            let mut stride = 1;
            for u in 0..users {
                let su = state_digits[s * users + u];
                let au = input_digits[a * users + u];
                t += ((su * m + au) % sub_states) * stride;
                stride *= sub_states;
            }
            next_state[s * inputs + a] = t;
        }
    }

    // Noiseless sample for every (state, input) at step n. Sub-state digit
    // `lag - 1` holds x_{n-lag}; out-of-frame symbols are zero.
    let mut contrib = vec![Complex64::new(0.0, 0.0); users * sub_states * m];
    let mut mean = vec![Complex64::new(0.0, 0.0); states * inputs];
    let fill_mean = |n: usize, contrib: &mut [Complex64], mean: &mut [Complex64]| {
        for u in 0..users {
            let h = p.taps[u];
            for s in 0..sub_states {
                let mut past = Complex64::new(0.0, 0.0);
                let mut rest = s;
                for (lag, hl) in h.iter().enumerate().skip(1) {
                    let digit = rest % m;
                    rest /= m;
                    if n >= lag && n - lag < n_sym {
                        past += hl * p.points[digit];
                    }
                }
                for a in 0..m {
                    let now = if n < n_sym {
                        h[0] * p.points[a]
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    contrib[(u * sub_states + s) * m + a] = past + now;
                }
            }
        }
        for s in 0..states {
            for a in 0..inputs {
                let mut mu = Complex64::new(0.0, 0.0);
                for u in 0..users {
                    mu += contrib[(u * sub_states + state_digits[s * users + u]) * m + input_digits[a * users + u]];
                }
                mean[s * inputs + a] = mu;
            }
        }
    };
    // interior steps share one table
    let interior = |n: usize| n + 1 >= l && n < n_sym;
    let mut mean_at: Option<usize> = None;
    let mut interior_mean: Option<Vec<Complex64>> = None;
    let mut load = |n: usize, mean: &mut Vec<Complex64>, at: &mut Option<usize>| {
        if interior(n) {
            if let Some(t) = &interior_mean {
                if at.is_none_or(|k| !interior(k)) {
                    mean.copy_from_slice(t);
                }
            } else {
                fill_mean(n, &mut contrib, mean);
                interior_mean = Some(mean.clone());
            }
        } else {
            fill_mean(n, &mut contrib, mean);
        }
        *at = Some(n);
    };

    // Prior of each joint input, and with one user's prior left out.
    let mut prior_all = vec![0.0; inputs];
    let mut prior_skip = vec![0.0; users * inputs];
    let fill_priors = |n: usize, all: &mut [f64], skip: &mut [f64]| {
        for a in 0..inputs {
            let digit = |u: usize| input_digits[a * users + u];
            let prior = |u: usize| {
                if n < n_sym {
                    p.priors[u][n * m + digit(u)]
                } else {
                    f64::from(digit(u) == 0)
                }
            };
            all[a] = (0..users).map(prior).product();
            for v in 0..users {
                skip[v * inputs + a] = (0..users).filter(|&u| u != v).map(prior).product();
            }
        }
    };
    let live_inputs = |n: usize| if n < n_sym { inputs } else { 1 };

    let mut dist = vec![0.0; states * inputs];
    let mut alpha = vec![0.0; (steps + 1) * states];
    alpha[0] = 1.0;
    for n in 0..steps {
        load(n, &mut mean, &mut mean_at);
        fill_priors(n, &mut prior_all, &mut prior_skip);
        let (cur, next) = alpha[n * states..(n + 2) * states].split_at_mut(states);
        let live = live_inputs(n);
        let rn = p.r[n];
        let mut dmin = f64::INFINITY;
        for s in (0..states).filter(|&s| cur[s] > 0.0) {
            for a in 0..live {
                let d = (rn - mean[s * inputs + a]).norm_sqr();
                dist[s * inputs + a] = d;
                dmin = dmin.min(d);
                counter.factor_evaluations += 1;
            }
        }
        let inv_var = 1.0 / p.variance[n];
        for s in (0..states).filter(|&s| cur[s] > 0.0) {
            for a in 0..live {
                let g = (-(dist[s * inputs + a] - dmin) * inv_var).exp() * prior_all[a];
                next[next_state[s * inputs + a]] += cur[s] * g;
            }
        }
        if !normalize_in_place(next) {
            counter.underflow_resets += 1;
        }
    }

    let mut extrinsic = vec![vec![0.0; n_sym * m]; users];
    let mut beta_next = vec![1.0 / states as f64; states];
    let mut beta = vec![0.0; states];
    for n in (0..steps).rev() {
        load(n, &mut mean, &mut mean_at);
        fill_priors(n, &mut prior_all, &mut prior_skip);
        let cur = &alpha[n * states..(n + 1) * states];
        let live = live_inputs(n);
        let rn = p.r[n];
        let mut dmin = f64::INFINITY;
        for s in (0..states).filter(|&s| cur[s] > 0.0) {
            for a in 0..live {
                let d = (rn - mean[s * inputs + a]).norm_sqr();
                dist[s * inputs + a] = d;
                dmin = dmin.min(d);
            }
        }
        let inv_var = 1.0 / p.variance[n];
        beta.iter_mut().for_each(|b| *b = 0.0);
        for s in (0..states).filter(|&s| cur[s] > 0.0) {
            for a in 0..live {
                let lik = (-(dist[s * inputs + a] - dmin) * inv_var).exp() * beta_next[next_state[s * inputs + a]];
                beta[s] += lik * prior_all[a];
                if n < n_sym {
                    let w = cur[s] * lik;
                    for (u, ext) in extrinsic.iter_mut().enumerate() {
                        ext[n * m + input_digits[a * users + u]] += w * prior_skip[u * inputs + a];
                    }
                }
            }
        }
        if !normalize_in_place(&mut beta) {
            counter.underflow_resets += 1;
        }
        std::mem::swap(&mut beta, &mut beta_next);
        counter.messages_computed += 1;
    }
    for ext in extrinsic.iter_mut() {
        for sym in ext.chunks_exact_mut(m) {
            if !normalize_in_place(sym) {
                counter.underflow_resets += 1;
            }
        }
    }
    Ok(TrellisOutput { extrinsic })
}
