//! Flooding sum-product on the fully connected detection graph.
//!
//! Observation factor `f_{r_n}` touches every `x_k^(u)` with `k = n - l`,
//! `0 ≤ l < L`; the edge `(u, k, l)` carries coefficient `h_l^(u)`. Factor to
//! variable messages persist between calls so that consecutive receiver
//! iterations continue the same message-passing schedule.

use num_complex::Complex64;

use super::factor::{approx_message, exact_messages, power_order, split_order, KernelScratch};
use super::{DetectorInput, OpCounter};
use crate::error::{Error, Result};
use crate::messages::{moments_of, normalize_in_place, GaussianMoment, SymbolPmf};

/// How factor messages are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorVariant {
    Exact,
    /// Exact marginalization over at most this many strongest co-neighbours,
    /// Gaussian approximation for the rest.
    Approx(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FloodOptions {
    /// Floods per call.
    pub sweeps: usize,
    /// Weight on the new factor message (1 = no damping).
    pub damping: f64,
    /// Largest `M^K` an exact factor may enumerate.
    pub evaluation_budget: u64,
}

impl Default for FloodOptions {
    fn default() -> Self {
        Self {
            sweeps: 1,
            damping: 1.0,
            evaluation_budget: 1 << 20,
        }
    }
}

/// Factor-to-variable messages kept between calls, flat over
/// `(user, symbol, lag, point)`, linear domain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphState {
    messages: Vec<f64>,
    shape: (usize, usize, usize, usize),
}

impl GraphState {
    pub fn reset(&mut self) {
        self.messages.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

/// One or more floods; returns per-symbol extrinsics (product of all factor
/// messages into the symbol, prior excluded).
pub fn fully_connected_detect(
    input: &DetectorInput,
    variant: FactorVariant,
    options: FloodOptions,
    state: &mut GraphState,
    counter: &mut OpCounter,
) -> Result<Vec<Vec<SymbolPmf>>> {
    let dims = input.dims()?;
    let (users, n, l, m) = (dims.users, dims.frame_len, dims.taps, dims.order);
    if let FactorVariant::Exact = variant {
        let evaluations = (m as u128).checked_pow((users * l) as u32).unwrap_or(u128::MAX);
        if evaluations > options.evaluation_budget as u128 {
            return Err(Error::ComplexityCap {
                evaluations,
                budget: options.evaluation_budget as u128,
            });
        }
    }
    let shape = (users, n, l, m);
    if state.shape != shape || state.messages.len() != users * n * l * m {
        state.shape = shape;
        state.messages = vec![1.0 / m as f64; users * n * l * m];
    }
    let edge = |u: usize, k: usize, lag: usize| ((u * n + k) * l + lag) * m;
    let points = input.constellation.points();
    let priors: Vec<Vec<f64>> = input
        .priors
        .iter()
        .map(|user| user.iter().flat_map(|p| p.probs().iter().copied()).collect())
        .collect();

    let mut to_factor = vec![0.0; users * n * l * m];
    let mut moments = vec![GaussianMoment::known(Complex64::new(0.0, 0.0)); users * n * l];
    let mut scratch = KernelScratch::default();
    let mut coeffs = Vec::with_capacity(users * l);
    let mut incoming = Vec::with_capacity(users * l * m);
    let mut neigh_moments = Vec::with_capacity(users * l);
    let mut edges = Vec::with_capacity(users * l);
    let mut out = vec![0.0; users * l * m];

    for _ in 0..options.sweeps.max(1) {
        // variable -> factor: prior times every other factor's message
        for u in 0..users {
            for k in 0..n {
                for lag in 0..l {
                    let dst = edge(u, k, lag);
                    for a in 0..m {
                        let mut v = priors[u][k * m + a];
                        for other in (0..l).filter(|&o| o != lag) {
                            v *= state.messages[edge(u, k, other) + a];
                        }
                        to_factor[dst + a] = v;
                    }
                    if !normalize_in_place(&mut to_factor[dst..dst + m]) {
                        counter.underflow_resets += 1;
                    }
                    moments[dst / m] = moments_of(&to_factor[dst..dst + m], points);
                }
            }
        }

        // factor -> variable
        for s in 0..n + l - 1 {
            coeffs.clear();
            incoming.clear();
            neigh_moments.clear();
            edges.clear();
            for u in 0..users {
                for lag in 0..l {
                    if s >= lag && s - lag < n {
                        let e = edge(u, s - lag, lag);
                        coeffs.push(input.taps[u].taps[lag]);
                        incoming.extend_from_slice(&to_factor[e..e + m]);
                        neigh_moments.push(moments[e / m]);
                        edges.push(e);
                    }
                }
            }
            let k = coeffs.len();
            match variant {
                FactorVariant::Exact => {
                    exact_messages(
                        input.r[s],
                        &coeffs,
                        &incoming,
                        input.noise.variance,
                        points,
                        &mut out,
                        &mut scratch,
                        counter,
                    );
                }
                FactorVariant::Approx(size) => {
                    let order = power_order(&coeffs);
                    let size = size.min(k - 1);
                    for target in 0..k {
                        let partition = split_order(&order, Some(target), size);
                        approx_message(
                            input.r[s],
                            &coeffs,
                            &incoming,
                            &neigh_moments,
                            target,
                            &partition,
                            input.noise.variance,
                            points,
                            &mut out[target * m..(target + 1) * m],
                            &mut scratch,
                            counter,
                        );
                    }
                }
            }
            for (j, &e) in edges.iter().enumerate() {
                let new = &out[j * m..(j + 1) * m];
                let old = &mut state.messages[e..e + m];
                if options.damping >= 1.0 {
                    old.copy_from_slice(new);
                } else {
                    for (o, &v) in old.iter_mut().zip(new) {
                        *o = options.damping * v + (1.0 - options.damping) * *o;
                    }
                }
            }
        }
    }

    let mut result = Vec::with_capacity(users);
    for u in 0..users {
        let mut user = Vec::with_capacity(n);
        for k in 0..n {
            let mut w: Vec<f64> = (0..m)
                .map(|a| (0..l).map(|lag| state.messages[edge(u, k, lag) + a]).product())
                .collect();
            if !normalize_in_place(&mut w) {
                counter.underflow_resets += 1;
            }
            user.push(SymbolPmf::from_normalized(w));
        }
        result.push(user);
    }
    Ok(result)
}

/// Exact number of likelihood evaluations one flood performs, accounting for
/// the partially filled factors at the frame edges.
pub fn flood_evaluations(variant: FactorVariant, users: usize, frame_len: usize, taps: usize, order: usize) -> u64 {
    (0..frame_len + taps - 1)
        .map(|s| {
            let live_lags = (0..taps).filter(|&lag| s >= lag && s - lag < frame_len).count();
            let k = (users * live_lags) as u32;
            match variant {
                FactorVariant::Exact => (order as u64).pow(k),
                FactorVariant::Approx(size) => {
                    let a = size.min(k as usize - 1) as u32;
                    k as u64 * (order as u64).pow(a + 1)
                }
            }
        })
        .sum()
}
