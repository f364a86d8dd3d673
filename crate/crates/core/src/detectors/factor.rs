//! Sum-product messages out of a single observation factor
//! `f(y | x_1..x_K) = CN(y; Σ h_k x_k, σ²)`, exact and with the weak
//! neighbours replaced by Gaussians.

use num_complex::Complex64;

use super::OpCounter;
use crate::error::{Error, Result};
use crate::messages::{moments_of, normalize_in_place, Constellation, GaussianMoment, SymbolPmf};

/// Split of a factor's non-target neighbours into exactly-marginalized and
/// Gaussian-approximated sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetPartition {
    pub exact_set: Vec<usize>,
    pub gaussian_set: Vec<usize>,
}

/// Neighbour indices sorted by descending `|h|²`, lower index first on ties.
pub(crate) fn power_order(coeffs: &[Complex64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| {
        coeffs[b]
            .norm_sqr()
            .partial_cmp(&coeffs[a].norm_sqr())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

pub(crate) fn split_order(order: &[usize], target: Option<usize>, exact_size: usize) -> SetPartition {
    let mut exact_set = Vec::with_capacity(exact_size);
    let mut gaussian_set = Vec::new();
    for &k in order.iter().filter(|&&k| Some(k) != target) {
        if exact_set.len() < exact_size {
            exact_set.push(k);
        } else {
            gaussian_set.push(k);
        }
    }
    SetPartition {
        exact_set,
        gaussian_set,
    }
}

/// Puts the `exact_size` strongest non-target neighbours in the exact set.
pub fn partition_by_power(coeffs: &[Complex64], target: Option<usize>, exact_size: usize) -> Result<SetPartition> {
    let available = coeffs.len() - usize::from(target.is_some());
    if exact_size > available {
        return Err(Error::InvalidConfig(format!(
            "exact set size {exact_size} exceeds the {available} available neighbours"
        )));
    }
    Ok(split_order(&power_order(coeffs), target, exact_size))
}

/// Reusable buffers for the factor kernels.
#[derive(Default)]
pub(crate) struct KernelScratch {
    dist: Vec<f64>,
    lo: HalfTable,
    hi: HalfTable,
    weight: Vec<f64>,
    digits: Vec<usize>,
    hx: Vec<Complex64>,
}

/// Exact messages from one factor to all of its `K` neighbours.
///
/// `incoming` holds `K` pmfs back to back (`K·M` values); `out` receives the
/// `K` outgoing pmfs in the same layout. Costs `M^K` likelihood evaluations.
pub(crate) fn exact_messages(
    y: Complex64,
    coeffs: &[Complex64],
    incoming: &[f64],
    noise_var: f64,
    points: &[Complex64],
    out: &mut [f64],
    scratch: &mut KernelScratch,
    counter: &mut OpCounter,
) {
    let k = coeffs.len();
    let m = points.len();
    // Split the neighbours into two halves; every joint assignment is a pair
    // (low-half index, high-half index), so the mean and prior factorize.
    let split = k / 2;
    let KernelScratch { dist, lo, hi, .. } = scratch;
    lo.fill(&coeffs[..split], &incoming[..split * m], points);
    hi.fill(&coeffs[split..], &incoming[split * m..], points);
    let (n_lo, n_hi) = (lo.mean.len(), hi.mean.len());

    dist.clear();
    dist.reserve(n_lo * n_hi);
    let mut dmin = f64::INFINITY;
    for &mu_lo in &lo.mean {
        let z = y - mu_lo;
        for &mu_hi in &hi.mean {
            let d = (z - mu_hi).norm_sqr();
            dmin = dmin.min(d);
            dist.push(d);
        }
    }

    lo.weight.iter_mut().for_each(|w| *w = 0.0);
    hi.weight.iter_mut().for_each(|w| *w = 0.0);
    let inv_var = 1.0 / noise_var;
    for (i, row) in dist.chunks_exact(n_hi).enumerate() {
        let p_lo = lo.prior[i];
        let mut acc = 0.0;
        for ((&d, &p_hi), w_hi) in row.iter().zip(&hi.prior).zip(hi.weight.iter_mut()) {
            let lik = (-(d - dmin) * inv_var).exp();
            acc += lik * p_hi;
            *w_hi += lik * p_lo;
        }
        lo.weight[i] = acc;
    }

    out[..k * m].iter_mut().for_each(|o| *o = 0.0);
    lo.scatter(&incoming[..split * m], &mut out[..split * m]);
    hi.scatter(&incoming[split * m..], &mut out[split * m..k * m]);
    for j in 0..k {
        if !normalize_in_place(&mut out[j * m..(j + 1) * m]) {
            counter.underflow_resets += 1;
        }
    }
    counter.factor_evaluations += (n_lo * n_hi) as u64;
    counter.messages_computed += k as u64;
}

/// Joint assignments of a subset of a factor's neighbours.
#[derive(Debug, Default)]
pub(crate) struct HalfTable {
    m: usize,
    width: usize,
    mean: Vec<Complex64>,
    prior: Vec<f64>,
    /// Likelihood mass summed over the other half, per assignment.
    weight: Vec<f64>,
}

impl HalfTable {
    fn fill(&mut self, coeffs: &[Complex64], incoming: &[f64], points: &[Complex64]) {
        let m = points.len();
        let size = m.pow(coeffs.len() as u32);
        self.m = m;
        self.width = coeffs.len();
        self.mean.clear();
        self.mean.resize(size, Complex64::new(0.0, 0.0));
        self.prior.clear();
        self.prior.resize(size, 1.0);
        self.weight.resize(size, 0.0);
        // first neighbour varies fastest
        let mut stride = 1;
        for (j, h) in coeffs.iter().enumerate() {
            for i in 0..size {
                let d = (i / stride) % m;
                self.mean[i] += h * points[d];
                self.prior[i] *= incoming[j * m + d];
            }
            stride *= m;
        }
    }

    /// Adds each assignment's weight, times the priors of the other members
    /// of this half, to the outgoing message of every member.
    fn scatter(&self, incoming: &[f64], out: &mut [f64]) {
        let m = self.m;
        for (i, &w) in self.weight.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let mut rest = i;
            for j in 0..self.width {
                let d = rest % m;
                rest /= m;
                let mut others = w;
                let mut r2 = i;
                for t in 0..self.width {
                    let dt = r2 % m;
                    r2 /= m;
                    if t != j {
                        others *= incoming[t * m + dt];
                    }
                }
                out[j * m + d] += others;
            }
        }
    }
}

/// Approximate message to neighbour `target`: sum over the exact set only,
/// with the Gaussian set folded into the mean and variance of the likelihood.
/// Costs `M^{|A|+1}` evaluations.
#[allow(clippy::too_many_arguments)]
pub(crate) fn approx_message(
    y: Complex64,
    coeffs: &[Complex64],
    incoming: &[f64],
    moments: &[GaussianMoment],
    target: usize,
    partition: &SetPartition,
    noise_var: f64,
    points: &[Complex64],
    out: &mut [f64],
    scratch: &mut KernelScratch,
    counter: &mut OpCounter,
) {
    let m = points.len();
    let a_len = partition.exact_set.len();
    let mut y_eff = y;
    let mut var = noise_var;
    for &l in &partition.gaussian_set {
        y_eff -= coeffs[l] * moments[l].mean;
        var += coeffs[l].norm_sqr() * moments[l].variance;
    }

    let KernelScratch {
        dist,
        weight,
        digits,
        hx,
        ..
    } = scratch;
    hx.clear();
    for &j in &partition.exact_set {
        hx.extend(points.iter().map(|p| coeffs[j] * p));
    }
    let target_hx: Vec<Complex64> = points.iter().map(|p| coeffs[target] * p).collect();

    let assignments = m.pow(a_len as u32);
    dist.clear();
    weight.clear();
    digits.clear();
    digits.resize(a_len, 0);
    let mut dmin = f64::INFINITY;
    for _ in 0..assignments {
        let mut mu = Complex64::new(0.0, 0.0);
        let mut w = 1.0;
        for (pos, &d) in digits.iter().enumerate() {
            mu += hx[pos * m + d];
            w *= incoming[partition.exact_set[pos] * m + d];
        }
        let resid = y_eff - mu;
        for t in &target_hx {
            let d = (resid - t).norm_sqr();
            dmin = dmin.min(d);
            dist.push(d);
        }
        weight.push(w);
        increment(digits, m);
    }

    let o = &mut out[..m];
    o.iter_mut().for_each(|v| *v = 0.0);
    let inv_var = 1.0 / var;
    for (chunk, &w) in dist.chunks_exact(m).zip(weight.iter()) {
        if w > 0.0 {
            for (xi, &d) in chunk.iter().enumerate() {
                o[xi] += w * (-(d - dmin) * inv_var).exp();
            }
        }
    }
    if !normalize_in_place(o) {
        counter.underflow_resets += 1;
    }
    counter.factor_evaluations += (assignments * m) as u64;
    counter.messages_computed += 1;
}

#[inline]
fn increment(digits: &mut [usize], m: usize) {
    // last neighbour varies fastest
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < m {
            return;
        }
        *d = 0;
    }
}

fn flatten(incoming: &[SymbolPmf], m: usize) -> Result<Vec<f64>> {
    let mut flat = Vec::with_capacity(incoming.len() * m);
    for pmf in incoming {
        if pmf.len() != m {
            return Err(Error::LengthMismatch {
                what: "incoming message",
                expected: m,
                got: pmf.len(),
            });
        }
        flat.extend_from_slice(pmf.probs());
    }
    Ok(flat)
}

fn check_factor(coeffs: &[Complex64], incoming: &[SymbolPmf], target: usize) -> Result<()> {
    if coeffs.is_empty() || coeffs.len() != incoming.len() {
        return Err(Error::LengthMismatch {
            what: "factor neighbours",
            expected: coeffs.len(),
            got: incoming.len(),
        });
    }
    if target >= coeffs.len() {
        return Err(Error::InvalidConfig(format!("target {target} out of range")));
    }
    Ok(())
}

/// Exact factor-to-variable message toward neighbour `target`.
#[allow(clippy::too_many_arguments)]
pub fn spa_factor_message_exact(
    y: Complex64,
    coeffs: &[Complex64],
    incoming: &[SymbolPmf],
    target: usize,
    noise_var: f64,
    c: &Constellation,
    counter: &mut OpCounter,
) -> Result<SymbolPmf> {
    check_factor(coeffs, incoming, target)?;
    let m = c.order();
    let flat = flatten(incoming, m)?;
    let mut out = vec![0.0; coeffs.len() * m];
    exact_messages(
        y,
        coeffs,
        &flat,
        noise_var,
        c.points(),
        &mut out,
        &mut KernelScratch::default(),
        counter,
    );
    Ok(SymbolPmf::from_normalized(out[target * m..(target + 1) * m].to_vec()))
}

/// Approximate factor-to-variable message toward neighbour `target`.
#[allow(clippy::too_many_arguments)]
pub fn spa_factor_message_approx(
    y: Complex64,
    coeffs: &[Complex64],
    incoming: &[SymbolPmf],
    moments: &[GaussianMoment],
    target: usize,
    partition: &SetPartition,
    noise_var: f64,
    c: &Constellation,
    counter: &mut OpCounter,
) -> Result<SymbolPmf> {
    check_factor(coeffs, incoming, target)?;
    if moments.len() != coeffs.len() {
        return Err(Error::LengthMismatch {
            what: "moments",
            expected: coeffs.len(),
            got: moments.len(),
        });
    }
    let covered = partition.exact_set.len() + partition.gaussian_set.len() + 1;
    if covered != coeffs.len()
        || partition
            .exact_set
            .iter()
            .chain(&partition.gaussian_set)
            .any(|&k| k == target || k >= coeffs.len())
    {
        return Err(Error::InvalidConfig(
            "partition does not cover the non-target neighbours".into(),
        ));
    }
    let m = c.order();
    let flat = flatten(incoming, m)?;
    let mut out = vec![0.0; m];
    approx_message(
        y,
        coeffs,
        &flat,
        moments,
        target,
        partition,
        noise_var,
        c.points(),
        &mut out,
        &mut KernelScratch::default(),
        counter,
    );
    Ok(SymbolPmf::from_normalized(out))
}

/// Moments of each incoming pmf (convenience for callers of the approximate
/// message).
pub fn incoming_moments(incoming: &[SymbolPmf], c: &Constellation) -> Vec<GaussianMoment> {
    incoming.iter().map(|p| moments_of(p.probs(), c.points())).collect()
}
