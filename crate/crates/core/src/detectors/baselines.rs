//! Reduced-complexity baselines that equalize one user at a time against
//! Gaussianized co-user interference.

use num_complex::Complex64;

use super::trellis::{forward_backward, TrellisProblem};
use super::{DetectorInput, OpCounter};
use crate::error::{Error, Result};
use crate::messages::{moments_of, normalize_in_place, GaussianMoment, SymbolPmf};

/// Moments of every symbol's current belief: the decoder prior, times the
/// detector's own extrinsic from the previous pass when there is one.
fn user_moments(input: &DetectorInput, previous: Option<&[Vec<SymbolPmf>]>) -> Vec<Vec<GaussianMoment>> {
    let points = input.constellation.points();
    input
        .priors
        .iter()
        .enumerate()
        .map(|(u, user)| {
            user.iter()
                .enumerate()
                .map(|(k, p)| match previous {
                    Some(prev) => {
                        let mut w: Vec<f64> = p.probs().iter().zip(prev[u][k].probs()).map(|(a, b)| a * b).collect();
                        normalize_in_place(&mut w);
                        moments_of(&w, points)
                    }
                    None => moments_of(p.probs(), points),
                })
                .collect()
        })
        .collect()
}

fn check_previous(input: &DetectorInput, previous: Option<&[Vec<SymbolPmf>]>) -> Result<()> {
    if let Some(prev) = previous {
        let shape_ok = prev.len() == input.priors.len()
            && prev
                .iter()
                .zip(&input.priors)
                .all(|(a, b)| a.len() == b.len() && a.iter().all(|p| p.len() == input.constellation.order()));
        if !shape_ok {
            return Err(Error::InvalidConfig(
                "previous extrinsic does not match the input shape".into(),
            ));
        }
    }
    Ok(())
}

fn flat(pmfs: &[SymbolPmf]) -> Vec<f64> {
    pmfs.iter().flat_map(|p| p.probs().iter().copied()).collect()
}

fn to_pmfs(flat: Vec<f64>, m: usize) -> Vec<SymbolPmf> {
    flat.chunks_exact(m)
        .map(|c| SymbolPmf::from_normalized(c.to_vec()))
        .collect()
}

/// Observation with the interferers' soft means removed, and the variance
/// their uncertainty adds at every sample.
fn cancel_others(input: &DetectorInput, moments: &[Vec<GaussianMoment>], keep: usize) -> (Vec<Complex64>, Vec<f64>) {
    let n = moments[keep].len();
    let mut r = input.r.clone();
    let mut var = vec![input.noise.variance; r.len()];
    for (v, taps) in input.taps.iter().enumerate().filter(|(v, _)| *v != keep) {
        for (k, mo) in moments[v].iter().enumerate().take(n) {
            for (lag, h) in taps.taps.iter().enumerate() {
                r[k + lag] -= h * mo.mean;
                var[k + lag] += h.norm_sqr() * mo.variance;
            }
        }
    }
    (r, var)
}

fn equalize_user(
    input: &DetectorInput,
    r: &[Complex64],
    var: &[f64],
    user: usize,
    counter: &mut OpCounter,
) -> Result<Vec<f64>> {
    let prior = flat(&input.priors[user]);
    let problem = TrellisProblem {
        r,
        variance: var,
        taps: vec![&input.taps[user].taps],
        priors: vec![&prior],
        frame_len: input.priors[user].len(),
        points: input.constellation.points(),
    };
    Ok(forward_backward(&problem, counter)?.extrinsic.remove(0))
}

/// Concurrent MAP: per-user trellis equalization with every other user
/// replaced by a per-sample Gaussian built from the decoder priors.
pub fn cmap_detect(input: &DetectorInput, counter: &mut OpCounter) -> Result<Vec<Vec<SymbolPmf>>> {
    cmap_detect_with(input, None, counter)
}

/// [`cmap_detect`] with interferer beliefs that also fold in `previous`, the
/// detector's extrinsic output from its last pass.
pub fn cmap_detect_with(
    input: &DetectorInput,
    previous: Option<&[Vec<SymbolPmf>]>,
    counter: &mut OpCounter,
) -> Result<Vec<Vec<SymbolPmf>>> {
    let dims = input.dims()?;
    check_previous(input, previous)?;
    let moments = user_moments(input, previous);
    (0..dims.users)
        .map(|u| {
            let (r, var) = cancel_others(input, &moments, u);
            Ok(to_pmfs(equalize_user(input, &r, &var, u, counter)?, dims.order))
        })
        .collect()
}

/// Soft interference cancellation, strongest user first.
///
/// Each user is equalized after subtracting the soft means of all others;
/// the residual interference is treated as stationary noise whose variance
/// is its frame average. Once a user is processed its beliefs are replaced by
/// its new posterior for the users that follow.
pub fn soft_ic_detect(input: &DetectorInput, counter: &mut OpCounter) -> Result<Vec<Vec<SymbolPmf>>> {
    soft_ic_detect_with(input, None, counter)
}

/// [`soft_ic_detect`] with initial beliefs that also fold in `previous`, the
/// detector's extrinsic output from its last pass.
pub fn soft_ic_detect_with(
    input: &DetectorInput,
    previous: Option<&[Vec<SymbolPmf>]>,
    counter: &mut OpCounter,
) -> Result<Vec<Vec<SymbolPmf>>> {
    let dims = input.dims()?;
    check_previous(input, previous)?;
    let m = dims.order;
    let points = input.constellation.points();
    let mut moments = user_moments(input, previous);
    let mut order: Vec<usize> = (0..dims.users).collect();
    order.sort_by(|&a, &b| {
        input.taps[b]
            .energy()
            .partial_cmp(&input.taps[a].energy())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut result = vec![Vec::new(); dims.users];
    for &u in &order {
        let (r, var) = cancel_others(input, &moments, u);
        let mean_var = var.iter().sum::<f64>() / var.len() as f64;
        let flat_var = vec![mean_var; var.len()];
        let ext = equalize_user(input, &r, &flat_var, u, counter)?;
        for (k, sym) in ext.chunks_exact(m).enumerate() {
            let mut post: Vec<f64> = sym.iter().zip(input.priors[u][k].probs()).map(|(e, p)| e * p).collect();
            if !normalize_in_place(&mut post) {
                counter.underflow_resets += 1;
            }
            moments[u][k] = moments_of(&post, points);
        }
        result[u] = to_pmfs(ext, m);
    }
    Ok(result)
}
