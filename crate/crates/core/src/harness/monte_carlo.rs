//! Seeded frame generation and frame-error-rate estimation.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use super::scenario::Scenario;
use crate::channel::{build_user_taps, calibrate_powers, simulate_reception, ChannelTaps, NoiseModel};
use crate::coding::CodedFrame;
use crate::detectors::DetectorKind;
use crate::error::{Error, Result};
use crate::receiver::{run_receiver, DetectorSettings, IterationDiagnostics};

/// One row of the results table: the desired user's error statistics after
/// a given receiver iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FerPoint {
    pub detector: String,
    pub snr_db: f64,
    pub sir_db: f64,
    pub iteration: usize,
    pub frames_run: usize,
    pub frame_errors: usize,
    pub fer: f64,
    pub fer_ci_low: f64,
    pub fer_ci_high: f64,
    pub ber: f64,
    /// Likelihood evaluations spent by the detector in this iteration,
    /// summed over all frames run.
    pub factor_evals: u64,
    /// `ok`, `genie_stop` when iterations were filled in by genie stopping,
    /// or `error: <message>` for a grid point that failed.
    pub status: String,
}

/// Column label for a detector; the exact-set size is part of the
/// approximate detector's name.
pub fn detector_label(d: &DetectorSettings) -> String {
    match d.kind {
        DetectorKind::FgApprox => format!("fg_approx_a{}", d.exact_set_size),
        k => k.name().to_string(),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one frame, a pure function of its coordinates.
pub fn frame_seed(master_seed: u64, grid_index: u64, frame_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ grid_index) ^ frame_index)
}

/// Everything the transmitter and channel produced for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRealization {
    pub info_bits: Vec<Vec<u8>>,
    pub taps: Vec<ChannelTaps>,
    pub noise: NoiseModel,
    pub r: Vec<Complex64>,
}

pub fn generate_frame(s: &Scenario, snr_db: f64, seed: u64) -> Result<FrameRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut info_bits = Vec::with_capacity(s.users.len());
    let mut symbols = Vec::with_capacity(s.users.len());
    for _ in &s.users {
        let info: Vec<u8> = (0..s.turbo.n_info).map(|_| rng.random_range(0..2u8)).collect();
        let frame = CodedFrame::new(info, &s.turbo, &s.constellation)?;
        info_bits.push(frame.info_bits);
        symbols.push(frame.symbols);
    }
    let raw = s
        .users
        .iter()
        .map(|u| {
            let realization = u.block_fading.then(|| u.draw_realization(&mut rng));
            build_user_taps(u, realization.as_deref())
        })
        .collect::<Result<Vec<_>>>()?;
    let cal = calibrate_powers(&raw, snr_db, s.sir_db)?;
    let taps = cal.apply(&raw);
    let r = simulate_reception(&symbols, &taps, cal.noise, rng.next_u64())?;
    Ok(FrameRealization {
        info_bits,
        taps,
        noise: cal.noise,
        r,
    })
}

/// Two-sided Clopper–Pearson interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: usize, n: usize, confidence: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let alpha = 1.0 - confidence;
    let (kf, nf) = (k as f64, n as f64);
    let low = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0)
            .expect("positive shape")
            .inverse_cdf(alpha / 2.0)
    };
    let high = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf)
            .expect("positive shape")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (low, high)
}

/// Desired-user outcome of one frame, per iteration.
#[derive(Clone, Debug)]
struct FrameOutcome {
    frame_error: Vec<bool>,
    bit_errors: Vec<usize>,
    evals: Vec<u64>,
    repeated: bool,
}

fn outcome(diags: &[IterationDiagnostics]) -> FrameOutcome {
    let mut prev = 0;
    let mut evals = Vec::with_capacity(diags.len());
    for d in diags {
        evals.push(d.counter.factor_evaluations - prev);
        prev = d.counter.factor_evaluations;
    }
    FrameOutcome {
        frame_error: diags.iter().map(|d| d.frame_error[0]).collect(),
        bit_errors: diags.iter().map(|d| d.bit_errors[0]).collect(),
        evals,
        repeated: diags.iter().any(|d| d.repeated),
    }
}

fn run_frame(s: &Scenario, d: &DetectorSettings, grid: usize, frame: usize, snr_db: f64) -> Result<FrameOutcome> {
    let f = generate_frame(s, snr_db, frame_seed(s.master_seed, grid as u64, frame as u64))?;
    let out = run_receiver(&f.r, &f.taps, f.noise, Some(&f.info_bits), &s.receiver_config(d))?;
    Ok(outcome(&out.diagnostics))
}

/// Frames from `start` in order until `max_frames` or the error target is
/// reached, computed in parallel chunks. The stopping point depends only on
/// frame outcomes, not on scheduling.
fn run_point(s: &Scenario, d: &DetectorSettings, grid: usize, snr_db: f64, chunk: usize) -> Result<Vec<FrameOutcome>> {
    let mut done: Vec<FrameOutcome> = Vec::new();
    let mut errors = 0;
    while done.len() < s.max_frames {
        let start = done.len();
        let end = (start + chunk).min(s.max_frames);
        let batch = (start..end)
            .into_par_iter()
            .map(|f| run_frame(s, d, grid, f, snr_db))
            .collect::<Result<Vec<_>>>()?;
        for o in batch {
            errors += usize::from(*o.frame_error.last().expect("at least one iteration"));
            done.push(o);
            if s.min_frame_errors > 0 && errors >= s.min_frame_errors {
                return Ok(done);
            }
        }
    }
    Ok(done)
}

fn summarize(s: &Scenario, label: &str, snr_db: f64, outcomes: &[FrameOutcome]) -> Vec<FerPoint> {
    let frames = outcomes.len();
    let status = if outcomes.iter().any(|o| o.repeated) {
        "genie_stop"
    } else {
        "ok"
    };
    (0..s.receiver.outer_iterations)
        .map(|i| {
            let frame_errors = outcomes.iter().filter(|o| o.frame_error[i]).count();
            let bit_errors: usize = outcomes.iter().map(|o| o.bit_errors[i]).sum();
            let (lo, hi) = clopper_pearson(frame_errors, frames, 0.95);
            FerPoint {
                detector: label.to_string(),
                snr_db,
                sir_db: s.sir_db,
                iteration: i + 1,
                frames_run: frames,
                frame_errors,
                fer: frame_errors as f64 / frames as f64,
                fer_ci_low: lo,
                fer_ci_high: hi,
                ber: bit_errors as f64 / (frames * s.turbo.n_info) as f64,
                factor_evals: outcomes.iter().map(|o| o.evals[i]).sum(),
                status: status.to_string(),
            }
        })
        .collect()
}

fn failure_row(s: &Scenario, label: &str, snr_db: f64, err: &Error) -> FerPoint {
    FerPoint {
        detector: label.to_string(),
        snr_db,
        sir_db: s.sir_db,
        iteration: 0,
        frames_run: 0,
        frame_errors: 0,
        fer: f64::NAN,
        fer_ci_low: 0.0,
        fer_ci_high: 1.0,
        ber: f64::NAN,
        factor_evals: 0,
        status: format!("error: {err}"),
    }
}

/// Runs every detector of the scenario over its SNR grid using `workers`
/// threads. Frames are shared across detectors (common random numbers) and
/// the table is identical for any worker count. Rows are ordered by
/// detector, SNR and iteration.
pub fn run_monte_carlo(s: &Scenario, workers: usize) -> Result<Vec<FerPoint>> {
    s.validate()?;
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let chunk = 4 * workers;
    pool.install(|| {
        let mut rows = Vec::new();
        for d in &s.receiver.detectors {
            let label = detector_label(d);
            for (g, &snr) in s.snr_grid_db.iter().enumerate() {
                match run_point(s, d, g, snr, chunk) {
                    Ok(outcomes) => rows.extend(summarize(s, &label, snr, &outcomes)),
                    Err(e) => rows.push(failure_row(s, &label, snr, &e)),
                }
            }
        }
        Ok(rows)
    })
}
