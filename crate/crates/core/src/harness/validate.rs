//! Self-check suite run by `cochannel-map validate`: the exact detectors
//! against exhaustive enumeration, and the approximate factor message against
//! its exact reduction.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::{complex_gaussian, superpose, ChannelTaps, NoiseModel};
use crate::detectors::{
    brute_force_symbol_posteriors, flood_evaluations, fully_connected_detect, incoming_moments, partition_by_power,
    rake_gaussian_detect, spa_factor_message_approx, spa_factor_message_exact, ssm_joint_bcjr, DetectorInput,
    FactorVariant, FloodOptions, GraphState, OpCounter,
};
use crate::error::Result;
use crate::messages::{normalize_pmf, Constellation, Modulation, SymbolPmf};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InstanceShape {
    pub users: usize,
    pub taps: usize,
    pub frame_len: usize,
    pub modulation: Modulation,
}

fn random_pmf(rng: &mut impl Rng, m: usize) -> SymbolPmf {
    let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.02..1.0)).collect();
    normalize_pmf(&w).expect("positive weights")
}

/// A detector input with random taps, priors, noise level and symbols.
pub fn random_instance(shape: InstanceShape, rng: &mut impl Rng) -> DetectorInput {
    let c = Constellation::new(shape.modulation);
    let m = c.order();
    let taps: Vec<ChannelTaps> = (0..shape.users)
        .map(|_| ChannelTaps::new((0..shape.taps).map(|_| complex_gaussian(rng, 1.0)).collect()))
        .collect();
    let symbols: Vec<Vec<Complex64>> = (0..shape.users)
        .map(|_| {
            (0..shape.frame_len)
                .map(|_| c.points()[rng.random_range(0..m)])
                .collect()
        })
        .collect();
    let variance = 10f64.powf(rng.random_range(-1.5..0.5));
    let mut r = superpose(&symbols, &taps).expect("consistent shapes");
    for s in r.iter_mut() {
        *s += complex_gaussian(rng, variance);
    }
    let priors = (0..shape.users)
        .map(|_| (0..shape.frame_len).map(|_| random_pmf(rng, m)).collect())
        .collect();
    DetectorInput {
        r,
        taps,
        noise: NoiseModel::new(variance),
        priors,
        constellation: c,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn max_abs_diff(a: &[Vec<SymbolPmf>], b: &[Vec<SymbolPmf>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .flat_map(|(x, y)| x.probs().iter().zip(y.probs()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn joint_vs_enumeration(rng: &mut ChaCha8Rng, instances: usize) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let shape = InstanceShape {
            users: 1 + i % 2,
            taps: 1 + (i / 2) % 3,
            frame_len: rng.random_range(3..=6),
            modulation: Modulation::Bpsk,
        };
        let input = random_instance(shape, rng);
        let ext = ssm_joint_bcjr(&input, &mut OpCounter::default())?;
        let oracle = brute_force_symbol_posteriors(&input)?;
        worst = worst.max(max_abs_diff(&input.posteriors(&ext), &oracle));
    }
    Ok(CheckResult {
        name: "joint trellis matches exhaustive enumeration".into(),
        passed: worst <= 1e-9,
        detail: format!("{instances} instances, max abs error {worst:.3e} (tolerance 1e-9)"),
    })
}

fn approx_reduces_to_exact(rng: &mut ChaCha8Rng, factors: usize) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for i in 0..factors {
        let c = Constellation::new(if i % 2 == 0 { Modulation::Bpsk } else { Modulation::Qpsk });
        let k = rng.random_range(1..=if c.order() == 2 { 8 } else { 5 });
        let coeffs: Vec<Complex64> = (0..k).map(|_| complex_gaussian(rng, 1.0)).collect();
        let incoming: Vec<SymbolPmf> = (0..k).map(|_| random_pmf(rng, c.order())).collect();
        let moments = incoming_moments(&incoming, &c);
        let target = rng.random_range(0..k);
        let y = complex_gaussian(rng, 2.0);
        let var = 10f64.powf(rng.random_range(-2.0..1.0));
        let part = partition_by_power(&coeffs, Some(target), k - 1)?;
        let mut counter = OpCounter::default();
        let exact = spa_factor_message_exact(y, &coeffs, &incoming, target, var, &c, &mut counter)?;
        let approx = spa_factor_message_approx(y, &coeffs, &incoming, &moments, target, &part, var, &c, &mut counter)?;
        for (p, q) in exact.probs().iter().zip(approx.probs()) {
            worst = worst.max((p - q).abs());
        }
    }
    Ok(CheckResult {
        name: "approximate message with empty Gaussian set equals exact".into(),
        passed: worst <= 1e-12,
        detail: format!("{factors} factors, max abs error {worst:.3e} (tolerance 1e-12)"),
    })
}

fn rake_is_approx_zero(rng: &mut ChaCha8Rng, instances: usize) -> Result<CheckResult> {
    let mut identical = true;
    for i in 0..instances {
        let shape = InstanceShape {
            users: 1 + i % 3,
            taps: 1 + i % 4,
            frame_len: 12,
            modulation: if i % 2 == 0 { Modulation::Bpsk } else { Modulation::Qpsk },
        };
        let input = random_instance(shape, rng);
        let opts = FloodOptions::default();
        let (mut s1, mut s2) = (GraphState::default(), GraphState::default());
        for _ in 0..3 {
            let a = rake_gaussian_detect(&input, opts, &mut s1, &mut OpCounter::default())?;
            let b = fully_connected_detect(
                &input,
                FactorVariant::Approx(0),
                opts,
                &mut s2,
                &mut OpCounter::default(),
            )?;
            identical &= a == b;
        }
    }
    Ok(CheckResult {
        name: "rake detector is the approximate flood with an empty exact set".into(),
        passed: identical,
        detail: format!("{instances} instances, 3 floods each, bitwise comparison"),
    })
}

fn flood_accounting(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut ok = true;
    let mut detail = Vec::new();
    for (users, taps, modulation, a) in [(2, 4, Modulation::Bpsk, 3), (2, 4, Modulation::Qpsk, 3)] {
        let shape = InstanceShape {
            users,
            taps,
            frame_len: 10,
            modulation,
        };
        let input = random_instance(shape, rng);
        let m = input.constellation.order();
        for variant in [FactorVariant::Exact, FactorVariant::Approx(a)] {
            let mut counter = OpCounter::default();
            let opts = FloodOptions {
                evaluation_budget: 1 << 20,
                ..FloodOptions::default()
            };
            fully_connected_detect(&input, variant, opts, &mut GraphState::default(), &mut counter)?;
            let predicted = flood_evaluations(variant, users, shape.frame_len, taps, m);
            ok &= counter.factor_evaluations == predicted;
            detail.push(format!(
                "{variant:?} M={m}: {} (predicted {predicted})",
                counter.factor_evaluations
            ));
        }
    }
    Ok(CheckResult {
        name: "instrumented evaluation counts match the closed-form accounting".into(),
        passed: ok,
        detail: detail.join("; "),
    })
}

/// Runs every check with a fixed seed.
pub fn validation_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        joint_vs_enumeration(&mut rng, 200)?,
        approx_reduces_to_exact(&mut rng, 1000)?,
        rake_is_approx_zero(&mut rng, 12)?,
        flood_accounting(&mut rng)?,
    ])
}
