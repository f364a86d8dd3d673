//! Iterative detection and decoding: detector pass, bit extrinsics, one
//! turbo sweep pair per user, symbol priors for the next pass.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelTaps, NoiseModel};
use crate::coding::{turbo_decode, TurboConfig, TurboState};
use crate::detectors::{Detector, DetectorInput, DetectorKind, FloodOptions, OpCounter};
use crate::error::{Error, Result};
use crate::messages::{bits_to_symbol_prior, symbol_extrinsic_to_bits, BitLlr, Constellation, SymbolPmf};

/// Hard decision on an LLR: 0 iff `llr ≥ 0`.
pub fn decide_bits(info_llrs: &[BitLlr]) -> Vec<u8> {
    info_llrs.iter().map(|l| u8::from(l.value() < 0.0)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSettings {
    pub kind: DetectorKind,
    /// Exactly marginalized co-neighbours per factor message (`fg_approx`).
    pub exact_set_size: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Largest joint assignment count an exact factor may enumerate.
    #[serde(default = "default_budget")]
    pub evaluation_budget: u64,
}

fn default_sweeps() -> usize {
    1
}

fn default_damping() -> f64 {
    1.0
}

fn default_budget() -> u64 {
    FloodOptions::default().evaluation_budget
}

impl DetectorSettings {
    pub fn new(kind: DetectorKind, exact_set_size: usize) -> Self {
        Self {
            kind,
            exact_set_size,
            sweeps: default_sweeps(),
            damping: default_damping(),
            evaluation_budget: default_budget(),
        }
    }

    pub fn flood_options(&self) -> FloodOptions {
        FloodOptions {
            sweeps: self.sweeps,
            damping: self.damping,
            evaluation_budget: self.evaluation_budget,
        }
    }

    pub fn build(&self) -> Detector {
        Detector::new(self.kind, self.exact_set_size, self.flood_options())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceiverConfig {
    pub detector: DetectorSettings,
    pub outer_iterations: usize,
    pub turbo: TurboConfig,
    pub constellation: Constellation,
    /// Stop once the desired user's bits match the truth and repeat the final
    /// diagnostics for the remaining iterations. Needs `truth`.
    #[serde(default)]
    pub genie_stop: bool,
}

impl ReceiverConfig {
    pub fn new(detector: DetectorSettings, turbo: TurboConfig, constellation: Constellation) -> Self {
        Self {
            detector,
            outer_iterations: 15,
            turbo,
            constellation,
            genie_stop: false,
        }
    }

    pub fn validate(&self, users: usize, taps: usize) -> Result<()> {
        if self.outer_iterations == 0 {
            return Err(Error::InvalidConfig("outer_iterations must be at least 1".into()));
        }
        if self.detector.kind == DetectorKind::FgApprox && self.detector.exact_set_size + 1 > users * taps {
            return Err(Error::InvalidConfig(format!(
                "exact_set_size {} exceeds U·L − 1 = {}",
                self.detector.exact_set_size,
                users * taps - 1
            )));
        }
        if self.detector.sweeps == 0 || !(self.detector.damping > 0.0 && self.detector.damping <= 1.0) {
            return Err(Error::InvalidConfig("sweeps ≥ 1 and damping in (0, 1] required".into()));
        }
        self.turbo.validate()?;
        if !self.turbo.n_coded.is_multiple_of(self.constellation.bits_per_symbol()) {
            return Err(Error::InvalidConfig(
                "coded length not a multiple of bits per symbol".into(),
            ));
        }
        Ok(())
    }

    pub fn frame_symbols(&self) -> usize {
        self.turbo.n_coded / self.constellation.bits_per_symbol()
    }
}

/// State of the receiver after one outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// Per user; empty without truth.
    pub frame_error: Vec<bool>,
    pub bit_errors: Vec<usize>,
    /// Mean `|llr|` of the info bits, per user.
    pub mean_abs_llr: Vec<f64>,
    /// Cumulative counters up to and including this iteration.
    pub counter: OpCounter,
    /// Filled in by genie stopping rather than computed.
    pub repeated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReceiverOutput {
    pub hard_bits: Vec<Vec<u8>>,
    pub diagnostics: Vec<IterationDiagnostics>,
}

/// Runs the iterative receiver. `truth` (info bits per user) only feeds the
/// diagnostics and genie stopping.
pub fn run_receiver(
    r: &[Complex64],
    taps: &[ChannelTaps],
    noise: NoiseModel,
    truth: Option<&[Vec<u8>]>,
    cfg: &ReceiverConfig,
) -> Result<ReceiverOutput> {
    let users = taps.len();
    let l = taps.first().map_or(0, ChannelTaps::len);
    cfg.validate(users, l)?;
    if let Some(t) = truth {
        if t.len() != users || t.iter().any(|b| b.len() != cfg.turbo.n_info) {
            return Err(Error::InvalidConfig("truth must hold n_info bits per user".into()));
        }
    }
    let c = &cfg.constellation;
    let m = c.order();
    let bps = c.bits_per_symbol();
    let n = cfg.frame_symbols();

    let mut input = DetectorInput {
        r: r.to_vec(),
        taps: taps.to_vec(),
        noise,
        priors: vec![vec![SymbolPmf::uniform(m); n]; users],
        constellation: c.clone(),
    };
    input.dims()?;

    let mut detector = cfg.detector.build();
    let mut counter = OpCounter::default();
    let mut coded_priors = vec![vec![BitLlr::ZERO; cfg.turbo.n_coded]; users];
    let mut states = vec![TurboState::default(); users];
    let mut hard_bits = vec![Vec::new(); users];
    let mut diagnostics = Vec::with_capacity(cfg.outer_iterations);

    for iteration in 1..=cfg.outer_iterations {
        let extrinsic = detector.detect(&input, &mut counter)?;
        let mut diag = IterationDiagnostics {
            iteration,
            frame_error: Vec::new(),
            bit_errors: Vec::new(),
            mean_abs_llr: Vec::with_capacity(users),
            counter,
            repeated: false,
        };
        for u in 0..users {
            let mut channel = Vec::with_capacity(cfg.turbo.n_coded);
            for (k, ext) in extrinsic[u].iter().enumerate() {
                channel.extend(symbol_extrinsic_to_bits(
                    ext,
                    &coded_priors[u][k * bps..(k + 1) * bps],
                    c,
                )?);
            }
            let out = turbo_decode(&channel, &cfg.turbo, Some(&states[u]))?;
            for (k, prior) in input.priors[u].iter_mut().enumerate() {
                *prior = bits_to_symbol_prior(&out.coded_extrinsic[k * bps..(k + 1) * bps], c)?;
            }
            diag.mean_abs_llr
                .push(out.info_llrs.iter().map(|l| l.value().abs()).sum::<f64>() / out.info_llrs.len() as f64);
            if let Some(t) = truth {
                let errors = out.hard_info_bits.iter().zip(&t[u]).filter(|(a, b)| a != b).count();
                diag.bit_errors.push(errors);
                diag.frame_error.push(errors > 0);
            }
            coded_priors[u] = out.coded_extrinsic;
            states[u] = out.state;
            hard_bits[u] = out.hard_info_bits;
        }
        let done = cfg.genie_stop && diag.frame_error.first() == Some(&false);
        diagnostics.push(diag);
        if done {
            while diagnostics.len() < cfg.outer_iterations {
                let mut next = diagnostics.last().expect("non-empty").clone();
                next.iteration += 1;
                next.repeated = true;
                diagnostics.push(next);
            }
            break;
        }
    }
    Ok(ReceiverOutput { hard_bits, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::superpose;
    use crate::coding::CodedFrame;
    use crate::detectors::ssm_joint_bcjr;
    use crate::messages::symbol_to_bit_extrinsic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decide_bits_examples() {
        let bits = decide_bits(&[BitLlr::new(3.0), BitLlr::new(-0.1), BitLlr::new(0.0)]);
        assert_eq!(bits, vec![0, 1, 0]);
    }

    fn frames(users: usize, cfg: &ReceiverConfig, seed: u64) -> Vec<CodedFrame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..users)
            .map(|_| {
                let info = (0..cfg.turbo.n_info).map(|_| rng.random_range(0..2u8)).collect();
                CodedFrame::new(info, &cfg.turbo, &cfg.constellation).unwrap()
            })
            .collect()
    }

    fn two_user_taps() -> Vec<ChannelTaps> {
        vec![
            ChannelTaps::new(vec![Complex64::new(0.8, 0.1), Complex64::new(0.5, -0.2)]),
            ChannelTaps::new(vec![Complex64::new(-0.3, 0.6), Complex64::new(0.4, 0.3)]),
        ]
    }

    fn small_config(kind: DetectorKind, set_size: usize, iterations: usize) -> ReceiverConfig {
        let mut cfg = ReceiverConfig::new(
            DetectorSettings::new(kind, set_size),
            TurboConfig::with_length(40, 3),
            Constellation::bpsk(),
        );
        cfg.outer_iterations = iterations;
        cfg
    }

    #[test]
    fn noiseless_joint_detection_is_error_free_at_first_iteration() {
        let cfg = small_config(DetectorKind::SsmJoint, 0, 1);
        let frames = frames(2, &cfg, 5);
        let taps = two_user_taps();
        let symbols: Vec<_> = frames.iter().map(|f| f.symbols.clone()).collect();
        let r = superpose(&symbols, &taps).unwrap();
        let truth: Vec<_> = frames.iter().map(|f| f.info_bits.clone()).collect();
        let out = run_receiver(&r, &taps, NoiseModel::new(1e-4), Some(&truth), &cfg).unwrap();
        assert_eq!(out.diagnostics[0].bit_errors, vec![0, 0]);
        assert_eq!(out.hard_bits, truth);
    }

    #[test]
    fn approx_with_full_exact_set_tracks_exact_trajectory() {
        let exact = small_config(DetectorKind::FgExact, 0, 4);
        let approx = small_config(DetectorKind::FgApprox, 3, 4);
        let frames = frames(2, &exact, 9);
        let taps = two_user_taps();
        let symbols: Vec<_> = frames.iter().map(|f| f.symbols.clone()).collect();
        let mut r = superpose(&symbols, &taps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for s in r.iter_mut() {
            *s += crate::channel::complex_gaussian(&mut rng, 0.5);
        }
        let noise = NoiseModel::new(0.5);

        let mut det_exact = exact.detector.build();
        let mut det_approx = approx.detector.build();
        let mut input = DetectorInput::uniform(r, taps, noise, Constellation::bpsk()).unwrap();
        let mut ce = OpCounter::default();
        let mut ca = OpCounter::default();
        for _ in 0..4 {
            let e = det_exact.detect(&input, &mut ce).unwrap();
            let a = det_approx.detect(&input, &mut ca).unwrap();
            for (eu, au) in e.iter().zip(&a) {
                for (x, y) in eu.iter().zip(au) {
                    for (p, q) in x.probs().iter().zip(y.probs()) {
                        assert!((p - q).abs() <= 1e-9);
                    }
                }
            }
            input.priors = input.posteriors(&e);
        }

        let a = run_receiver(&input.r, &input.taps, noise, None, &approx).unwrap();
        let e = run_receiver(&input.r, &input.taps, noise, None, &exact).unwrap();
        assert_eq!(a.hard_bits, e.hard_bits);
        for (da, de) in a.diagnostics.iter().zip(&e.diagnostics) {
            for (x, y) in da.mean_abs_llr.iter().zip(&de.mean_abs_llr) {
                assert!((x - y).abs() <= 1e-6 * y.max(1.0));
            }
        }
    }

    #[test]
    fn detector_extrinsic_ignores_own_prior() {
        let taps = two_user_taps();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 6;
        let r: Vec<Complex64> = (0..n + 1)
            .map(|_| crate::channel::complex_gaussian(&mut rng, 1.0))
            .collect();
        let c = Constellation::bpsk();
        let mut input = DetectorInput::uniform(r, taps, NoiseModel::new(0.4), c.clone()).unwrap();
        for user in input.priors.iter_mut() {
            for p in user.iter_mut() {
                *p = bits_to_symbol_prior(&[BitLlr::new(rng.random_range(-2.0..2.0))], &c).unwrap();
            }
        }
        let mut counter = OpCounter::default();
        let base = ssm_joint_bcjr(&input, &mut counter).unwrap();
        let old = input.priors[1][3].clone();
        let llr = BitLlr::new((old.probs()[0] / old.probs()[1]).ln() + 0.7);
        input.priors[1][3] = bits_to_symbol_prior(&[llr], &c).unwrap();
        let moved = ssm_joint_bcjr(&input, &mut counter).unwrap();
        let before = symbol_to_bit_extrinsic(&base[1][3], &[BitLlr::ZERO], &c).unwrap()[0].value();
        let after = symbol_to_bit_extrinsic(&moved[1][3], &[BitLlr::ZERO], &c).unwrap()[0].value();
        assert!((before - after).abs() < 1e-6);
        assert!(base[0][3] != moved[0][3], "other symbols must see the change");
    }

    #[test]
    fn joint_detector_is_idempotent_without_decoding() {
        let taps = two_user_taps();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r: Vec<Complex64> = (0..6)
            .map(|_| crate::channel::complex_gaussian(&mut rng, 1.0))
            .collect();
        let input = DetectorInput::uniform(r, taps, NoiseModel::new(0.3), Constellation::bpsk()).unwrap();
        let mut counter = OpCounter::default();
        let first = ssm_joint_bcjr(&input, &mut counter).unwrap();
        let second = ssm_joint_bcjr(&input, &mut counter).unwrap();
        assert_eq!(input.posteriors(&first), input.posteriors(&second));
    }

    #[test]
    fn rejects_oversized_exact_set() {
        let cfg = small_config(DetectorKind::FgApprox, 4, 1);
        assert!(cfg.validate(2, 2).is_err());
        assert!(small_config(DetectorKind::FgApprox, 3, 1).validate(2, 2).is_ok());
    }

    #[test]
    fn genie_stop_fills_remaining_iterations() {
        let mut cfg = small_config(DetectorKind::Cmap, 0, 5);
        cfg.genie_stop = true;
        let frames = frames(2, &cfg, 12);
        let taps = two_user_taps();
        let symbols: Vec<_> = frames.iter().map(|f| f.symbols.clone()).collect();
        let r = superpose(&symbols, &taps).unwrap();
        let truth: Vec<_> = frames.iter().map(|f| f.info_bits.clone()).collect();
        let out = run_receiver(&r, &taps, NoiseModel::new(1e-3), Some(&truth), &cfg).unwrap();
        assert_eq!(out.diagnostics.len(), 5);
        assert!(out.diagnostics.iter().skip(1).all(|d| d.repeated));
    }
}
