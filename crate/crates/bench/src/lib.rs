//! Fixtures shared by the kernel benchmarks.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cochannel_core::channel::complex_gaussian;
use cochannel_core::harness::{frame_seed, generate_frame, preset_scenario};
use cochannel_core::messages::normalize_pmf;
use cochannel_core::{Constellation, DetectorInput, Modulation, Scenario, SymbolPmf};

/// One factor node: observation, neighbour coefficients and incoming pmfs.
pub struct FactorFixture {
    pub y: Complex64,
    pub coeffs: Vec<Complex64>,
    pub incoming: Vec<SymbolPmf>,
    pub constellation: Constellation,
    pub noise_var: f64,
}

pub fn factor_fixture(neighbours: usize, modulation: Modulation, seed: u64) -> FactorFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let constellation = Constellation::new(modulation);
    let m = constellation.order();
    let coeffs = (0..neighbours).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
    let incoming = (0..neighbours)
        .map(|_| {
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
            normalize_pmf(&w).expect("positive weights")
        })
        .collect();
    FactorFixture {
        y: complex_gaussian(&mut rng, 2.0),
        coeffs,
        incoming,
        constellation,
        noise_var: 0.3,
    }
}

/// A received frame of a preset at the given SNR, with uniform priors.
pub fn preset_input(name: &str, snr_db: f64) -> (Scenario, DetectorInput) {
    let s = preset_scenario(name).expect("known preset");
    let f = generate_frame(&s, snr_db, frame_seed(s.master_seed, 0, 0)).expect("frame");
    let input = DetectorInput::uniform(f.r, f.taps, f.noise, s.constellation.clone()).expect("consistent frame");
    (s, input)
}
