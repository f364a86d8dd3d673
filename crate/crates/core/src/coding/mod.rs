//! Channel coding: the turbo code and the bit-to-symbol mapper.

mod rsc;
mod turbo;

use num_complex::Complex64;

pub use rsc::{rsc_bcjr, RscExtrinsic, RscTrellis};
pub use turbo::{random_interleaver, turbo_decode, turbo_encode, TurboConfig, TurboOutput, TurboState};

use crate::error::{Error, Result};
use crate::messages::Constellation;

/// One user's frame at every stage of the transmitter.
#[derive(Clone, Debug, PartialEq)]
pub struct CodedFrame {
    pub info_bits: Vec<u8>,
    pub coded_bits: Vec<u8>,
    pub symbols: Vec<Complex64>,
}

impl CodedFrame {
    pub fn new(info_bits: Vec<u8>, cfg: &TurboConfig, c: &Constellation) -> Result<Self> {
        let coded_bits = turbo_encode(&info_bits, cfg)?;
        let symbols = map_symbols(&coded_bits, c)?;
        Ok(Self {
            info_bits,
            coded_bits,
            symbols,
        })
    }
}

/// Maps consecutive groups of `bits_per_symbol` bits through the labeling.
pub fn map_symbols(coded_bits: &[u8], c: &Constellation) -> Result<Vec<Complex64>> {
    let bps = c.bits_per_symbol();
    if !coded_bits.len().is_multiple_of(bps) {
        return Err(Error::LengthMismatch {
            what: "coded bits (multiple of bits per symbol)",
            expected: coded_bits.len().next_multiple_of(bps),
            got: coded_bits.len(),
        });
    }
    Ok(coded_bits
        .chunks_exact(bps)
        .map(|group| c.points()[c.index_of_label(group)])
        .collect())
}

/// Minimum-distance demapping back to bits.
pub fn hard_demap(symbols: &[Complex64], c: &Constellation) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|&y| {
            let idx = c.hard_decision(y);
            (0..c.bits_per_symbol()).map(move |b| c.label_bit(idx, b))
        })
        .collect()
}
