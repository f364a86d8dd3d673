//! Iterative joint detection and decoding of co-channel, symbol-asynchronous
//! signals received on one antenna.
//!
//! The crate provides the exact joint MAP detector on the state-space
//! trellis, sum-product detection on the fully connected factor graph with
//! exact or power-partitioned Gaussian factor messages, the CMAP, Rake
//! Gaussian and soft interference cancellation baselines, a rate-1/2 turbo
//! code, a channel simulator and a Monte Carlo harness.

#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments
)]

pub mod channel;
pub mod coding;
pub mod detectors;
pub mod error;
pub mod harness;
pub mod messages;
pub mod receiver;

pub use channel::{
    build_user_taps, calibrate_powers, simulate_reception, srrc_taps, Calibration, ChannelTaps, NoiseModel, PulseKind,
    PulseSpec, UserChannelSpec,
};
pub use coding::{map_symbols, turbo_decode, turbo_encode, CodedFrame, TurboConfig};
pub use detectors::{
    brute_force_symbol_posteriors, cmap_detect, fully_connected_detect, rake_gaussian_detect, soft_ic_detect,
    ssm_joint_bcjr, Detector, DetectorInput, DetectorKind, FactorVariant, FloodOptions, GraphState, OpCounter,
    SetPartition,
};
pub use error::{Error, Result};
pub use harness::{emit_csv, preset_scenario, run_monte_carlo, FerPoint, Scenario};
pub use messages::{BitLlr, Constellation, GaussianMoment, Modulation, SymbolPmf, LLR_MAX};
pub use receiver::{decide_bits, run_receiver, DetectorSettings, ReceiverConfig};
