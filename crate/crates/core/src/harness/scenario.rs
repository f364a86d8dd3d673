//! Experiment descriptions and the built-in presets.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{PulseSpec, UserChannelSpec};
use crate::coding::TurboConfig;
use crate::detectors::DetectorKind;
use crate::error::{Error, Result};
use crate::messages::Constellation;
use crate::receiver::{DetectorSettings, ReceiverConfig};

/// Interleaver seed shared by every preset.
pub const PRESET_INTERLEAVER_SEED: u64 = 0x5eed;

/// Receiver settings of a scenario. Each listed detector is simulated on the
/// same frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSettings {
    pub detectors: Vec<DetectorSettings>,
    pub outer_iterations: usize,
    #[serde(default)]
    pub genie_stop: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// User 0 is the desired user.
    pub users: Vec<UserChannelSpec>,
    pub constellation: Constellation,
    pub turbo: TurboConfig,
    pub receiver: ReceiverSettings,
    pub snr_grid_db: Vec<f64>,
    pub sir_db: f64,
    pub max_frames: usize,
    /// Stop a grid point after this many frame errors; 0 disables.
    pub min_frame_errors: usize,
    pub master_seed: u64,
}

impl Scenario {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let s: Scenario = serde_json::from_str(&text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Channel length `L` implied by the user specs.
    pub fn taps(&self) -> Result<usize> {
        let lens: Vec<usize> = self
            .users
            .iter()
            .map(|u| match (&u.pulse, u.block_fading && u.convolve_pulse) {
                (Some(p), true) => p.span_symbols + u.multipath_powers.len() - 1,
                (Some(p), false) if p.span_symbols > 1 => p.span_symbols,
                _ => u.multipath_powers.len(),
            })
            .collect();
        match lens.first() {
            Some(&l) if lens.iter().all(|&x| x == l) => Ok(l),
            Some(_) => Err(Error::InvalidConfig("all users need the same channel length".into())),
            None => Err(Error::InvalidConfig("scenario has no users".into())),
        }
    }

    pub fn receiver_config(&self, detector: &DetectorSettings) -> ReceiverConfig {
        ReceiverConfig {
            detector: detector.clone(),
            outer_iterations: self.receiver.outer_iterations,
            turbo: self.turbo.clone(),
            constellation: self.constellation.clone(),
            genie_stop: self.receiver.genie_stop,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_frames == 0 {
            return Err(Error::InvalidConfig("max_frames must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() || self.receiver.detectors.is_empty() {
            return Err(Error::InvalidConfig(
                "SNR grid and detector list must be non-empty".into(),
            ));
        }
        if self.snr_grid_db.iter().chain([&self.sir_db]).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("SNR and SIR values must be finite".into()));
        }
        for u in &self.users {
            u.validate()?;
        }
        let l = self.taps()?;
        for d in &self.receiver.detectors {
            self.receiver_config(d).validate(self.users.len(), l)?;
        }
        Ok(())
    }
}

/// Two BPSK users behind SRRC pulses, the second delayed by a quarter symbol
/// and rotated by π/6, equal power.
fn fig6() -> Scenario {
    let pulse = PulseSpec::srrc(0.35, 4);
    Scenario {
        name: "fig6".into(),
        users: vec![
            UserChannelSpec::pulse_only(pulse, 0.0, 0.0),
            UserChannelSpec::pulse_only(pulse, 0.25, PI / 6.0),
        ],
        constellation: Constellation::bpsk(),
        turbo: TurboConfig::standard(PRESET_INTERLEAVER_SEED),
        receiver: ReceiverSettings {
            detectors: vec![
                DetectorSettings::new(DetectorKind::SsmJoint, 0),
                DetectorSettings::new(DetectorKind::FgExact, 0),
                DetectorSettings::new(DetectorKind::FgApprox, 3),
                DetectorSettings::new(DetectorKind::Cmap, 0),
                DetectorSettings::new(DetectorKind::SoftIc, 0),
            ],
            outer_iterations: 15,
            genie_stop: false,
        },
        snr_grid_db: vec![1.0, 2.0, 3.0],
        sir_db: 0.0,
        max_frames: 2000,
        min_frame_errors: 50,
        master_seed: 1,
    }
}

/// Two QPSK users on independent four-tap block-fading channels.
fn fig7() -> Scenario {
    let profile = vec![0.644, 0.237, 0.087, 0.032];
    Scenario {
        name: "fig7".into(),
        users: vec![
            UserChannelSpec::multipath(profile.clone()),
            UserChannelSpec::multipath(profile),
        ],
        constellation: Constellation::qpsk(),
        turbo: TurboConfig::standard(PRESET_INTERLEAVER_SEED),
        receiver: ReceiverSettings {
            detectors: vec![
                DetectorSettings::new(DetectorKind::FgApprox, 3),
                DetectorSettings::new(DetectorKind::Cmap, 0),
            ],
            outer_iterations: 10,
            genie_stop: false,
        },
        snr_grid_db: vec![10.0],
        sir_db: 0.0,
        max_frames: 1000,
        min_frame_errors: 50,
        master_seed: 1,
    }
}

fn fig8() -> Scenario {
    Scenario {
        name: "fig8".into(),
        sir_db: -4.0,
        min_frame_errors: 0,
        ..fig7()
    }
}

pub const PRESET_NAMES: [&str; 3] = ["fig6", "fig7", "fig8"];

pub fn preset_scenario(name: &str) -> Result<Scenario> {
    match name {
        "fig6" => Ok(fig6()),
        "fig7" => Ok(fig7()),
        "fig8" => Ok(fig8()),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}
