//! Symbol detectors for the co-channel observation model.
//!
//! Every detector consumes a [`DetectorInput`] (observation, known taps,
//! noise level and per-symbol priors from the decoders) and returns
//! extrinsic symbol messages: the detector's belief about each symbol with
//! that symbol's own prior removed.
//!
//! | detector | graph | cost per observation |
//! |---|---|---|
//! | [`ssm_joint_bcjr`] | joint trellis, cycle free | `M^{UL}` |
//! | [`fully_connected_detect`] exact | fully connected, cyclic | `M^{UL}` |
//! | [`fully_connected_detect`] approx | fully connected, cyclic | `UL·M^{|A|+1}` |
//! | [`cmap_detect`] | one trellis per user | `U·M^L` |
//! | [`rake_gaussian_detect`] | fully connected, all Gaussian | `UL·M` |
//! | [`soft_ic_detect`] | one trellis per user, sequential | `U·M^L` |

mod baselines;
mod brute;
mod factor;
mod graph;
mod trellis;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use baselines::{cmap_detect, cmap_detect_with, soft_ic_detect, soft_ic_detect_with};
pub use brute::{brute_force_symbol_posteriors, BRUTE_FORCE_CAP};
pub use factor::{
    incoming_moments, partition_by_power, spa_factor_message_approx, spa_factor_message_exact, SetPartition,
};
pub use graph::{flood_evaluations, fully_connected_detect, FactorVariant, FloodOptions, GraphState};
pub use trellis::MAX_STATE_BITS;

use crate::channel::{ChannelTaps, NoiseModel};
use crate::error::{Error, Result};
use crate::messages::{normalize_in_place, Constellation, SymbolPmf};
use trellis::{forward_backward, TrellisProblem};

/// Work counters. `factor_evaluations` counts Gaussian likelihood
/// evaluations (one per trellis branch or factor assignment).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    pub factor_evaluations: u64,
    pub messages_computed: u64,
    /// Normalizations that collapsed to zero and were replaced by uniform.
    pub underflow_resets: u64,
}

impl OpCounter {
    pub fn absorb(&mut self, other: &OpCounter) {
        self.factor_evaluations += other.factor_evaluations;
        self.messages_computed += other.messages_computed;
        self.underflow_resets += other.underflow_resets;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorInput {
    /// `N + L - 1` received samples.
    pub r: Vec<Complex64>,
    pub taps: Vec<ChannelTaps>,
    pub noise: NoiseModel,
    /// `priors[u][k]`, one pmf per user and symbol.
    pub priors: Vec<Vec<SymbolPmf>>,
    pub constellation: Constellation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub users: usize,
    pub frame_len: usize,
    pub taps: usize,
    pub order: usize,
}

impl DetectorInput {
    /// Input with uniform priors.
    pub fn uniform(
        r: Vec<Complex64>,
        taps: Vec<ChannelTaps>,
        noise: NoiseModel,
        constellation: Constellation,
    ) -> Result<Self> {
        let l = taps.first().map_or(1, ChannelTaps::len);
        let n = (r.len() + 1).checked_sub(l).ok_or(Error::LengthMismatch {
            what: "received samples",
            expected: l,
            got: r.len(),
        })?;
        let priors = vec![vec![SymbolPmf::uniform(constellation.order()); n]; taps.len()];
        let input = Self {
            r,
            taps,
            noise,
            priors,
            constellation,
        };
        input.dims()?;
        Ok(input)
    }

    pub fn dims(&self) -> Result<Dims> {
        let users = self.taps.len();
        if users == 0 || self.priors.len() != users {
            return Err(Error::LengthMismatch {
                what: "users (priors)",
                expected: users,
                got: self.priors.len(),
            });
        }
        let l = self.taps[0].len();
        if l == 0 {
            return Err(Error::InvalidConfig("channel needs at least one tap".into()));
        }
        if let Some(t) = self.taps.iter().find(|t| t.len() != l) {
            return Err(Error::LengthMismatch {
                what: "taps per user",
                expected: l,
                got: t.len(),
            });
        }
        let n = self.priors[0].len();
        if let Some(p) = self.priors.iter().find(|p| p.len() != n) {
            return Err(Error::LengthMismatch {
                what: "symbols per user",
                expected: n,
                got: p.len(),
            });
        }
        if n == 0 || self.r.len() != n + l - 1 {
            return Err(Error::LengthMismatch {
                what: "received samples (N + L - 1)",
                expected: n + l - 1,
                got: self.r.len(),
            });
        }
        let m = self.constellation.order();
        if self.priors.iter().flatten().any(|p| p.len() != m) {
            return Err(Error::InvalidConfig(
                "prior length differs from constellation order".into(),
            ));
        }
        if !(self.noise.variance > 0.0) {
            return Err(Error::InvalidConfig("noise variance must be positive".into()));
        }
        Ok(Dims {
            users,
            frame_len: n,
            taps: l,
            order: m,
        })
    }

    /// `normalize(prior · extrinsic)` per symbol.
    pub fn posteriors(&self, extrinsic: &[Vec<SymbolPmf>]) -> Vec<Vec<SymbolPmf>> {
        self.priors
            .iter()
            .zip(extrinsic)
            .map(|(pu, eu)| {
                pu.iter()
                    .zip(eu)
                    .map(|(p, e)| {
                        let mut w: Vec<f64> = p.probs().iter().zip(e.probs()).map(|(a, b)| a * b).collect();
                        normalize_in_place(&mut w);
                        SymbolPmf::from_normalized(w)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Exact joint MAP detection by forward-backward recursion over the joint
/// state space of all users. Returns extrinsic symbol messages.
pub fn ssm_joint_bcjr(input: &DetectorInput, counter: &mut OpCounter) -> Result<Vec<Vec<SymbolPmf>>> {
    let dims = input.dims()?;
    let priors: Vec<Vec<f64>> = input
        .priors
        .iter()
        .map(|user| user.iter().flat_map(|p| p.probs().iter().copied()).collect())
        .collect();
    let variance = vec![input.noise.variance; input.r.len()];
    let problem = TrellisProblem {
        r: &input.r,
        variance: &variance,
        taps: input.taps.iter().map(|t| t.taps.as_slice()).collect(),
        priors: priors.iter().map(Vec::as_slice).collect(),
        frame_len: dims.frame_len,
        points: input.constellation.points(),
    };
    let out = forward_backward(&problem, counter)?;
    Ok(out
        .extrinsic
        .into_iter()
        .map(|flat| {
            flat.chunks_exact(dims.order)
                .map(|c| SymbolPmf::from_normalized(c.to_vec()))
                .collect()
        })
        .collect())
}

/// Rake Gaussian detection: every co-neighbour of every factor Gaussianized,
/// i.e. the approximate flood with an empty exact set.
pub fn rake_gaussian_detect(
    input: &DetectorInput,
    options: FloodOptions,
    state: &mut GraphState,
    counter: &mut OpCounter,
) -> Result<Vec<Vec<SymbolPmf>>> {
    fully_connected_detect(input, FactorVariant::Approx(0), options, state, counter)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    SsmJoint,
    FgExact,
    FgApprox,
    Cmap,
    Rake,
    SoftIc,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 6] = [
        DetectorKind::SsmJoint,
        DetectorKind::FgExact,
        DetectorKind::FgApprox,
        DetectorKind::Cmap,
        DetectorKind::Rake,
        DetectorKind::SoftIc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::SsmJoint => "ssm_joint",
            DetectorKind::FgExact => "fg_exact",
            DetectorKind::FgApprox => "fg_approx",
            DetectorKind::Cmap => "cmap",
            DetectorKind::Rake => "rake",
            DetectorKind::SoftIc => "soft_ic",
        }
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssm_joint" | "ssm" | "joint" => Ok(DetectorKind::SsmJoint),
            "fg_exact" | "exact" => Ok(DetectorKind::FgExact),
            "fg_approx" | "approx" => Ok(DetectorKind::FgApprox),
            "cmap" => Ok(DetectorKind::Cmap),
            "rake" | "rake_gaussian" => Ok(DetectorKind::Rake),
            "soft_ic" | "sic" => Ok(DetectorKind::SoftIc),
            other => Err(Error::InvalidConfig(format!("unknown detector `{other}`"))),
        }
    }
}

/// A detector together with whatever message state it carries across
/// receiver iterations: the flood messages of the graph detectors, or the
/// previous extrinsic output that the Gaussianizing baselines fold into their
/// interference beliefs.
#[derive(Clone, Debug)]
pub struct Detector {
    kind: DetectorKind,
    exact_set_size: usize,
    flood: FloodOptions,
    graph: GraphState,
    previous: Option<Vec<Vec<SymbolPmf>>>,
}

impl Detector {
    pub fn new(kind: DetectorKind, exact_set_size: usize, flood: FloodOptions) -> Self {
        Self {
            kind,
            exact_set_size,
            flood,
            graph: GraphState::default(),
            previous: None,
        }
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn detect(&mut self, input: &DetectorInput, counter: &mut OpCounter) -> Result<Vec<Vec<SymbolPmf>>> {
        match self.kind {
            DetectorKind::SsmJoint => ssm_joint_bcjr(input, counter),
            DetectorKind::FgExact => {
                fully_connected_detect(input, FactorVariant::Exact, self.flood, &mut self.graph, counter)
            }
            DetectorKind::FgApprox => fully_connected_detect(
                input,
                FactorVariant::Approx(self.exact_set_size),
                self.flood,
                &mut self.graph,
                counter,
            ),
            DetectorKind::Rake => rake_gaussian_detect(input, self.flood, &mut self.graph, counter),
            DetectorKind::Cmap | DetectorKind::SoftIc => {
                let previous = self.previous.as_deref().filter(|p| shapes_match(p, &input.priors));
                let out = if self.kind == DetectorKind::Cmap {
                    cmap_detect_with(input, previous, counter)?
                } else {
                    soft_ic_detect_with(input, previous, counter)?
                };
                self.previous = Some(out.clone());
                Ok(out)
            }
        }
    }

    /// Forgets all carried state.
    pub fn reset(&mut self) {
        self.graph.reset();
        self.previous = None;
    }
}

fn shapes_match(a: &[Vec<SymbolPmf>], b: &[Vec<SymbolPmf>]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len())
}
