//! Reference experiment configurations and their default sweep grids.
//!
//! All presets use `A = 2` with unit disturbance variance. `B = C = 1` and
//! `Q = R = 1` are this crate's defaults; they are recorded in every echoed
//! config.

use std::fmt;
use std::str::FromStr;

use crate::model::{ChannelSpec, ExperimentConfig, NoiseSpec, SystemParams, UncertainA};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// AWGN link, fully observed, Laplace disturbance.
    Fig2,
    /// Uniform quantizer, fully observed, Gaussian disturbance.
    Fig3,
    /// Uniform quantizer, partially observed (`V = 1`), Gaussian disturbance.
    Fig4,
    /// Uniform quantizer with a Gaussian random plant gain around 2.
    Fig5,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Fig2, Preset::Fig3, Preset::Fig4, Preset::Fig5];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
        }
    }

    pub fn config(self) -> ExperimentConfig {
        let base = ExperimentConfig::default();
        match self {
            Preset::Fig2 => ExperimentConfig {
                params: SystemParams::fully_observed(2.0),
                disturbance: NoiseSpec::laplace(1.0),
                channel: ChannelSpec::awgn(16.0),
                ..base
            },
            Preset::Fig3 => ExperimentConfig {
                params: SystemParams::fully_observed(2.0),
                disturbance: NoiseSpec::gaussian(1.0),
                channel: ChannelSpec::uniform(0.1),
                ..base
            },
            Preset::Fig4 => ExperimentConfig {
                params: SystemParams::partially_observed(2.0, 1.0),
                disturbance: NoiseSpec::gaussian(1.0),
                channel: ChannelSpec::uniform(0.1),
                ..base
            },
            Preset::Fig5 => ExperimentConfig {
                params: SystemParams::fully_observed(2.0),
                disturbance: NoiseSpec::gaussian(1.0),
                channel: ChannelSpec::uniform(0.1),
                uncertain_a: UncertainA::gaussian(2.0, 0.2),
                ..base
            },
        }
    }

    /// Default sweep grid: SNRs for the AWGN preset, quantizer steps
    /// otherwise.
    pub fn grid(self) -> Vec<f64> {
        match self {
            Preset::Fig2 => vec![4.0, 5.0, 8.0, 16.0, 64.0, 1024.0],
            Preset::Fig3 | Preset::Fig4 | Preset::Fig5 => vec![1.0, 0.5, 0.25, 0.1, 0.01],
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown preset {s:?} (expected fig2, fig3, fig4 or fig5)"))
    }
}
