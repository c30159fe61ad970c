//! Photon-counting noise models for time-bin and spatial-mode encodings.

pub mod spatial;
pub mod temporal;

use crate::error::{check_non_negative, check_probability, Result};

/// Noise seen by one party's detection setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartyNoise {
    /// Environment photons per second, `nu`.
    pub env_rate: f64,
    /// Dark counts per second and detector, `mu`.
    pub dark_rate: f64,
    /// Loss probability of source photons, `P_L`.
    pub loss: f64,
    /// Detector click probability, `P_C`.
    pub efficiency: f64,
}

impl PartyNoise {
    pub const fn ideal() -> Self {
        Self {
            env_rate: 0.0,
            dark_rate: 0.0,
            loss: 0.0,
            efficiency: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("nu", self.env_rate)?;
        check_non_negative("mu", self.dark_rate)?;
        check_probability("P_L", self.loss)?;
        check_probability("P_C", self.efficiency)
    }

    /// Probability that a source photon arrives and clicks, `P_C (1 - P_L)`.
    pub fn detect_prob(&self) -> f64 {
        self.efficiency * (1.0 - self.loss)
    }

    /// `S = 1 - P_C + P_C P_L`.
    pub fn miss_prob(&self) -> f64 {
        1.0 - self.efficiency + self.efficiency * self.loss
    }
}

impl Default for PartyNoise {
    fn default() -> Self {
        Self::ideal()
    }
}
