//! Technology parameters of the QCA implementation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("`{name}` must be strictly positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("gamma_high ({high:e} J) must exceed gamma_low ({low:e} J)")]
    GammaOrder { high: f64, low: f64 },
    #[error("r_effect ({r_effect} nm) must be at least the cell distance ({cell_distance} nm)")]
    CutoffTooShort { r_effect: f64, cell_distance: f64 },
    #[error("quantum dots of {qd_size} nm do not fit in a {cell_size} nm cell")]
    DotsDoNotFit { qd_size: f64, cell_size: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<(), ParamError> {
    if value > 0.0 && !value.is_nan() {
        Ok(())
    } else {
        Err(ParamError::NotPositive { name, value })
    }
}

/// Device-level constants. Lengths are in nanometers, energies in joules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologyParams {
    pub qd_size: f64,
    /// Side length of the square cell.
    pub cell_size: f64,
    /// Center-to-center pitch of adjacent cells.
    pub cell_distance: f64,
    pub layer_distance: f64,
    /// Relaxation time in seconds. `f64::INFINITY` disables dissipation.
    pub tau: f64,
    pub gamma_high: f64,
    pub gamma_low: f64,
    pub epsilon_r: f64,
    /// Kelvin.
    pub temperature: f64,
    /// Interaction cutoff radius.
    pub r_effect: f64,
}

impl Default for TechnologyParams {
    fn default() -> Self {
        TechnologyParams {
            qd_size: 5.0,
            cell_size: 18.0,
            cell_distance: 20.0,
            layer_distance: 11.5,
            tau: 1e-15,
            gamma_high: 9.8e-22,
            gamma_low: 3.8e-23,
            epsilon_r: 12.9,
            temperature: 1.0,
            r_effect: 80.0,
        }
    }
}

impl TechnologyParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        require_positive("qd_size", self.qd_size)?;
        require_positive("cell_size", self.cell_size)?;
        require_positive("cell_distance", self.cell_distance)?;
        require_positive("layer_distance", self.layer_distance)?;
        require_positive("tau", self.tau)?;
        require_positive("gamma_high", self.gamma_high)?;
        require_positive("gamma_low", self.gamma_low)?;
        require_positive("epsilon_r", self.epsilon_r)?;
        require_positive("temperature", self.temperature)?;
        require_positive("r_effect", self.r_effect)?;
        if self.gamma_high <= self.gamma_low {
            return Err(ParamError::GammaOrder {
                high: self.gamma_high,
                low: self.gamma_low,
            });
        }
        if self.r_effect < self.cell_distance {
            return Err(ParamError::CutoffTooShort {
                r_effect: self.r_effect,
                cell_distance: self.cell_distance,
            });
        }
        if self.qd_size > self.cell_size / 2.0 {
            return Err(ParamError::DotsDoNotFit {
                qd_size: self.qd_size,
                cell_size: self.cell_size,
            });
        }
        Ok(())
    }
}
