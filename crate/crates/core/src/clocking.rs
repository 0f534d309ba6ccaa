//! Four-phase clock: tunneling energy gamma(t) per clock zone.
//!
//! One cycle of zone 0, measured from t = 0:
//!
//! ```text
//!  relax (high) | switch (falling) | hold (low) | release (rising)
//!  [0, p)       | [p, p+s)         | [p+s, 2p+s)| [2p+s, 2p+2s)
//! ```
//!
//! Zone k is zone 0 delayed by k quarter cycles.

use serde::{Deserialize, Serialize};

use crate::params::{require_positive, ParamError, TechnologyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlopeShape {
    Ramp,
    Gaussian,
}

impl std::str::FromStr for SlopeShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ramp" => Ok(SlopeShape::Ramp),
            "gaussian" => Ok(SlopeShape::Gaussian),
            other => Err(format!("unknown slope shape `{other}` (ramp|gaussian)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClockPhase {
    Switch,
    Hold,
    Release,
    Relax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockConfig {
    pub gamma_high: f64,
    pub gamma_low: f64,
    /// Duration of each falling or rising slope, seconds.
    pub slope_time: f64,
    /// Duration of each of the high and low plateaus, seconds.
    pub plateau_time: f64,
    pub shape: SlopeShape,
}

/// Gaussian slopes are an error-function step truncated at +-3 sigma,
/// sigma = slope/6.
const GAUSS_HALF_WIDTH: f64 = 3.0 * std::f64::consts::SQRT_2;

impl ClockConfig {
    /// Standard clock for `tech`: Gaussian slopes of 100 ps, plateaus as
    /// long as the slopes so every phase lasts a quarter cycle.
    pub fn standard(tech: &TechnologyParams) -> Self {
        Self::with_slope(tech, 100e-12, SlopeShape::Gaussian)
    }

    pub fn with_slope(tech: &TechnologyParams, slope_time: f64, shape: SlopeShape) -> Self {
        ClockConfig {
            gamma_high: tech.gamma_high,
            gamma_low: tech.gamma_low,
            slope_time,
            plateau_time: slope_time,
            shape,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        require_positive("slope_time", self.slope_time)?;
        if !(self.plateau_time >= 0.0) || !self.plateau_time.is_finite() {
            return Err(ParamError::Invalid(format!(
                "plateau_time must be >= 0, got {}",
                self.plateau_time
            )));
        }
        require_positive("gamma_low", self.gamma_low)?;
        if self.gamma_high <= self.gamma_low {
            return Err(ParamError::GammaOrder {
                high: self.gamma_high,
                low: self.gamma_low,
            });
        }
        Ok(())
    }

    pub fn cycle_time(&self) -> f64 {
        2.0 * self.slope_time + 2.0 * self.plateau_time
    }

    pub fn quarter(&self) -> f64 {
        self.cycle_time() / 4.0
    }

    /// Position within the zone's own cycle, in `[0, cycle_time)`.
    pub fn local_time(&self, zone: u8, t: f64) -> f64 {
        let cycle = self.cycle_time();
        let u = (t - zone as f64 * self.quarter()).rem_euclid(cycle);
        if u >= cycle {
            0.0
        } else {
            u
        }
    }

    /// Fraction of the transition completed `x` of the way through a slope.
    fn profile(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self.shape {
            SlopeShape::Ramp => x,
            SlopeShape::Gaussian => {
                let edge = libm::erf(GAUSS_HALF_WIDTH / 2.0);
                (libm::erf(GAUSS_HALF_WIDTH * (x - 0.5)) + edge) / (2.0 * edge)
            }
        }
    }

    /// Tunneling energy (J) seen by cells of `zone` at time `t`.
    pub fn gamma_at(&self, zone: u8, t: f64) -> f64 {
        let (p, s) = (self.plateau_time, self.slope_time);
        let u = self.local_time(zone, t);
        let span = self.gamma_high - self.gamma_low;
        if u < p {
            self.gamma_high
        } else if u < p + s {
            self.gamma_high - span * self.profile((u - p) / s)
        } else if u < 2.0 * p + s {
            self.gamma_low
        } else {
            self.gamma_low + span * self.profile((u - 2.0 * p - s) / s)
        }
    }

    pub fn phase_at(&self, zone: u8, t: f64) -> ClockPhase {
        let (p, s) = (self.plateau_time, self.slope_time);
        let u = self.local_time(zone, t);
        if u < p {
            ClockPhase::Relax
        } else if u < p + s {
            ClockPhase::Switch
        } else if u < 2.0 * p + s {
            ClockPhase::Hold
        } else {
            ClockPhase::Release
        }
    }

    /// Offset of the given phase's start within a zone's local cycle.
    pub fn phase_start(&self, phase: ClockPhase) -> f64 {
        let (p, s) = (self.plateau_time, self.slope_time);
        match phase {
            ClockPhase::Relax => 0.0,
            ClockPhase::Switch => p,
            ClockPhase::Hold => p + s,
            ClockPhase::Release => 2.0 * p + s,
        }
    }

    pub fn phase_duration(&self, phase: ClockPhase) -> f64 {
        match phase {
            ClockPhase::Relax | ClockPhase::Hold => self.plateau_time,
            ClockPhase::Switch | ClockPhase::Release => self.slope_time,
        }
    }

    /// Absolute time of the first start of `phase` in `zone` at or after `t`.
    pub fn next_phase_start(&self, zone: u8, phase: ClockPhase, t: f64) -> f64 {
        let cycle = self.cycle_time();
        let origin = zone as f64 * self.quarter() + self.phase_start(phase);
        let k = ((t - origin) / cycle).ceil();
        origin + k * cycle
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(shape: SlopeShape) -> ClockConfig {
        ClockConfig {
            gamma_high: 9.8e-22,
            gamma_low: 3.8e-23,
            slope_time: 100e-12,
            plateau_time: 100e-12,
            shape,
        }
    }

    #[test]
    fn relax_plateau_is_gamma_high() {
        for shape in [SlopeShape::Ramp, SlopeShape::Gaussian] {
            let c = cfg(shape);
            assert_eq!(c.gamma_at(0, 0.0), 9.8e-22);
            assert_eq!(c.phase_at(0, 0.0), ClockPhase::Relax);
        }
    }

    #[test]
    fn slope_midpoints_coincide() {
        let mid = (9.8e-22 + 3.8e-23) / 2.0;
        for shape in [SlopeShape::Ramp, SlopeShape::Gaussian] {
            let c = cfg(shape);
            let fall = c.phase_start(ClockPhase::Switch) + c.slope_time / 2.0;
            let rise = c.phase_start(ClockPhase::Release) + c.slope_time / 2.0;
            assert_relative_eq!(c.gamma_at(0, fall), mid, max_relative = 1e-12);
            assert_relative_eq!(c.gamma_at(0, rise), mid, max_relative = 1e-12);
        }
    }

    #[test]
    fn zones_are_quarter_cycle_delays() {
        let c = cfg(SlopeShape::Gaussian);
        for i in 0..400 {
            let t = i as f64 * 1.37e-12;
            let z0 = c.gamma_at(0, t);
            for z in 1..4u8 {
                let delayed = c.gamma_at(z, t + z as f64 * c.quarter());
                assert_relative_eq!(z0, delayed, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn gaussian_hits_endpoints() {
        let c = cfg(SlopeShape::Gaussian);
        assert_relative_eq!(c.profile(0.0), 0.0, epsilon = 1e-15);
        assert_relative_eq!(c.profile(1.0), 1.0, max_relative = 1e-6);
        let start = c.phase_start(ClockPhase::Switch);
        assert_relative_eq!(c.gamma_at(0, start), 9.8e-22, max_relative = 1e-6);
        assert_relative_eq!(
            c.gamma_at(0, start + c.slope_time * (1.0 - 1e-12)),
            3.8e-23,
            max_relative = 1e-6
        );
    }

    #[test]
    fn switch_of_next_zone_matches_hold() {
        let c = cfg(SlopeShape::Gaussian);
        let n = 4000;
        for i in 0..n {
            let t = (i as f64 + 0.5) * c.cycle_time() * 3.0 / n as f64;
            for z in 0..4u8 {
                let held = c.phase_at(z, t) == ClockPhase::Hold;
                let next_switching = c.phase_at((z + 1) % 4, t) == ClockPhase::Switch;
                assert_eq!(held, next_switching, "zone {z}, t = {t:e}");
            }
        }
    }

    #[test]
    fn phase_durations_sum_to_cycle() {
        let c = ClockConfig {
            plateau_time: 37e-12,
            ..cfg(SlopeShape::Ramp)
        };
        let total: f64 = [
            ClockPhase::Relax,
            ClockPhase::Switch,
            ClockPhase::Hold,
            ClockPhase::Release,
        ]
        .iter()
        .map(|&p| c.phase_duration(p))
        .sum();
        assert_relative_eq!(total, c.cycle_time(), max_relative = 1e-15);
    }

    #[test]
    fn first_falling_slope_is_switch() {
        let c = cfg(SlopeShape::Ramp);
        assert_eq!(c.phase_at(0, 150e-12), ClockPhase::Switch);
        assert_eq!(c.phase_at(0, 250e-12), ClockPhase::Hold);
        assert_eq!(c.phase_at(0, 350e-12), ClockPhase::Release);
    }

    #[test]
    fn next_phase_start_is_forward() {
        let c = cfg(SlopeShape::Ramp);
        let t = c.next_phase_start(2, ClockPhase::Hold, 10e-12);
        assert!(t >= 10e-12);
        assert_eq!(c.phase_at(2, t + 1e-15), ClockPhase::Hold);
        assert!(t - 10e-12 < c.cycle_time());
    }

    #[test]
    fn validation() {
        let mut c = cfg(SlopeShape::Ramp);
        c.slope_time = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg(SlopeShape::Ramp);
        c.plateau_time = -1.0;
        assert!(c.validate().is_err());
    }
}
