use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::twin::TwinForecast;

/// Thresholds in raw update-norm units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkipThresholds {
    pub tau_mag: f64,
    pub tau_unc: f64,
}

impl SkipThresholds {
    pub fn new(tau_mag: f64, tau_unc: f64) -> Result<Self> {
        for (name, v) in [("tau_mag", tau_mag), ("tau_unc", tau_unc)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(name, "must be finite and non-negative"));
            }
        }
        Ok(SkipThresholds { tau_mag, tau_unc })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Communicate,
    Skip,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Communicate => "communicate",
            Decision::Skip => "skip",
        }
    }
}

/// Skip only when the twin is confident the update will be small: both the
/// forecast magnitude and its uncertainty strictly below their thresholds.
/// Cold-start forecasts always communicate.
pub fn skip_decision(forecast: &TwinForecast, thresholds: &SkipThresholds) -> Decision {
    if forecast.cold_start {
        return Decision::Communicate;
    }
    if forecast.predicted_magnitude < thresholds.tau_mag && forecast.uncertainty < thresholds.tau_unc {
        Decision::Skip
    } else {
        Decision::Communicate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(mag: f64, unc: f64) -> TwinForecast {
        TwinForecast {
            predicted_magnitude: mag,
            uncertainty: unc,
            cold_start: false,
        }
    }

    #[test]
    fn dual_threshold_truth_table() {
        let t = SkipThresholds::new(0.001, 0.001).unwrap();
        assert_eq!(skip_decision(&f(0.0005, 0.0005), &t), Decision::Skip);
        assert_eq!(skip_decision(&f(0.005, 0.0), &t), Decision::Communicate);
        assert_eq!(skip_decision(&f(0.0, 0.005), &t), Decision::Communicate);
        assert_eq!(skip_decision(&TwinForecast::cold(), &t), Decision::Communicate);
    }

    #[test]
    fn comparison_is_strict() {
        let t = SkipThresholds::new(0.001, 0.001).unwrap();
        assert_eq!(skip_decision(&f(0.001, 0.0), &t), Decision::Communicate);
        assert_eq!(skip_decision(&f(0.0, 0.001), &t), Decision::Communicate);
    }

    #[test]
    fn zero_magnitude_threshold_never_skips() {
        let t = SkipThresholds::new(0.0, 1e9).unwrap();
        assert_eq!(skip_decision(&f(0.0, 0.0), &t), Decision::Communicate);
    }

    #[test]
    fn invalid_thresholds_rejected() {
        assert!(SkipThresholds::new(-1.0, 0.0).is_err());
        assert!(SkipThresholds::new(0.0, f64::NAN).is_err());
    }
}
