use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Balanced-homodyne detector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    /// Quantum efficiency of each photodiode.
    pub eta_q: f64,
    /// LO/signal mode-overlap efficiency.
    pub eta_ls: f64,
    /// |α_L|² per pulse.
    pub lo_mean_photons: f64,
    /// Electronic noise rms per channel, in photoelectrons.
    pub sigma_e: f64,
    /// Photoelectrons per volt.
    #[serde(default = "default_gain")]
    pub gain: f64,
    /// Fractional beam-splitter imbalance ε: the diodes receive (1±ε)/2.
    #[serde(default)]
    pub balance_imbalance: f64,
}

fn default_gain() -> f64 {
    1e6
}

/// LO level below which the Gaussian strong-LO model is flagged.
pub const STRONG_LO_THRESHOLD: f64 = 1e4;

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            eta_q: 1.0,
            eta_ls: 1.0,
            lo_mean_photons: 1e6,
            sigma_e: 0.0,
            gain: default_gain(),
            balance_imbalance: 0.0,
        }
    }
}

impl DetectorModel {
    /// Ideal detector with the given overall efficiency.
    pub fn ideal(eta: f64) -> Self {
        Self { eta_q: eta, ..Self::default() }
    }

    pub fn eta_eff(&self) -> f64 {
        self.eta_q * self.eta_ls
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_q > 0.0 && self.eta_q <= 1.0) {
            return invalid(format!("eta_q={} outside (0,1]", self.eta_q));
        }
        if !(0.0..=1.0).contains(&self.eta_ls) {
            return invalid(format!("eta_ls={} outside [0,1]", self.eta_ls));
        }
        if !(self.lo_mean_photons >= 0.0 && self.lo_mean_photons.is_finite()) {
            return invalid(format!("lo_mean_photons={} must be finite and ≥ 0", self.lo_mean_photons));
        }
        if !(self.sigma_e >= 0.0 && self.sigma_e.is_finite()) {
            return invalid(format!("sigma_e={} must be finite and ≥ 0", self.sigma_e));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return invalid(format!("gain={} must be positive", self.gain));
        }
        if !(self.balance_imbalance.abs() < 1.0) {
            return invalid(format!("balance_imbalance={} must lie in (-1,1)", self.balance_imbalance));
        }
        Ok(())
    }

    /// Human-readable caveats about the operating point.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.lo_mean_photons < STRONG_LO_THRESHOLD {
            w.push(format!(
                "lo_mean_photons={} below {STRONG_LO_THRESHOLD:.0e}: strong-LO Gaussian model is approximate",
                self.lo_mean_photons
            ));
        }
        w
    }

    /// Gaussian detection-noise variance (1/η_eff − 1)/2 in quadrature units.
    pub fn loss_variance(&self) -> f64 {
        (1.0 / self.eta_eff() - 1.0) / 2.0
    }

    /// Electronic noise of the scaled difference q = n₋/(√2 η_eff |α_L|):
    /// two channels of σ_e in quadrature give σ_e √2 in n₋.
    pub fn electronic_sigma_q(&self) -> f64 {
        if self.sigma_e == 0.0 || self.lo_mean_photons == 0.0 {
            return 0.0;
        }
        self.sigma_e / (self.eta_eff() * self.lo_mean_photons.sqrt())
    }
}

/// How LO phases are assigned to pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseSchedule {
    /// `d` equally spaced phases k·span/d, cycled pulse by pulse.
    Grid {
        d: usize,
        #[serde(default = "two_pi")]
        span: f64,
    },
    UniformRandom,
    /// θ_i = 2π i / N across the record.
    SweptLinear,
    /// Every pulse at the same phase.
    Fixed { phase: f64 },
}

fn two_pi() -> f64 {
    2.0 * PI
}

impl PhaseSchedule {
    pub fn grid(d: usize) -> Self {
        Self::Grid { d, span: two_pi() }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Grid { d, span } => {
                if d == 0 {
                    return invalid("grid schedule needs d ≥ 1");
                }
                if !(span > 0.0 && span <= two_pi() + 1e-12) {
                    return invalid(format!("grid span {span} outside (0, 2π]"));
                }
                Ok(())
            }
            Self::Fixed { phase } if !phase.is_finite() => invalid("fixed phase must be finite"),
            _ => Ok(()),
        }
    }

    /// Number of distinct phases, if finite.
    pub fn n_phases(&self) -> Option<usize> {
        match self {
            Self::Grid { d, .. } => Some(*d),
            Self::Fixed { .. } => Some(1),
            _ => None,
        }
    }

    /// Whether the schedule samples the full circle continuously.
    pub fn is_phase_averaging(&self) -> bool {
        matches!(self, Self::UniformRandom | Self::SweptLinear)
    }

    /// Phase of pulse `i` of `n`; `rng` is consumed only by random schedules.
    pub fn theta<R: Rng>(&self, i: usize, n: usize, rng: &mut R) -> f64 {
        let t = match *self {
            Self::Grid { d, span } => (i % d) as f64 * span / d as f64,
            Self::UniformRandom => rng.gen::<f64>() * two_pi(),
            Self::SweptLinear => two_pi() * i as f64 / n as f64,
            Self::Fixed { phase } => phase,
        };
        wrap_phase(t)
    }
}

/// Maps an angle into [0, 2π).
pub fn wrap_phase(t: f64) -> f64 {
    let w = t.rem_euclid(two_pi());
    if w >= two_pi() {
        0.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn grid_phases_are_equally_spaced() {
        let s = PhaseSchedule::grid(4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let t: Vec<f64> = (0..8).map(|i| s.theta(i, 8, &mut rng)).collect();
        assert_eq!(t[0], 0.0);
        assert!((t[1] - PI / 2.0).abs() < 1e-15);
        assert_eq!(t[4], t[0]);
    }

    #[test]
    fn schedule_json_shapes() {
        let s: PhaseSchedule = serde_json::from_str(r#"{"kind":"grid","d":128}"#).unwrap();
        assert_eq!(s, PhaseSchedule::grid(128));
        let r: PhaseSchedule = serde_json::from_str(r#"{"kind":"uniform_random"}"#).unwrap();
        assert!(r.is_phase_averaging());
        assert!(PhaseSchedule::Grid { d: 0, span: 1.0 }.validate().is_err());
    }

    #[test]
    fn detector_validation() {
        assert!(DetectorModel::default().validate().is_ok());
        assert!(DetectorModel { eta_q: 0.0, ..Default::default() }.validate().is_err());
        let weak = DetectorModel { lo_mean_photons: 100.0, ..Default::default() };
        assert_eq!(weak.warnings().len(), 1);
        let d = DetectorModel { eta_q: 0.8, eta_ls: 0.5, ..Default::default() };
        assert!((d.eta_eff() - 0.4).abs() < 1e-15);
        assert!((d.loss_variance() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn wrap_phase_stays_in_range() {
        for t in [-1e-18, -7.0, 0.0, 2.0 * PI, 13.0] {
            let w = wrap_phase(t);
            assert!((0.0..2.0 * PI).contains(&w), "{t} -> {w}");
        }
    }
}
