use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fock::{psi_all, HERMITE_MAX_ORDER};
use crate::grid::Axis;
use crate::rng::StreamSplitter;

const TAIL: f64 = 1e-15;
const MARGINAL_POINTS: usize = 4096;

/// Joint photon-number law of a two-mode, number-diagonal source. Each pulse
/// draws a pair (n1, n2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhotonNumberLaw {
    IndependentThermal { nbar1: f64, nbar2: f64 },
    IndependentPoisson { nbar1: f64, nbar2: f64 },
    /// n1 = n2 = n with n thermal.
    IdenticalThermal { nbar: f64 },
    /// Thermal total split binomially with transmission t.
    SplitThermal { nbar: f64, transmission: f64 },
    /// Fixed total split binomially with transmission t.
    FixedTotalSplit { total: u64, transmission: f64 },
}

fn thermal_cap(nbar: f64) -> usize {
    if nbar <= 0.0 {
        return 0;
    }
    (TAIL.ln() / (nbar / (1.0 + nbar)).ln()).ceil() as usize
}

fn poisson_cap(nbar: f64) -> usize {
    if nbar <= 0.0 {
        return 0;
    }
    (nbar + 10.0 * nbar.sqrt() + 20.0).ceil() as usize
}

fn draw_thermal<R: Rng>(nbar: f64, rng: &mut R) -> u64 {
    if nbar <= 0.0 {
        return 0;
    }
    let u: f64 = 1.0 - rng.gen::<f64>();
    (u.ln() / (nbar / (1.0 + nbar)).ln()).floor() as u64
}

fn draw_poisson<R: Rng>(nbar: f64, rng: &mut R) -> u64 {
    if nbar <= 0.0 {
        return 0;
    }
    Poisson::new(nbar).expect("positive mean").sample(rng) as u64
}

fn split<R: Rng>(n: u64, t: f64, rng: &mut R) -> (u64, u64) {
    let k = Binomial::new(n, t).expect("valid binomial").sample(rng);
    (k, n - k)
}

impl PhotonNumberLaw {
    pub fn validate(&self) -> Result<()> {
        let ok_mean = |m: f64| m.is_finite() && m >= 0.0;
        let ok_t = |t: f64| (0.0..=1.0).contains(&t);
        let fine = match *self {
            Self::IndependentThermal { nbar1, nbar2 } | Self::IndependentPoisson { nbar1, nbar2 } => {
                ok_mean(nbar1) && ok_mean(nbar2)
            }
            Self::IdenticalThermal { nbar } => ok_mean(nbar),
            Self::SplitThermal { nbar, transmission } => ok_mean(nbar) && ok_t(transmission),
            Self::FixedTotalSplit { transmission, .. } => ok_t(transmission),
        };
        if !fine {
            return invalid(format!("invalid photon-number law {self:?}"));
        }
        if self.n_cap() > HERMITE_MAX_ORDER {
            return invalid(format!("photon-number law {self:?} reaches beyond n = {HERMITE_MAX_ORDER}"));
        }
        Ok(())
    }

    /// Photon number above which the law has negligible weight.
    pub fn n_cap(&self) -> usize {
        match *self {
            Self::IndependentThermal { nbar1, nbar2 } => thermal_cap(nbar1.max(nbar2)),
            Self::IndependentPoisson { nbar1, nbar2 } => poisson_cap(nbar1.max(nbar2)),
            Self::IdenticalThermal { nbar } | Self::SplitThermal { nbar, .. } => thermal_cap(nbar),
            Self::FixedTotalSplit { total, .. } => total as usize,
        }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> (u64, u64) {
        match *self {
            Self::IndependentThermal { nbar1, nbar2 } => (draw_thermal(nbar1, rng), draw_thermal(nbar2, rng)),
            Self::IndependentPoisson { nbar1, nbar2 } => (draw_poisson(nbar1, rng), draw_poisson(nbar2, rng)),
            Self::IdenticalThermal { nbar } => {
                let n = draw_thermal(nbar, rng);
                (n, n)
            }
            Self::SplitThermal { nbar, transmission } => split(draw_thermal(nbar, rng), transmission, rng),
            Self::FixedTotalSplit { total, transmission } => split(total, transmission, rng),
        }
    }

    /// (⟨n1⟩, ⟨n2⟩).
    pub fn means(&self) -> (f64, f64) {
        match *self {
            Self::IndependentThermal { nbar1, nbar2 } | Self::IndependentPoisson { nbar1, nbar2 } => (nbar1, nbar2),
            Self::IdenticalThermal { nbar } => (nbar, nbar),
            Self::SplitThermal { nbar, transmission: t } => (t * nbar, (1.0 - t) * nbar),
            Self::FixedTotalSplit { total, transmission: t } => (t * total as f64, (1.0 - t) * total as f64),
        }
    }

    /// ⟨n1 n2⟩ / (⟨n1⟩⟨n2⟩).
    pub fn g2_cross(&self) -> f64 {
        match *self {
            Self::IndependentThermal { .. } | Self::IndependentPoisson { .. } => 1.0,
            Self::IdenticalThermal { nbar } => 2.0 + 1.0 / nbar,
            Self::SplitThermal { .. } => 2.0,
            Self::FixedTotalSplit { total, .. } => 1.0 - 1.0 / total as f64,
        }
    }

    /// (g²₁₁, g²₂₂) of each mode alone.
    pub fn g2_single(&self) -> (f64, f64) {
        match *self {
            Self::IndependentThermal { .. } | Self::IdenticalThermal { .. } | Self::SplitThermal { .. } => (2.0, 2.0),
            Self::IndependentPoisson { .. } => (1.0, 1.0),
            Self::FixedTotalSplit { total, .. } => {
                let g = 1.0 - 1.0 / total as f64;
                (g, g)
            }
        }
    }

    /// Planted number pairs for `n` pulses, one PRNG stream per pulse.
    pub fn sample_numbers(&self, n: usize, seed: u64) -> Vec<(u64, u64)> {
        let split = StreamSplitter::new(seed);
        (0..n).map(|i| self.draw(&mut split.stream(i as u64))).collect()
    }
}

/// Empirical ⟨n1 n2⟩ / (⟨n1⟩⟨n2⟩) of planted number pairs.
pub fn number_g2_cross(pairs: &[(u64, u64)]) -> f64 {
    let n = pairs.len() as f64;
    let m1 = pairs.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let m2 = pairs.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let m12 = pairs.iter().map(|p| (p.0 * p.1) as f64).sum::<f64>() / n;
    m12 / (m1 * m2)
}

/// Tabulated CDFs of the Fock-state quadrature laws ψ_n(q)² for n ≤ n_max.
#[derive(Debug, Clone)]
pub struct FockMarginals {
    axis: Axis,
    cdf: Vec<Vec<f64>>,
}

impl FockMarginals {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max > HERMITE_MAX_ORDER {
            return invalid(format!("Fock marginal order {n_max} above {HERMITE_MAX_ORDER}"));
        }
        let half = 8f64.max(((2 * n_max + 1) as f64).sqrt() + 5.0);
        let axis = Axis::symmetric(half, MARGINAL_POINTS)?;
        let h = axis.step();
        let dens: Vec<Vec<f64>> = axis.points().iter().map(|&q| psi_all(n_max, q).iter().map(|p| p * p).collect()).collect();
        let cdf = (0..=n_max)
            .map(|n| {
                let mut c = vec![0.0; MARGINAL_POINTS];
                for j in 1..MARGINAL_POINTS {
                    c[j] = c[j - 1] + 0.5 * h * (dens[j - 1][n] + dens[j][n]);
                }
                let total = c[MARGINAL_POINTS - 1];
                c.iter_mut().for_each(|v| *v /= total);
                c
            })
            .collect();
        Ok(Self { axis, cdf })
    }

    pub fn n_max(&self) -> usize {
        self.cdf.len() - 1
    }

    /// Quadrature of Fock state `n` (clamped to n_max) with CDF value `u`.
    pub fn sample(&self, n: u64, u: f64) -> f64 {
        let c = &self.cdf[(n as usize).min(self.n_max())];
        let j = c.partition_point(|&v| v <= u).clamp(1, c.len() - 1);
        let (lo, hi) = (c[j - 1], c[j]);
        let frac = if hi > lo { ((u - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
        self.axis.at(j - 1) + frac * self.axis.step()
    }
}
