//! Balanced array detection with software mode projection, and unbalanced
//! spectrally resolved detection.

mod frames;
mod spectral;

pub use frames::{
    difference_correlation_matrix, optimal_mode, project_mode_quadrature, simulate_array_frames,
    simulate_array_frames_with, ArrayFrame, ArrayFrameSet, ArraySignal, ArraySimOptions, CorrelationMatrix,
    OptimalMode, ARRAY_FORMAT, MIN_PIXEL_LO,
};
pub use spectral::{
    joint_q_histogram, unbalanced_spectral_sim, JointQ, SpectralConfig, SpectralRecords, SpectralSignal,
    MIN_LO_TO_SIGNAL,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Default number of pixels of the 1D array.
pub const DEFAULT_PIXELS: usize = 64;
const NORM_TOL: f64 = 1e-9;

/// Uniform pixels; in 1D the pixel "area" is the pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelGrid {
    pub n_pixels: usize,
    pub pixel_area: f64,
}

impl Default for PixelGrid {
    fn default() -> Self {
        Self { n_pixels: DEFAULT_PIXELS, pixel_area: 1.0 }
    }
}

impl PixelGrid {
    pub fn new(n_pixels: usize, pixel_area: f64) -> Result<Self> {
        let g = Self { n_pixels, pixel_area };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pixels == 0 || !(self.pixel_area > 0.0 && self.pixel_area.is_finite()) {
            return invalid(format!("invalid pixel grid {self:?}"));
        }
        Ok(())
    }

    pub fn array_area(&self) -> f64 {
        self.n_pixels as f64 * self.pixel_area
    }

    /// Pixel centres, symmetric about 0.
    pub fn coords(&self) -> Vec<f64> {
        let c = self.n_pixels as f64 / 2.0;
        (0..self.n_pixels).map(|j| (j as f64 + 0.5 - c) * self.pixel_area).collect()
    }
}

/// Real mode function sampled on the pixels, A_p Σ w² = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeVector(Vec<f64>);

impl ModeVector {
    /// Checks the discrete normalization.
    pub fn new(grid: &PixelGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_pixels {
            return invalid(format!("mode has {} values for {} pixels", values.len(), grid.n_pixels));
        }
        let norm = grid.pixel_area * values.iter().map(|w| w * w).sum::<f64>();
        if (norm - 1.0).abs() > NORM_TOL {
            return invalid(format!("mode norm A_p Σ w² = {norm}, expected 1"));
        }
        Ok(Self(values))
    }

    /// Rescales `values` to unit discrete norm.
    pub fn normalized(grid: &PixelGrid, values: Vec<f64>) -> Result<Self> {
        let norm = (grid.pixel_area * values.iter().map(|w| w * w).sum::<f64>()).sqrt();
        if !(norm > 0.0) {
            return invalid("zero mode function");
        }
        Self::new(grid, values.into_iter().map(|w| w / norm).collect())
    }

    /// Accepts a complex profile only if its phase is constant across the
    /// pixels; the projected quadrature must be real.
    pub fn from_complex(grid: &PixelGrid, values: &[Complex64]) -> Result<Self> {
        let peak = values.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
        if peak.norm() == 0.0 {
            return invalid("zero mode function");
        }
        let phase = Complex64::from_polar(1.0, -peak.arg());
        let rotated: Vec<Complex64> = values.iter().map(|v| v * phase).collect();
        let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if rotated.iter().any(|v| v.im.abs() > 1e-9 * scale) {
            return invalid("measured mode must be real: projection needs a constant phase across the profile");
        }
        Self::normalized(grid, rotated.iter().map(|v| v.re).collect())
    }

    pub fn uniform(grid: &PixelGrid) -> Self {
        Self::normalized(grid, vec![1.0; grid.n_pixels]).expect("nonzero")
    }

    /// Hermite–Gauss profile of the given order and 1/e² half-width `width`.
    pub fn hermite_gauss(grid: &PixelGrid, order: usize, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return invalid("mode width must be positive");
        }
        let vals = grid
            .coords()
            .iter()
            .map(|&x| {
                let u = std::f64::consts::SQRT_2 * x / width;
                let h = crate::fock::hermite_poly_all(order, u)[order];
                h * (-(x * x) / (width * width)).exp()
            })
            .collect();
        Self::normalized(grid, vals)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// A_p Σ u_j v_j.
    pub fn overlap(&self, other: &Self, grid: &PixelGrid) -> f64 {
        grid.pixel_area * self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum::<f64>()
    }

    /// a·self + b·other, renormalized.
    pub fn combine(&self, a: f64, other: &Self, b: f64, grid: &PixelGrid) -> Result<Self> {
        Self::normalized(grid, self.0.iter().zip(&other.0).map(|(x, y)| a * x + b * y).collect())
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.0.iter().map(|&w| Complex64::new(w, 0.0)).collect()
    }
}
