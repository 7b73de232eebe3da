use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform grid of `n` points from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(start: f64, stop: f64, n: usize) -> Result<Self> {
        if n < 2 || !(stop > start) || !start.is_finite() || !stop.is_finite() {
            return invalid(format!("bad axis [{start}, {stop}] with {n} points"));
        }
        Ok(Self { start, stop, n })
    }

    /// Symmetric axis `[-half, half]`.
    pub fn symmetric(half: f64, n: usize) -> Result<Self> {
        Self::new(-half, half, n)
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.n - 1) as f64
    }

    pub fn at(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.at(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Composite Simpson weights (3/8 rule on the last panel when the
    /// interval count is odd).
    pub fn simpson_weights(&self) -> Vec<f64> {
        simpson_weights(self.n, self.step())
    }

    /// Fractional index of `x`, for interpolation.
    pub fn locate(&self, x: f64) -> f64 {
        (x - self.start) / self.step()
    }
}

pub(crate) fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    let intervals = n - 1;
    if intervals == 1 {
        w[0] = h / 2.0;
        w[1] = h / 2.0;
        return w;
    }
    let simpson_end = if intervals % 2 == 0 { n - 1 } else { n - 4 };
    let mut i = 0;
    while i + 2 <= simpson_end {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
        i += 2;
    }
    if intervals % 2 == 1 {
        let s = simpson_end;
        if intervals >= 3 {
            w[s] += 3.0 * h / 8.0;
            w[s + 1] += 9.0 * h / 8.0;
            w[s + 2] += 9.0 * h / 8.0;
            w[s + 3] += 3.0 * h / 8.0;
        }
    }
    w
}

/// Rectangular phase-space grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q: Axis,
    pub p: Axis,
}

impl GridSpec {
    pub fn square(half: f64, n: usize) -> Result<Self> {
        let a = Axis::symmetric(half, n)?;
        Ok(Self { q: a, p: a })
    }

    pub fn cell_area(&self) -> f64 {
        self.q.step() * self.p.step()
    }
}

impl Default for GridSpec {
    /// 201 × 201 points over [-6, 6]².
    fn default() -> Self {
        let a = Axis { start: -6.0, stop: 6.0, n: 201 };
        Self { q: a, p: a }
    }
}

/// Linear interpolation of tabulated `values` on `axis`; zero outside.
pub fn interp_linear(axis: &Axis, values: &[f64], x: f64) -> f64 {
    let t = axis.locate(x);
    if !(t >= 0.0) || t > (axis.n - 1) as f64 {
        return 0.0;
    }
    let i = (t.floor() as usize).min(axis.n - 2);
    let f = t - i as f64;
    values[i] * (1.0 - f) + values[i + 1] * f
}
