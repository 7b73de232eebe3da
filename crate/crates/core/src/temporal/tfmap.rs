use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{wrap, GateKind, TemporalSignal};
use crate::error::{invalid, Result};
use crate::grid::Axis;

/// N̄(ω_L, t_L) on an ω × t grid, `values[i][j]` at (omega_i, t_j).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrequencyMap {
    pub omega: Axis,
    pub t: Axis,
    pub values: Vec<Vec<f64>>,
}

impl TimeFrequencyMap {
    /// Σ_ω N̄ Δω at time index `j`.
    pub fn frequency_integral(&self, j: usize) -> f64 {
        self.values.iter().map(|row| row[j]).sum::<f64>() * self.omega.step()
    }

    /// ω of the largest entry at time index `j`.
    pub fn ridge_frequency(&self, j: usize) -> f64 {
        let i = (0..self.omega.n).max_by(|&a, &b| self.values[a][j].total_cmp(&self.values[b][j])).unwrap_or(0);
        self.omega.at(i)
    }

    /// Long format `omega,t,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "omega,t,value")?;
        for (i, row) in self.values.iter().enumerate() {
            let w = self.omega.at(i);
            for (j, v) in row.iter().enumerate() {
                writeln!(out, "{w},{},{v}", self.t.at(j))?;
            }
        }
        Ok(())
    }
}

/// Ensemble mean of |∫ e^{iω_L t} h_L(t − t_L) φ(t) dt|² with the record
/// treated as periodic.
pub fn time_frequency_map(ensemble: &[TemporalSignal], gate: GateKind, omega: &Axis, t: &Axis) -> Result<TimeFrequencyMap> {
    gate.validate()?;
    let first = ensemble.first().ok_or_else(|| crate::OhtError::InvalidInput("empty signal ensemble".into()))?;
    if ensemble.iter().any(|s| s.t_axis != first.t_axis) {
        return invalid("ensemble members must share one time grid");
    }
    let ax = first.t_axis;
    let (n, dt) = (ax.n, ax.step());
    let period = n as f64 * dt;
    if gate.support() >= period / 2.0 {
        return invalid(format!("gate support {} exceeds half the record length {}", gate.support(), period / 2.0));
    }
    let scale = super::GateFunction::new(gate, 0.0, 0.0)?;
    let cols: Vec<Vec<f64>> = (0..t.n)
        .into_par_iter()
        .map(|j| {
            let tl = t.at(j);
            let lo = ax.locate(tl - gate.support()).floor() as i64;
            let hi = ax.locate(tl + gate.support()).ceil() as i64;
            let taps: Vec<(f64, usize, f64)> = (lo..=hi)
                .filter_map(|k| {
                    let idx = k.rem_euclid(n as i64) as usize;
                    let tk = ax.start + k as f64 * dt;
                    let h = scale.envelope(wrap(tk - tl, period));
                    (h != 0.0).then_some((tk, idx, h))
                })
                .collect();
            let mut col = vec![0.0; omega.n];
            for sig in ensemble {
                for (i, c) in col.iter_mut().enumerate() {
                    let w = omega.at(i);
                    let a: Complex64 = taps.iter().map(|&(tk, idx, h)| Complex64::from_polar(h, w * tk) * sig.phi[idx]).sum();
                    *c += (a * dt).norm_sqr();
                }
            }
            col.iter_mut().for_each(|v| *v /= ensemble.len() as f64);
            col
        })
        .collect();
    let values = (0..omega.n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    Ok(TimeFrequencyMap { omega: *omega, t: *t, values })
}
