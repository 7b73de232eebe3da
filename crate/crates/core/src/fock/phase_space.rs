use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::hermite::{hermite_table, laguerre_all, psi_all};
use super::state::{annihilation, DensityMatrix};
use crate::error::{invalid, OhtError, Result};
use crate::grid::{Axis, GridSpec};

/// Real phase-space function sampled on a rectangular grid,
/// `values[i][j] = W(q_i, p_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub grid: GridSpec,
    pub values: Vec<Vec<f64>>,
}

impl WignerGrid {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![vec![0.0; grid.p.n]; grid.q.n] }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        let values = (0..grid.q.n)
            .into_par_iter()
            .map(|i| {
                let q = grid.q.at(i);
                (0..grid.p.n).map(|j| f(q, grid.p.at(j))).collect()
            })
            .collect();
        Self { grid, values }
    }

    /// Riemann sum ∫∫W dq dp.
    pub fn integral(&self) -> f64 {
        self.values.iter().flatten().sum::<f64>() * self.grid.cell_area()
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn normalized(mut self) -> Self {
        let s = self.integral();
        if s != 0.0 {
            self.scale(1.0 / s);
        }
        self
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Value at the grid point nearest to (q, p).
    pub fn nearest(&self, q: f64, p: f64) -> f64 {
        let i = self.grid.q.locate(q).round().clamp(0.0, (self.grid.q.n - 1) as f64) as usize;
        let j = self.grid.p.locate(p).round().clamp(0.0, (self.grid.p.n - 1) as f64) as usize;
        self.values[i][j]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Catmull-Rom bicubic interpolation, zero outside the grid.
    pub fn interpolate(&self, q: f64, p: f64) -> f64 {
        let tq = self.grid.q.locate(q);
        let tp = self.grid.p.locate(p);
        let (nq, np) = (self.grid.q.n as isize, self.grid.p.n as isize);
        if !(tq >= 0.0 && tp >= 0.0) || tq > (nq - 1) as f64 || tp > (np - 1) as f64 {
            return 0.0;
        }
        let iq = tq.floor() as isize;
        let ip = tp.floor() as isize;
        let fq = tq - iq as f64;
        let fp = tp - ip as f64;
        let wq = catmull_rom(fq);
        let wp = catmull_rom(fp);
        let mut acc = 0.0;
        for (a, wa) in wq.iter().enumerate() {
            let i = iq - 1 + a as isize;
            if i < 0 || i >= nq {
                continue;
            }
            let row = &self.values[i as usize];
            for (b, wb) in wp.iter().enumerate() {
                let j = ip - 1 + b as isize;
                if j < 0 || j >= np {
                    continue;
                }
                acc += wa * wb * row[j as usize];
            }
        }
        acc
    }

    /// Second moments (⟨q⟩, ⟨p⟩, Var q, Var p) by Riemann sums.
    pub fn moments(&self) -> (f64, f64, f64, f64) {
        let (mut s, mut sq, mut sp, mut sqq, mut spp) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, row) in self.values.iter().enumerate() {
            let q = self.grid.q.at(i);
            for (j, w) in row.iter().enumerate() {
                let p = self.grid.p.at(j);
                s += w;
                sq += w * q;
                sp += w * p;
                sqq += w * q * q;
                spp += w * p * p;
            }
        }
        let (mq, mp) = (sq / s, sp / s);
        (mq, mp, sqq / s - mq * mq, spp / s - mp * mp)
    }

    /// Long-format CSV with header `q,p,w`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "q,p,w")?;
        for (i, row) in self.values.iter().enumerate() {
            let q = self.grid.q.at(i);
            for (j, w) in row.iter().enumerate() {
                writeln!(out, "{},{},{}", q, self.grid.p.at(j), w)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "q,p,w" {
            return Err(OhtError::Format(format!("expected header q,p,w, got {header:?}")));
        }
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| OhtError::Format(format!("line {}: {e}", k + 2)))?;
            if f.len() != 3 {
                return Err(OhtError::Format(format!("line {}: expected 3 fields", k + 2)));
            }
            rows.push((f[0], f[1], f[2]));
        }
        let np = rows.iter().take_while(|r| r.0 == rows[0].0).count();
        if np < 2 || rows.len() % np != 0 {
            return Err(OhtError::Format("grid is not rectangular".into()));
        }
        let nq = rows.len() / np;
        let grid = GridSpec {
            q: Axis::new(rows[0].0, rows[rows.len() - 1].0, nq)?,
            p: Axis::new(rows[0].1, rows[np - 1].1, np)?,
        };
        let values = rows.chunks(np).map(|c| c.iter().map(|r| r.2).collect()).collect();
        Ok(Self { grid, values })
    }
}

fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Planar rotation of phase-space coordinates.
pub fn rotate_quadrature(q: f64, p: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (q * c + p * s, -q * s + p * c)
}

/// Pr(q,θ) = Σ ρ_μν ψ_μ ψ_ν e^{i(ν−μ)θ}.
pub fn quadrature_pdf(rho: &DensityMatrix, theta: f64, q_axis: &Axis) -> Result<Vec<f64>> {
    quadrature_pdf_at(rho, theta, &q_axis.points())
}

pub fn quadrature_pdf_at(rho: &DensityMatrix, theta: f64, points: &[f64]) -> Result<Vec<f64>> {
    let d = rho.dim();
    let phases: Vec<Complex64> = (0..d).map(|n| Complex64::from_polar(1.0, n as f64 * theta)).collect();
    let m = rho.elements();
    Ok(points
        .par_iter()
        .map(|&q| {
            let psi = psi_all(d - 1, q);
            let u: Vec<Complex64> = psi.iter().zip(&phases).map(|(p, e)| e * *p).collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for mu in 0..d {
                if psi[mu] == 0.0 {
                    continue;
                }
                let mut row = Complex64::new(0.0, 0.0);
                for nu in 0..d {
                    row += m[(mu, nu)] * u[nu];
                }
                acc += u[mu].conj() * row;
            }
            acc.re
        })
        .collect())
}

/// Kernel W_nm(q,p) (Wigner function of |n⟩⟨m| read as ⟨m|Ŵ|n⟩) in the
/// closed Gaussian–Laguerre form.
pub fn wigner_kernel(n: usize, m: usize, q: f64, p: f64) -> Complex64 {
    if n > m {
        return wigner_kernel(m, n, q, p).conj();
    }
    let k = m - n;
    let r2 = q * q + p * p;
    let lag = laguerre_all(n, k, 2.0 * r2)[n];
    let mut ratio = 1.0;
    for j in n + 1..=m {
        ratio /= j as f64;
    }
    let z = Complex64::new(q, p) * 2f64.sqrt();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    z.powu(k as u32) * (sign / PI * ratio.sqrt() * (-r2).exp() * lag)
}

/// Same kernel by direct quadrature of
/// (1/2π)∫ψ_n(q − y/2)ψ_m(q + y/2)e^{ipy}dy; the integrand is smooth and
/// decays like a Gaussian, so the equispaced rule converges spectrally.
pub fn wigner_kernel_fourier(n: usize, m: usize, q: f64, p: f64) -> Complex64 {
    let top = n.max(m);
    let half = 2.0 * ((2 * top + 1) as f64).sqrt() + 24.0;
    let h = 0.02;
    let steps = (half / h).ceil() as i64;
    let mut acc = Complex64::new(0.0, 0.0);
    for s in -steps..=steps {
        let y = s as f64 * h;
        let a = psi_all(top, q - y / 2.0)[n];
        let b = psi_all(top, q + y / 2.0)[m];
        acc += Complex64::from_polar(a * b, p * y);
    }
    acc * (h / (2.0 * PI))
}

/// W(q,p) = Σ ρ_nm W_nm(q,p).
pub fn wigner_from_rho(rho: &DensityMatrix, grid: &GridSpec) -> WignerGrid {
    let d = rho.dim();
    let m = rho.elements().clone();
    let mut sqrt_fact_ratio = vec![vec![0.0; d]; d];
    for n in 0..d {
        let mut r = 1.0;
        for mm in n..d {
            if mm > n {
                r /= mm as f64;
            }
            sqrt_fact_ratio[n][mm] = r.sqrt();
        }
    }
    WignerGrid::from_fn(*grid, |q, p| wigner_point(&m, &sqrt_fact_ratio, q, p))
}

fn wigner_point(m: &DMatrix<Complex64>, sfr: &[Vec<f64>], q: f64, p: f64) -> f64 {
    let d = m.nrows();
    let r2 = q * q + p * p;
    let x = 2.0 * r2;
    let z = Complex64::new(q, p) * 2f64.sqrt();
    let mut zk = Complex64::new(1.0, 0.0);
    let mut total = 0.0;
    for k in 0..d {
        let lag = laguerre_all(d - 1 - k, k, x);
        let mut acc = Complex64::new(0.0, 0.0);
        for n in 0..d - k {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            acc += m[(n, n + k)] * (sign * sfr[n][n + k] * lag[n]);
        }
        let term = acc * zk;
        total += if k == 0 { term.re } else { 2.0 * term.re };
        zk *= z;
    }
    total * (-r2).exp() / PI
}

/// Result of inverting a Wigner grid.
#[derive(Debug, Clone)]
pub struct WignerInversion {
    pub rho: DensityMatrix,
    pub trace_deviation: f64,
    /// Set when the trace misses 1 by more than 0.05, i.e. the grid is too
    /// coarse or too small for the state.
    pub coarse_grid_warning: bool,
}

/// ρ_nm = 2π ∫∫ W(q,p) W_nm*(q,p) dq dp.
pub fn rho_from_wigner(w: &WignerGrid, dim: usize) -> Result<WignerInversion> {
    if dim == 0 {
        return invalid("dimension must be positive");
    }
    let g = w.grid;
    let wq = g.q.simpson_weights();
    let wp = g.p.simpson_weights();
    let rows: Vec<DMatrix<Complex64>> = (0..g.q.n)
        .into_par_iter()
        .map(|i| {
            let q = g.q.at(i);
            let mut acc = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
            for j in 0..g.p.n {
                let p = g.p.at(j);
                let weight = w.values[i][j] * wq[i] * wp[j];
                if weight == 0.0 {
                    continue;
                }
                for n in 0..dim {
                    for mm in n..dim {
                        acc[(n, mm)] += wigner_kernel(n, mm, q, p).conj() * weight;
                    }
                }
            }
            acc
        })
        .collect();
    let mut sum = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    for r in rows {
        sum += r;
    }
    for n in 0..dim {
        for mm in n + 1..dim {
            sum[(mm, n)] = sum[(n, mm)].conj();
        }
    }
    sum *= Complex64::new(2.0 * PI, 0.0);
    let rho = DensityMatrix::hermitian_part(sum, false)?;
    let trace_deviation = (rho.trace() - 1.0).abs();
    Ok(WignerInversion { rho, trace_deviation, coarse_grid_warning: trace_deviation > 0.05 })
}

/// Husimi function as a density in (q,p): ⟨α|ρ|α⟩/(2π), α = (q+ip)/√2.
/// The extra 1/2 relative to ⟨α|ρ|α⟩/π converts d²α to dq dp so that the
/// grid integral is one.
pub fn q_function(rho: &DensityMatrix, grid: &GridSpec) -> WignerGrid {
    let d = rho.dim();
    let m = rho.elements().clone();
    WignerGrid::from_fn(*grid, |q, p| {
        let alpha = Complex64::new(q, p) / 2f64.sqrt();
        let mut v = vec![Complex64::new(0.0, 0.0); d];
        v[0] = Complex64::new(1.0, 0.0);
        for n in 1..d {
            v[n] = v[n - 1] * alpha / (n as f64).sqrt();
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for n in 0..d {
            let mut row = Complex64::new(0.0, 0.0);
            for k in 0..d {
                row += m[(n, k)] * v[k];
            }
            acc += v[n].conj() * row;
        }
        (acc.re * (-alpha.norm_sqr()).exp() / (2.0 * PI)).max(0.0)
    })
}

/// Sampled wave function reconstructed from a (nearly) pure ρ.
#[derive(Debug, Clone)]
pub struct WavefunctionSamples {
    pub q_axis: Axis,
    pub amplitude: Vec<Complex64>,
    pub purity: f64,
}

impl WavefunctionSamples {
    pub fn norm(&self) -> f64 {
        self.amplitude.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.q_axis.step()
    }
}

pub const PURITY_GATE: f64 = 0.99;

/// ψ(q) = ⟨q|ρ|q_ref⟩/√⟨q_ref|ρ|q_ref⟩ with the global phase chosen so that
/// ψ is real and positive at its modulus peak.
pub fn wavefunction_from_rho(rho: &DensityMatrix, q_axis: &Axis, q_ref: f64) -> Result<WavefunctionSamples> {
    let purity = rho.purity();
    if purity < PURITY_GATE {
        return Err(OhtError::Purity { purity, gate: PURITY_GATE });
    }
    let rho = rho.normalize();
    let d = rho.dim();
    let m = rho.elements();
    let pts = q_axis.points();
    let table = hermite_table(d - 1, &pts)?;
    let psi_ref = psi_all(d - 1, q_ref);
    let col: Vec<Complex64> = (0..d)
        .map(|n| (0..d).map(|k| m[(n, k)] * psi_ref[k]).sum())
        .collect();
    let diag_ref: f64 = (0..d).map(|n| col[n].re * psi_ref[n]).sum();
    let peak_density = pts
        .iter()
        .map(|&q| {
            let ps = psi_all(d - 1, q);
            let mut s = Complex64::new(0.0, 0.0);
            for n in 0..d {
                for k in 0..d {
                    s += m[(n, k)] * ps[n] * ps[k];
                }
            }
            s.re
        })
        .fold(0.0, f64::max);
    if !(diag_ref > 1e-6 * peak_density) {
        return Err(OhtError::ReferencePoint { q_ref, value: diag_ref });
    }
    let scale = diag_ref.sqrt();
    let mut amplitude: Vec<Complex64> = (0..pts.len())
        .map(|i| (0..d).map(|n| col[n] * table[n][i]).sum::<Complex64>() / scale)
        .collect();
    let peak = amplitude
        .iter()
        .copied()
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = Complex64::from_polar(1.0, -peak.arg());
    amplitude.iter_mut().for_each(|a| *a *= phase);
    Ok(WavefunctionSamples { q_axis: *q_axis, amplitude, purity })
}

/// Mean and variance of q_θ and p_θ computed from ρ.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureMoments {
    pub mean_q: f64,
    pub var_q: f64,
    pub mean_p: f64,
    pub var_p: f64,
}

pub fn quadrature_moments(rho: &DensityMatrix, theta: f64) -> QuadratureMoments {
    let d = rho.dim();
    let a = annihilation(d) * Complex64::from_polar(1.0, -theta);
    let ad = a.adjoint();
    let s = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
    let q = (&a + &ad) * s;
    let p = (&a - &ad) * (s * Complex64::new(0.0, -1.0));
    let ev = |op: &DMatrix<Complex64>| rho.expect(op).re / rho.trace();
    let (mq, mp) = (ev(&q), ev(&p));
    // Drop the top row/column of the squared operators, where truncation
    // corrupts a†a.
    let trim = |op: DMatrix<Complex64>| {
        let mut o = op;
        for k in 0..d {
            o[(d - 1, k)] = Complex64::new(0.0, 0.0);
            o[(k, d - 1)] = Complex64::new(0.0, 0.0);
        }
        o
    };
    let q2 = trim(&q * &q);
    let p2 = trim(&p * &p);
    QuadratureMoments { mean_q: mq, var_q: ev(&q2) - mq * mq, mean_p: mp, var_p: ev(&p2) - mp * mp }
}
