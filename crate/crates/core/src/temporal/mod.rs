//! Time-domain LO gating of classical signal envelopes: linear optical
//! sampling, exact band-limited recovery and gated time-frequency maps.
//!
//! Fourier convention: φ̃(ω) = ∫ e^{iωt} φ(t) dt, so a carrier at ν is
//! written e^{−iνt}. Signals live on a periodic time grid of N samples.

mod sampling;
mod tfmap;

pub use sampling::{
    bandlimited_exact_recovery, linear_optical_sampling, recover_envelope, relative_rms, SamplingMethod,
    MIN_POINTS_PER_INVERSE_BAND,
};
pub use tfmap::{time_frequency_map, TimeFrequencyMap};

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, OhtError, Result};
use crate::grid::Axis;

/// Relative spectral amplitude regarded as zero outside a declared band.
pub const BAND_TOL: f64 = 1e-10;
/// Half-extent of the sinc gate in zero crossings per side.
pub const SINC_LOBES: f64 = 40.0;
/// Fraction of the sinc half-extent covered by the raised-cosine taper.
pub const SINC_TAPER: f64 = 0.5;

/// Complex envelope φ_S(t) on a periodic grid with carrier ν and, when
/// declared band-limited, bandwidth B.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSignal {
    pub t_axis: Axis,
    pub phi: Vec<Complex64>,
    pub nu: f64,
    pub bandwidth: Option<f64>,
}

pub(crate) struct Dft {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Dft {
    pub(crate) fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Self { fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n) }
    }

    /// Σ_n x_n e^{−2πikn/N}.
    pub(crate) fn forward(&self, x: &mut [Complex64]) {
        self.fwd.process(x);
    }

    /// Σ_n x_n e^{+2πikn/N}.
    pub(crate) fn inverse(&self, x: &mut [Complex64]) {
        self.inv.process(x);
    }
}

/// ω_k = 2πk/(N dt) with k = 0..N−1 read as signed (k ≥ N/2 negative).
pub(crate) fn omega_of_bin(k: usize, n: usize, dt: f64) -> f64 {
    let ks = if k >= n.div_ceil(2) { k as i64 - n as i64 } else { k as i64 };
    2.0 * PI * ks as f64 / (n as f64 * dt)
}

/// Wraps `x` into [−L/2, L/2).
pub(crate) fn wrap(x: f64, period: f64) -> f64 {
    x - period * (x / period + 0.5).floor()
}

impl TemporalSignal {
    pub fn new(t_axis: Axis, phi: Vec<Complex64>, nu: f64, bandwidth: Option<f64>) -> Result<Self> {
        if phi.len() != t_axis.n {
            return invalid(format!("{} samples for a {}-point time axis", phi.len(), t_axis.n));
        }
        if let Some(b) = bandwidth {
            if !(b > 0.0 && b.is_finite()) {
                return invalid("bandwidth must be positive");
            }
        }
        if phi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("non-finite envelope sample");
        }
        let s = Self { t_axis, phi, nu, bandwidth };
        if bandwidth.is_some() && !s.is_band_limited() {
            return invalid(format!(
                "declared band [{}, {}] leaks {:.3e} of the spectral energy",
                nu - bandwidth.unwrap() / 2.0,
                nu + bandwidth.unwrap() / 2.0,
                s.out_of_band_fraction(nu, bandwidth.unwrap())
            ));
        }
        Ok(s)
    }

    pub fn from_fn(t_axis: Axis, nu: f64, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new(t_axis, t_axis.points().into_iter().map(f).collect(), nu, None)
    }

    /// Builds φ from its spectrum Φ(ω) sampled on the grid's DFT frequencies,
    /// so the discrete spectrum equals Φ exactly.
    pub fn from_spectrum(t_axis: Axis, nu: f64, bandwidth: Option<f64>, spec: impl Fn(f64) -> Complex64) -> Result<Self> {
        let n = t_axis.n;
        let dt = t_axis.step();
        let period = n as f64 * dt;
        let mut buf: Vec<Complex64> = (0..n)
            .map(|k| {
                let w = omega_of_bin(k, n, dt);
                spec(w) * Complex64::from_polar(1.0, -w * t_axis.start)
            })
            .collect();
        Dft::new(n).forward(&mut buf);
        buf.iter_mut().for_each(|z| *z /= period);
        Self::new(t_axis, buf, nu, bandwidth)
    }

    /// e^{−iωt} with ω snapped to the nearest DFT frequency of the grid.
    pub fn tone(t_axis: Axis, omega: f64) -> Result<Self> {
        let period = t_axis.n as f64 * t_axis.step();
        let w = (omega * period / (2.0 * PI)).round() * 2.0 * PI / period;
        Self::from_fn(t_axis, w, |t| Complex64::from_polar(1.0, -w * t))
    }

    /// Pulse with a smooth compactly supported spectrum of full width
    /// `width` about ν, quadratic spectral phase `chirp` and centre `t_c`.
    pub fn chirped_pulse(t_axis: Axis, nu: f64, width: f64, chirp: f64, t_c: f64) -> Result<Self> {
        if !(width > 0.0) {
            return invalid("pulse bandwidth must be positive");
        }
        Self::from_spectrum(t_axis, nu, Some(width), |w| {
            let x = 2.0 * (w - nu) / width;
            if x.abs() >= 1.0 {
                return Complex64::new(0.0, 0.0);
            }
            let amp = (1.0 - 1.0 / (1.0 - x * x)).exp();
            Complex64::from_polar(amp, 0.5 * chirp * (w - nu).powi(2) + w * t_c)
        })
    }

    pub fn dt(&self) -> f64 {
        self.t_axis.step()
    }

    pub fn period(&self) -> f64 {
        self.t_axis.n as f64 * self.dt()
    }

    /// (ω_k, φ̃(ω_k)) in DFT bin order.
    pub fn spectrum(&self) -> Vec<(f64, Complex64)> {
        let n = self.t_axis.n;
        let dt = self.dt();
        let mut buf = self.phi.clone();
        Dft::new(n).inverse(&mut buf);
        buf.into_iter()
            .enumerate()
            .map(|(k, z)| {
                let w = omega_of_bin(k, n, dt);
                (w, z * dt * Complex64::from_polar(1.0, w * self.t_axis.start))
            })
            .collect()
    }

    /// Fraction of spectral energy outside [ν−B/2, ν+B/2].
    pub fn out_of_band_fraction(&self, nu: f64, b: f64) -> f64 {
        let spec = self.spectrum();
        let total: f64 = spec.iter().map(|(_, z)| z.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        spec.iter().filter(|(w, _)| (w - nu).abs() > b / 2.0).map(|(_, z)| z.norm_sqr()).sum::<f64>() / total
    }

    /// Whether the spectrum vanishes (≤ BAND_TOL relative) outside the
    /// declared band; false when no band is declared.
    pub fn is_band_limited(&self) -> bool {
        let Some(b) = self.bandwidth else { return false };
        let spec = self.spectrum();
        let peak = spec.iter().map(|(_, z)| z.norm()).fold(0.0, f64::max);
        spec.iter().filter(|(w, _)| (w - self.nu).abs() > b / 2.0 + 1e-12).all(|(_, z)| z.norm() <= BAND_TOL * peak)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_complex_csv(out, &self.t_axis, &self.phi)
    }

    /// Reads `t,re,im`; the time column must be uniform.
    pub fn read_csv<R: BufRead>(input: R, nu: f64, bandwidth: Option<f64>) -> Result<Self> {
        let (axis, phi) = read_complex_csv(input)?;
        Self::new(axis, phi, nu, bandwidth)
    }
}

pub(crate) fn write_complex_csv<W: Write>(mut out: W, axis: &Axis, z: &[Complex64]) -> Result<()> {
    writeln!(out, "t,re,im")?;
    for (t, v) in axis.points().iter().zip(z) {
        writeln!(out, "{t},{},{}", v.re, v.im)?;
    }
    Ok(())
}

pub(crate) fn read_complex_csv<R: BufRead>(input: R) -> Result<(Axis, Vec<Complex64>)> {
    let mut ts = Vec::new();
    let mut zs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "t,re,im" {
                return Err(OhtError::Format(format!("expected header t,re,im, found {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| OhtError::Format(format!("line {}: {e}", i + 1)))?;
        if f.len() != 3 {
            return Err(OhtError::Format(format!("line {}: expected 3 columns", i + 1)));
        }
        ts.push(f[0]);
        zs.push(Complex64::new(f[1], f[2]));
    }
    if ts.len() < 2 {
        return Err(OhtError::Format("need at least two samples".into()));
    }
    let axis = Axis::new(ts[0], *ts.last().unwrap(), ts.len())?;
    let h = axis.step();
    if ts.iter().enumerate().any(|(i, t)| (t - axis.at(i)).abs() > 1e-9 * h.max(t.abs())) {
        return Err(OhtError::Format("time column is not uniformly spaced".into()));
    }
    Ok((axis, zs))
}

/// Real gate envelope h_L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GateKind {
    /// h(s) ∝ e^{−s²/(2σ²)}.
    Gaussian { sigma: f64 },
    /// Flat spectrum of width B: h(s) ∝ sin(Bs/2)/s, truncated with a taper.
    SincBandlimited { bandwidth: f64 },
    /// h(s) ∝ e^{γs} for s < 0, zero after the gate time.
    OneSidedExponential { gamma: f64 },
}

impl GateKind {
    pub fn validate(&self) -> Result<()> {
        let p = match *self {
            Self::Gaussian { sigma } => sigma,
            Self::SincBandlimited { bandwidth } => bandwidth,
            Self::OneSidedExponential { gamma } => gamma,
        };
        if !(p > 0.0 && p.is_finite()) {
            return invalid(format!("gate parameter must be positive: {self:?}"));
        }
        Ok(())
    }

    /// Half-width beyond which the envelope is treated as zero.
    pub fn support(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } => 12.0 * sigma,
            Self::SincBandlimited { bandwidth } => SINC_LOBES * 2.0 * PI / bandwidth,
            Self::OneSidedExponential { gamma } => 20.0 / gamma,
        }
    }

    fn raw(&self, s: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => (-(s * s) / (2.0 * sigma * sigma)).exp() / (PI * sigma * sigma).powf(0.25),
            Self::SincBandlimited { bandwidth: b } => {
                let t_max = self.support();
                if s.abs() >= t_max {
                    return 0.0;
                }
                let core = if s.abs() < 1e-12 { b / 2.0 } else { (b * s / 2.0).sin() / s };
                let flat = t_max * (1.0 - SINC_TAPER);
                let taper = if s.abs() <= flat { 1.0 } else { 0.5 * (1.0 + (PI * (s.abs() - flat) / (t_max - flat)).cos()) };
                (2.0 / (PI * b)).sqrt() * core * taper
            }
            Self::OneSidedExponential { gamma } => {
                if s < 0.0 && s > -self.support() {
                    (2.0 * gamma).sqrt() * (gamma * s).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// LO temporal function f_L(t) = e^{−iω_L t} h_L(t − τ), unit L² norm.
#[derive(Debug, Clone, PartialEq)]
pub struct GateFunction {
    pub kind: GateKind,
    pub omega_l: f64,
    pub delay: f64,
    scale: f64,
}

impl GateFunction {
    pub fn new(kind: GateKind, omega_l: f64, delay: f64) -> Result<Self> {
        kind.validate()?;
        if !omega_l.is_finite() || !delay.is_finite() {
            return invalid("gate frequency and delay must be finite");
        }
        let scale = match kind {
            GateKind::SincBandlimited { bandwidth } => {
                let ds = 2.0 * PI / bandwidth / 256.0;
                let m = (kind.support() / ds).ceil() as i64;
                let norm2: f64 = (-m..=m).map(|i| kind.raw(i as f64 * ds).powi(2)).sum::<f64>() * ds;
                1.0 / norm2.sqrt()
            }
            _ => 1.0,
        };
        Ok(Self { kind, omega_l, delay, scale })
    }

    /// Sinc gate with its flat band centred on ν.
    pub fn sinc(bandwidth: f64, nu: f64) -> Result<Self> {
        Self::new(GateKind::SincBandlimited { bandwidth }, nu, 0.0)
    }

    pub fn envelope(&self, s: f64) -> f64 {
        self.scale * self.kind.raw(s)
    }

    pub fn value(&self, t: f64) -> Complex64 {
        Complex64::from_polar(self.envelope(t - self.delay), -self.omega_l * t)
    }

    pub fn support(&self) -> f64 {
        self.kind.support() + self.delay.abs()
    }

    /// Samples f_L on the axis.
    pub fn sample(&self, axis: &Axis) -> Vec<Complex64> {
        axis.points().into_iter().map(|t| self.value(t)).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W, axis: &Axis) -> Result<()> {
        write_complex_csv(out, axis, &self.sample(axis))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis() -> Axis {
        let n = 4096;
        Axis::new(-204.8, -204.8 + 0.1 * (n - 1) as f64, n).unwrap()
    }

    #[test]
    fn gates_have_unit_norm() {
        let fine = Axis::new(-400.0, 400.0, 160_001).unwrap();
        for kind in [
            GateKind::Gaussian { sigma: 2.0 },
            GateKind::SincBandlimited { bandwidth: 1.0 },
            GateKind::OneSidedExponential { gamma: 0.5 },
        ] {
            let g = GateFunction::new(kind, 1.3, 0.7).unwrap();
            let n2: f64 = g.sample(&fine).iter().map(|z| z.norm_sqr()).sum::<f64>() * fine.step();
            assert!((n2 - 1.0).abs() < 3e-3, "{kind:?}: {n2}");
        }
        assert!(GateFunction::new(GateKind::Gaussian { sigma: 0.0 }, 0.0, 0.0).is_err());
    }

    #[test]
    fn spectrum_construction_is_exact() {
        let s = TemporalSignal::chirped_pulse(axis(), 2.0, 0.9, 20.0, 5.0).unwrap();
        assert!(s.is_band_limited());
        assert!(s.out_of_band_fraction(2.0, 0.9) < 1e-25);
        assert!(s.out_of_band_fraction(2.0, 0.5) > 1e-3);
        let peak = s.phi.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(s.phi[0].norm() < 1e-4 * peak, "{}", s.phi[0].norm() / peak);
        let bad = TemporalSignal::new(s.t_axis, s.phi.clone(), 2.0, Some(0.5));
        assert!(bad.is_err());
        let tone = TemporalSignal::tone(axis(), 1.0).unwrap();
        let spec = tone.spectrum();
        let (w, z) = spec.iter().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap();
        assert!((w - tone.nu).abs() < 1e-12 && (z.norm() - tone.period()).abs() < 1e-8);
    }

    #[test]
    fn csv_round_trip() {
        let s = TemporalSignal::chirped_pulse(axis(), 0.0, 0.9, 5.0, 0.0).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = TemporalSignal::read_csv(&buf[..], 0.0, Some(0.9)).unwrap();
        assert_eq!(back.phi, s.phi);
        assert!(TemporalSignal::read_csv(&b"t,re,im\n0,1,0\n1,1,0\n3,1,0\n"[..], 0.0, None).is_err());
    }
}
