use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{wrap, Dft, GateFunction, GateKind, TemporalSignal, BAND_TOL};
use crate::error::{invalid, Result};

/// Grid points required per 1/B.
pub const MIN_POINTS_PER_INVERSE_BAND: f64 = 8.0;
const ON_GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMethod {
    /// Time-domain sum per delay; any delay.
    Direct,
    /// FFT cross-correlation; delays must sit on the signal grid.
    #[default]
    Spectral,
}

fn check_resolution(sig: &TemporalSignal, gate: &GateFunction) -> Result<()> {
    let dt = sig.dt();
    let nyquist = PI / dt;
    if let Some(b) = sig.bandwidth {
        if dt * b > 1.0 / MIN_POINTS_PER_INVERSE_BAND {
            return invalid(format!(
                "aliasing: dt = {dt} gives {:.2} points per 1/B, need {MIN_POINTS_PER_INVERSE_BAND}",
                1.0 / (dt * b)
            ));
        }
        if sig.nu.abs() + b / 2.0 >= nyquist {
            return invalid(format!("aliasing: band edge {} beyond the Nyquist frequency {nyquist}", sig.nu.abs() + b / 2.0));
        }
    } else {
        let spec = sig.spectrum();
        let total: f64 = spec.iter().map(|(_, z)| z.norm_sqr()).sum();
        let high: f64 = spec.iter().filter(|(w, _)| w.abs() > 0.75 * nyquist).map(|(_, z)| z.norm_sqr()).sum();
        if total > 0.0 && high > BAND_TOL * total {
            return invalid(format!("aliasing: {:.2e} of the signal energy sits near the Nyquist frequency", high / total));
        }
    }
    match gate.kind {
        GateKind::Gaussian { sigma } if sigma < 4.0 * dt => {
            return invalid(format!("aliasing: gate width {sigma} below 4 grid steps"));
        }
        GateKind::SincBandlimited { bandwidth } => {
            if dt * bandwidth > 1.0 / MIN_POINTS_PER_INVERSE_BAND || gate.omega_l.abs() + bandwidth / 2.0 >= nyquist {
                return invalid("aliasing: sinc gate band not resolved by the time grid");
            }
        }
        _ => {}
    }
    if gate.support() >= sig.period() / 2.0 {
        return invalid(format!("gate support {} exceeds half the record length {}", gate.support(), sig.period() / 2.0));
    }
    Ok(())
}

/// Gate sampled at the periodic offsets j·dt, j = 0..N−1.
fn gate_offsets(sig: &TemporalSignal, gate: &GateFunction) -> Vec<Complex64> {
    let n = sig.t_axis.n;
    let dt = sig.dt();
    (0..n).map(|j| gate.value(wrap(j as f64 * dt, sig.period()))).collect()
}

fn grid_index(sig: &TemporalSignal, tau: f64) -> Result<usize> {
    let x = sig.t_axis.locate(tau);
    let m = x.round();
    if (x - m).abs() > ON_GRID_TOL || m < 0.0 || m as usize >= sig.t_axis.n {
        return invalid(format!("delay {tau} is not a point of the signal grid; use the direct method"));
    }
    Ok(m as usize)
}

/// S(τ) = ∫ f_L*(t−τ) φ_S(t) dt, i.e. N_−(τ)/(−i√c α_L*), per delay.
pub fn linear_optical_sampling(
    sig: &TemporalSignal,
    gate: &GateFunction,
    taus: &[f64],
    method: SamplingMethod,
) -> Result<Vec<Complex64>> {
    check_resolution(sig, gate)?;
    let dt = sig.dt();
    let period = sig.period();
    match method {
        SamplingMethod::Direct => {
            let ts = sig.t_axis.points();
            Ok(taus
                .par_iter()
                .map(|&tau| {
                    ts.iter().zip(&sig.phi).map(|(&t, p)| gate.value(wrap(t - tau, period)).conj() * p).sum::<Complex64>() * dt
                })
                .collect())
        }
        SamplingMethod::Spectral => {
            let idx = taus.iter().map(|&t| grid_index(sig, t)).collect::<Result<Vec<_>>>()?;
            let n = sig.t_axis.n;
            let dft = Dft::new(n);
            let mut g = gate_offsets(sig, gate);
            let mut p = sig.phi.clone();
            dft.inverse(&mut g);
            dft.inverse(&mut p);
            let mut s: Vec<Complex64> = g.iter().zip(&p).map(|(a, b)| a.conj() * b).collect();
            dft.forward(&mut s);
            let c = dt / n as f64;
            Ok(idx.into_iter().map(|m| s[m] * c).collect())
        }
    }
}

/// Sinc-gate recovery φ(τ) = S(τ)/f̃_L*(ν) with no band check.
pub fn recover_envelope(sig: &TemporalSignal, b: f64, nu: f64, taus: &[f64]) -> Result<Vec<Complex64>> {
    let gate = GateFunction::sinc(b, nu)?;
    let on_grid = taus.iter().all(|&t| grid_index(sig, t).is_ok());
    let method = if on_grid { SamplingMethod::Spectral } else { SamplingMethod::Direct };
    let s = linear_optical_sampling(sig, &gate, taus, method)?;
    let dt = sig.dt();
    let f0: Complex64 = gate_offsets(sig, &gate)
        .iter()
        .enumerate()
        .map(|(j, f)| f * Complex64::from_polar(1.0, nu * wrap(j as f64 * dt, sig.period())))
        .sum::<Complex64>()
        * dt;
    Ok(s.into_iter().map(|z| z / f0.conj()).collect())
}

/// Exact recovery of a band-limited envelope with a flat-spectrum gate over
/// [ν−B/2, ν+B/2].
pub fn bandlimited_exact_recovery(sig: &TemporalSignal, b: f64, nu: f64, taus: &[f64]) -> Result<Vec<Complex64>> {
    if !sig.is_band_limited() {
        return invalid("signal is not certified band-limited");
    }
    let spec = sig.spectrum();
    let peak = spec.iter().map(|(_, z)| z.norm()).fold(0.0, f64::max);
    if spec.iter().any(|(w, z)| (w - nu).abs() > b / 2.0 && z.norm() > BAND_TOL * peak) {
        return invalid(format!("signal spectrum extends outside the gate band [{}, {}]", nu - b / 2.0, nu + b / 2.0));
    }
    recover_envelope(sig, b, nu, taus)
}

/// ‖a − b‖ / ‖b‖.
pub fn relative_rms(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}
