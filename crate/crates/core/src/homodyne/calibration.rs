use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::counts::detector_counts;
use super::detector::DetectorModel;
use crate::error::{invalid, Result};
use crate::rng::StreamSplitter;

/// Reduced χ² above which the linear noise model is flagged.
pub const NONLINEARITY_CHI2: f64 = 5.0;

/// Sample statistics of one LO level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationPoint {
    pub lo_mean_photons: f64,
    pub mean_v_plus: f64,
    pub var_v_minus: f64,
    pub n_pulses: usize,
}

/// Straight-line fit of Var(V₋) against ⟨V₊⟩.
///
/// The intercept is 2σ_e²/g² because both channels contribute σ_e; the
/// reported `sigma_e_estimate` is per channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationFit {
    pub gain_estimate: f64,
    pub gain_std_err: f64,
    pub sigma_e_estimate: f64,
    pub sigma_e_std_err: f64,
    pub slope: f64,
    pub slope_std_err: f64,
    pub intercept: f64,
    pub intercept_std_err: f64,
    pub reduced_chi2: f64,
    pub nonlinear: bool,
    pub table: Vec<CalibrationPoint>,
}

/// Simulates vacuum-signal voltage pairs V = N/g at each LO level and fits
/// Var(V₋) = ⟨V₊⟩/g + 2σ_e²/g².
pub fn calibration_curve(
    det: &DetectorModel,
    lo_levels: &[f64],
    pulses_per_level: usize,
    seed: u64,
) -> Result<CalibrationFit> {
    det.validate()?;
    let mut distinct: Vec<f64> = lo_levels.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return invalid(format!("calibration needs ≥ 3 distinct LO levels, got {}", distinct.len()));
    }
    if pulses_per_level < 3 {
        return invalid("calibration needs ≥ 3 pulses per level");
    }
    if lo_levels.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return invalid("LO levels must be finite and ≥ 0");
    }
    let split = StreamSplitter::new(seed);
    let g = det.gain;
    let table: Vec<CalibrationPoint> = lo_levels
        .iter()
        .enumerate()
        .map(|(li, &lo)| {
            let level = DetectorModel { lo_mean_photons: lo, ..*det };
            let level_split = split.child(li as u64);
            let pairs: Result<Vec<(f64, f64)>> = (0..pulses_per_level)
                .into_par_iter()
                .map(|i| {
                    let mut rng = level_split.stream(i as u64);
                    let (n1, n2) = detector_counts(0.0, &level, &mut rng)?;
                    let (v1, v2) = (n1 as f64 / g, n2 as f64 / g);
                    Ok((v1 + v2, v1 - v2))
                })
                .collect();
            let pairs = pairs?;
            let n = pairs.len() as f64;
            let mean_plus = pairs.iter().map(|p| p.0).sum::<f64>() / n;
            let mean_minus = pairs.iter().map(|p| p.1).sum::<f64>() / n;
            let var_minus = pairs.iter().map(|p| (p.1 - mean_minus).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(CalibrationPoint { lo_mean_photons: lo, mean_v_plus: mean_plus, var_v_minus: var_minus, n_pulses: pairs.len() })
        })
        .collect::<Result<_>>()?;
    fit_calibration(table)
}

struct LineFit {
    slope: f64,
    intercept: f64,
    cov: [[f64; 2]; 2],
    chi2: f64,
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    let s: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = s * sxx - sx * sx;
    if !(det.abs() > 0.0) || !det.is_finite() {
        return Err(crate::error::OhtError::Numerical("degenerate calibration levels".into()));
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let chi2 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * (y - slope * x - intercept).powi(2)).sum();
    Ok(LineFit { slope, intercept, cov: [[s / det, -sx / det], [-sx / det, sxx / det]], chi2 })
}

/// Weighted least squares on a calibration table. Weights are the inverse
/// variances 2y²/(n−1) of sample variances, evaluated at the model
/// prediction after an initial unweighted pass.
pub fn fit_calibration(table: Vec<CalibrationPoint>) -> Result<CalibrationFit> {
    let x: Vec<f64> = table.iter().map(|p| p.mean_v_plus).collect();
    let y: Vec<f64> = table.iter().map(|p| p.var_v_minus).collect();
    let ymax = y.iter().cloned().fold(0.0, f64::max);
    if ymax <= 0.0 {
        return invalid("all calibration variances are zero");
    }
    let mut fit = weighted_line(&x, &y, &vec![1.0; x.len()])?;
    for _ in 0..3 {
        let w: Vec<f64> = table
            .iter()
            .zip(&x)
            .map(|(p, &xi)| {
                let pred = (fit.slope * xi + fit.intercept).max(1e-9 * ymax);
                (p.n_pulses as f64 - 1.0) / (2.0 * pred * pred)
            })
            .collect();
        fit = weighted_line(&x, &y, &w)?;
    }
    if !(fit.slope > 0.0) {
        return Err(crate::error::OhtError::Numerical(format!("non-positive calibration slope {}", fit.slope)));
    }
    let dof = (table.len() - 2).max(1) as f64;
    let reduced_chi2 = fit.chi2 / dof;
    let slope_se = fit.cov[0][0].sqrt();
    let intercept_se = fit.cov[1][1].sqrt();
    let gain = 1.0 / fit.slope;
    let gain_se = slope_se / (fit.slope * fit.slope);
    let sigma_e = gain * (fit.intercept.max(0.0) / 2.0).sqrt();
    // δσ from the intercept only; the gain term is second order
    let sigma_e_se = if sigma_e > 0.0 {
        gain * intercept_se / (4.0 * (fit.intercept / 2.0).sqrt())
    } else {
        gain * (intercept_se / 2.0).sqrt()
    };
    Ok(CalibrationFit {
        gain_estimate: gain,
        gain_std_err: gain_se,
        sigma_e_estimate: sigma_e,
        sigma_e_std_err: sigma_e_se,
        slope: fit.slope,
        slope_std_err: slope_se,
        intercept: fit.intercept,
        intercept_std_err: intercept_se,
        reduced_chi2,
        nonlinear: reduced_chi2 > NONLINEARITY_CHI2,
        table,
    })
}

/// Precision (n_diff1 + n_diff2)/n_tot to which two channel gains can be
/// matched by the input-swap procedure.
pub fn gain_balancing_sim(n_tot: u64, n_diff1: u64, n_diff2: u64) -> Result<f64> {
    if n_tot == 0 {
        return invalid("n_tot must be positive");
    }
    Ok((n_diff1 + n_diff2) as f64 / n_tot as f64)
}

/// Result of a simulated swap-balancing run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwapBalanceRun {
    pub iterations: usize,
    /// |α − β|/α after convergence.
    pub mismatch: f64,
    /// Residual difference numbers in the two connection configurations.
    pub n_diff1: f64,
    pub n_diff2: f64,
    /// (|n_diff1| + |n_diff2|)/n_tot.
    pub bound: f64,
}

/// Simulates the iterated gain / splitter adjustment with swapped inputs.
///
/// Channel 1 has fixed gain 1, channel 2 starts at `beta0`; the splitter
/// starts at fraction `split0` of `n_tot` electrons into input 1. Gain and
/// splitter knobs move in steps of `knob_resolution` (relative), perturbed
/// by a small random set error; iteration stops when both difference
/// numbers are within `threshold` electrons.
pub fn swap_balance_run<R: Rng>(
    beta0: f64,
    split0: f64,
    n_tot: f64,
    knob_resolution: f64,
    threshold: f64,
    rng: &mut R,
) -> Result<SwapBalanceRun> {
    if !(n_tot > 0.0 && beta0 > 0.0 && (0.0..1.0).contains(&split0) && knob_resolution > 0.0 && threshold > 0.0) {
        return invalid("swap balance needs n_tot, beta0, knob_resolution, threshold > 0 and split0 in (0,1)");
    }
    let alpha = 1.0;
    let (mut beta, mut split) = (beta0, split0);
    let quantize = |v: f64| (v / knob_resolution).round() * knob_resolution;
    let diffs = |beta: f64, split: f64| {
        let q1 = n_tot * split;
        let q2 = n_tot * (1.0 - split);
        (alpha * q1 - beta * q2, alpha * q2 - beta * q1)
    };
    for it in 1..=1000 {
        let (d1, d2) = diffs(beta, split);
        if d1.abs() <= threshold && d2.abs() <= threshold {
            return Ok(SwapBalanceRun {
                iterations: it,
                mismatch: (alpha - beta).abs() / alpha,
                n_diff1: d1,
                n_diff2: d2,
                bound: (d1.abs() + d2.abs()) / n_tot,
            });
        }
        let jitter = 1.0 + knob_resolution * (rng.gen::<f64>() - 0.5);
        beta = quantize(beta + (d1 + d2) / n_tot * jitter);
        let (d1, d2) = diffs(beta, split);
        split = quantize(split + (d2 - d1) / (2.0 * n_tot * (alpha + beta)) * jitter).clamp(1e-6, 1.0 - 1e-6);
    }
    Err(crate::error::OhtError::Numerical("swap balancing did not converge in 1000 iterations".into()))
}
