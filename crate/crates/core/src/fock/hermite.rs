//! Harmonic-oscillator eigenfunctions and the orthogonal polynomials used
//! by the phase-space kernels.

use crate::error::{OhtError, Result};
use crate::grid::Axis;

/// Largest order accepted by [`hermite_psi`].
pub const HERMITE_MAX_ORDER: usize = 200;

const RESCALE: f64 = 1e150;

/// ψ_n(q) with ψ₀(q) = π^(-1/4) exp(-q²/2).
pub fn hermite_psi(n: usize, q_axis: &Axis) -> Result<Vec<f64>> {
    hermite_psi_at(n, &q_axis.points())
}

pub fn hermite_psi_at(n: usize, points: &[f64]) -> Result<Vec<f64>> {
    check_order(n)?;
    Ok(points.iter().map(|&q| psi_all(n, q)[n]).collect())
}

/// Table `t[n][i] = ψ_n(points[i])` for `n = 0..=n_max`.
pub fn hermite_table(n_max: usize, points: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_order(n_max)?;
    let mut table = vec![vec![0.0; points.len()]; n_max + 1];
    for (i, &q) in points.iter().enumerate() {
        for (n, v) in psi_all(n_max, q).into_iter().enumerate() {
            table[n][i] = v;
        }
    }
    Ok(table)
}

fn check_order(n: usize) -> Result<()> {
    if n > HERMITE_MAX_ORDER {
        return Err(OhtError::HermiteOrder { n, max: HERMITE_MAX_ORDER });
    }
    Ok(())
}

/// All ψ_0..ψ_n at a single point. The recurrence runs on values scaled by
/// exp(q²/2), with a running log-scale so that neither the Gaussian factor
/// nor the polynomial growth leaves the f64 range.
pub fn psi_all(n_max: usize, q: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    let mut log_scale = -0.5 * q * q - 0.25 * std::f64::consts::PI.ln();
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut stored_scale = vec![0.0; n_max + 1];
    out[0] = cur;
    stored_scale[0] = log_scale;
    for n in 1..=n_max {
        let nf = n as f64;
        let next = (2.0 / nf).sqrt() * q * cur - ((nf - 1.0) / nf).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            log_scale += RESCALE.ln();
        }
        out[n] = cur;
        stored_scale[n] = log_scale;
    }
    for (v, s) in out.iter_mut().zip(stored_scale) {
        *v = if *v == 0.0 { 0.0 } else { v.signum() * (v.abs().ln() + s).exp() };
    }
    out
}

/// Physicists' Hermite polynomials H_0..H_n at `x`.
pub fn hermite_poly_all(n_max: usize, x: f64) -> Vec<f64> {
    let mut h = vec![0.0; n_max + 1];
    h[0] = 1.0;
    if n_max >= 1 {
        h[1] = 2.0 * x;
    }
    for n in 1..n_max {
        h[n + 1] = 2.0 * x * h[n] - 2.0 * n as f64 * h[n - 1];
    }
    h
}

/// Generalized Laguerre polynomials L_0^(k)..L_n^(k) at `x`.
pub fn laguerre_all(n_max: usize, k: usize, x: f64) -> Vec<f64> {
    let k = k as f64;
    let mut l = vec![0.0; n_max + 1];
    l[0] = 1.0;
    if n_max >= 1 {
        l[1] = 1.0 + k - x;
    }
    for n in 1..n_max {
        let nf = n as f64;
        l[n + 1] = ((2.0 * nf + 1.0 + k - x) * l[n] - (nf + k) * l[n - 1]) / (nf + 1.0);
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ground_state_normalization_at_origin() {
        let v = hermite_psi_at(0, &[0.0]).unwrap();
        assert_relative_eq!(v[0], std::f64::consts::PI.powf(-0.25), epsilon = 1e-15);
        assert_relative_eq!(v[0], 0.7511255444649425, epsilon = 1e-15);
    }

    #[test]
    fn odd_orders_vanish_at_origin() {
        let v = hermite_psi_at(1, &[0.0]).unwrap();
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn order_ten_is_normalized() {
        let ax = Axis::symmetric(10.0, 4001).unwrap();
        let psi = hermite_psi(10, &ax).unwrap();
        let norm: f64 = psi.iter().zip(ax.simpson_weights()).map(|(p, w)| p * p * w).sum();
        assert!((norm - 1.0).abs() < 1e-6, "norm {norm}");
    }

    #[test]
    fn orthonormal_up_to_order_200() {
        let ax = Axis::symmetric(25.0, 20001).unwrap();
        let w = ax.simpson_weights();
        let t = hermite_table(200, &ax.points()).unwrap();
        for (a, b) in [(200, 200), (199, 199), (150, 152), (200, 198)] {
            let s: f64 = (0..ax.n).map(|i| t[a][i] * t[b][i] * w[i]).sum();
            let expect = if a == b { 1.0 } else { 0.0 };
            assert!((s - expect).abs() < 1e-8, "<{a}|{b}> = {s}");
        }
        assert!(t.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn order_above_bound_is_an_error() {
        let ax = Axis::symmetric(1.0, 3).unwrap();
        assert!(matches!(hermite_psi(201, &ax), Err(OhtError::HermiteOrder { n: 201, .. })));
    }

    #[test]
    fn far_tail_underflows_to_zero_not_nan() {
        let v = psi_all(200, 60.0);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn hermite_polynomials_match_closed_forms() {
        let x = 0.7;
        let h = hermite_poly_all(4, x);
        assert_relative_eq!(h[2], 4.0 * x * x - 2.0, epsilon = 1e-14);
        assert_relative_eq!(h[4], 16.0 * x.powi(4) - 48.0 * x * x + 12.0, epsilon = 1e-13);
    }

    #[test]
    fn laguerre_matches_closed_forms() {
        let x = 1.3;
        let l = laguerre_all(2, 1, x);
        assert_relative_eq!(l[1], 2.0 - x, epsilon = 1e-14);
        assert_relative_eq!(l[2], (x * x - 6.0 * x + 6.0) / 2.0, epsilon = 1e-14);
    }
}
