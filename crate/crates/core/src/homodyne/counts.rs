use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use super::detector::DetectorModel;
use crate::error::{invalid, OhtError, Result};
use crate::fock::{StateKind, StateSpec};

/// Errors unless `spec` has a nonnegative P function.
pub fn check_classical(spec: &StateSpec) -> Result<()> {
    if spec.is_classical() {
        Ok(())
    } else {
        Err(OhtError::UnsupportedState(format!(
            "{:?} has no positive P representation; photon-counting simulation covers vacuum, coherent and thermal light",
            spec.kind
        )))
    }
}

/// Draws a coherent amplitude β from the Glauber P function of `spec`.
pub fn sample_p_amplitude<R: Rng>(spec: &StateSpec, rng: &mut R) -> Result<Complex64> {
    match spec.kind {
        StateKind::Vacuum => Ok(Complex64::new(0.0, 0.0)),
        StateKind::Coherent { alpha } => Ok(alpha),
        StateKind::Thermal { nbar } => {
            let s = (nbar / 2.0).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Ok(Complex64::new(s * re, s * im))
        }
        _ => check_classical(spec).map(|_| Complex64::new(0.0, 0.0)),
    }
}

fn poisson<R: Rng>(mean: f64, rng: &mut R) -> Result<i64> {
    if mean < 0.0 || !mean.is_finite() {
        return Err(OhtError::InvalidInput(format!("negative or non-finite count rate {mean}")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| OhtError::Numerical(e.to_string()))?;
    let x: f64 = d.sample(rng);
    Ok(x as i64)
}

fn electronic<R: Rng>(sigma: f64, rng: &mut R) -> i64 {
    if sigma == 0.0 {
        return 0;
    }
    let z: f64 = Normal::new(0.0, sigma).expect("finite sigma").sample(rng);
    z.round() as i64
}

/// Mean photoelectron numbers at the two diodes for a classical beat with
/// mean quadrature `q`.
pub fn diode_means(q: f64, det: &DetectorModel) -> (f64, f64) {
    let lo = det.lo_mean_photons;
    let eps = det.balance_imbalance;
    let beat = det.eta_eff() * lo.sqrt() * q / 2f64.sqrt();
    (det.eta_q * lo * (1.0 + eps) / 2.0 + beat, det.eta_q * lo * (1.0 - eps) / 2.0 - beat)
}

/// Raw photoelectron numbers (n1, n2) of one pulse: Poisson around the
/// diode means, plus rounded Gaussian electronic noise per channel.
pub fn detector_counts<R: Rng>(q_ideal: f64, det: &DetectorModel, rng: &mut R) -> Result<(i64, i64)> {
    let (m1, m2) = diode_means(q_ideal, det);
    if m1 < 0.0 || m2 < 0.0 {
        return invalid(format!("negative mean photoelectron rate ({m1:.3e}, {m2:.3e}); LO too weak for this signal"));
    }
    let n1 = poisson(m1, rng)? + electronic(det.sigma_e, rng);
    let n2 = poisson(m2, rng)? + electronic(det.sigma_e, rng);
    Ok((n1, n2))
}

/// Exact law of n₋ = n₁ − n₂ for a coherent signal: a Skellam distribution
/// tabulated over `k_min ..= k_min + pmf.len() − 1`.
#[derive(Debug, Clone)]
pub struct SkellamPmf {
    pub mu1: f64,
    pub mu2: f64,
    pub k_min: i64,
    pub pmf: Vec<f64>,
}

impl SkellamPmf {
    pub fn new(mu1: f64, mu2: f64) -> Result<Self> {
        if !(mu1 >= 0.0 && mu2 >= 0.0 && mu1.is_finite() && mu2.is_finite()) || mu1 + mu2 == 0.0 {
            return invalid(format!("Skellam means ({mu1}, {mu2}) must be ≥ 0 and not both zero"));
        }
        let sd = (mu1 + mu2).sqrt();
        let span = (14.0 * sd + 30.0).ceil() as i64;
        let centre = (mu1 - mu2).round() as i64;
        let k_min = (centre - span).max(if mu1 == 0.0 { -(mu2 + 40.0 * mu2.sqrt() + 40.0) as i64 } else { i64::MIN / 4 });
        let k_min = if mu2 == 0.0 { k_min.max(0) } else { k_min };
        let k_max = centre + span;
        let pmf = if mu1 == 0.0 || mu2 == 0.0 {
            let (mu, sign) = if mu2 == 0.0 { (mu1, 1) } else { (mu2, -1) };
            (k_min..=k_max)
                .map(|k| {
                    let n = k * sign;
                    if n < 0 {
                        0.0
                    } else {
                        (n as f64 * mu.ln() - mu - ln_factorial(n as u64)).exp()
                    }
                })
                .collect()
        } else {
            let x = 2.0 * (mu1 * mu2).sqrt();
            let kmax_abs = k_min.unsigned_abs().max(k_max.unsigned_abs()) as usize;
            let ln_bessel = ln_scaled_bessel_i(kmax_abs, x);
            let base = -(mu1.sqrt() - mu2.sqrt()).powi(2);
            let half_log_ratio = 0.5 * (mu1 / mu2).ln();
            (k_min..=k_max)
                .map(|k| (base + k as f64 * half_log_ratio + ln_bessel[k.unsigned_abs() as usize]).exp())
                .collect()
        };
        Ok(Self { mu1, mu2, k_min, pmf })
    }

    pub fn prob(&self, k: i64) -> f64 {
        let i = k - self.k_min;
        if i < 0 || i as usize >= self.pmf.len() {
            0.0
        } else {
            self.pmf[i as usize]
        }
    }

    pub fn total(&self) -> f64 {
        self.pmf.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(i, p)| (self.k_min + i as i64) as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| ((self.k_min + i as i64) as f64 - m).powi(2) * p)
            .sum()
    }

    /// Total-variation distance to the Gaussian with the same mean and
    /// variance μ₁ + μ₂, evaluated at the integers.
    pub fn total_variation_to_gaussian(&self) -> f64 {
        let mean = self.mu1 - self.mu2;
        let var = self.mu1 + self.mu2;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
        let g: Vec<f64> = (0..self.pmf.len())
            .map(|i| {
                let k = (self.k_min + i as i64) as f64;
                norm * (-(k - mean).powi(2) / (2.0 * var)).exp()
            })
            .collect();
        let gs: f64 = g.iter().sum();
        0.5 * self.pmf.iter().zip(&g).map(|(p, q)| (p - q / gs).abs()).sum::<f64>()
    }
}

/// e^{-x} I_k(x) for k = 0..=k_max.
pub fn scaled_bessel_i(k_max: usize, x: f64) -> Vec<f64> {
    ln_scaled_bessel_i(k_max, x).into_iter().map(f64::exp).collect()
}

/// ln(e^{-x} I_k(x)) for k = 0..=k_max from the ratios I_k/I_{k−1}
/// (backward continued fraction) normalized with I_0 + 2 Σ_{k≥1} I_k = e^x.
/// Stays finite where I_k itself underflows.
pub fn ln_scaled_bessel_i(k_max: usize, x: f64) -> Vec<f64> {
    if x == 0.0 {
        let mut v = vec![f64::NEG_INFINITY; k_max + 1];
        v[0] = 0.0;
        return v;
    }
    let start = k_max + 40 + (20.0 * x.sqrt()) as usize + (x.min(1e3) as usize);
    let mut ln_ratio = vec![0.0; start + 1];
    let mut r = 0.0;
    for k in (1..=start).rev() {
        r = 1.0 / (2.0 * k as f64 / x + r);
        ln_ratio[k] = r.ln();
    }
    let mut ln_rel = Vec::with_capacity(start + 1);
    let mut acc = 0.0;
    ln_rel.push(0.0);
    for lr in &ln_ratio[1..] {
        acc += lr;
        ln_rel.push(acc);
    }
    let ln_i0 = -(1.0 + 2.0 * ln_rel[1..].iter().map(|l| l.exp()).sum::<f64>()).ln();
    ln_rel.truncate(k_max + 1);
    ln_rel.iter().map(|l| l + ln_i0).collect()
}

pub(crate) fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n < 256 {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    let x = n as f64 + 1.0;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
}

/// Exact difference-count law for a coherent signal `alpha` against the LO
/// at phase `theta`. Mode mismatch scales the beat amplitude by η_LS.
pub fn skellam_difference_pdf(spec: &StateSpec, theta: f64, det: &DetectorModel) -> Result<SkellamPmf> {
    det.validate()?;
    let alpha = match spec.kind {
        StateKind::Vacuum => Complex64::new(0.0, 0.0),
        StateKind::Coherent { alpha } => alpha,
        _ => {
            return Err(OhtError::UnsupportedState(format!(
                "exact counting law is implemented for coherent inputs only, got {:?}",
                spec.kind
            )))
        }
    };
    let lo = det.lo_mean_photons;
    let t = (1.0 + det.balance_imbalance) / 2.0;
    let r = 1.0 - t;
    let beat = 2.0 * (t * r).sqrt() * det.eta_ls * lo.sqrt() * (alpha * Complex64::from_polar(1.0, -theta)).re;
    let s = alpha.norm_sqr();
    let mu1 = det.eta_q * (t * lo + r * s + beat);
    let mu2 = det.eta_q * (r * lo + t * s - beat);
    if mu1 < 0.0 || mu2 < 0.0 {
        return invalid("negative diode mean");
    }
    SkellamPmf::new(mu1, mu2)
}

/// |Σ conj(v_L) w_S Δ| for two modes normalized on the same sample grid.
pub fn mode_overlap(lo_mode: &[Complex64], sig_mode: &[Complex64], dx: f64) -> Result<f64> {
    if lo_mode.len() != sig_mode.len() || lo_mode.is_empty() {
        return invalid("mode vectors must have equal, nonzero length");
    }
    for (name, v) in [("lo_mode", lo_mode), ("sig_mode", sig_mode)] {
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx;
        if (n - 1.0).abs() > 1e-6 {
            return invalid(format!("{name} has norm {n:.6}, expected 1"));
        }
    }
    let s: Complex64 = lo_mode.iter().zip(sig_mode).map(|(v, w)| v.conj() * w).sum();
    Ok((s.norm() * dx).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vacuum_difference_variance_is_shot_noise_plus_electronic() {
        let det = DetectorModel { eta_q: 0.9, lo_mean_photons: 1e6, sigma_e: 200.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 50_000;
        let d: Vec<f64> = (0..n).map(|_| {
            let (a, b) = detector_counts(0.0, &det, &mut rng).unwrap();
            (a - b) as f64
        }).collect();
        let m = d.iter().sum::<f64>() / n as f64;
        let v = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expect = 0.9e6 + 2.0 * 200f64.powi(2);
        let se = expect * (2.0 / n as f64).sqrt();
        assert!((v - expect).abs() < 3.0 * se, "{v} vs {expect}");
    }

    #[test]
    fn beat_scaling_recovers_quadrature() {
        let det = DetectorModel { eta_q: 0.8, eta_ls: 0.9, lo_mean_photons: 1e6, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let d: Vec<f64> = (0..n).map(|_| {
            let (a, b) = detector_counts(3.0, &det, &mut rng).unwrap();
            (a - b) as f64
        }).collect();
        let m = d.iter().sum::<f64>() / n as f64;
        let expect = 2f64.sqrt() * det.eta_eff() * 1e3 * 3.0;
        let se = (0.8e6f64 / n as f64).sqrt();
        assert!((m - expect).abs() < 3.0 * se, "{m} vs {expect}");
    }

    #[test]
    fn blocked_lo_gives_no_counts() {
        let det = DetectorModel { lo_mean_photons: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert_eq!(detector_counts(0.0, &det, &mut rng).unwrap(), (0, 0));
        assert!(detector_counts(1.0, &DetectorModel { lo_mean_photons: 1.0, ..Default::default() }, &mut rng).is_err());
    }

    #[test]
    fn symmetric_skellam_at_zero_matches_bessel_series() {
        for mu in [0.3f64, 2.0, 7.5] {
            let pmf = SkellamPmf::new(mu, mu).unwrap();
            let x = 2.0 * mu;
            let mut i0 = 0.0;
            let mut term = 1.0;
            for k in 0..200 {
                if k > 0 {
                    term *= (x / 2.0).powi(2) / (k as f64).powi(2);
                }
                i0 += term;
            }
            assert!((pmf.prob(0) - (-2.0 * mu).exp() * i0).abs() < 1e-14);
            assert!((pmf.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn skellam_matches_direct_poisson_convolution() {
        let (mu1, mu2) = (900.0f64, 650.0f64);
        let pmf = SkellamPmf::new(mu1, mu2).unwrap();
        let lp = |n: i64, mu: f64| (n as f64 * mu.ln() - mu - ln_factorial(n as u64)).exp();
        for k in [-40i64, 0, 120, 250, 380] {
            let direct: f64 = (0..3000i64).filter(|n| n + k >= 0).map(|n| lp(n + k, mu1) * lp(n, mu2)).sum();
            assert!((pmf.prob(k) - direct).abs() < 1e-12 * direct.max(1e-300) + 1e-300, "k={k}");
        }
        assert!((pmf.mean() - (mu1 - mu2)).abs() < 1e-9);
        assert!((pmf.variance() - (mu1 + mu2)).abs() < 1e-6);
    }

    #[test]
    fn skellam_handles_one_sided_and_rejects_fock() {
        let p = SkellamPmf::new(3.0, 0.0).unwrap();
        assert!((p.prob(0) - (-3.0f64).exp()).abs() < 1e-15);
        assert_eq!(p.prob(-1), 0.0);
        let det = DetectorModel::default();
        assert!(matches!(skellam_difference_pdf(&StateSpec::fock(1), 0.0, &det), Err(OhtError::UnsupportedState(_))));
    }

    #[test]
    fn coherent_skellam_mean() {
        let det = DetectorModel { eta_q: 0.9, lo_mean_photons: 1e4, ..Default::default() };
        let alpha = Complex64::new(2.0, 1.0);
        let p = skellam_difference_pdf(&StateSpec::coherent(alpha), 0.3, &det).unwrap();
        assert!((p.mean() - (p.mu1 - p.mu2)).abs() < 1e-8);
        let expect = 0.9 * 2.0 * 100.0 * (alpha * Complex64::from_polar(1.0, -0.3)).re;
        assert!((p.mu1 - p.mu2 - expect).abs() < 1e-9);
    }

    #[test]
    fn strong_lo_difference_law_is_gaussian() {
        let det = DetectorModel { eta_q: 0.9, lo_mean_photons: 1e6, ..Default::default() };
        for alpha in [Complex64::new(0.0, 0.0), Complex64::new(3.0, -1.0)] {
            let p = skellam_difference_pdf(&StateSpec::coherent(alpha), 0.7, &det).unwrap();
            assert!((p.total() - 1.0).abs() < 1e-10);
            let tv = p.total_variation_to_gaussian();
            assert!(tv <= 1e-3, "tv={tv}");
        }
    }

    #[test]
    fn scaled_bessel_large_argument_asymptotics() {
        let x = 1e6;
        let v = scaled_bessel_i(10, x);
        let asym = 1.0 / (2.0 * std::f64::consts::PI * x).sqrt() * (1.0 + 1.0 / (8.0 * x));
        assert!((v[0] - asym).abs() / asym < 1e-9, "{} vs {asym}", v[0]);
    }

    #[test]
    fn mode_overlap_examples() {
        let n = 4001;
        let dx = 20.0 / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| -10.0 + i as f64 * dx).collect();
        let g = |c: f64| -> Vec<Complex64> {
            xs.iter().map(|x| Complex64::new(std::f64::consts::PI.powf(-0.25) * (-(x - c).powi(2) / 2.0).exp(), 0.0)).collect()
        };
        let odd: Vec<Complex64> = xs.iter().map(|x| Complex64::new(std::f64::consts::PI.powf(-0.25) * 2f64.sqrt() * x * (-x * x / 2.0).exp(), 0.0)).collect();
        assert!((mode_overlap(&g(0.0), &g(0.0), dx).unwrap() - 1.0).abs() < 1e-9);
        assert!(mode_overlap(&g(0.0), &odd, dx).unwrap() < 1e-12);
        assert!((mode_overlap(&g(0.0), &g(1.0), dx).unwrap() - (-0.25f64).exp()).abs() < 1e-9);
        let unnorm: Vec<Complex64> = g(0.0).iter().map(|z| z * 2.0).collect();
        assert!(mode_overlap(&unnorm, &g(0.0), dx).is_err());
    }
}
