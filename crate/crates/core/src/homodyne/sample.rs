use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::counts::{check_classical, detector_counts, sample_p_amplitude};
use super::dataset::{DatasetMeta, QuadratureDataset, QuadratureSample};
use super::detector::{wrap_phase, DetectorModel, PhaseSchedule};
use crate::error::{invalid, Result};
use crate::fock::{psi_all, DensityMatrix, StateSpec};
use crate::grid::Axis;
use crate::rng::StreamSplitter;

/// Points in the inverse-CDF tabulation.
pub const CDF_POINTS: usize = 4096;

/// Inverse-CDF sampler of Pr(q,θ) for arbitrary θ.
///
/// Pr(q,θ) = Σ_k Re[e^{ikθ} c_k(q)] with c_0 = Σ ρ_μμ ψ_μ² and
/// c_k = 2 Σ ρ_{μ,μ+k} ψ_μ ψ_{μ+k}; the cumulative integrals of the c_k are
/// tabulated once, so the CDF at any phase costs one pass over k.
#[derive(Debug, Clone)]
pub struct QuadratureSampler {
    axis: Axis,
    dim: usize,
    /// `cum[j * dim + k]` = ∫_{q_0}^{q_j} c_k.
    cum: Vec<Complex64>,
}

impl QuadratureSampler {
    pub fn new(rho: &DensityMatrix) -> Result<Self> {
        let d = rho.dim();
        let half = 8f64.max(((2 * d - 1) as f64).sqrt() + 5.0);
        let axis = Axis::symmetric(half, CDF_POINTS)?;
        let m = rho.elements();
        let h = axis.step();
        let dens: Vec<Vec<Complex64>> = axis
            .points()
            .par_iter()
            .map(|&q| {
                let psi = psi_all(d - 1, q);
                (0..d)
                    .map(|k| {
                        let s: Complex64 = (0..d - k).map(|mu| m[(mu, mu + k)] * (psi[mu] * psi[mu + k])).sum();
                        if k == 0 {
                            s
                        } else {
                            s * 2.0
                        }
                    })
                    .collect()
            })
            .collect();
        let mut cum = vec![Complex64::new(0.0, 0.0); CDF_POINTS * d];
        for j in 1..CDF_POINTS {
            for k in 0..d {
                cum[j * d + k] = cum[(j - 1) * d + k] + (dens[j - 1][k] + dens[j][k]) * (h / 2.0);
            }
        }
        Ok(Self { axis, dim: d, cum })
    }

    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    fn cdf_at(&self, j: usize, phases: &[Complex64]) -> f64 {
        let row = &self.cum[j * self.dim..(j + 1) * self.dim];
        row.iter().zip(phases).map(|(c, e)| (c * e).re).sum()
    }

    /// Quadrature value with CDF equal to `u` at phase `theta`.
    pub fn sample(&self, theta: f64, u: f64) -> f64 {
        let mut phases = Vec::with_capacity(self.dim);
        let step = Complex64::from_polar(1.0, theta);
        let mut e = Complex64::new(1.0, 0.0);
        for _ in 0..self.dim {
            phases.push(e);
            e *= step;
        }
        let n = self.axis.n;
        let total = self.cdf_at(n - 1, &phases);
        let target = u * total;
        let (mut lo, mut hi) = (0usize, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cdf_at(mid, &phases) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let f_lo = self.cdf_at(lo, &phases);
        let f_hi = self.cdf_at(hi, &phases);
        let frac = if f_hi > f_lo { ((target - f_lo) / (f_hi - f_lo)).clamp(0.0, 1.0) } else { 0.5 };
        self.axis.at(lo) + frac * self.axis.step()
    }
}

fn check_request(det: &DetectorModel, sched: &PhaseSchedule, n_samples: usize) -> Result<()> {
    det.validate()?;
    sched.validate()?;
    if det.eta_eff() <= 0.0 {
        return invalid("effective efficiency η_q·η_LS must be positive");
    }
    if n_samples == 0 {
        return invalid("n_samples must be positive");
    }
    Ok(())
}

/// Draws one detected quadrature: ideal sample, Gaussian loss noise of
/// variance (1/η_eff − 1)/2, then electronic noise.
pub(crate) fn add_detection_noise<R: Rng>(q_ideal: f64, det: &DetectorModel, rng: &mut R) -> f64 {
    let loss_sd = det.loss_variance().sqrt();
    let elec_sd = det.electronic_sigma_q();
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    q_ideal + loss_sd * z1 + elec_sd * z2
}

/// Monte Carlo homodyne record of `rho`. Pulse `i` uses its own PRNG stream,
/// so the output is independent of thread count.
pub fn sample_quadratures(
    rho: &DensityMatrix,
    sched: &PhaseSchedule,
    det: &DetectorModel,
    n_samples: usize,
    seed: u64,
) -> Result<QuadratureDataset> {
    check_request(det, sched, n_samples)?;
    let sampler = QuadratureSampler::new(rho)?;
    let split = StreamSplitter::new(seed);
    let samples = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = split.stream(i as u64);
            let theta = sched.theta(i, n_samples, &mut rng);
            let u: f64 = rng.gen();
            let q = add_detection_noise(sampler.sample(theta, u), det, &mut rng);
            QuadratureSample::new(theta, q)
        })
        .collect();
    Ok(QuadratureDataset::new(samples, DatasetMeta::new(*det, *sched, seed)))
}

/// Same as [`sample_quadratures`] from a state spec, recording it in the
/// metadata.
pub fn sample_state(
    spec: &StateSpec,
    sched: &PhaseSchedule,
    det: &DetectorModel,
    n_samples: usize,
    seed: u64,
) -> Result<QuadratureDataset> {
    let rho = crate::fock::make_state(spec)?;
    let mut ds = sample_quadratures(&rho, sched, det, n_samples, seed)?;
    ds.meta.source = Some(*spec);
    Ok(ds)
}

/// Record produced through the photon-counting chain: per pulse a P-function
/// amplitude β is drawn, both diodes are Poisson-sampled around the beat
/// with the LO, electronic noise is added per channel and the difference is
/// scaled by 1/(√2 η_eff |α_L|). Exact for states with a positive P function.
pub fn sample_via_counts(
    spec: &StateSpec,
    sched: &PhaseSchedule,
    det: &DetectorModel,
    n_samples: usize,
    seed: u64,
) -> Result<QuadratureDataset> {
    check_request(det, sched, n_samples)?;
    if det.lo_mean_photons <= 0.0 {
        return invalid("counting chain needs a nonzero LO");
    }
    check_classical(spec)?;
    let split = StreamSplitter::new(seed);
    let scale = 1.0 / (2f64.sqrt() * det.eta_eff() * det.lo_mean_photons.sqrt());
    let samples: Result<Vec<_>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = split.stream(i as u64);
            let theta = sched.theta(i, n_samples, &mut rng);
            let beta = sample_p_amplitude(spec, &mut rng)?;
            let q_mean = 2f64.sqrt() * (beta * Complex64::from_polar(1.0, -theta)).re;
            let (n1, n2) = detector_counts(q_mean, det, &mut rng)?;
            Ok(QuadratureSample::new(wrap_phase(theta), (n1 - n2) as f64 * scale))
        })
        .collect();
    let mut meta = DatasetMeta::new(*det, *sched, seed);
    meta.source = Some(*spec);
    meta.label = Some("photon-counting chain".into());
    Ok(QuadratureDataset::new(samples?, meta))
}
