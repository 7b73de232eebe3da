use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::planted::{FockMarginals, PhotonNumberLaw};
use super::{JointState, LOSuperposition, TwoModeState};
use crate::error::{invalid, Result};
use crate::fock::psi_all;
use crate::grid::Axis;
use crate::homodyne::{
    add_detection_noise, sample_quadratures, wrap_phase, DatasetMeta, DetectorModel, DualMeta, PhaseSchedule,
    QuadratureDataset, QuadratureSample, QuadratureSampler,
};
use crate::rng::StreamSplitter;

const CONDITIONAL_POINTS: usize = 1024;

fn check(det: &DetectorModel, n: usize) -> Result<()> {
    det.validate()?;
    if det.eta_eff() <= 0.0 {
        return invalid("effective efficiency η_q·η_LS must be positive");
    }
    if n == 0 {
        return invalid("n_samples must be positive");
    }
    Ok(())
}

pub(crate) fn dual_meta(det: &DetectorModel, lo: &LOSuperposition, seed: u64, label: String) -> DatasetMeta {
    DatasetMeta {
        dual: Some(DualMeta { alpha: lo.alpha, zeta_schedule: lo.zeta }),
        label: Some(label),
        ..DatasetMeta::new(*det, lo.theta, seed)
    }
}

/// Draws (q1 at θ, q2 at β) jointly: q1 from the exact mode-1 marginal, q2
/// from its conditional law tabulated on a grid.
struct JointSampler<'a> {
    st: &'a JointState,
    marg1: QuadratureSampler,
    axis: Axis,
    /// `psi2[g][n]`.
    psi2: Vec<Vec<f64>>,
}

impl<'a> JointSampler<'a> {
    fn new(st: &'a JointState) -> Result<Self> {
        let (_, d2) = st.dims();
        let half = 8f64.max(((2 * d2 - 1) as f64).sqrt() + 5.0);
        let axis = Axis::symmetric(half, CONDITIONAL_POINTS)?;
        let psi2 = axis.points().iter().map(|&q| psi_all(d2 - 1, q)).collect();
        Ok(Self { st, marg1: QuadratureSampler::new(&st.mode1())?, axis, psi2 })
    }

    fn sample<R: Rng>(&self, theta: f64, beta: f64, rng: &mut R) -> (f64, f64) {
        let (d1, d2) = self.st.dims();
        let rho = self.st.elements();
        let q1 = self.marg1.sample(theta, rng.gen());
        let w: Vec<Complex64> = psi_all(d1 - 1, q1)
            .into_iter()
            .enumerate()
            .map(|(m, p)| Complex64::from_polar(p, -(m as f64) * theta))
            .collect();
        let mut c = vec![0.0; d2 * d2];
        for m2 in 0..d2 {
            for n2 in 0..d2 {
                let mut b = Complex64::new(0.0, 0.0);
                for m1 in 0..d1 {
                    for n1 in 0..d1 {
                        b += w[m1] * w[n1].conj() * rho[(m1 * d2 + m2, n1 * d2 + n2)];
                    }
                }
                c[m2 * d2 + n2] = (b * Complex64::from_polar(1.0, (n2 as f64 - m2 as f64) * beta)).re;
            }
        }
        let dens: Vec<f64> = self
            .psi2
            .iter()
            .map(|p| {
                let mut s = 0.0;
                for m in 0..d2 {
                    let row: f64 = (0..d2).map(|n| c[m * d2 + n] * p[n]).sum();
                    s += p[m] * row;
                }
                s.max(0.0)
            })
            .collect();
        let h = self.axis.step();
        let mut cum = vec![0.0; dens.len()];
        for j in 1..dens.len() {
            cum[j] = cum[j - 1] + 0.5 * h * (dens[j - 1] + dens[j]);
        }
        let target = rng.gen::<f64>() * cum[cum.len() - 1];
        let j = cum.partition_point(|&v| v <= target).clamp(1, cum.len() - 1);
        let (lo, hi) = (cum[j - 1], cum[j]);
        let frac = if hi > lo { ((target - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
        (q1, self.axis.at(j - 1) + frac * h)
    }
}

/// Dual-LO record: per pulse Q = cos α q1θ + sin α q2β with β = θ − ζ,
/// followed by the single-mode detection noise.
pub fn combined_quadrature_samples(
    st: &TwoModeState,
    lo: &LOSuperposition,
    det: &DetectorModel,
    n_samples: usize,
    seed: u64,
) -> Result<QuadratureDataset> {
    check(det, n_samples)?;
    lo.validate()?;
    st.validate()?;
    let (ca, sa) = (lo.alpha.cos(), lo.alpha.sin());
    let split = StreamSplitter::new(seed);
    let samples: Vec<QuadratureSample> = match st {
        TwoModeState::Joint(joint) => {
            let js = JointSampler::new(joint)?;
            (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = split.stream(i as u64);
                    let theta = lo.theta.theta(i, n_samples, &mut rng);
                    let zeta = lo.zeta.theta(i, n_samples, &mut rng);
                    let (q1, q2) = js.sample(theta, wrap_phase(theta - zeta), &mut rng);
                    let q = add_detection_noise(ca * q1 + sa * q2, det, &mut rng);
                    QuadratureSample { theta, q, zeta: Some(zeta) }
                })
                .collect()
        }
        TwoModeState::Planted(law) => planted_samples(law, lo, det, n_samples, &split, |_| (ca, sa))?,
    };
    let label = match st {
        TwoModeState::Joint(j) => format!("joint fock {}x{}", j.dims().0, j.dims().1),
        TwoModeState::Planted(law) => format!("planted {}", serde_json::to_string(law)?),
    };
    Ok(QuadratureDataset::new(samples, dual_meta(det, lo, seed, label)))
}

/// Planted-law pulses; `weights(ζ)` gives |c1|, |c2| of the detected mode.
pub(crate) fn planted_samples(
    law: &PhotonNumberLaw,
    lo: &LOSuperposition,
    det: &DetectorModel,
    n_samples: usize,
    split: &StreamSplitter,
    weights: impl Fn(f64) -> (f64, f64) + Sync,
) -> Result<Vec<QuadratureSample>> {
    law.validate()?;
    let fm = FockMarginals::new(law.n_cap())?;
    Ok((0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = split.stream(i as u64);
            let theta = lo.theta.theta(i, n_samples, &mut rng);
            let zeta = lo.zeta.theta(i, n_samples, &mut rng);
            let (n1, n2) = law.draw(&mut rng);
            let (w1, w2) = weights(zeta);
            let q = w1 * fm.sample(n1, rng.gen()) + w2 * fm.sample(n2, rng.gen());
            QuadratureSample { theta, q: add_detection_noise(q, det, &mut rng), zeta: Some(zeta) }
        })
        .collect())
}

/// Single-LO record of mode â3 after the SU(2) map with (γ, ζ).
pub fn grips_quadrature_samples(
    st: &JointState,
    gamma: f64,
    zeta: f64,
    theta: &PhaseSchedule,
    det: &DetectorModel,
    n_samples: usize,
    seed: u64,
) -> Result<QuadratureDataset> {
    TwoModeState::Joint(st.clone()).validate()?;
    let mode3 = st.grips(gamma, zeta).mode1();
    let mut ds = sample_quadratures(&mode3, theta, det, n_samples, seed)?;
    ds.samples.iter_mut().for_each(|s| s.zeta = Some(zeta));
    ds.meta.dual = Some(DualMeta { alpha: gamma / 2.0, zeta_schedule: PhaseSchedule::Fixed { phase: zeta } });
    ds.meta.label = Some(format!("grips gamma={gamma} zeta={zeta}"));
    Ok(ds)
}

/// Full joint record of a planted source: numbers and both quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointQuadrature {
    pub n1: u64,
    pub n2: u64,
    pub q1: f64,
    pub q2: f64,
}

pub fn planted_joint_quadratures(law: &PhotonNumberLaw, n_samples: usize, seed: u64) -> Result<Vec<JointQuadrature>> {
    law.validate()?;
    let fm = FockMarginals::new(law.n_cap())?;
    let split = StreamSplitter::new(seed);
    Ok((0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = split.stream(i as u64);
            let (n1, n2) = law.draw(&mut rng);
            JointQuadrature { n1, n2, q1: fm.sample(n1, rng.gen()), q2: fm.sample(n2, rng.gen()) }
        })
        .collect())
}
