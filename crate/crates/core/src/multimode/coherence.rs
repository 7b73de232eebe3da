use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use super::planted::PhotonNumberLaw;
use super::sampling::{combined_quadrature_samples, dual_meta, planted_samples};
use super::{LOSuperposition, TwoModeState};
use crate::error::{invalid, OhtError, Result};
use crate::homodyne::{DetectorModel, QuadratureDataset};
use crate::moments::{g2_from_quadratures, Estimate};
use crate::rng::StreamSplitter;

const ALPHA_TOL: f64 = 1e-9;

/// Dual-LO records of one source at α = 0, π/4 and π/2.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeAlphaRuns {
    pub a0: QuadratureDataset,
    pub a45: QuadratureDataset,
    pub a90: QuadratureDataset,
}

impl ThreeAlphaRuns {
    pub const ALPHAS: [f64; 3] = [0.0, FRAC_PI_4, FRAC_PI_2];

    /// Three phase-randomized runs of `n` pulses each.
    pub fn simulate(st: &TwoModeState, det: &DetectorModel, n: usize, seed: u64) -> Result<Self> {
        let split = StreamSplitter::new(seed);
        let run = |k: usize| {
            let sub_seed = split.stream(k as u64).gen::<u64>();
            combined_quadrature_samples(st, &LOSuperposition::randomized(Self::ALPHAS[k]), det, n, sub_seed)
        };
        Ok(Self { a0: run(0)?, a45: run(1)?, a90: run(2)? })
    }

    fn runs(&self) -> [&QuadratureDataset; 3] {
        [&self.a0, &self.a45, &self.a90]
    }
}

/// Two-mode normally ordered correlation from the three-α method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoTimeG2 {
    pub g2: Estimate,
    pub mean_n1: Estimate,
    pub mean_n2: Estimate,
    /// Phase-averaged ⟨q1² q2²⟩.
    pub cross_q2q2: Estimate,
    pub mean_n1n2: f64,
    /// g² of each mode alone; None when its ⟨n⟩ is too small.
    pub g2_11: Option<Estimate>,
    pub g2_22: Option<Estimate>,
}

fn check_run(ds: &QuadratureDataset, alpha: f64) -> Result<Vec<f64>> {
    let dual = ds.meta.dual.ok_or_else(|| OhtError::InvalidInput("record carries no dual-LO metadata".into()))?;
    if (dual.alpha - alpha).abs() > ALPHA_TOL {
        return invalid(format!("run recorded at α = {}, expected {alpha}", dual.alpha));
    }
    if !(ds.meta.schedule.is_phase_averaging() && dual.zeta_schedule.is_phase_averaging()) {
        return Err(OhtError::PhaseCoverage(format!("run at α = {alpha} does not randomize both θ and ζ")));
    }
    if ds.len() < 3 {
        return invalid("runs need at least 3 pulses");
    }
    let s = ds.eta_eff().sqrt();
    Ok(ds.qs().map(|q| q * s).collect())
}

struct Sums {
    n: f64,
    s2: f64,
    s4: f64,
}

impl Sums {
    fn new(q: &[f64]) -> Self {
        Self { n: q.len() as f64, s2: q.iter().map(|x| x * x).sum(), s4: q.iter().map(|x| x.powi(4)).sum() }
    }

    fn moments(&self) -> (f64, f64) {
        (self.s2 / self.n, self.s4 / self.n)
    }

    fn without(&self, x: f64) -> (f64, f64) {
        let x2 = x * x;
        ((self.s2 - x2) / (self.n - 1.0), (self.s4 - x2 * x2) / (self.n - 1.0))
    }
}

/// ⟨q1²q2²⟩ = (4⟨Q⁴⟩_{π/4} − ⟨q1⁴⟩ − ⟨q2⁴⟩)/6, then
/// ⟨n1n2⟩ = ⟨q1²q2²⟩ − ⟨n1⟩/2 − ⟨n2⟩/2 − 1/4.
fn g12(a: (f64, f64), b: (f64, f64), m4c: f64) -> (f64, f64, f64) {
    let n1 = a.0 - 0.5;
    let n2 = b.0 - 0.5;
    let x = (4.0 * m4c - a.1 - b.1) / 6.0;
    let n12 = x - 0.5 * n1 - 0.5 * n2 - 0.25;
    (n12 / (n1 * n2), x, n12)
}

fn jackknife_var(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (n - 1.0) / n * v.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
}

fn sample_se(xs: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().map(|&x| f(x)).sum::<f64>() / n;
    let v = xs.iter().map(|&x| (f(x) - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v / n)
}

/// Normally ordered ⟨n1 n2⟩/(⟨n1⟩⟨n2⟩) from second and fourth moments of
/// the three runs, with delete-one jackknife errors summed over runs.
pub fn two_time_g2(runs: &ThreeAlphaRuns) -> Result<TwoTimeG2> {
    let [r0, r45, r90] = runs.runs();
    if r0.len() != r45.len() || r0.len() != r90.len() {
        return invalid(format!("mismatched sample counts {} / {} / {}", r0.len(), r45.len(), r90.len()));
    }
    let q1 = check_run(r0, 0.0)?;
    let qc = check_run(r45, FRAC_PI_4)?;
    let q2 = check_run(r90, FRAC_PI_2)?;
    let (sa, sc, sb) = (Sums::new(&q1), Sums::new(&qc), Sums::new(&q2));
    let (a, b, m4c) = (sa.moments(), sb.moments(), sc.moments().1);
    let (g, x, n12) = g12(a, b, m4c);
    let var = jackknife_var(q1.iter().map(|&v| g12(sa.without(v), b, m4c).0))
        + jackknife_var(q2.iter().map(|&v| g12(a, sb.without(v), m4c).0))
        + jackknife_var(qc.iter().map(|&v| g12(a, b, sc.without(v).1).0));
    if !var.is_finite() {
        return Err(OhtError::Numerical("mean photon numbers too small for g²".into()));
    }
    let (_, v4a) = sample_se(&q1, |v| v.powi(4));
    let (_, v4b) = sample_se(&q2, |v| v.powi(4));
    let (_, v4c) = sample_se(&qc, |v| v.powi(4));
    let (_, v2a) = sample_se(&q1, |v| v * v);
    let (_, v2b) = sample_se(&q2, |v| v * v);
    Ok(TwoTimeG2 {
        g2: Estimate { value: g, std_err: var.sqrt() },
        mean_n1: Estimate { value: a.0 - 0.5, std_err: v2a.sqrt() },
        mean_n2: Estimate { value: b.0 - 0.5, std_err: v2b.sqrt() },
        cross_q2q2: Estimate { value: x, std_err: (16.0 * v4c + v4a + v4b).sqrt() / 6.0 },
        mean_n1n2: n12,
        g2_11: g2_from_quadratures(&q1).ok(),
        g2_22: g2_from_quadratures(&q2).ok(),
    })
}

/// Polarization basis; the first mode of each pair is i, the second j.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum PolarizationBasis {
    #[serde(rename = "R/L")]
    CircularRL,
    #[serde(rename = "H/V")]
    LinearHV,
    #[serde(rename = "+45/-45")]
    Diagonal,
}

impl PolarizationBasis {
    pub const ALL: [Self; 3] = [Self::CircularRL, Self::LinearHV, Self::Diagonal];

    pub fn label(&self) -> &'static str {
        match self {
            Self::CircularRL => "R/L",
            Self::LinearHV => "H/V",
            Self::Diagonal => "+45/-45",
        }
    }

    /// Components of the two basis modes on (â_R, â_L).
    pub fn modes(&self) -> [[Complex64; 2]; 2] {
        let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let i = Complex64::new(0.0, FRAC_1_SQRT_2);
        let h = [r, r];
        let v = [-i, i];
        match self {
            Self::CircularRL => [[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]],
            Self::LinearHV => [h, v],
            Self::Diagonal => [[(h[0] + v[0]) * r, (h[1] + v[1]) * r], [(h[0] - v[0]) * r, (h[1] - v[1]) * r]],
        }
    }
}

/// Three-α runs for every basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationRuns {
    pub runs: Vec<(PolarizationBasis, ThreeAlphaRuns)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarizationRow {
    pub basis: PolarizationBasis,
    pub mean_n_i: Estimate,
    pub mean_n_j: Estimate,
    pub g2_ii: Option<Estimate>,
    pub g2_jj: Option<Estimate>,
    pub g2_ij: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarizationTable {
    pub rows: Vec<PolarizationRow>,
}

impl PolarizationTable {
    pub fn row(&self, basis: PolarizationBasis) -> Option<&PolarizationRow> {
        self.rows.iter().find(|r| r.basis == basis)
    }
}

/// Per-basis ⟨n⟩ and g² table from the three-α method.
pub fn polarization_g2(runs: &PolarizationRuns) -> Result<PolarizationTable> {
    let rows = PolarizationBasis::ALL
        .iter()
        .map(|&basis| {
            let (_, r) = runs
                .runs
                .iter()
                .find(|(b, _)| *b == basis)
                .ok_or_else(|| OhtError::InvalidInput(format!("no runs for basis {}", basis.label())))?;
            let t = two_time_g2(r)?;
            Ok(PolarizationRow {
                basis,
                mean_n_i: t.mean_n1,
                mean_n_j: t.mean_n2,
                g2_ii: t.g2_11,
                g2_jj: t.g2_22,
                g2_ij: t.g2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PolarizationTable { rows })
}

/// Runs in all three bases for a source whose R/L photon numbers follow
/// `law` with random relative phase.
pub fn simulate_polarization_runs(law: &PhotonNumberLaw, det: &DetectorModel, n: usize, seed: u64) -> Result<PolarizationRuns> {
    let split = StreamSplitter::new(seed);
    let mut runs = Vec::new();
    for (k, basis) in PolarizationBasis::ALL.into_iter().enumerate() {
        let [ei, ej] = basis.modes();
        let mut sets = Vec::new();
        for (a, alpha) in ThreeAlphaRuns::ALPHAS.into_iter().enumerate() {
            let lo = LOSuperposition::randomized(alpha);
            let sub = split.child((3 * k + a) as u64);
            let weights = |zeta: f64| {
                let e = Complex64::from_polar(alpha.sin(), zeta);
                let c = [ei[0] * alpha.cos() + ej[0] * e, ei[1] * alpha.cos() + ej[1] * e];
                (c[0].norm(), c[1].norm())
            };
            let samples = planted_samples(law, &lo, det, n, &sub, weights)?;
            let label = format!("polarization {} {}", basis.label(), serde_json::to_string(law)?);
            sets.push(QuadratureDataset::new(samples, dual_meta(det, &lo, seed, label)));
        }
        let a90 = sets.pop().expect("three runs");
        let a45 = sets.pop().expect("three runs");
        let a0 = sets.pop().expect("three runs");
        runs.push((basis, ThreeAlphaRuns { a0, a45, a90 }));
    }
    Ok(PolarizationRuns { runs })
}

impl PhotonNumberLaw {
    /// Analytic (⟨n_i⟩, ⟨n_j⟩, g²_ii, g²_jj, g²_ij) in a basis, for a source
    /// diagonal in R/L with random relative phase.
    pub fn polarization_expectation(&self, basis: PolarizationBasis) -> (f64, f64, f64, f64, f64) {
        let (m1, m2) = self.means();
        let (g11, g22) = self.g2_single();
        let g12 = self.g2_cross();
        match basis {
            PolarizationBasis::CircularRL => (m1, m2, g11, g22, g12),
            _ => {
                let tot = m1 + m2;
                let f11 = g11 * m1 * m1;
                let f22 = g22 * m2 * m2;
                let f12 = g12 * m1 * m2;
                let gii = (f11 + f22 + 4.0 * f12) / (tot * tot);
                let gij = (f11 + f22) / (tot * tot);
                (tot / 2.0, tot / 2.0, gii, gii, gij)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homodyne::{sample_state, PhaseSchedule};
    use crate::multimode::planted_joint_quadratures;
    use crate::StateSpec;

    fn simulate(law: PhotonNumberLaw, n: usize, seed: u64) -> ThreeAlphaRuns {
        ThreeAlphaRuns::simulate(&TwoModeState::Planted(law), &DetectorModel::ideal(1.0), n, seed).unwrap()
    }

    #[test]
    fn independent_thermal_pair_is_uncorrelated() {
        let t = two_time_g2(&simulate(PhotonNumberLaw::IndependentThermal { nbar1: 1.0, nbar2: 1.0 }, 200_000, 1)).unwrap();
        assert!((t.g2.value - 1.0).abs() <= 0.05, "{t:?}");
        assert!((t.g2.value - 1.0).abs() < 3.0 * t.g2.std_err);
    }

    #[test]
    fn correlated_thermal_pair_matches_planted_oracle() {
        let law = PhotonNumberLaw::IdenticalThermal { nbar: 1.0 };
        let t = two_time_g2(&simulate(law, 200_000, 2)).unwrap();
        let oracle = super::super::number_g2_cross(&law.sample_numbers(200_000, 99));
        assert!((t.g2.value - 3.0).abs() <= 0.15, "{t:?}");
        assert!((t.g2.value - oracle).abs() < 3.0 * t.g2.std_err, "{} vs {oracle}", t.g2.value);
    }

    #[test]
    fn cross_moment_matches_joint_record() {
        let law = PhotonNumberLaw::SplitThermal { nbar: 1.5, transmission: 0.4 };
        let t = two_time_g2(&simulate(law, 100_000, 3)).unwrap();
        let joint = planted_joint_quadratures(&law, 100_000, 4).unwrap();
        let direct: Vec<f64> = joint.iter().map(|j| j.q1 * j.q1 * j.q2 * j.q2).collect();
        let n = direct.len() as f64;
        let mean = direct.iter().sum::<f64>() / n;
        let se = (direct.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let comb = (t.cross_q2q2.std_err.powi(2) + se * se).sqrt();
        assert!((t.cross_q2q2.value - mean).abs() < 3.0 * comb, "{} vs {mean} ± {comb}", t.cross_q2q2.value);
    }

    #[test]
    fn same_mode_in_both_arms_reduces_to_single_mode_g2() {
        let t = two_time_g2(&simulate(PhotonNumberLaw::SplitThermal { nbar: 2.0, transmission: 0.5 }, 200_000, 5)).unwrap();
        let ds = sample_state(&StateSpec::thermal(2.0), &PhaseSchedule::UniformRandom, &DetectorModel::ideal(1.0), 200_000, 6).unwrap();
        let g = crate::moments::g2_single(&ds).unwrap();
        let comb = (t.g2.std_err.powi(2) + g.std_err.powi(2)).sqrt();
        assert!((t.g2.value - g.value).abs() < 3.0 * comb, "{} vs {}", t.g2.value, g.value);
    }

    #[test]
    fn run_checks() {
        let r = simulate(PhotonNumberLaw::IndependentPoisson { nbar1: 1.0, nbar2: 1.0 }, 1000, 7);
        let mut short = r.clone();
        short.a45 = short.a45.select(&(0..500).collect::<Vec<_>>());
        assert!(two_time_g2(&short).is_err());
        let mut swapped = r.clone();
        std::mem::swap(&mut swapped.a0, &mut swapped.a90);
        assert!(two_time_g2(&swapped).is_err());
        let mut fixed = r;
        fixed.a0.meta.schedule = PhaseSchedule::grid(1);
        assert!(matches!(two_time_g2(&fixed), Err(OhtError::PhaseCoverage(_))));
    }

    #[test]
    fn basis_modes_are_orthonormal() {
        for b in PolarizationBasis::ALL {
            let [x, y] = b.modes();
            let dot = |u: &[Complex64; 2], v: &[Complex64; 2]| u[0].conj() * v[0] + u[1].conj() * v[1];
            assert!((dot(&x, &x).re - 1.0).abs() < 1e-15 && (dot(&y, &y).re - 1.0).abs() < 1e-15);
            assert!(dot(&x, &y).norm() < 1e-15);
        }
    }

    fn check_table(law: PhotonNumberLaw, seed: u64) -> PolarizationTable {
        let runs = simulate_polarization_runs(&law, &DetectorModel::ideal(1.0), 100_000, seed).unwrap();
        let table = polarization_g2(&runs).unwrap();
        for row in &table.rows {
            let (mi, mj, gii, gjj, gij) = law.polarization_expectation(row.basis);
            assert!((row.mean_n_i.value - mi).abs() < 4.0 * row.mean_n_i.std_err, "{row:?}");
            assert!((row.mean_n_j.value - mj).abs() < 4.0 * row.mean_n_j.std_err, "{row:?}");
            assert!((row.g2_ij.value - gij).abs() < 4.0 * row.g2_ij.std_err, "{law:?} {row:?} expected {gij}");
            let ii = row.g2_ii.unwrap();
            let jj = row.g2_jj.unwrap();
            assert!((ii.value - gii).abs() < 4.0 * ii.std_err && (jj.value - gjj).abs() < 4.0 * jj.std_err, "{row:?}");
        }
        table
    }

    #[test]
    fn uncorrelated_circular_thermal_emission() {
        let t = check_table(PhotonNumberLaw::IndependentThermal { nbar1: 1.0, nbar2: 1.0 }, 8);
        let rl = t.row(PolarizationBasis::CircularRL).unwrap();
        let ii = rl.g2_ii.unwrap();
        assert!((ii.value - 2.0).abs() < 3.0 * ii.std_err && (rl.g2_ij.value - 1.0).abs() < 3.0 * rl.g2_ij.std_err, "{rl:?}");
    }

    #[test]
    fn anticorrelated_pair_shows_below_unity() {
        let t = check_table(PhotonNumberLaw::FixedTotalSplit { total: 2, transmission: 0.5 }, 9);
        let rl = t.row(PolarizationBasis::CircularRL).unwrap();
        assert!(rl.g2_ij.value + 3.0 * rl.g2_ij.std_err < 1.0, "{rl:?}");
    }

    #[test]
    fn poissonian_modes() {
        let t = check_table(PhotonNumberLaw::IndependentPoisson { nbar1: 1.0, nbar2: 1.0 }, 10);
        let rl = t.row(PolarizationBasis::CircularRL).unwrap();
        for g in [rl.g2_ii.unwrap(), rl.g2_jj.unwrap(), rl.g2_ij] {
            assert!((g.value - 1.0).abs() < 3.0 * g.std_err, "{rl:?}");
        }
    }

    #[test]
    fn incomplete_basis_set_is_rejected() {
        let mut runs = simulate_polarization_runs(&PhotonNumberLaw::IndependentPoisson { nbar1: 1.0, nbar2: 1.0 }, &DetectorModel::ideal(1.0), 100, 1).unwrap();
        runs.runs.pop();
        assert!(polarization_g2(&runs).is_err());
    }
}
