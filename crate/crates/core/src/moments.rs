//! Photon statistics straight from phase-averaged quadrature records, and
//! phase distributions of density matrices.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, OhtError, Result};
use crate::fock::{hermite_poly_all, DensityMatrix};
use crate::homodyne::{PhaseSchedule, QuadratureDataset};
use crate::pattern::infer_phase_count;

/// Highest factorial moment offered.
pub const MAX_FACTORIAL_ORDER: usize = 4;

/// Checks that phase averages of polynomials of degree 2·`order` in q are
/// unbiased: random or swept phases, or more than `order` equally spaced
/// phases over [0, π).
pub fn check_phase_averaging(ds: &QuadratureDataset, order: usize) -> Result<()> {
    if ds.is_empty() {
        return invalid("empty dataset");
    }
    match ds.meta.schedule {
        PhaseSchedule::UniformRandom | PhaseSchedule::SweptLinear => Ok(()),
        PhaseSchedule::Fixed { .. } => Err(OhtError::PhaseCoverage("fixed-phase record cannot be phase-averaged".into())),
        PhaseSchedule::Grid { .. } => match infer_phase_count(ds) {
            Some(d) if d > order => Ok(()),
            Some(d) => Err(OhtError::PhaseCoverage(format!(
                "{d} distinct phases over [0,π) cannot average moments of order {}; need more than {order}",
                2 * order
            ))),
            None => Err(OhtError::PhaseCoverage("phases are neither random nor on an equally spaced grid".into())),
        },
    }
}

/// Quadratures of the detected (lossy) mode: q·√η_eff restores vacuum
/// variance 1/2 for records that carry (1/η − 1)/2 of added noise.
fn detected_quadratures(ds: &QuadratureDataset) -> Vec<f64> {
    let s = ds.eta_eff().sqrt();
    ds.qs().map(|q| q * s).collect()
}

fn mean_and_se(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let m = xs.clone().sum::<f64>() / nf;
    let v = xs.map(|x| (x - m).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
    (m, (v / nf).sqrt())
}

/// Value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

/// ⟨n⟩ of the detected mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanPhoton {
    pub value: f64,
    /// From the sample variance of q².
    pub std_err: f64,
    /// Conservative sqrt(⟨⟨q⁴⟩⟩/N).
    pub std_err_bound: f64,
}

/// ⟨n⟩ = ⟨⟨q²⟩⟩ − 1/2.
pub fn mean_photon(ds: &QuadratureDataset) -> Result<MeanPhoton> {
    check_phase_averaging(ds, 1)?;
    let q = detected_quadratures(ds);
    let n = q.len();
    let (m2, se) = mean_and_se(q.iter().map(|x| x * x), n);
    let m4 = q.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
    Ok(MeanPhoton { value: m2 - 0.5, std_err: se, std_err_bound: (m4 / n as f64).sqrt() })
}

/// Number of samples needed to fix ⟨n⟩ to within its own value.
pub fn n_min(mean_n: f64, mean_n2: f64) -> Result<f64> {
    if !(mean_n > 0.0) {
        return invalid(format!("⟨n⟩ = {mean_n} must be positive"));
    }
    Ok((3.0 * mean_n2 + mean_n + 0.5) / (2.0 * mean_n * mean_n))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// ⟨a†^r a^r⟩ from the phase-averaged ⟨H_2r(q)⟩.
pub fn factorial_moment(ds: &QuadratureDataset, r: usize) -> Result<Estimate> {
    if r == 0 || r > MAX_FACTORIAL_ORDER {
        return invalid(format!("factorial moment order {r} outside 1..={MAX_FACTORIAL_ORDER}"));
    }
    check_phase_averaging(ds, r)?;
    let c = factorial(r).powi(2) / (2f64.powi(r as i32) * factorial(2 * r));
    let q = detected_quadratures(ds);
    let (m, se) = mean_and_se(q.iter().map(|&x| c * hermite_poly_all(2 * r, x)[2 * r]), q.len());
    Ok(Estimate { value: m, std_err: se })
}

fn g2_from(m2: f64, m4: f64) -> (f64, f64, f64) {
    let num = 2.0 / 3.0 * m4 - 2.0 * m2 + 0.5;
    let den = m2 * m2 - m2 + 0.25;
    (num / den, num, den)
}

/// g² from second and fourth quadrature moments, with a delete-one
/// jackknife error.
pub fn g2_single(ds: &QuadratureDataset) -> Result<Estimate> {
    check_phase_averaging(ds, 2)?;
    let q = detected_quadratures(ds);
    g2_from_quadratures(&q)
}

pub(crate) fn g2_from_quadratures(q: &[f64]) -> Result<Estimate> {
    let n = q.len();
    if n < 3 {
        return invalid("g² needs at least 3 samples");
    }
    let nf = n as f64;
    let s2: f64 = q.iter().map(|x| x * x).sum();
    let s4: f64 = q.iter().map(|x| x.powi(4)).sum();
    let (g, _, den) = g2_from(s2 / nf, s4 / nf);
    let mean_n = s2 / nf - 0.5;
    let (_, se_n) = mean_and_se(q.iter().map(|x| x * x), n);
    let den_se = 2.0 * mean_n.abs() * se_n;
    if !(den > 5.0 * den_se) {
        return Err(OhtError::Numerical(format!(
            "g² denominator {den:.3e} is within 5 standard errors ({den_se:.3e}) of zero; ⟨n⟩ too small"
        )));
    }
    let loo: Vec<f64> = q
        .iter()
        .map(|x| {
            let x2 = x * x;
            g2_from((s2 - x2) / (nf - 1.0), (s4 - x2 * x2) / (nf - 1.0)).0
        })
        .collect();
    let mean_loo = loo.iter().sum::<f64>() / nf;
    let var = (nf - 1.0) / nf * loo.iter().map(|v| (v - mean_loo).powi(2)).sum::<f64>();
    Ok(Estimate { value: g, std_err: var.sqrt() })
}

/// Direct statistics of a phase-averaged record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub n_samples: usize,
    pub eta_eff: f64,
    pub mean_n: MeanPhoton,
    /// ⟨n^(r)⟩ for r = 1..=4.
    pub factorial_moments: Vec<Estimate>,
    /// None when ⟨n⟩ is too small for a meaningful ratio.
    pub g2: Option<Estimate>,
    pub notes: Vec<String>,
}

pub fn moment_report(ds: &QuadratureDataset) -> Result<MomentReport> {
    let mean_n = mean_photon(ds)?;
    let mut notes = Vec::new();
    if ds.eta_eff() < 1.0 {
        notes.push(format!(
            "η_eff = {:.4}: values refer to the detected mode, no loss correction applied",
            ds.eta_eff()
        ));
    }
    let mut factorial_moments = Vec::new();
    for r in 1..=MAX_FACTORIAL_ORDER {
        match factorial_moment(ds, r) {
            Ok(e) => factorial_moments.push(e),
            Err(OhtError::PhaseCoverage(msg)) => {
                notes.push(format!("factorial moments stop at r = {}: {msg}", r - 1));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let g2 = match g2_single(ds) {
        Ok(g) => Some(g),
        Err(OhtError::Numerical(msg)) | Err(OhtError::PhaseCoverage(msg)) => {
            notes.push(format!("g² not reported: {msg}"));
            None
        }
        Err(e) => return Err(e),
    };
    Ok(MomentReport { n_samples: ds.len(), eta_eff: ds.eta_eff(), mean_n, factorial_moments, g2, notes })
}

/// London / Pegg–Barnett phase distribution on an equally spaced φ grid
/// over [−π, π).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseDistribution {
    pub phi: Vec<f64>,
    pub values: Vec<f64>,
    pub s: usize,
}

impl PhaseDistribution {
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * 2.0 * PI / self.phi.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("phi,pr\n");
        for (p, v) in self.phi.iter().zip(&self.values) {
            out.push_str(&format!("{p},{v}\n"));
        }
        out
    }
}

/// Pr(φ) = (1/2π) Σ_{n,m ≤ s} e^{i(m−n)φ} ρ_nm on `n_phi` points.
pub fn phase_distribution(rho: &DensityMatrix, s: usize, n_phi: usize) -> Result<PhaseDistribution> {
    if s >= rho.dim() {
        return invalid(format!("truncation s={s} must be below the dimension {}", rho.dim()));
    }
    if n_phi <= 2 * s {
        return invalid(format!("need more than 2s = {} phase points", 2 * s));
    }
    let phi: Vec<f64> = (0..n_phi).map(|k| -PI + 2.0 * PI * k as f64 / n_phi as f64).collect();
    let values = phi
        .iter()
        .map(|&f| {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..=s {
                for m in 0..=s {
                    acc += Complex64::from_polar(1.0, (m as f64 - n as f64) * f) * rho.get(n, m);
                }
            }
            acc.re / (2.0 * PI)
        })
        .collect();
    Ok(PhaseDistribution { phi, values, s })
}

/// Number-phase uncertainty in the truncated Pegg–Barnett space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NumberPhaseStats {
    pub delta_n: f64,
    pub delta_phi: f64,
    pub product: f64,
    /// |⟨[n̂, φ̂]⟩|/2.
    pub commutator_bound: f64,
}

/// Δn, Δφ and the Robertson bound with phase states at φ₀ + 2πk/(s+1),
/// φ₀ = −π; ρ is restricted to the [0, s] block and renormalized.
pub fn number_phase_stats(rho: &DensityMatrix, s: usize) -> Result<NumberPhaseStats> {
    number_phase_stats_with_reference(rho, s, -PI)
}

pub fn number_phase_stats_with_reference(rho: &DensityMatrix, s: usize, phi0: f64) -> Result<NumberPhaseStats> {
    if s >= rho.dim() {
        return invalid(format!("truncation s={s} must be below the dimension {}", rho.dim()));
    }
    let d = s + 1;
    let block = rho.elements().view((0, 0), (d, d)).into_owned();
    let tr: f64 = (0..d).map(|k| block[(k, k)].re).sum();
    if !(tr > 0.0) {
        return Err(OhtError::Numerical("state has no weight in the truncated block".into()));
    }
    let r = block / Complex64::new(tr, 0.0);
    let n_op = DMatrix::from_fn(d, d, |i, j| if i == j { Complex64::new(i as f64, 0.0) } else { Complex64::new(0.0, 0.0) });
    let norm = 1.0 / d as f64;
    let phi_op = DMatrix::from_fn(d, d, |n, m| {
        (0..d)
            .map(|k| {
                let pk = phi0 + 2.0 * PI * k as f64 / d as f64;
                Complex64::from_polar(pk * norm, (n as f64 - m as f64) * pk)
            })
            .sum::<Complex64>()
    });
    let expect = |op: &DMatrix<Complex64>| (&r * op).trace();
    let mn = expect(&n_op).re;
    let mn2 = expect(&(&n_op * &n_op)).re;
    let mp = expect(&phi_op).re;
    let mp2 = expect(&(&phi_op * &phi_op)).re;
    let comm = &n_op * &phi_op - &phi_op * &n_op;
    let delta_n = (mn2 - mn * mn).max(0.0).sqrt();
    let delta_phi = (mp2 - mp * mp).max(0.0).sqrt();
    Ok(NumberPhaseStats {
        delta_n,
        delta_phi,
        product: delta_n * delta_phi,
        commutator_bound: expect(&comm).norm() / 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_state, StateSpec};
    use crate::homodyne::{sample_quadratures, sample_state, DetectorModel};

    fn random(spec: StateSpec, n: usize, seed: u64) -> QuadratureDataset {
        sample_state(&spec, &PhaseSchedule::UniformRandom, &DetectorModel::ideal(1.0), n, seed).unwrap()
    }

    #[test]
    fn n_min_values() {
        assert!((n_min(1.0, 2.0).unwrap() - 3.75).abs() < 1e-15);
        let big = 1e6;
        assert!((n_min(big, big * big + big).unwrap() - 1.5).abs() < 1e-5);
        let small = 1e-3;
        let v = n_min(small, small * small + small).unwrap();
        assert!((v - 252_001.5).abs() < 1e-6, "{v}");
        assert!(n_min(0.0, 0.0).is_err());
    }

    #[test]
    fn vacuum_and_coherent_means() {
        let vac = mean_photon(&random(StateSpec::vacuum(), 100_000, 1)).unwrap();
        assert!(vac.value.abs() < 3.0 * vac.std_err);
        assert!(vac.std_err <= vac.std_err_bound);
        let c = mean_photon(&random(StateSpec::coherent(Complex64::new(1.2f64.sqrt(), 0.0)), 100_000, 2)).unwrap();
        assert!((c.value - 1.2).abs() < 3.0 * c.std_err, "{c:?}");
    }

    #[test]
    fn first_factorial_moment_is_mean_photon() {
        let ds = random(StateSpec::thermal(0.7), 20_000, 3);
        let a = factorial_moment(&ds, 1).unwrap().value;
        let b = mean_photon(&ds).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn second_factorial_moments() {
        let c = factorial_moment(&random(StateSpec::coherent(Complex64::new(1.0, 0.5)), 200_000, 4), 2).unwrap();
        assert!((c.value - 1.25f64.powi(2)).abs() < 3.0 * c.std_err, "{c:?}");
        let t = factorial_moment(&random(StateSpec::thermal(1.0), 200_000, 5), 2).unwrap();
        assert!((t.value - 2.0).abs() < 3.0 * t.std_err, "{t:?}");
        assert!(factorial_moment(&random(StateSpec::vacuum(), 10, 1), 5).is_err());
    }

    #[test]
    fn g2_examples() {
        let c = g2_single(&random(StateSpec::coherent(Complex64::new(1.0, 0.0)), 200_000, 6)).unwrap();
        assert!((c.value - 1.0).abs() <= 0.05, "{c:?}");
        let t = g2_single(&random(StateSpec::thermal(1.0), 200_000, 7)).unwrap();
        assert!((t.value - 2.0).abs() <= 0.1, "{t:?}");
        let f = g2_single(&random(StateSpec::fock(1), 200_000, 8)).unwrap();
        assert!(f.value.abs() < 3.0 * f.std_err, "{f:?}");
        assert!(matches!(g2_single(&random(StateSpec::vacuum(), 50_000, 9)), Err(OhtError::Numerical(_))));
    }

    #[test]
    fn jackknife_matches_delta_method_on_gaussian_data() {
        let ds = random(StateSpec::thermal(2.0), 50_000, 10);
        let g = g2_single(&ds).unwrap();
        let q: Vec<f64> = ds.qs().collect();
        let n = q.len() as f64;
        let m2 = q.iter().map(|x| x * x).sum::<f64>() / n;
        let m4 = q.iter().map(|x| x.powi(4)).sum::<f64>() / n;
        let m6 = q.iter().map(|x| x.powi(6)).sum::<f64>() / n;
        let m8 = q.iter().map(|x| x.powi(8)).sum::<f64>() / n;
        let (_, num, den) = g2_from(m2, m4);
        let d2 = (-2.0 * den - num * (2.0 * m2 - 1.0)) / (den * den);
        let d4 = (2.0 / 3.0) / den;
        let c22 = m4 - m2 * m2;
        let c44 = m8 - m4 * m4;
        let c24 = m6 - m2 * m4;
        let var = (d2 * d2 * c22 + d4 * d4 * c44 + 2.0 * d2 * d4 * c24) / n;
        assert!((g.std_err / var.sqrt() - 1.0).abs() < 0.05, "{} vs {}", g.std_err, var.sqrt());
    }

    #[test]
    fn fixed_phase_records_are_refused() {
        let rho = make_state(&StateSpec::thermal(1.0)).unwrap();
        let ds = sample_quadratures(&rho, &PhaseSchedule::grid(1), &DetectorModel::ideal(1.0), 1000, 1).unwrap();
        assert!(matches!(mean_photon(&ds), Err(OhtError::PhaseCoverage(_))));
        let two = sample_quadratures(&rho, &PhaseSchedule::Grid { d: 2, span: PI }, &DetectorModel::ideal(1.0), 1000, 1).unwrap();
        assert!(mean_photon(&two).is_ok());
        assert!(g2_single(&two).is_err());
    }

    #[test]
    fn lossy_records_report_detected_mode() {
        let ds = sample_state(&StateSpec::coherent(Complex64::new(1.0, 0.0)), &PhaseSchedule::UniformRandom, &DetectorModel::ideal(0.5), 200_000, 11).unwrap();
        let r = moment_report(&ds).unwrap();
        assert!((r.mean_n.value - 0.5).abs() < 3.0 * r.mean_n.std_err);
        let g = r.g2.unwrap();
        assert!((g.value - 1.0).abs() < 3.0 * g.std_err);
        assert!(!r.notes.is_empty());
    }

    #[test]
    fn phase_distribution_examples() {
        let vac = phase_distribution(&make_state(&StateSpec::vacuum()).unwrap(), 10, 256).unwrap();
        assert!(vac.values.iter().all(|v| (v - 1.0 / (2.0 * PI)).abs() < 1e-12));
        let phi0 = 0.8;
        let rho = make_state(&StateSpec::coherent(Complex64::from_polar(2.0, phi0))).unwrap();
        let pd = phase_distribution(&rho, 19, 1024).unwrap();
        assert!((pd.integral() - 1.0).abs() < 1e-6);
        assert!(pd.values.iter().all(|v| *v >= -1e-9));
        let imax = (0..pd.values.len()).max_by(|&a, &b| pd.values[a].total_cmp(&pd.values[b])).unwrap();
        assert!((pd.phi[imax] - phi0).abs() <= 2.0 * PI / 1024.0);
        let diag = DensityMatrix::diagonal(&rho.populations());
        let flat = phase_distribution(&diag, 19, 64).unwrap();
        assert!(flat.values.iter().all(|v| (v - 1.0 / (2.0 * PI)).abs() < 1e-12));
        assert!(pd.to_csv().starts_with("phi,pr\n"));
    }

    #[test]
    fn number_phase_examples() {
        let s = 40;
        let vac = number_phase_stats(&make_state(&StateSpec::vacuum().with_dim(41)).unwrap(), s).unwrap();
        assert!(vac.delta_n.abs() < 1e-12);
        let d = (s + 1) as f64;
        let discrete = (PI * PI / 3.0 * (1.0 - 1.0 / (d * d))).sqrt();
        assert!((vac.delta_phi - discrete).abs() < 1e-9);
        assert!((vac.delta_phi - PI / 3f64.sqrt()).abs() < 1e-3);
        for spec in [
            StateSpec::coherent(Complex64::new(2.0, 0.0)),
            StateSpec::thermal(1.0),
            StateSpec::fock(3),
            StateSpec::squeezed_vacuum(0.4, 0.0),
        ] {
            let rho = make_state(&spec).unwrap();
            let st = number_phase_stats(&rho, rho.dim() - 1).unwrap();
            assert!(st.product >= st.commutator_bound - 1e-9, "{spec:?}: {st:?}");
        }
        let coh = number_phase_stats(&make_state(&StateSpec::coherent(Complex64::new(2.0, 0.0))).unwrap(), 19).unwrap();
        assert!(coh.product < 0.6, "{coh:?}");
    }
}
