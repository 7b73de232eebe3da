//! Density-matrix estimation with pattern functions built from the dual
//! basis of the products ψ_{ν+D}ψ_ν.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, OhtError, Result};
use crate::fock::{hermite_table, DensityMatrix};
use crate::grid::{simpson_weights, Axis};
use crate::homodyne::QuadratureDataset;
use crate::radon::fold_sample;

/// Largest supported dimension.
pub const MAX_PATTERN_DIM: usize = 30;
/// Gram condition numbers above this abort construction.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;
/// Points of the default pattern-function axis over [−8, 8].
pub const PATTERN_POINTS: usize = 4096;
/// Phase tolerance when assigning samples to grid phases.
pub const PHASE_GRID_TOLERANCE: f64 = 1e-9;

/// Sampled pattern functions M_mn(q) for m, n < dim.
#[derive(Debug, Clone, Serialize)]
pub struct PatternFunctionTable {
    pub dim: usize,
    pub q_axis: Axis,
    pub l: f64,
    /// Condition number of the Gram matrix of each band D = m − n.
    pub condition_numbers: Vec<f64>,
    /// `bands[D][n]` holds M_{n+D,n} on `q_axis`.
    #[serde(skip)]
    bands: Vec<Vec<Vec<f64>>>,
}

/// Default axis: 4096 points over [−8, 8].
pub fn default_pattern_axis() -> Axis {
    Axis { start: -8.0, stop: 8.0, n: PATTERN_POINTS }
}

impl PatternFunctionTable {
    /// M_mn on the table axis; symmetric in (m, n).
    pub fn values(&self, m: usize, n: usize) -> &[f64] {
        let (hi, lo) = if m >= n { (m, n) } else { (n, m) };
        &self.bands[hi - lo][lo]
    }

    /// M_mn(q) by linear interpolation, zero outside the axis.
    pub fn eval(&self, m: usize, n: usize, q: f64) -> f64 {
        crate::grid::interp_linear(&self.q_axis, self.values(m, n), q)
    }

    /// Interpolation position of `q`, shared across all (m, n).
    fn locate(&self, q: f64) -> Option<(usize, f64)> {
        let t = self.q_axis.locate(q);
        if !(t >= 0.0) || t > (self.q_axis.n - 1) as f64 {
            return None;
        }
        let i = (t.floor() as usize).min(self.q_axis.n - 2);
        Some((i, t - i as f64))
    }

    fn at(&self, band: usize, n: usize, pos: (usize, f64)) -> f64 {
        let v = &self.bands[band][n];
        v[pos.0] * (1.0 - pos.1) + v[pos.0 + 1] * pos.1
    }

    /// ∫ M_{n+D,n} ψ_{ν+D}ψ_ν dq by Simpson on the table axis; the dual
    /// relation makes this δ_nν.
    pub fn band_overlap(&self, band: usize, n: usize, nu: usize) -> f64 {
        let pts = self.q_axis.points();
        let top = self.dim - 1;
        let w = self.q_axis.simpson_weights();
        let psi = hermite_table(top, &pts).expect("dimension checked at construction");
        let m = &self.bands[band][n];
        (0..pts.len()).map(|i| w[i] * m[i] * psi[nu + band][i] * psi[nu][i]).sum()
    }
}

/// Builds M_mn for all m, n < dim by inverting, per band D, the Gram matrix
/// of the basis (2ν+1)^L ψ_{2ν+D}(q) e^{−q²/2} against ψ_{ν+D}ψ_ν.
pub fn build_pattern_functions(dim: usize, q_axis: &Axis, l: f64) -> Result<PatternFunctionTable> {
    if dim == 0 || dim > MAX_PATTERN_DIM {
        return invalid(format!("pattern-function dimension {dim} outside 1..={MAX_PATTERN_DIM}"));
    }
    if q_axis.start > -8.0 || q_axis.stop < 8.0 {
        return invalid("pattern-function axis must span at least [−8, 8]");
    }
    if !l.is_finite() {
        return invalid("L must be finite");
    }
    let pts = q_axis.points();
    let w = simpson_weights(q_axis.n, q_axis.step());
    let top_basis = 2 * (dim - 1);
    let psi = hermite_table(top_basis.max(dim - 1), &pts)?;
    let gauss: Vec<f64> = pts.iter().map(|q| (-q * q / 2.0).exp()).collect();
    let results: Vec<Result<(Vec<Vec<f64>>, f64)>> = (0..dim)
        .into_par_iter()
        .map(|band| {
            let count = dim - band;
            let basis: Vec<Vec<f64>> = (0..count)
                .map(|nu| {
                    let scale = ((2 * nu + 1) as f64).powf(l);
                    let row = &psi[2 * nu + band];
                    row.iter().zip(&gauss).map(|(p, g)| scale * p * g).collect()
                })
                .collect();
            let gram = DMatrix::from_fn(count, count, |mu, nu| {
                let chi_a = &psi[nu + band];
                let chi_b = &psi[nu];
                (0..pts.len()).map(|i| w[i] * basis[mu][i] * chi_a[i] * chi_b[i]).sum::<f64>()
            });
            let sv = gram.clone().svd(false, false).singular_values;
            let smax = sv.max();
            let smin = sv.min();
            let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
            if !(cond <= GRAM_CONDITION_LIMIT) {
                return Err(OhtError::GramConditioning { band, cond, limit: GRAM_CONDITION_LIMIT });
            }
            let inv = gram
                .try_inverse()
                .ok_or_else(|| OhtError::Numerical(format!("Gram matrix of band {band} is singular")))?;
            // Σ_μ c_nμ ℘_μν = δ_nν, so the coefficient matrix is ℘⁻¹.
            let funcs = (0..count)
                .map(|n| {
                    (0..pts.len())
                        .map(|i| (0..count).map(|mu| inv[(n, mu)] * basis[mu][i]).sum())
                        .collect()
                })
                .collect();
            Ok((funcs, cond))
        })
        .collect();
    let mut bands = Vec::with_capacity(dim);
    let mut condition_numbers = Vec::with_capacity(dim);
    for r in results {
        let (f, c) = r?;
        bands.push(f);
        condition_numbers.push(c);
    }
    Ok(PatternFunctionTable { dim, q_axis: *q_axis, l, condition_numbers, bands })
}

/// Number of distinct equally spaced phases over [0, π) in a record after
/// folding, if its phases sit on such a grid.
pub fn infer_phase_count(ds: &QuadratureDataset) -> Option<usize> {
    let mut folded: Vec<f64> = ds.samples.iter().map(|s| fold_sample(s.theta, s.q).0).collect();
    folded.sort_by(f64::total_cmp);
    folded.dedup_by(|a, b| (*a - *b).abs() < PHASE_GRID_TOLERANCE);
    if folded.len() > 4096 || folded.is_empty() {
        return None;
    }
    let d = folded.len();
    let on_grid = folded.iter().all(|t| {
        let k = t * d as f64 / PI;
        (k - k.round()).abs() * PI / d as f64 <= PHASE_GRID_TOLERANCE
    });
    on_grid.then_some(d)
}

/// Reconstructed density matrix with per-element standard errors.
#[derive(Debug, Clone)]
pub struct PatternEstimate {
    pub rho: DensityMatrix,
    /// sqrt(Var Re + Var Im) of each element.
    pub std_err: DMatrix<f64>,
    pub samples_per_phase: Vec<usize>,
}

/// ρ_mn = (1/d) Σ_k ⟨e^{i(m−n)θ_k} M_mn(q)⟩_k over `d_phases` equally spaced
/// phases on [0, π), Hermitized.
pub fn rho_from_quadratures(ds: &QuadratureDataset, pf: &PatternFunctionTable, d_phases: usize) -> Result<PatternEstimate> {
    let dim = pf.dim;
    if d_phases < dim {
        return Err(OhtError::Aliasing { d: d_phases, n_max: dim - 1 });
    }
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); d_phases];
    for (idx, s) in ds.samples.iter().enumerate() {
        let (t, q) = fold_sample(s.theta, s.q);
        let x = t * d_phases as f64 / PI;
        let k = x.round();
        if (x - k).abs() * PI / d_phases as f64 > PHASE_GRID_TOLERANCE {
            return Err(OhtError::NonUniformPhases(format!(
                "sample {idx} at θ={} is not on the {d_phases}-phase grid over [0,π)",
                s.theta
            )));
        }
        let k = k as usize;
        if k == d_phases {
            bins[0].push(-q);
        } else {
            bins[k].push(q);
        }
    }
    let empty: Vec<usize> = (0..d_phases).filter(|&k| bins[k].is_empty()).collect();
    if !empty.is_empty() {
        return Err(OhtError::EmptyPhaseBins(empty));
    }
    let pairs: Vec<(usize, usize)> = (0..dim).flat_map(|b| (0..dim - b).map(move |n| (b, n))).collect();
    // per bin: Σ M and Σ M² for every (band, n)
    let per_bin: Vec<(Vec<f64>, Vec<f64>, usize)> = bins
        .par_iter()
        .map(|qs| {
            let mut s1 = vec![0.0; pairs.len()];
            let mut s2 = vec![0.0; pairs.len()];
            for &q in qs {
                if let Some(pos) = pf.locate(q) {
                    for (j, &(b, n)) in pairs.iter().enumerate() {
                        let v = pf.at(b, n, pos);
                        s1[j] += v;
                        s2[j] += v * v;
                    }
                }
            }
            (s1, s2, qs.len())
        })
        .collect();
    let d = d_phases as f64;
    let mut rho = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    let mut err = DMatrix::from_element(dim, dim, 0.0);
    for (j, &(b, n)) in pairs.iter().enumerate() {
        let m = n + b;
        let mut est = Complex64::new(0.0, 0.0);
        let mut var = 0.0;
        for (k, (s1, s2, cnt)) in per_bin.iter().enumerate() {
            let c = *cnt as f64;
            let mean = s1[j] / c;
            let var_m = if *cnt > 1 { (s2[j] / c - mean * mean).max(0.0) * c / (c - 1.0) } else { 0.0 };
            let theta = k as f64 * PI / d;
            est += Complex64::from_polar(mean, b as f64 * theta);
            // |e^{iDθ}|² = 1 splits the variance across Re and Im
            var += var_m / c;
        }
        est /= d;
        let se = var.sqrt() / d;
        rho[(m, n)] = est;
        rho[(n, m)] = est.conj();
        err[(m, n)] = se;
        err[(n, m)] = se;
    }
    let rho = DensityMatrix::hermitian_part(rho, false)?;
    Ok(PatternEstimate { rho, std_err: err, samples_per_phase: bins.iter().map(Vec::len).collect() })
}

/// Photon-number distribution with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhotonNumberEstimate {
    pub p: Vec<f64>,
    pub std_err: Vec<f64>,
    pub n_samples: usize,
}

impl PhotonNumberEstimate {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,p,stderr\n");
        for (n, (p, e)) in self.p.iter().zip(&self.std_err).enumerate() {
            s.push_str(&format!("{n},{p},{e}\n"));
        }
        s
    }
}

/// p(n) = ⟨M_nn(q)⟩ over a phase-averaged record.
pub fn pn_phase_averaged(ds: &QuadratureDataset, pf: &PatternFunctionTable) -> Result<PhotonNumberEstimate> {
    if ds.is_empty() {
        return invalid("empty dataset");
    }
    if !ds.meta.schedule.is_phase_averaging() {
        match infer_phase_count(ds) {
            Some(d) if d >= pf.dim => {}
            Some(d) => return Err(OhtError::Aliasing { d, n_max: pf.dim - 1 }),
            None => {
                return Err(OhtError::PhaseCoverage(
                    "phase-averaged estimation needs random, swept or equally spaced phases".into(),
                ))
            }
        }
    }
    let dim = pf.dim;
    let (s1, s2) = ds
        .samples
        .par_iter()
        .fold(
            || (vec![0.0; dim], vec![0.0; dim]),
            |(mut a, mut b), s| {
                if let Some(pos) = pf.locate(s.q) {
                    for n in 0..dim {
                        let v = pf.at(0, n, pos);
                        a[n] += v;
                        b[n] += v * v;
                    }
                }
                (a, b)
            },
        )
        .reduce(
            || (vec![0.0; dim], vec![0.0; dim]),
            |(mut a, mut b), (c, d)| {
                a.iter_mut().zip(&c).for_each(|(x, y)| *x += y);
                b.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
                (a, b)
            },
        );
    let n = ds.len() as f64;
    let p: Vec<f64> = s1.iter().map(|v| v / n).collect();
    let std_err = s2.iter().zip(&p).map(|(m2, p)| ((m2 / n - p * p).max(0.0) / n).sqrt()).collect();
    Ok(PhotonNumberEstimate { p, std_err, n_samples: ds.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{hermite_psi, make_state, StateSpec};
    use crate::homodyne::{sample_quadratures, DetectorModel, PhaseSchedule};

    #[test]
    fn dual_relation_holds_to_1e6() {
        let pf = build_pattern_functions(13, &default_pattern_axis(), 1.0).unwrap();
        let mut worst: f64 = 0.0;
        for band in 0..13 {
            for n in 0..13 - band {
                for nu in 0..13 - band {
                    let target = if n == nu { 1.0 } else { 0.0 };
                    worst = worst.max((pf.band_overlap(band, n, nu) - target).abs());
                }
            }
        }
        assert!(worst <= 1e-6, "worst {worst}");
        assert_eq!(pf.values(3, 1), pf.values(1, 3));
    }

    #[test]
    fn vacuum_pattern_function_moments() {
        let axis = default_pattern_axis();
        let pf = build_pattern_functions(8, &axis, 1.0).unwrap();
        let w = axis.simpson_weights();
        for k in 0..8 {
            let psi = hermite_psi(k, &axis).unwrap();
            let s: f64 = (0..axis.n).map(|i| w[i] * pf.values(0, 0)[i] * psi[i] * psi[i]).sum();
            let target = if k == 0 { 1.0 } else { 0.0 };
            assert!((s - target).abs() < 1e-6, "k={k}: {s}");
        }
    }

    #[test]
    fn diagonal_functions_track_fock_lobes() {
        let axis = default_pattern_axis();
        let pf = build_pattern_functions(12, &axis, 1.0).unwrap();
        for n in 0..=5 {
            let psi = hermite_psi(n, &axis).unwrap();
            let dens: Vec<f64> = psi.iter().map(|v| v * v).collect();
            let peak = dens.iter().cloned().fold(0.0, f64::max);
            let lobes: Vec<usize> = (1..axis.n - 1)
                .filter(|&i| dens[i] > dens[i - 1] && dens[i] >= dens[i + 1] && dens[i] > 0.05 * peak)
                .collect();
            assert_eq!(lobes.len(), n + 1);
            let m = pf.values(n, n);
            for &i in &lobes {
                let lo = i.saturating_sub(60);
                let hi = (i + 60).min(axis.n - 1);
                let has_max = (lo + 1..hi).any(|j| m[j] > m[j - 1] && m[j] >= m[j + 1] && m[j] > 0.0);
                assert!(has_max, "n={n}: no M_nn maximum near q={}", axis.at(i));
            }
        }
    }

    #[test]
    fn rejects_oversized_and_aliased_requests() {
        assert!(build_pattern_functions(31, &default_pattern_axis(), 1.0).is_err());
        let pf = build_pattern_functions(4, &default_pattern_axis(), 1.0).unwrap();
        let rho = make_state(&StateSpec::vacuum()).unwrap();
        let ds = sample_quadratures(&rho, &PhaseSchedule::Grid { d: 3, span: PI }, &DetectorModel::ideal(1.0), 300, 1).unwrap();
        assert!(matches!(rho_from_quadratures(&ds, &pf, 3), Err(OhtError::Aliasing { d: 3, n_max: 3 })));
        let rnd = sample_quadratures(&rho, &PhaseSchedule::UniformRandom, &DetectorModel::ideal(1.0), 300, 1).unwrap();
        assert!(matches!(rho_from_quadratures(&rnd, &pf, 4), Err(OhtError::NonUniformPhases(_))));
    }

    #[test]
    fn vacuum_density_matrix() {
        let pf = build_pattern_functions(8, &default_pattern_axis(), 1.0).unwrap();
        let rho = make_state(&StateSpec::vacuum()).unwrap();
        let ds = sample_quadratures(&rho, &PhaseSchedule::Grid { d: 8, span: PI }, &DetectorModel::ideal(1.0), 200_000, 5).unwrap();
        assert_eq!(infer_phase_count(&ds), Some(8));
        let est = rho_from_quadratures(&ds, &pf, 8).unwrap();
        assert!((est.rho.get(0, 0).re - 1.0).abs() <= 0.02);
        for n in 0..8 {
            for m in 0..8 {
                if (n, m) != (0, 0) {
                    assert!(est.rho.get(n, m).norm() <= 0.02, "({n},{m}) = {}", est.rho.get(n, m));
                }
            }
        }
    }

    #[test]
    fn full_circle_grid_folds_onto_half_circle() {
        let pf = build_pattern_functions(10, &default_pattern_axis(), 1.0).unwrap();
        let rho = make_state(&StateSpec::coherent(Complex64::new(0.7, 0.3))).unwrap();
        let ds = sample_quadratures(&rho, &PhaseSchedule::grid(20), &DetectorModel::ideal(1.0), 100_000, 6).unwrap();
        assert_eq!(infer_phase_count(&ds), Some(10));
        let est = rho_from_quadratures(&ds, &pf, 10).unwrap();
        let truth = rho.resized(10);
        for n in 0..10 {
            for m in 0..10 {
                let d = (est.rho.get(n, m) - truth.get(n, m)).norm();
                assert!(d < 4.0 * est.std_err[(n, m)] + 1e-3, "({n},{m}) off by {d}");
            }
        }
    }

    #[test]
    fn phase_averaged_fock_one() {
        let pf = build_pattern_functions(6, &default_pattern_axis(), 1.0).unwrap();
        let rho = make_state(&StateSpec::fock(1)).unwrap();
        let ds = sample_quadratures(&rho, &PhaseSchedule::UniformRandom, &DetectorModel::ideal(1.0), 100_000, 7).unwrap();
        let pn = pn_phase_averaged(&ds, &pf).unwrap();
        assert!(pn.p[1] >= 0.95, "{:?}", pn.p);
        let n = ds.len() as f64;
        assert!(pn.std_err.iter().all(|e| *e <= 2.0 / n.sqrt()));
        assert!(pn.to_csv().starts_with("n,p,stderr\n0,"));
    }
}
