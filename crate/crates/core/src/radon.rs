//! Filtered back-projection of quadrature records and the Gaussian loss
//! smoothing it is validated against.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, OhtError, Result};
use crate::fock::WignerGrid;
use crate::grid::{simpson_weights, Axis, GridSpec};
use crate::homodyne::QuadratureDataset;
use crate::rng::StreamSplitter;

/// Quadrature histogram range and bin count per phase.
pub const HIST_HALF_RANGE: f64 = 8.0;
pub const HIST_BINS: usize = 256;
/// Bins with fewer samples than this raise a warning.
pub const MIN_SAMPLES_PER_BIN: usize = 100;
pub const BOOTSTRAP_RESAMPLES: usize = 100;

/// Kernel oversampling relative to the histogram bin width.
const OVERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    RamLak,
    RamLakWithCosineRolloff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadonConfig {
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_kc")]
    pub k_c: f64,
    #[serde(default = "default_bins")]
    pub n_phase_bins: usize,
    #[serde(default = "default_kernel")]
    pub kernel: FilterKind,
}

fn default_kc() -> f64 {
    5.0
}
fn default_bins() -> usize {
    64
}
fn default_kernel() -> FilterKind {
    FilterKind::RamLakWithCosineRolloff
}

impl Default for RadonConfig {
    fn default() -> Self {
        Self { grid: GridSpec::default(), k_c: default_kc(), n_phase_bins: default_bins(), kernel: default_kernel() }
    }
}

impl RadonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_c > 0.0 && self.k_c.is_finite()) {
            return invalid(format!("k_c={} must be positive", self.k_c));
        }
        if self.n_phase_bins < 2 {
            return invalid("n_phase_bins must be ≥ 2");
        }
        Ok(())
    }
}

/// Maps a sample to θ ∈ [0, π) using Pr(q, θ+π) = Pr(−q, θ).
pub fn fold_sample(theta: f64, q: f64) -> (f64, f64) {
    if theta >= PI {
        (theta - PI, -q)
    } else {
        (theta, q)
    }
}

/// Samples grouped into `n` phase bins centred on kπ/n.
#[derive(Debug, Clone)]
pub struct PhaseBins {
    pub qs: Vec<Vec<f64>>,
    /// Mean folded phase of each bin.
    pub angles: Vec<f64>,
}

impl PhaseBins {
    pub fn new(ds: &QuadratureDataset, n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("need at least one phase bin");
        }
        let mut qs = vec![Vec::new(); n];
        let mut sums = vec![0.0; n];
        for s in &ds.samples {
            let (t, q) = fold_sample(s.theta, s.q);
            let k = (t * n as f64 / PI).round() as usize;
            if k >= n {
                // the top half-bin wraps onto bin 0 at θ − π
                qs[0].push(-q);
                sums[0] += t - PI;
            } else {
                qs[k].push(q);
                sums[k] += t;
            }
        }
        let empty: Vec<usize> = (0..n).filter(|&k| qs[k].is_empty()).collect();
        if !empty.is_empty() {
            return Err(OhtError::EmptyPhaseBins(empty));
        }
        let angles = sums.iter().zip(&qs).map(|(s, v)| s / v.len() as f64).collect();
        Ok(Self { qs, angles })
    }

    pub fn counts(&self) -> Vec<usize> {
        self.qs.iter().map(Vec::len).collect()
    }
}

fn histogram(qs: &[f64]) -> Vec<f64> {
    let h = 2.0 * HIST_HALF_RANGE / HIST_BINS as f64;
    let mut counts = vec![0.0; HIST_BINS];
    for &q in qs {
        let b = ((q + HIST_HALF_RANGE) / h).floor();
        if b >= 0.0 && (b as usize) < HIST_BINS {
            counts[b as usize] += 1.0;
        }
    }
    let norm = 1.0 / (qs.len() as f64 * h);
    counts.iter_mut().for_each(|c| *c *= norm);
    counts
}

/// Filtered-projection kernel K(s) = (1/2π²)∫₀^{k_c} ξ A(ξ) cos(ξs) dξ on the
/// lattice s = k·h/OVERSAMPLE.
struct Filter {
    step: f64,
    half: usize,
    table: Vec<f64>,
}

impl Filter {
    fn new(cfg: &RadonConfig, s_max: f64) -> Self {
        let step = 2.0 * HIST_HALF_RANGE / (HIST_BINS * OVERSAMPLE) as f64;
        let half = (s_max / step).ceil() as usize;
        let n_xi = 4097;
        let dxi = cfg.k_c / (n_xi - 1) as f64;
        let w = simpson_weights(n_xi, dxi);
        let taper_start = 0.8 * cfg.k_c;
        let weights: Vec<(f64, f64)> = (0..n_xi)
            .map(|i| {
                let xi = i as f64 * dxi;
                let a = match cfg.kernel {
                    FilterKind::RamLak => 1.0,
                    FilterKind::RamLakWithCosineRolloff if xi <= taper_start => 1.0,
                    FilterKind::RamLakWithCosineRolloff => {
                        0.5 * (1.0 + (PI * (xi - taper_start) / (cfg.k_c - taper_start)).cos())
                    }
                };
                (xi, w[i] * xi * a / (2.0 * PI * PI))
            })
            .collect();
        let table = (0..=half)
            .into_par_iter()
            .map(|k| {
                let s = k as f64 * step;
                weights.iter().map(|(xi, wt)| wt * (xi * s).cos()).sum()
            })
            .collect();
        Self { step, half, table }
    }

    fn at(&self, k: isize) -> f64 {
        let k = k.unsigned_abs();
        if k > self.half {
            0.0
        } else {
            self.table[k]
        }
    }
}

/// Largest |q cosθ + p sinθ| over the grid.
fn grid_radius(grid: &GridSpec) -> f64 {
    let q = grid.q.start.abs().max(grid.q.stop.abs());
    let p = grid.p.start.abs().max(grid.p.stop.abs());
    (q * q + p * p).sqrt()
}

fn backproject(hists: &[Vec<f64>], angles: &[f64], cfg: &RadonConfig, filter: &Filter) -> WignerGrid {
    let h = 2.0 * HIST_HALF_RANGE / HIST_BINS as f64;
    let s_half = ((grid_radius(&cfg.grid) + 2.0 * h) / filter.step).ceil() as isize;
    let s_axis_start = -s_half;
    let centre_offset = |b: usize| -(HIST_HALF_RANGE / filter.step) as isize + (b * OVERSAMPLE + OVERSAMPLE / 2) as isize;
    let projections: Vec<Vec<f64>> = hists
        .par_iter()
        .map(|hist| {
            (s_axis_start..=s_half)
                .map(|k| {
                    hist.iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(b, v)| v * filter.at(k - centre_offset(b)))
                        .sum::<f64>()
                        * h
                })
                .collect()
        })
        .collect();
    let dtheta = PI / hists.len() as f64;
    let dirs: Vec<(f64, f64)> = angles.iter().map(|t| t.sin_cos()).collect();
    let step = filter.step;
    let len = projections[0].len();
    let w = WignerGrid::from_fn(cfg.grid, |q, p| {
        let mut acc = 0.0;
        for (g, (s, c)) in projections.iter().zip(&dirs) {
            let x = (q * c + p * s) / step - s_axis_start as f64;
            let i = (x.floor() as usize).min(len - 2);
            let f = x - i as f64;
            acc += g[i] * (1.0 - f) + g[i + 1] * f;
        }
        acc * dtheta
    });
    w.normalized()
}

/// Diagnostics accompanying a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FbpReport {
    pub k_c: f64,
    pub n_phase_bins: usize,
    pub kernel: FilterKind,
    pub samples_per_bin: Vec<usize>,
    pub low_count_bins: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FbpResult {
    pub wigner: WignerGrid,
    pub report: FbpReport,
}

/// Wigner function by filtered back-projection of the phase-binned
/// quadrature histograms, normalized to unit integral.
pub fn filtered_backprojection(ds: &QuadratureDataset, cfg: &RadonConfig) -> Result<FbpResult> {
    cfg.validate()?;
    let bins = PhaseBins::new(ds, cfg.n_phase_bins)?;
    let filter = Filter::new(cfg, grid_radius(&cfg.grid) + HIST_HALF_RANGE + 1.0);
    let hists: Vec<Vec<f64>> = bins.qs.iter().map(|q| histogram(q)).collect();
    let wigner = backproject(&hists, &bins.angles, cfg, &filter);
    let counts = bins.counts();
    let low: Vec<usize> = (0..counts.len()).filter(|&k| counts[k] < MIN_SAMPLES_PER_BIN).collect();
    let mut warnings = Vec::new();
    if !low.is_empty() {
        warnings.push(format!("{} phase bins hold fewer than {MIN_SAMPLES_PER_BIN} samples", low.len()));
    }
    Ok(FbpResult {
        wigner,
        report: FbpReport {
            k_c: cfg.k_c,
            n_phase_bins: cfg.n_phase_bins,
            kernel: cfg.kernel,
            samples_per_bin: counts,
            low_count_bins: low,
            warnings,
        },
    })
}

/// Per-pixel bootstrap standard error of the reconstruction, resampling
/// with replacement inside each phase bin.
pub fn fbp_bootstrap(ds: &QuadratureDataset, cfg: &RadonConfig, n_resamples: usize, seed: u64) -> Result<WignerGrid> {
    cfg.validate()?;
    if n_resamples < 2 {
        return invalid("bootstrap needs at least 2 resamples");
    }
    let bins = PhaseBins::new(ds, cfg.n_phase_bins)?;
    let filter = Filter::new(cfg, grid_radius(&cfg.grid) + HIST_HALF_RANGE + 1.0);
    let split = StreamSplitter::new(seed);
    let (nq, np) = (cfg.grid.q.n, cfg.grid.p.n);
    let mut sum = vec![0.0; nq * np];
    let mut sum2 = vec![0.0; nq * np];
    for r in 0..n_resamples {
        let mut rng = split.stream(r as u64);
        let hists: Vec<Vec<f64>> = bins
            .qs
            .iter()
            .map(|qs| {
                let draw: Vec<f64> = (0..qs.len()).map(|_| qs[rng.gen_range(0..qs.len())]).collect();
                histogram(&draw)
            })
            .collect();
        let w = backproject(&hists, &bins.angles, cfg, &filter);
        for (k, v) in w.values.iter().flatten().enumerate() {
            sum[k] += v;
            sum2[k] += v * v;
        }
    }
    let n = n_resamples as f64;
    let mut out = WignerGrid::zeros(cfg.grid);
    for i in 0..nq {
        for j in 0..np {
            let k = i * np + j;
            let m = sum[k] / n;
            out.values[i][j] = ((sum2[k] / n - m * m) * n / (n - 1.0)).max(0.0).sqrt();
        }
    }
    Ok(out)
}

/// Gaussian convolution with per-axis variance (1/η − 1)/2, renormalized.
pub fn loss_smoothing(w: &WignerGrid, eta: f64) -> Result<WignerGrid> {
    if !(eta > 0.0 && eta < 1.0) {
        return invalid(format!("η={eta} outside (0,1)"));
    }
    let var = (1.0 / eta - 1.0) / 2.0;
    let kernel = |axis: &Axis| -> Vec<Vec<f64>> {
        let h = axis.step();
        let norm = h / (2.0 * PI * var).sqrt();
        (0..axis.n)
            .map(|i| (0..axis.n).map(|k| norm * (-(axis.at(i) - axis.at(k)).powi(2) / (2.0 * var)).exp()).collect())
            .collect()
    };
    let kq = kernel(&w.grid.q);
    let kp = kernel(&w.grid.p);
    let (nq, np) = (w.grid.q.n, w.grid.p.n);
    let along_p: Vec<Vec<f64>> = w
        .values
        .par_iter()
        .map(|row| (0..np).map(|j| kp[j].iter().zip(row).map(|(a, b)| a * b).sum()).collect())
        .collect();
    let values = (0..nq)
        .into_par_iter()
        .map(|i| (0..np).map(|j| (0..nq).map(|k| kq[i][k] * along_p[k][j]).sum()).collect())
        .collect();
    Ok(WignerGrid { grid: w.grid, values }.normalized())
}

/// Marginal ∫W(s cosθ − t sinθ, s sinθ + t cosθ) dt on `q_axis`.
pub fn radon_forward(w: &WignerGrid, theta: f64, q_axis: &Axis) -> Vec<f64> {
    let (sn, c) = theta.sin_cos();
    let r = grid_radius(&w.grid);
    let h = w.grid.q.step().min(w.grid.p.step()) / 2.0;
    let n = 2 * (r / h).ceil() as usize + 1;
    let t_axis = Axis { start: -r, stop: r, n };
    let wt = t_axis.simpson_weights();
    let ts = t_axis.points();
    q_axis
        .points()
        .par_iter()
        .map(|&s| ts.iter().zip(&wt).map(|(&t, wt)| wt * w.interpolate(s * c - t * sn, s * sn + t * c)).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_state, quadrature_pdf, wigner_from_rho, StateSpec};
    use crate::homodyne::{sample_quadratures, DetectorModel, PhaseSchedule};
    use num_complex::Complex64;

    fn vacuum_w(q: f64, p: f64) -> f64 {
        (-q * q - p * p).exp() / PI
    }

    #[test]
    fn vacuum_reconstruction_within_tolerance() {
        let rho = make_state(&StateSpec::vacuum()).unwrap();
        let sched = PhaseSchedule::Grid { d: 64, span: PI };
        let ds = sample_quadratures(&rho, &sched, &DetectorModel::ideal(1.0), 200_000, 21).unwrap();
        let res = filtered_backprojection(&ds, &RadonConfig::default()).unwrap();
        let truth = WignerGrid::from_fn(GridSpec::default(), vacuum_w);
        let err = res.wigner.max_abs_diff(&truth);
        assert!(err <= 0.015, "max error {err}");
        assert!((res.wigner.integral() - 1.0).abs() < 1e-3);
        assert!(res.report.low_count_bins.is_empty());
    }

    #[test]
    fn missing_phases_are_listed() {
        let rho = make_state(&StateSpec::vacuum()).unwrap();
        let ds = sample_quadratures(&rho, &PhaseSchedule::grid(8), &DetectorModel::ideal(1.0), 800, 1).unwrap();
        match filtered_backprojection(&ds, &RadonConfig { n_phase_bins: 8, ..Default::default() }) {
            Err(OhtError::EmptyPhaseBins(b)) => assert_eq!(b, vec![1, 3, 5, 7]),
            other => panic!("{other:?}"),
        }
        let r = filtered_backprojection(&ds, &RadonConfig { n_phase_bins: 4, ..Default::default() }).unwrap();
        assert_eq!(r.report.low_count_bins.len(), 0);
        assert_eq!(r.report.samples_per_bin, vec![200; 4]);
    }

    #[test]
    fn folding_reflects_quadrature() {
        assert_eq!(fold_sample(PI + 0.5, 1.25), (0.5, -1.25));
        assert_eq!(fold_sample(0.5, 1.25), (0.5, 1.25));
    }

    #[test]
    fn smoothing_limits() {
        let g = GridSpec::default();
        let vac = WignerGrid::from_fn(g, vacuum_w);
        let same = loss_smoothing(&vac, 0.999).unwrap();
        assert!(same.max_abs_diff(&vac) <= 1e-3);
        let eta = 0.6;
        let (_, _, vq, vp) = loss_smoothing(&vac, eta).unwrap().moments();
        let expect = 0.5 + (1.0 / eta - 1.0) / 2.0;
        assert!((vq - expect).abs() < 1e-6 && (vp - expect).abs() < 1e-6, "{vq} {vp}");
        assert!(loss_smoothing(&vac, 1.0).is_err());
    }

    #[test]
    fn smoothed_fock_one_at_origin() {
        let g = GridSpec::default();
        let w1 = wigner_from_rho(&make_state(&StateSpec::fock(1)).unwrap(), &g);
        let eta = 0.55;
        let s = loss_smoothing(&w1, eta).unwrap();
        let i0 = g.q.n / 2;
        let var = (1.0 / eta - 1.0) / 2.0;
        let mut direct = 0.0;
        for i in 0..g.q.n {
            for j in 0..g.p.n {
                let r2 = g.q.at(i).powi(2) + g.p.at(j).powi(2);
                direct += w1.values[i][j] * (-r2 / (2.0 * var)).exp();
            }
        }
        direct *= g.cell_area() / (2.0 * PI * var) / w1.integral();
        assert!((s.values[i0][i0] - direct).abs() < 1e-6);
        let analytic = eta * (1.0 - 2.0 * eta) / PI;
        assert!((s.values[i0][i0] - analytic).abs() < 1e-4, "{} vs {analytic}", s.values[i0][i0]);
    }

    #[test]
    fn forward_projection_matches_quadrature_law() {
        let g = GridSpec::square(7.0, 401).unwrap();
        let axis = Axis::symmetric(4.0, 81).unwrap();
        for spec in [
            StateSpec::vacuum(),
            StateSpec::fock(1),
            StateSpec::coherent(Complex64::new(0.6, -0.4)),
            StateSpec::squeezed_vacuum(0.4, 0.3),
        ] {
            let rho = make_state(&spec).unwrap();
            let w = wigner_from_rho(&rho, &g);
            for theta in [0.0, PI / 7.0, PI / 2.0] {
                let pr = radon_forward(&w, theta, &axis);
                let exact = quadrature_pdf(&rho, theta, &axis).unwrap();
                let err = pr.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-4, "{spec:?} θ={theta}: {err}");
            }
        }
    }

    #[test]
    fn squeezed_marginals_swap() {
        let g = GridSpec::default();
        let w = wigner_from_rho(&make_state(&StateSpec::squeezed_vacuum(0.5, 0.0)).unwrap(), &g);
        let axis = Axis::symmetric(6.0, 241).unwrap();
        let var = |pr: &[f64]| {
            let h = axis.step();
            let n: f64 = pr.iter().sum::<f64>() * h;
            axis.points().iter().zip(pr).map(|(q, v)| q * q * v).sum::<f64>() * h / n
        };
        let v0 = var(&radon_forward(&w, 0.0, &axis));
        let v1 = var(&radon_forward(&w, PI / 2.0, &axis));
        assert!((v0 - (-1.0f64).exp() / 2.0).abs() < 1e-3, "{v0}");
        assert!((v1 - 1f64.exp() / 2.0).abs() < 1e-3, "{v1}");
    }
}
