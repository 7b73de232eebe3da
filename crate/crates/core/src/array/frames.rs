use std::io::{BufRead, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModeVector, PixelGrid};
use crate::error::{invalid, OhtError, Result};
use crate::fock::StateSpec;
use crate::homodyne::{
    check_classical, sample_p_amplitude, DatasetMeta, DetectorModel, PhaseSchedule, QuadratureDataset,
    QuadratureSample,
};
use crate::moments::check_phase_averaging;
use crate::rng::StreamSplitter;

pub const ARRAY_FORMAT: &str = "ohtlab-array-v1";
/// Smallest LO photon number per pixel for the strong-LO replacement.
pub const MIN_PIXEL_LO: f64 = 1e3;
const DEGENERACY_TOL: f64 = 1e-9;

/// Planted signal mode with its (classical) state; the profile is
/// normalized with A_p Σ |w|² = 1 and may be complex.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySignal {
    pub profile: Vec<Complex64>,
    pub state: StateSpec,
}

impl ArraySignal {
    pub fn real(mode: &ModeVector, state: StateSpec) -> Self {
        Self { profile: mode.to_complex(), state }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySimOptions {
    /// Per-pixel splitting imbalance drawn uniformly in ±this fraction.
    pub offset_fraction: f64,
    /// Pulses in the blocked-signal calibration run; defaults to the main run.
    pub vacuum_frames: Option<usize>,
}

impl Default for ArraySimOptions {
    fn default() -> Self {
        Self { offset_fraction: 0.01, vacuum_frames: None }
    }
}

/// Per-pixel difference counts of one pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayFrame {
    pub theta: f64,
    pub d: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayFrameSet {
    pub grid: PixelGrid,
    pub det: DetectorModel,
    pub schedule: PhaseSchedule,
    pub seed: u64,
    pub frames: Vec<ArrayFrame>,
    /// ⟨N_−j⟩ of the blocked-signal run.
    pub vacuum_offsets: Vec<f64>,
    pub description: String,
    pub warnings: Vec<String>,
}

impl ArrayFrameSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// N_−j − ⟨N_−j⟩_vac.
    pub fn corrected(&self, i: usize) -> Vec<f64> {
        self.frames[i].d.iter().zip(&self.vacuum_offsets).map(|(&d, o)| d as f64 - o).collect()
    }

    fn lo_amplitude(&self) -> f64 {
        self.det.lo_mean_photons.sqrt()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = ArrayHeader {
            format: ARRAY_FORMAT.into(),
            n_pixels: self.grid.n_pixels,
            pixel_area: self.grid.pixel_area,
            detector: self.det,
            schedule: self.schedule,
            seed: self.seed,
            n_frames: self.frames.len(),
            vacuum_offsets: self.vacuum_offsets.clone(),
            description: self.description.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        writeln!(out)?;
        for f in &self.frames {
            serde_json::to_writer(&mut out, f)?;
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines.next().ok_or_else(|| OhtError::Format("empty array frame file".into()))??;
        let h: ArrayHeader = serde_json::from_str(&first).map_err(|e| OhtError::Format(format!("array header: {e}")))?;
        if h.format != ARRAY_FORMAT {
            return Err(OhtError::Format(format!("unknown format {:?}, expected {ARRAY_FORMAT}", h.format)));
        }
        let grid = PixelGrid::new(h.n_pixels, h.pixel_area)?;
        if h.vacuum_offsets.len() != h.n_pixels {
            return Err(OhtError::Format("vacuum offsets length differs from n_pixels".into()));
        }
        let mut frames = Vec::with_capacity(h.n_frames);
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: ArrayFrame =
                serde_json::from_str(&line).map_err(|e| OhtError::Format(format!("frame {}: {e}", k + 1)))?;
            if f.d.len() != h.n_pixels {
                return Err(OhtError::Format(format!("frame {} has {} pixels", k + 1, f.d.len())));
            }
            frames.push(f);
        }
        if frames.len() != h.n_frames {
            return Err(OhtError::Format(format!("header announces {} frames, found {}", h.n_frames, frames.len())));
        }
        Ok(Self {
            grid,
            det: h.detector,
            schedule: h.schedule,
            seed: h.seed,
            frames,
            vacuum_offsets: h.vacuum_offsets,
            description: h.description,
            warnings: Vec::new(),
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayHeader {
    format: String,
    n_pixels: usize,
    pixel_area: f64,
    detector: DetectorModel,
    schedule: PhaseSchedule,
    seed: u64,
    n_frames: usize,
    vacuum_offsets: Vec<f64>,
    description: String,
}

pub fn simulate_array_frames(
    signals: &[ArraySignal],
    det: &DetectorModel,
    grid: &PixelGrid,
    sched: &PhaseSchedule,
    n_frames: usize,
    seed: u64,
) -> Result<ArrayFrameSet> {
    simulate_array_frames_with(signals, det, grid, sched, n_frames, seed, &ArraySimOptions::default())
}

fn poisson<R: Rng>(mean: f64, rng: &mut R) -> i64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng) as i64
    }
}

/// Plane-wave LO |α_L|e^{iθ}/√n_pixels per pixel; per pixel both arrays are
/// Poisson-sampled around their classical means for a P-function draw of
/// every signal mode, electronic noise is added per channel, and a
/// blocked-signal run fixes the offsets.
pub fn simulate_array_frames_with(
    signals: &[ArraySignal],
    det: &DetectorModel,
    grid: &PixelGrid,
    sched: &PhaseSchedule,
    n_frames: usize,
    seed: u64,
    opts: &ArraySimOptions,
) -> Result<ArrayFrameSet> {
    det.validate()?;
    grid.validate()?;
    sched.validate()?;
    if n_frames == 0 {
        return invalid("n_frames must be positive");
    }
    let n = grid.n_pixels;
    let pixel_lo = det.lo_mean_photons / n as f64;
    if pixel_lo < MIN_PIXEL_LO {
        return invalid(format!("LO gives {pixel_lo:.0} photons per pixel, need at least {MIN_PIXEL_LO}"));
    }
    if !(0.0..0.5).contains(&opts.offset_fraction) {
        return invalid("offset_fraction must lie in [0, 0.5)");
    }
    let mut warnings = Vec::new();
    for s in signals {
        check_classical(&s.state)?;
        if s.profile.len() != n {
            return invalid(format!("signal profile has {} values for {n} pixels", s.profile.len()));
        }
        let norm = grid.pixel_area * s.profile.iter().map(|w| w.norm_sqr()).sum::<f64>();
        if (norm - 1.0).abs() > 1e-6 {
            return invalid(format!("signal profile norm {norm}, expected 1"));
        }
    }
    for (a, sa) in signals.iter().enumerate() {
        for sb in &signals[a + 1..] {
            let ov: Complex64 = sa.profile.iter().zip(&sb.profile).map(|(x, y)| x.conj() * y).sum::<Complex64>() * grid.pixel_area;
            if ov.norm() > 1e-6 {
                warnings.push(format!("planted modes overlap ({:.3}); projections mix them", ov.norm()));
            }
        }
    }
    let split = StreamSplitter::new(seed);
    let mut offset_rng = split.child(0).stream(0);
    let eps: Vec<f64> = (0..n).map(|_| opts.offset_fraction * (2.0 * offset_rng.gen::<f64>() - 1.0)).collect();
    let lo_amp = (pixel_lo).sqrt();
    let sqrt_ap = grid.pixel_area.sqrt();
    let elec = (det.sigma_e > 0.0).then(|| Normal::new(0.0, det.sigma_e).expect("finite σ_e"));

    let pulse = |stream: &StreamSplitter, i: usize, with_signal: bool| -> Result<ArrayFrame> {
        let mut rng = stream.stream(i as u64);
        let theta = sched.theta(i, n_frames, &mut rng);
        let mut field = vec![Complex64::new(0.0, 0.0); n];
        if with_signal {
            for s in signals {
                let beta = sample_p_amplitude(&s.state, &mut rng)?;
                for (f, w) in field.iter_mut().zip(&s.profile) {
                    *f += beta * w * sqrt_ap;
                }
            }
        }
        let lo = Complex64::from_polar(lo_amp, theta);
        let d = (0..n)
            .map(|j| {
                let t = (0.5 * (1.0 + eps[j])).sqrt();
                let r = (0.5 * (1.0 - eps[j])).sqrt();
                let mu1 = det.eta_q * (lo * t + field[j] * r).norm_sqr();
                let mu2 = det.eta_q * (lo * r - field[j] * t).norm_sqr();
                let mut diff = poisson(mu1, &mut rng) - poisson(mu2, &mut rng);
                if let Some(e) = &elec {
                    diff += e.sample(&mut rng).round() as i64 - e.sample(&mut rng).round() as i64;
                }
                diff
            })
            .collect();
        Ok(ArrayFrame { theta, d })
    };

    let main = split.child(1);
    let frames = (0..n_frames).into_par_iter().map(|i| pulse(&main, i, true)).collect::<Result<Vec<_>>>()?;
    let n_vac = opts.vacuum_frames.unwrap_or(n_frames).max(1);
    let blocked = split.child(2);
    let vac = (0..n_vac).into_par_iter().map(|i| pulse(&blocked, i, false)).collect::<Result<Vec<_>>>()?;
    let vacuum_offsets = (0..n).map(|j| vac.iter().map(|f| f.d[j] as f64).sum::<f64>() / n_vac as f64).collect();
    let description = signals
        .iter()
        .map(|s| serde_json::to_string(&s.state))
        .collect::<std::result::Result<Vec<_>, _>>()?
        .join("; ");
    Ok(ArrayFrameSet {
        grid: *grid,
        det: *det,
        schedule: *sched,
        seed,
        frames,
        vacuum_offsets,
        description,
        warnings,
    })
}

fn projection_scale(frames: &ArrayFrameSet) -> f64 {
    (frames.grid.array_area() / 2.0).sqrt() / (frames.det.eta_q * frames.lo_amplitude())
}

/// q_mθ = (1/(η_q|α_L|)) (A_a/2)^{1/2} Σ_j (N_−j − ⟨N_−j⟩_vac) w_j per pulse.
/// The record's vacuum variance is 1/(2η_q), as for a single detector with
/// η_eff = η_q and no mode-overlap loss.
pub fn project_mode_quadrature(frames: &ArrayFrameSet, w: &ModeVector) -> Result<QuadratureDataset> {
    ModeVector::new(&frames.grid, w.values().to_vec())?;
    if frames.is_empty() {
        return invalid("no frames");
    }
    let scale = projection_scale(frames);
    let samples = (0..frames.len())
        .into_par_iter()
        .map(|i| {
            let c = frames.corrected(i);
            let q = scale * c.iter().zip(w.values()).map(|(a, b)| a * b).sum::<f64>();
            QuadratureSample::new(frames.frames[i].theta, q)
        })
        .collect();
    let det = DetectorModel { eta_ls: 1.0, balance_imbalance: 0.0, ..frames.det };
    let meta = DatasetMeta {
        label: Some(format!("array projection: {}", frames.description)),
        ..DatasetMeta::new(det, frames.schedule, frames.seed)
    };
    Ok(QuadratureDataset::new(samples, meta))
}

/// Phase-averaged ⟨N_−i N_−j⟩ of the corrected frames with element-wise
/// standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub m: DMatrix<f64>,
    pub std_err: DMatrix<f64>,
    pub n_frames: usize,
}

pub fn difference_correlation_matrix(frames: &ArrayFrameSet) -> Result<CorrelationMatrix> {
    let probe = QuadratureDataset::new(
        frames.frames.iter().map(|f| QuadratureSample::new(f.theta, 0.0)).collect(),
        DatasetMeta::new(frames.det, frames.schedule, frames.seed),
    );
    check_phase_averaging(&probe, 1)?;
    let n = frames.grid.n_pixels;
    let k = frames.len();
    let (s1, s2) = (0..k)
        .into_par_iter()
        .fold(
            || (DMatrix::<f64>::zeros(n, n), DMatrix::<f64>::zeros(n, n)),
            |(mut a, mut b), i| {
                let c = nalgebra::DVector::from_vec(frames.corrected(i));
                let outer = &c * c.transpose();
                b += outer.component_mul(&outer);
                a += outer;
                (a, b)
            },
        )
        .reduce(|| (DMatrix::zeros(n, n), DMatrix::zeros(n, n)), |x, y| (x.0 + y.0, x.1 + y.1));
    let kf = k as f64;
    let m = &s1 / kf;
    let std_err = DMatrix::from_fn(n, n, |i, j| {
        let var = (s2[(i, j)] / kf - m[(i, j)].powi(2)).max(0.0) * kf / (kf - 1.0).max(1.0);
        (var / kf).sqrt()
    });
    let m = (&m + m.transpose()) * 0.5;
    Ok(CorrelationMatrix { m, std_err, n_frames: k })
}

/// Top eigenvector of M as a mode and the photon number it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalMode {
    pub mode: ModeVector,
    pub eigenvalue: f64,
    /// (A_a/(2η_q²|α_L|²)) wᵀMw − 1/(2η_q) − electronic term.
    pub mean_photons: f64,
}

pub fn optimal_mode(m: &CorrelationMatrix, frames: &ArrayFrameSet) -> Result<OptimalMode> {
    let mat = &m.m;
    let n = frames.grid.n_pixels;
    if mat.nrows() != n || mat.ncols() != n {
        return invalid("correlation matrix does not match the pixel grid");
    }
    let asym = (mat - mat.transpose()).abs().max();
    if asym > 1e-12 * mat.abs().max().max(1.0) {
        return invalid(format!("correlation matrix not symmetric (deviation {asym:.2e})"));
    }
    let eig = SymmetricEigen::new(mat.clone());
    let top = eig.eigenvalues.max();
    let tol = DEGENERACY_TOL * top.abs().max(f64::MIN_POSITIVE);
    let pick = (0..n)
        .filter(|&k| top - eig.eigenvalues[k] <= tol)
        .map(|k| {
            let v = eig.eigenvectors.column(k);
            let peak = (0..n).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a))).expect("n > 0");
            (peak, k)
        })
        .min()
        .map(|(_, k)| k)
        .expect("at least one eigenvalue");
    let v = eig.eigenvectors.column(pick);
    let peak = (0..n).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a))).expect("n > 0");
    let sign = v[peak].signum();
    let unit: Vec<f64> = v.iter().map(|x| x * sign).collect();
    let mode = ModeVector::normalized(&frames.grid, unit)?;
    let w = nalgebra::DVector::from_column_slice(mode.values());
    let quad = (w.transpose() * mat * &w)[(0, 0)];
    let det = &frames.det;
    let lo2 = det.lo_mean_photons;
    let eta = det.eta_q;
    let mean_photons = frames.grid.array_area() / (2.0 * eta * eta * lo2) * quad
        - 0.5 / eta
        - n as f64 * det.sigma_e.powi(2) / (eta * eta * lo2);
    Ok(OptimalMode { mode, eigenvalue: eig.eigenvalues[pick], mean_photons })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homodyne::sample_state;
    use crate::moments::mean_photon;

    fn det(eta: f64) -> DetectorModel {
        DetectorModel { eta_q: eta, lo_mean_photons: 1e6, ..Default::default() }
    }

    fn mean_var(ds: &QuadratureDataset) -> (f64, f64, f64) {
        let n = ds.len() as f64;
        let m = ds.qs().sum::<f64>() / n;
        let v = ds.qs().map(|q| (q - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v, v * (2.0 / (n - 1.0)).sqrt())
    }

    #[test]
    fn vacuum_frames_and_projection() {
        let g = PixelGrid::default();
        let eta = 0.8;
        let fs = simulate_array_frames(&[], &det(eta), &g, &PhaseSchedule::UniformRandom, 20_000, 1).unwrap();
        for j in [0, 31, 63] {
            let c: Vec<f64> = (0..fs.len()).map(|i| fs.corrected(i)[j]).collect();
            let m = c.iter().sum::<f64>() / c.len() as f64;
            let sd = (c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / c.len() as f64).sqrt();
            assert!(m.abs() < 3.0 * sd * (2.0 / c.len() as f64).sqrt(), "pixel {j}: {m}");
        }
        for w in [ModeVector::uniform(&g), ModeVector::hermite_gauss(&g, 0, 10.0).unwrap(), ModeVector::hermite_gauss(&g, 1, 10.0).unwrap()] {
            let ds = project_mode_quadrature(&fs, &w).unwrap();
            let (_, v, se) = mean_var(&ds);
            assert!((v - 0.5 / eta).abs() < 3.0 * se, "{v} vs {}", 0.5 / eta);
        }
    }

    #[test]
    fn coherent_mode_recovery_and_orthogonality() {
        let g = PixelGrid::default();
        let w0 = ModeVector::hermite_gauss(&g, 0, 12.0).unwrap();
        let w1 = ModeVector::hermite_gauss(&g, 1, 12.0).unwrap();
        let alpha = Complex64::from_polar(1.5, 0.4);
        let theta = 1.0;
        let fs = simulate_array_frames(&[ArraySignal::real(&w0, StateSpec::coherent(alpha))], &det(1.0), &g, &PhaseSchedule::Fixed { phase: theta }, 20_000, 2).unwrap();
        let (m, v, _) = mean_var(&project_mode_quadrature(&fs, &w0).unwrap());
        let expect = std::f64::consts::SQRT_2 * alpha.norm() * (theta - alpha.arg()).cos();
        assert!((m - expect).abs() < 3.0 * (v / fs.len() as f64).sqrt(), "{m} vs {expect}");
        let (m1, v1, se1) = mean_var(&project_mode_quadrature(&fs, &w1).unwrap());
        assert!(m1.abs() < 3.0 * (v1 / fs.len() as f64).sqrt());
        assert!((v1 - 0.5).abs() < 3.0 * se1);
    }

    #[test]
    fn ramp_mode_flips_sign_across_centre_and_with_phase() {
        let g = PixelGrid::default();
        let ramp = ModeVector::hermite_gauss(&g, 1, 16.0).unwrap();
        let sig = [ArraySignal::real(&ramp, StateSpec::coherent(Complex64::new(4.0, 0.0)))];
        let slope = |theta: f64| {
            let fs = simulate_array_frames(&sig, &det(1.0), &g, &PhaseSchedule::Fixed { phase: theta }, 2_000, 3).unwrap();
            let mean: Vec<f64> = (0..g.n_pixels).map(|j| (0..fs.len()).map(|i| fs.corrected(i)[j]).sum::<f64>() / fs.len() as f64).collect();
            let x = g.coords();
            x.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>()
        };
        let s0 = slope(0.0);
        let spi = slope(std::f64::consts::PI);
        assert!(s0 > 0.0 && spi < 0.0, "{s0} {spi}");
        let w = ramp.values();
        assert!(w[10] * w[53] < 0.0);
    }

    #[test]
    fn whole_array_sum_matches_point_detector() {
        let g = PixelGrid::default();
        let u = ModeVector::uniform(&g);
        let state = StateSpec::coherent(Complex64::new(1.0, 0.5));
        let fs = simulate_array_frames(&[ArraySignal::real(&u, state)], &det(0.9), &g, &PhaseSchedule::grid(8), 40_000, 4).unwrap();
        let arr = project_mode_quadrature(&fs, &u).unwrap();
        let point = sample_state(&state, &PhaseSchedule::grid(8), &DetectorModel::ideal(0.9), 40_000, 5).unwrap();
        let (ma, va, sa) = mean_var(&arr);
        let (mp, vp, sp) = mean_var(&point);
        let se_m = ((va + vp) / 40_000.0).sqrt();
        assert!((ma - mp).abs() < 3.0 * se_m, "{ma} vs {mp}");
        assert!((va - vp).abs() < 3.0 * (sa * sa + sp * sp).sqrt(), "{va} vs {vp}");
    }

    #[test]
    fn correlation_matrix_of_vacuum_is_diagonal() {
        let g = PixelGrid::new(16, 1.0).unwrap();
        let fs = simulate_array_frames(&[], &DetectorModel { lo_mean_photons: 1e5, ..det(1.0) }, &g, &PhaseSchedule::UniformRandom, 20_000, 6).unwrap();
        let cm = difference_correlation_matrix(&fs).unwrap();
        assert_eq!(cm.m, cm.m.transpose());
        let c = 1e5 / 16.0;
        let mut bad = 0;
        for i in 0..16 {
            assert!((cm.m[(i, i)] - c).abs() < 4.0 * cm.std_err[(i, i)], "{} vs {c}", cm.m[(i, i)]);
            for j in 0..i {
                if cm.m[(i, j)].abs() > 3.0 * cm.std_err[(i, j)] {
                    bad += 1;
                }
            }
        }
        assert!(bad <= 3, "{bad} of 120 off-diagonals beyond 3σ");
        let om = optimal_mode(&cm, &fs).unwrap();
        let quad = project_mode_quadrature(&fs, &om.mode).unwrap();
        let (_, v, _) = mean_var(&quad);
        assert!(om.mean_photons.abs() < 0.1, "{}", om.mean_photons);
        assert!(v > 0.0);
    }

    #[test]
    fn optimal_mode_finds_the_planted_mode() {
        let g = PixelGrid::default();
        let w0 = ModeVector::hermite_gauss(&g, 0, 10.0).unwrap();
        let w1 = ModeVector::hermite_gauss(&g, 1, 10.0).unwrap();
        let planted = w0.combine(0.6, &w1, 0.8, &g).unwrap();
        let fs = simulate_array_frames(&[ArraySignal::real(&planted, StateSpec::thermal(5.0))], &det(1.0), &g, &PhaseSchedule::UniformRandom, 10_000, 7).unwrap();
        let cm = difference_correlation_matrix(&fs).unwrap();
        let om = optimal_mode(&cm, &fs).unwrap();
        assert!(om.mode.overlap(&planted, &g).abs() >= 0.99, "{}", om.mode.overlap(&planted, &g));
        assert!((om.mean_photons - 5.0).abs() < 0.5, "{}", om.mean_photons);

        let two = [ArraySignal::real(&w0, StateSpec::thermal(1.0)), ArraySignal::real(&w1, StateSpec::thermal(5.0))];
        let fs2 = simulate_array_frames(&two, &det(1.0), &g, &PhaseSchedule::UniformRandom, 10_000, 8).unwrap();
        let om2 = optimal_mode(&difference_correlation_matrix(&fs2).unwrap(), &fs2).unwrap();
        assert!(om2.mode.overlap(&w1, &g).abs() >= 0.99);
    }

    #[test]
    fn array_beats_mismatched_point_detection() {
        let g = PixelGrid::default();
        let u = ModeVector::uniform(&g);
        let odd = ModeVector::hermite_gauss(&g, 1, 12.0).unwrap();
        let eta_ls: f64 = 0.5;
        let sig_mode = u.combine(eta_ls, &odd, (1.0 - eta_ls * eta_ls).sqrt(), &g).unwrap();
        assert!((sig_mode.overlap(&u, &g) - eta_ls).abs() < 1e-12);
        let fs = simulate_array_frames(&[ArraySignal::real(&sig_mode, StateSpec::thermal(2.0))], &det(0.9), &g, &PhaseSchedule::UniformRandom, 20_000, 9).unwrap();
        let whole = mean_photon(&project_mode_quadrature(&fs, &u).unwrap()).unwrap();
        let matched = mean_photon(&project_mode_quadrature(&fs, &sig_mode).unwrap()).unwrap();
        let ratio = matched.value / whole.value;
        assert!(ratio >= 1.0 / eta_ls, "{ratio}");
        assert!((matched.value - 0.9 * 2.0).abs() < 3.0 * matched.std_err);
    }

    #[test]
    fn weak_lo_and_file_round_trip() {
        let g = PixelGrid::default();
        assert!(simulate_array_frames(&[], &DetectorModel { lo_mean_photons: 1e4, ..det(1.0) }, &g, &PhaseSchedule::UniformRandom, 10, 1).is_err());
        let fs = simulate_array_frames(&[], &det(1.0), &g, &PhaseSchedule::grid(4), 5, 1).unwrap();
        let mut buf = Vec::new();
        fs.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"format\":\"ohtlab-array-v1\""));
        let back = ArrayFrameSet::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back.frames, fs.frames);
        assert_eq!(back.vacuum_offsets, fs.vacuum_offsets);
        let fixed = simulate_array_frames(&[], &det(1.0), &g, &PhaseSchedule::Fixed { phase: 0.0 }, 5, 1).unwrap();
        assert!(matches!(difference_correlation_matrix(&fixed), Err(OhtError::PhaseCoverage(_))));
    }
}
