use std::f64::consts::{PI, SQRT_2};
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, OhtError, Result};
use crate::fock::{StateSpec, WignerGrid};
use crate::grid::{Axis, GridSpec};
use crate::homodyne::{check_classical, sample_p_amplitude};
use crate::rng::StreamSplitter;

/// Minimum ratio of LO photons to signal photons for the linearized K_l.
pub const MIN_LO_TO_SIGNAL: f64 = 1e3;
const MIN_PER_BIN: f64 = 10.0;

/// Temporal-mode window [−M, M] with the LO on [−J, J].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    pub m: usize,
    pub j: usize,
    /// β_k for k = −J..=J.
    pub lo_amplitudes: Vec<Complex64>,
    pub n_pulses: usize,
    pub seed: u64,
}

impl SpectralConfig {
    /// M = 32, J = 0 with a real LO amplitude.
    pub fn single_lo(beta0: f64, n_pulses: usize, seed: u64) -> Self {
        Self { m: 32, j: 0, lo_amplitudes: vec![Complex64::new(beta0, 0.0)], n_pulses, seed }
    }

    fn dim(&self) -> usize {
        2 * self.m + 1
    }

    fn lo_photons(&self) -> f64 {
        self.lo_amplitudes.iter().map(|b| b.norm_sqr()).sum()
    }
}

/// Signal temporal modes k ∈ (J, M] with classical states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSignal {
    pub modes: Vec<(usize, StateSpec)>,
    /// One random phase per pulse shared by all signal modes.
    #[serde(default)]
    pub common_random_phase: bool,
}

/// Per-pulse K_l for l ∈ (2J, M].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralRecords {
    pub m: usize,
    pub j: usize,
    pub lo_amplitudes: Vec<Complex64>,
    pub l_values: Vec<usize>,
    /// k[pulse][l − 2J − 1].
    pub k: Vec<Vec<Complex64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KRecord {
    pulse: usize,
    l: usize,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KHeader {
    format: String,
    m: usize,
    j: usize,
    lo_amplitudes: Vec<Complex64>,
    n_pulses: usize,
}

const K_FORMAT: &str = "ohtlab-spectral-v1";

impl SpectralRecords {
    pub fn n_pulses(&self) -> usize {
        self.k.len()
    }

    fn column(&self, l: usize) -> Result<usize> {
        if l <= 2 * self.j || l > self.m {
            return invalid(format!("l = {l} outside (2J, M] = ({}, {}]", 2 * self.j, self.m));
        }
        Ok(l - 2 * self.j - 1)
    }

    pub fn values(&self, l: usize) -> Result<Vec<Complex64>> {
        let c = self.column(l)?;
        Ok(self.k.iter().map(|row| row[c]).collect())
    }

    /// (q_l, p_l) = √2 K_l/β₀* per pulse; vacuum variance 1 per axis.
    pub fn quadratures(&self, l: usize) -> Result<Vec<(f64, f64)>> {
        if self.j != 0 {
            return invalid("quadrature scaling needs a single-mode LO (J = 0)");
        }
        let b = self.lo_amplitudes[0].conj();
        Ok(self.values(l)?.into_iter().map(|k| k / b * SQRT_2).map(|z| (z.re, z.im)).collect())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let h = KHeader {
            format: K_FORMAT.into(),
            m: self.m,
            j: self.j,
            lo_amplitudes: self.lo_amplitudes.clone(),
            n_pulses: self.k.len(),
        };
        serde_json::to_writer(&mut out, &h)?;
        writeln!(out)?;
        for (pulse, row) in self.k.iter().enumerate() {
            for (&l, z) in self.l_values.iter().zip(row) {
                serde_json::to_writer(&mut out, &KRecord { pulse, l, re: z.re, im: z.im })?;
                writeln!(out)?;
            }
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines.next().ok_or_else(|| OhtError::Format("empty K-record file".into()))??;
        let h: KHeader = serde_json::from_str(&first).map_err(|e| OhtError::Format(format!("K header: {e}")))?;
        if h.format != K_FORMAT {
            return Err(OhtError::Format(format!("unknown format {:?}, expected {K_FORMAT}", h.format)));
        }
        if h.lo_amplitudes.len() != 2 * h.j + 1 || h.m <= 2 * h.j {
            return Err(OhtError::Format("inconsistent window in K header".into()));
        }
        let l_values: Vec<usize> = (2 * h.j + 1..=h.m).collect();
        let mut k = vec![vec![Complex64::new(f64::NAN, f64::NAN); l_values.len()]; h.n_pulses];
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: KRecord = serde_json::from_str(&line).map_err(|e| OhtError::Format(format!("K record: {e}")))?;
            if r.pulse >= h.n_pulses || r.l <= 2 * h.j || r.l > h.m {
                return Err(OhtError::Format(format!("K record out of range: pulse {} l {}", r.pulse, r.l)));
            }
            k[r.pulse][r.l - 2 * h.j - 1] = Complex64::new(r.re, r.im);
        }
        if k.iter().flatten().any(|z| z.re.is_nan()) {
            return Err(OhtError::Format("missing K records".into()));
        }
        Ok(Self { m: h.m, j: h.j, lo_amplitudes: h.lo_amplitudes, l_values, k })
    }
}

/// Spectrometer-plane counts N_j ~ Poisson(|a_j|²) of the DFT-mixed temporal
/// modes, and K_l = Σ_j e^{−i2πlj/D} N_j for every l ∈ (2J, M].
pub fn unbalanced_spectral_sim(signal: &SpectralSignal, cfg: &SpectralConfig) -> Result<SpectralRecords> {
    let (m, j) = (cfg.m, cfg.j);
    if m == 0 || m <= 2 * j {
        return invalid(format!("window M = {m} leaves no l in (2J, M] for J = {j}"));
    }
    if cfg.lo_amplitudes.len() != 2 * j + 1 {
        return invalid(format!("{} LO amplitudes for J = {j}; need 2J+1", cfg.lo_amplitudes.len()));
    }
    if cfg.n_pulses == 0 {
        return invalid("n_pulses must be positive");
    }
    let mut signal_photons = 0.0;
    for (k, st) in &signal.modes {
        if *k <= j || *k > m {
            return invalid(format!("signal mode k = {k} outside (J, M] = ({j}, {m}]"));
        }
        check_classical(st)?;
        signal_photons += st.mean_photons();
    }
    let lo = cfg.lo_photons();
    if !(lo >= MIN_LO_TO_SIGNAL * signal_photons) || lo == 0.0 {
        return invalid(format!(
            "LO carries {lo:.3e} photons against {signal_photons:.3e} signal photons; dropping the quadratic signal terms needs a ratio of at least {MIN_LO_TO_SIGNAL:.0e}"
        ));
    }
    let d = cfg.dim();
    let twiddle: Vec<Complex64> = (0..d).map(|r| Complex64::from_polar(1.0, 2.0 * PI * r as f64 / d as f64)).collect();
    let norm = 1.0 / (d as f64).sqrt();
    let l_values: Vec<usize> = (2 * j + 1..=m).collect();
    let split = StreamSplitter::new(cfg.seed);
    let k = (0..cfg.n_pulses)
        .into_par_iter()
        .map(|pulse| {
            let mut rng = split.stream(pulse as u64);
            let mut b = vec![Complex64::new(0.0, 0.0); d];
            for (i, beta) in cfg.lo_amplitudes.iter().enumerate() {
                b[m - j + i] = *beta;
            }
            let common = Complex64::from_polar(1.0, 2.0 * PI * rng.gen::<f64>());
            for (k, st) in &signal.modes {
                let mut beta = sample_p_amplitude(st, &mut rng)?;
                if signal.common_random_phase {
                    beta *= common;
                }
                b[m + k] += beta;
            }
            let counts: Vec<f64> = (0..d)
                .map(|jj| {
                    let a: Complex64 = (0..d)
                        .map(|idx| {
                            let kk = idx as i64 - m as i64;
                            twiddle[(jj as i64 * kk).rem_euclid(d as i64) as usize] * b[idx]
                        })
                        .sum::<Complex64>()
                        * norm;
                    let mu = a.norm_sqr();
                    if mu > 0.0 {
                        Poisson::new(mu).expect("positive mean").sample(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok(l_values
                .iter()
                .map(|&l| {
                    counts
                        .iter()
                        .enumerate()
                        .map(|(jj, n)| twiddle[(l * jj) % d].conj() * n)
                        .sum::<Complex64>()
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<Complex64>>>>()?;
    Ok(SpectralRecords { m, j, lo_amplitudes: cfg.lo_amplitudes.clone(), l_values, k })
}

/// Histogram estimates of Q(q_l, p_l) and Q′(q_l, q_l').
#[derive(Debug, Clone, PartialEq)]
pub struct JointQ {
    pub single: WignerGrid,
    pub pair: WignerGrid,
    /// Pearson correlation of q_l and q_l'.
    pub correlation: f64,
    /// (Var q_l, Var p_l).
    pub variances: (f64, f64),
    pub warnings: Vec<String>,
}

fn histogram(points: impl Iterator<Item = (f64, f64)>, axis: Axis, bins: usize) -> WignerGrid {
    let grid = GridSpec { q: axis, p: axis };
    let mut h = WignerGrid::zeros(grid);
    let lo = axis.start - 0.5 * axis.step();
    let w = axis.step();
    for (x, y) in points {
        let i = ((x - lo) / w).floor();
        let k = ((y - lo) / w).floor();
        if i >= 0.0 && k >= 0.0 && (i as usize) < bins && (k as usize) < bins {
            h.values[i as usize][k as usize] += 1.0;
        }
    }
    h.normalized()
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Bins the scaled K records on a `bins`×`bins` grid over [−half_range, half_range]².
pub fn joint_q_histogram(records: &SpectralRecords, l: usize, l2: usize, bins: usize, half_range: f64) -> Result<JointQ> {
    if bins < 2 || !(half_range > 0.0) {
        return invalid("need at least 2 bins and a positive range");
    }
    if l == l2 {
        return invalid("pair histogram needs two distinct modes");
    }
    let a = records.quadratures(l)?;
    let b = records.quadratures(l2)?;
    if a.len() < 2 {
        return invalid("need at least two pulses");
    }
    let step = 2.0 * half_range / bins as f64;
    let axis = Axis::new(-half_range + 0.5 * step, half_range - 0.5 * step, bins)?;
    let mut warnings = Vec::new();
    let per_bin = a.len() as f64 / (bins * bins) as f64;
    if per_bin < MIN_PER_BIN {
        warnings.push(format!("{per_bin:.1} records per bin on average; the histogram is noisy below {MIN_PER_BIN}"));
    }
    let single = histogram(a.iter().copied(), axis, bins);
    let pair = histogram(a.iter().zip(&b).map(|(x, y)| (x.0, y.0)), axis, bins);
    let qa: Vec<f64> = a.iter().map(|x| x.0).collect();
    let pa: Vec<f64> = a.iter().map(|x| x.1).collect();
    let qb: Vec<f64> = b.iter().map(|x| x.0).collect();
    let (ma, va) = moments(&qa);
    let (_, vp) = moments(&pa);
    let (mb, vb) = moments(&qb);
    let cov = qa.iter().zip(&qb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (qa.len() as f64 - 1.0);
    Ok(JointQ { single, pair, correlation: cov / (va * vb).sqrt(), variances: (va, vp), warnings })
}
