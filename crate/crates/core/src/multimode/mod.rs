//! Two-mode primitives: dual-LO combined quadratures, SU(2) mode mixing,
//! two-time and two-polarization coherence, Stokes moments.

mod coherence;
mod planted;
mod sampling;

pub use coherence::{
    polarization_g2, simulate_polarization_runs, two_time_g2, PolarizationBasis, PolarizationRow, PolarizationRuns,
    PolarizationTable, ThreeAlphaRuns, TwoTimeG2,
};
pub use planted::{number_g2_cross, FockMarginals, PhotonNumberLaw};
pub use sampling::{combined_quadrature_samples, grips_quadrature_samples, planted_joint_quadratures, JointQuadrature};

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, OhtError, Result};
use crate::fock::{annihilation, DensityMatrix};
use crate::homodyne::PhaseSchedule;

/// Largest per-mode Fock dimension of a joint state.
pub const MAX_JOINT_DIM: usize = 10;

const TRACE_TOL: f64 = 1e-9;

/// Density matrix on the truncated space of two modes; index n1·d2 + n2.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    d1: usize,
    d2: usize,
    rho: DMatrix<Complex64>,
}

impl JointState {
    pub fn new(d1: usize, d2: usize, rho: DMatrix<Complex64>) -> Result<Self> {
        if d1 == 0 || d2 == 0 {
            return invalid("mode dimensions must be positive");
        }
        if rho.nrows() != d1 * d2 || rho.ncols() != d1 * d2 {
            return invalid(format!("joint matrix must be {0}×{0}", d1 * d2));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return invalid(format!("joint trace {tr} differs from 1"));
        }
        let herm = (&rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > TRACE_TOL {
            return invalid(format!("joint matrix not Hermitian (deviation {herm:.2e})"));
        }
        Ok(Self { d1, d2, rho })
    }

    /// Pure state from amplitudes indexed n1·d2 + n2, normalized.
    pub fn pure(d1: usize, d2: usize, amplitudes: &[Complex64]) -> Result<Self> {
        if amplitudes.len() != d1 * d2 {
            return invalid(format!("expected {} amplitudes", d1 * d2));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return invalid("zero state vector");
        }
        let v = nalgebra::DVector::from_iterator(d1 * d2, amplitudes.iter().map(|a| a / norm));
        Self::new(d1, d2, &v * v.adjoint())
    }

    pub fn product(a: &DensityMatrix, b: &DensityMatrix) -> Result<Self> {
        Self::new(a.dim(), b.dim(), a.elements().kronecker(b.elements()))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    pub fn elements(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn index(&self, n1: usize, n2: usize) -> usize {
        n1 * self.d2 + n2
    }

    pub fn mode1(&self) -> DensityMatrix {
        let m = DMatrix::from_fn(self.d1, self.d1, |a, b| {
            (0..self.d2).map(|k| self.rho[(self.index(a, k), self.index(b, k))]).sum()
        });
        DensityMatrix::hermitian_part(m, true).expect("partial trace of a valid state")
    }

    pub fn mode2(&self) -> DensityMatrix {
        let m = DMatrix::from_fn(self.d2, self.d2, |a, b| {
            (0..self.d1).map(|k| self.rho[(self.index(k, a), self.index(k, b))]).sum()
        });
        DensityMatrix::hermitian_part(m, true).expect("partial trace of a valid state")
    }

    pub fn expect(&self, op: &DMatrix<Complex64>) -> Complex64 {
        (&self.rho * op).trace()
    }

    /// Photon-number operators of both modes on the joint space.
    pub fn number_operators(&self) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        let (a1, a2) = self.mode_operators();
        (a1.adjoint() * &a1, a2.adjoint() * &a2)
    }

    pub fn mode_operators(&self) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        let i1 = DMatrix::<Complex64>::identity(self.d1, self.d1);
        let i2 = DMatrix::<Complex64>::identity(self.d2, self.d2);
        (annihilation(self.d1).kronecker(&i2), i1.kronecker(&annihilation(self.d2)))
    }

    /// State seen in the output modes (3, 4) of [`grips_transform`]. The
    /// output dimensions are d1 + d2 − 1 so no amplitude is truncated.
    pub fn grips(&self, gamma: f64, zeta: f64) -> Self {
        let u = grips_transform(gamma, zeta);
        let dout = self.d1 + self.d2 - 1;
        let (a, b, c, d) = (u[(0, 0)], u[(1, 0)], u[(0, 1)], u[(1, 1)]);
        let fact: Vec<f64> = (0..=dout).scan(1.0, |f, k| {
            let v = *f;
            *f *= (k + 1) as f64;
            Some(v)
        }).collect();
        let binom = |n: usize, k: usize| fact[n] / (fact[k] * fact[n - k]);
        let mut t = DMatrix::<Complex64>::zeros(dout * dout, self.d1 * self.d2);
        for n1 in 0..self.d1 {
            for n2 in 0..self.d2 {
                let total = n1 + n2;
                let norm = 1.0 / (fact[n1] * fact[n2]).sqrt();
                for j in 0..=n1 {
                    for k in 0..=n2 {
                        let m = j + k;
                        let coeff = a.powu(j as u32) * b.powu((n1 - j) as u32) * c.powu(k as u32) * d.powu((n2 - k) as u32)
                            * (binom(n1, j) * binom(n2, k) * norm * (fact[m] * fact[total - m]).sqrt());
                        t[(m * dout + (total - m), self.index(n1, n2))] += coeff;
                    }
                }
            }
        }
        let rho = &t * &self.rho * t.adjoint();
        Self { d1: dout, d2: dout, rho }
    }
}

/// Two-mode state accepted by the samplers.
#[derive(Debug, Clone, PartialEq)]
pub enum TwoModeState {
    Joint(JointState),
    /// Number-diagonal, phase-random state with a planted photon-number law.
    Planted(PhotonNumberLaw),
}

impl TwoModeState {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Joint(j) => {
                let (d1, d2) = j.dims();
                if d1 > MAX_JOINT_DIM || d2 > MAX_JOINT_DIM {
                    return Err(OhtError::UnsupportedState(format!(
                        "joint Fock dimensions {d1}×{d2} exceed {MAX_JOINT_DIM} per mode"
                    )));
                }
                Ok(())
            }
            Self::Planted(law) => law.validate(),
        }
    }
}

/// Dual-LO setting: mixing angle α ∈ [0, π/2], common phase θ and relative
/// phase ζ schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LOSuperposition {
    pub alpha: f64,
    pub theta: PhaseSchedule,
    pub zeta: PhaseSchedule,
}

impl LOSuperposition {
    /// α with θ and ζ independently uniform over 2π.
    pub fn randomized(alpha: f64) -> Self {
        Self { alpha, theta: PhaseSchedule::UniformRandom, zeta: PhaseSchedule::UniformRandom }
    }

    pub fn fixed(alpha: f64, theta: f64, zeta: f64) -> Self {
        Self { alpha, theta: PhaseSchedule::Fixed { phase: theta }, zeta: PhaseSchedule::Fixed { phase: zeta } }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&self.alpha) {
            return invalid(format!("mixing angle α = {} outside [0, π/2]", self.alpha));
        }
        self.theta.validate()?;
        self.zeta.validate()
    }

    /// Coefficients (c1, c2) of the detected mode â = c1 â1 + c2 â2.
    pub fn mode_coefficients(&self, zeta: f64) -> [Complex64; 2] {
        [Complex64::new(self.alpha.cos(), 0.0), Complex64::from_polar(self.alpha.sin(), zeta)]
    }
}

/// SU(2) map (â1, â2) → (â3, â4) with c = cos(γ/2), s = sin(γ/2):
/// â3 = c â1 + e^{iζ} s â2, â4 = −s â1 + e^{iζ} c â2.
pub fn grips_transform(gamma: f64, zeta: f64) -> Matrix2<Complex64> {
    let (s, c) = (gamma / 2.0).sin_cos();
    let e = Complex64::from_polar(1.0, zeta);
    Matrix2::new(Complex64::new(c, 0.0), e * s, Complex64::new(-s, 0.0), e * c)
}

/// First and symmetrized second moments of the Stokes operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StokesMoments {
    pub means: [f64; 3],
    /// ⟨J_i J_j + J_j J_i⟩/2.
    pub second: [[f64; 3]; 3],
}

/// Ĵ1, Ĵ2, Ĵ3 on the truncated joint space.
pub fn stokes_operators(d: usize) -> [DMatrix<Complex64>; 3] {
    let i = DMatrix::<Complex64>::identity(d, d);
    let a1 = annihilation(d).kronecker(&i);
    let a2 = i.kronecker(&annihilation(d));
    let half = Complex64::new(0.5, 0.0);
    let j1 = (a1.adjoint() * &a1 - a2.adjoint() * &a2) * half;
    let j2 = (a1.adjoint() * &a2 + a2.adjoint() * &a1) * half;
    let j3 = (a1.adjoint() * &a2 - a2.adjoint() * &a1) * Complex64::new(0.0, -0.5);
    [j1, j2, j3]
}

pub fn stokes_moments(st: &JointState) -> Result<StokesMoments> {
    let (d1, d2) = st.dims();
    if d1 != d2 {
        return invalid(format!("Stokes moments need equal mode dimensions, got {d1} and {d2}"));
    }
    let j = stokes_operators(d1);
    let means = [0, 1, 2].map(|k| st.expect(&j[k]).re);
    let mut second = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            second[a][b] = st.expect(&((&j[a] * &j[b] + &j[b] * &j[a]) * Complex64::new(0.5, 0.0))).re;
        }
    }
    Ok(StokesMoments { means, second })
}
