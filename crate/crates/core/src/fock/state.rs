use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, OhtError, Result};

/// Default Fock truncation.
pub const DEFAULT_DIM: usize = 20;
/// Largest dimension the constructor grows to before giving up.
pub const MAX_AUTO_DIM: usize = 120;
/// Allowed probability mass beyond the truncation.
pub const LEAK_TOLERANCE: f64 = 1e-6;

/// Analytically known states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateKind {
    Vacuum,
    Fock { n: usize },
    Coherent { alpha: Complex64 },
    Thermal { nbar: f64 },
    SqueezedVacuum { r: f64, phi: f64 },
    SqueezedCoherent { r: f64, phi: f64, alpha: Complex64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    #[serde(flatten)]
    pub kind: StateKind,
    #[serde(default = "default_dim")]
    pub truncation_dim: usize,
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

impl StateSpec {
    pub fn new(kind: StateKind) -> Self {
        Self { kind, truncation_dim: DEFAULT_DIM }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.truncation_dim = dim;
        self
    }

    pub fn vacuum() -> Self {
        Self::new(StateKind::Vacuum)
    }

    pub fn fock(n: usize) -> Self {
        Self::new(StateKind::Fock { n })
    }

    pub fn coherent(alpha: Complex64) -> Self {
        Self::new(StateKind::Coherent { alpha })
    }

    pub fn thermal(nbar: f64) -> Self {
        Self::new(StateKind::Thermal { nbar })
    }

    pub fn squeezed_vacuum(r: f64, phi: f64) -> Self {
        Self::new(StateKind::SqueezedVacuum { r, phi })
    }

    pub fn squeezed_coherent(r: f64, phi: f64, alpha: Complex64) -> Self {
        Self::new(StateKind::SqueezedCoherent { r, phi, alpha })
    }

    /// Whether the state has a nonnegative Glauber P function.
    pub fn is_classical(&self) -> bool {
        matches!(
            self.kind,
            StateKind::Vacuum | StateKind::Coherent { .. } | StateKind::Thermal { .. }
        )
    }

    /// Mean photon number from the closed forms.
    pub fn mean_photons(&self) -> f64 {
        match self.kind {
            StateKind::Vacuum => 0.0,
            StateKind::Fock { n } => n as f64,
            StateKind::Coherent { alpha } => alpha.norm_sqr(),
            StateKind::Thermal { nbar } => nbar,
            StateKind::SqueezedVacuum { r, .. } => r.sinh().powi(2),
            StateKind::SqueezedCoherent { r, alpha, .. } => alpha.norm_sqr() + r.sinh().powi(2),
        }
    }
}

/// Truncated Fock-basis density matrix, entry (n, m) = ⟨n|ρ|m⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    elements: DMatrix<Complex64>,
    /// False for estimates that need not have unit trace.
    pub normalized: bool,
}

impl DensityMatrix {
    /// Wraps a matrix, checking that it is square and Hermitian to 1e-12.
    pub fn from_matrix(elements: DMatrix<Complex64>, normalized: bool) -> Result<Self> {
        if elements.nrows() != elements.ncols() || elements.nrows() == 0 {
            return invalid("density matrix must be square and non-empty");
        }
        let d = elements.nrows();
        for n in 0..d {
            for m in n..d {
                if (elements[(n, m)] - elements[(m, n)].conj()).norm() > 1e-12 {
                    return invalid(format!("matrix not Hermitian at ({n},{m})"));
                }
            }
        }
        let mut rho = Self { elements, normalized };
        rho.symmetrize();
        Ok(rho)
    }

    /// Hermitian part of an arbitrary square matrix.
    pub fn hermitian_part(m: DMatrix<Complex64>, normalized: bool) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return invalid("density matrix must be square and non-empty");
        }
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let mut rho = Self { elements: h, normalized };
        rho.symmetrize();
        Ok(rho)
    }

    pub fn pure(amplitudes: &[Complex64]) -> Self {
        let d = amplitudes.len();
        let m = DMatrix::from_fn(d, d, |n, k| amplitudes[n] * amplitudes[k].conj());
        let mut rho = Self { elements: m, normalized: true };
        rho.symmetrize();
        rho
    }

    pub fn diagonal(populations: &[f64]) -> Self {
        let d = populations.len();
        let m = DMatrix::from_fn(d, d, |n, k| {
            if n == k {
                Complex64::new(populations[n], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Self { elements: m, normalized: true }
    }

    /// Makes the stored matrix exactly Hermitian.
    fn symmetrize(&mut self) {
        let d = self.dim();
        for n in 0..d {
            self.elements[(n, n)].im = 0.0;
            for m in n + 1..d {
                let v = (self.elements[(n, m)] + self.elements[(m, n)].conj()) * 0.5;
                self.elements[(n, m)] = v;
                self.elements[(m, n)] = v.conj();
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn elements(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.elements[(n, m)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|n| self.elements[(n, n)].re).sum()
    }

    /// Tr ρ² / (Tr ρ)².
    pub fn purity(&self) -> f64 {
        let s: f64 = self.elements.iter().map(|z| z.norm_sqr()).sum();
        s / self.trace().powi(2)
    }

    /// Photon-number populations ρ_nn.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.elements[(n, n)].re).collect()
    }

    pub fn mean_photons(&self) -> f64 {
        self.populations().iter().enumerate().map(|(n, p)| n as f64 * p).sum::<f64>() / self.trace()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = self.elements.clone().symmetric_eigenvalues();
        let mut v: Vec<f64> = eig.iter().copied().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    /// Copy rescaled to unit trace.
    pub fn normalize(&self) -> Self {
        let t = self.trace();
        Self { elements: &self.elements / Complex64::new(t, 0.0), normalized: true }
    }

    /// Embeds into (or truncates to) dimension `dim`.
    pub fn resized(&self, dim: usize) -> Self {
        let d = self.dim();
        let m = DMatrix::from_fn(dim, dim, |n, k| {
            if n < d && k < d {
                self.elements[(n, k)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Self { elements: m, normalized: self.normalized }
    }

    /// Convex combination `w·a + (1-w)·b`, padded to the larger dimension.
    pub fn mix(a: &Self, b: &Self, w: f64) -> Self {
        let d = a.dim().max(b.dim());
        let m = a.resized(d).elements * Complex64::new(w, 0.0)
            + b.resized(d).elements * Complex64::new(1.0 - w, 0.0);
        Self { elements: m, normalized: a.normalized && b.normalized }
    }

    /// Hilbert–Schmidt (Frobenius) distance after padding.
    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        let d = self.dim().max(other.dim());
        (self.resized(d).elements - other.resized(d).elements).norm()
    }

    /// Expectation value of an operator given in the same basis.
    pub fn expect(&self, op: &DMatrix<Complex64>) -> Complex64 {
        (&self.elements * op).trace()
    }

    pub fn to_json(&self) -> DensityMatrixJson {
        let d = self.dim();
        DensityMatrixJson {
            dim: d,
            re: (0..d).map(|n| (0..d).map(|m| self.elements[(n, m)].re).collect()).collect(),
            im: (0..d).map(|n| (0..d).map(|m| self.elements[(n, m)].im).collect()).collect(),
        }
    }

    pub fn from_json(j: &DensityMatrixJson) -> Result<Self> {
        let d = j.dim;
        if j.re.len() != d || j.im.len() != d || j.re.iter().chain(&j.im).any(|r| r.len() != d) {
            return Err(OhtError::Format(format!("density matrix rows do not match dim {d}")));
        }
        let m = DMatrix::from_fn(d, d, |n, k| Complex64::new(j.re[n][k], j.im[n][k]));
        let normalized = (m.trace().re - 1.0).abs() < 1e-9;
        Self::hermitian_part(m, normalized)
    }
}

/// JSON form `{"dim", "re", "im"}` with row-major nested rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityMatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

/// Annihilation operator on a `dim`-dimensional truncated space.
pub fn annihilation(dim: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(dim, dim, |n, m| {
        if m == n + 1 {
            Complex64::new((m as f64).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Exact truncated Fock representation of `spec`.
pub fn make_state(spec: &StateSpec) -> Result<DensityMatrix> {
    validate_spec(spec)?;
    let mut dim = spec.truncation_dim.max(1);
    if let StateKind::Fock { n } = spec.kind {
        dim = dim.max(n + 1);
    }
    loop {
        let (rho, kept) = build(spec, dim);
        if kept >= 1.0 - LEAK_TOLERANCE {
            return Ok(rho.normalize());
        }
        if dim >= MAX_AUTO_DIM {
            return Err(OhtError::TruncationLeak { trace: kept, dim, limit: MAX_AUTO_DIM });
        }
        dim = (dim + 10).min(MAX_AUTO_DIM);
    }
}

fn validate_spec(spec: &StateSpec) -> Result<()> {
    let finite = |z: Complex64| z.re.is_finite() && z.im.is_finite();
    match spec.kind {
        StateKind::Fock { n } if n + 1 > MAX_AUTO_DIM => {
            invalid(format!("Fock state n={n} needs more than {MAX_AUTO_DIM} levels"))
        }
        StateKind::Coherent { alpha } if !finite(alpha) => invalid("non-finite coherent amplitude"),
        StateKind::Thermal { nbar } if !(nbar >= 0.0 && nbar.is_finite()) => {
            invalid(format!("thermal mean photon number {nbar} must be finite and ≥ 0"))
        }
        StateKind::SqueezedVacuum { r, phi } | StateKind::SqueezedCoherent { r, phi, .. }
            if !(r >= 0.0 && r.is_finite() && phi.is_finite()) =>
        {
            invalid(format!("squeeze parameter r={r} must be finite and ≥ 0"))
        }
        StateKind::SqueezedCoherent { alpha, .. } if !finite(alpha) => {
            invalid("non-finite coherent amplitude")
        }
        _ => Ok(()),
    }
}

/// Returns the truncated state and the probability it retains.
fn build(spec: &StateSpec, dim: usize) -> (DensityMatrix, f64) {
    let zero = Complex64::new(0.0, 0.0);
    match spec.kind {
        StateKind::Vacuum => {
            let mut c = vec![zero; dim];
            c[0] = Complex64::new(1.0, 0.0);
            (DensityMatrix::pure(&c), 1.0)
        }
        StateKind::Fock { n } => {
            let mut c = vec![zero; dim];
            c[n] = Complex64::new(1.0, 0.0);
            (DensityMatrix::pure(&c), 1.0)
        }
        StateKind::Thermal { nbar } => {
            let x = nbar / (1.0 + nbar);
            let p: Vec<f64> = (0..dim).map(|n| x.powi(n as i32) / (1.0 + nbar)).collect();
            let kept = 1.0 - x.powi(dim as i32);
            (DensityMatrix::diagonal(&p), kept)
        }
        StateKind::Coherent { alpha } => gaussian_pure(0.0, 0.0, alpha, dim),
        StateKind::SqueezedVacuum { r, phi } => gaussian_pure(r, phi, zero, dim),
        StateKind::SqueezedCoherent { r, phi, alpha } => gaussian_pure(r, phi, alpha, dim),
    }
}

/// Fock amplitudes of D(α)S(ξ)|0⟩, ξ = r e^{iφ}, from the Hermite-polynomial
/// closed form rewritten as a two-term recursion on
/// a_n = (t/2)^{n/2} H_n(x)/√n!, t = e^{iφ} tanh r.
fn gaussian_pure(r: f64, phi: f64, alpha: Complex64, dim: usize) -> (DensityMatrix, f64) {
    let t = Complex64::from_polar(r.tanh(), phi);
    let gamma = alpha * r.cosh() + alpha.conj() * Complex64::from_polar(r.sinh(), phi);
    let pref = (-(alpha.norm_sqr() / 2.0) - alpha.conj() * alpha.conj() * t / 2.0).exp()
        / r.cosh().sqrt();
    let mut a = vec![Complex64::new(0.0, 0.0); dim];
    a[0] = Complex64::new(1.0, 0.0);
    if dim > 1 {
        a[1] = gamma / r.cosh() * a[0];
    }
    for n in 1..dim.saturating_sub(1) {
        let nf = n as f64;
        a[n + 1] = (gamma / r.cosh() * a[n] - t * nf.sqrt() * a[n - 1]) / (nf + 1.0).sqrt();
    }
    let c: Vec<Complex64> = a.iter().map(|v| v * pref).collect();
    let kept: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    (DensityMatrix::pure(&c), kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vacuum_is_projector_on_ground_state() {
        let rho = make_state(&StateSpec::vacuum().with_dim(4)).unwrap();
        assert_eq!(rho.dim(), 4);
        assert_eq!(rho.populations(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn thermal_is_geometric() {
        let rho = make_state(&StateSpec::thermal(1.0).with_dim(60)).unwrap();
        for n in 0..10 {
            assert_relative_eq!(rho.get(n, n).re, 0.5f64.powi(n as i32 + 1), epsilon = 1e-12);
        }
        let p2: f64 = rho.populations().iter().map(|p| p * p).sum();
        assert_relative_eq!(rho.purity(), p2, epsilon = 1e-12);
    }

    #[test]
    fn squeezed_vacuum_has_no_odd_populations() {
        let rho = make_state(&StateSpec::squeezed_vacuum(0.5, 0.0)).unwrap();
        assert_eq!(rho.get(1, 1).re, 0.0);
        assert_eq!(rho.get(3, 3).re, 0.0);
        assert_relative_eq!(rho.mean_photons(), 0.5f64.sinh().powi(2), epsilon = 1e-6);
    }

    #[test]
    fn coherent_populations_are_poissonian() {
        let alpha = Complex64::new(1.1, -0.4);
        let rho = make_state(&StateSpec::coherent(alpha)).unwrap();
        let nbar = alpha.norm_sqr();
        let mut fact = 1.0;
        for n in 0..8 {
            if n > 0 {
                fact *= n as f64;
            }
            let expect = (-nbar).exp() * nbar.powi(n as i32) / fact;
            assert_relative_eq!(rho.get(n, n).re, expect, epsilon = 1e-9);
        }
        assert_relative_eq!(rho.purity(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn squeezed_coherent_reduces_to_both_limits() {
        let alpha = Complex64::new(0.8, 0.3);
        let a = make_state(&StateSpec::squeezed_coherent(0.0, 0.0, alpha)).unwrap();
        let b = make_state(&StateSpec::coherent(alpha)).unwrap();
        assert!(a.frobenius_distance(&b) < 1e-12);
        let c = make_state(&StateSpec::squeezed_coherent(0.4, 0.2, Complex64::new(0.0, 0.0))).unwrap();
        let d = make_state(&StateSpec::squeezed_vacuum(0.4, 0.2)).unwrap();
        assert!(c.frobenius_distance(&d) < 1e-12);
    }

    #[test]
    fn truncation_grows_until_leak_is_small() {
        let rho = make_state(&StateSpec::coherent(Complex64::new(4.0, 0.0)).with_dim(5)).unwrap();
        assert!(rho.dim() > 20);
        let err = make_state(&StateSpec::thermal(50.0)).unwrap_err();
        assert!(matches!(err, OhtError::TruncationLeak { .. }));
    }

    #[test]
    fn fock_grows_dimension_to_fit() {
        let rho = make_state(&StateSpec::fock(25)).unwrap();
        assert!(rho.dim() >= 26);
        assert_eq!(rho.get(25, 25).re, 1.0);
    }

    #[test]
    fn json_round_trip() {
        let rho = make_state(&StateSpec::coherent(Complex64::new(0.5, 0.5)).with_dim(6)).unwrap();
        let text = serde_json::to_string(&rho.to_json()).unwrap();
        let back = DensityMatrix::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert!(rho.frobenius_distance(&back) < 1e-15);
        assert!(back.normalized);
    }

    #[test]
    fn spec_serializes_with_kind_tag() {
        let s = StateSpec::squeezed_vacuum(0.5, 0.0);
        let v = serde_json::to_value(s).unwrap();
        assert_eq!(v["kind"], "squeezed_vacuum");
        let back: StateSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
        let d: StateSpec = serde_json::from_str(r#"{"kind":"vacuum"}"#).unwrap();
        assert_eq!(d.truncation_dim, DEFAULT_DIM);
    }
}
