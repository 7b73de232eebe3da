//! Fock-space states and the exact maps to phase space and quadrature
//! distributions. Convention: q = (a + a†)/√2, vacuum variance 1/2.

mod hermite;
mod phase_space;
mod state;

pub use hermite::{
    hermite_poly_all, hermite_psi, hermite_psi_at, hermite_table, laguerre_all, psi_all,
    HERMITE_MAX_ORDER,
};
pub use phase_space::{
    q_function, quadrature_moments, quadrature_pdf, quadrature_pdf_at, rho_from_wigner,
    rotate_quadrature, wavefunction_from_rho, wigner_from_rho, wigner_kernel,
    wigner_kernel_fourier, QuadratureMoments, WavefunctionSamples, WignerGrid, WignerInversion,
    PURITY_GATE,
};
pub use state::{
    annihilation, make_state, DensityMatrix, DensityMatrixJson, StateKind, StateSpec,
    DEFAULT_DIM, LEAK_TOLERANCE, MAX_AUTO_DIM,
};
