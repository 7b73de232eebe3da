//! Optical homodyne tomography laboratory.
//!
//! Synthesizes balanced-homodyne records from known quantum states of light,
//! reconstructs them by filtered back-projection and pattern functions, and
//! computes photon statistics directly from quadrature data.

pub mod array;
pub mod error;
pub mod fock;
pub mod grid;
pub mod homodyne;
pub mod moments;
pub mod multimode;
pub mod pattern;
pub mod radon;
pub mod rng;
pub mod temporal;

pub use error::{OhtError, Result};
pub use fock::{make_state, DensityMatrix, StateKind, StateSpec, WignerGrid};
pub use grid::{Axis, GridSpec};
pub use homodyne::{DetectorModel, PhaseSchedule, QuadratureDataset, QuadratureSample};
pub use num_complex::Complex64;
