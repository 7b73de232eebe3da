//! Monte Carlo balanced-homodyne detection.

mod calibration;
mod counts;
mod dataset;
mod detector;
mod sample;

pub use calibration::{
    calibration_curve, fit_calibration, gain_balancing_sim, swap_balance_run, CalibrationFit, CalibrationPoint,
    SwapBalanceRun, NONLINEARITY_CHI2,
};
pub use counts::{
    check_classical, detector_counts, diode_means, ln_scaled_bessel_i, mode_overlap, sample_p_amplitude, scaled_bessel_i,
    skellam_difference_pdf, SkellamPmf,
};
pub use dataset::{DatasetMeta, DualMeta, QuadratureDataset, QuadratureSample, QUAD_FORMAT};
pub use detector::{wrap_phase, DetectorModel, PhaseSchedule, STRONG_LO_THRESHOLD};
pub(crate) use sample::add_detection_noise;
pub use sample::{sample_quadratures, sample_state, sample_via_counts, QuadratureSampler, CDF_POINTS};
