//! Detectors and their error probabilities.

pub mod gaussian;
pub mod infinite;
pub mod mc;
pub mod ml;
pub mod nonlinear;
pub mod oversample;
pub mod pcd;
pub mod undersample;

pub use infinite::{mpd_infinite_error, mpd_infinite_mgf};
pub use mc::{ml_detect_mc, mpd_nonlinear_error, DetectorKind, DetectorReport, McOptions};
pub use nonlinear::{nonlinear_sample_density, NonlinearFn, Tail};
pub use oversample::{mpd_oversample_stats, OversampleStats};
pub use pcd::{
    chernoff_exponent, pcd_counting_threshold, pcd_error, pcd_threshold_opt_dists, PcdThreshold,
};
pub use undersample::{mpd_undersample_error, mpd_undersample_gaussian, GaussianMpd};
