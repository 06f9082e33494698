//! Localization of two sub-diffraction single-photon emitters from intensity
//! and zero-lag Hanbury Brown–Twiss correlation measured at three positions.
//!
//! - [`optics`]: Gaussian PSF forward model and confocal maps.
//! - [`synth`]: random scenes and multiplicative counting noise.
//! - [`estimator`]: multi-start least-squares inversion.
//! - [`minimize`]: local minimizers, selectable by name.
//! - [`ensemble`]: repeated-trial precision statistics and noise sweeps.

pub mod ensemble;
pub mod error;
pub mod estimator;
pub mod minimize;
pub mod optics;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use estimator::{canonicalize, chi_squared, fit_scene, FitConfig, FitResult, TrialParams};
pub use optics::{
    confocal_map, detection_probability, forward_detail, forward_model, g2_n_colocated, g2_two_emitter,
    sigma_from_optics, DetectorLayout, Emitter, ForwardDetail, GridSpec, IntensityMap, MeasurementSet, Point2,
    PsfModel, Scene,
};
pub use rng::RngStream;
pub use synth::{apply_noise, default_layout, sample_scene, sample_scene_in, NoiseModel};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
