//! Sensor noise identification (bilateral residual spectra) and
//! spectrum-matched synthesis.

pub mod bilateral;
pub mod spectrum;
pub mod synth;

pub use bilateral::bilateral_filter;
pub use spectrum::{estimate_psd, estimate_psd_rgb, periodogram, radial_profile, NoiseSpectrum};
pub use synth::{inject_noise, inject_noise_linear, synthesize_noise, NoiseDomain, NoiseParams};
