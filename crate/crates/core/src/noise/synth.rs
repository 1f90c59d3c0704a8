//! Spectrum-shaped noise synthesis and injection into rendered images.

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::spectrum::{fft2, NoiseSpectrum};
use crate::error::NoiseError;
use crate::render::shading::{srgb_decode, srgb_encode};
use crate::render::Raster;
use crate::rng;

pub const DEFAULT_BETA: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDomain {
    /// Added to linear intensity before sRGB encoding.
    Linear,
    /// Added to display-encoded values.
    Display,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub beta: f64,
    /// Use one spectrum per RGB channel when the spectrum provides three.
    pub per_channel: bool,
    pub domain: NoiseDomain,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            per_channel: false,
            domain: NoiseDomain::Linear,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(NoiseError::InvalidParam(format!("beta must be ≥ 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// n = F⁻¹{F{w}·√P} for unit white Gaussian `w`, normalized to zero mean and
/// unit variance. `stream` selects an independent draw for the same seed.
pub fn synthesize_noise_channel(power: &[f64], width: usize, height: usize, seed: u64, stream: u64) -> Raster<f64> {
    let n = width * height;
    let mut rng = rng::keyed(seed, rng::SENSOR_NOISE, stream);
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0)).collect();
    fft2(&mut buf, width, height, false);
    for (b, p) in buf.iter_mut().zip(power) {
        *b *= p.max(0.0).sqrt();
    }
    fft2(&mut buf, width, height, true);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = out.iter().sum::<f64>() / n as f64;
    let var = out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
    out.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    Raster {
        width,
        height,
        data: out,
    }
}

/// Unit-variance noise image shaped by the first channel of `spec`,
/// resampled when the requested size differs.
pub fn synthesize_noise(spec: &NoiseSpectrum, seed: u64, width: usize, height: usize) -> Raster<f64> {
    let s = spec.resampled(width, height);
    synthesize_noise_channel(s.channel(0), width, height, seed, 0)
}

/// I + β·n per channel on a linear RGB image, clamped to [0, 1]. `frame`
/// keys the random draws so each frame of a sequence gets fresh noise.
pub fn inject_noise_linear(
    img: &Raster<[f64; 3]>,
    spec: &NoiseSpectrum,
    params: &NoiseParams,
    seed: u64,
    frame: u64,
) -> Result<Raster<[f64; 3]>, NoiseError> {
    params.validate()?;
    if params.beta == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let s = spec.resampled(w, h);
    let mut out = img.clone();
    for c in 0..3 {
        let power = if params.per_channel { s.channel(c) } else { s.channel(0) };
        let n = synthesize_noise_channel(power, w, h, seed, frame * 4 + c as u64);
        for (o, v) in out.data.iter_mut().zip(&n.data) {
            o[c] = (o[c] + params.beta * v).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Noise injection for 8-bit sRGB frames.
pub fn inject_noise(
    rgb: &Raster<[u8; 3]>,
    spec: &NoiseSpectrum,
    params: &NoiseParams,
    seed: u64,
    frame: u64,
) -> Result<Raster<[u8; 3]>, NoiseError> {
    params.validate()?;
    if params.beta == 0.0 {
        return Ok(rgb.clone());
    }
    let (decode, encode): (fn(f64) -> f64, fn(f64) -> f64) = match params.domain {
        NoiseDomain::Linear => (srgb_decode, srgb_encode),
        NoiseDomain::Display => (|x| x, |x| x),
    };
    let float = rgb.map(|p| p.map(|c| decode(c as f64 / 255.0)));
    let noisy = inject_noise_linear(&float, spec, params, seed, frame)?;
    Ok(noisy.map(|p| p.map(|c| (encode(c) * 255.0).round().clamp(0.0, 255.0) as u8)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::spectrum::{periodogram, radial_profile};

    fn flat(w: usize, h: usize) -> NoiseSpectrum {
        NoiseSpectrum::from_fn(w, h, |_, _| 1.0).unwrap()
    }

    fn low_pass(w: usize, h: usize) -> NoiseSpectrum {
        NoiseSpectrum::from_fn(w, h, |fx, fy| (-(fx * fx + fy * fy) / (2.0 * 0.05f64.powi(2))).exp()).unwrap()
    }

    /// Lag at which the horizontal autocorrelation first drops below 1/e.
    fn correlation_length(img: &Raster<f64>) -> usize {
        let (w, h) = img.dims();
        let var: f64 = img.data.iter().map(|v| v * v).sum::<f64>();
        for lag in 1..w / 2 {
            let mut acc = 0.0;
            for y in 0..h {
                for x in 0..w {
                    acc += img.get(x, y) * img.get((x + lag) % w, y);
                }
            }
            if acc / var < (-1.0f64).exp() {
                return lag;
            }
        }
        w / 2
    }

    #[test]
    fn flat_spectrum_gives_white_noise() {
        let imgs: Vec<Raster<f64>> = (0..8).map(|s| synthesize_noise(&flat(64, 64), s, 64, 64)).collect();
        let p = periodogram(&imgs).unwrap();
        let prof = radial_profile(&p, 64, 64, 8);
        let mean = prof[1..7].iter().sum::<f64>() / 6.0;
        for v in &prof[1..7] {
            assert!((v / mean - 1.0).abs() <= 0.1, "{prof:?}");
        }
        let n = &imgs[0];
        let var = n.data.iter().map(|v| v * v).sum::<f64>() / n.data.len() as f64;
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn low_frequency_spectrum_correlates_longer() {
        let white = synthesize_noise(&flat(64, 64), 3, 64, 64);
        let red = synthesize_noise(&low_pass(64, 64), 3, 64, 64);
        assert!(correlation_length(&red) > correlation_length(&white));
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let s = low_pass(32, 32);
        assert_eq!(synthesize_noise(&s, 9, 32, 32), synthesize_noise(&s, 9, 32, 32));
        assert_ne!(synthesize_noise(&s, 9, 32, 32), synthesize_noise(&s, 10, 32, 32));
    }

    #[test]
    fn zero_beta_is_exact_noop() {
        let img = Raster::from_vec(3, 2, vec![[0, 10, 20], [30, 40, 50], [255, 0, 7], [1, 2, 3], [9, 9, 9], [200, 100, 0]]).unwrap();
        let p = NoiseParams {
            beta: 0.0,
            ..Default::default()
        };
        assert_eq!(inject_noise(&img, &flat(3, 2), &p, 1, 0).unwrap(), img);
    }

    #[test]
    fn beta_sets_linear_std() {
        let img = Raster::filled(128, 128, [0.5; 3]);
        let p = NoiseParams {
            beta: 0.05,
            ..Default::default()
        };
        let out = inject_noise_linear(&img, &flat(128, 128), &p, 4, 0).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = out.data.iter().map(|v| v[c]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
            assert!((std / 0.05 - 1.0).abs() <= 0.1, "{std}");
            assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(NoiseParams { beta: -1.0, ..p }.validate().is_err());
    }

    #[test]
    fn resampled_spectrum_is_used_for_other_sizes() {
        let n = synthesize_noise(&low_pass(32, 32), 1, 48, 40);
        assert_eq!(n.dims(), (48, 40));
    }
}
