//! Noise power spectra: identification from images, radial profiles,
//! frequency-domain resampling and the on-disk archive.

use std::fs;
use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::bilateral::bilateral_filter;
use crate::error::NoiseError;
use crate::render::Raster;

pub const DEFAULT_SIGMA_SPATIAL: f64 = 3.0;
pub const DEFAULT_SIGMA_RANGE: f64 = 0.05;

/// In-place 2D DFT of a row-major `w × h` buffer.
pub fn fft2(data: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(data);
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
}

/// Signed frequency of bin `k` out of `n`, cycles per pixel in [−0.5, 0.5).
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    let k = k as f64;
    let n_f = n as f64;
    if k < n_f / 2.0 {
        k / n_f
    } else {
        k / n_f - 1.0
    }
}

/// Power spectral density per channel, row-major with DC at index (0, 0)
/// and unshifted FFT bin order. Normalized so the mean over all bins equals
/// the mean square of the source signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    pub width: usize,
    pub height: usize,
    /// One shared (luma) spectrum or three per-channel spectra.
    pub power: Vec<Vec<f64>>,
    pub images: usize,
}

/// Mean periodogram |FFT(x)|²/N over `signals`.
pub fn periodogram(signals: &[Raster<f64>]) -> Result<Vec<f64>, NoiseError> {
    let first = signals.first().ok_or(NoiseError::NoImages)?;
    let (w, h) = first.dims();
    let n = (w * h) as f64;
    let mut p = vec![0.0; w * h];
    let mut buf = vec![Complex::new(0.0, 0.0); w * h];
    for s in signals {
        if s.dims() != (w, h) {
            return Err(NoiseError::SizeMismatch {
                expected: (w, h),
                got: s.dims(),
            });
        }
        for (b, &v) in buf.iter_mut().zip(&s.data) {
            *b = Complex::new(v, 0.0);
        }
        fft2(&mut buf, w, h, false);
        for (acc, c) in p.iter_mut().zip(&buf) {
            *acc += c.norm_sqr() / n;
        }
    }
    let k = signals.len() as f64;
    p.iter_mut().for_each(|v| *v /= k);
    Ok(p)
}

/// Residual left after bilateral smoothing.
pub fn noise_residual(img: &Raster<f64>, sigma_spatial: f64, sigma_range: f64) -> Result<Raster<f64>, NoiseError> {
    let smooth = bilateral_filter(img, sigma_spatial, sigma_range)?;
    Ok(Raster {
        width: img.width,
        height: img.height,
        data: img.data.iter().zip(&smooth.data).map(|(a, b)| a - b).collect(),
    })
}

/// Single-channel spectrum of `img − BF(img)` averaged over the images.
pub fn estimate_psd(images: &[Raster<f64>], sigma_spatial: f64, sigma_range: f64) -> Result<NoiseSpectrum, NoiseError> {
    let first = images.first().ok_or(NoiseError::NoImages)?;
    let residuals = images
        .iter()
        .map(|img| {
            if img.dims() != first.dims() {
                return Err(NoiseError::SizeMismatch {
                    expected: first.dims(),
                    got: img.dims(),
                });
            }
            noise_residual(img, sigma_spatial, sigma_range)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NoiseSpectrum {
        width: first.width,
        height: first.height,
        power: vec![periodogram(&residuals)?],
        images: images.len(),
    })
}

/// Rec. 709 luma of a linear RGB image.
pub fn luma(img: &Raster<[f64; 3]>) -> Raster<f64> {
    img.map(|p| 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2])
}

/// Spectrum of color images: shared luma or one per channel.
pub fn estimate_psd_rgb(images: &[Raster<[f64; 3]>], per_channel: bool, sigma_spatial: f64, sigma_range: f64) -> Result<NoiseSpectrum, NoiseError> {
    if !per_channel {
        let lum: Vec<Raster<f64>> = images.iter().map(luma).collect();
        return estimate_psd(&lum, sigma_spatial, sigma_range);
    }
    let mut power = Vec::with_capacity(3);
    for c in 0..3 {
        let plane: Vec<Raster<f64>> = images.iter().map(|img| img.map(|p| p[c])).collect();
        power.push(estimate_psd(&plane, sigma_spatial, sigma_range)?.power.remove(0));
    }
    let first = &images[0];
    Ok(NoiseSpectrum {
        width: first.width,
        height: first.height,
        power,
        images: images.len(),
    })
}

impl NoiseSpectrum {
    pub fn from_power(width: usize, height: usize, power: Vec<f64>) -> Result<Self, NoiseError> {
        let s = Self {
            width,
            height,
            power: vec![power],
            images: 0,
        };
        s.validate()?;
        Ok(s)
    }

    /// Spectrum sampled from a function of signed frequency (cycles/px).
    pub fn from_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self, NoiseError> {
        let mut p = vec![0.0; width * height];
        for ky in 0..height {
            for kx in 0..width {
                p[ky * width + kx] = f(bin_frequency(kx, width), bin_frequency(ky, height));
            }
        }
        Self::from_power(width, height, p)
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if self.power.is_empty() || !(self.power.len() == 1 || self.power.len() == 3) {
            return Err(NoiseError::InvalidParam(format!("spectrum needs 1 or 3 channels, got {}", self.power.len())));
        }
        for p in &self.power {
            if p.len() != self.width * self.height {
                return Err(NoiseError::InvalidParam("spectrum size does not match its dimensions".into()));
            }
            if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(NoiseError::InvalidParam("spectrum must be finite and non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.power.len()
    }

    /// Power of `channel` (or the shared spectrum) for each RGB channel.
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.power[c.min(self.power.len() - 1)]
    }

    /// Largest relative deviation from P(k) = P(−k).
    pub fn hermitian_error(&self) -> f64 {
        let (w, h) = (self.width, self.height);
        let mut worst: f64 = 0.0;
        for p in &self.power {
            let scale = p.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            for ky in 0..h {
                for kx in 0..w {
                    let m = ((h - ky) % h) * w + (w - kx) % w;
                    worst = worst.max((p[ky * w + kx] - p[m]).abs() / scale);
                }
            }
        }
        worst
    }

    /// Averages each channel with its point reflection through DC.
    pub fn symmetrize(&mut self) {
        let (w, h) = (self.width, self.height);
        for p in &mut self.power {
            let src = p.clone();
            for ky in 0..h {
                for kx in 0..w {
                    let m = ((h - ky) % h) * w + (w - kx) % w;
                    p[ky * w + kx] = 0.5 * (src[ky * w + kx] + src[m]);
                }
            }
        }
    }

    /// Mean power over the non-DC bins of `channel`.
    pub fn ac_power(&self, channel: usize) -> f64 {
        let p = self.channel(channel);
        (p.iter().sum::<f64>() - p[0]) / (p.len() - 1).max(1) as f64
    }

    /// Radially averaged power of `channel` in `bins` rings over radial
    /// frequency [0, 0.5] cycles/px, with DC excluded.
    pub fn radial_profile(&self, channel: usize, bins: usize) -> Vec<f64> {
        radial_profile(self.channel(channel), self.width, self.height, bins)
    }

    /// Bilinear resampling in normalized frequency to a new size.
    pub fn resampled(&self, width: usize, height: usize) -> NoiseSpectrum {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let (sw, sh) = (self.width, self.height);
        let power = self
            .power
            .iter()
            .map(|p| {
                let at = |x: isize, y: isize| p[(y.rem_euclid(sh as isize) as usize) * sw + x.rem_euclid(sw as isize) as usize];
                let mut out = vec![0.0; width * height];
                for ky in 0..height {
                    for kx in 0..width {
                        let fx = bin_frequency(kx, width) * sw as f64;
                        let fy = bin_frequency(ky, height) * sh as f64;
                        let (x0, y0) = (fx.floor(), fy.floor());
                        let (tx, ty) = (fx - x0, fy - y0);
                        let (x0, y0) = (x0 as isize, y0 as isize);
                        out[ky * width + kx] = (at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx) * (1.0 - ty)
                            + (at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx) * ty;
                    }
                }
                out
            })
            .collect();
        NoiseSpectrum {
            width,
            height,
            power,
            images: self.images,
        }
    }

    /// Writes `<stem>.json` (header) and `<stem>.f32` (little-endian power,
    /// channel-major then row-major).
    pub fn write_archive(&self, stem: &Path) -> Result<(PathBuf, PathBuf), NoiseError> {
        let raw = stem.with_extension("f32");
        let json = stem.with_extension("json");
        let header = ArchiveHeader {
            width: self.width,
            height: self.height,
            channels: self.channels(),
            images: self.images,
            dtype: "float32".into(),
            layout: "channel-major, row-major, unshifted FFT order with DC at (0,0)".into(),
            raw: raw.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        };
        let mut bytes = Vec::with_capacity(self.channels() * self.width * self.height * 4);
        for p in &self.power {
            for v in p {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        fs::write(&raw, bytes)?;
        fs::write(&json, serde_json::to_string_pretty(&header).map_err(|e| archive_err(&json, e))?)?;
        Ok((json, raw))
    }

    pub fn read_archive(stem: &Path) -> Result<Self, NoiseError> {
        let json = stem.with_extension("json");
        let header: ArchiveHeader = serde_json::from_str(&fs::read_to_string(&json)?).map_err(|e| archive_err(&json, e))?;
        if header.dtype != "float32" {
            return Err(archive_err(&json, format!("unsupported dtype {}", header.dtype)));
        }
        let raw = json.with_file_name(&header.raw);
        let bytes = fs::read(&raw)?;
        let n = header.width * header.height;
        if bytes.len() != header.channels * n * 4 {
            return Err(archive_err(&raw, format!("expected {} bytes, found {}", header.channels * n * 4, bytes.len())));
        }
        let values: Vec<f64> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        let spec = NoiseSpectrum {
            width: header.width,
            height: header.height,
            power: values.chunks(n).map(<[f64]>::to_vec).collect(),
            images: header.images,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Ring averages of a row-major power array, DC excluded.
pub fn radial_profile(p: &[f64], w: usize, h: usize, bins: usize) -> Vec<f64> {
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for ky in 0..h {
        for kx in 0..w {
            if kx == 0 && ky == 0 {
                continue;
            }
            let r = bin_frequency(kx, w).hypot(bin_frequency(ky, h));
            let b = (r / 0.5 * bins as f64) as usize;
            if b < bins {
                sum[b] += p[ky * w + kx];
                count[b] += 1;
            }
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveHeader {
    width: usize,
    height: usize,
    channels: usize,
    images: usize,
    dtype: String,
    layout: String,
    raw: String,
}

fn archive_err(path: &Path, e: impl std::fmt::Display) -> NoiseError {
    NoiseError::Archive {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(seed: u64, w: usize, h: usize) -> Raster<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Raster::from_vec(w, h, (0..w * h).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn parseval_normalization() {
        let x = white(1, 32, 16);
        let p = periodogram(std::slice::from_ref(&x)).unwrap();
        let energy: f64 = x.data.iter().map(|v| v * v).sum::<f64>() / x.data.len() as f64;
        assert!((p.iter().sum::<f64>() / p.len() as f64 - energy).abs() < 1e-12);
    }

    #[test]
    fn inverse_fft_round_trip() {
        let x = white(2, 12, 10);
        let mut buf: Vec<Complex<f64>> = x.data.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft2(&mut buf, 12, 10, false);
        fft2(&mut buf, 12, 10, true);
        for (a, b) in buf.iter().zip(&x.data) {
            assert!((a.re / 120.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn white_noise_spectrum_is_flat() {
        let imgs: Vec<Raster<f64>> = (0..8).map(|s| white(s, 64, 64)).collect();
        let p = periodogram(&imgs).unwrap();
        let prof = radial_profile(&p, 64, 64, 10);
        let mid = &prof[2..8];
        let (lo, hi) = mid.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo <= 1.5, "{prof:?}");
    }

    #[test]
    fn sinusoid_peaks_at_its_frequency() {
        let (w, h) = (64, 64);
        let f0 = 8;
        let img = Raster::from_vec(
            w,
            h,
            (0..w * h)
                .map(|i| 0.5 + 0.02 * (2.0 * std::f64::consts::PI * f0 as f64 * (i % w) as f64 / w as f64).sin())
                .collect(),
        )
        .unwrap();
        let s = estimate_psd(&[img], 3.0, 0.05).unwrap();
        let p = &s.power[0];
        let mut sorted = p.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        assert!(p[f0] >= 100.0 * median && p[w - f0] >= 100.0 * median);
        assert!(s.hermitian_error() < 1e-9);
    }

    #[test]
    fn constant_images_have_no_noise() {
        let s = estimate_psd(&[Raster::filled(16, 16, 0.4)], 3.0, 0.05).unwrap();
        assert!(s.power[0].iter().all(|&v| v < 1e-20));
    }

    #[test]
    fn size_mismatch_is_reported() {
        let r = estimate_psd(&[Raster::filled(8, 8, 0.0), Raster::filled(8, 9, 0.0)], 3.0, 0.05);
        assert!(matches!(r, Err(NoiseError::SizeMismatch { .. })));
        assert!(matches!(estimate_psd(&[], 3.0, 0.05), Err(NoiseError::NoImages)));
    }

    #[test]
    fn resampling_preserves_smooth_spectra() {
        let f = |fx: f64, fy: f64| 1.0 + (-(fx * fx + fy * fy) / 0.02).exp();
        let s = NoiseSpectrum::from_fn(64, 64, f).unwrap();
        let r = s.resampled(48, 80);
        for ky in 0..80 {
            for kx in 0..48 {
                let expected = f(bin_frequency(kx, 48), bin_frequency(ky, 80));
                assert!((r.power[0][ky * 48 + kx] - expected).abs() < 0.02);
            }
        }
    }

    #[test]
    fn archive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = NoiseSpectrum::from_fn(8, 6, |fx, fy| 0.5 + fx.abs() + fy * fy).unwrap();
        s.write_archive(&dir.path().join("spec")).unwrap();
        let back = NoiseSpectrum::read_archive(&dir.path().join("spec")).unwrap();
        assert_eq!(back.width, 8);
        for (a, b) in back.power[0].iter().zip(&s.power[0]) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
}
