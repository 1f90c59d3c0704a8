use bronchosim::noise::spectrum::{bin_frequency, periodogram, DEFAULT_SIGMA_RANGE, DEFAULT_SIGMA_SPATIAL};
use bronchosim::noise::{bilateral_filter, estimate_psd, inject_noise_linear, synthesize_noise, NoiseParams, NoiseSpectrum};
use bronchosim::render::Raster;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const BAND: (f64, f64) = (0.2, 0.45);

/// Separable Gaussian blur with edge clamping and a 3σ support.
fn gaussian_blur(img: &Raster<f64>, sigma: f64) -> Raster<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    let (w, h) = img.dims();
    let clamp = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    let mut tmp = Raster::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = (-r..=r).map(|d| taps[(d + r) as usize] * img.get(clamp(x as i64 + d, w), y)).sum();
            tmp.set(x, y, s / total);
        }
    }
    let mut out = Raster::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = (-r..=r).map(|d| taps[(d + r) as usize] * tmp.get(x, clamp(y as i64 + d, h))).sum();
            out.set(x, y, s / total);
        }
    }
    out
}

fn band_mean(p: &[f64], w: usize, h: usize) -> f64 {
    let (mut s, mut n) = (0.0, 0);
    for ky in 0..h {
        for kx in 0..w {
            let f = bin_frequency(kx, w).hypot(bin_frequency(ky, h));
            if f >= BAND.0 && f <= BAND.1 {
                s += p[ky * w + kx];
                n += 1;
            }
        }
    }
    s / n as f64
}

fn white_images(count: usize, size: usize, std: f64, seed: u64) -> Vec<Raster<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let data = (0..size * size).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 0.5 + std * z }).collect();
            Raster::from_vec(size, size, data).unwrap()
        })
        .collect()
}

fn shaped(w: usize, h: usize) -> NoiseSpectrum {
    NoiseSpectrum::from_fn(w, h, |fx, fy| {
        let f2 = fx * fx + fy * fy;
        1.0 + 3.0 * (-f2 / (2.0 * 0.1f64.powi(2))).exp()
    })
    .unwrap()
}

#[test]
fn bilateral_with_infinite_range_is_gaussian_blur() {
    let img = white_images(1, 48, 0.2, 5).remove(0);
    let bf = bilateral_filter(&img, 2.0, f64::INFINITY).unwrap();
    let g = gaussian_blur(&img, 2.0);
    let worst = bf.data.iter().zip(&g.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-3, "{worst}");
    let wide = bilateral_filter(&img, 2.0, 1e3).unwrap();
    let worst = wide.data.iter().zip(&g.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-3, "{worst}");
}

#[test]
fn white_noise_spectrum_is_flat() {
    let spec = estimate_psd(&white_images(16, 64, 0.02, 1), DEFAULT_SIGMA_SPATIAL, DEFAULT_SIGMA_RANGE).unwrap();
    let prof = spec.radial_profile(0, 10);
    let mid = &prof[4..9];
    let ratio = mid.iter().cloned().fold(0.0, f64::max) / mid.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(ratio <= 1.5, "{prof:?}");
    assert!(spec.hermitian_error() < 1e-9);
}

#[test]
fn injected_noise_matches_target_spectrum() {
    let (w, h, beta) = (128, 128, 0.03);
    let spec = shaped(w, h);
    let clean = Raster::filled(w, h, [0.5; 3]);
    let params = NoiseParams {
        beta,
        ..Default::default()
    };
    let diffs: Vec<Raster<f64>> = (0..24)
        .map(|f| {
            let noisy = inject_noise_linear(&clean, &spec, &params, 17, f).unwrap();
            noisy.map(|p| p[1] - 0.5)
        })
        .collect();
    let measured = band_mean(&periodogram(&diffs).unwrap(), w, h);
    let p = spec.channel(0);
    let expected = beta * beta * band_mean(p, w, h) / spec.ac_power(0);
    assert!((measured / expected - 1.0).abs() <= 0.05, "{measured} vs {expected}");
}

#[test]
fn identification_round_trip_recovers_spectrum() {
    let (w, h, beta) = (128, 128, 0.003);
    let spec = shaped(w, h);
    let images: Vec<Raster<f64>> = (0..24)
        .map(|s| synthesize_noise(&spec, s, w, h).map(|&n| 0.5 + beta * n))
        .collect();
    let recovered = estimate_psd(&images, DEFAULT_SIGMA_SPATIAL, DEFAULT_SIGMA_RANGE).unwrap();
    let measured = band_mean(recovered.channel(0), w, h);
    let expected = beta * beta * band_mean(spec.channel(0), w, h) / spec.ac_power(0);
    assert!((measured / expected - 1.0).abs() <= 0.05, "{measured} vs {expected}");
}

#[test]
fn injection_stays_in_range_and_keeps_size() {
    let spec = shaped(40, 30);
    let mut img = Raster::filled(40, 30, [0.0; 3]);
    for (i, p) in img.data.iter_mut().enumerate() {
        *p = [(i % 7) as f64 / 6.0, 0.99, 0.01];
    }
    let out = inject_noise_linear(&img, &spec, &NoiseParams { beta: 0.3, ..Default::default() }, 2, 0).unwrap();
    assert_eq!(out.dims(), img.dims());
    assert!(out.data.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
}
