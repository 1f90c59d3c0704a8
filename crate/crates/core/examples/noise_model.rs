//! Synthesizes colored sensor noise, re-identifies its spectrum through the
//! bilateral residual estimator and injects it into a flat frame.

use bronchosim::noise::spectrum::{DEFAULT_SIGMA_RANGE, DEFAULT_SIGMA_SPATIAL};
use bronchosim::noise::{estimate_psd, inject_noise, synthesize_noise, NoiseParams, NoiseSpectrum};
use bronchosim::render::Raster;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (w, h) = (128, 128);
    let target = NoiseSpectrum::from_fn(w, h, |fx, fy| 1.0 + 3.0 * (-(fx * fx + fy * fy) / 0.02).exp())?;
    let beta = 0.004;
    let captures: Vec<Raster<f64>> = (0..16).map(|s| synthesize_noise(&target, s, w, h).map(|&n| 0.5 + beta * n)).collect();
    let recovered = estimate_psd(&captures, DEFAULT_SIGMA_SPATIAL, DEFAULT_SIGMA_RANGE)?;

    let scale = beta * beta / target.ac_power(0);
    let want = target.radial_profile(0, 8);
    let got = recovered.radial_profile(0, 8);
    println!("{:>4} {:>12} {:>12}", "bin", "target", "recovered");
    for (i, (a, b)) in want.iter().zip(&got).enumerate() {
        println!("{i:>4} {:>12.3e} {:>12.3e}", a * scale, b);
    }

    let out = std::env::temp_dir().join("bronchosim_noise_spectrum");
    let (json, data) = recovered.write_archive(&out)?;
    println!("archive: {} + {}", json.display(), data.display());

    let frame = Raster::filled(w, h, [140u8, 90, 80]);
    let noisy = inject_noise(&frame, &recovered, &NoiseParams::default(), 1, 0)?;
    let changed = noisy.data.iter().zip(&frame.data).filter(|(a, b)| a != b).count();
    let spread = noisy.data.iter().map(|p| p[0]).fold((u8::MAX, 0u8), |(lo, hi), v| (lo.min(v), hi.max(v)));
    println!("injected beta={}: {changed}/{} pixels changed, red range {:?}", NoiseParams::default().beta, w * h, spread);
    Ok(())
}
