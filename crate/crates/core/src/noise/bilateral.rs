use rayon::prelude::*;

use crate::error::NoiseError;
use crate::render::Raster;

/// Window half-width covering ±3σ.
pub fn kernel_radius(sigma_spatial: f64) -> usize {
    (3.0 * sigma_spatial).ceil() as usize
}

/// Edge-preserving smoothing with Gaussian spatial and range weights,
/// normalized per pixel. Borders clamp to the nearest edge pixel.
pub fn bilateral_filter(img: &Raster<f64>, sigma_spatial: f64, sigma_range: f64) -> Result<Raster<f64>, NoiseError> {
    if !(sigma_spatial > 0.0) || !(sigma_range > 0.0) {
        return Err(NoiseError::InvalidParam(format!(
            "bilateral sigmas must be positive, got {sigma_spatial} and {sigma_range}"
        )));
    }
    let (w, h) = img.dims();
    let r = kernel_radius(sigma_spatial) as isize;
    let side = (2 * r + 1) as usize;
    let mut spatial = vec![0.0; side * side];
    for dy in -r..=r {
        for dx in -r..=r {
            spatial[((dy + r) as usize) * side + (dx + r) as usize] = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_spatial * sigma_spatial)).exp();
        }
    }
    let inv_range = if sigma_range.is_finite() { 1.0 / (2.0 * sigma_range * sigma_range) } else { 0.0 };
    let clamp = |x: isize, n: usize| x.clamp(0, n as isize - 1) as usize;
    let mut out = Raster::filled(w, h, 0.0);
    out.data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let center = *img.get(x, y);
            let (mut acc, mut norm) = (0.0, 0.0);
            for dy in -r..=r {
                let yy = clamp(y as isize + dy, h);
                let srow = &spatial[((dy + r) as usize) * side..];
                for dx in -r..=r {
                    let v = *img.get(clamp(x as isize + dx, w), yy);
                    let diff = v - center;
                    let wgt = srow[(dx + r) as usize] * (-diff * diff * inv_range).exp();
                    acc += wgt * v;
                    norm += wgt;
                }
            }
            *px = acc / norm;
        }
    });
    Ok(out)
}
