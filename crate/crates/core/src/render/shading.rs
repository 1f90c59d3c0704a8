//! Surface appearance: principled-style material, tip light, procedural
//! tissue texture and the display transform.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::RenderError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Material {
    /// Linear RGB.
    pub base_color: [f64; 3],
    pub roughness: f64,
    pub metallic: f64,
    pub specular: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            base_color: [0.78, 0.42, 0.36],
            roughness: 0.45,
            metallic: 0.0,
            specular: 0.5,
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<(), RenderError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !self.base_color.iter().all(|&c| unit(c)) || !unit(self.roughness) || !unit(self.metallic) || !(self.specular >= 0.0) {
            return Err(RenderError::InvalidSetting(format!("material out of range: {self:?}")));
        }
        Ok(())
    }

    /// Lambertian surface with no specular response.
    pub fn matte(base_color: [f64; 3]) -> Self {
        Self {
            base_color,
            roughness: 1.0,
            metallic: 0.0,
            specular: 0.0,
        }
    }
}

/// Point light riding on the scope tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TipLight {
    pub intensity: f64,
    /// Exponential falloff rate, 1/m.
    pub falloff: f64,
    /// Position in the camera frame, m.
    pub offset: [f64; 3],
}

impl Default for TipLight {
    fn default() -> Self {
        Self {
            intensity: 2e-4,
            falloff: 20.0,
            offset: [0.0; 3],
        }
    }
}

impl TipLight {
    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.intensity > 0.0) || !(self.falloff >= 0.0) {
            return Err(RenderError::InvalidSetting(format!(
                "light needs intensity > 0 and falloff ≥ 0, got {} and {}",
                self.intensity, self.falloff
            )));
        }
        Ok(())
    }

    /// Irradiance scale at distance `d`: I₀·e^(−αd)/d².
    pub fn attenuation(&self, d: f64) -> f64 {
        self.intensity * (-self.falloff * d).exp() / (d * d)
    }
}

/// Value noise over surface position modulating color and roughness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TissueTexture {
    pub seed: u64,
    /// Feature size, m.
    pub scale: f64,
    pub color_amplitude: f64,
    pub roughness_amplitude: f64,
    pub octaves: u32,
}

impl Default for TissueTexture {
    fn default() -> Self {
        Self {
            seed: 0,
            scale: 1.5e-3,
            color_amplitude: 0.25,
            roughness_amplitude: 0.15,
            octaves: 3,
        }
    }
}

fn lattice(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let mut h = seed ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h ^= (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= (z as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h = h.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smooth value noise in [−1, 1] with unit lattice spacing.
pub fn value_noise(seed: u64, p: &Vector3<f64>) -> f64 {
    let base = p.map(f64::floor);
    let f = p - base;
    let (x, y, z) = (base.x as i64, base.y as i64, base.z as i64);
    let (sx, sy, sz) = (smooth(f.x), smooth(f.y), smooth(f.z));
    let mut acc = 0.0;
    for (dx, wx) in [(0, 1.0 - sx), (1, sx)] {
        for (dy, wy) in [(0, 1.0 - sy), (1, sy)] {
            for (dz, wz) in [(0, 1.0 - sz), (1, sz)] {
                acc += wx * wy * wz * lattice(seed, x + dx, y + dy, z + dz);
            }
        }
    }
    acc
}

impl TissueTexture {
    pub fn noise(&self, p: &Point3<f64>) -> f64 {
        let mut total = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        let mut freq = 1.0 / self.scale;
        for o in 0..self.octaves.max(1) {
            total += amp * value_noise(self.seed.wrapping_add(o as u64), &(p.coords * freq));
            norm += amp;
            amp *= 0.5;
            freq *= 2.0;
        }
        total / norm
    }

    pub fn apply(&self, m: &Material, p: &Point3<f64>) -> Material {
        let n = self.noise(p);
        let k = 1.0 + self.color_amplitude * n;
        Material {
            base_color: m.base_color.map(|c| (c * k).clamp(0.0, 1.0)),
            roughness: (m.roughness + self.roughness_amplitude * n).clamp(0.02, 1.0),
            ..*m
        }
    }
}

/// Outgoing radiance toward `v` for irradiance scale `e` arriving from `l`.
/// The diffuse part is `base·e·max(0, n·l)`; the specular lobe is GGX with
/// Schlick Fresnel and Smith–Schlick masking, on the same scale.
pub fn shade(m: &Material, n: &Vector3<f64>, v: &Vector3<f64>, l: &Vector3<f64>, e: f64) -> [f64; 3] {
    let ndl = n.dot(l);
    let ndv = n.dot(v).max(1e-6);
    if ndl <= 0.0 {
        return [0.0; 3];
    }
    let h = (l + v).normalize();
    let ndh = n.dot(&h).max(0.0);
    let vdh = v.dot(&h).clamp(0.0, 1.0);
    let a = m.roughness * m.roughness;
    let a2 = a * a;
    let denom = ndh * ndh * (a2 - 1.0) + 1.0;
    let d = a2 / (PI * denom * denom);
    let k = (m.roughness + 1.0).powi(2) / 8.0;
    let g = ndl / (ndl * (1.0 - k) + k) * ndv / (ndv * (1.0 - k) + k);
    let schlick = (1.0 - vdh).powi(5);
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let f0 = 0.04 * m.specular * (1.0 - m.metallic) + m.base_color[c] * m.metallic;
        let f = f0 + (1.0 - f0) * schlick * (f0 > 0.0) as u8 as f64;
        let spec = d * f * g / (4.0 * ndl * ndv);
        *o = (m.base_color[c] * (1.0 - m.metallic) + PI * spec) * ndl * e;
    }
    out
}

pub fn srgb_encode(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_decode(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// Exposure, Reinhard tone curve and sRGB quantization.
pub fn tone_map(radiance: [f64; 3], exposure: f64) -> [u8; 3] {
    radiance.map(|c| {
        let x = (c * exposure).max(0.0);
        (srgb_encode(x / (1.0 + x)) * 255.0).round().clamp(0.0, 255.0) as u8
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matte_is_pure_lambert() {
        let m = Material::matte([0.5, 0.25, 1.0]);
        let n = Vector3::z();
        let l = Vector3::new(0.6, 0.0, 0.8);
        let out = shade(&m, &n, &n, &l, 2.0);
        for c in 0..3 {
            assert!((out[c] - m.base_color[c] * 0.8 * 2.0).abs() < 1e-12);
        }
        assert_eq!(shade(&m, &n, &n, &-l, 2.0), [0.0; 3]);
    }

    #[test]
    fn glossy_surface_has_highlight_at_mirror_direction() {
        let m = Material {
            roughness: 0.2,
            ..Default::default()
        };
        let n = Vector3::z();
        let head_on = shade(&m, &n, &n, &n, 1.0);
        let l = Vector3::new(0.5f64.sqrt(), 0.0, 0.5f64.sqrt());
        let oblique = shade(&m, &n, &n, &l, 1.0);
        assert!(head_on[0] > m.base_color[0] * 1.05);
        assert!(oblique[0] < head_on[0] * 0.8);
    }

    #[test]
    fn attenuation_combines_exponential_and_inverse_square() {
        let l = TipLight::default();
        let a = l.attenuation(0.01);
        assert!((a - 2e-4 * (-0.2f64).exp() / 1e-4).abs() < 1e-12);
        let free = TipLight { falloff: 0.0, ..l };
        assert!((free.attenuation(0.02) / free.attenuation(0.01) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn srgb_round_trip() {
        for i in 0..=255 {
            let c = i as f64 / 255.0;
            assert!((srgb_encode(srgb_decode(c)) - c).abs() < 1e-12);
        }
    }

    #[test]
    fn tone_map_endpoints() {
        assert_eq!(tone_map([0.0; 3], 1.0), [0, 0, 0]);
        assert_eq!(tone_map([1e9; 3], 1.0), [255, 255, 255]);
        let mid = tone_map([1.0; 3], 1.0)[0];
        assert_eq!(mid, (srgb_encode(0.5) * 255.0).round() as u8);
    }

    #[test]
    fn value_noise_is_bounded_continuous_and_seeded() {
        let p = Vector3::new(0.3, 1.7, -2.2);
        let a = value_noise(1, &p);
        assert!((-1.0..=1.0).contains(&a));
        assert!((value_noise(1, &(p + Vector3::repeat(1e-7))) - a).abs() < 1e-5);
        assert_ne!(a, value_noise(2, &p));
        assert_eq!(value_noise(1, &Vector3::new(2.0, 3.0, 4.0)), lattice(1, 2, 3, 4));
    }
}
