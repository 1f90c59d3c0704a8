//! Per-pose passes: shaded RGB, z-depth and camera-frame normals.

use nalgebra::{Isometry3, Point3, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::CameraIntrinsics;
use super::flow::FlowField;
use super::pointcloud::PointCloud;
use super::raster::Raster;
use super::shading::{shade, tone_map, Material, TipLight, TissueTexture};
use crate::error::RenderError;
use crate::geometry::{Bvh, RayHit};
use crate::rng;

pub const DEFAULT_SPP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSettings {
    pub spp: usize,
    pub seed: u64,
    pub exposure: f64,
    /// View-independent fill light scaling the base color.
    pub ambient: f64,
    pub light: Option<TipLight>,
    pub texture: Option<TissueTexture>,
    /// Rays are cut off beyond this distance, m.
    pub max_distance: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            spp: DEFAULT_SPP,
            seed: 0,
            exposure: 1.0,
            ambient: 0.0,
            light: Some(TipLight::default()),
            texture: Some(TissueTexture::default()),
            max_distance: 1.0,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.spp == 0 {
            return Err(RenderError::InvalidSetting("spp must be ≥ 1".into()));
        }
        if !(self.exposure > 0.0) || !(self.ambient >= 0.0) || !(self.max_distance > 0.0) {
            return Err(RenderError::InvalidSetting("exposure and max_distance must be positive, ambient ≥ 0".into()));
        }
        if let Some(l) = &self.light {
            l.validate()?;
        }
        Ok(())
    }
}

pub struct Scene<'a> {
    pub bvh: &'a Bvh,
    pub material: Material,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub rgb: Raster<[u8; 3]>,
    /// z-depth in meters; `+inf` where the ray misses.
    pub depth: Raster<f64>,
    /// Unit normals in the camera frame facing the camera; zero where invalid.
    pub normals: Raster<[f64; 3]>,
    /// Flow to the next frame, filled by the sequence driver.
    pub flow: Option<FlowField>,
    pub cloud: Option<PointCloud>,
    /// World-from-camera.
    pub pose: Isometry3<f64>,
    pub timestamp: f64,
}

impl FrameBundle {
    pub fn valid_mask(&self) -> Raster<bool> {
        self.depth.map(|d| d.is_finite())
    }
}

struct Ray {
    origin: Point3<f64>,
    dir: Vector3<f64>,
    /// Depth per unit ray length.
    z_per_t: f64,
}

fn camera_ray(cam: &CameraIntrinsics, pose: &Isometry3<f64>, x: f64, y: f64) -> Ray {
    let local = cam.ray(x, y);
    let n = local.norm();
    Ray {
        origin: Point3::from(pose.translation.vector),
        dir: pose.rotation * (local / n),
        z_per_t: 1.0 / n,
    }
}

fn facing(hit: &RayHit, dir: &Vector3<f64>) -> Vector3<f64> {
    if hit.normal.dot(dir) > 0.0 {
        -hit.normal
    } else {
        hit.normal
    }
}

/// Depth and normal pass from one center ray per pixel.
pub fn render_geometry(bvh: &Bvh, pose: &Isometry3<f64>, cam: &CameraIntrinsics, max_distance: f64) -> (Raster<f64>, Raster<[f64; 3]>) {
    let (w, h) = (cam.width, cam.height);
    let inv = pose.rotation.inverse();
    let mut depth = Raster::filled(w, h, f64::INFINITY);
    let mut normals = Raster::filled(w, h, [0.0; 3]);
    depth
        .data
        .par_chunks_mut(w)
        .zip(normals.data.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (drow, nrow))| {
            for u in 0..w {
                let ray = camera_ray(cam, pose, u as f64, v as f64);
                let hit = bvh.raycast(&ray.origin, &ray.dir, max_distance);
                if hit.hit {
                    drow[u] = hit.t * ray.z_per_t;
                    let n = inv * facing(&hit, &ray.dir);
                    nrow[u] = [n.x, n.y, n.z];
                }
            }
        });
    (depth, normals)
}

/// Linear radiance per pixel, averaged over `spp` jittered rays.
pub fn render_radiance(scene: &Scene, pose: &Isometry3<f64>, cam: &CameraIntrinsics, settings: &RenderSettings) -> Raster<[f64; 3]> {
    let (w, h) = (cam.width, cam.height);
    let light_pos = settings.light.map(|l| pose * Point3::from(l.offset));
    let mut out = Raster::filled(w, h, [0.0; 3]);
    out.data.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        for (u, px) in row.iter_mut().enumerate() {
            let index = (v * w + u) as u64;
            let mut jitter = (settings.spp > 1).then(|| rng::keyed(settings.seed, rng::RENDER, index));
            let mut acc = [0.0; 3];
            for _ in 0..settings.spp {
                let (jx, jy) = match jitter.as_mut() {
                    Some(r) => (r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5)),
                    None => (0.0, 0.0),
                };
                let ray = camera_ray(cam, pose, u as f64 + jx, v as f64 + jy);
                let hit = scene.bvh.raycast(&ray.origin, &ray.dir, settings.max_distance);
                if !hit.hit {
                    continue;
                }
                let material = match &settings.texture {
                    Some(t) => t.apply(&scene.material, &hit.point),
                    None => scene.material,
                };
                let n = facing(&hit, &ray.dir);
                let view = -ray.dir;
                if let (Some(light), Some(lp)) = (&settings.light, light_pos) {
                    let to_light = lp - hit.point;
                    let d = to_light.norm();
                    if d > 0.0 {
                        let s = shade(&material, &n, &view, &(to_light / d), light.attenuation(d));
                        for c in 0..3 {
                            acc[c] += s[c];
                        }
                    }
                }
                for c in 0..3 {
                    acc[c] += material.base_color[c] * settings.ambient;
                }
            }
            *px = acc.map(|a| a / settings.spp as f64);
        }
    });
    out
}

/// RGB, depth and normals for one pose.
pub fn render_frame(
    scene: &Scene,
    pose: &Isometry3<f64>,
    cam: &CameraIntrinsics,
    settings: &RenderSettings,
    timestamp: f64,
) -> Result<FrameBundle, RenderError> {
    cam.validate()?;
    settings.validate()?;
    scene.material.validate()?;
    let radiance = render_radiance(scene, pose, cam, settings);
    let (depth, normals) = render_geometry(scene.bvh, pose, cam, settings.max_distance);
    Ok(FrameBundle {
        rgb: radiance.map(|r| tone_map(*r, settings.exposure)),
        depth,
        normals,
        flow: None,
        cloud: None,
        pose: *pose,
        timestamp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::plane_patch;

    fn small_cam() -> CameraIntrinsics {
        CameraIntrinsics {
            width: 61,
            height: 61,
            fx: 30.0,
            fy: 30.0,
            cx: 30.0,
            cy: 30.0,
        }
    }

    #[test]
    fn plane_center_depth_and_normal() {
        let bvh = Bvh::build(&plane_patch(0.01, 0.05, 8));
        let cam = CameraIntrinsics::default();
        let (depth, normals) = render_geometry(&bvh, &Isometry3::identity(), &cam, 1.0);
        assert!((depth.get(300, 300) - 0.010).abs() < 1e-6);
        assert!((depth.get(0, 0) - 0.010).abs() < 1e-9);
        let n = normals.get(300, 300);
        assert!((n[2] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn depth_is_independent_of_spp() {
        let bvh = Bvh::build(&plane_patch(0.01, 0.05, 4));
        let scene = Scene {
            bvh: &bvh,
            material: Material::default(),
        };
        let cam = small_cam();
        let a = render_frame(&scene, &Isometry3::identity(), &cam, &RenderSettings { spp: 1, ..Default::default() }, 0.0).unwrap();
        let b = render_frame(&scene, &Isometry3::identity(), &cam, &RenderSettings { spp: 7, ..Default::default() }, 0.0).unwrap();
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.normals, b.normals);
        let c = render_frame(&scene, &Isometry3::identity(), &cam, &RenderSettings { spp: 7, ..Default::default() }, 0.0).unwrap();
        assert_eq!(b.rgb, c.rgb);
    }

    #[test]
    fn misses_are_black_infinite_and_zero() {
        let bvh = Bvh::build(&plane_patch(0.01, 0.001, 1));
        let scene = Scene {
            bvh: &bvh,
            material: Material::default(),
        };
        let f = render_frame(&scene, &Isometry3::identity(), &small_cam(), &RenderSettings::default(), 0.0).unwrap();
        assert!(f.depth.get(0, 0).is_infinite());
        assert_eq!(*f.rgb.get(0, 0), [0, 0, 0]);
        assert_eq!(*f.normals.get(0, 0), [0.0; 3]);
        assert!(f.depth.get(30, 30).is_finite());
    }

    #[test]
    fn zero_spp_is_rejected() {
        assert!(RenderSettings { spp: 0, ..Default::default() }.validate().is_err());
    }
}
