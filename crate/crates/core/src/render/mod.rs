//! CPU renderer: shaded RGB under a tip light, z-depth, normals, optical
//! flow and point clouds.

pub mod camera;
pub mod flow;
pub mod frame;
pub mod pointcloud;
pub mod raster;
pub mod shading;

pub use camera::CameraIntrinsics;
pub use flow::{compute_optical_flow, warp_backward, FlowField};
pub use frame::{render_frame, render_geometry, render_radiance, FrameBundle, RenderSettings, Scene};
pub use pointcloud::{backproject_pointcloud, CloudFrame, PointCloud};
pub use raster::Raster;
pub use shading::{Material, TipLight, TissueTexture};
