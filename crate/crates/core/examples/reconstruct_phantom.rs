//! Voxelizes the Y phantom, stores the mask as raw bytes, reloads it and
//! rebuilds the lumen surface and distance field.

use bronchosim::anatomy::{distance_field, surface_from_mask, AnatomyOptions};
use bronchosim::geometry::{write_obj, VoxelMask};
use bronchosim::phantom::{Phantom, YPhantom};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("bronchosim_reconstruct"));
    std::fs::create_dir_all(&out)?;
    let phantom = Phantom::Y(YPhantom::default());
    let mask = phantom.mask(0.5e-3, 2)?;
    let stem = out.join("y_mask");
    let (header, raw) = mask.write_raw(&stem)?;
    let mask = VoxelMask::read_raw(&stem)?;
    println!("mask {:?} voxels ({} occupied) -> {} + {}", mask.grid.dims, mask.count(), header.display(), raw.display());

    let opts = AnatomyOptions::default();
    let mesh = surface_from_mask(&mask, &opts)?;
    println!(
        "surface: {} vertices, {} triangles, watertight {}, enclosed volume {:.1} mm^3",
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.is_watertight(),
        mesh.signed_volume().abs() * 1e9
    );
    write_obj(&mesh, out.join("lumen.obj"))?;

    let sdf = distance_field(&mesh, &opts)?;
    let worst = mesh.vertices.iter().map(|v| sdf.sample(v).abs()).fold(0.0, f64::max);
    let deepest = sdf.values.iter().copied().fold(f64::INFINITY, f64::min);
    println!(
        "sdf {:?}: |phi| on surface <= {:.3} mm, deepest interior {:.2} mm (trunk radius {:.2} mm)",
        sdf.grid.dims,
        worst * 1e3,
        -deepest * 1e3,
        YPhantom::default().trunk_radius * 1e3
    );
    Ok(())
}
