//! mesh-info, sample-surface, and rasterize.

use std::path::Path;

use serde_json::json;

use avatar_core::geom::sample_surface_uniform;
use avatar_core::raster::rasterize;

use crate::image_io::write_mask;
use crate::jsonio::read_camera;
use crate::obj::read_obj;
use crate::tensor::{write_tensors, Tensor};
use crate::Result;

/// Summary statistics of a mesh, as pretty JSON.
pub fn cmd_mesh_info(mesh_path: &Path) -> Result<String> {
    let mesh = read_obj(mesh_path)?;
    let (bbox_min, bbox_max) = match mesh.bbox() {
        Some((lo, hi)) => (Some(lo.to_array()), Some(hi.to_array())),
        None => (None, None),
    };
    let uv_min_max = mesh.faces().iter().flat_map(|f| f.iter()).fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), c| (lo.min(c.uv.x.min(c.uv.y)), hi.max(c.uv.x.max(c.uv.y))),
    );
    let report = json!({
        "vertices": mesh.vertices().len(),
        "faces": mesh.faces().len(),
        "surface_area": mesh.total_area(),
        "bbox_min": bbox_min,
        "bbox_max": bbox_max,
        "bbox_diagonal": mesh.bbox_diagonal(),
        "uv_range": if mesh.faces().is_empty() { None } else { Some([uv_min_max.0, uv_min_max.1]) },
        "degenerate_normal_vertices": mesh.degenerate_normal_vertices().len(),
    });
    Ok(serde_json::to_string_pretty(&report)?)
}

/// Draw area-uniform surface samples and store them as an (N, 9) f64 tensor:
/// face id, barycentrics, uv, position.
pub fn cmd_sample_surface(mesh_path: &Path, count: usize, seed: u64, out: &Path) -> Result<()> {
    let mesh = read_obj(mesh_path)?;
    let sampling = sample_surface_uniform(&mesh, count, seed)?;
    if sampling.excluded_degenerate_faces > 0 {
        eprintln!(
            "warning: {} zero-area faces excluded from sampling",
            sampling.excluded_degenerate_faces
        );
    }
    let mut data = Vec::with_capacity(count * 9);
    for s in &sampling.samples {
        data.extend_from_slice(&[
            s.face as f64,
            s.bary[0],
            s.bary[1],
            s.bary[2],
            s.uv.x,
            s.uv.y,
            s.pos.x,
            s.pos.y,
            s.pos.z,
        ]);
    }
    write_tensors(out, &[Tensor::from_f64(vec![count as u64, 9], data)?])
}

/// Rasterize the mesh to a depth tensor (H, W) f64, with an optional
/// silhouette PGM.
pub fn cmd_rasterize(
    mesh_path: &Path,
    camera_path: &Path,
    out: &Path,
    silhouette_out: Option<&Path>,
) -> Result<()> {
    let mesh = read_obj(mesh_path)?;
    let cam = read_camera(camera_path)?;
    let db = rasterize(&mesh, &cam);
    let tensor = Tensor::from_f64(
        vec![cam.height as u64, cam.width as u64],
        db.depths().to_vec(),
    )?;
    write_tensors(out, &[tensor])?;
    if let Some(sil) = silhouette_out {
        write_mask(sil, &db.coverage())?;
    }
    Ok(())
}
