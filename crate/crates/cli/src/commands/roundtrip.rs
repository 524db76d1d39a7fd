//! roundtrip: render a textured mesh, scatter the rendered pixels back into
//! UV space, and compare covered texels against the ground-truth texture.

use std::fs;
use std::path::PathBuf;

use serde_json::json;

use avatar_core::camera::PinholeCamera;
use avatar_core::geom::{sample_surface_uniform, uv_unparameterize, TriMesh};
use avatar_core::raster::rasterize_gbuffer;
use avatar_core::uvscatter::{core_uv_encode, FeatureMap};

use crate::config::PipelineConfig;
use crate::image_io::{quantize, read_ppm_features, write_ppm};
use crate::jsonio::read_camera;
use crate::obj::read_obj;
use crate::Result;

/// Nearest-neighbor texture lookup at a UV coordinate (hard texture edges
/// stay crisp in the render, so the round trip is not blurred twice).
pub fn texture_nearest(tex: &FeatureMap, u: f64, v: f64) -> [f64; 3] {
    let x = ((u * tex.width as f64) as i64).clamp(0, tex.width as i64 - 1) as usize;
    let y = ((v * tex.height as f64) as i64).clamp(0, tex.height as i64 - 1) as usize;
    let p = tex.at(x, y);
    [p[0], p[1], p[2]]
}

/// Rasterize the mesh and shade each covered pixel by nearest-neighbor
/// texture lookup at the interpolated UV.
pub fn render_textured(mesh: &TriMesh, cam: &PinholeCamera, tex: &FeatureMap) -> FeatureMap {
    let gb = rasterize_gbuffer(mesh, cam);
    let mut img = FeatureMap::new(cam.height as usize, cam.width as usize, 3);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let Some(face) = gb.face_at(x, y) else { continue };
            let bary = gb.bary_at(x, y);
            let uv = uv_unparameterize(mesh, face as usize, bary).expect("face id from gbuffer");
            let rgb = texture_nearest(tex, uv.x, uv.y);
            img.at_mut(x as usize, y as usize).copy_from_slice(&rgb);
        }
    }
    img
}

pub struct RoundtripArgs {
    pub mesh: PathBuf,
    pub texture: PathBuf,
    pub camera: PathBuf,
    pub out: PathBuf,
    pub render_out: Option<PathBuf>,
    pub grid: usize,
    pub mae_threshold: f64,
}

pub struct RoundtripReport {
    pub covered_texels: usize,
    pub within_threshold: usize,
    pub fraction_within: f64,
    pub mean_mae: f64,
}

pub fn cmd_roundtrip(args: &RoundtripArgs, cfg: &PipelineConfig) -> Result<RoundtripReport> {
    let mesh = read_obj(&args.mesh)?;
    let cam = read_camera(&args.camera)?;
    let tex = read_ppm_features(&args.texture)?;

    let rendered = render_textured(&mesh, &cam, &tex);
    if let Some(render_path) = &args.render_out {
        let mut rgb = Vec::with_capacity(rendered.width * rendered.height * 3);
        for y in 0..rendered.height {
            for x in 0..rendered.width {
                let p = rendered.at(x, y);
                rgb.extend_from_slice(&[quantize(p[0]), quantize(p[1]), quantize(p[2])]);
            }
        }
        write_ppm(render_path, cam.width, cam.height, &rgb)?;
    }

    let sampling = sample_surface_uniform(&mesh, cfg.samples, cfg.seed)?;
    let (grid, _) = core_uv_encode(
        &mesh,
        &cam,
        &rendered,
        &sampling.samples,
        (args.grid, args.grid),
        &cfg.encode_config(),
    )?;

    let mut covered = 0usize;
    let mut within = 0usize;
    let mut mae_sum = 0.0;
    for (tx, ty) in grid.covered_texels() {
        covered += 1;
        let got = grid.feature_at(tx, ty);
        let u = (tx as f64 + 0.5) / args.grid as f64;
        let v = (ty as f64 + 0.5) / args.grid as f64;
        let want = texture_nearest(&tex, u, v);
        let mae = (0..3).map(|c| (got[c] - want[c]).abs()).sum::<f64>() / 3.0;
        mae_sum += mae;
        if mae <= args.mae_threshold {
            within += 1;
        }
    }
    let report = RoundtripReport {
        covered_texels: covered,
        within_threshold: within,
        fraction_within: if covered == 0 { 0.0 } else { within as f64 / covered as f64 },
        mean_mae: if covered == 0 { 0.0 } else { mae_sum / covered as f64 },
    };
    let json = json!({
        "grid": args.grid,
        "samples": cfg.samples,
        "mae_threshold": args.mae_threshold,
        "covered_texels": report.covered_texels,
        "within_threshold": report.within_threshold,
        "fraction_within": report.fraction_within,
        "mean_mae": report.mean_mae,
    });
    fs::write(&args.out, serde_json::to_string_pretty(&json)?)?;
    Ok(report)
}
