//! encode-uv: the core + shell UV scattering pipeline over files.

use std::path::{Path, PathBuf};

use avatar_core::geom::{build_shell, sample_surface_uniform};
use avatar_core::uvscatter::{core_uv_encode, shell_uv_encode, FeatureMap, UvGrid};

use crate::config::PipelineConfig;
use crate::image_io::{read_ppm_features, write_mask};
use crate::jsonio::read_camera;
use crate::obj::read_obj;
use crate::tensor::{read_single_tensor, write_tensors, Tensor};
use crate::{CliError, Result};

fn grid_tensor(grid: &UvGrid) -> Result<Tensor> {
    Tensor::from_f64(
        vec![grid.height as u64, grid.width as u64, grid.channels as u64],
        grid.features().to_vec(),
    )
}

/// Load image features from a flat tensor (H, W, C) or a PPM image.
pub fn load_features(path: &Path) -> Result<FeatureMap> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("ppm") {
        return read_ppm_features(path);
    }
    let tensor = read_single_tensor(path)?;
    if tensor.dims.len() != 3 {
        return Err(CliError::format(format!(
            "feature tensor must be rank 3 (H, W, C), found {:?}",
            tensor.dims
        )));
    }
    FeatureMap::from_data(
        tensor.dims[0] as usize,
        tensor.dims[1] as usize,
        tensor.dims[2] as usize,
        tensor.to_f64(),
    )
    .map_err(CliError::from)
}

/// Scatter image features into the core and shell UV grids; writes
/// `<prefix>.core.tnsr`, `<prefix>.shell.tnsr`, and the two coverage masks
/// `<prefix>.core-coverage.pgm` / `<prefix>.shell-coverage.pgm`.
pub fn cmd_encode_uv(
    mesh_path: &Path,
    camera_path: &Path,
    features_path: &Path,
    out_prefix: &Path,
    cfg: &PipelineConfig,
) -> Result<()> {
    let mesh = read_obj(mesh_path)?;
    let cam = read_camera(camera_path)?;
    let features = load_features(features_path)?;
    let delta = cfg.delta.unwrap_or(cfg.delta_rel * mesh.bbox_diagonal());
    let shell = build_shell(&mesh, delta)?;
    let sampling = sample_surface_uniform(&mesh, cfg.samples, cfg.seed)?;
    let enc = cfg.encode_config();

    let (core, _) = core_uv_encode(
        &mesh,
        &cam,
        &features,
        &sampling.samples,
        (cfg.core_grid, cfg.core_grid),
        &enc,
    )?;
    let (shell_grid, _) = shell_uv_encode(
        &mesh,
        &shell,
        &cam,
        &features,
        &sampling.samples,
        (cfg.shell_grid, cfg.shell_grid),
        &enc,
    )?;

    let with_suffix = |suffix: &str| -> PathBuf {
        let mut name = out_prefix.file_name().unwrap_or_default().to_os_string();
        name.push(suffix);
        out_prefix.with_file_name(name)
    };
    write_tensors(&with_suffix(".core.tnsr"), &[grid_tensor(&core)?])?;
    write_tensors(&with_suffix(".shell.tnsr"), &[grid_tensor(&shell_grid)?])?;
    write_mask(&with_suffix(".core-coverage.pgm"), &core.coverage_image())?;
    write_mask(&with_suffix(".shell-coverage.pgm"), &shell_grid.coverage_image())?;
    Ok(())
}
