//! Command implementations behind the CLI surface.

mod basic;
mod encode;
mod fit;
mod prompts;
mod render;
mod roundtrip;

pub use basic::{cmd_mesh_info, cmd_rasterize, cmd_sample_surface};
pub use encode::cmd_encode_uv;
pub use fit::{cmd_fit_pose, FitPoseArgs, StageSelect};
pub use prompts::{cmd_compose_prompts, refine_external, ComposePromptsArgs};
pub use render::{cmd_render, RenderArgs};
pub use roundtrip::{cmd_roundtrip, RoundtripArgs};

use std::path::Path;

use avatar_core::gaussian::GaussianSet;
use avatar_core::geom::SurfaceSample;
use avatar_core::math::{Quat, Vec2, Vec3};
use avatar_core::skin::{tube_body, SkinnedBody};

use crate::tensor::{read_tensors, write_tensors, Tensor};
use crate::{CliError, Result};

/// Serialize a Gaussian set as six concatenated tensors: positions (N,3),
/// rotations (N,4, wxyz), scales (N,3), colors (N,3), opacities (N), and
/// anchors (N,9: face id, barycentrics, uv, canonical anchor position).
pub fn write_gaussians(path: &Path, set: &GaussianSet) -> Result<()> {
    let n = set.len() as u64;
    let mut positions = Vec::with_capacity(set.len() * 3);
    let mut rotations = Vec::with_capacity(set.len() * 4);
    let mut scales = Vec::with_capacity(set.len() * 3);
    let mut colors = Vec::with_capacity(set.len() * 3);
    let mut opacities = Vec::with_capacity(set.len());
    let mut anchors = Vec::with_capacity(set.len() * 9);
    for i in 0..set.len() {
        positions.extend_from_slice(&set.positions[i].to_array());
        let q = set.rotations[i];
        rotations.extend_from_slice(&[q.w, q.x, q.y, q.z]);
        scales.extend_from_slice(&set.scales[i].to_array());
        colors.extend_from_slice(&set.colors[i]);
        opacities.push(set.opacities[i]);
        let a = &set.anchors[i];
        anchors.extend_from_slice(&[
            a.face as f64,
            a.bary[0],
            a.bary[1],
            a.bary[2],
            a.uv.x,
            a.uv.y,
            a.pos.x,
            a.pos.y,
            a.pos.z,
        ]);
    }
    write_tensors(
        path,
        &[
            Tensor::from_f64(vec![n, 3], positions)?,
            Tensor::from_f64(vec![n, 4], rotations)?,
            Tensor::from_f64(vec![n, 3], scales)?,
            Tensor::from_f64(vec![n, 3], colors)?,
            Tensor::from_f64(vec![n], opacities)?,
            Tensor::from_f64(vec![n, 9], anchors)?,
        ],
    )
}

pub fn read_gaussians(path: &Path) -> Result<GaussianSet> {
    let tensors = read_tensors(path)?;
    if tensors.len() != 6 {
        return Err(CliError::format(format!(
            "gaussian set file must hold 6 tensors, found {}",
            tensors.len()
        )));
    }
    let n = tensors[0].dims.first().copied().unwrap_or(0) as usize;
    let expect_dims: [&[u64]; 6] = [
        &[n as u64, 3],
        &[n as u64, 4],
        &[n as u64, 3],
        &[n as u64, 3],
        &[n as u64],
        &[n as u64, 9],
    ];
    for (t, want) in tensors.iter().zip(expect_dims) {
        if t.dims != want {
            return Err(CliError::format(format!(
                "gaussian tensor dims {:?}, expected {:?}",
                t.dims, want
            )));
        }
    }
    let positions = tensors[0].to_f64();
    let rotations = tensors[1].to_f64();
    let scales = tensors[2].to_f64();
    let colors = tensors[3].to_f64();
    let opacities = tensors[4].to_f64();
    let anchors = tensors[5].to_f64();

    let mut set = GaussianSet {
        anchors: Vec::with_capacity(n),
        positions: Vec::with_capacity(n),
        rotations: Vec::with_capacity(n),
        scales: Vec::with_capacity(n),
        colors: Vec::with_capacity(n),
        opacities,
    };
    for i in 0..n {
        set.positions.push(Vec3::new(
            positions[i * 3],
            positions[i * 3 + 1],
            positions[i * 3 + 2],
        ));
        set.rotations.push(
            Quat::new(
                rotations[i * 4],
                rotations[i * 4 + 1],
                rotations[i * 4 + 2],
                rotations[i * 4 + 3],
            )
            .normalized(),
        );
        set.scales.push(Vec3::new(scales[i * 3], scales[i * 3 + 1], scales[i * 3 + 2]));
        set.colors.push([colors[i * 3], colors[i * 3 + 1], colors[i * 3 + 2]]);
        let a = &anchors[i * 9..(i + 1) * 9];
        set.anchors.push(SurfaceSample {
            face: a[0] as u32,
            bary: [a[1], a[2], a[3]],
            uv: Vec2::new(a[4], a[5]),
            pos: Vec3::new(a[6], a[7], a[8]),
        });
    }
    Ok(set)
}

/// Resolve the body source: an explicit rig file, or the built-in tube body.
pub fn load_body(rig: Option<&Path>) -> Result<SkinnedBody> {
    match rig {
        Some(path) => crate::rig::read_rig(path),
        None => Ok(tube_body()),
    }
}
