//! fit-pose: the three-stage proxy-mesh refinement over files.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use avatar_core::camera::fov_correct;
use avatar_core::raster::distance_transform;
use avatar_core::tracker::{
    resolve_keypoints, stage_body, stage_hand, stage_head, AdamConfig, FitProblem,
    FrameObservations, GmofConfig, StageResult, ViewKind,
};

use crate::config::PipelineConfig;
use crate::image_io::read_mask;
use crate::jsonio::{read_camera, read_keypoints, read_params, read_vertex_targets, write_params};
use crate::{commands, CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageSelect {
    Body,
    Head,
    Hand,
    All,
}

pub struct FitPoseArgs {
    pub init: PathBuf,
    pub keypoints: PathBuf,
    pub mask: Option<PathBuf>,
    pub camera: PathBuf,
    pub stage: StageSelect,
    pub view: ViewKind,
    pub out: PathBuf,
    pub trace_out: Option<PathBuf>,
    pub rig: Option<PathBuf>,
    pub dense_head: Option<PathBuf>,
    pub dense_hand: Option<PathBuf>,
    /// Canonicalize the camera to this horizontal FoV (degrees) before
    /// fitting, rescaling the subject depth by the same factor.
    pub canonical_fov: Option<f64>,
}

pub fn cmd_fit_pose(args: &FitPoseArgs, cfg: &PipelineConfig) -> Result<()> {
    let body = commands::load_body(args.rig.as_deref())?;
    let mut cam = read_camera(&args.camera)?;
    let mut init = read_params(&args.init)?;
    let keypoints = read_keypoints(&args.keypoints)?;

    if let Some(fov) = args.canonical_fov {
        // Re-anchor: keep the pelvis pixel fixed by scaling its camera-space
        // depth together with the focal lengths.
        let pelvis = body
            .joint_index("pelvis")
            .ok_or_else(|| CliError::format("rig has no pelvis joint"))?;
        let pelvis_world = body.joints()[pelvis as usize]
            .rest
            .add(&avatar_core::math::V3::from_array(init.t));
        let depth = cam.world_to_cam(&pelvis_world).z;
        let (new_cam, new_depth, _s) = fov_correct(&cam, depth, fov)?;
        let shift = cam.view_direction().scale(&(new_depth - depth));
        init.t = avatar_core::math::V3::from_array(init.t).add(&shift).to_array();
        cam = new_cam;
    }

    let mask_field = match &args.mask {
        Some(path) => {
            let mask = read_mask(path)?;
            if mask.width != cam.width || mask.height != cam.height {
                return Err(CliError::format(format!(
                    "mask {}x{} does not match camera image {}x{}",
                    mask.width, mask.height, cam.width, cam.height
                )));
            }
            let field = distance_transform(&mask);
            if field.empty_mask {
                eprintln!("warning: foreground mask is empty; silhouette term inactive");
                None
            } else {
                Some(field)
            }
        }
        None => None,
    };

    let obs = FrameObservations {
        keypoints: resolve_keypoints(&body, &keypoints)?,
        mask_field,
        dense_head: match &args.dense_head {
            Some(p) => read_vertex_targets(p)?,
            None => Vec::new(),
        },
        dense_hand: match &args.dense_hand {
            Some(p) => read_vertex_targets(p)?,
            None => Vec::new(),
        },
    };

    let problem = FitProblem {
        body: &body,
        cam,
        frames: vec![obs],
        view: args.view,
        gmof: GmofConfig { sigma: cfg.gmof_sigma },
        conf_thresh: cfg.conf_thresh,
        exclude_wrists: cfg.exclude_wrists,
        up_axis: avatar_core::camera::UpAxis::Y,
    };

    let stages: Vec<StageSelect> = match args.stage {
        StageSelect::All => vec![StageSelect::Body, StageSelect::Head, StageSelect::Hand],
        s => vec![s],
    };

    let mut params = init;
    let mut trace_csv = String::from("stage,step,loss\n");
    for stage in stages {
        let (result, name): (StageResult, &str) = match stage {
            StageSelect::Body => (
                stage_body(
                    &problem,
                    std::slice::from_ref(&params),
                    &cfg.stage_body,
                    &AdamConfig { steps: cfg.steps_body, ..cfg.adam },
                )?,
                "body",
            ),
            StageSelect::Head => (
                stage_head(
                    &problem,
                    std::slice::from_ref(&params),
                    &cfg.stage_head,
                    &AdamConfig { steps: cfg.steps_head, ..cfg.adam },
                )?,
                "head",
            ),
            StageSelect::Hand => (
                stage_hand(
                    &problem,
                    std::slice::from_ref(&params),
                    &cfg.stage_hand,
                    &AdamConfig { steps: cfg.steps_hand, ..cfg.adam },
                )?,
                "hand",
            ),
            StageSelect::All => unreachable!(),
        };
        if result.flags.empty_keypoint_set {
            eprintln!("warning: {name} stage had no active keypoints above the confidence threshold");
        }
        for (step, loss) in result.trace.iter().enumerate() {
            let _ = writeln!(trace_csv, "{name},{step},{loss}");
        }
        params = result.frames.into_iter().next().expect("one frame in, one out");
    }

    write_params(&args.out, &params)?;
    if let Some(trace_path) = &args.trace_out {
        fs::write(trace_path, trace_csv)?;
    }
    Ok(())
}
