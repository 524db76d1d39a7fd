//! render: pose a Gaussian set and splat it.

use std::path::PathBuf;

use avatar_core::gaussian::{rig_to_pose, splat_render};
use avatar_core::skin::{lbs_pose, Pose};
use avatar_core::tracker::ParamLayout;

use crate::image_io::write_render;
use crate::jsonio::{read_camera, read_params};
use crate::obj::read_obj;
use crate::{commands, CliError, Result};

pub struct RenderArgs {
    pub gaussians: PathBuf,
    pub camera: PathBuf,
    pub out: PathBuf,
    pub alpha_out: Option<PathBuf>,
    /// Rig file; `tube` when absent and a pose is given.
    pub rig: Option<PathBuf>,
    pub use_tube: bool,
    pub pose: Option<PathBuf>,
    /// Static canonical mesh (mutually exclusive with a rig/pose).
    pub mesh: Option<PathBuf>,
    pub background: [f64; 3],
}

pub fn cmd_render(args: &RenderArgs) -> Result<()> {
    let set = commands::read_gaussians(&args.gaussians)?;
    let cam = read_camera(&args.camera)?;

    let set = if args.rig.is_some() || args.use_tube || args.pose.is_some() {
        if args.mesh.is_some() {
            return Err(CliError::format("--mesh conflicts with --rig/--tube/--pose"));
        }
        let body = commands::load_body(args.rig.as_deref())?;
        let layout = ParamLayout::of(&body);
        let params = match &args.pose {
            Some(p) => read_params(p)?,
            None => layout.zero_params(),
        };
        let flat = layout.flatten(&params)?;
        let pose: Pose<f64> = layout.pose_from_flat(&body, &flat);
        let (posed_mesh, _) = lbs_pose(&body, &pose)?;
        let rigged = rig_to_pose(&set, body.rest_mesh(), &posed_mesh)?;
        if rigged.degenerate_frames > 0 {
            eprintln!(
                "warning: {} anchors on degenerate faces transported by translation only",
                rigged.degenerate_frames
            );
        }
        rigged.set
    } else if let Some(mesh_path) = &args.mesh {
        // Anchors must reference this mesh; identity transport validates
        // topology and refreshes anchor positions.
        let mesh = read_obj(mesh_path)?;
        rig_to_pose(&set, &mesh, &mesh)?.set
    } else {
        set
    };

    let img = splat_render(&set, &cam, args.background);
    write_render(&args.out, args.alpha_out.as_deref(), &img)
}
