//! Three-stage proxy-mesh refinement: body, head, and hand passes minimize
//! robust reprojection, silhouette, prior, and smoothness objectives with
//! Adam. Gradients come from forward-mode dual numbers flowing through
//! skinning, projection, and every loss term, which keeps them exact at the
//! modest parameter counts involved.

pub mod adam;

pub use adam::{adam_minimize, AdamConfig, AdamResult};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::camera::{PinholeCamera, UpAxis};
use crate::geom::estimate_similarity;
use crate::math::{Dual, Real, Vec2, Vec3, V2, V3};
use crate::raster::DistanceField;
use crate::skin::{lbs_pose_generic, Pose, SkinnedBody};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Pose, shape, and translation state of one frame. The flat layout is
/// `[glob(3) | body(3 per body joint) | lhand | rhand | jaw(3) | beta | psi |
/// t(3)]`, with joint blocks in ascending joint-index order.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyParams {
    pub theta_glob: [f64; 3],
    pub theta_body: Vec<[f64; 3]>,
    pub theta_lhand: Vec<[f64; 3]>,
    pub theta_rhand: Vec<[f64; 3]>,
    pub theta_jaw: [f64; 3],
    pub beta: Vec<f64>,
    pub psi: Vec<f64>,
    pub t: [f64; 3],
}

/// Block offsets of the flat parameter layout for one body.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    pub body_joints: Vec<u32>,
    pub lhand_joints: Vec<u32>,
    pub rhand_joints: Vec<u32>,
    pub jaw_joint: Option<u32>,
    pub n_beta: usize,
    pub n_psi: usize,
}

impl ParamLayout {
    pub fn of(body: &SkinnedBody) -> ParamLayout {
        ParamLayout {
            body_joints: body.body_joint_indices(),
            lhand_joints: body.left_hand_joints().to_vec(),
            rhand_joints: body.right_hand_joints().to_vec(),
            jaw_joint: body.jaw_joint(),
            n_beta: body.shape_dim(),
            n_psi: body.expr_dim(),
        }
    }

    pub fn glob_off(&self) -> usize {
        0
    }
    pub fn body_off(&self) -> usize {
        3
    }
    pub fn lhand_off(&self) -> usize {
        self.body_off() + 3 * self.body_joints.len()
    }
    pub fn rhand_off(&self) -> usize {
        self.lhand_off() + 3 * self.lhand_joints.len()
    }
    pub fn jaw_off(&self) -> usize {
        self.rhand_off() + 3 * self.rhand_joints.len()
    }
    pub fn beta_off(&self) -> usize {
        self.jaw_off() + 3
    }
    pub fn psi_off(&self) -> usize {
        self.beta_off() + self.n_beta
    }
    pub fn t_off(&self) -> usize {
        self.psi_off() + self.n_psi
    }
    pub fn dim(&self) -> usize {
        self.t_off() + 3
    }

    pub fn zero_params(&self) -> BodyParams {
        BodyParams {
            theta_glob: [0.0; 3],
            theta_body: vec![[0.0; 3]; self.body_joints.len()],
            theta_lhand: vec![[0.0; 3]; self.lhand_joints.len()],
            theta_rhand: vec![[0.0; 3]; self.rhand_joints.len()],
            theta_jaw: [0.0; 3],
            beta: vec![0.0; self.n_beta],
            psi: vec![0.0; self.n_psi],
            t: [0.0; 3],
        }
    }

    pub fn flatten(&self, p: &BodyParams) -> Result<Vec<f64>> {
        if p.theta_body.len() != self.body_joints.len()
            || p.theta_lhand.len() != self.lhand_joints.len()
            || p.theta_rhand.len() != self.rhand_joints.len()
            || p.beta.len() != self.n_beta
            || p.psi.len() != self.n_psi
        {
            return Err(Error::BasisLengthMismatch {
                expected: self.dim(),
                got: 0,
            });
        }
        let mut x = Vec::with_capacity(self.dim());
        x.extend_from_slice(&p.theta_glob);
        for a in &p.theta_body {
            x.extend_from_slice(a);
        }
        for a in &p.theta_lhand {
            x.extend_from_slice(a);
        }
        for a in &p.theta_rhand {
            x.extend_from_slice(a);
        }
        x.extend_from_slice(&p.theta_jaw);
        x.extend_from_slice(&p.beta);
        x.extend_from_slice(&p.psi);
        x.extend_from_slice(&p.t);
        Ok(x)
    }

    pub fn unflatten(&self, x: &[f64]) -> Result<BodyParams> {
        if x.len() != self.dim() {
            return Err(Error::BasisLengthMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let tri = |off: usize| [x[off], x[off + 1], x[off + 2]];
        let tris = |off: usize, n: usize| (0..n).map(|i| tri(off + 3 * i)).collect::<Vec<_>>();
        Ok(BodyParams {
            theta_glob: tri(self.glob_off()),
            theta_body: tris(self.body_off(), self.body_joints.len()),
            theta_lhand: tris(self.lhand_off(), self.lhand_joints.len()),
            theta_rhand: tris(self.rhand_off(), self.rhand_joints.len()),
            theta_jaw: tri(self.jaw_off()),
            beta: x[self.beta_off()..self.beta_off() + self.n_beta].to_vec(),
            psi: x[self.psi_off()..self.psi_off() + self.n_psi].to_vec(),
            t: tri(self.t_off()),
        })
    }

    /// Build the skinning pose from a flat parameter slice.
    pub fn pose_from_flat<T: Real>(&self, body: &SkinnedBody, x: &[T]) -> Pose<T> {
        let v3 = |off: usize| Vec3::new(x[off].clone(), x[off + 1].clone(), x[off + 2].clone());
        let mut joint_rots = vec![Vec3::from_f64(V3::ZERO); body.joints().len()];
        for (k, j) in self.body_joints.iter().enumerate() {
            joint_rots[*j as usize] = v3(self.body_off() + 3 * k);
        }
        for (k, j) in self.lhand_joints.iter().enumerate() {
            joint_rots[*j as usize] = v3(self.lhand_off() + 3 * k);
        }
        for (k, j) in self.rhand_joints.iter().enumerate() {
            joint_rots[*j as usize] = v3(self.rhand_off() + 3 * k);
        }
        if let Some(j) = self.jaw_joint {
            joint_rots[j as usize] = v3(self.jaw_off());
        }
        Pose {
            global_rot: v3(self.glob_off()),
            joint_rots,
            translation: v3(self.t_off()),
            shape: x[self.beta_off()..self.beta_off() + self.n_beta].to_vec(),
            expr: x[self.psi_off()..self.psi_off() + self.n_psi].to_vec(),
        }
    }

    /// Indices of the pose blocks (glob + joint angles + jaw), i.e. the
    /// slots compared by the pose prior. Shape, expression, and translation
    /// are excluded.
    pub fn pose_prior_indices(&self) -> Vec<usize> {
        (0..self.beta_off()).collect()
    }
}

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

/// A labeled 2D keypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Keypoint {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub conf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KpTarget {
    Joint(u32),
    Vertex(u32),
}

/// Keypoint category used by the per-stage supervision filters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KpClass {
    Body,
    Head,
    Hand,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedKeypoint {
    pub target: KpTarget,
    pub pixel: V2,
    pub conf: f64,
    pub class: KpClass,
    pub is_wrist: bool,
}

/// Resolve labels against the rig: joint names map to joints, `v<N>` labels
/// map to mesh vertices (classified as body points). Unknown labels are an
/// error naming the label.
pub fn resolve_keypoints(body: &SkinnedBody, kps: &[Keypoint]) -> Result<Vec<ResolvedKeypoint>> {
    let head_set: Vec<u32> = ["head", "l_ear", "r_ear", "jaw"]
        .iter()
        .filter_map(|n| body.joint_index(n))
        .collect();
    kps.iter()
        .map(|kp| {
            if !(0.0..=1.0).contains(&kp.conf) {
                return Err(Error::invalid_arg(format!(
                    "keypoint {:?} confidence {} outside [0,1]",
                    kp.label, kp.conf
                )));
            }
            if let Some(j) = body.joint_index(&kp.label) {
                let class = if head_set.contains(&j) {
                    KpClass::Head
                } else if body.left_hand_joints().contains(&j)
                    || body.right_hand_joints().contains(&j)
                {
                    KpClass::Hand
                } else {
                    KpClass::Body
                };
                return Ok(ResolvedKeypoint {
                    target: KpTarget::Joint(j),
                    pixel: Vec2::new(kp.x, kp.y),
                    conf: kp.conf,
                    class,
                    is_wrist: kp.label == "l_wrist" || kp.label == "r_wrist",
                });
            }
            if let Some(rest) = kp.label.strip_prefix('v') {
                if let Ok(v) = rest.parse::<u32>() {
                    if (v as usize) < body.rest_mesh().vertices().len() {
                        return Ok(ResolvedKeypoint {
                            target: KpTarget::Vertex(v),
                            pixel: Vec2::new(kp.x, kp.y),
                            conf: kp.conf,
                            class: KpClass::Body,
                            is_wrist: false,
                        });
                    }
                }
            }
            Err(Error::UnresolvedLabel(kp.label.clone()))
        })
        .collect()
}

/// Dense vertex target: a mesh vertex supervised at an image position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexTarget {
    pub vertex: u32,
    pub pixel: V2,
}

/// Per-frame observations.
#[derive(Clone, Debug, Default)]
pub struct FrameObservations {
    pub keypoints: Vec<ResolvedKeypoint>,
    pub mask_field: Option<DistanceField>,
    pub dense_head: Vec<VertexTarget>,
    pub dense_hand: Vec<VertexTarget>,
}

/// Which side the subject shows to the camera.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewKind {
    Front,
    Left,
    Right,
    Back,
}

/// Robustness scale of the Geman-McClure loss (pixels).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmofConfig {
    pub sigma: f64,
}

impl Default for GmofConfig {
    fn default() -> Self {
        GmofConfig { sigma: 100.0 }
    }
}

/// Default keypoint confidence threshold.
pub const DEFAULT_CONF_THRESH: f64 = 0.6;

/// The full fitting problem: one subject, one camera, one or more frames.
#[derive(Clone, Debug)]
pub struct FitProblem<'a> {
    pub body: &'a SkinnedBody,
    pub cam: PinholeCamera,
    pub frames: Vec<FrameObservations>,
    pub view: ViewKind,
    pub gmof: GmofConfig,
    pub conf_thresh: f64,
    pub exclude_wrists: bool,
    pub up_axis: UpAxis,
}

impl<'a> FitProblem<'a> {
    pub fn single_frame(
        body: &'a SkinnedBody,
        cam: PinholeCamera,
        obs: FrameObservations,
    ) -> FitProblem<'a> {
        FitProblem {
            body,
            cam,
            frames: vec![obs],
            view: ViewKind::Front,
            gmof: GmofConfig::default(),
            conf_thresh: DEFAULT_CONF_THRESH,
            exclude_wrists: false,
            up_axis: UpAxis::Y,
        }
    }
}

// ---------------------------------------------------------------------------
// Loss terms
// ---------------------------------------------------------------------------

/// [`gmof`] applied to an already-squared residual. Squared residuals keep
/// the whole term smooth at zero (no square root kink), which matters for
/// the dual-number gradients.
pub fn gmof_sq<T: Real>(r_sq: T, sigma: f64) -> T {
    let s2 = T::from_f64(sigma * sigma);
    s2.clone() * r_sq.clone() / (r_sq + s2)
}

/// Geman-McClure robust penalty `sigma^2 r^2 / (r^2 + sigma^2)`: quadratic
/// near zero, saturating at `sigma^2`.
pub fn gmof<T: Real>(r: T, sigma: f64) -> T {
    gmof_sq(r.clone() * r, sigma)
}

/// Derivative of [`gmof`] w.r.t. the residual.
pub fn gmof_deriv(r: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let d = r * r + s2;
    2.0 * s2 * s2 * r / (d * d)
}

/// One posed frame shared by all loss terms.
struct PosedFrame<T> {
    verts: Vec<Vec3<T>>,
    joints: Vec<Vec3<T>>,
}

fn pose_frame<T: Real>(
    body: &SkinnedBody,
    layout: &ParamLayout,
    x: &[T],
) -> Result<PosedFrame<T>> {
    let pose = layout.pose_from_flat(body, x);
    let (verts, joints) = lbs_pose_generic(body, &pose)?;
    Ok(PosedFrame { verts, joints })
}

fn keypoint_active(p: &FitProblem, kp: &ResolvedKeypoint, classes: &[KpClass]) -> bool {
    kp.conf > p.conf_thresh
        && !(p.exclude_wrists && kp.is_wrist)
        && classes.contains(&kp.class)
}

fn reprojection_term<T: Real>(
    p: &FitProblem,
    frame: &PosedFrame<T>,
    obs: &FrameObservations,
    classes: &[KpClass],
) -> (T, usize) {
    let mut total = T::zero();
    let mut active = 0;
    for kp in &obs.keypoints {
        if !keypoint_active(p, kp, classes) {
            continue;
        }
        let target = match kp.target {
            KpTarget::Joint(j) => &frame.joints[j as usize],
            KpTarget::Vertex(v) => &frame.verts[v as usize],
        };
        let proj = p.cam.project_generic(target);
        if proj.behind {
            continue;
        }
        let dx = proj.pixel.x - T::from_f64(kp.pixel.x);
        let dy = proj.pixel.y - T::from_f64(kp.pixel.y);
        total = total + gmof_sq(dx.clone() * dx + dy.clone() * dy, p.gmof.sigma);
        active += 1;
    }
    (total, active)
}

fn dense_term<T: Real>(p: &FitProblem, frame: &PosedFrame<T>, targets: &[VertexTarget]) -> T {
    let mut total = T::zero();
    for t in targets {
        let proj = p.cam.project_generic(&frame.verts[t.vertex as usize]);
        if proj.behind {
            continue;
        }
        let dx = proj.pixel.x - T::from_f64(t.pixel.x);
        let dy = proj.pixel.y - T::from_f64(t.pixel.y);
        total = total + gmof_sq(dx.clone() * dx + dy.clone() * dy, p.gmof.sigma);
    }
    total
}

fn mask_term<T: Real>(p: &FitProblem, frame: &PosedFrame<T>, field: &DistanceField) -> T {
    if frame.verts.is_empty() {
        return T::zero();
    }
    let mut total = T::zero();
    for v in &frame.verts {
        let proj = p.cam.project_generic(v);
        if proj.behind {
            continue;
        }
        total = total + field.sample_at_pixel(proj.pixel.x, proj.pixel.y);
    }
    total / T::from_f64(frame.verts.len() as f64)
}

fn upright_term<T: Real>(p: &FitProblem, frame: &PosedFrame<T>) -> T {
    let pelvis = p.body.joint_index("pelvis").expect("required joint");
    let neck = p.body.joint_index("neck").expect("required joint");
    let spine = frame.joints[neck as usize].sub(&frame.joints[pelvis as usize]);
    let up = Vec3::from_f64(p.up_axis.unit());
    T::one() - spine.normalized().dot(&up)
}

fn side_pairs_term<T: Real>(p: &FitProblem, frame: &PosedFrame<T>) -> T {
    let view = Vec3::from_f64(p.cam.view_direction());
    let mut total = T::zero();
    for (a, b) in [("l_ear", "r_ear"), ("l_shoulder", "r_shoulder"), ("l_hip", "r_hip")] {
        let (Some(ja), Some(jb)) = (p.body.joint_index(a), p.body.joint_index(b)) else {
            continue;
        };
        let dir = frame.joints[ja as usize]
            .sub(&frame.joints[jb as usize])
            .normalized();
        total = total + (T::one() - dir.dot(&view).abs());
    }
    total
}

fn pose_reg_term<T: Real>(layout: &ParamLayout, x: &[T], init: &[f64]) -> T {
    let mut total = T::zero();
    for i in layout.pose_prior_indices() {
        let d = x[i].clone() - T::from_f64(init[i]);
        total = total + d.clone() * d;
    }
    total
}

fn smoothness_term<T: Real>(p: &FitProblem, frames: &[PosedFrame<T>]) -> T {
    if frames.len() < 3 {
        return T::zero();
    }
    let nv = frames[0].verts.len();
    let mut total = T::zero();
    let mut count = 0usize;
    for t in 1..frames.len() - 1 {
        for v in 0..nv {
            let prev = p.cam.project_generic(&frames[t - 1].verts[v]);
            let cur = p.cam.project_generic(&frames[t].verts[v]);
            let next = p.cam.project_generic(&frames[t + 1].verts[v]);
            if prev.behind || cur.behind || next.behind {
                continue;
            }
            let two = T::from_f64(2.0);
            let ax = next.pixel.x - two.clone() * cur.pixel.x + prev.pixel.x;
            let ay = next.pixel.y - two * cur.pixel.y + prev.pixel.y;
            total = total + ax.clone() * ax + ay.clone() * ay;
            count += 1;
        }
    }
    if count == 0 {
        T::zero()
    } else {
        total / T::from_f64(count as f64)
    }
}

// ---------------------------------------------------------------------------
// Standalone f64 wrappers for the individual objectives
// ---------------------------------------------------------------------------

/// Robust keypoint reprojection objective; the flag reports an empty active
/// set (all keypoints filtered out).
pub fn reprojection_loss(
    p: &FitProblem,
    frame_idx: usize,
    params: &BodyParams,
) -> Result<(f64, bool)> {
    let layout = ParamLayout::of(p.body);
    let x = layout.flatten(params)?;
    let posed = pose_frame::<f64>(p.body, &layout, &x)?;
    let (v, active) = reprojection_term(
        p,
        &posed,
        &p.frames[frame_idx],
        &[KpClass::Body, KpClass::Head, KpClass::Hand],
    );
    Ok((v, active == 0))
}

/// Mean distance-field value over the projected posed vertices (zero when
/// every vertex projects inside the foreground mask).
pub fn mask_inside_loss(p: &FitProblem, frame_idx: usize, params: &BodyParams) -> Result<f64> {
    let layout = ParamLayout::of(p.body);
    let x = layout.flatten(params)?;
    let posed = pose_frame::<f64>(p.body, &layout, &x)?;
    match &p.frames[frame_idx].mask_field {
        Some(field) => Ok(mask_term(p, &posed, field)),
        None => Ok(0.0),
    }
}

/// `1 - cos(angle between the pelvis->neck axis and the vertical axis)`.
pub fn upright_loss(p: &FitProblem, params: &BodyParams) -> Result<f64> {
    let layout = ParamLayout::of(p.body);
    let x = layout.flatten(params)?;
    let posed = pose_frame::<f64>(p.body, &layout, &x)?;
    Ok(upright_term(p, &posed))
}

/// Mean squared second temporal difference of projected vertices. Returns
/// `(0, true)` for fewer than three frames.
pub fn smoothness_loss(p: &FitProblem, frames: &[BodyParams]) -> Result<(f64, bool)> {
    if frames.len() < 3 {
        return Ok((0.0, true));
    }
    let layout = ParamLayout::of(p.body);
    let posed: Result<Vec<PosedFrame<f64>>> = frames
        .iter()
        .map(|f| pose_frame(p.body, &layout, &layout.flatten(f)?))
        .collect();
    Ok((smoothness_term(p, &posed?), false))
}

/// Squared L2 distance between the pose blocks of two parameter sets
/// (translation, shape, and expression excluded).
pub fn pose_reg_loss(body: &SkinnedBody, params: &BodyParams, init: &BodyParams) -> Result<f64> {
    let layout = ParamLayout::of(body);
    let x = layout.flatten(params)?;
    let x0 = layout.flatten(init)?;
    Ok(pose_reg_term(&layout, &x, &x0))
}

// ---------------------------------------------------------------------------
// Stage machinery
// ---------------------------------------------------------------------------

/// Per-stage objective weights. Defaults follow the three-stage schedule:
/// body and head weight reprojection and the prior at 1e2, hands at 1e1; the
/// silhouette term stays at 1e2 and the upright prior at 1e4; smoothness
/// grows from 5e2 (body) to 5e4 (head) and 5e5 (hand); the dense head and
/// hand terms weigh 1e3 and 1e2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageWeights {
    pub reproj: f64,
    pub reg: f64,
    pub mask: f64,
    pub up: f64,
    pub smo: f64,
    pub head: f64,
    pub hand: f64,
}

impl StageWeights {
    pub fn body() -> StageWeights {
        StageWeights {
            reproj: 1e2,
            reg: 1e2,
            mask: 1e2,
            up: 1e4,
            smo: 5e2,
            head: 0.0,
            hand: 0.0,
        }
    }

    pub fn head() -> StageWeights {
        StageWeights {
            reproj: 1e2,
            reg: 1e2,
            mask: 1e2,
            up: 1e4,
            smo: 5e4,
            head: 1e3,
            hand: 0.0,
        }
    }

    pub fn hand() -> StageWeights {
        StageWeights {
            reproj: 1e1,
            reg: 1e1,
            mask: 1e2,
            up: 1e4,
            smo: 5e5,
            head: 1e3,
            hand: 1e2,
        }
    }
}

/// Weight of the side-view pair-alignment penalties (chosen at the same
/// magnitude as the upright prior).
pub const SIDE_ALIGN_WEIGHT: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Body,
    Head,
    Hand,
}

impl Stage {
    fn keypoint_classes(&self) -> &'static [KpClass] {
        match self {
            // Body: all keypoints. Head: body keypoints only. Hand: body and
            // hand keypoints.
            Stage::Body => &[KpClass::Body, KpClass::Head, KpClass::Hand],
            Stage::Head => &[KpClass::Body],
            Stage::Hand => &[KpClass::Body, KpClass::Hand],
        }
    }
}

/// View-dependent adjustments: side views add the pair-alignment penalties
/// and freeze the translation during the body stage; back views drop every
/// keypoint-driven term and rely on the silhouette and upright priors.
fn apply_view(
    view: ViewKind,
    stage: Stage,
    weights: &mut StageWeights,
    allow_translation: &mut bool,
) -> bool {
    match view {
        ViewKind::Front => false,
        ViewKind::Left | ViewKind::Right => {
            if stage == Stage::Body {
                *allow_translation = false;
            }
            true
        }
        ViewKind::Back => {
            weights.reproj = 0.0;
            weights.head = 0.0;
            weights.hand = 0.0;
            false
        }
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Fixed(f64),
    Var(usize),
}

/// Mapping between the optimizer vector and per-frame parameter slots.
/// Shape coefficients are shared across frames; everything else is
/// per-frame.
struct VarMap {
    slots: Vec<Vec<Slot>>,
    n_vars: usize,
    x0: Vec<f64>,
}

impl VarMap {
    fn build(layout: &ParamLayout, init: &[Vec<f64>], free: &[bool], share_beta: bool) -> VarMap {
        let dim = layout.dim();
        let mut slots = vec![vec![Slot::Fixed(0.0); dim]; init.len()];
        let mut x0 = Vec::new();
        let mut n_vars = 0usize;
        let beta_range = layout.beta_off()..layout.beta_off() + layout.n_beta;
        // Frame 0 allocates shared beta vars; later frames reuse them.
        let mut shared_beta_vars: Vec<usize> = Vec::new();
        for (f, frame_slots) in slots.iter_mut().enumerate() {
            for d in 0..dim {
                if !free[d] {
                    frame_slots[d] = Slot::Fixed(init[f][d]);
                    continue;
                }
                if share_beta && beta_range.contains(&d) {
                    let k = d - beta_range.start;
                    if f == 0 {
                        let var = n_vars;
                        n_vars += 1;
                        x0.push(init[0][d]);
                        shared_beta_vars.push(var);
                        frame_slots[d] = Slot::Var(var);
                    } else {
                        frame_slots[d] = Slot::Var(shared_beta_vars[k]);
                    }
                } else {
                    let var = n_vars;
                    n_vars += 1;
                    x0.push(init[f][d]);
                    frame_slots[d] = Slot::Var(var);
                }
            }
        }
        VarMap { slots, n_vars, x0 }
    }

    fn materialize<T: Real>(&self, x: &[T]) -> Vec<Vec<T>> {
        self.slots
            .iter()
            .map(|frame| {
                frame
                    .iter()
                    .map(|s| match s {
                        Slot::Fixed(v) => T::from_f64(*v),
                        Slot::Var(i) => x[*i].clone(),
                    })
                    .collect()
            })
            .collect()
    }
}

/// Flags raised while running a stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageFlags {
    /// Every keypoint was filtered out in some frame.
    pub empty_keypoint_set: bool,
    /// Fewer than three frames: the smoothness term was inactive.
    pub smoothness_inactive: bool,
}

/// Refined parameters plus the per-step loss trace.
#[derive(Clone, Debug)]
pub struct StageResult {
    pub frames: Vec<BodyParams>,
    pub trace: Vec<f64>,
    pub flags: StageFlags,
}

fn body_head_free_set(
    layout: &ParamLayout,
    allow_translation: bool,
    include_shape: bool,
) -> Vec<bool> {
    let mut free = vec![false; layout.dim()];
    let mut mark = |off: usize, n: usize| {
        for d in off..off + n {
            free[d] = true;
        }
    };
    mark(layout.glob_off(), 3);
    mark(layout.body_off(), 3 * layout.body_joints.len());
    mark(layout.lhand_off(), 3 * layout.lhand_joints.len());
    mark(layout.rhand_off(), 3 * layout.rhand_joints.len());
    if allow_translation {
        mark(layout.t_off(), 3);
    }
    if include_shape {
        mark(layout.beta_off(), layout.n_beta);
        mark(layout.psi_off(), layout.n_psi);
    }
    free
}

fn hand_stage_free_set(layout: &ParamLayout, body: &SkinnedBody) -> Vec<bool> {
    let mut free = vec![false; layout.dim()];
    for name in ["l_wrist", "r_wrist", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow"] {
        if let Some(j) = body.joint_index(name) {
            if let Some(k) = layout.body_joints.iter().position(|b| *b == j) {
                for d in 0..3 {
                    free[layout.body_off() + 3 * k + d] = true;
                }
            }
        }
    }
    free
}

fn stage_loss<T: Real>(
    p: &FitProblem,
    layout: &ParamLayout,
    frames_x: &[Vec<T>],
    init: &[Vec<f64>],
    weights: &StageWeights,
    side_pairs: bool,
    stage: Stage,
    flags: &mut StageFlags,
) -> Result<T> {
    let posed: Result<Vec<PosedFrame<T>>> = frames_x
        .iter()
        .map(|x| pose_frame(p.body, layout, x))
        .collect();
    let posed = posed?;
    let mut total = T::zero();
    for (f, frame) in posed.iter().enumerate() {
        let obs = &p.frames[f];
        if weights.reproj > 0.0 {
            let (term, active) = reprojection_term(p, frame, obs, stage.keypoint_classes());
            if active == 0 && !obs.keypoints.is_empty() {
                flags.empty_keypoint_set = true;
            }
            total = total + T::from_f64(weights.reproj) * term;
        }
        if weights.mask > 0.0 {
            if let Some(field) = &obs.mask_field {
                total = total + T::from_f64(weights.mask) * mask_term(p, frame, field);
            }
        }
        if weights.up > 0.0 {
            total = total + T::from_f64(weights.up) * upright_term(p, frame);
        }
        if weights.head > 0.0 && !obs.dense_head.is_empty() {
            total = total + T::from_f64(weights.head) * dense_term(p, frame, &obs.dense_head);
        }
        if weights.hand > 0.0 && !obs.dense_hand.is_empty() {
            total = total + T::from_f64(weights.hand) * dense_term(p, frame, &obs.dense_hand);
        }
        if side_pairs {
            total = total + T::from_f64(SIDE_ALIGN_WEIGHT) * side_pairs_term(p, frame);
        }
        if weights.reg > 0.0 {
            total = total + T::from_f64(weights.reg) * pose_reg_term(layout, &frames_x[f], &init[f]);
        }
    }
    if weights.smo > 0.0 {
        if posed.len() < 3 {
            flags.smoothness_inactive = true;
        } else {
            total = total + T::from_f64(weights.smo) * smoothness_term(p, &posed);
        }
    }
    Ok(total)
}

fn run_stage(
    p: &FitProblem,
    init: &[BodyParams],
    weights: &StageWeights,
    adam_cfg: &AdamConfig,
    stage: Stage,
) -> Result<StageResult> {
    if init.len() != p.frames.len() {
        return Err(Error::ShapeMismatch("frames vs initial parameters".into()));
    }
    let layout = ParamLayout::of(p.body);
    let init_flat: Result<Vec<Vec<f64>>> = init.iter().map(|f| layout.flatten(f)).collect();
    let init_flat = init_flat?;

    let mut weights = *weights;
    let mut allow_translation = true;
    let side_pairs = apply_view(p.view, stage, &mut weights, &mut allow_translation);
    let free = match stage {
        Stage::Hand => hand_stage_free_set(&layout, p.body),
        Stage::Body => body_head_free_set(&layout, allow_translation, false),
        Stage::Head => body_head_free_set(&layout, allow_translation, true),
    };
    let share_beta = stage == Stage::Head && init.len() > 1;
    let varmap = VarMap::build(&layout, &init_flat, &free, share_beta);

    let mut flags = StageFlags::default();
    if varmap.n_vars == 0 {
        let frames_x = varmap.materialize::<f64>(&[]);
        let l = stage_loss(
            p, &layout, &frames_x, &init_flat, &weights, side_pairs, stage, &mut flags,
        )?;
        return Ok(StageResult {
            frames: init.to_vec(),
            trace: vec![l],
            flags,
        });
    }

    let n = varmap.n_vars;
    let mut flags_cell = StageFlags::default();
    let result = adam_minimize(
        |x: &[f64]| {
            let duals: Vec<Dual> = x
                .iter()
                .enumerate()
                .map(|(i, v)| Dual::parameter(*v, i, n))
                .collect();
            let frames_x = varmap.materialize::<Dual>(&duals);
            let loss = stage_loss(
                p,
                &layout,
                &frames_x,
                &init_flat,
                &weights,
                side_pairs,
                stage,
                &mut flags_cell,
            )?;
            Ok((loss.re, loss.grad_vec(n)))
        },
        &varmap.x0,
        adam_cfg,
    )?;
    flags = flags_cell;

    let frames_x = varmap.materialize::<f64>(&result.x);
    let frames: Result<Vec<BodyParams>> = frames_x.iter().map(|x| layout.unflatten(x)).collect();
    Ok(StageResult {
        frames: frames?,
        trace: result.trace,
        flags,
    })
}

/// Body refinement: global orientation, body pose, hand poses, and
/// translation against keypoints, silhouette, prior, upright, and
/// smoothness.
pub fn stage_body(
    p: &FitProblem,
    init: &[BodyParams],
    weights: &StageWeights,
    adam_cfg: &AdamConfig,
) -> Result<StageResult> {
    run_stage(p, init, weights, adam_cfg, Stage::Body)
}

/// Head refinement: the body stage's variables plus shape and expression
/// coefficients (shape shared across frames), adding the dense head-vertex
/// term; keypoint supervision restricted to body keypoints.
pub fn stage_head(
    p: &FitProblem,
    init: &[BodyParams],
    weights: &StageWeights,
    adam_cfg: &AdamConfig,
) -> Result<StageResult> {
    run_stage(p, init, weights, adam_cfg, Stage::Head)
}

/// Hand refinement: wrist, shoulder, and elbow angles only, adding the
/// dense hand-vertex term; keypoints restricted to body and hand classes.
pub fn stage_hand(
    p: &FitProblem,
    init: &[BodyParams],
    weights: &StageWeights,
    adam_cfg: &AdamConfig,
) -> Result<StageResult> {
    run_stage(p, init, weights, adam_cfg, Stage::Hand)
}

// ---------------------------------------------------------------------------
// Term-level evaluation for gradient validation
// ---------------------------------------------------------------------------

/// Individually evaluable objective terms (used by the gradient-fidelity
/// checks and diagnostics).
#[derive(Clone, Debug, PartialEq)]
pub enum LossTerm {
    Reprojection,
    MaskInside,
    Upright,
    Smoothness,
    PoseReg,
    DenseHead,
    DenseHand,
    SidePairs,
}

fn eval_term_generic<T: Real>(
    p: &FitProblem,
    layout: &ParamLayout,
    frames_x: &[Vec<T>],
    init: &[Vec<f64>],
    term: &LossTerm,
) -> Result<T> {
    let posed: Result<Vec<PosedFrame<T>>> = frames_x
        .iter()
        .map(|x| pose_frame(p.body, layout, x))
        .collect();
    let posed = posed?;
    let mut total = T::zero();
    match term {
        LossTerm::Smoothness => {
            total = smoothness_term(p, &posed);
        }
        _ => {
            for (f, frame) in posed.iter().enumerate() {
                let obs = &p.frames[f];
                let contrib = match term {
                    LossTerm::Reprojection => {
                        reprojection_term(p, frame, obs, &[KpClass::Body, KpClass::Head, KpClass::Hand]).0
                    }
                    LossTerm::MaskInside => match &obs.mask_field {
                        Some(field) => mask_term(p, frame, field),
                        None => T::zero(),
                    },
                    LossTerm::Upright => upright_term(p, frame),
                    LossTerm::PoseReg => pose_reg_term(layout, &frames_x[f], &init[f]),
                    LossTerm::DenseHead => dense_term(p, frame, &obs.dense_head),
                    LossTerm::DenseHand => dense_term(p, frame, &obs.dense_hand),
                    LossTerm::SidePairs => side_pairs_term(p, frame),
                    LossTerm::Smoothness => unreachable!(),
                };
                total = total + contrib;
            }
        }
    }
    Ok(total)
}

/// Value of one term at the given frames.
pub fn loss_term_value(
    p: &FitProblem,
    frames: &[BodyParams],
    init: &[BodyParams],
    term: &LossTerm,
) -> Result<f64> {
    let layout = ParamLayout::of(p.body);
    let frames_x: Result<Vec<Vec<f64>>> = frames.iter().map(|f| layout.flatten(f)).collect();
    let init_x: Result<Vec<Vec<f64>>> = init.iter().map(|f| layout.flatten(f)).collect();
    eval_term_generic(p, &layout, &frames_x?, &init_x?, term)
}

/// Gradient of one term w.r.t. the concatenated flat parameters of all
/// frames, computed with dual numbers.
pub fn loss_term_gradient(
    p: &FitProblem,
    frames: &[BodyParams],
    init: &[BodyParams],
    term: &LossTerm,
) -> Result<Vec<f64>> {
    let layout = ParamLayout::of(p.body);
    let dim = layout.dim();
    let n = dim * frames.len();
    let init_x: Result<Vec<Vec<f64>>> = init.iter().map(|f| layout.flatten(f)).collect();
    let init_x = init_x?;
    let mut frames_x: Vec<Vec<Dual>> = Vec::with_capacity(frames.len());
    for (f, params) in frames.iter().enumerate() {
        let flat = layout.flatten(params)?;
        frames_x.push(
            flat.iter()
                .enumerate()
                .map(|(d, v)| Dual::parameter(*v, f * dim + d, n))
                .collect(),
        );
    }
    let loss = eval_term_generic(p, &layout, &frames_x, &init_x, term)?;
    Ok(loss.grad_vec(n))
}

// ---------------------------------------------------------------------------
// Head replacement
// ---------------------------------------------------------------------------

/// Override the rig's head-region rest vertices with externally estimated
/// head vertices: a similarity transform aligning the replacement model onto
/// the rig's canonical head is estimated from the correspondences, then each
/// listed vertex is replaced by its transformed counterpart before skinning.
pub fn replace_head_vertices(
    body: &SkinnedBody,
    correspondences: &[(u32, V3)],
) -> Result<SkinnedBody> {
    if correspondences.len() < 3 {
        return Err(Error::DegeneratePoints(
            "need at least 3 head correspondences".into(),
        ));
    }
    let rest = body.rest_mesh().vertices();
    let mut src = Vec::with_capacity(correspondences.len());
    let mut dst = Vec::with_capacity(correspondences.len());
    for (v, p) in correspondences {
        let idx = *v as usize;
        if idx >= rest.len() {
            return Err(Error::invalid_arg(format!("head vertex {v} out of range")));
        }
        src.push(*p);
        dst.push(rest[idx]);
    }
    let t = estimate_similarity(&src, &dst)?;
    let overrides: Vec<(u32, V3)> = correspondences
        .iter()
        .map(|(v, p)| (*v, t.apply(p)))
        .collect();
    body.with_rest_vertices_overridden(&overrides)
}
