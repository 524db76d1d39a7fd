//! Articulated skinned bodies: joint hierarchies, blendshape bases, and
//! linear blend skinning.
//!
//! The body model is generic: a rest mesh, a topologically ordered joint
//! tree with named joints, sparse per-vertex weights, and optional shape and
//! expression displacement bases. [`lbs_pose_generic`] is written against
//! [`Real`] so the fitting code can differentiate through it with dual
//! numbers.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::geom::{Corner, TriMesh};
use crate::math::{Mat3, Real, Vec2, Vec3, V2, V3};
use crate::{Error, Result};

/// Joint names every rig must provide (the fitting objectives reference
/// them: look-at targets, upright prior, side-view pairs, stage free sets).
pub const REQUIRED_JOINTS: [&str; 13] = [
    "pelvis",
    "neck",
    "head",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
    "l_ear",
    "r_ear",
    "l_hip",
    "r_hip",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub name: String,
    /// Parent index; `None` exactly for the root. Parents precede children.
    pub parent: Option<u32>,
    /// Rest-pose position (meters).
    pub rest: V3,
}

/// Per-vertex displacement basis: one `Vec<f64>` of xyz offsets per column,
/// laid out `col[vertex * 3 + axis]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    pub columns: Vec<Vec<f64>>,
}

impl Basis {
    pub fn column_count(&self) -> usize {
        self.columns.len()
    }
}

/// A skinned body: rest mesh + joint tree + weights + bases.
#[derive(Clone, Debug)]
pub struct SkinnedBody {
    rest_mesh: TriMesh,
    joints: Vec<Joint>,
    skin_weights: Vec<Vec<(u32, f64)>>,
    shape_basis: Option<Basis>,
    expr_basis: Option<Basis>,
    left_hand_joints: Vec<u32>,
    right_hand_joints: Vec<u32>,
    jaw_joint: Option<u32>,
}

impl SkinnedBody {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rest_mesh: TriMesh,
        joints: Vec<Joint>,
        skin_weights: Vec<Vec<(u32, f64)>>,
        shape_basis: Option<Basis>,
        expr_basis: Option<Basis>,
        left_hand_joints: Vec<u32>,
        right_hand_joints: Vec<u32>,
        jaw_joint: Option<u32>,
    ) -> Result<SkinnedBody> {
        if joints.is_empty() {
            return Err(Error::InvalidRig("no joints".into()));
        }
        for (j, joint) in joints.iter().enumerate() {
            match joint.parent {
                None => {
                    if j != 0 {
                        return Err(Error::InvalidRig(format!(
                            "joint {j} ({}) has no parent but is not the root",
                            joint.name
                        )));
                    }
                }
                Some(p) => {
                    if p as usize >= j {
                        return Err(Error::InvalidRig(format!(
                            "joint {j} ({}) has parent {p}, breaking topological order",
                            joint.name
                        )));
                    }
                }
            }
        }
        for name in REQUIRED_JOINTS {
            if !joints.iter().any(|j| j.name == name) {
                return Err(Error::InvalidRig(format!("missing required joint {name:?}")));
            }
        }
        if skin_weights.len() != rest_mesh.vertices().len() {
            return Err(Error::InvalidRig(format!(
                "{} weight entries for {} vertices",
                skin_weights.len(),
                rest_mesh.vertices().len()
            )));
        }
        for (v, entry) in skin_weights.iter().enumerate() {
            let mut sum = 0.0;
            for (j, w) in entry {
                if *j as usize >= joints.len() {
                    return Err(Error::InvalidRig(format!("vertex {v} weights joint {j}")));
                }
                if *w < 0.0 {
                    return Err(Error::InvalidRig(format!("vertex {v} has negative weight")));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidRig(format!(
                    "vertex {v} weights sum to {sum}, expected 1"
                )));
            }
        }
        for basis in [&shape_basis, &expr_basis].into_iter().flatten() {
            for (c, col) in basis.columns.iter().enumerate() {
                if col.len() != rest_mesh.vertices().len() * 3 {
                    return Err(Error::InvalidRig(format!(
                        "basis column {c} has {} entries, expected {}",
                        col.len(),
                        rest_mesh.vertices().len() * 3
                    )));
                }
            }
        }
        for j in left_hand_joints.iter().chain(&right_hand_joints).chain(&jaw_joint) {
            if *j as usize >= joints.len() {
                return Err(Error::InvalidRig(format!("special joint {j} out of range")));
            }
        }
        Ok(SkinnedBody {
            rest_mesh,
            joints,
            skin_weights,
            shape_basis,
            expr_basis,
            left_hand_joints,
            right_hand_joints,
            jaw_joint,
        })
    }

    pub fn rest_mesh(&self) -> &TriMesh {
        &self.rest_mesh
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn skin_weights(&self) -> &[Vec<(u32, f64)>] {
        &self.skin_weights
    }

    pub fn shape_basis(&self) -> Option<&Basis> {
        self.shape_basis.as_ref()
    }

    pub fn expr_basis(&self) -> Option<&Basis> {
        self.expr_basis.as_ref()
    }

    pub fn shape_dim(&self) -> usize {
        self.shape_basis.as_ref().map_or(0, Basis::column_count)
    }

    pub fn expr_dim(&self) -> usize {
        self.expr_basis.as_ref().map_or(0, Basis::column_count)
    }

    pub fn left_hand_joints(&self) -> &[u32] {
        &self.left_hand_joints
    }

    pub fn right_hand_joints(&self) -> &[u32] {
        &self.right_hand_joints
    }

    pub fn jaw_joint(&self) -> Option<u32> {
        self.jaw_joint
    }

    pub fn joint_index(&self, name: &str) -> Option<u32> {
        self.joints.iter().position(|j| j.name == name).map(|i| i as u32)
    }

    /// Joints driven by the per-joint body pose block: everything except the
    /// root (driven by the global rotation), the hand chains, and the jaw.
    pub fn body_joint_indices(&self) -> Vec<u32> {
        (1..self.joints.len() as u32)
            .filter(|j| {
                !self.left_hand_joints.contains(j)
                    && !self.right_hand_joints.contains(j)
                    && Some(*j) != self.jaw_joint
            })
            .collect()
    }

    /// Replace a subset of rest-mesh vertices (canonical-space override used
    /// for head replacement before skinning).
    pub fn with_rest_vertices_overridden(&self, overrides: &[(u32, V3)]) -> Result<SkinnedBody> {
        let mut verts = self.rest_mesh.vertices().to_vec();
        for (i, p) in overrides {
            let idx = *i as usize;
            if idx >= verts.len() {
                return Err(Error::invalid_arg(format!("vertex override {i} out of range")));
            }
            verts[idx] = *p;
        }
        let mut body = self.clone();
        body.rest_mesh = self.rest_mesh.with_vertices(verts)?;
        Ok(body)
    }
}

/// Pose input for [`lbs_pose_generic`]: axis-angle per joint (the root entry
/// is normally zero; the global rotation is applied after skinning), plus
/// shape/expression coefficients and a world translation.
#[derive(Clone, Debug)]
pub struct Pose<T> {
    pub global_rot: Vec3<T>,
    pub joint_rots: Vec<Vec3<T>>,
    pub translation: Vec3<T>,
    pub shape: Vec<T>,
    pub expr: Vec<T>,
}

impl<T: Real> Pose<T> {
    pub fn rest(body: &SkinnedBody) -> Pose<T> {
        Pose {
            global_rot: Vec3::from_f64(V3::ZERO),
            joint_rots: vec![Vec3::from_f64(V3::ZERO); body.joints().len()],
            translation: Vec3::from_f64(V3::ZERO),
            shape: vec![T::zero(); body.shape_dim()],
            expr: vec![T::zero(); body.expr_dim()],
        }
    }
}

/// Posed vertices and joints from linear blend skinning.
///
/// Rest vertices are displaced by the shape and expression bases, blended
/// through the weighted joint world transforms (each joint rotates its
/// subtree about its own rest position), then the global rotation (about the
/// world origin) and translation are applied. Rest joints do not follow the
/// shape basis (no joint regressor).
pub fn lbs_pose_generic<T: Real>(
    body: &SkinnedBody,
    pose: &Pose<T>,
) -> Result<(Vec<Vec3<T>>, Vec<Vec3<T>>)> {
    if pose.joint_rots.len() != body.joints().len() {
        return Err(Error::BasisLengthMismatch {
            expected: body.joints().len(),
            got: pose.joint_rots.len(),
        });
    }
    if pose.shape.len() != body.shape_dim() {
        return Err(Error::BasisLengthMismatch {
            expected: body.shape_dim(),
            got: pose.shape.len(),
        });
    }
    if pose.expr.len() != body.expr_dim() {
        return Err(Error::BasisLengthMismatch {
            expected: body.expr_dim(),
            got: pose.expr.len(),
        });
    }
    for w in &pose.joint_rots {
        if !w.is_finite() {
            return Err(Error::invalid_arg("non-finite joint rotation"));
        }
    }

    // Shape + expression displacement on rest vertices.
    let nv = body.rest_mesh().vertices().len();
    let mut shaped: Vec<Vec3<T>> = body
        .rest_mesh()
        .vertices()
        .iter()
        .map(|v| Vec3::from_f64(*v))
        .collect();
    for (basis, coeffs) in [
        (body.shape_basis(), &pose.shape),
        (body.expr_basis(), &pose.expr),
    ] {
        if let Some(basis) = basis {
            for (c, coeff) in coeffs.iter().enumerate() {
                if coeff.value() == 0.0 && coeff.clone() == T::zero() {
                    continue;
                }
                let col = &basis.columns[c];
                for v in 0..nv {
                    let d = Vec3::new(
                        T::from_f64(col[v * 3]),
                        T::from_f64(col[v * 3 + 1]),
                        T::from_f64(col[v * 3 + 2]),
                    );
                    shaped[v] = shaped[v].add(&d.scale(coeff));
                }
            }
        }
    }

    // Forward kinematics: A_j(x) = M_j x + b_j, each joint pivoting about
    // its rest position.
    let joints = body.joints();
    let mut mats: Vec<Mat3<T>> = Vec::with_capacity(joints.len());
    let mut offs: Vec<Vec3<T>> = Vec::with_capacity(joints.len());
    for (j, joint) in joints.iter().enumerate() {
        let r = Mat3::from_axis_angle(&pose.joint_rots[j]);
        let rest = Vec3::from_f64(joint.rest);
        let pivot = rest.sub(&r.mul_vec(&rest));
        match joint.parent {
            None => {
                mats.push(r);
                offs.push(pivot);
            }
            Some(p) => {
                let p = p as usize;
                let m = mats[p].mul_mat(&r);
                let b = mats[p].mul_vec(&pivot).add(&offs[p]);
                mats.push(m);
                offs.push(b);
            }
        }
    }

    let global = Mat3::from_axis_angle(&pose.global_rot);

    let posed_joints: Vec<Vec3<T>> = joints
        .iter()
        .enumerate()
        .map(|(j, joint)| {
            let rest = Vec3::from_f64(joint.rest);
            let p = mats[j].mul_vec(&rest).add(&offs[j]);
            global.mul_vec(&p).add(&pose.translation)
        })
        .collect();

    let posed_verts: Vec<Vec3<T>> = (0..nv)
        .map(|v| {
            let x = &shaped[v];
            let mut acc = Vec3::from_f64(V3::ZERO);
            for (j, w) in &body.skin_weights()[v] {
                let j = *j as usize;
                let p = mats[j].mul_vec(x).add(&offs[j]);
                acc = acc.add(&p.scale(&T::from_f64(*w)));
            }
            global.mul_vec(&acc).add(&pose.translation)
        })
        .collect();

    Ok((posed_verts, posed_joints))
}

/// f64 convenience wrapper returning a posed mesh and posed joint positions.
pub fn lbs_pose(body: &SkinnedBody, pose: &Pose<f64>) -> Result<(TriMesh, Vec<V3>)> {
    let (verts, joints) = lbs_pose_generic(body, pose)?;
    let mesh = body.rest_mesh().with_vertices(verts)?;
    Ok((mesh, joints))
}

// ---------------------------------------------------------------------------
// Procedural articulated tube body used throughout the tests and fixtures.
// ---------------------------------------------------------------------------

struct TubeSpec {
    from: V3,
    to: V3,
    radius: f64,
    near: u32,
    far: u32,
    /// Terminal bones blend fully to the far joint at the tip (leaf joints
    /// with no continuation tube, like the ears); chain bones stop at 50/50.
    terminal: bool,
}

/// Deterministic 16-joint articulated body: tube limbs around a stick
/// skeleton, a chart-per-tube UV atlas, two shape columns (girth, height)
/// and one expression column (head bulge).
pub fn tube_body() -> SkinnedBody {
    let j = |name: &str, parent: Option<u32>, x: f64, y: f64, z: f64| Joint {
        name: name.into(),
        parent,
        rest: Vec3::new(x, y, z),
    };
    // Subject faces +z; its left side is +x.
    let joints = vec![
        j("pelvis", None, 0.0, 0.95, 0.0),          // 0
        j("spine", Some(0), 0.0, 1.20, 0.0),        // 1
        j("neck", Some(1), 0.0, 1.45, 0.0),         // 2
        j("head", Some(2), 0.0, 1.58, 0.0),         // 3
        j("l_ear", Some(3), 0.09, 1.64, 0.0),       // 4
        j("r_ear", Some(3), -0.09, 1.64, 0.0),      // 5
        j("l_shoulder", Some(2), 0.18, 1.40, 0.0),  // 6
        j("l_elbow", Some(6), 0.30, 1.14, 0.0),     // 7
        j("l_wrist", Some(7), 0.37, 0.92, 0.0),     // 8
        j("l_hand", Some(8), 0.40, 0.83, 0.0),      // 9
        j("r_shoulder", Some(2), -0.18, 1.40, 0.0), // 10
        j("r_elbow", Some(10), -0.30, 1.14, 0.0),   // 11
        j("r_wrist", Some(11), -0.37, 0.92, 0.0),   // 12
        j("r_hand", Some(12), -0.40, 0.83, 0.0),    // 13
        j("l_hip", Some(0), 0.10, 0.88, 0.0),       // 14
        j("r_hip", Some(0), -0.10, 0.88, 0.0),      // 15
    ];
    let at = |i: usize| joints[i].rest;

    let mut tubes = Vec::new();
    let mut tube = |from: V3, to: V3, radius: f64, near: u32, far: u32, terminal: bool| {
        tubes.push(TubeSpec { from, to, radius, near, far, terminal });
    };
    tube(at(0), at(1), 0.14, 0, 1, false); // pelvis -> spine
    tube(at(1), at(2), 0.12, 1, 2, false); // spine -> neck
    tube(at(2), at(3), 0.055, 2, 3, false); // neck -> head
    tube(at(3), at(3).add(&Vec3::new(0.0, 0.14, 0.0)), 0.09, 3, 3, false); // cranium
    tube(at(3).add(&Vec3::new(0.06, 0.05, 0.0)), at(4), 0.018, 3, 4, true); // l ear
    tube(at(3).add(&Vec3::new(-0.06, 0.05, 0.0)), at(5), 0.018, 3, 5, true); // r ear
    tube(at(2), at(6), 0.05, 2, 6, false); // l clavicle
    tube(at(6), at(7), 0.05, 6, 7, false); // l upper arm
    tube(at(7), at(8), 0.042, 7, 8, false); // l forearm
    tube(at(8), at(9), 0.035, 8, 9, false); // l palm
    tube(at(9), at(9).add(&Vec3::new(0.025, -0.05, 0.0)), 0.028, 9, 9, false); // l fingers
    tube(at(2), at(10), 0.05, 2, 10, false); // r clavicle
    tube(at(10), at(11), 0.05, 10, 11, false); // r upper arm
    tube(at(11), at(12), 0.042, 11, 12, false); // r forearm
    tube(at(12), at(13), 0.035, 12, 13, false); // r palm
    tube(at(13), at(13).add(&Vec3::new(-0.025, -0.05, 0.0)), 0.028, 13, 13, false); // r fingers
    tube(at(14), at(14).add(&Vec3::new(0.0, -0.38, 0.0)), 0.075, 14, 14, false); // l thigh
    tube(at(15), at(15).add(&Vec3::new(0.0, -0.38, 0.0)), 0.075, 15, 15, false); // r thigh

    const SEGMENTS: usize = 8;
    const RINGS: usize = 4;
    // One chart per tube plus one per cap, in a square cell grid.
    let units = tubes.len() * 3;
    let grid = {
        let mut g = 1;
        while g * g < units {
            g += 1;
        }
        g
    };
    let cell = 1.0 / grid as f64;
    let inset = 0.08 * cell;
    let chart = |unit: usize, fu: f64, fv: f64| -> V2 {
        let cx = (unit % grid) as f64 * cell;
        let cy = (unit / grid) as f64 * cell;
        Vec2::new(
            cx + inset + fu * (cell - 2.0 * inset),
            cy + inset + fv * (cell - 2.0 * inset),
        )
    };

    let mut vertices: Vec<V3> = Vec::new();
    let mut radial: Vec<V3> = Vec::new(); // unit radial direction per vertex
    let mut weights: Vec<Vec<(u32, f64)>> = Vec::new();
    let mut faces: Vec<[Corner; 3]> = Vec::new();

    for (t, spec) in tubes.iter().enumerate() {
        let axis = spec.to.sub(&spec.from);
        let len = axis.norm();
        let dir = axis.scale(&(1.0 / len));
        let reference = if dir.x.abs() < 0.9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        let u_axis = dir.cross(&reference).normalized();
        let v_axis = dir.cross(&u_axis).normalized();
        let base = vertices.len() as u32;
        for ring in 0..RINGS {
            let f = ring as f64 / (RINGS - 1) as f64;
            let center = spec.from.add(&axis.scale(&f));
            let far_w = if spec.near == spec.far {
                0.0
            } else {
                // Smooth blend over the far half of the tube: up to 50/50
                // for chain bones, all the way to the far joint for
                // terminal bones.
                let s = ((f - 0.5) / 0.5).clamp(0.0, 1.0);
                let cap = if spec.terminal { 1.0 } else { 0.5 };
                cap * s * s * (3.0 - 2.0 * s)
            };
            for seg in 0..SEGMENTS {
                let th = 2.0 * core::f64::consts::PI * seg as f64 / SEGMENTS as f64;
                let rdir = u_axis.scale(&libm::cos(th)).add(&v_axis.scale(&libm::sin(th)));
                vertices.push(center.add(&rdir.scale(&spec.radius)));
                radial.push(rdir);
                if far_w > 0.0 {
                    weights.push(vec![(spec.near, 1.0 - far_w), (spec.far, far_w)]);
                } else {
                    weights.push(vec![(spec.near, 1.0)]);
                }
            }
        }
        let vid = |ring: usize, seg: usize| base + (ring * SEGMENTS + seg % SEGMENTS) as u32;
        let tube_unit = t * 3;
        for ring in 0..RINGS - 1 {
            let fv0 = ring as f64 / (RINGS - 1) as f64;
            let fv1 = (ring + 1) as f64 / (RINGS - 1) as f64;
            for seg in 0..SEGMENTS {
                let fu0 = seg as f64 / SEGMENTS as f64;
                let fu1 = (seg + 1) as f64 / SEGMENTS as f64;
                let c = |v: u32, fu: f64, fv: f64| Corner {
                    vertex: v,
                    uv: chart(tube_unit, fu, fv),
                };
                // tangential x axial points outward in this ring frame
                faces.push([
                    c(vid(ring, seg), fu0, fv0),
                    c(vid(ring, seg + 1), fu1, fv0),
                    c(vid(ring + 1, seg), fu0, fv1),
                ]);
                faces.push([
                    c(vid(ring, seg + 1), fu1, fv0),
                    c(vid(ring + 1, seg + 1), fu1, fv1),
                    c(vid(ring + 1, seg), fu0, fv1),
                ]);
            }
        }
        // End caps: fans around the ring centers.
        for (end, unit_off) in [(0usize, 1usize), (RINGS - 1, 2usize)] {
            let center_pos = if end == 0 { spec.from } else { spec.to };
            let ci = vertices.len() as u32;
            vertices.push(center_pos);
            radial.push(V3::ZERO);
            weights.push(weights[vid(end, 0) as usize].clone());
            let cap_unit = tube_unit + unit_off;
            for seg in 0..SEGMENTS {
                let th0 = 2.0 * core::f64::consts::PI * seg as f64 / SEGMENTS as f64;
                let th1 = 2.0 * core::f64::consts::PI * (seg + 1) as f64 / SEGMENTS as f64;
                let cap_uv = |th: f64| {
                    chart(
                        cap_unit,
                        0.5 + 0.45 * libm::cos(th),
                        0.5 + 0.45 * libm::sin(th),
                    )
                };
                let c0 = Corner { vertex: vid(end, seg), uv: cap_uv(th0) };
                let c1 = Corner { vertex: vid(end, seg + 1), uv: cap_uv(th1) };
                let cc = Corner { vertex: ci, uv: chart(cap_unit, 0.5, 0.5) };
                // Start cap faces -axis, end cap faces +axis.
                if end == 0 {
                    faces.push([c1, c0, cc]);
                } else {
                    faces.push([c0, c1, cc]);
                }
            }
        }
    }

    let nv = vertices.len();
    let pelvis_y = 0.95;
    let mut girth = vec![0.0; nv * 3];
    let mut height = vec![0.0; nv * 3];
    for v in 0..nv {
        let g = radial[v].scale(&0.03);
        girth[v * 3] = g.x;
        girth[v * 3 + 1] = g.y;
        girth[v * 3 + 2] = g.z;
        height[v * 3 + 1] = 0.08 * (vertices[v].y - pelvis_y);
    }
    let mut head_bulge = vec![0.0; nv * 3];
    for v in 0..nv {
        let w_head: f64 = weights[v]
            .iter()
            .filter(|(j, _)| *j == 3)
            .map(|(_, w)| *w)
            .sum();
        if w_head > 0.0 {
            let d = radial[v].scale(&(0.02 * w_head));
            head_bulge[v * 3] = d.x;
            head_bulge[v * 3 + 1] = d.y;
            head_bulge[v * 3 + 2] = d.z;
        }
    }

    let mesh = TriMesh::new(vertices, faces).expect("tube body mesh is valid");
    SkinnedBody::new(
        mesh,
        joints,
        weights,
        Some(Basis { columns: vec![girth, height] }),
        Some(Basis { columns: vec![head_bulge] }),
        vec![9],
        vec![13],
        None,
    )
    .expect("tube body rig is valid")
}

/// Vertex ids whose skin weight on `joint` is at least `min_weight`.
pub fn vertices_weighted_to(body: &SkinnedBody, joint: u32, min_weight: f64) -> Vec<u32> {
    body.skin_weights()
        .iter()
        .enumerate()
        .filter(|(_, ws)| ws.iter().any(|(j, w)| *j == joint && *w >= min_weight))
        .map(|(v, _)| v as u32)
        .collect()
}
