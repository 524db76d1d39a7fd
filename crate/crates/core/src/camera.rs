//! Pinhole camera: projection, FoV canonicalization, adaptive look-at.

use alloc::vec::Vec;

use crate::math::{Mat3, Real, Vec2, Vec3, M3, V3};
use crate::{Error, Result};

/// Depth below which a point counts as behind the camera.
pub const BEHIND_EPS: f64 = 1e-8;

/// Calibrated pinhole camera. `world_to_cam` maps `x_cam = R x_world + t`;
/// camera space is x-right, y-down, z-forward, matching pixel coordinates
/// with the origin at the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rot: M3,
    pub t: V3,
}

/// Outcome of projecting one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection<T> {
    pub pixel: Vec2<T>,
    pub depth: T,
    /// Set when the camera-space depth is at or below [`BEHIND_EPS`];
    /// consumers must drop such points explicitly.
    pub behind: bool,
}

impl PinholeCamera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        rot: M3,
        t: V3,
    ) -> Result<PinholeCamera> {
        let focals_ok = fx > 0.0 && fy > 0.0;
        if !focals_ok {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if width < 1 || height < 1 {
            return Err(Error::InvalidCamera("image size must be at least 1x1".into()));
        }
        let det = rot.det();
        if (det - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidCamera("rotation determinant must be +1".into()));
        }
        Ok(PinholeCamera { fx, fy, cx, cy, width, height, rot, t })
    }

    /// Identity-extrinsics camera looking down +z from the origin.
    pub fn looking_forward(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        PinholeCamera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rot: Mat3::identity(),
            t: V3::ZERO,
        }
    }

    pub fn world_to_cam(&self, p: &V3) -> V3 {
        self.rot.mul_vec(p).add(&self.t)
    }

    /// Project a world point; generic so dual numbers flow through. The
    /// behind-camera test reads the value part only.
    pub fn project_generic<T: Real>(&self, p: &Vec3<T>) -> Projection<T> {
        let rot = self.rot.lift::<T>();
        let c = rot.mul_vec(p).add(&Vec3::from_f64(self.t));
        let behind = c.z.value() <= BEHIND_EPS;
        let px = T::from_f64(self.fx) * c.x.clone() / c.z.clone() + T::from_f64(self.cx);
        let py = T::from_f64(self.fy) * c.y.clone() / c.z.clone() + T::from_f64(self.cy);
        Projection {
            pixel: Vec2::new(px, py),
            depth: c.z,
            behind,
        }
    }

    pub fn project(&self, p: &V3) -> Projection<f64> {
        self.project_generic(p)
    }

    /// Invert [`Self::project`] for a known depth.
    pub fn unproject(&self, pixel: crate::math::V2, depth: f64) -> V3 {
        let x = (pixel.x - self.cx) / self.fx * depth;
        let y = (pixel.y - self.cy) / self.fy * depth;
        let cam = Vec3::new(x, y, depth);
        self.rot.transpose().mul_vec(&cam.sub(&self.t))
    }

    /// Pixel coordinates lie inside the image rectangle.
    pub fn in_bounds(&self, pixel: crate::math::V2) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }

    /// Camera forward axis (+z of camera space) expressed in world
    /// coordinates.
    pub fn view_direction(&self) -> V3 {
        self.rot.row(2)
    }
}

/// Rescale the camera to a target horizontal field of view, scaling the
/// depth translation by the same factor so any point at depth `t_z` keeps
/// its pixel position. Returns the new camera, the new depth translation,
/// and the applied scale.
///
/// The new horizontal focal length is `(width/2) / tan(fov/2)`; the vertical
/// focal length follows with the same scale to preserve the aspect ratio,
/// and the principal point is kept fixed.
pub fn fov_correct(
    cam: &PinholeCamera,
    translation_z: f64,
    target_fov_deg: f64,
) -> Result<(PinholeCamera, f64, f64)> {
    let tz_ok = translation_z.is_finite() && translation_z > 0.0;
    if !tz_ok {
        return Err(Error::invalid_arg("depth translation must be positive"));
    }
    let fov_ok = target_fov_deg > 0.0 && target_fov_deg < 180.0;
    if !fov_ok {
        return Err(Error::invalid_arg("target fov must be in (0, 180) degrees"));
    }
    let half = target_fov_deg.to_radians() * 0.5;
    let fx_new = (cam.width as f64 * 0.5) / libm::tan(half);
    let s_x = fx_new / cam.fx;
    let mut out = *cam;
    out.fx = fx_new;
    out.fy = s_x * cam.fy;
    Ok((out, s_x * translation_z, s_x))
}

/// Maximum reprojection drift (pixels) introduced by [`fov_correct`] for
/// points within `rel_band` of the anchor depth, probed over a grid across
/// the image. Exactly zero on the anchor plane itself.
pub fn fov_reprojection_drift(
    before: &PinholeCamera,
    after: &PinholeCamera,
    tz_before: f64,
    tz_after: f64,
    rel_band: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for gy in 0..5 {
        for gx in 0..5 {
            let px = (gx as f64 + 0.5) / 5.0 * before.width as f64;
            let py = (gy as f64 + 0.5) / 5.0 * before.height as f64;
            for k in [-1.0, 0.0, 1.0] {
                let z0 = tz_before * (1.0 + k * rel_band);
                // Same physical point, re-anchored relative to each depth
                // translation: only the root depth is rescaled.
                let p0 = Vec3::new(
                    (px - before.cx) / before.fx * z0,
                    (py - before.cy) / before.fy * z0,
                    z0,
                );
                let z1 = z0 - tz_before + tz_after;
                let p1 = Vec3::new(p0.x, p0.y, z1);
                let a = Vec2::new(
                    before.fx * p0.x / p0.z + before.cx,
                    before.fy * p0.y / p0.z + before.cy,
                );
                let b = Vec2::new(
                    after.fx * p1.x / p1.z + after.cx,
                    after.fy * p1.y / p1.z + after.cy,
                );
                worst = worst.max(b.sub(&a).norm());
            }
        }
    }
    worst
}

/// World axis treated as vertical for framing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpAxis {
    X,
    Y,
    Z,
}

impl UpAxis {
    pub fn unit(&self) -> V3 {
        match self {
            UpAxis::X => Vec3::new(1.0, 0.0, 0.0),
            UpAxis::Y => Vec3::new(0.0, 1.0, 0.0),
            UpAxis::Z => Vec3::new(0.0, 0.0, 1.0),
        }
    }

    fn component(&self, v: &V3) -> f64 {
        match self {
            UpAxis::X => v.x,
            UpAxis::Y => v.y,
            UpAxis::Z => v.z,
        }
    }

    fn with_component(&self, v: &V3, c: f64) -> V3 {
        let mut out = *v;
        match self {
            UpAxis::X => out.x = c,
            UpAxis::Y => out.y = c,
            UpAxis::Z => out.z = c,
        }
        out
    }
}

/// Adaptive look-at target: horizontally the midpoint of the pelvis and head
/// joints, vertically 3/4 of the way up the posed vertex extent. The 0.75
/// fraction biases framing toward the upper body and is fixed by design.
pub fn compute_lookat(vertices: &[V3], pelvis: &V3, head: &V3, up: UpAxis) -> Result<V3> {
    if vertices.is_empty() {
        return Err(Error::invalid_arg("empty mesh"));
    }
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for v in vertices {
        let c = up.component(v);
        v_min = v_min.min(c);
        v_max = v_max.max(c);
    }
    let vertical = v_min + 0.75 * (v_max - v_min);
    let mid = pelvis.add(head).scale(&0.5);
    Ok(up.with_component(&mid, vertical))
}

/// Collect projections for a batch of points.
pub fn project_points(cam: &PinholeCamera, points: &[V3]) -> Vec<Projection<f64>> {
    points.iter().map(|p| cam.project(p)).collect()
}
