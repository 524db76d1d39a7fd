//! UV-anchored Gaussian avatars: attribute maps sampled into a canonical
//! Gaussian set, face-frame rigging to posed meshes, and a CPU splatting
//! renderer with exact front-to-back compositing.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::PinholeCamera;
use crate::geom::{SurfaceSample, TriMesh};
use crate::math::{Mat3, Quat, M3, V3, Vec3};
use crate::{Error, Result};

/// Per-texel Gaussian attributes in UV space. All maps share one resolution
/// and one coverage mask.
#[derive(Clone, Debug)]
pub struct GaussianAttributeMaps {
    pub height: usize,
    pub width: usize,
    pub color: Vec<[f64; 3]>,
    pub opacity: Vec<f64>,
    pub offset: Vec<[f64; 3]>,
    pub rotation: Vec<[f64; 4]>,
    pub scale: Vec<[f64; 3]>,
    pub covered: Vec<bool>,
}

/// Scale clamp applied when activating raw decoder-style outputs (meters).
pub const SCALE_MIN: f64 = 1e-6;
pub const SCALE_MAX: f64 = 0.1;
/// Offset range under the tanh activation (meters).
pub const OFFSET_RANGE: f64 = 0.05;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

impl GaussianAttributeMaps {
    fn len_checked(height: usize, width: usize, maps: &GaussianAttributeMaps) -> Result<()> {
        let n = height * width;
        if maps.color.len() != n
            || maps.opacity.len() != n
            || maps.offset.len() != n
            || maps.rotation.len() != n
            || maps.scale.len() != n
            || maps.covered.len() != n
        {
            return Err(Error::ShapeMismatch("attribute map sizes".into()));
        }
        Ok(())
    }

    /// Wrap already-activated values, validating the attribute invariants on
    /// covered texels.
    pub fn from_direct(maps: GaussianAttributeMaps) -> Result<GaussianAttributeMaps> {
        Self::len_checked(maps.height, maps.width, &maps)?;
        for t in 0..maps.covered.len() {
            if !maps.covered[t] {
                continue;
            }
            if maps.color[t].iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::invalid_arg("color outside [0,1]"));
            }
            if !(0.0..=1.0).contains(&maps.opacity[t]) {
                return Err(Error::invalid_arg("opacity outside [0,1]"));
            }
            if maps.scale[t].iter().any(|s| !s.is_finite() || *s <= 0.0) {
                return Err(Error::NonPositiveScale);
            }
            let q = maps.rotation[t];
            let n = libm::sqrt(q.iter().map(|v| v * v).sum());
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::invalid_arg("rotation quaternion not unit"));
            }
        }
        Ok(maps)
    }

    /// Activate raw (decoder-style) channels: sigmoid for color and opacity,
    /// clamped exp for scale, tanh-bounded offset, normalized quaternion.
    pub fn from_raw(mut maps: GaussianAttributeMaps) -> Result<GaussianAttributeMaps> {
        Self::len_checked(maps.height, maps.width, &maps)?;
        for t in 0..maps.covered.len() {
            for c in maps.color[t].iter_mut() {
                *c = sigmoid(*c);
            }
            maps.opacity[t] = sigmoid(maps.opacity[t]);
            for s in maps.scale[t].iter_mut() {
                *s = libm::exp(*s).clamp(SCALE_MIN, SCALE_MAX);
            }
            for d in maps.offset[t].iter_mut() {
                *d = libm::tanh(*d) * OFFSET_RANGE;
            }
            let q = Quat::new(
                maps.rotation[t][0],
                maps.rotation[t][1],
                maps.rotation[t][2],
                maps.rotation[t][3],
            )
            .normalized();
            maps.rotation[t] = [q.w, q.x, q.y, q.z];
        }
        Ok(maps)
    }

    /// Uniform maps over a full grid (test/fixture helper).
    pub fn constant(
        height: usize,
        width: usize,
        color: [f64; 3],
        opacity: f64,
        offset: [f64; 3],
        scale: [f64; 3],
    ) -> GaussianAttributeMaps {
        let n = height * width;
        GaussianAttributeMaps {
            height,
            width,
            color: vec![color; n],
            opacity: vec![opacity; n],
            offset: vec![offset; n],
            rotation: vec![[1.0, 0.0, 0.0, 0.0]; n],
            scale: vec![scale; n],
            covered: vec![true; n],
        }
    }
}

/// Set of anisotropic Gaussians anchored to surface samples. The covariance
/// of each Gaussian is `R diag(s^2) R^T`, positive definite by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSet {
    pub anchors: Vec<SurfaceSample>,
    pub positions: Vec<V3>,
    pub rotations: Vec<Quat>,
    pub scales: Vec<V3>,
    pub colors: Vec<[f64; 3]>,
    pub opacities: Vec<f64>,
}

impl GaussianSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn covariance(&self, i: usize) -> M3 {
        let r = self.rotations[i].to_mat3();
        let s = self.scales[i];
        let d = Mat3 {
            m: [
                [s.x * s.x, 0.0, 0.0],
                [0.0, s.y * s.y, 0.0],
                [0.0, 0.0, s.z * s.z],
            ],
        };
        r.mul_mat(&d).mul_mat(&r.transpose())
    }
}

/// Outcome of sampling attribute maps at anchor locations.
#[derive(Clone, Debug)]
pub struct MapsToGaussians {
    pub set: GaussianSet,
    /// Anchors whose UV had no covered texel within one texel.
    pub dropped: usize,
    /// Set when the maps had no coverage at all.
    pub empty_coverage: bool,
}

struct TexelLookup {
    color: [f64; 3],
    opacity: f64,
    offset: [f64; 3],
    rotation: [f64; 4],
    scale: [f64; 3],
}

/// Coverage-weighted bilinear lookup at a UV position; falls back to the
/// nearest covered texel within one texel of the owning texel, else `None`.
fn lookup(maps: &GaussianAttributeMaps, u: f64, v: f64) -> Option<TexelLookup> {
    let w = maps.width;
    let h = maps.height;
    let gx = u * w as f64 - 0.5;
    let gy = v * h as f64 - 0.5;
    let x0 = libm::floor(gx) as i64;
    let y0 = libm::floor(gy) as i64;
    let tx = (gx - x0 as f64).clamp(0.0, 1.0);
    let ty = (gy - y0 as f64).clamp(0.0, 1.0);
    let mut taps: Vec<(usize, f64)> = Vec::with_capacity(4);
    for (dx, dy, wt) in [
        (0i64, 0i64, (1.0 - tx) * (1.0 - ty)),
        (1, 0, tx * (1.0 - ty)),
        (0, 1, (1.0 - tx) * ty),
        (1, 1, tx * ty),
    ] {
        let x = x0 + dx;
        let y = y0 + dy;
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            continue;
        }
        let t = y as usize * w + x as usize;
        if maps.covered[t] && wt > 0.0 {
            taps.push((t, wt));
        }
    }
    if taps.is_empty() {
        // Nearest covered texel within a 1-texel chessboard ring of the
        // owning texel; ties resolved toward the smaller index.
        let own_x = (libm::floor(u * w as f64) as i64).clamp(0, w as i64 - 1);
        let own_y = (libm::floor(v * h as f64) as i64).clamp(0, h as i64 - 1);
        let mut best: Option<(f64, usize)> = None;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let x = own_x + dx;
                let y = own_y + dy;
                if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                    continue;
                }
                let t = y as usize * w + x as usize;
                if !maps.covered[t] {
                    continue;
                }
                let cx = x as f64 + 0.5;
                let cy = y as f64 + 0.5;
                let d2 = (cx - (gx + 0.5)) * (cx - (gx + 0.5)) + (cy - (gy + 0.5)) * (cy - (gy + 0.5));
                if best.is_none_or(|(bd, bt)| d2 < bd || (d2 == bd && t < bt)) {
                    best = Some((d2, t));
                }
            }
        }
        let (_, t) = best?;
        taps.push((t, 1.0));
    }
    let wsum: f64 = taps.iter().map(|(_, w)| w).sum();
    let mut out = TexelLookup {
        color: [0.0; 3],
        opacity: 0.0,
        offset: [0.0; 3],
        rotation: [0.0; 4],
        scale: [0.0; 3],
    };
    for (t, wt) in &taps {
        let k = wt / wsum;
        for c in 0..3 {
            out.color[c] += maps.color[*t][c] * k;
            out.offset[c] += maps.offset[*t][c] * k;
            out.scale[c] += maps.scale[*t][c] * k;
        }
        out.opacity += maps.opacity[*t] * k;
        for c in 0..4 {
            out.rotation[c] += maps.rotation[*t][c] * k;
        }
    }
    Some(out)
}

/// Instantiate canonical Gaussians at surface samples by reading the
/// attribute maps at each sample's UV. Positions are the anchor positions
/// plus the offset channel; blended quaternions are renormalized.
pub fn maps_to_gaussians(
    maps: &GaussianAttributeMaps,
    mesh: &TriMesh,
    samples: &[SurfaceSample],
) -> Result<MapsToGaussians> {
    let empty_coverage = !maps.covered.iter().any(|c| *c);
    let mut set = GaussianSet {
        anchors: Vec::new(),
        positions: Vec::new(),
        rotations: Vec::new(),
        scales: Vec::new(),
        colors: Vec::new(),
        opacities: Vec::new(),
    };
    let mut dropped = 0;
    if !empty_coverage {
        for s in samples {
            if s.face as usize >= mesh.faces().len() {
                return Err(Error::FaceOutOfRange(s.face as usize, mesh.faces().len()));
            }
            match lookup(maps, s.uv.x, s.uv.y) {
                None => dropped += 1,
                Some(t) => {
                    let q = Quat::new(t.rotation[0], t.rotation[1], t.rotation[2], t.rotation[3])
                        .normalized();
                    let mu = s.pos.add(&Vec3::new(t.offset[0], t.offset[1], t.offset[2]));
                    if !mu.is_finite() {
                        return Err(Error::invalid_arg("non-finite gaussian position"));
                    }
                    set.anchors.push(*s);
                    set.positions.push(mu);
                    set.rotations.push(q);
                    set.scales.push(Vec3::new(
                        t.scale[0].max(SCALE_MIN),
                        t.scale[1].max(SCALE_MIN),
                        t.scale[2].max(SCALE_MIN),
                    ));
                    set.colors.push(t.color);
                    set.opacities.push(t.opacity.clamp(0.0, 1.0));
                }
            }
        }
    } else {
        dropped = samples.len();
    }
    Ok(MapsToGaussians {
        set,
        dropped,
        empty_coverage,
    })
}

/// Orthonormal frame of a face: columns are (first edge, in-plane
/// perpendicular, normal). `None` for degenerate faces.
fn face_frame(mesh: &TriMesh, face: usize) -> Option<M3> {
    let [p0, p1, p2] = mesh.face_positions(face);
    let e1 = p1.sub(&p0);
    let l1 = e1.norm();
    if l1 < 1e-12 {
        return None;
    }
    let e1 = e1.scale(&(1.0 / l1));
    let n = e1.cross(&p2.sub(&p0));
    let ln = n.norm();
    if ln < 1e-12 {
        return None;
    }
    let n = n.scale(&(1.0 / ln));
    let e2 = n.cross(&e1);
    Some(Mat3::from_cols(e1, e2, n))
}

/// Result of rigging a canonical set to a posed mesh.
#[derive(Clone, Debug)]
pub struct RigToPose {
    pub set: GaussianSet,
    /// Anchors whose face frame was degenerate; those Gaussians were
    /// transported by translation only.
    pub degenerate_frames: usize,
}

/// Transport canonical Gaussians onto a posed mesh of identical topology.
/// Each anchor's face defines an orthonormal frame in both meshes; the
/// rigid rotation between the frames carries the offset and the Gaussian
/// orientation, and scales are unchanged.
pub fn rig_to_pose(
    gset: &GaussianSet,
    canonical: &TriMesh,
    posed: &TriMesh,
) -> Result<RigToPose> {
    if canonical.faces().len() != posed.faces().len()
        || canonical.vertices().len() != posed.vertices().len()
    {
        return Err(Error::ShapeMismatch("canonical vs posed topology".into()));
    }
    let mut out = gset.clone();
    let mut degenerate = 0;
    for i in 0..gset.len() {
        let anchor = gset.anchors[i];
        let face = anchor.face as usize;
        let a_can = anchor.position_on(canonical);
        let a_pos = anchor.position_on(posed);
        match (face_frame(canonical, face), face_frame(posed, face)) {
            (Some(fc), Some(fp)) => {
                let rot = fp.mul_mat(&fc.transpose());
                let local = gset.positions[i].sub(&a_can);
                out.positions[i] = a_pos.add(&rot.mul_vec(&local));
                out.rotations[i] = Quat::from_mat3(&rot).mul(&gset.rotations[i]).normalized();
            }
            _ => {
                degenerate += 1;
                let shift = a_pos.sub(&a_can);
                out.positions[i] = gset.positions[i].add(&shift);
            }
        }
        out.anchors[i].pos = a_pos;
    }
    Ok(RigToPose {
        set: out,
        degenerate_frames: degenerate,
    })
}

/// RGBA image with premultiplied-over compositing results in [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct RgbaImage {
    pub width: u32,
    pub height: u32,
    pixels: Vec<[f64; 4]>,
}

impl RgbaImage {
    pub fn filled(width: u32, height: u32, rgba: [f64; 4]) -> RgbaImage {
        RgbaImage {
            width,
            height,
            pixels: vec![rgba; (width * height) as usize],
        }
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> [f64; 4] {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn pixels(&self) -> &[[f64; 4]] {
        &self.pixels
    }
}

/// Numerical-stability floor added to projected 2D covariance diagonals
/// (pixels squared).
pub const COV_2D_FLOOR: f64 = 0.3;
/// Footprints are evaluated within 3 standard deviations (squared
/// Mahalanobis distance 9); outside they contribute exactly zero.
pub const MAHALANOBIS_CUTOFF: f64 = 9.0;

/// Render the Gaussian set: project each Gaussian's mean and covariance
/// (`S' = J W S W^T J^T` with the projection Jacobian `J` and camera
/// rotation `W`), then composite front-to-back in depth order:
/// `C = sum_i c_i a_i G_i prod_{j<i} (1 - a_j G_j)`, finishing on the
/// background. The alpha channel holds the accumulated coverage.
pub fn splat_render(
    gset: &GaussianSet,
    cam: &PinholeCamera,
    background: [f64; 3],
) -> RgbaImage {
    let w = cam.width;
    let h = cam.height;
    let mut color = vec![[0.0f64; 3]; (w * h) as usize];
    let mut transmittance = vec![1.0f64; (w * h) as usize];

    // Project and depth-sort (stable ascending z, index tiebreak).
    struct Splat {
        mean: [f64; 2],
        z: f64,
        inv_cov: [f64; 3], // symmetric 2x2: a, b, c for [[a, b], [b, c]]
        ext: [f64; 2],
        color: [f64; 3],
        alpha: f64,
    }
    let mut splats: Vec<(usize, Splat)> = Vec::new();
    for i in 0..gset.len() {
        let mu_cam = cam.world_to_cam(&gset.positions[i]);
        if mu_cam.z <= crate::camera::BEHIND_EPS {
            continue;
        }
        let z = mu_cam.z;
        let px = cam.fx * mu_cam.x / z + cam.cx;
        let py = cam.fy * mu_cam.y / z + cam.cy;
        let cov_cam = cam
            .rot
            .mul_mat(&gset.covariance(i))
            .mul_mat(&cam.rot.transpose());
        // 2x3 Jacobian of (px, py) w.r.t. camera-space point at the mean.
        let j = [
            [cam.fx / z, 0.0, -cam.fx * mu_cam.x / (z * z)],
            [0.0, cam.fy / z, -cam.fy * mu_cam.y / (z * z)],
        ];
        let mut cov2 = [[0.0f64; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                let mut acc = 0.0;
                for k in 0..3 {
                    for l in 0..3 {
                        acc += j[r][k] * cov_cam.m[k][l] * j[c][l];
                    }
                }
                cov2[r][c] = acc;
            }
        }
        cov2[0][0] += COV_2D_FLOOR;
        cov2[1][1] += COV_2D_FLOOR;
        let det = cov2[0][0] * cov2[1][1] - cov2[0][1] * cov2[1][0];
        if det <= 0.0 {
            continue;
        }
        let inv = [cov2[1][1] / det, -cov2[0][1] / det, cov2[0][0] / det];
        let ext = [
            3.0 * libm::sqrt(cov2[0][0]),
            3.0 * libm::sqrt(cov2[1][1]),
        ];
        splats.push((
            i,
            Splat {
                mean: [px, py],
                z,
                inv_cov: inv,
                ext,
                color: gset.colors[i],
                alpha: gset.opacities[i],
            },
        ));
    }
    splats.sort_by(|a, b| a.1.z.partial_cmp(&b.1.z).unwrap().then(a.0.cmp(&b.0)));

    for (_, s) in &splats {
        let x0 = ((s.mean[0] - s.ext[0]) as i64).max(0);
        let x1 = (libm::ceil(s.mean[0] + s.ext[0]) as i64).min(w as i64);
        let y0 = ((s.mean[1] - s.ext[1]) as i64).max(0);
        let y1 = (libm::ceil(s.mean[1] + s.ext[1]) as i64).min(h as i64);
        for y in y0..y1 {
            for x in x0..x1 {
                let idx = (y as u32 * w + x as u32) as usize;
                let t = transmittance[idx];
                if t < 1e-12 {
                    continue;
                }
                let dx = x as f64 + 0.5 - s.mean[0];
                let dy = y as f64 + 0.5 - s.mean[1];
                let m = s.inv_cov[0] * dx * dx + 2.0 * s.inv_cov[1] * dx * dy + s.inv_cov[2] * dy * dy;
                if m > MAHALANOBIS_CUTOFF {
                    continue;
                }
                let g = libm::exp(-0.5 * m);
                let a = s.alpha * g;
                if a <= 0.0 {
                    continue;
                }
                for (ch, col) in color[idx].iter_mut().enumerate() {
                    *col += t * a * s.color[ch];
                }
                transmittance[idx] = t * (1.0 - a);
            }
        }
    }

    let mut out = RgbaImage::filled(w, h, [0.0; 4]);
    for idx in 0..(w * h) as usize {
        let t = transmittance[idx];
        out.pixels[idx] = [
            color[idx][0] + t * background[0],
            color[idx][1] + t * background[1],
            color[idx][2] + t * background[2],
            1.0 - t,
        ];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes::{icosphere, quad_plane};
    use crate::geom::{make_sample, sample_surface_uniform};
    use crate::math::Vec2;
    use crate::skin::{lbs_pose, tube_body, Pose};

    fn empty_set() -> GaussianSet {
        GaussianSet {
            anchors: Vec::new(),
            positions: Vec::new(),
            rotations: Vec::new(),
            scales: Vec::new(),
            colors: Vec::new(),
            opacities: Vec::new(),
        }
    }

    fn plane_with_samples(n: usize) -> (TriMesh, Vec<SurfaceSample>) {
        let mesh = quad_plane(1.0);
        let samples = sample_surface_uniform(&mesh, n, 4).unwrap().samples;
        (mesh, samples)
    }

    #[test]
    fn zero_offset_keeps_gaussians_on_surface() {
        let (mesh, samples) = plane_with_samples(64);
        let maps = GaussianAttributeMaps::constant(
            16,
            16,
            [0.2, 0.4, 0.6],
            0.9,
            [0.0; 3],
            [0.01, 0.01, 0.01],
        );
        let out = maps_to_gaussians(&maps, &mesh, &samples).unwrap();
        assert_eq!(out.dropped, 0);
        for (g, s) in out.set.positions.iter().zip(&samples) {
            assert!(g.sub(&s.pos).norm() < 1e-12);
        }
        for c in &out.set.colors {
            for (got, want) in c.iter().zip([0.2, 0.4, 0.6]) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normal_offset_map_displaces_by_offset_length() {
        // The plane's normal is +z everywhere, so a constant z offset map
        // displaces every gaussian exactly 0.01 off the surface.
        let (mesh, samples) = plane_with_samples(64);
        let maps = GaussianAttributeMaps::constant(
            16,
            16,
            [0.5; 3],
            0.8,
            [0.0, 0.0, 0.01],
            [0.01; 3],
        );
        let out = maps_to_gaussians(&maps, &mesh, &samples).unwrap();
        for g in &out.set.positions {
            assert!((g.z - 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_coverage_reports_warning() {
        let (mesh, samples) = plane_with_samples(8);
        let mut maps =
            GaussianAttributeMaps::constant(8, 8, [0.5; 3], 0.8, [0.0; 3], [0.01; 3]);
        maps.covered = vec![false; 64];
        let out = maps_to_gaussians(&maps, &mesh, &samples).unwrap();
        assert!(out.empty_coverage);
        assert!(out.set.is_empty());
        assert_eq!(out.dropped, 8);
    }

    #[test]
    fn raw_activation_ranges() {
        let n = 4;
        let raw = GaussianAttributeMaps {
            height: 2,
            width: 2,
            color: vec![[-3.0, 0.0, 3.0]; n],
            opacity: vec![10.0; n],
            offset: vec![[5.0, -5.0, 0.0]; n],
            rotation: vec![[2.0, 0.0, 0.0, 0.0]; n],
            scale: vec![[0.0, -20.0, 20.0]; n],
            covered: vec![true; n],
        };
        let maps = GaussianAttributeMaps::from_raw(raw).unwrap();
        let c = maps.color[0];
        assert!(c[0] < 0.05 && (c[1] - 0.5).abs() < 1e-12 && c[2] > 0.95);
        assert!(maps.opacity[0] > 0.999 && maps.opacity[0] <= 1.0);
        assert!((maps.offset[0][0] - OFFSET_RANGE * libm::tanh(5.0)).abs() < 1e-12);
        assert_eq!(maps.scale[0][0], 1.0f64.clamp(SCALE_MIN, SCALE_MAX));
        assert_eq!(maps.scale[0][1], SCALE_MIN);
        assert_eq!(maps.scale[0][2], SCALE_MAX);
        assert_eq!(maps.rotation[0], [1.0, 0.0, 0.0, 0.0]);
        // And the activated maps validate as direct input.
        GaussianAttributeMaps::from_direct(maps).unwrap();
    }

    #[test]
    fn rig_identity_is_bit_exact() {
        let (mesh, samples) = plane_with_samples(32);
        let maps =
            GaussianAttributeMaps::constant(8, 8, [0.5; 3], 0.8, [0.0, 0.0, 0.02], [0.01; 3]);
        let set = maps_to_gaussians(&maps, &mesh, &samples).unwrap().set;
        let rigged = rig_to_pose(&set, &mesh, &mesh).unwrap();
        assert_eq!(rigged.degenerate_frames, 0);
        assert_eq!(rigged.set.positions, set.positions);
    }

    #[test]
    fn rig_rigid_rotation_conjugates() {
        let mesh = icosphere(0.5, 2);
        let samples = sample_surface_uniform(&mesh, 200, 9).unwrap().samples;
        let maps =
            GaussianAttributeMaps::constant(32, 32, [0.5; 3], 0.8, [0.01, 0.0, 0.0], [0.01; 3]);
        let set = maps_to_gaussians(&maps, &mesh, &samples).unwrap().set;

        let r = Mat3::from_axis_angle(&Vec3::new(0.3, -0.7, 0.2));
        let rotated: Vec<V3> = mesh.vertices().iter().map(|v| r.mul_vec(v)).collect();
        let posed = mesh.with_vertices(rotated).unwrap();
        let rigged = rig_to_pose(&set, &mesh, &posed).unwrap();
        assert_eq!(rigged.degenerate_frames, 0);
        for i in 0..set.len() {
            let want = r.mul_vec(&set.positions[i]);
            assert!(rigged.set.positions[i].sub(&want).norm() < 1e-9, "gaussian {i}");
            // Covariance conjugated by R.
            let want_cov = r.mul_mat(&set.covariance(i)).mul_mat(&r.transpose());
            let got_cov = rigged.set.covariance(i);
            for a in 0..3 {
                for b in 0..3 {
                    assert!((want_cov.m[a][b] - got_cov.m[a][b]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rig_follows_articulated_segment() {
        let body = tube_body();
        let mesh = body.rest_mesh().clone();
        // Anchor gaussians to faces fully bound to the left elbow joint (7).
        let rigid_faces: Vec<usize> = (0..mesh.faces().len())
            .filter(|f| {
                mesh.faces()[*f].iter().all(|c| {
                    let ws = &body.skin_weights()[c.vertex as usize];
                    ws.len() == 1 && ws[0] == (7, 1.0)
                })
            })
            .collect();
        assert!(!rigid_faces.is_empty());
        let samples: Vec<SurfaceSample> = rigid_faces
            .iter()
            .map(|f| make_sample(&mesh, *f, [0.4, 0.3, 0.3]).unwrap())
            .collect();
        let maps =
            GaussianAttributeMaps::constant(16, 16, [0.5; 3], 0.8, [0.0; 3], [0.01; 3]);
        let set = maps_to_gaussians(&maps, &mesh, &samples).unwrap().set;

        let mut pose = Pose::<f64>::rest(&body);
        pose.joint_rots[7] = Vec3::new(0.5, 0.2, -0.3);
        let (posed_mesh, _) = lbs_pose(&body, &pose).unwrap();
        let rigged = rig_to_pose(&set, &mesh, &posed_mesh).unwrap();

        // Oracle: the segment moves rigidly with the elbow joint's world
        // transform (rotation about its rest position).
        let r = Mat3::from_axis_angle(&pose.joint_rots[7]);
        let pivot = body.joints()[7].rest;
        for i in 0..set.len() {
            let want = r.mul_vec(&set.positions[i].sub(&pivot)).add(&pivot);
            assert!(
                rigged.set.positions[i].sub(&want).norm() < 1e-6,
                "gaussian {i}: {:?} vs {:?}",
                rigged.set.positions[i],
                want
            );
        }
    }

    #[test]
    fn render_empty_set_gives_background() {
        let cam = PinholeCamera::looking_forward(40.0, 40.0, 16.0, 16.0, 32, 32);
        let img = splat_render(&empty_set(), &cam, [0.1, 0.2, 0.3]);
        for y in 0..32 {
            for x in 0..32 {
                assert_eq!(img.at(x, y), [0.1, 0.2, 0.3, 0.0]);
            }
        }
    }

    #[test]
    fn single_gaussian_peaks_at_principal_point() {
        // Principal point on the pixel-center lattice so the peak response
        // is exactly alpha.
        let cam = PinholeCamera::looking_forward(60.0, 60.0, 16.5, 16.5, 32, 32);
        let mesh = quad_plane(1.0);
        let s = make_sample(&mesh, 0, [0.5, 0.25, 0.25]).unwrap();
        let set = GaussianSet {
            anchors: vec![s],
            positions: vec![Vec3::new(0.0, 0.0, 2.0)],
            rotations: vec![Quat::IDENTITY],
            scales: vec![Vec3::new(0.05, 0.05, 0.05)],
            colors: vec![[1.0, 0.5, 0.25]],
            opacities: vec![0.7],
        };
        let img = splat_render(&set, &cam, [0.0; 3]);
        let mut best = (0u32, 0u32, -1.0);
        for y in 0..32 {
            for x in 0..32 {
                let a = img.at(x, y)[3];
                if a > best.2 {
                    best = (x, y, a);
                }
            }
        }
        let (bx, by, alpha) = best;
        assert!((bx as f64 + 0.5 - 16.5).abs() <= 0.5);
        assert!((by as f64 + 0.5 - 16.5).abs() <= 0.5);
        assert!((alpha - 0.7).abs() < 1e-12, "peak alpha {alpha}");
    }

    /// Brute-force compositor: per pixel, test every gaussian in global
    /// depth order with the same footprint definition.
    fn brute_force_render(
        gset: &GaussianSet,
        cam: &PinholeCamera,
        background: [f64; 3],
    ) -> RgbaImage {
        struct P {
            mean: [f64; 2],
            z: f64,
            inv: [f64; 3],
            color: [f64; 3],
            alpha: f64,
        }
        let mut ps: Vec<(usize, P)> = Vec::new();
        for i in 0..gset.len() {
            let c = cam.world_to_cam(&gset.positions[i]);
            if c.z <= crate::camera::BEHIND_EPS {
                continue;
            }
            let px = cam.fx * c.x / c.z + cam.cx;
            let py = cam.fy * c.y / c.z + cam.cy;
            let cov_cam = cam
                .rot
                .mul_mat(&gset.covariance(i))
                .mul_mat(&cam.rot.transpose());
            let j = [
                [cam.fx / c.z, 0.0, -cam.fx * c.x / (c.z * c.z)],
                [0.0, cam.fy / c.z, -cam.fy * c.y / (c.z * c.z)],
            ];
            let mut cov2 = [[0.0f64; 2]; 2];
            for r in 0..2 {
                for cc in 0..2 {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        for l in 0..3 {
                            acc += j[r][k] * cov_cam.m[k][l] * j[cc][l];
                        }
                    }
                    cov2[r][cc] = acc;
                }
            }
            cov2[0][0] += COV_2D_FLOOR;
            cov2[1][1] += COV_2D_FLOOR;
            let det = cov2[0][0] * cov2[1][1] - cov2[0][1] * cov2[1][0];
            ps.push((
                i,
                P {
                    mean: [px, py],
                    z: c.z,
                    inv: [cov2[1][1] / det, -cov2[0][1] / det, cov2[0][0] / det],
                    color: gset.colors[i],
                    alpha: gset.opacities[i],
                },
            ));
        }
        ps.sort_by(|a, b| a.1.z.partial_cmp(&b.1.z).unwrap().then(a.0.cmp(&b.0)));
        let mut out = RgbaImage::filled(cam.width, cam.height, [0.0; 4]);
        for y in 0..cam.height {
            for x in 0..cam.width {
                let mut t = 1.0;
                let mut col = [0.0f64; 3];
                for (_, p) in &ps {
                    let dx = x as f64 + 0.5 - p.mean[0];
                    let dy = y as f64 + 0.5 - p.mean[1];
                    let m = p.inv[0] * dx * dx + 2.0 * p.inv[1] * dx * dy + p.inv[2] * dy * dy;
                    if m > MAHALANOBIS_CUTOFF {
                        continue;
                    }
                    let a = p.alpha * libm::exp(-0.5 * m);
                    for c in 0..3 {
                        col[c] += t * a * p.color[c];
                    }
                    t *= 1.0 - a;
                }
                out.pixels[(y * cam.width + x) as usize] = [
                    col[0] + t * background[0],
                    col[1] + t * background[1],
                    col[2] + t * background[2],
                    1.0 - t,
                ];
            }
        }
        out
    }

    fn eight_gaussian_scene() -> (GaussianSet, PinholeCamera) {
        let mesh = quad_plane(1.0);
        let anchor = make_sample(&mesh, 0, [0.5, 0.25, 0.25]).unwrap();
        let mut set = empty_set();
        let mut push = |pos: V3, rot: Quat, scale: V3, color: [f64; 3], a: f64| {
            set.anchors.push(anchor);
            set.positions.push(pos);
            set.rotations.push(rot.normalized());
            set.scales.push(scale);
            set.colors.push(color);
            set.opacities.push(a);
        };
        push(Vec3::new(0.0, 0.0, 2.0), Quat::IDENTITY, Vec3::new(0.08, 0.03, 0.05), [1.0, 0.0, 0.0], 0.8);
        push(Vec3::new(0.05, 0.02, 2.2), Quat::new(0.9, 0.1, 0.3, -0.2), Vec3::new(0.03, 0.09, 0.04), [0.0, 1.0, 0.0], 0.5);
        push(Vec3::new(-0.06, -0.04, 1.8), Quat::new(0.7, -0.5, 0.1, 0.2), Vec3::new(0.05, 0.05, 0.02), [0.0, 0.0, 1.0], 0.9);
        push(Vec3::new(0.0, 0.08, 2.1), Quat::new(0.2, 0.8, 0.4, 0.1), Vec3::new(0.02, 0.02, 0.1), [1.0, 1.0, 0.0], 0.3);
        push(Vec3::new(-0.03, 0.05, 1.9), Quat::IDENTITY, Vec3::new(0.06, 0.01, 0.03), [0.0, 1.0, 1.0], 0.6);
        push(Vec3::new(0.07, -0.06, 2.05), Quat::new(0.5, 0.5, 0.5, 0.5), Vec3::new(0.04, 0.04, 0.04), [1.0, 0.0, 1.0], 0.4);
        push(Vec3::new(0.0, 0.0, 2.0), Quat::IDENTITY, Vec3::new(0.01, 0.01, 0.01), [0.5, 0.5, 0.5], 1.0);
        push(Vec3::new(0.02, -0.02, 1.7), Quat::new(0.9, 0.0, -0.4, 0.1), Vec3::new(0.07, 0.02, 0.02), [0.25, 0.75, 0.5], 0.7);
        let cam = PinholeCamera::looking_forward(60.0, 55.0, 16.0, 16.0, 32, 32);
        (set, cam)
    }

    #[test]
    fn matches_brute_force_compositor() {
        let (set, cam) = eight_gaussian_scene();
        let bg = [0.1, 0.0, 0.2];
        let fast = splat_render(&set, &cam, bg);
        let slow = brute_force_render(&set, &cam, bg);
        for y in 0..32 {
            for x in 0..32 {
                let a = fast.at(x, y);
                let b = slow.at(x, y);
                for c in 0..4 {
                    assert!(
                        (a[c] - b[c]).abs() <= 1e-6,
                        "pixel ({x},{y}) channel {c}: {} vs {}",
                        a[c],
                        b[c]
                    );
                }
            }
        }
    }

    #[test]
    fn opacity_scaling_is_monotone_in_alpha() {
        let (set, cam) = eight_gaussian_scene();
        let base = splat_render(&set, &cam, [0.0; 3]);
        for lambda in [0.2, 0.5, 0.9] {
            let mut scaled = set.clone();
            for a in scaled.opacities.iter_mut() {
                *a *= lambda;
            }
            let img = splat_render(&scaled, &cam, [0.0; 3]);
            for y in 0..32 {
                for x in 0..32 {
                    assert!(img.at(x, y)[3] <= base.at(x, y)[3] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn projected_covariances_have_positive_determinant() {
        let (set, cam) = eight_gaussian_scene();
        for i in 0..set.len() {
            let c = cam.world_to_cam(&set.positions[i]);
            let cov_cam = cam
                .rot
                .mul_mat(&set.covariance(i))
                .mul_mat(&cam.rot.transpose());
            let j = [
                [cam.fx / c.z, 0.0, -cam.fx * c.x / (c.z * c.z)],
                [0.0, cam.fy / c.z, -cam.fy * c.y / (c.z * c.z)],
            ];
            let mut cov2 = [[0.0f64; 2]; 2];
            for r in 0..2 {
                for cc in 0..2 {
                    for k in 0..3 {
                        for l in 0..3 {
                            cov2[r][cc] += j[r][k] * cov_cam.m[k][l] * j[cc][l];
                        }
                    }
                }
            }
            cov2[0][0] += COV_2D_FLOOR;
            cov2[1][1] += COV_2D_FLOOR;
            let det = cov2[0][0] * cov2[1][1] - cov2[0][1] * cov2[1][0];
            assert!(det > 0.0);
        }
    }

    #[test]
    fn rigid_equivariance_of_rig_and_render() {
        let mesh = icosphere(0.4, 2);
        let samples = sample_surface_uniform(&mesh, 150, 12).unwrap().samples;
        let maps = GaussianAttributeMaps::constant(
            16,
            16,
            [0.8, 0.4, 0.2],
            0.6,
            [0.005, 0.0, 0.0],
            [0.02, 0.01, 0.015],
        );
        let set = maps_to_gaussians(&maps, &mesh, &samples).unwrap().set;
        let cam = PinholeCamera::new(
            100.0,
            100.0,
            32.0,
            32.0,
            64,
            64,
            Mat3::identity(),
            Vec3::new(0.0, 0.0, 2.0),
        )
        .unwrap();
        let base = splat_render(&set, &cam, [0.0; 3]);

        let r = Mat3::from_axis_angle(&Vec3::new(0.2, 0.5, -0.1));
        let rotated: Vec<V3> = mesh.vertices().iter().map(|v| r.mul_vec(v)).collect();
        let posed = mesh.with_vertices(rotated).unwrap();
        let rigged = rig_to_pose(&set, &mesh, &posed).unwrap().set;
        let cam2 = PinholeCamera::new(
            100.0,
            100.0,
            32.0,
            32.0,
            64,
            64,
            cam.rot.mul_mat(&r.transpose()),
            cam.t,
        )
        .unwrap();
        let turned = splat_render(&rigged, &cam2, [0.0; 3]);

        let mut total = 0.0;
        for y in 0..64 {
            for x in 0..64 {
                for c in 0..4 {
                    total += (base.at(x, y)[c] - turned.at(x, y)[c]).abs();
                }
            }
        }
        let mean_abs = total / (64.0 * 64.0 * 4.0);
        assert!(mean_abs < 1e-4, "mean abs diff {mean_abs}");
    }

    #[test]
    fn sample_anchor_helper_used() {
        // keep Vec2 import alive for anchor uv checks
        let mesh = quad_plane(1.0);
        let s = make_sample(&mesh, 0, [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.uv, Vec2::new(0.0, 0.0));
    }
}
