//! Software triangle rasterization, point visibility, shell-only masks, and
//! the exact Euclidean distance transform.
//!
//! Conventions: pixel `(x, y)` samples at `(x + 0.5, y + 0.5)`; shared edges
//! are tie-broken with a top-left rule; triangles are culled when their
//! projected signed area faces away (outward counter-clockwise winding seen
//! head-on appears clockwise in y-down pixel coordinates), and triangles
//! with any corner behind the camera are clipped out entirely. Coverage is
//! binary; there is no anti-aliasing anywhere.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::PinholeCamera;
use crate::geom::{ShellMesh, SurfaceSample, TriMesh};
use crate::math::{Real, V2};
use crate::{Error, Result};

/// Binary image (row-major, `y * width + x`).
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryImage {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: u32, height: u32) -> BinaryImage {
        BinaryImage {
            width,
            height,
            bits: vec![false; (width * height) as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<BinaryImage> {
        if bits.len() != (width * height) as usize {
            return Err(Error::ShapeMismatch("binary image size".into()));
        }
        Ok(BinaryImage { width, height, bits })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[(y * self.width + x) as usize] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// Per-sample visibility bits, aligned with a sample list.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityMask(pub Vec<bool>);

impl VisibilityMask {
    pub fn visible_count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }
}

/// Nearest-depth buffer; empty pixels hold `f64::INFINITY`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthBuffer {
    pub width: u32,
    pub height: u32,
    depth: Vec<f64>,
}

impl DepthBuffer {
    fn new(width: u32, height: u32) -> DepthBuffer {
        DepthBuffer {
            width,
            height,
            depth: vec![f64::INFINITY; (width * height) as usize],
        }
    }

    #[inline]
    pub fn depth_at(&self, x: u32, y: u32) -> f64 {
        self.depth[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn covered(&self, x: u32, y: u32) -> bool {
        self.depth_at(x, y).is_finite()
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth
    }

    pub fn coverage(&self) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            bits: self.depth.iter().map(|d| d.is_finite()).collect(),
        }
    }

    pub fn coverage_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }
}

/// Depth buffer plus per-pixel face id and perspective-correct barycentrics.
#[derive(Clone, Debug)]
pub struct GBuffer {
    pub depth: DepthBuffer,
    face: Vec<u32>,
    bary: Vec<[f64; 3]>,
}

pub const NO_FACE: u32 = u32::MAX;

impl GBuffer {
    #[inline]
    pub fn face_at(&self, x: u32, y: u32) -> Option<u32> {
        let f = self.face[(y * self.depth.width + x) as usize];
        (f != NO_FACE).then_some(f)
    }

    #[inline]
    pub fn bary_at(&self, x: u32, y: u32) -> [f64; 3] {
        self.bary[(y * self.depth.width + x) as usize]
    }
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Top-left fill rule for an edge `a -> b` of a triangle with positive
/// screen-space orientation: zero edge values count as inside only on top
/// (horizontal, running +x) and left (running -y) edges.
#[inline]
pub(crate) fn top_left(ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let dx = bx - ax;
    let dy = by - ay;
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Rasterize with back-face culling and z-buffering, keeping face ids and
/// perspective-correct barycentrics per covered pixel.
pub fn rasterize_gbuffer(mesh: &TriMesh, cam: &PinholeCamera) -> GBuffer {
    let (w, h) = (cam.width, cam.height);
    let mut face_buf = vec![NO_FACE; (w * h) as usize];
    let mut bary_buf = vec![[0.0; 3]; (w * h) as usize];
    let depth = raster_impl(mesh, cam, Some((&mut face_buf, &mut bary_buf)));
    GBuffer {
        depth,
        face: face_buf,
        bary: bary_buf,
    }
}

/// Depth-only rasterization (no face/barycentric buffers).
pub fn rasterize(mesh: &TriMesh, cam: &PinholeCamera) -> DepthBuffer {
    raster_impl(mesh, cam, None)
}

fn raster_impl(
    mesh: &TriMesh,
    cam: &PinholeCamera,
    mut aux: Option<(&mut [u32], &mut [[f64; 3]])>,
) -> DepthBuffer {
    let (w, h) = (cam.width, cam.height);
    let mut depth = DepthBuffer::new(w, h);

    for (fid, _) in mesh.faces().iter().enumerate() {
        let ps = mesh.face_positions(fid);
        let projs = [cam.project(&ps[0]), cam.project(&ps[1]), cam.project(&ps[2])];
        if projs.iter().any(|p| p.behind) {
            continue;
        }
        let pix = [projs[0].pixel, projs[1].pixel, projs[2].pixel];
        let area2 = edge(pix[0].x, pix[0].y, pix[1].x, pix[1].y, pix[2].x, pix[2].y);
        // Outward-wound faces looking at the camera have negative projected
        // area in y-down pixel coordinates; cull the rest (including
        // degenerate zero-area projections).
        if area2 >= -1e-12 {
            continue;
        }
        // Reorder to positive orientation; remember the corner permutation.
        let order = [0usize, 2, 1];
        let q = [pix[order[0]], pix[order[1]], pix[order[2]]];
        let z = [
            projs[order[0]].depth,
            projs[order[1]].depth,
            projs[order[2]].depth,
        ];
        let area2 = -area2;

        let min_x = q[0].x.min(q[1].x).min(q[2].x).max(0.0);
        let max_x = q[0].x.max(q[1].x).max(q[2].x).min(w as f64);
        let min_y = q[0].y.min(q[1].y).min(q[2].y).max(0.0);
        let max_y = q[0].y.max(q[1].y).max(q[2].y).min(h as f64);
        if min_x >= max_x || min_y >= max_y {
            continue;
        }
        let x0 = min_x as u32;
        let x1 = (libm::ceil(max_x) as u32).min(w);
        let y0 = min_y as u32;
        let y1 = (libm::ceil(max_y) as u32).min(h);

        let accept0 = top_left(q[1].x, q[1].y, q[2].x, q[2].y);
        let accept1 = top_left(q[2].x, q[2].y, q[0].x, q[0].y);
        let accept2 = top_left(q[0].x, q[0].y, q[1].x, q[1].y);

        // Edge values at shared edges are not exactly mirrored in floating
        // point; anything inside this band is treated as lying exactly on
        // the edge and tie-broken by the top-left rule, which keeps shared
        // edges watertight with single coverage.
        const EDGE_EPS: f64 = 1e-8;

        for y in y0..y1 {
            let py = y as f64 + 0.5;
            for x in x0..x1 {
                let px = x as f64 + 0.5;
                let e0 = edge(q[1].x, q[1].y, q[2].x, q[2].y, px, py);
                let e1 = edge(q[2].x, q[2].y, q[0].x, q[0].y, px, py);
                let e2 = edge(q[0].x, q[0].y, q[1].x, q[1].y, px, py);
                let inside = (e0 > EDGE_EPS || (e0.abs() <= EDGE_EPS && accept0))
                    && (e1 > EDGE_EPS || (e1.abs() <= EDGE_EPS && accept1))
                    && (e2 > EDGE_EPS || (e2.abs() <= EDGE_EPS && accept2));
                if !inside {
                    continue;
                }
                let bs = [e0 / area2, e1 / area2, e2 / area2];
                // 1/z interpolates linearly in screen space.
                let inv_z = bs[0] / z[0] + bs[1] / z[1] + bs[2] / z[2];
                let zp = 1.0 / inv_z;
                let idx = (y * w + x) as usize;
                if zp < depth.depth[idx] {
                    depth.depth[idx] = zp;
                    if let Some((face_buf, bary_buf)) = aux.as_mut() {
                        face_buf[idx] = fid as u32;
                        // Perspective-correct barycentrics, in original
                        // corner order.
                        let bp = [bs[0] / z[0] * zp, bs[1] / z[1] * zp, bs[2] / z[2] * zp];
                        let mut b = [0.0; 3];
                        b[order[0]] = bp[0];
                        b[order[1]] = bp[1];
                        b[order[2]] = bp[2];
                        bary_buf[idx] = b;
                    }
                }
            }
        }
    }

    depth
}

/// Binary silhouette: the coverage channel of the depth buffer.
pub fn silhouette(mesh: &TriMesh, cam: &PinholeCamera) -> BinaryImage {
    rasterize(mesh, cam).coverage()
}

/// Default relative depth bias for visibility tests.
pub const DEFAULT_EPS_REL: f64 = 1e-3;

/// Visibility of surface samples against a depth buffer rendered from the
/// same mesh and camera: visible iff the projection lands inside the image,
/// in front of the camera, and within `(1 + eps_rel)` of the stored depth.
pub fn point_visibility(
    samples: &[SurfaceSample],
    db: &DepthBuffer,
    cam: &PinholeCamera,
    eps_rel: f64,
) -> VisibilityMask {
    VisibilityMask(
        samples
            .iter()
            .map(|s| point_visible(&s.pos, db, cam, eps_rel))
            .collect(),
    )
}

fn point_visible(pos: &crate::math::V3, db: &DepthBuffer, cam: &PinholeCamera, eps_rel: f64) -> bool {
    let p = cam.project(pos);
    if p.behind || !cam.in_bounds(p.pixel) {
        return false;
    }
    match reference_depth(db, p.pixel.x, p.pixel.y) {
        Some(d) => p.depth <= d * (1.0 + eps_rel),
        None => false,
    }
}

/// Reference depth for a subpixel query: the deepest covered tap of the 2x2
/// bilinear footprint around the point. Depth varies steeply across a pixel
/// at grazing incidence, so comparing against the most distant nearby front
/// depth keeps genuinely visible samples visible; occluders still test
/// nearer by far more than one pixel's depth slope.
fn reference_depth(db: &DepthBuffer, px: f64, py: f64) -> Option<f64> {
    let w = db.width as i64;
    let h = db.height as i64;
    let x0 = libm::floor(px - 0.5) as i64;
    let y0 = libm::floor(py - 0.5) as i64;
    let mut best: Option<f64> = None;
    for (dx, dy) in [(0i64, 0i64), (1, 0), (0, 1), (1, 1)] {
        let x = x0 + dx;
        let y = y0 + dy;
        if x < 0 || y < 0 || x >= w || y >= h {
            continue;
        }
        let d = db.depth_at(x as u32, y as u32);
        if d.is_finite() {
            best = Some(best.map_or(d, |b| b.max(d)));
        }
    }
    best
}

/// Pixel-level shell-only mask plus the buffers needed to gate shell samples.
#[derive(Clone, Debug)]
pub struct ShellMaskResult {
    /// `coverage(shell) AND NOT coverage(base)`.
    pub pixel_mask: BinaryImage,
    pub shell_depth: DepthBuffer,
    pub base_depth: DepthBuffer,
}

/// Shell-only mask: pixels covered by the offset shell but not by the base
/// mesh projection.
pub fn shell_mask(mesh: &TriMesh, shell: &ShellMesh, cam: &PinholeCamera) -> ShellMaskResult {
    let base_depth = rasterize(mesh, cam);
    let shell_depth = rasterize(shell.mesh(), cam);
    let mut pixel_mask = BinaryImage::new(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            pixel_mask.set(x, y, shell_depth.covered(x, y) && !base_depth.covered(x, y));
        }
    }
    ShellMaskResult {
        pixel_mask,
        shell_depth,
        base_depth,
    }
}

/// Gate shell samples: a sample passes when it is visible on the shell
/// surface and its pixel lies in the shell-only region.
pub fn shell_sample_mask(
    res: &ShellMaskResult,
    cam: &PinholeCamera,
    shell_positions: &[crate::math::V3],
    eps_rel: f64,
) -> VisibilityMask {
    VisibilityMask(
        shell_positions
            .iter()
            .map(|pos| {
                let p = cam.project(pos);
                if p.behind || !cam.in_bounds(p.pixel) {
                    return false;
                }
                let x = p.pixel.x as u32;
                let y = p.pixel.y as u32;
                if !res.pixel_mask.get(x, y) {
                    return false;
                }
                let d = res.shell_depth.depth_at(x, y);
                d.is_finite() && p.depth <= d * (1.0 + eps_rel)
            })
            .collect(),
    )
}

/// Force sample visibility to zero where the projected pixel lands on
/// background (or outside the image) in a foreground mask.
pub fn filter_outside_mask(
    vis: &VisibilityMask,
    pixels: &[V2],
    image_mask: &BinaryImage,
) -> VisibilityMask {
    VisibilityMask(
        vis.0
            .iter()
            .zip(pixels)
            .map(|(m, p)| {
                if !*m {
                    return false;
                }
                if p.x < 0.0
                    || p.y < 0.0
                    || p.x >= image_mask.width as f64
                    || p.y >= image_mask.height as f64
                {
                    return false;
                }
                image_mask.get(p.x as u32, p.y as u32)
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Exact Euclidean distance transform (two 1D parabola passes).
// ---------------------------------------------------------------------------

/// Per-pixel Euclidean distance (pixels) to the nearest foreground pixel of
/// a binary mask; zero on the mask itself. When the mask is empty, every
/// entry is infinite and `empty_mask` is set.
#[derive(Clone, Debug)]
pub struct DistanceField {
    pub width: u32,
    pub height: u32,
    dist: Vec<f64>,
    pub empty_mask: bool,
}

impl DistanceField {
    #[inline]
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.dist[(y * self.width + x) as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.dist
    }

    /// Bilinear sample in pixel coordinates (pixel centers at half-integers),
    /// clamped at the borders. Generic so dual numbers differentiate through
    /// the interpolation weights.
    pub fn sample_at_pixel<T: Real>(&self, px: T, py: T) -> T {
        let w = self.width as usize;
        let h = self.height as usize;
        let gx = px - T::from_f64(0.5);
        let gy = py - T::from_f64(0.5);
        let fx = gx.floor();
        let fy = gy.floor();
        let tx = gx - fx.clone();
        let ty = gy - fy.clone();
        let ix = (fx.value() as i64).clamp(0, w as i64 - 1) as usize;
        let iy = (fy.value() as i64).clamp(0, h as i64 - 1) as usize;
        let ix1 = (ix + 1).min(w - 1);
        let iy1 = (iy + 1).min(h - 1);
        // Clamp the fractional weights so out-of-range queries hold the
        // border value with zero slope.
        let cl = |t: T| -> T {
            if t.value() < 0.0 {
                T::zero()
            } else if t.value() > 1.0 {
                T::one()
            } else {
                t
            }
        };
        let tx = cl(tx);
        let ty = cl(ty);
        let v00 = T::from_f64(self.dist[iy * w + ix]);
        let v10 = T::from_f64(self.dist[iy * w + ix1]);
        let v01 = T::from_f64(self.dist[iy1 * w + ix]);
        let v11 = T::from_f64(self.dist[iy1 * w + ix1]);
        let one = T::one();
        let top = v00 * (one.clone() - tx.clone()) + v10 * tx.clone();
        let bot = v01 * (one.clone() - tx.clone()) + v11 * tx;
        top * (one - ty.clone()) + bot * ty
    }
}

/// 1D squared-distance transform of sampled function `f`, the lower envelope
/// of parabolas rooted at each finite sample. Entries are infinite when no
/// finite sample exists.
fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let first = match (0..n).find(|i| f[*i].is_finite()) {
        Some(i) => i,
        None => {
            d[..n].fill(f64::INFINITY);
            return;
        }
    };
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] {
                // s is finite and z[0] = -inf, so k > 0 here.
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k2 = 0usize;
    for q in 0..n {
        while z[k2 + 1] < q as f64 {
            k2 += 1;
        }
        let p = v[k2];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}

/// Exact Euclidean distance transform of a binary mask.
pub fn distance_transform(mask: &BinaryImage) -> DistanceField {
    let w = mask.width as usize;
    let h = mask.height as usize;
    let empty = mask.count() == 0;
    let mut sq = vec![f64::INFINITY; w * h];
    if !empty {
        // Pass 1: per column.
        let mut col_in = vec![0.0f64; h];
        let mut col_out = vec![0.0f64; h];
        for x in 0..w {
            for y in 0..h {
                col_in[y] = if mask.get(x as u32, y as u32) {
                    0.0
                } else {
                    f64::INFINITY
                };
            }
            if col_in.iter().all(|v| *v == f64::INFINITY) {
                for y in 0..h {
                    sq[y * w + x] = f64::INFINITY;
                }
                continue;
            }
            edt_1d(&col_in, &mut col_out);
            for y in 0..h {
                sq[y * w + x] = col_out[y];
            }
        }
        // Pass 2: per row over the squared column distances.
        let mut row_in = vec![0.0f64; w];
        let mut row_out = vec![0.0f64; w];
        for y in 0..h {
            row_in.copy_from_slice(&sq[y * w..(y + 1) * w]);
            if row_in.iter().all(|v| *v == f64::INFINITY) {
                continue;
            }
            edt_1d(&row_in, &mut row_out);
            sq[y * w..(y + 1) * w].copy_from_slice(&row_out);
        }
    }
    DistanceField {
        width: mask.width,
        height: mask.height,
        dist: sq.iter().map(|s| libm::sqrt(*s)).collect(),
        empty_mask: empty,
    }
}
