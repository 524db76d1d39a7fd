//! Geometry-aligned UV feature scattering: bilinear feature sampling, kernel
//! accumulation into core and shell UV grids, UV-plane position maps,
//! sinusoidal encodings, and masking utilities.
//!
//! Grid addresses depend only on a sample's UV coordinate, never on where it
//! projects in the image, so two cameras viewing the same surface region
//! write into the same texels.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::PinholeCamera;
use crate::geom::{ShellMesh, SurfaceSample, TriMesh};
use crate::math::{stream_seed, Vec2, V2};
use crate::raster::{
    point_visibility, rasterize, shell_mask, shell_sample_mask, BinaryImage, VisibilityMask,
};
use crate::{Error, Result};

/// Dense row-major feature image: `data[(y * width + x) * channels + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize) -> FeatureMap {
        FeatureMap {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch("feature map size".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_arg("feature map contains non-finite values"));
        }
        Ok(FeatureMap { height, width, channels, data })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Standard 4-tap bilinear sample with the pixel-center convention;
    /// out-of-bounds taps clamp to the border.
    pub fn bilinear_into(&self, x: f64, y: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.channels);
        let gx = x - 0.5;
        let gy = y - 0.5;
        let x0 = libm::floor(gx);
        let y0 = libm::floor(gy);
        let tx = (gx - x0).clamp(0.0, 1.0);
        let ty = (gy - y0).clamp(0.0, 1.0);
        let cx = |v: f64| (v as i64).clamp(0, self.width as i64 - 1) as usize;
        let cy = |v: f64| (v as i64).clamp(0, self.height as i64 - 1) as usize;
        let (ix0, ix1) = (cx(x0), cx(x0 + 1.0));
        let (iy0, iy1) = (cy(y0), cy(y0 + 1.0));
        let p00 = self.at(ix0, iy0);
        let p10 = self.at(ix1, iy0);
        let p01 = self.at(ix0, iy1);
        let p11 = self.at(ix1, iy1);
        for c in 0..self.channels {
            let top = p00[c] * (1.0 - tx) + p10[c] * tx;
            let bot = p01[c] * (1.0 - tx) + p11[c] * tx;
            out[c] = top * (1.0 - ty) + bot * ty;
        }
    }

    pub fn bilinear(&self, x: f64, y: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        self.bilinear_into(x, y, &mut out);
        out
    }
}

/// Aggregation kernel for scattering.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    /// Each sample contributes to exactly the texel that owns its UV.
    Nearest,
    /// Radius-1 tent over the 4 neighboring texel centers (ablation option).
    Tent,
}

/// Accumulated UV feature grid: normalized features, the accumulated kernel
/// weight per texel, and the derived coverage (weight > 0). Uncovered texels
/// are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct UvGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    features: Vec<f64>,
    weights: Vec<f64>,
}

impl UvGrid {
    #[inline]
    pub fn feature_at(&self, tx: usize, ty: usize) -> &[f64] {
        let i = (ty * self.width + tx) * self.channels;
        &self.features[i..i + self.channels]
    }

    #[inline]
    pub fn weight_at(&self, tx: usize, ty: usize) -> f64 {
        self.weights[ty * self.width + tx]
    }

    #[inline]
    pub fn covered(&self, tx: usize, ty: usize) -> bool {
        self.weight_at(tx, ty) > 0.0
    }

    pub fn coverage_count(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    pub fn covered_texels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for ty in 0..self.height {
            for tx in 0..self.width {
                if self.covered(tx, ty) {
                    out.push((tx, ty));
                }
            }
        }
        out
    }

    pub fn coverage_image(&self) -> BinaryImage {
        let mut img = BinaryImage::new(self.width as u32, self.height as u32);
        for ty in 0..self.height {
            for tx in 0..self.width {
                img.set(tx as u32, ty as u32, self.covered(tx, ty));
            }
        }
        img
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Texel owning a UV coordinate under the nearest-neighbor kernel.
#[inline]
pub fn uv_to_texel(uv: V2, width: usize, height: usize) -> (usize, usize) {
    let tx = (libm::floor(uv.x * width as f64) as i64).clamp(0, width as i64 - 1) as usize;
    let ty = (libm::floor(uv.y * height as f64) as i64).clamp(0, height as i64 - 1) as usize;
    (tx, ty)
}

/// Scatter per-sample features into a UV grid:
/// `U(t) = sum_i m_i k_i f_i / (sum_i m_i k_i + eps)`.
///
/// `features` is row-major `samples.len() x channels`. Contributions are
/// accumulated in ascending sample order, so results are bit-reproducible.
pub fn scatter_to_uv(
    samples: &[SurfaceSample],
    features: &[f64],
    channels: usize,
    mask: &VisibilityMask,
    grid: (usize, usize),
    kernel: Kernel,
    eps: f64,
) -> Result<UvGrid> {
    let (height, width) = grid;
    if width == 0 || height == 0 {
        return Err(Error::invalid_arg("empty uv grid"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid_arg("eps must be positive"));
    }
    if features.len() != samples.len() * channels {
        return Err(Error::ShapeMismatch("features vs samples".into()));
    }
    if mask.0.len() != samples.len() {
        return Err(Error::ShapeMismatch("mask vs samples".into()));
    }
    let mut acc = vec![0.0; width * height * channels];
    let mut wsum = vec![0.0; width * height];
    for (i, s) in samples.iter().enumerate() {
        if !mask.0[i] {
            continue;
        }
        let f = &features[i * channels..(i + 1) * channels];
        match kernel {
            Kernel::Nearest => {
                let (tx, ty) = uv_to_texel(s.uv, width, height);
                let t = ty * width + tx;
                wsum[t] += 1.0;
                for c in 0..channels {
                    acc[t * channels + c] += f[c];
                }
            }
            Kernel::Tent => {
                let gx = s.uv.x * width as f64 - 0.5;
                let gy = s.uv.y * height as f64 - 0.5;
                let x0 = libm::floor(gx);
                let y0 = libm::floor(gy);
                for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                    let tx = x0 + dx;
                    let ty = y0 + dy;
                    if tx < 0.0 || ty < 0.0 || tx >= width as f64 || ty >= height as f64 {
                        continue;
                    }
                    let k = (1.0 - (gx - tx).abs()) * (1.0 - (gy - ty).abs());
                    if k <= 0.0 {
                        continue;
                    }
                    let t = ty as usize * width + tx as usize;
                    wsum[t] += k;
                    for c in 0..channels {
                        acc[t * channels + c] += k * f[c];
                    }
                }
            }
        }
    }
    let mut features_out = vec![0.0; width * height * channels];
    for t in 0..width * height {
        if wsum[t] > 0.0 {
            let inv = 1.0 / (wsum[t] + eps);
            for c in 0..channels {
                features_out[t * channels + c] = acc[t * channels + c] * inv;
            }
        }
    }
    Ok(UvGrid {
        height,
        width,
        channels,
        features: features_out,
        weights: wsum,
    })
}

/// Default stabilizer in the scatter denominator.
pub const DEFAULT_SCATTER_EPS: f64 = 1e-8;

/// Settings for the end-to-end encoders.
#[derive(Clone, Copy, Debug)]
pub struct EncodeConfig {
    pub kernel: Kernel,
    pub eps: f64,
    pub eps_rel: f64,
    /// Factor applied to the camera resolution for the internal visibility
    /// depth buffer; larger values sharpen silhouette visibility.
    pub vis_supersample: u32,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            kernel: Kernel::Nearest,
            eps: DEFAULT_SCATTER_EPS,
            eps_rel: crate::raster::DEFAULT_EPS_REL,
            vis_supersample: 2,
        }
    }
}

fn supersampled(cam: &PinholeCamera, factor: u32) -> PinholeCamera {
    let factor = factor.max(1);
    let f = factor as f64;
    let mut out = *cam;
    out.fx *= f;
    out.fy *= f;
    out.cx *= f;
    out.cy *= f;
    out.width *= factor;
    out.height *= factor;
    out
}

/// Core-UV encoding: rasterize the mesh, test sample visibility, project
/// visible samples into the image, bilinearly gather features, and scatter
/// them into the UV grid addressed by the samples' UVs.
///
/// Also returns the per-sample visibility actually used, so callers can
/// apply further filtering (e.g. foreground masks) consistently.
pub fn core_uv_encode(
    mesh: &TriMesh,
    cam: &PinholeCamera,
    image_features: &FeatureMap,
    samples: &[SurfaceSample],
    grid: (usize, usize),
    cfg: &EncodeConfig,
) -> Result<(UvGrid, VisibilityMask)> {
    let vis_cam = supersampled(cam, cfg.vis_supersample);
    let db = rasterize(mesh, &vis_cam);
    let vis = point_visibility(samples, &db, &vis_cam, cfg.eps_rel);
    let grid_out = gather_and_scatter(cam, image_features, samples, &vis, grid, cfg)?;
    Ok((grid_out, vis))
}

/// Shell-UV encoding: shell samples (base-mesh UVs, positions on the offset
/// shell) gated by the shell-only mask, gathered from the image, scattered
/// onto a coarse grid.
pub fn shell_uv_encode(
    mesh: &TriMesh,
    shell: &ShellMesh,
    cam: &PinholeCamera,
    image_features: &FeatureMap,
    samples: &[SurfaceSample],
    coarse_grid: (usize, usize),
    cfg: &EncodeConfig,
) -> Result<(UvGrid, VisibilityMask)> {
    let vis_cam = supersampled(cam, cfg.vis_supersample);
    let res = shell_mask(mesh, shell, &vis_cam);
    let shell_positions: Vec<crate::math::V3> = samples
        .iter()
        .map(|s| s.position_on(shell.mesh()))
        .collect();
    let gate = shell_sample_mask(&res, &vis_cam, &shell_positions, cfg.eps_rel);
    // Scatter with the shell-surface positions but the base-mesh UVs.
    let lifted: Vec<SurfaceSample> = samples
        .iter()
        .zip(&shell_positions)
        .map(|(s, p)| SurfaceSample { pos: *p, ..*s })
        .collect();
    let grid_out = gather_and_scatter(cam, image_features, &lifted, &gate, coarse_grid, cfg)?;
    Ok((grid_out, gate))
}

fn gather_and_scatter(
    cam: &PinholeCamera,
    image_features: &FeatureMap,
    samples: &[SurfaceSample],
    vis: &VisibilityMask,
    grid: (usize, usize),
    cfg: &EncodeConfig,
) -> Result<UvGrid> {
    let channels = image_features.channels;
    let mut feats = vec![0.0; samples.len() * channels];
    for (i, s) in samples.iter().enumerate() {
        if !vis.0[i] {
            continue;
        }
        let p = cam.project(&s.pos);
        image_features.bilinear_into(
            p.pixel.x,
            p.pixel.y,
            &mut feats[i * channels..(i + 1) * channels],
        );
    }
    scatter_to_uv(samples, &feats, channels, vis, grid, cfg.kernel, cfg.eps)
}

/// Projected pixel positions of samples (behind-camera points map outside
/// the image so downstream masks drop them).
pub fn project_sample_pixels(cam: &PinholeCamera, samples: &[SurfaceSample]) -> Vec<V2> {
    samples
        .iter()
        .map(|s| {
            let p = cam.project(&s.pos);
            if p.behind {
                Vec2::new(-1.0, -1.0)
            } else {
                p.pixel
            }
        })
        .collect()
}

/// Canonical positions rasterized into the UV plane.
#[derive(Clone, Debug)]
pub struct UVPositionMap {
    pub height: usize,
    pub width: usize,
    positions: Vec<[f64; 3]>,
    covered: Vec<bool>,
    /// Texels written more than once (overlapping charts; last writer wins).
    pub overlap_count: usize,
}

impl UVPositionMap {
    #[inline]
    pub fn covered(&self, tx: usize, ty: usize) -> bool {
        self.covered[ty * self.width + tx]
    }

    #[inline]
    pub fn position_at(&self, tx: usize, ty: usize) -> [f64; 3] {
        self.positions[ty * self.width + tx]
    }

    pub fn coverage_count(&self) -> usize {
        self.covered.iter().filter(|c| **c).count()
    }
}

/// Rasterize the mesh's faces in UV space, interpolating canonical 3D vertex
/// positions barycentrically. Charts are assumed injective; overlapping
/// writes are counted and resolved last-writer.
pub fn uv_position_map(mesh: &TriMesh, grid: (usize, usize)) -> UVPositionMap {
    let (height, width) = grid;
    let mut positions = vec![[0.0; 3]; width * height];
    let mut covered = vec![false; width * height];
    let mut overlap_count = 0;

    for fid in 0..mesh.faces().len() {
        let corners = &mesh.faces()[fid];
        let ps = mesh.face_positions(fid);
        // Texel-space corner coordinates.
        let q: Vec<V2> = corners
            .iter()
            .map(|c| Vec2::new(c.uv.x * width as f64, c.uv.y * height as f64))
            .collect();
        let area2 = (q[1].x - q[0].x) * (q[2].y - q[0].y) - (q[1].y - q[0].y) * (q[2].x - q[0].x);
        if area2.abs() < 1e-12 {
            continue;
        }
        // Accept either orientation in UV space.
        let (i1, i2) = if area2 > 0.0 { (1usize, 2usize) } else { (2, 1) };
        let a = q[0];
        let b = q[i1];
        let c = q[i2];
        let area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        let min_x = a.x.min(b.x).min(c.x).max(0.0) as usize;
        let max_x = (libm::ceil(a.x.max(b.x).max(c.x)).max(0.0) as usize).min(width);
        let min_y = a.y.min(b.y).min(c.y).max(0.0) as usize;
        let max_y = (libm::ceil(a.y.max(b.y).max(c.y)).max(0.0) as usize).min(height);
        let accept0 = crate::raster::top_left(b.x, b.y, c.x, c.y);
        let accept1 = crate::raster::top_left(c.x, c.y, a.x, a.y);
        let accept2 = crate::raster::top_left(a.x, a.y, b.x, b.y);
        for ty in min_y..max_y {
            let py = ty as f64 + 0.5;
            for tx in min_x..max_x {
                let px = tx as f64 + 0.5;
                let e0 = (c.x - b.x) * (py - b.y) - (c.y - b.y) * (px - b.x);
                let e1 = (a.x - c.x) * (py - c.y) - (a.y - c.y) * (px - c.x);
                let e2 = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
                let inside = (e0 > 0.0 || (e0 == 0.0 && accept0))
                    && (e1 > 0.0 || (e1 == 0.0 && accept1))
                    && (e2 > 0.0 || (e2 == 0.0 && accept2));
                if !inside {
                    continue;
                }
                let raw = [e0 / area, e1 / area, e2 / area];
                // raw is ordered (b0 opposite a? no: e0 spans b->c, opposite
                // corner a), so raw = (w_a, w_b, w_c); undo the swap.
                let bary = if i1 == 1 {
                    [raw[0], raw[1], raw[2]]
                } else {
                    [raw[0], raw[2], raw[1]]
                };
                let idx = ty * width + tx;
                if covered[idx] {
                    overlap_count += 1;
                }
                covered[idx] = true;
                let p = ps[0]
                    .scale(&bary[0])
                    .add(&ps[1].scale(&bary[1]))
                    .add(&ps[2].scale(&bary[2]));
                positions[idx] = [p.x, p.y, p.z];
            }
        }
    }

    UVPositionMap {
        height,
        width,
        positions,
        covered,
        overlap_count,
    }
}

/// Sinusoidal encoding: for each input channel `c` and frequency
/// `l in [0, L)`, append `sin(2^l pi c)` and `cos(2^l pi c)`. Output length
/// is `values.len() * 2 * l_freq`.
pub fn sinusoidal_encode(values: &[f64], l_freq: usize) -> Result<Vec<f64>> {
    if l_freq == 0 {
        return Err(Error::invalid_arg("need at least one frequency"));
    }
    let mut out = Vec::with_capacity(values.len() * 2 * l_freq);
    for &v in values {
        let mut scale = core::f64::consts::PI;
        for _ in 0..l_freq {
            out.push(libm::sin(scale * v));
            out.push(libm::cos(scale * v));
            scale *= 2.0;
        }
    }
    Ok(out)
}

/// Encode a position map's covered texels; uncovered texels stay zero.
pub fn sinusoidal_encode_map(map: &UVPositionMap, l_freq: usize) -> Result<FeatureMap> {
    let channels = 3 * 2 * l_freq;
    let mut out = FeatureMap::new(map.height, map.width, channels);
    for ty in 0..map.height {
        for tx in 0..map.width {
            if !map.covered(tx, ty) {
                continue;
            }
            let enc = sinusoidal_encode(&map.position_at(tx, ty), l_freq)?;
            out.at_mut(tx, ty).copy_from_slice(&enc);
        }
    }
    Ok(out)
}

/// Zero out exactly `floor(ratio * covered)` covered texels, chosen
/// deterministically from the seed. Masked texels lose their features,
/// weight, and coverage. Returns the new grid and the masked texel indices
/// (row-major), sorted ascending.
pub fn random_uv_mask(grid: &UvGrid, ratio: f64, seed: u64) -> Result<(UvGrid, Vec<u32>)> {
    if !(0.0..=0.5).contains(&ratio) {
        return Err(Error::invalid_arg("mask ratio must be in [0, 0.5]"));
    }
    let covered: Vec<u32> = (0..grid.width * grid.height)
        .filter(|t| grid.weights[*t] > 0.0)
        .map(|t| t as u32)
        .collect();
    let k = (ratio * covered.len() as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed("uv-mask", seed));
    let mut pool = covered;
    pool.shuffle(&mut rng);
    let mut chosen: Vec<u32> = pool.into_iter().take(k).collect();
    chosen.sort_unstable();
    let mut out = grid.clone();
    for &t in &chosen {
        let t = t as usize;
        out.weights[t] = 0.0;
        for c in 0..out.channels {
            out.features[t * out.channels + c] = 0.0;
        }
    }
    Ok((out, chosen))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes::{icosphere, quad_plane};
    use crate::geom::{build_shell, make_sample, sample_surface_uniform};
    use crate::math::{Vec3, V3};

    fn constant_map(h: usize, w: usize, vals: &[f64]) -> FeatureMap {
        let mut m = FeatureMap::new(h, w, vals.len());
        for y in 0..h {
            for x in 0..w {
                m.at_mut(x, y).copy_from_slice(vals);
            }
        }
        m
    }

    #[test]
    fn bilinear_pixel_center_is_exact() {
        let mut m = FeatureMap::new(4, 4, 1);
        m.at_mut(2, 1)[0] = 7.5;
        let v = m.bilinear(2.5, 1.5);
        assert_eq!(v[0], 7.5);
    }

    #[test]
    fn bilinear_midpoint_blend() {
        let mut m = FeatureMap::new(2, 2, 1);
        // top row 0, bottom row 1; the center of the four pixels blends to 0.5
        m.at_mut(0, 1)[0] = 1.0;
        m.at_mut(1, 1)[0] = 1.0;
        let v = m.bilinear(1.0, 1.0);
        assert!((v[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bilinear_constant_map_partition_of_unity() {
        let m = constant_map(5, 7, &[0.3, -2.0]);
        for (x, y) in [(0.0, 0.0), (3.3, 2.2), (6.9, 4.9), (-5.0, 20.0)] {
            let v = m.bilinear(x, y);
            assert!((v[0] - 0.3).abs() < 1e-15);
            assert!((v[1] + 2.0).abs() < 1e-15);
        }
    }

    fn plane_sample(mesh: &TriMesh, u: f64, v: f64) -> SurfaceSample {
        // quad_plane face 0 has uv corners (0,0), (1,0), (1,1); for v <= u
        // the barycentrics are (1-u, u-v, v).
        make_sample(mesh, 0, [1.0 - u, u - v, v]).unwrap()
    }

    #[test]
    fn scatter_single_and_pair() {
        let mesh = quad_plane(1.0);
        let s0 = plane_sample(&mesh, 0.27, 0.11);
        let s1 = plane_sample(&mesh, 0.29, 0.12); // same texel in a 16x16 grid
        let eps = 1e-8;

        let g = scatter_to_uv(
            &[s0],
            &[2.0],
            1,
            &VisibilityMask(vec![true]),
            (16, 16),
            Kernel::Nearest,
            eps,
        )
        .unwrap();
        let (tx, ty) = uv_to_texel(s0.uv, 16, 16);
        let got = g.feature_at(tx, ty)[0];
        assert!((got - 2.0 / (1.0 + eps)).abs() < 2e-7);
        assert_eq!(g.coverage_count(), 1);

        let g2 = scatter_to_uv(
            &[s0, s1],
            &[1.0, 3.0],
            1,
            &VisibilityMask(vec![true, true]),
            (16, 16),
            Kernel::Nearest,
            eps,
        )
        .unwrap();
        let got = g2.feature_at(tx, ty)[0];
        assert!((got - 4.0 / (2.0 + eps)).abs() < 2e-7, "mean of both samples");
    }

    #[test]
    fn scatter_all_masked_is_empty() {
        let mesh = quad_plane(1.0);
        let s0 = plane_sample(&mesh, 0.5, 0.25);
        let g = scatter_to_uv(
            &[s0],
            &[1.0],
            1,
            &VisibilityMask(vec![false]),
            (8, 8),
            Kernel::Nearest,
            1e-8,
        )
        .unwrap();
        assert_eq!(g.coverage_count(), 0);
        assert!(g.features().iter().all(|f| *f == 0.0));
    }

    #[test]
    fn scatter_constant_feature_fixpoint() {
        let mesh = quad_plane(1.0);
        let mut samples = Vec::new();
        let mut feats = Vec::new();
        for i in 0..50 {
            let u = (i as f64 + 0.3) / 50.0;
            let v = (i as f64 * 0.61) % 1.0;
            samples.push(plane_sample(&mesh, u, v.min(u)));
            feats.push(0.7);
        }
        let vis = VisibilityMask(vec![true; samples.len()]);
        let g = scatter_to_uv(&samples, &feats, 1, &vis, (8, 8), Kernel::Nearest, 1e-8).unwrap();
        for (tx, ty) in g.covered_texels() {
            let w = g.weight_at(tx, ty);
            let want = 0.7 * w / (w + 1e-8);
            assert!((g.feature_at(tx, ty)[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn tent_kernel_spreads_but_stays_convex() {
        let mesh = quad_plane(1.0);
        let s = plane_sample(&mesh, 0.5, 0.25);
        let g = scatter_to_uv(
            &[s],
            &[4.0],
            1,
            &VisibilityMask(vec![true]),
            (8, 8),
            Kernel::Tent,
            1e-8,
        )
        .unwrap();
        assert!(g.coverage_count() >= 1);
        for (tx, ty) in g.covered_texels() {
            let v = g.feature_at(tx, ty)[0];
            assert!(v > 0.0 && v <= 4.0);
        }
    }

    fn sphere_scene(levels: u32) -> (TriMesh, PinholeCamera) {
        let m = icosphere(0.5, levels);
        let moved: Vec<V3> = m
            .vertices()
            .iter()
            .map(|v| v.add(&Vec3::new(0.0, 0.0, 3.0)))
            .collect();
        (
            m.with_vertices(moved).unwrap(),
            PinholeCamera::looking_forward(500.0, 500.0, 256.0, 256.0, 512, 512),
        )
    }

    #[test]
    fn core_encode_empty_when_camera_behind() {
        let (mesh, _) = sphere_scene(2);
        let moved: Vec<V3> = mesh
            .vertices()
            .iter()
            .map(|v| v.add(&Vec3::new(0.0, 0.0, -6.0)))
            .collect();
        let mesh = mesh.with_vertices(moved).unwrap();
        let cam = PinholeCamera::looking_forward(500.0, 500.0, 256.0, 256.0, 512, 512);
        let samples = sample_surface_uniform(&mesh, 500, 1).unwrap().samples;
        let img = constant_map(512, 512, &[1.0, 0.0, 0.0]);
        let (grid, vis) =
            core_uv_encode(&mesh, &cam, &img, &samples, (64, 64), &EncodeConfig::default())
                .unwrap();
        assert_eq!(vis.visible_count(), 0);
        assert_eq!(grid.coverage_count(), 0);
    }

    #[test]
    fn core_encode_constant_image_gives_constant_texels() {
        let (mesh, cam) = sphere_scene(3);
        let samples = sample_surface_uniform(&mesh, 4000, 2).unwrap().samples;
        let img = constant_map(512, 512, &[0.25, 0.5, 0.75]);
        let (grid, vis) =
            core_uv_encode(&mesh, &cam, &img, &samples, (64, 64), &EncodeConfig::default())
                .unwrap();
        assert!(vis.visible_count() > 1000);
        assert!(grid.coverage_count() > 100);
        for (tx, ty) in grid.covered_texels() {
            let f = grid.feature_at(tx, ty);
            let w = grid.weight_at(tx, ty);
            let shrink = w / (w + 1e-8);
            assert!((f[0] - 0.25 * shrink).abs() < 1e-9);
            assert!((f[2] - 0.75 * shrink).abs() < 1e-9);
        }
    }

    #[test]
    fn pose_invariant_texel_addresses() {
        // Two cameras viewing the same surface region write the same texels:
        // addresses depend only on sample uv.
        let (mesh, cam1) = sphere_scene(3);
        let cam2 = PinholeCamera::new(
            520.0,
            510.0,
            260.0,
            250.0,
            512,
            512,
            crate::math::Mat3::from_axis_angle(&Vec3::new(0.0, 0.05, 0.0)),
            Vec3::new(0.1, 0.02, 0.05),
        )
        .unwrap();
        let samples = sample_surface_uniform(&mesh, 2000, 5).unwrap().samples;
        let img = constant_map(512, 512, &[1.0]);
        let cfg = EncodeConfig::default();
        let (g1, v1) = core_uv_encode(&mesh, &cam1, &img, &samples, (32, 32), &cfg).unwrap();
        let (g2, v2) = core_uv_encode(&mesh, &cam2, &img, &samples, (32, 32), &cfg).unwrap();
        for (i, s) in samples.iter().enumerate() {
            if v1.0[i] && v2.0[i] {
                let t = uv_to_texel(s.uv, 32, 32);
                assert!(g1.covered(t.0, t.1) && g2.covered(t.0, t.1));
            }
        }
    }

    #[test]
    fn shell_encode_zero_delta_empty_and_constant_color() {
        let (mesh, cam) = sphere_scene(3);
        let samples = sample_surface_uniform(&mesh, 3000, 3).unwrap().samples;
        let img = constant_map(512, 512, &[0.9]);
        let cfg = EncodeConfig::default();

        let shell0 = build_shell(&mesh, 0.0).unwrap();
        let (g0, gate0) =
            shell_uv_encode(&mesh, &shell0, &cam, &img, &samples, (16, 16), &cfg).unwrap();
        assert_eq!(gate0.visible_count(), 0);
        assert_eq!(g0.coverage_count(), 0);

        let shell = build_shell(&mesh, 0.1).unwrap();
        let (g, gate) =
            shell_uv_encode(&mesh, &shell, &cam, &img, &samples, (16, 16), &cfg).unwrap();
        assert!(gate.visible_count() > 0, "some samples in the shell-only ring");
        for (tx, ty) in g.covered_texels() {
            let w = g.weight_at(tx, ty);
            let shrink = w / (w + 1e-8);
            assert!((g.feature_at(tx, ty)[0] - 0.9 * shrink).abs() < 1e-6);
        }
    }

    #[test]
    fn position_map_single_chart_blend_oracle() {
        let mesh = quad_plane(1.0);
        let map = uv_position_map(&mesh, (32, 32));
        assert!(map.coverage_count() > 900);
        assert_eq!(map.overlap_count, 0);
        for ty in 0..32 {
            for tx in 0..32 {
                if !map.covered(tx, ty) {
                    continue;
                }
                // The plane maps uv (u,v) -> position (2u-1, 2v-1, 0).
                let u = (tx as f64 + 0.5) / 32.0;
                let v = (ty as f64 + 0.5) / 32.0;
                let p = map.position_at(tx, ty);
                assert!((p[0] - (2.0 * u - 1.0)).abs() < 1e-9, "u {u} p0 {}", p[0]);
                assert!((p[1] - (2.0 * v - 1.0)).abs() < 1e-9);
                assert!(p[2].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn position_map_empty_atlas() {
        let empty = TriMesh::new(Vec::new(), Vec::new()).unwrap();
        let map = uv_position_map(&empty, (16, 16));
        assert_eq!(map.coverage_count(), 0);
    }

    #[test]
    fn sinusoidal_encode_values_and_shape() {
        let enc = sinusoidal_encode(&[0.0], 4).unwrap();
        for l in 0..4 {
            assert_eq!(enc[2 * l], 0.0);
            assert_eq!(enc[2 * l + 1], 1.0);
        }
        let enc = sinusoidal_encode(&[1.0], 1).unwrap();
        assert!(enc[0].abs() < 1e-15);
        assert!((enc[1] + 1.0).abs() < 1e-15);
        // 2 channels, 8 frequencies -> 32 outputs
        let enc = sinusoidal_encode(&[0.3, 0.7], 8).unwrap();
        assert_eq!(enc.len(), 32);
    }

    #[test]
    fn random_mask_counting_and_determinism() {
        let mesh = quad_plane(1.0);
        let mut samples = Vec::new();
        let mut feats = Vec::new();
        for y in 0..10 {
            for x in 0..10 {
                let u = (x as f64 + 0.5) / 10.0;
                let v = (y as f64 + 0.5) / 10.0;
                samples.push(plane_sample(&mesh, u, v.min(u)));
                feats.push(1.0);
            }
        }
        let vis = VisibilityMask(vec![true; samples.len()]);
        let g = scatter_to_uv(&samples, &feats, 1, &vis, (10, 10), Kernel::Nearest, 1e-8).unwrap();
        let covered = g.coverage_count();
        assert!(covered >= 50);

        let (identity, masked) = random_uv_mask(&g, 0.0, 7).unwrap();
        assert_eq!(identity, g);
        assert!(masked.is_empty());

        let (half, masked) = random_uv_mask(&g, 0.5, 7).unwrap();
        assert_eq!(masked.len(), covered / 2);
        assert_eq!(half.coverage_count(), covered - covered / 2);
        for &t in &masked {
            let (tx, ty) = ((t as usize) % 10, (t as usize) / 10);
            assert!(!half.covered(tx, ty));
            assert!(half.feature_at(tx, ty).iter().all(|f| *f == 0.0));
        }

        let (_, masked2) = random_uv_mask(&g, 0.5, 7).unwrap();
        assert_eq!(masked, masked2);
        assert!(random_uv_mask(&g, 0.6, 7).is_err());
    }

    #[test]
    fn mask_filter_idempotence_through_scatter() {
        let mesh = quad_plane(1.0);
        let samples: Vec<SurfaceSample> = (0..20)
            .map(|i| {
                let u = (i as f64 + 0.5) / 20.0;
                plane_sample(&mesh, u, u * 0.5)
            })
            .collect();
        let feats: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let pixels: Vec<V2> = samples
            .iter()
            .map(|s| Vec2::new(s.uv.x * 8.0, s.uv.y * 8.0))
            .collect();
        let mut img_mask = BinaryImage::new(8, 8);
        for y in 0..8 {
            for x in 0..4 {
                img_mask.set(x, y, true);
            }
        }
        let vis = VisibilityMask(vec![true; 20]);
        let once = crate::raster::filter_outside_mask(&vis, &pixels, &img_mask);
        let twice = crate::raster::filter_outside_mask(&once, &pixels, &img_mask);
        assert_eq!(once, twice);
        let g1 = scatter_to_uv(&samples, &feats, 1, &once, (8, 8), Kernel::Nearest, 1e-8).unwrap();
        let g2 = scatter_to_uv(&samples, &feats, 1, &twice, (8, 8), Kernel::Nearest, 1e-8).unwrap();
        assert_eq!(g1, g2);
    }
}
