//! Triangle meshes with per-corner UV coordinates, surface sampling, shell
//! construction, and similarity alignment.

pub mod shapes;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math::{sym_eigen, Mat3, Quat, Vec2, Vec3, M3, V2, V3};
use crate::{Error, Result};

/// One face corner: vertex index plus its UV coordinate in this face.
///
/// UVs live on corners, not vertices, so atlas seams are representable:
/// the same vertex may carry different UVs in different charts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corner {
    pub vertex: u32,
    pub uv: V2,
}

/// Triangle mesh with a UV atlas and derived vertex normals.
#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<V3>,
    faces: Vec<[Corner; 3]>,
    vertex_normals: Vec<V3>,
    degenerate_normals: Vec<u32>,
}

const UV_TOL: f64 = 1e-9;

impl TriMesh {
    /// Build a mesh, validating indices and UV ranges and computing
    /// area-weighted vertex normals.
    pub fn new(vertices: Vec<V3>, faces: Vec<[Corner; 3]>) -> Result<TriMesh> {
        for (i, v) in vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid_mesh(format!("vertex {i} is not finite")));
            }
        }
        for (f, corners) in faces.iter().enumerate() {
            let [a, b, c] = corners;
            for corner in corners {
                if corner.vertex as usize >= vertices.len() {
                    return Err(Error::invalid_mesh(format!(
                        "face {f} references vertex {} of {}",
                        corner.vertex,
                        vertices.len()
                    )));
                }
                let uv = corner.uv;
                if !uv.x.is_finite() || !uv.y.is_finite() {
                    return Err(Error::invalid_mesh(format!("face {f} has non-finite uv")));
                }
                if uv.x < -UV_TOL || uv.x > 1.0 + UV_TOL || uv.y < -UV_TOL || uv.y > 1.0 + UV_TOL {
                    return Err(Error::invalid_mesh(format!(
                        "face {f} uv ({}, {}) outside [0,1]^2",
                        uv.x, uv.y
                    )));
                }
            }
            if a.vertex == b.vertex || b.vertex == c.vertex || a.vertex == c.vertex {
                return Err(Error::invalid_mesh(format!(
                    "face {f} has repeated vertex indices"
                )));
            }
        }
        let (vertex_normals, degenerate_normals) = compute_vertex_normals(&vertices, &faces);
        Ok(TriMesh {
            vertices,
            faces,
            vertex_normals,
            degenerate_normals,
        })
    }

    /// Same topology with new vertex positions; normals are recomputed.
    pub fn with_vertices(&self, vertices: Vec<V3>) -> Result<TriMesh> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::invalid_mesh(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        TriMesh::new(vertices, self.faces.clone())
    }

    pub fn vertices(&self) -> &[V3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[Corner; 3]] {
        &self.faces
    }

    pub fn vertex_normals(&self) -> &[V3] {
        &self.vertex_normals
    }

    /// Vertices whose incident faces were all degenerate; their normal is the
    /// documented fallback (0, 0, 1).
    pub fn degenerate_normal_vertices(&self) -> &[u32] {
        &self.degenerate_normals
    }

    pub fn face_positions(&self, face: usize) -> [V3; 3] {
        let [a, b, c] = &self.faces[face];
        [
            self.vertices[a.vertex as usize],
            self.vertices[b.vertex as usize],
            self.vertices[c.vertex as usize],
        ]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [p0, p1, p2] = self.face_positions(face);
        p1.sub(&p0).cross(&p2.sub(&p0)).norm() * 0.5
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bbox(&self) -> Option<(V3, V3)> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        let mut lo = first;
        let mut hi = first;
        for v in it {
            lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        Some((lo, hi))
    }

    pub fn bbox_diagonal(&self) -> f64 {
        match self.bbox() {
            Some((lo, hi)) => hi.sub(&lo).norm(),
            None => 0.0,
        }
    }

    pub fn centroid(&self) -> V3 {
        if self.vertices.is_empty() {
            return V3::ZERO;
        }
        let mut c = V3::ZERO;
        for v in &self.vertices {
            c = c.add(v);
        }
        c.scale(&(1.0 / self.vertices.len() as f64))
    }
}

/// Area-weighted vertex normals. Vertices with no non-degenerate incident
/// face get the fallback normal (0, 0, 1) and are listed in the second
/// return value.
pub fn compute_vertex_normals(vertices: &[V3], faces: &[[Corner; 3]]) -> (Vec<V3>, Vec<u32>) {
    let mut acc = vec![V3::ZERO; vertices.len()];
    for corners in faces {
        let p0 = vertices[corners[0].vertex as usize];
        let p1 = vertices[corners[1].vertex as usize];
        let p2 = vertices[corners[2].vertex as usize];
        // Cross product magnitude is twice the face area, so summing raw
        // crosses is the area weighting.
        let n = p1.sub(&p0).cross(&p2.sub(&p0));
        for corner in corners {
            let a = &mut acc[corner.vertex as usize];
            *a = a.add(&n);
        }
    }
    let mut degenerate = Vec::new();
    let normals = acc
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let len = n.norm();
            if len <= 1e-20 {
                degenerate.push(i as u32);
                Vec3::new(0.0, 0.0, 1.0)
            } else {
                n.scale(&(1.0 / len))
            }
        })
        .collect();
    (normals, degenerate)
}

/// Precomputed point on the mesh surface: face, barycentric coordinates,
/// UV coordinate, and current 3D position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample {
    pub face: u32,
    pub bary: [f64; 3],
    pub uv: V2,
    pub pos: V3,
}

impl SurfaceSample {
    /// Recompute the position against (posed) vertex positions of a mesh
    /// with the same topology.
    pub fn position_on(&self, mesh: &TriMesh) -> V3 {
        let [p0, p1, p2] = mesh.face_positions(self.face as usize);
        p0.scale(&self.bary[0])
            .add(&p1.scale(&self.bary[1]))
            .add(&p2.scale(&self.bary[2]))
    }
}

/// UV coordinate of a barycentric point on a face: the barycentric blend of
/// the face's corner UVs. Per-face by construction, so samples on seam faces
/// take their own chart's UVs with no cross-seam blending.
pub fn uv_unparameterize(mesh: &TriMesh, face: usize, bary: [f64; 3]) -> Result<V2> {
    if face >= mesh.faces().len() {
        return Err(Error::FaceOutOfRange(face, mesh.faces().len()));
    }
    let corners = &mesh.faces()[face];
    let u = bary[0] * corners[0].uv.x + bary[1] * corners[1].uv.x + bary[2] * corners[2].uv.x;
    let v = bary[0] * corners[0].uv.y + bary[1] * corners[1].uv.y + bary[2] * corners[2].uv.y;
    Ok(Vec2::new(u, v))
}

/// Build a full [`SurfaceSample`] for a face + barycentric location.
pub fn make_sample(mesh: &TriMesh, face: usize, bary: [f64; 3]) -> Result<SurfaceSample> {
    let sum = bary[0] + bary[1] + bary[2];
    if (sum - 1.0).abs() > 1e-9 || bary.iter().any(|b| *b < -1e-12) {
        return Err(Error::invalid_arg(format!(
            "barycentrics {bary:?} do not form a convex combination"
        )));
    }
    let uv = uv_unparameterize(mesh, face, bary)?;
    let [p0, p1, p2] = mesh.face_positions(face);
    let pos = p0
        .scale(&bary[0])
        .add(&p1.scale(&bary[1]))
        .add(&p2.scale(&bary[2]));
    Ok(SurfaceSample {
        face: face as u32,
        bary,
        uv,
        pos,
    })
}

/// Result of area-proportional surface sampling.
#[derive(Clone, Debug)]
pub struct SurfaceSampling {
    pub samples: Vec<SurfaceSample>,
    /// Zero-area faces excluded from the area table.
    pub excluded_degenerate_faces: usize,
}

/// Draw `count` points uniformly by area. Deterministic for a fixed seed.
pub fn sample_surface_uniform(mesh: &TriMesh, count: usize, seed: u64) -> Result<SurfaceSampling> {
    if count == 0 {
        return Err(Error::invalid_arg("sample count must be positive"));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    let mut excluded = 0;
    for f in 0..mesh.faces().len() {
        let a = mesh.face_area(f);
        if a <= 0.0 {
            excluded += 1;
        }
        total += a.max(0.0);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(Error::ZeroAreaMesh);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    while samples.len() < count {
        let r: f64 = rng.random::<f64>() * total;
        let face = cumulative.partition_point(|&c| c <= r).min(mesh.faces().len() - 1);
        if mesh.face_area(face) <= 0.0 {
            continue;
        }
        // Square-root trick for uniform barycentrics.
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let s = libm::sqrt(r1);
        let bary = [1.0 - s, s * (1.0 - r2), s * r2];
        samples.push(make_sample(mesh, face, bary)?);
    }
    Ok(SurfaceSampling {
        samples,
        excluded_degenerate_faces: excluded,
    })
}

/// Mesh offset along vertex normals; shares topology with its base.
#[derive(Clone, Debug)]
pub struct ShellMesh {
    mesh: TriMesh,
    delta: f64,
}

impl ShellMesh {
    /// The offset mesh (same topology as the base).
    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Offset every vertex by `delta` along its outward normal.
pub fn build_shell(mesh: &TriMesh, delta: f64) -> Result<ShellMesh> {
    if !(delta >= 0.0) {
        return Err(Error::invalid_arg("shell delta must be non-negative"));
    }
    let offset: Vec<V3> = mesh
        .vertices()
        .iter()
        .zip(mesh.vertex_normals())
        .map(|(v, n)| v.add(&n.scale(&delta)))
        .collect();
    Ok(ShellMesh {
        mesh: mesh.with_vertices(offset)?,
        delta,
    })
}

/// Scaled rigid transform `p -> s R p + t`.
#[derive(Clone, Copy, Debug)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: M3,
    pub translation: V3,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: Mat3::identity(),
            translation: V3::ZERO,
        }
    }

    pub fn apply(&self, p: &V3) -> V3 {
        self.rotation.mul_vec(p).scale(&self.scale).add(&self.translation)
    }
}

/// Least-squares similarity aligning `src` onto `dst`, minimizing
/// `sum ||s R src_i + t - dst_i||^2` in closed form (quaternion absolute
/// orientation on the centered covariance, then the optimal scale).
pub fn estimate_similarity(src: &[V3], dst: &[V3]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(Error::invalid_arg("point lists differ in length"));
    }
    let n = src.len();
    if n < 3 {
        return Err(Error::DegeneratePoints(format!(
            "need at least 3 correspondences, got {n}"
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mut src_c = V3::ZERO;
    let mut dst_c = V3::ZERO;
    for i in 0..n {
        src_c = src_c.add(&src[i]);
        dst_c = dst_c.add(&dst[i]);
    }
    src_c = src_c.scale(&inv_n);
    dst_c = dst_c.scale(&inv_n);

    // Source scatter matrix for the degeneracy test, cross-covariance for
    // the rotation.
    let mut scatter = [[0.0f64; 3]; 3];
    let mut cov = [[0.0f64; 3]; 3];
    let mut src_var = 0.0;
    for i in 0..n {
        let p = src[i].sub(&src_c);
        let q = dst[i].sub(&dst_c);
        let pa = p.to_array();
        let qa = q.to_array();
        for r in 0..3 {
            for c in 0..3 {
                scatter[r][c] += pa[r] * pa[c];
                cov[r][c] += pa[r] * qa[c];
            }
        }
        src_var += p.norm_sq();
    }
    let (eig, _) = sym_eigen(scatter);
    if eig[0] <= 0.0 || eig[1] <= eig[0] * 1e-12 {
        return Err(Error::DegeneratePoints(
            "source points are collinear or coincident".into(),
        ));
    }

    // Quaternion absolute-orientation: the optimal rotation is the largest
    // eigenvector of the 4x4 matrix built from the cross-covariance.
    let m = cov;
    let tr = m[0][0] + m[1][1] + m[2][2];
    let nmat = [
        [
            tr,
            m[1][2] - m[2][1],
            m[2][0] - m[0][2],
            m[0][1] - m[1][0],
        ],
        [
            m[1][2] - m[2][1],
            m[0][0] - m[1][1] - m[2][2],
            m[0][1] + m[1][0],
            m[2][0] + m[0][2],
        ],
        [
            m[2][0] - m[0][2],
            m[0][1] + m[1][0],
            m[1][1] - m[0][0] - m[2][2],
            m[1][2] + m[2][1],
        ],
        [
            m[0][1] - m[1][0],
            m[2][0] + m[0][2],
            m[1][2] + m[2][1],
            m[2][2] - m[0][0] - m[1][1],
        ],
    ];
    let (_, vecs) = sym_eigen(nmat);
    let q = Quat::new(vecs[0][0], vecs[1][0], vecs[2][0], vecs[3][0]).normalized();
    let rotation = q.to_mat3();

    let mut num = 0.0;
    for i in 0..n {
        let p = rotation.mul_vec(&src[i].sub(&src_c));
        num += p.dot(&dst[i].sub(&dst_c));
    }
    if src_var <= 0.0 {
        return Err(Error::DegeneratePoints("source points coincide".into()));
    }
    let scale = num / src_var;
    let translation = dst_c.sub(&rotation.mul_vec(&src_c).scale(&scale));
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

#[cfg(test)]
mod tests {
    use super::shapes::{icosphere, quad_plane, unit_cube};
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_triangle_mesh_area_ratio_9_to_1() -> TriMesh {
        // Face 0: legs 6 x 3 -> area 9. Face 1: legs 2 x 1 -> area 1.
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(6.0, 0.0, 0.0),
            Vec3::new(0.0, 3.0, 0.0),
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(12.0, 0.0, 0.0),
            Vec3::new(10.0, 1.0, 0.0),
        ];
        let c = |vertex: u32, u: f64, w: f64| Corner {
            vertex,
            uv: Vec2::new(u, w),
        };
        let faces = vec![
            [c(0, 0.0, 0.0), c(1, 0.4, 0.0), c(2, 0.0, 0.4)],
            [c(3, 0.6, 0.6), c(4, 1.0, 0.6), c(5, 0.6, 1.0)],
        ];
        TriMesh::new(v, faces).unwrap()
    }

    #[test]
    fn cube_corner_normals_are_diagonals() {
        let m = unit_cube(0.5);
        for (i, v) in m.vertices().iter().take(8).enumerate() {
            let expect = v.normalized();
            let n = m.vertex_normals()[i];
            // Each cube corner touches three mutually orthogonal sides with
            // equal incident area, so the normal is the corner diagonal.
            assert!(n.sub(&expect).norm() < 1e-12, "vertex {i}");
            assert!((n.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn icosphere_normals_match_analytic_sphere_normals() {
        let m = icosphere(1.0, 4);
        for (i, v) in m.vertices().iter().enumerate() {
            let expect = v.normalized();
            assert!(
                m.vertex_normals()[i].sub(&expect).norm() < 1e-2,
                "vertex {i} deviates from radial normal"
            );
        }
        assert!(m.degenerate_normal_vertices().is_empty());
    }

    #[test]
    fn degenerate_triangle_gets_flagged_fallback_normal() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0), // collinear: zero area
        ];
        let c = |vertex: u32| Corner {
            vertex,
            uv: Vec2::new(0.0, 0.0),
        };
        let m = TriMesh::new(v, vec![[c(0), c(1), c(2)]]).unwrap();
        assert_eq!(m.degenerate_normal_vertices().len(), 3);
        for n in m.vertex_normals() {
            assert_eq!(*n, Vec3::new(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn area_proportional_sampling_hits_binomial_band() {
        let m = two_triangle_mesh_area_ratio_9_to_1();
        let sampling = sample_surface_uniform(&m, 10_000, 7).unwrap();
        let on_face0 = sampling.samples.iter().filter(|s| s.face == 0).count();
        let frac = on_face0 as f64 / 10_000.0;
        // p = 0.9, 4 sigma of a binomial proportion at n = 10k is ~0.012.
        assert!((0.88..=0.92).contains(&frac), "face-0 fraction {frac}");
    }

    #[test]
    fn sampling_is_deterministic_and_count_one_works() {
        let m = two_triangle_mesh_area_ratio_9_to_1();
        let a = sample_surface_uniform(&m, 100, 42).unwrap();
        let b = sample_surface_uniform(&m, 100, 42).unwrap();
        assert_eq!(a.samples, b.samples);
        let one = sample_surface_uniform(&m, 1, 0).unwrap();
        assert_eq!(one.samples.len(), 1);
        let s = one.samples[0];
        assert!((s.bary[0] + s.bary[1] + s.bary[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_area_mesh_is_an_error() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        let c = |vertex: u32| Corner {
            vertex,
            uv: Vec2::new(0.0, 0.0),
        };
        let m = TriMesh::new(v, vec![[c(0), c(1), c(2)]]).unwrap();
        assert!(matches!(
            sample_surface_uniform(&m, 10, 0),
            Err(Error::ZeroAreaMesh)
        ));
    }

    #[test]
    fn uv_unparameterize_corners_and_centroid() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let mk = |vertex: u32, u: f64, w: f64| Corner {
            vertex,
            uv: Vec2::new(u, w),
        };
        let m = TriMesh::new(v, vec![[mk(0, 0.0, 0.0), mk(1, 1.0, 0.0), mk(2, 0.0, 1.0)]]).unwrap();
        let at_corner = uv_unparameterize(&m, 0, [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(at_corner, Vec2::new(0.0, 0.0));
        let third = 1.0 / 3.0;
        let centroid = uv_unparameterize(&m, 0, [third, third, third]).unwrap();
        assert!((centroid.x - third).abs() < 1e-15);
        assert!((centroid.y - third).abs() < 1e-15);
        assert!(matches!(
            uv_unparameterize(&m, 3, [1.0, 0.0, 0.0]),
            Err(Error::FaceOutOfRange(3, 1))
        ));
    }

    #[test]
    fn uv_unparameterize_matches_direct_blend_oracle() {
        let m = icosphere(1.0, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let face = rng.random_range(0..m.faces().len());
            let a: f64 = rng.random();
            let b: f64 = rng.random::<f64>() * (1.0 - a);
            let bary = [a, b, 1.0 - a - b];
            let got = uv_unparameterize(&m, face, bary).unwrap();
            // Independent recomputation straight from the corner uvs.
            let cs = &m.faces()[face];
            let want_u = bary[0] * cs[0].uv.x + bary[1] * cs[1].uv.x + bary[2] * cs[2].uv.x;
            let want_v = bary[0] * cs[0].uv.y + bary[1] * cs[1].uv.y + bary[2] * cs[2].uv.y;
            assert!((got.x - want_u).abs() < 1e-12);
            assert!((got.y - want_v).abs() < 1e-12);
        }
    }

    #[test]
    fn barycentric_closure_of_samples() {
        let m = icosphere(1.0, 2);
        let sampling = sample_surface_uniform(&m, 500, 3).unwrap();
        for s in &sampling.samples {
            let again = s.position_on(&m);
            assert!(again.sub(&s.pos).norm() < 1e-9);
        }
    }

    #[test]
    fn shell_of_zero_delta_is_identity() {
        let m = icosphere(1.0, 1);
        let shell = build_shell(&m, 0.0).unwrap();
        for (a, b) in m.vertices().iter().zip(shell.mesh().vertices()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn shell_on_unit_sphere_has_expected_radius() {
        let m = icosphere(1.0, 3);
        let shell = build_shell(&m, 0.1).unwrap();
        for v in shell.mesh().vertices() {
            let r = v.norm();
            assert!((1.099..=1.101).contains(&r), "shell radius {r}");
        }
    }

    #[test]
    fn shell_on_flat_plane_moves_along_plane_normal() {
        let m = quad_plane(1.0);
        let shell = build_shell(&m, 0.05).unwrap();
        for v in shell.mesh().vertices() {
            assert!((v.z - 0.05).abs() < 1e-9);
        }
    }

    #[test]
    fn shell_ordering_on_convex_mesh() {
        let m = icosphere(1.0, 2);
        let shell = build_shell(&m, 0.03).unwrap();
        let c = m.centroid();
        for (a, b) in m.vertices().iter().zip(shell.mesh().vertices()) {
            assert!(b.sub(&c).norm() > a.sub(&c).norm());
        }
    }

    #[test]
    fn similarity_identity_and_constructed_ground_truth() {
        let src = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.3, 0.2, 0.9),
        ];
        let id = estimate_similarity(&src, &src).unwrap();
        assert!((id.scale - 1.0).abs() < 1e-9);
        assert!(id.translation.norm() < 1e-9);
        assert!((id.rotation.det() - 1.0).abs() < 1e-9);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id.rotation.m[i][j] - want).abs() < 1e-9);
            }
        }

        let dst: Vec<V3> = src
            .iter()
            .map(|p| p.scale(&2.0).add(&Vec3::new(1.0, 0.0, 0.0)))
            .collect();
        let t = estimate_similarity(&src, &dst).unwrap();
        assert!((t.scale - 2.0).abs() < 1e-9);
        assert!(t.translation.sub(&Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-9);
        for p in &src {
            let q = t.apply(p);
            let want = p.scale(&2.0).add(&Vec3::new(1.0, 0.0, 0.0));
            assert!(q.sub(&want).norm() < 1e-9);
        }
    }

    #[test]
    fn similarity_recovers_rotation_under_noise() {
        let axis = Vec3::new(0.3, -0.8, 0.5).normalized();
        let r = Mat3::from_axis_angle(&axis.scale(&0.7));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src: Vec<V3> = (0..40)
            .map(|_| {
                Vec3::new(
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                )
            })
            .collect();
        let dst: Vec<V3> = src
            .iter()
            .map(|p| {
                let noise = Vec3::new(
                    (rng.random::<f64>() - 0.5) * 2e-3,
                    (rng.random::<f64>() - 0.5) * 2e-3,
                    (rng.random::<f64>() - 0.5) * 2e-3,
                );
                r.mul_vec(p).add(&Vec3::new(0.2, 0.1, -0.4)).add(&noise)
            })
            .collect();
        let t = estimate_similarity(&src, &dst).unwrap();
        let got = Quat::from_mat3(&t.rotation);
        let want = Quat::from_mat3(&r);
        assert!(got.angle_to(&want) < 0.01, "rotation error {}", got.angle_to(&want));
        assert!((t.scale - 1.0).abs() < 1e-3);
    }

    #[test]
    fn similarity_exact_on_noise_free_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let axis = Vec3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            )
            .normalized();
            let angle: f64 = rng.random::<f64>() * 3.0;
            let r = Mat3::from_axis_angle(&axis.scale(&angle));
            let s: f64 = 0.2 + rng.random::<f64>() * 4.0;
            let t = Vec3::new(rng.random(), rng.random(), rng.random());
            let src: Vec<V3> = (0..10)
                .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
                .collect();
            let dst: Vec<V3> = src.iter().map(|p| r.mul_vec(p).scale(&s).add(&t)).collect();
            let est = estimate_similarity(&src, &dst).unwrap();
            assert!((est.scale - s).abs() < 1e-10 * s.max(1.0));
            for p in &src {
                let q = est.apply(p);
                let want = r.mul_vec(p).scale(&s).add(&t);
                assert!(q.sub(&want).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn similarity_rejects_collinear_sources() {
        let src = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(2.0, 2.0, 2.0),
            Vec3::new(3.0, 3.0, 3.0),
        ];
        let dst = src.clone();
        assert!(matches!(
            estimate_similarity(&src, &dst),
            Err(Error::DegeneratePoints(_))
        ));
    }
}
