//! Procedural test meshes: cube, plane, icospheres.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{Corner, TriMesh};
use crate::math::{Vec2, Vec3, V2, V3};
use crate::Result;

/// Axis-aligned cube centered at the origin with the given half-extent.
/// Each of the six sides gets its own UV chart in a 3x2 cell grid. Sides are
/// fanned around a center vertex so every corner sees equal incident area
/// from each of its three sides.
pub fn unit_cube(half: f64) -> TriMesh {
    let h = half;
    let mut vertices = vec![
        Vec3::new(-h, -h, -h),
        Vec3::new(h, -h, -h),
        Vec3::new(h, h, -h),
        Vec3::new(-h, h, -h),
        Vec3::new(-h, -h, h),
        Vec3::new(h, -h, h),
        Vec3::new(h, h, h),
        Vec3::new(-h, h, h),
    ];
    let quads: [[u32; 4]; 6] = [
        [1, 5, 6, 2], // +x
        [4, 0, 3, 7], // -x
        [3, 2, 6, 7], // +y
        [4, 5, 1, 0], // -y
        [5, 4, 7, 6], // +z
        [0, 1, 2, 3], // -z
    ];
    let mut tri_faces: Vec<[u32; 3]> = Vec::new();
    let mut corner_uvs: Vec<[V2; 3]> = Vec::new();
    for (k, quad) in quads.iter().enumerate() {
        let cell_x = (k % 3) as f64;
        let cell_y = (k / 3) as f64;
        let inset = 0.05;
        let uv = |fx: f64, fy: f64| {
            Vec2::new(
                (cell_x + inset + fx * (1.0 - 2.0 * inset)) / 3.0,
                (cell_y + inset + fy * (1.0 - 2.0 * inset)) / 2.0,
            )
        };
        let center = vertices[quad[0] as usize]
            .add(&vertices[quad[1] as usize])
            .add(&vertices[quad[2] as usize])
            .add(&vertices[quad[3] as usize])
            .scale(&0.25);
        let ci = vertices.len() as u32;
        vertices.push(center);
        let fuv = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        for e in 0..4 {
            let a = quad[e];
            let b = quad[(e + 1) % 4];
            tri_faces.push([a, b, ci]);
            corner_uvs.push([
                uv(fuv[e][0], fuv[e][1]),
                uv(fuv[(e + 1) % 4][0], fuv[(e + 1) % 4][1]),
                uv(0.5, 0.5),
            ]);
        }
    }
    // orient_outward may swap corners 1 and 2, so mirror that on the uvs.
    let before = tri_faces.clone();
    orient_outward(&vertices, &mut tri_faces);
    let faces: Vec<[Corner; 3]> = tri_faces
        .iter()
        .zip(before.iter())
        .zip(corner_uvs.iter())
        .map(|((f, orig), uvs)| {
            let swapped = f != orig;
            let order: [usize; 3] = if swapped { [0, 2, 1] } else { [0, 1, 2] };
            [
                Corner { vertex: f[0], uv: uvs[order[0]] },
                Corner { vertex: f[1], uv: uvs[order[1]] },
                Corner { vertex: f[2], uv: uvs[order[2]] },
            ]
        })
        .collect();
    TriMesh::new(vertices, faces).expect("cube construction is valid")
}

/// Two-triangle square in the z=0 plane with the full [0,1]^2 atlas, facing +z.
pub fn quad_plane(half: f64) -> TriMesh {
    let v = vec![
        Vec3::new(-half, -half, 0.0),
        Vec3::new(half, -half, 0.0),
        Vec3::new(half, half, 0.0),
        Vec3::new(-half, half, 0.0),
    ];
    let uv = [
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(0.0, 1.0),
    ];
    let c = |i: u32| Corner {
        vertex: i,
        uv: uv[i as usize],
    };
    let faces = vec![[c(0), c(1), c(2)], [c(0), c(2), c(3)]];
    TriMesh::new(v, faces).expect("plane construction is valid")
}

fn ico_base_positions() -> ([V3; 12], [usize; 6], [usize; 6]) {
    // Top at +y, two latitude rings at +-atan(1/2).
    let lat = libm::atan(0.5);
    let mut pos = [V3::ZERO; 12];
    pos[0] = Vec3::new(0.0, 1.0, 0.0); // north
    pos[11] = Vec3::new(0.0, -1.0, 0.0); // south
    let mut upper = [0usize; 6];
    let mut lower = [0usize; 6];
    for c in 0..5 {
        let lon_u = 2.0 * core::f64::consts::PI * c as f64 / 5.0;
        let lon_l = lon_u + core::f64::consts::PI / 5.0;
        pos[1 + c] = Vec3::new(
            libm::cos(lat) * libm::cos(lon_u),
            libm::sin(lat),
            libm::cos(lat) * libm::sin(lon_u),
        );
        pos[6 + c] = Vec3::new(
            libm::cos(lat) * libm::cos(lon_l),
            -libm::sin(lat),
            libm::cos(lat) * libm::sin(lon_l),
        );
        upper[c] = 1 + c;
        lower[c] = 6 + c;
    }
    upper[5] = upper[0];
    lower[5] = lower[0];
    (pos, upper, lower)
}

/// Spherical UV used by the welded icosphere; degenerate at the seam and
/// poles but inside [0,1]^2, which is all the visibility and shell tests need.
fn spherical_uv(p: &V3) -> V2 {
    let u = 0.5 + libm::atan2(p.z, p.x) / (2.0 * core::f64::consts::PI);
    let v = 0.5 - libm::asin(p.y.clamp(-1.0, 1.0)) / core::f64::consts::PI;
    Vec2::new(u.clamp(0.0, 1.0), v.clamp(0.0, 1.0))
}

/// Ensure outward winding for a convex, origin-centered solid.
fn orient_outward(vertices: &[V3], faces: &mut [[u32; 3]]) {
    for f in faces.iter_mut() {
        let p0 = vertices[f[0] as usize];
        let p1 = vertices[f[1] as usize];
        let p2 = vertices[f[2] as usize];
        let n = p1.sub(&p0).cross(&p2.sub(&p0));
        let centroid = p0.add(&p1).add(&p2).scale(&(1.0 / 3.0));
        if n.dot(&centroid) < 0.0 {
            f.swap(1, 2);
        }
    }
}

fn subdivide_on_sphere(
    vertices: &mut Vec<V3>,
    faces: Vec<[u32; 3]>,
    levels: u32,
) -> Vec<[u32; 3]> {
    let mut faces = faces;
    for _ in 0..levels {
        let mut midpoint: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mid = |a: u32, b: u32, vertices: &mut Vec<V3>, cache: &mut BTreeMap<(u32, u32), u32>| {
                let key = (a.min(b), a.max(b));
                *cache.entry(key).or_insert_with(|| {
                    let m = vertices[a as usize]
                        .add(&vertices[b as usize])
                        .scale(&0.5)
                        .normalized();
                    vertices.push(m);
                    (vertices.len() - 1) as u32
                })
            };
            let ab = mid(f[0], f[1], vertices, &mut midpoint);
            let bc = mid(f[1], f[2], vertices, &mut midpoint);
            let ca = mid(f[2], f[0], vertices, &mut midpoint);
            next.push([f[0], ab, ca]);
            next.push([ab, f[1], bc]);
            next.push([ab, bc, ca]);
            next.push([ca, bc, f[2]]);
        }
        faces = next;
    }
    faces
}

/// Welded icosphere of the given radius: shared vertices everywhere, so
/// vertex normals are exact sphere normals up to tessellation error.
pub fn icosphere(radius: f64, levels: u32) -> TriMesh {
    let (pos, upper, lower) = ico_base_positions();
    let mut vertices: Vec<V3> = pos.to_vec();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    for c in 0..5 {
        let (u0, u1) = (upper[c] as u32, upper[c + 1] as u32);
        let (l0, l1) = (lower[c] as u32, lower[c + 1] as u32);
        faces.push([0, u0, u1]);
        faces.push([u0, l0, u1]);
        faces.push([u1, l0, l1]);
        faces.push([l0, 11, l1]);
    }
    orient_outward(&vertices, &mut faces);
    let faces = subdivide_on_sphere(&mut vertices, faces, levels);
    let mut oriented = faces;
    orient_outward(&vertices, &mut oriented);
    let corner_faces: Vec<[Corner; 3]> = oriented
        .iter()
        .map(|f| {
            [
                Corner { vertex: f[0], uv: spherical_uv(&vertices[f[0] as usize]) },
                Corner { vertex: f[1], uv: spherical_uv(&vertices[f[1] as usize]) },
                Corner { vertex: f[2], uv: spherical_uv(&vertices[f[2] as usize]) },
            ]
        })
        .collect();
    let scaled: Vec<V3> = vertices.iter().map(|v| v.scale(&radius)).collect();
    TriMesh::new(scaled, corner_faces).expect("icosphere construction is valid")
}

/// Icosphere whose atlas is the classic unfolded icosahedron net: a strip of
/// 20 root triangles laid out in [0,1]^2. The parameterization is continuous
/// across every edge interior to the net and injective over the whole atlas,
/// which makes it a faithful texture-transfer fixture. Net-boundary vertices
/// are duplicated (same 3D position, different UV).
pub fn icosphere_net_atlas(radius: f64, levels: u32) -> Result<TriMesh> {
    let (pos, upper, lower) = ico_base_positions();
    // 22 net nodes: (3d index, net x, net y-row)
    let mut nodes: Vec<(usize, f64, f64)> = Vec::new();
    for c in 0..5 {
        nodes.push((0, 0.5 + c as f64, 0.0)); // north copies: 0..5
    }
    for (c, &u) in upper.iter().enumerate() {
        nodes.push((u, c as f64, 1.0)); // upper ring: 5..11
    }
    for (c, &l) in lower.iter().enumerate() {
        nodes.push((l, 0.5 + c as f64, 2.0)); // lower ring: 11..17
    }
    for c in 0..5 {
        nodes.push((11, 1.0 + c as f64, 3.0)); // south copies: 17..22
    }

    let mut vertices: Vec<V3> = Vec::new();
    let mut uvs: Vec<V2> = Vec::new();
    for (vi, x, y) in &nodes {
        vertices.push(pos[*vi]);
        uvs.push(Vec2::new(x / 5.5, y / 3.0));
    }

    let n = |c: usize| c as u32;
    let u = |c: usize| (5 + c) as u32;
    let l = |c: usize| (11 + c) as u32;
    let s = |c: usize| (17 + c) as u32;
    let mut faces: Vec<[u32; 3]> = Vec::new();
    for c in 0..5 {
        faces.push([n(c), u(c), u(c + 1)]);
        faces.push([u(c), l(c), u(c + 1)]);
        faces.push([u(c + 1), l(c), l(c + 1)]);
        faces.push([l(c), s(c), l(c + 1)]);
    }

    // Subdivide, splitting midpoints per index pair: edges shared inside the
    // net share indices and stay welded; net-boundary copies stay separate.
    for _ in 0..levels {
        let mut cache: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = |a: u32, b: u32| -> u32 {
                let key = (a.min(b), a.max(b));
                *cache.entry(key).or_insert_with(|| {
                    let m3 = vertices[a as usize]
                        .add(&vertices[b as usize])
                        .scale(&0.5)
                        .normalized();
                    let muv = Vec2::new(
                        0.5 * (uvs[a as usize].x + uvs[b as usize].x),
                        0.5 * (uvs[a as usize].y + uvs[b as usize].y),
                    );
                    vertices.push(m3);
                    uvs.push(muv);
                    (vertices.len() - 1) as u32
                })
            };
            let ab = mid(f[0], f[1]);
            let bc = mid(f[1], f[2]);
            let ca = mid(f[2], f[0]);
            next.push([f[0], ab, ca]);
            next.push([ab, f[1], bc]);
            next.push([ab, bc, ca]);
            next.push([ca, bc, f[2]]);
        }
        faces = next;
    }
    orient_outward(&vertices, &mut faces);

    let corner_faces: Vec<[Corner; 3]> = faces
        .iter()
        .map(|f| {
            [
                Corner { vertex: f[0], uv: uvs[f[0] as usize] },
                Corner { vertex: f[1], uv: uvs[f[1] as usize] },
                Corner { vertex: f[2], uv: uvs[f[2] as usize] },
            ]
        })
        .collect();
    let scaled: Vec<V3> = vertices.iter().map(|v| v.scale(&radius)).collect();
    TriMesh::new(scaled, corner_faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_counts_and_total_area() {
        let m = unit_cube(0.5);
        assert_eq!(m.vertices().len(), 8 + 6);
        assert_eq!(m.faces().len(), 24);
        assert!((m.total_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn icosphere_counts_and_radius() {
        let m = icosphere(2.0, 2);
        assert_eq!(m.faces().len(), 20 * 16);
        for v in m.vertices() {
            assert!((v.norm() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn net_atlas_uv_in_unit_square_and_area_close_to_sphere() {
        let m = icosphere_net_atlas(1.0, 3).unwrap();
        assert_eq!(m.faces().len(), 20 * 64);
        for f in m.faces() {
            for c in f {
                assert!(c.uv.x >= 0.0 && c.uv.x <= 1.0);
                assert!(c.uv.y >= 0.0 && c.uv.y <= 1.0);
            }
        }
        let sphere_area = 4.0 * core::f64::consts::PI;
        let rel = (m.total_area() - sphere_area).abs() / sphere_area;
        assert!(rel < 0.05, "tessellated area within 5% of sphere, got rel {rel}");
    }
}
