//! Wavefront OBJ subset: `v`, `vt`, and `f v/vt[/vn]` faces with 1-based
//! indices. Normal indices are accepted and ignored (normals are always
//! recomputed); polygons are fan-triangulated.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use avatar_core::geom::{Corner, TriMesh};
use avatar_core::math::{Vec2, Vec3, V2, V3};

use crate::{CliError, Result};

pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let text = fs::read_to_string(path)?;
    parse_obj(&text)
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices: Vec<V3> = Vec::new();
    let mut uvs: Vec<V2> = Vec::new();
    let mut faces: Vec<[Corner; 3]> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap();
        let fail = |msg: &str| CliError::format(format!("obj line {}: {msg}", lineno + 1));
        match tag {
            "v" => {
                let mut coords = [0.0f64; 3];
                for c in coords.iter_mut() {
                    *c = parts
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| fail("vertex needs three coordinates"))?;
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "vt" => {
                let u: f64 = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| fail("vt needs coordinates"))?;
                let v: f64 = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| fail("vt needs coordinates"))?;
                uvs.push(Vec2::new(u, v));
            }
            "f" => {
                let mut corners: Vec<Corner> = Vec::new();
                for spec in parts {
                    let mut fields = spec.split('/');
                    let v_idx: usize = fields
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| fail("face needs vertex indices"))?;
                    let vt_idx: usize = fields
                        .next()
                        .filter(|t| !t.is_empty())
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| fail("face corner has no texture coordinate"))?;
                    // A third field (normal index) is allowed and ignored.
                    if v_idx == 0 || v_idx > vertices.len() {
                        return Err(fail(&format!("vertex index {v_idx} out of range")));
                    }
                    if vt_idx == 0 || vt_idx > uvs.len() {
                        return Err(fail(&format!("vt index {vt_idx} out of range")));
                    }
                    corners.push(Corner {
                        vertex: (v_idx - 1) as u32,
                        uv: uvs[vt_idx - 1],
                    });
                }
                if corners.len() < 3 {
                    return Err(fail("face needs at least three corners"));
                }
                for k in 1..corners.len() - 1 {
                    faces.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            // vn, o, g, s, usemtl, mtllib: ignored
            _ => {}
        }
    }
    TriMesh::new(vertices, faces).map_err(CliError::from)
}

/// Serialize a mesh back to OBJ (one `vt` per corner, duplicates merged).
pub fn obj_string(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    let mut uv_index: Vec<(V2, usize)> = Vec::new();
    let mut face_uv_ids: Vec<[usize; 3]> = Vec::new();
    for face in mesh.faces() {
        let mut ids = [0usize; 3];
        for (k, c) in face.iter().enumerate() {
            let found = uv_index.iter().find(|(uv, _)| *uv == c.uv).map(|(_, i)| *i);
            let id = match found {
                Some(i) => i,
                None => {
                    let i = uv_index.len();
                    uv_index.push((c.uv, i));
                    i
                }
            };
            ids[k] = id;
        }
        face_uv_ids.push(ids);
    }
    for (uv, _) in &uv_index {
        let _ = writeln!(out, "vt {} {}", uv.x, uv.y);
    }
    for (face, ids) in mesh.faces().iter().zip(&face_uv_ids) {
        let _ = writeln!(
            out,
            "f {}/{} {}/{} {}/{}",
            face[0].vertex + 1,
            ids[0] + 1,
            face[1].vertex + 1,
            ids[1] + 1,
            face[2].vertex + 1,
            ids[2] + 1
        );
    }
    out
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    fs::write(path, obj_string(mesh))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_triangles_and_quads() {
        let text = "\
# a square
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
vt 0 0
vt 1 0
vt 1 1
vt 0 1
f 1/1 2/2 3/3 4/4
";
        let mesh = parse_obj(text).unwrap();
        assert_eq!(mesh.vertices().len(), 4);
        assert_eq!(mesh.faces().len(), 2, "quad fans into two triangles");
        assert_eq!(mesh.faces()[0][0].uv, Vec2::new(0.0, 0.0));
    }

    #[test]
    fn ignores_normal_indices() {
        let text = "\
v 0 0 0
v 1 0 0
v 0 1 0
vt 0 0
vt 1 0
vt 0 1
vn 0 0 1
f 1/1/1 2/2/1 3/3/1
";
        let mesh = parse_obj(text).unwrap();
        assert_eq!(mesh.faces().len(), 1);
    }

    #[test]
    fn rejects_missing_vt_and_bad_indices() {
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").is_err());
        assert!(parse_obj("v 0 0 0\nvt 0 0\nf 1/1 2/1 3/1\n").is_err());
    }

    #[test]
    fn roundtrips_procedural_meshes() {
        let mesh = avatar_core::geom::shapes::icosphere_net_atlas(1.0, 1).unwrap();
        let text = obj_string(&mesh);
        let back = parse_obj(&text).unwrap();
        assert_eq!(back.vertices().len(), mesh.vertices().len());
        assert_eq!(back.faces().len(), mesh.faces().len());
        for (a, b) in mesh.faces().iter().zip(back.faces()) {
            for (ca, cb) in a.iter().zip(b) {
                assert_eq!(ca.vertex, cb.vertex);
                assert!((ca.uv.x - cb.uv.x).abs() < 1e-15);
                assert!((ca.uv.y - cb.uv.y).abs() < 1e-15);
            }
        }
    }
}
