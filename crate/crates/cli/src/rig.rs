//! Rig file: a JSON header (joint tree, names, counts, payload offsets)
//! followed by a little-endian binary payload holding vertices, faces with
//! per-corner UVs, sparse skin weights, and blendshape bases.
//!
//! Layout: magic `RIGB`, version `u32` LE, header length `u32` LE, the JSON
//! header, then the payload; all header offsets are relative to the payload
//! start.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use avatar_core::geom::{Corner, TriMesh};
use avatar_core::math::{Vec2, Vec3, V3};
use avatar_core::skin::{Basis, Joint, SkinnedBody};

use crate::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"RIGB";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct JointJson {
    name: String,
    parent: Option<u32>,
    rest: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct Header {
    joints: Vec<JointJson>,
    vertex_count: u64,
    face_count: u64,
    vertices_offset: u64,
    faces_offset: u64,
    weight_counts_offset: u64,
    weight_entries_offset: u64,
    weight_entry_count: u64,
    shape_columns: u64,
    shape_offset: u64,
    expr_columns: u64,
    expr_offset: u64,
    left_hand_joints: Vec<u32>,
    right_hand_joints: Vec<u32>,
    jaw_joint: Option<u32>,
}

struct PayloadWriter {
    bytes: Vec<u8>,
}

impl PayloadWriter {
    fn offset(&self) -> u64 {
        self.bytes.len() as u64
    }

    fn put_f64(&mut self, v: f64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn put_u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }
}

struct PayloadReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    fn seek(&mut self, offset: u64) -> Result<()> {
        let pos = usize::try_from(offset).map_err(|_| CliError::format("offset overflow"))?;
        if pos > self.bytes.len() {
            return Err(CliError::format("payload offset out of range"));
        }
        self.pos = pos;
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::format("payload truncated"));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn get_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn get_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn write_rig(path: &Path, body: &SkinnedBody) -> Result<()> {
    let mesh = body.rest_mesh();
    let mut payload = PayloadWriter { bytes: Vec::new() };

    let vertices_offset = payload.offset();
    for v in mesh.vertices() {
        payload.put_f64(v.x);
        payload.put_f64(v.y);
        payload.put_f64(v.z);
    }
    let faces_offset = payload.offset();
    for face in mesh.faces() {
        for c in face {
            payload.put_u32(c.vertex);
            payload.put_f64(c.uv.x);
            payload.put_f64(c.uv.y);
        }
    }
    let weight_counts_offset = payload.offset();
    for ws in body.skin_weights() {
        payload.put_u32(ws.len() as u32);
    }
    let weight_entries_offset = payload.offset();
    let mut weight_entry_count = 0u64;
    for ws in body.skin_weights() {
        for (j, w) in ws {
            payload.put_u32(*j);
            payload.put_f64(*w);
            weight_entry_count += 1;
        }
    }
    let write_basis = |basis: Option<&Basis>, payload: &mut PayloadWriter| -> (u64, u64) {
        let offset = payload.offset();
        let mut cols = 0;
        if let Some(b) = basis {
            cols = b.columns.len() as u64;
            for col in &b.columns {
                for v in col {
                    payload.put_f64(*v);
                }
            }
        }
        (cols, offset)
    };
    let (shape_columns, shape_offset) = write_basis(body.shape_basis(), &mut payload);
    let (expr_columns, expr_offset) = write_basis(body.expr_basis(), &mut payload);

    let header = Header {
        joints: body
            .joints()
            .iter()
            .map(|j| JointJson {
                name: j.name.clone(),
                parent: j.parent,
                rest: j.rest.to_array(),
            })
            .collect(),
        vertex_count: mesh.vertices().len() as u64,
        face_count: mesh.faces().len() as u64,
        vertices_offset,
        faces_offset,
        weight_counts_offset,
        weight_entries_offset,
        weight_entry_count,
        shape_columns,
        shape_offset,
        expr_columns,
        expr_offset,
        left_hand_joints: body.left_hand_joints().to_vec(),
        right_hand_joints: body.right_hand_joints().to_vec(),
        jaw_joint: body.jaw_joint(),
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut out = Vec::with_capacity(12 + header_json.len() + payload.bytes.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&payload.bytes);
    fs::write(path, out)?;
    Ok(())
}

pub fn read_rig(path: &Path) -> Result<SkinnedBody> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != MAGIC {
        return Err(CliError::format("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CliError::format(format!("unsupported rig version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if 12 + header_len > bytes.len() {
        return Err(CliError::format("rig header truncated"));
    }
    let header: Header = serde_json::from_slice(&bytes[12..12 + header_len])?;
    let mut payload = PayloadReader { bytes: &bytes[12 + header_len..], pos: 0 };

    let nv = usize::try_from(header.vertex_count).map_err(|_| CliError::format("vertex count"))?;
    let nf = usize::try_from(header.face_count).map_err(|_| CliError::format("face count"))?;

    payload.seek(header.vertices_offset)?;
    let mut vertices: Vec<V3> = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = payload.get_f64()?;
        let y = payload.get_f64()?;
        let z = payload.get_f64()?;
        vertices.push(Vec3::new(x, y, z));
    }

    payload.seek(header.faces_offset)?;
    let mut faces: Vec<[Corner; 3]> = Vec::with_capacity(nf);
    for _ in 0..nf {
        let mut corners = [Corner { vertex: 0, uv: Vec2::new(0.0, 0.0) }; 3];
        for c in corners.iter_mut() {
            let vertex = payload.get_u32()?;
            let u = payload.get_f64()?;
            let v = payload.get_f64()?;
            *c = Corner { vertex, uv: Vec2::new(u, v) };
        }
        faces.push(corners);
    }

    payload.seek(header.weight_counts_offset)?;
    let mut counts = Vec::with_capacity(nv);
    for _ in 0..nv {
        counts.push(payload.get_u32()? as usize);
    }
    payload.seek(header.weight_entries_offset)?;
    let mut weights: Vec<Vec<(u32, f64)>> = Vec::with_capacity(nv);
    let mut read_entries = 0u64;
    for count in counts {
        let mut ws = Vec::with_capacity(count);
        for _ in 0..count {
            let j = payload.get_u32()?;
            let w = payload.get_f64()?;
            ws.push((j, w));
        }
        read_entries += count as u64;
        weights.push(ws);
    }
    if read_entries != header.weight_entry_count {
        return Err(CliError::format("weight entry count mismatch"));
    }

    let read_basis = |cols: u64, offset: u64, payload: &mut PayloadReader| -> Result<Option<Basis>> {
        if cols == 0 {
            return Ok(None);
        }
        payload.seek(offset)?;
        let mut columns = Vec::with_capacity(cols as usize);
        for _ in 0..cols {
            let mut col = Vec::with_capacity(nv * 3);
            for _ in 0..nv * 3 {
                col.push(payload.get_f64()?);
            }
            columns.push(col);
        }
        Ok(Some(Basis { columns }))
    };
    let shape = read_basis(header.shape_columns, header.shape_offset, &mut payload)?;
    let expr = read_basis(header.expr_columns, header.expr_offset, &mut payload)?;

    let joints: Vec<Joint> = header
        .joints
        .into_iter()
        .map(|j| Joint {
            name: j.name,
            parent: j.parent,
            rest: V3::from_array(j.rest),
        })
        .collect();

    let mesh = TriMesh::new(vertices, faces)?;
    SkinnedBody::new(
        mesh,
        joints,
        weights,
        shape,
        expr,
        header.left_hand_joints,
        header.right_hand_joints,
        header.jaw_joint,
    )
    .map_err(CliError::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use avatar_core::skin::tube_body;

    #[test]
    fn tube_body_roundtrip() {
        let dir = std::env::temp_dir().join("avatar_rig_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tube.rigb");
        let body = tube_body();
        write_rig(&path, &body).unwrap();
        let back = read_rig(&path).unwrap();

        assert_eq!(back.joints(), body.joints());
        assert_eq!(back.skin_weights(), body.skin_weights());
        assert_eq!(back.shape_basis(), body.shape_basis());
        assert_eq!(back.expr_basis(), body.expr_basis());
        assert_eq!(back.left_hand_joints(), body.left_hand_joints());
        assert_eq!(back.jaw_joint(), body.jaw_joint());
        assert_eq!(back.rest_mesh().vertices(), body.rest_mesh().vertices());
        assert_eq!(back.rest_mesh().faces(), body.rest_mesh().faces());
    }

    #[test]
    fn rejects_corruption() {
        let dir = std::env::temp_dir().join("avatar_rig_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.rigb");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(read_rig(&path).is_err());
    }
}
