//! JSON interchange formats: cameras, keypoints, body parameters, scene
//! vocabularies, and loss reports.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use avatar_core::camera::PinholeCamera;
use avatar_core::math::{Mat3, V3, Vec3};
use avatar_core::sampler::{ComposedScene, Factor, FactorVocabulary};
use avatar_core::tracker::{BodyParams, Keypoint};

use crate::{CliError, Result};

/// Camera JSON: `{fx, fy, cx, cy, width, height, R (row-major 9), t (3)}`,
/// where `x_cam = R x_world + t`.
#[derive(Serialize, Deserialize)]
pub struct CameraJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl CameraJson {
    pub fn to_camera(&self) -> Result<PinholeCamera> {
        let m = Mat3 {
            m: [
                [self.r[0], self.r[1], self.r[2]],
                [self.r[3], self.r[4], self.r[5]],
                [self.r[6], self.r[7], self.r[8]],
            ],
        };
        PinholeCamera::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            m,
            V3::from_array(self.t),
        )
        .map_err(CliError::from)
    }

    pub fn from_camera(cam: &PinholeCamera) -> CameraJson {
        CameraJson {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            r: [
                cam.rot.m[0][0],
                cam.rot.m[0][1],
                cam.rot.m[0][2],
                cam.rot.m[1][0],
                cam.rot.m[1][1],
                cam.rot.m[1][2],
                cam.rot.m[2][0],
                cam.rot.m[2][1],
                cam.rot.m[2][2],
            ],
            t: cam.t.to_array(),
        }
    }
}

pub fn read_camera(path: &Path) -> Result<PinholeCamera> {
    let json: CameraJson = serde_json::from_str(&fs::read_to_string(path)?)?;
    json.to_camera()
}

pub fn write_camera(path: &Path, cam: &PinholeCamera) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&CameraJson::from_camera(cam))?)?;
    Ok(())
}

/// Keypoints JSON: an array of `{label, x, y, conf}`.
#[derive(Serialize, Deserialize)]
pub struct KeypointJson {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub conf: f64,
}

pub fn read_keypoints(path: &Path) -> Result<Vec<Keypoint>> {
    let raw: Vec<KeypointJson> = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(raw
        .into_iter()
        .map(|k| Keypoint { label: k.label, x: k.x, y: k.y, conf: k.conf })
        .collect())
}

pub fn write_keypoints(path: &Path, kps: &[Keypoint]) -> Result<()> {
    let raw: Vec<KeypointJson> = kps
        .iter()
        .map(|k| KeypointJson {
            label: k.label.clone(),
            x: k.x,
            y: k.y,
            conf: k.conf,
        })
        .collect();
    fs::write(path, serde_json::to_string_pretty(&raw)?)?;
    Ok(())
}

/// Body parameters JSON. The flat vector layout (used by the loss traces
/// and the pose prior) is `[theta_glob | theta_body | theta_lhand |
/// theta_rhand | theta_jaw | beta | psi | t]` with joint blocks in ascending
/// joint-index order.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct BodyParamsJson {
    pub theta_glob: [f64; 3],
    pub theta_body: Vec<[f64; 3]>,
    #[serde(default)]
    pub theta_lhand: Vec<[f64; 3]>,
    #[serde(default)]
    pub theta_rhand: Vec<[f64; 3]>,
    #[serde(default)]
    pub theta_jaw: [f64; 3],
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub psi: Vec<f64>,
    pub t: [f64; 3],
}

impl BodyParamsJson {
    pub fn to_params(&self) -> BodyParams {
        BodyParams {
            theta_glob: self.theta_glob,
            theta_body: self.theta_body.clone(),
            theta_lhand: self.theta_lhand.clone(),
            theta_rhand: self.theta_rhand.clone(),
            theta_jaw: self.theta_jaw,
            beta: self.beta.clone(),
            psi: self.psi.clone(),
            t: self.t,
        }
    }

    pub fn from_params(p: &BodyParams) -> BodyParamsJson {
        BodyParamsJson {
            theta_glob: p.theta_glob,
            theta_body: p.theta_body.clone(),
            theta_lhand: p.theta_lhand.clone(),
            theta_rhand: p.theta_rhand.clone(),
            theta_jaw: p.theta_jaw,
            beta: p.beta.clone(),
            psi: p.psi.clone(),
            t: p.t,
        }
    }
}

pub fn read_params(path: &Path) -> Result<BodyParams> {
    let raw: BodyParamsJson = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(raw.to_params())
}

pub fn write_params(path: &Path, params: &BodyParams) -> Result<()> {
    fs::write(
        path,
        serde_json::to_string_pretty(&BodyParamsJson::from_params(params))?,
    )?;
    Ok(())
}

/// Dense vertex targets JSON: an array of `{vertex, x, y}`.
#[derive(Serialize, Deserialize)]
pub struct VertexTargetJson {
    pub vertex: u32,
    pub x: f64,
    pub y: f64,
}

pub fn read_vertex_targets(path: &Path) -> Result<Vec<avatar_core::tracker::VertexTarget>> {
    let raw: Vec<VertexTargetJson> = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(raw
        .into_iter()
        .map(|t| avatar_core::tracker::VertexTarget {
            vertex: t.vertex,
            pixel: avatar_core::math::Vec2::new(t.x, t.y),
        })
        .collect())
}

/// Vocabulary JSON: `{"factors": [{"name", "items", "sentinel"}]}`. The
/// array order is preserved (it feeds the vocabulary content hash).
#[derive(Serialize, Deserialize)]
pub struct VocabJson {
    pub factors: Vec<FactorJson>,
}

#[derive(Serialize, Deserialize)]
pub struct FactorJson {
    pub name: String,
    pub items: Vec<String>,
    #[serde(default)]
    pub sentinel: bool,
}

pub fn parse_vocab(text: &str) -> Result<FactorVocabulary> {
    let raw: VocabJson = serde_json::from_str(text)?;
    FactorVocabulary::new(
        raw.factors
            .into_iter()
            .map(|f| Factor {
                name: f.name,
                items: f.items,
                optional: f.sentinel,
            })
            .collect(),
    )
    .map_err(CliError::from)
}

pub fn read_vocab(path: &Path) -> Result<FactorVocabulary> {
    parse_vocab(&fs::read_to_string(path)?)
}

pub fn vocab_string(vocab: &FactorVocabulary) -> Result<String> {
    let raw = VocabJson {
        factors: vocab
            .factors()
            .iter()
            .map(|f| FactorJson {
                name: f.name.clone(),
                items: f.items.clone(),
                sentinel: f.optional,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&raw)?)
}

/// One line of the composed-scenes JSON-lines output.
#[derive(Serialize, Deserialize)]
pub struct SceneJson {
    pub regime: String,
    pub seed: u64,
    pub vocab_hash: u64,
    pub assignments: Vec<(String, Option<String>)>,
    pub prompt: String,
    pub negative: String,
    pub refined: Option<String>,
    pub refine_ok: bool,
}

impl SceneJson {
    pub fn from_scene(scene: &ComposedScene, refined: Option<String>, refine_ok: bool) -> SceneJson {
        SceneJson {
            regime: scene.regime.name().to_string(),
            seed: scene.seed,
            vocab_hash: scene.vocab_hash,
            assignments: scene.assignments.clone(),
            prompt: scene.prompt.clone(),
            negative: scene.negative.clone(),
            refined,
            refine_ok,
        }
    }
}

/// A loss report rendered as JSON.
#[derive(Serialize)]
pub struct LossReportJson {
    pub terms: Vec<(String, f64)>,
    pub total: f64,
}

pub fn loss_report_json(report: &avatar_core::losses::LossReport) -> LossReportJson {
    LossReportJson {
        terms: report.terms.clone(),
        total: report.total,
    }
}

/// Default test camera: in front of a subject standing around y in
/// [0.4, 1.8] facing +z, world y-up mapped to pixel y-down.
pub fn default_front_camera() -> PinholeCamera {
    PinholeCamera::new(
        500.0,
        500.0,
        256.0,
        256.0,
        512,
        512,
        Mat3 { m: [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]] },
        Vec3::new(0.0, 1.1, 2.5),
    )
    .expect("default camera is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_roundtrip() {
        let dir = std::env::temp_dir().join("avatar_jsonio_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("cam.json");
        let cam = default_front_camera();
        write_camera(&p, &cam).unwrap();
        let back = read_camera(&p).unwrap();
        assert_eq!(back, cam);
    }

    #[test]
    fn rejects_invalid_rotation() {
        let bad = CameraJson {
            fx: 100.0,
            fy: 100.0,
            cx: 10.0,
            cy: 10.0,
            width: 20,
            height: 20,
            r: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0],
            t: [0.0; 3],
        };
        assert!(bad.to_camera().is_err());
    }

    #[test]
    fn params_roundtrip() {
        let dir = std::env::temp_dir().join("avatar_jsonio_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("params.json");
        let body = avatar_core::skin::tube_body();
        let layout = avatar_core::tracker::ParamLayout::of(&body);
        let mut params = layout.zero_params();
        params.theta_body[3] = [0.1, -0.2, 0.3];
        params.beta = vec![0.5, -0.5];
        params.psi = vec![0.25];
        params.t = [1.0, 2.0, 3.0];
        write_params(&p, &params).unwrap();
        assert_eq!(read_params(&p).unwrap(), params);
    }
}
