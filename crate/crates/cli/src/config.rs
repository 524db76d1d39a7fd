//! Pipeline configuration: grid sizes, scattering and visibility knobs,
//! loss weights, stage weights, and optimizer settings. Loaded from JSON
//! (every field optional) and validated against documented ranges; CLI
//! flags override individual fields.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use avatar_core::losses::RegWeights;
use avatar_core::tracker::{AdamConfig, StageWeights};
use avatar_core::uvscatter::{EncodeConfig, Kernel};

use crate::{CliError, Result};

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub core_grid: usize,
    pub shell_grid: usize,
    /// Shell offset in meters; `None` means `delta_rel` times the rest-mesh
    /// bounding-box diagonal.
    pub delta: Option<f64>,
    pub delta_rel: f64,
    pub eps: f64,
    pub eps_rel: f64,
    pub vis_supersample: u32,
    pub kernel: Kernel,
    pub samples: usize,
    pub seed: u64,
    pub loss_weights: RegWeights,
    pub stage_body: StageWeights,
    pub stage_head: StageWeights,
    pub stage_hand: StageWeights,
    pub adam: AdamConfig,
    pub steps_body: usize,
    pub steps_head: usize,
    pub steps_hand: usize,
    pub gmof_sigma: f64,
    pub conf_thresh: f64,
    pub exclude_wrists: bool,
    pub alpha_ref: f64,
    pub ratio_bound: f64,
    pub patch_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            core_grid: 512,
            shell_grid: 128,
            delta: None,
            delta_rel: 0.02,
            eps: avatar_core::uvscatter::DEFAULT_SCATTER_EPS,
            eps_rel: avatar_core::raster::DEFAULT_EPS_REL,
            vis_supersample: 2,
            kernel: Kernel::Nearest,
            samples: 200_000,
            seed: 0,
            loss_weights: RegWeights::default(),
            stage_body: StageWeights::body(),
            stage_head: StageWeights::head(),
            stage_hand: StageWeights::hand(),
            adam: AdamConfig::default(),
            steps_body: 300,
            steps_head: 200,
            steps_hand: 200,
            gmof_sigma: 100.0,
            conf_thresh: 0.6,
            exclude_wrists: false,
            alpha_ref: 0.8,
            ratio_bound: 9.0,
            patch_size: 8,
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileStageWeights {
    reproj: Option<f64>,
    reg: Option<f64>,
    mask: Option<f64>,
    up: Option<f64>,
    smo: Option<f64>,
    head: Option<f64>,
    hand: Option<f64>,
}

impl FileStageWeights {
    fn apply(&self, base: &mut StageWeights) {
        if let Some(v) = self.reproj {
            base.reproj = v;
        }
        if let Some(v) = self.reg {
            base.reg = v;
        }
        if let Some(v) = self.mask {
            base.mask = v;
        }
        if let Some(v) = self.up {
            base.up = v;
        }
        if let Some(v) = self.smo {
            base.smo = v;
        }
        if let Some(v) = self.head {
            base.head = v;
        }
        if let Some(v) = self.hand {
            base.hand = v;
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    core_grid: Option<usize>,
    shell_grid: Option<usize>,
    delta: Option<f64>,
    delta_rel: Option<f64>,
    eps: Option<f64>,
    eps_rel: Option<f64>,
    vis_supersample: Option<u32>,
    kernel: Option<String>,
    samples: Option<usize>,
    seed: Option<u64>,
    loss_weights: Option<FileRegWeights>,
    stage_body: Option<FileStageWeights>,
    stage_head: Option<FileStageWeights>,
    stage_hand: Option<FileStageWeights>,
    adam: Option<FileAdam>,
    steps_body: Option<usize>,
    steps_head: Option<usize>,
    steps_hand: Option<usize>,
    gmof_sigma: Option<f64>,
    conf_thresh: Option<f64>,
    exclude_wrists: Option<bool>,
    alpha_ref: Option<f64>,
    ratio_bound: Option<f64>,
    patch_size: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileRegWeights {
    offset: Option<f64>,
    scale: Option<f64>,
    ratio: Option<f64>,
    hand: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileAdam {
    lr: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    eps: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let raw: FileConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        let mut cfg = PipelineConfig::default();
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = raw.$field { cfg.$field = v; })*
            };
        }
        set!(
            core_grid,
            shell_grid,
            delta_rel,
            eps,
            eps_rel,
            vis_supersample,
            samples,
            seed,
            steps_body,
            steps_head,
            steps_hand,
            gmof_sigma,
            conf_thresh,
            exclude_wrists,
            alpha_ref,
            ratio_bound,
            patch_size
        );
        if raw.delta.is_some() {
            cfg.delta = raw.delta;
        }
        if let Some(k) = raw.kernel {
            cfg.kernel = match k.as_str() {
                "nearest" => Kernel::Nearest,
                "tent" => Kernel::Tent,
                other => {
                    return Err(CliError::format(format!(
                        "unknown kernel {other:?} (expected nearest|tent)"
                    )))
                }
            };
        }
        if let Some(w) = raw.loss_weights {
            if let Some(v) = w.offset {
                cfg.loss_weights.offset = v;
            }
            if let Some(v) = w.scale {
                cfg.loss_weights.scale = v;
            }
            if let Some(v) = w.ratio {
                cfg.loss_weights.ratio = v;
            }
            if let Some(v) = w.hand {
                cfg.loss_weights.hand = v;
            }
            if let Some(v) = w.alpha {
                cfg.loss_weights.alpha = v;
            }
        }
        if let Some(w) = raw.stage_body {
            w.apply(&mut cfg.stage_body);
        }
        if let Some(w) = raw.stage_head {
            w.apply(&mut cfg.stage_head);
        }
        if let Some(w) = raw.stage_hand {
            w.apply(&mut cfg.stage_hand);
        }
        if let Some(a) = raw.adam {
            if let Some(v) = a.lr {
                cfg.adam.lr = v;
            }
            if let Some(v) = a.beta1 {
                cfg.adam.beta1 = v;
            }
            if let Some(v) = a.beta2 {
                cfg.adam.beta2 = v;
            }
            if let Some(v) = a.eps {
                cfg.adam.eps = v;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 10] = [
            (self.core_grid >= 1 && self.core_grid <= 8192, "core_grid in [1, 8192]"),
            (self.shell_grid >= 1 && self.shell_grid <= 8192, "shell_grid in [1, 8192]"),
            (self.delta.unwrap_or(0.0) >= 0.0, "delta >= 0"),
            (self.delta_rel >= 0.0 && self.delta_rel <= 1.0, "delta_rel in [0, 1]"),
            (self.eps > 0.0, "eps > 0"),
            (self.eps_rel >= 0.0, "eps_rel >= 0"),
            (self.samples >= 1, "samples >= 1"),
            (self.gmof_sigma > 0.0, "gmof_sigma > 0"),
            (self.conf_thresh >= 0.0 && self.conf_thresh <= 1.0, "conf_thresh in [0, 1]"),
            (self.alpha_ref > 0.0 && self.alpha_ref < 1.0, "alpha_ref in (0, 1)"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(CliError::format(format!("config: {msg}")));
            }
        }
        Ok(())
    }

    pub fn encode_config(&self) -> EncodeConfig {
        EncodeConfig {
            kernel: self.kernel,
            eps: self.eps,
            eps_rel: self.eps_rel,
            vis_supersample: self.vis_supersample,
        }
    }
}
