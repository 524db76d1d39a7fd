//! `avatar` command-line interface.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use avatar_cli::commands::{
    self, ComposePromptsArgs, FitPoseArgs, RenderArgs, RoundtripArgs, StageSelect,
};
use avatar_cli::config::PipelineConfig;
use avatar_cli::{CliError, Result};
use avatar_core::sampler::Regime;
use avatar_core::tracker::ViewKind;

#[derive(Parser)]
#[command(
    name = "avatar",
    about = "Geometry-aligned UV scattering, Gaussian avatar rendering, and proxy-mesh fitting",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline configuration JSON; flags override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(path) => PipelineConfig::load(path),
            None => Ok(PipelineConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print mesh statistics as JSON.
    MeshInfo { mesh: PathBuf },
    /// Draw area-uniform surface samples into a tensor file.
    SampleSurface {
        mesh: PathBuf,
        #[arg(long, default_value_t = 10000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rasterize a mesh to a depth tensor (and optional silhouette PGM).
    Rasterize {
        mesh: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        silhouette: Option<PathBuf>,
    },
    /// Scatter image features into core and shell UV grids.
    EncodeUv {
        mesh: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        /// Image features: a rank-3 tensor file or a PPM image.
        #[arg(long)]
        features: PathBuf,
        /// Output prefix; writes <prefix>.core.tnsr, <prefix>.shell.tnsr and
        /// the two coverage PGMs.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        shell_grid: Option<usize>,
        /// Shell offset in meters (default: 2% of the bbox diagonal).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Render a Gaussian set (optionally rigged to a posed body).
    Render {
        #[arg(long)]
        gaussians: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alpha: Option<PathBuf>,
        /// Rig file for posing.
        #[arg(long)]
        rig: Option<PathBuf>,
        /// Use the built-in articulated tube body as the rig.
        #[arg(long, default_value_t = false)]
        tube: bool,
        /// Body parameters JSON (requires --rig or --tube).
        #[arg(long)]
        pose: Option<PathBuf>,
        /// Canonical mesh the anchors refer to (static render).
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Background color "r,g,b" in [0,1].
        #[arg(long, default_value = "0,0,0")]
        background: String,
    },
    /// Three-stage proxy-mesh refinement from keypoints and a mask.
    FitPose {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        keypoints: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long, value_enum)]
        stage: StageArg,
        #[arg(long, value_enum, default_value_t = ViewArg::Front)]
        view: ViewArg,
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV (stage, step, loss).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        rig: Option<PathBuf>,
        /// Dense head-vertex targets JSON.
        #[arg(long)]
        dense_head: Option<PathBuf>,
        /// Dense hand-vertex targets JSON.
        #[arg(long)]
        dense_hand: Option<PathBuf>,
        /// Canonicalize the camera to this horizontal FoV (degrees) first.
        #[arg(long)]
        canonical_fov: Option<f64>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Sample factorized scene descriptions as JSON lines.
    ComposePrompts {
        #[arg(long, value_enum)]
        regime: RegimeArg,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Vocabulary JSON (defaults to the built-in vocabulary).
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Output file (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// External refinement command; receives the prompt on stdin.
        #[arg(long)]
        refine_cmd: Option<String>,
    },
    /// Texture round trip: render, scatter back to UV, compare.
    Roundtrip {
        mesh: PathBuf,
        #[arg(long)]
        texture: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the intermediate textured render.
        #[arg(long)]
        render: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long, default_value_t = 0.05)]
        mae_threshold: f64,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        config: ConfigArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Body,
    Head,
    Hand,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ViewArg {
    Front,
    Left,
    Right,
    Back,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Outfit,
    Role,
}

fn parse_background(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::format("background must be r,g,b"));
    }
    let mut bg = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        bg[i] = p
            .trim()
            .parse()
            .map_err(|_| CliError::format("background must be numeric r,g,b"))?;
    }
    Ok(bg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::MeshInfo { mesh } => {
            println!("{}", commands::cmd_mesh_info(&mesh)?);
            Ok(())
        }
        Command::SampleSurface { mesh, count, seed, out } => {
            commands::cmd_sample_surface(&mesh, count, seed, &out)
        }
        Command::Rasterize { mesh, camera, out, silhouette } => {
            commands::cmd_rasterize(&mesh, &camera, &out, silhouette.as_deref())
        }
        Command::EncodeUv {
            mesh,
            camera,
            features,
            out,
            grid,
            shell_grid,
            delta,
            samples,
            seed,
            config,
        } => {
            let mut cfg = config.load()?;
            if let Some(g) = grid {
                cfg.core_grid = g;
            }
            if let Some(g) = shell_grid {
                cfg.shell_grid = g;
            }
            if delta.is_some() {
                cfg.delta = delta;
            }
            if let Some(s) = samples {
                cfg.samples = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            commands::cmd_encode_uv(&mesh, &camera, &features, &out, &cfg)
        }
        Command::Render {
            gaussians,
            camera,
            out,
            alpha,
            rig,
            tube,
            pose,
            mesh,
            background,
        } => commands::cmd_render(&RenderArgs {
            gaussians,
            camera,
            out,
            alpha_out: alpha,
            rig,
            use_tube: tube,
            pose,
            mesh,
            background: parse_background(&background)?,
        }),
        Command::FitPose {
            init,
            keypoints,
            mask,
            camera,
            stage,
            view,
            out,
            trace,
            rig,
            dense_head,
            dense_hand,
            canonical_fov,
            config,
        } => {
            let cfg = config.load()?;
            commands::cmd_fit_pose(
                &FitPoseArgs {
                    init,
                    keypoints,
                    mask,
                    camera,
                    stage: match stage {
                        StageArg::Body => StageSelect::Body,
                        StageArg::Head => StageSelect::Head,
                        StageArg::Hand => StageSelect::Hand,
                        StageArg::All => StageSelect::All,
                    },
                    view: match view {
                        ViewArg::Front => ViewKind::Front,
                        ViewArg::Left => ViewKind::Left,
                        ViewArg::Right => ViewKind::Right,
                        ViewArg::Back => ViewKind::Back,
                    },
                    out,
                    trace_out: trace,
                    rig,
                    dense_head,
                    dense_hand,
                    canonical_fov,
                },
                &cfg,
            )
        }
        Command::ComposePrompts { regime, count, seed, vocab, out, refine_cmd } => {
            let args = ComposePromptsArgs {
                regime: match regime {
                    RegimeArg::Outfit => Regime::Outfit,
                    RegimeArg::Role => Regime::Role,
                },
                count,
                seed,
                vocab,
                refine_cmd,
            };
            match out {
                Some(path) => {
                    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
                    commands::cmd_compose_prompts(&args, &mut file)?;
                    file.flush()?;
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    commands::cmd_compose_prompts(&args, &mut lock)?;
                }
            }
            Ok(())
        }
        Command::Roundtrip {
            mesh,
            texture,
            camera,
            out,
            render,
            grid,
            mae_threshold,
            samples,
            seed,
            config,
        } => {
            let mut cfg = config.load()?;
            if let Some(s) = samples {
                cfg.samples = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let report = commands::cmd_roundtrip(
                &RoundtripArgs {
                    mesh,
                    texture,
                    camera,
                    out,
                    render_out: render,
                    grid,
                    mae_threshold,
                },
                &cfg,
            )?;
            println!(
                "covered {} texels; {:.2}% within {} MAE (mean {:.4})",
                report.covered_texels,
                report.fraction_within * 100.0,
                mae_threshold,
                report.mean_mae
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
