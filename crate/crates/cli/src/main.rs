//! Command-line entry point. Each subcommand builds a run configuration,
//! writes it as `config.json` into `--out` and executes it; `rerun` replays
//! such a snapshot.
//!
//! Exit codes: 0 success, 1 user error (bad flags, inputs or files),
//! 2 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use cinectx::dit::{ModelConfig, TrainConfig};
use cinectx::geometry::TranslationScale;
use cinectx::io::read_json;
use cinectx::metrics::SsimWindow;
use cinectx::runs::{EvalRun, ProjectRun, RunConfig, SampleRun, TrainRun, TrajRun};
use cinectx::scene::{DatasetConfig, FrameFormat, PairConfig};
use cinectx::trajectory_gen::{Direction, MovementKind};
use cinectx::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "cinectx", version, about = "Scene-conditioned camera-controlled video generation at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render paired videos (with and without the subject), masks,
    /// panoramas and trajectories.
    Dataset(DatasetArgs),
    /// Cut perspective context views out of a panorama.
    Project(ProjectArgs),
    /// Write one camera trajectory and its metadata.
    GenTraj(GenTrajArgs),
    /// Train the diffusion model on a dataset.
    Train(TrainArgs),
    /// Generate a video from a checkpoint, context views and a trajectory.
    Sample(SampleArgs),
    /// Score a generated video against a reference.
    Eval(EvalArgs),
    /// Run again from a `config.json` snapshot.
    Rerun(RerunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tensor,
    Png,
}

impl From<Format> for FrameFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Tensor => FrameFormat::Tensor,
            Format::Png => FrameFormat::Png,
        }
    }
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    out: PathBuf,
    /// Number of pairs (full scale: 46K).
    #[arg(long, default_value_t = 64)]
    pairs: usize,
    /// Distinct scenes the pairs cycle through.
    #[arg(long, default_value_t = 8)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frames per video (full scale: 77).
    #[arg(long, default_value_t = 9)]
    frames: usize,
    /// Must divide by 16.
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Must divide by 16.
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Panorama height in pixels; width is twice this.
    #[arg(long, default_value_t = 256)]
    pano_h: usize,
    #[arg(long, value_enum, default_value_t = Format::Tensor)]
    format: Format,
}

#[derive(Args)]
struct ProjectArgs {
    /// Equirectangular panorama (.png or .ctn).
    #[arg(long)]
    panorama: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of views, evenly spaced in yaw.
    #[arg(long, default_value_t = 20)]
    views: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Yaw of view 0 in degrees.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    start_yaw: f64,
    #[arg(long, value_enum, default_value_t = Format::Png)]
    format: Format,
}

#[derive(Args)]
struct GenTrajArgs {
    /// pan, tilt, arc_horizontal, arc_vertical, dolly, truck or pedestal.
    #[arg(long, value_parser = parse_kind)]
    kind: MovementKind,
    /// left/right, up/down or forward/backward; defaults to the first.
    #[arg(long, value_parser = parse_direction)]
    direction: Option<Direction>,
    /// Degrees, or a distance factor for dolly, truck and pedestal.
    #[arg(long)]
    magnitude: Option<f64>,
    #[arg(long, default_value_t = 77)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// JSON file with optional `model` and `train` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Optimiser steps (full scale: 10K).
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train with context views in their original order.
    #[arg(long)]
    no_shuffle: bool,
    #[arg(long, default_value_t = 10)]
    log_every: usize,
    /// Checkpoint path; its directory receives the log and snapshot.
    #[arg(long, conflicts_with = "out")]
    ckpt_out: Option<PathBuf>,
    /// Output directory (checkpoint written as checkpoint.ctb).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    /// Output directory of `project`.
    #[arg(long)]
    context_dir: PathBuf,
    /// Precomputed implicit features (.ctb).
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    prompt_tag: usize,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Time-grid shift; 1 keeps uniform steps.
    #[arg(long, default_value_t = 1.0)]
    shift: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Window {
    Uniform8,
    Gaussian11,
}

#[derive(Args)]
struct EvalArgs {
    /// Tensor file or directory of PNG frames.
    #[arg(long)]
    generated: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, requires = "ref_traj")]
    gen_traj: Option<PathBuf>,
    #[arg(long, requires = "gen_traj")]
    ref_traj: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Window::Uniform8)]
    ssim_window: Window,
    /// Divide translations by the reference path length.
    #[arg(long)]
    scale_by_path: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RerunArgs {
    /// A config.json written by an earlier run.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_kind(s: &str) -> Result<MovementKind, String> {
    MovementKind::parse(s).ok_or_else(|| format!("unknown movement kind {s:?}"))
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    Direction::parse(s).ok_or_else(|| format!("unknown direction {s:?}"))
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct TrainFile {
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
}

fn train_run(a: TrainArgs) -> Result<(RunConfig, PathBuf), Error> {
    let file: TrainFile = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainFile::default(),
    };
    let mut run = TrainRun {
        dataset: a.dataset,
        log_every: a.log_every,
        ..TrainRun::default()
    };
    if let Some(m) = file.model {
        run.model = m;
    }
    if let Some(t) = file.train {
        run.train = t;
    }
    if let Some(s) = a.steps {
        run.train.steps = s;
    }
    if let Some(s) = a.seed {
        run.train.seed = s;
        run.model.seed = s;
    }
    if a.no_shuffle {
        run.train.shuffle_context = false;
    }
    // Frame count and resolution always come from the dataset.
    run.fit_to_dataset()?;
    let out = match (a.ckpt_out, a.out) {
        (Some(c), _) => {
            let name = c
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Config(format!("bad checkpoint path {}", c.display())))?;
            run.checkpoint_name = name.to_string();
            match c.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            }
        }
        (None, Some(o)) => o,
        (None, None) => return Err(Error::Config("give --out or --ckpt-out".into())),
    };
    Ok((RunConfig::Train(run), out))
}

fn build(command: Command) -> Result<(RunConfig, PathBuf), Error> {
    Ok(match command {
        Command::Dataset(a) => (
            RunConfig::Dataset(DatasetConfig {
                pairs: a.pairs,
                scenes: a.scenes,
                seed: a.seed,
                pair: PairConfig {
                    frames: a.frames,
                    width: a.width,
                    height: a.height,
                    pano_h: a.pano_h,
                    ..PairConfig::default()
                },
                frame_format: a.format.into(),
            }),
            a.out,
        ),
        Command::Project(a) => (
            RunConfig::Project(ProjectRun {
                panorama: a.panorama,
                views: a.views,
                width: a.width,
                height: a.height,
                start_yaw: a.start_yaw,
                format: a.format.into(),
            }),
            a.out,
        ),
        Command::GenTraj(a) => (
            RunConfig::GenTraj(TrajRun {
                kind: a.kind,
                direction: a.direction,
                magnitude: a.magnitude,
                frames: a.frames,
                seed: a.seed,
                ..TrajRun::default()
            }),
            a.out,
        ),
        Command::Train(a) => train_run(a)?,
        Command::Sample(a) => (
            RunConfig::Sample(SampleRun {
                checkpoint: a.ckpt,
                trajectory: a.trajectory,
                context_dir: a.context_dir,
                features: a.features,
                prompt_tag: a.prompt_tag,
                steps: a.steps,
                seed: a.seed,
                shift: a.shift,
                ..SampleRun::default()
            }),
            a.out,
        ),
        Command::Eval(a) => (
            RunConfig::Eval(EvalRun {
                generated: a.generated,
                reference: a.reference,
                gen_traj: a.gen_traj,
                ref_traj: a.ref_traj,
                ssim_window: match a.ssim_window {
                    Window::Uniform8 => SsimWindow::Uniform8,
                    Window::Gaussian11 => SsimWindow::Gaussian11,
                },
                translation_scale: if a.scale_by_path {
                    TranslationScale::ReferencePathLength
                } else {
                    TranslationScale::Raw
                },
            }),
            a.out,
        ),
        Command::Rerun(a) => (RunConfig::read_snapshot(&a.config)?, a.out),
    })
}

/// Errors that come from the environment rather than the user's input.
fn is_internal(e: &Error) -> bool {
    match e {
        Error::Io { source, .. } => !matches!(
            source.kind(),
            std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied | std::io::ErrorKind::AlreadyExists
        ),
        Error::NotARotation(_) => true,
        _ => false,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = std::panic::catch_unwind(|| {
        build(cli.command).and_then(|(run, out)| {
            let lines = run.execute(&out)?;
            Ok((run, lines))
        })
    });
    match result {
        Err(_) => ExitCode::from(2),
        Ok(Ok((run, lines))) => {
            for l in lines {
                println!("{}: {l}", run.name());
            }
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_internal(&e) { 2 } else { 1 })
        }
    }
}
