//! End-to-end runs behind the command-line tool.
//!
//! Every run is described by a serialisable [`RunConfig`]. Executing a run
//! writes its outputs into one directory together with a `config.json`
//! snapshot; executing the snapshot again reproduces the outputs byte for
//! byte.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dit::{
    sample, training_step, Conditioning, DiffusionState, ModelConfig, TrainConfig, TrainingExample,
};
use crate::encoder::{EncoderBackend, FileEncoder, ToyEncoder};
use crate::error::{Error, Result};
use crate::geometry::{normalize_trajectory, Trajectory, TranslationScale, Vec3, DEFAULT_FRAME_COUNT};
use crate::image::Video;
use crate::io::{read_image, read_json, write_json, write_png, RawTensor};
use crate::metrics::{evaluate, EvalOptions, EvalReport, SsimWindow};
use crate::panorama::{
    scene_context_from_panorama, Panorama, PerspectiveView, SceneContextSet, CONTEXT_FOV_DEG, DEFAULT_CONTEXT_VIEWS,
};
use crate::scene::{build_dataset, load_manifest, load_sample_pair, manifest_path, DatasetConfig, FrameFormat};
use crate::scene::SUBJECT_FOCUS_HEIGHT;
use crate::trajectory_gen::{
    factor_range, generate, start_pose_at, Direction, MovementKind, MovementSpec, AZIMUTH_RANGE_DEG,
    DEFAULT_START_DISTANCE, DEFAULT_SWEEP_DEG, VERTICAL_RANGE_DEG,
};

pub const SNAPSHOT_FILE: &str = "config.json";
pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;
/// Frame sides must divide by this so the model's patch grid fits.
pub const RESOLUTION_MULTIPLE: usize = 16;

fn check_resolution(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width % RESOLUTION_MULTIPLE != 0 || height % RESOLUTION_MULTIPLE != 0 {
        return Err(Error::BadDims(format!(
            "{width}x{height} is not a positive multiple of {RESOLUTION_MULTIPLE} on both sides"
        )));
    }
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Context views written by a projection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextIndex {
    pub format_version: u32,
    pub start_yaw: f64,
    pub width: usize,
    pub height: usize,
    pub views: Vec<ContextIndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextIndexEntry {
    pub file: String,
    pub yaw: f64,
    pub pitch: f64,
    pub fov: f64,
}

pub const CONTEXT_INDEX_FILE: &str = "views.json";

/// Reads the views listed in a projection run's index.
pub fn load_context_dir(dir: impl AsRef<Path>) -> Result<SceneContextSet> {
    let dir = dir.as_ref();
    let index: ContextIndex = read_json(dir.join(CONTEXT_INDEX_FILE))?;
    let views = index
        .views
        .iter()
        .map(|v| {
            Ok(PerspectiveView {
                image: read_image(dir.join(&v.file))?,
                yaw: v.yaw,
                pitch: v.pitch,
                fov: v.fov,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneContextSet {
        views,
        start_yaw: index.start_yaw,
    })
}

/// A video stored as one tensor file or as a directory of PNG frames.
pub fn load_video(path: impl AsRef<Path>) -> Result<Video> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "png"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::EmptyOutput(format!("no PNG frames in {}", path.display())));
        }
        Video::new(files.iter().map(read_image).collect::<Result<Vec<_>>>()?)
    } else {
        Video::from_tensor(&RawTensor::read(path)?).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

fn write_frames(dir: &Path, video: &Video) -> Result<()> {
    create_dir(dir)?;
    for (i, f) in video.frames().iter().enumerate() {
        write_png(dir.join(format!("{i:03}.png")), f)?;
    }
    Ok(())
}

/// Cuts `views` perspective images out of a panorama.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectRun {
    pub panorama: PathBuf,
    pub views: usize,
    pub width: usize,
    pub height: usize,
    /// Degrees; view 0 looks this way.
    pub start_yaw: f64,
    pub format: FrameFormat,
}

impl Default for ProjectRun {
    fn default() -> Self {
        Self {
            panorama: PathBuf::new(),
            views: DEFAULT_CONTEXT_VIEWS,
            width: 64,
            height: 64,
            start_yaw: 0.0,
            format: FrameFormat::Png,
        }
    }
}

impl ProjectRun {
    pub fn validate(&self) -> Result<()> {
        check_resolution(self.width, self.height)?;
        if self.views == 0 {
            return Err(Error::Config("views must be at least 1".into()));
        }
        Ok(())
    }

    fn execute(&self, out: &Path) -> Result<Vec<String>> {
        let img = read_image(&self.panorama).map_err(|e| match e {
            Error::Io { .. } | Error::Parse { .. } => e,
            other => Error::Parse {
                path: self.panorama.clone(),
                message: other.to_string(),
            },
        })?;
        let pano = Panorama::new(img).map_err(|e| Error::Parse {
            path: self.panorama.clone(),
            message: e.to_string(),
        })?;
        let set = scene_context_from_panorama(&pano, self.start_yaw, self.views, self.width, self.height)?;
        let mut entries = Vec::with_capacity(set.len());
        for (i, v) in set.views.iter().enumerate() {
            let file = match self.format {
                FrameFormat::Png => {
                    let f = format!("view_{i:02}.png");
                    write_png(out.join(&f), &v.image)?;
                    f
                }
                FrameFormat::Tensor => {
                    let f = format!("view_{i:02}.ctn");
                    v.image.to_tensor().write(out.join(&f))?;
                    f
                }
            };
            entries.push(ContextIndexEntry {
                file,
                yaw: v.yaw,
                pitch: v.pitch,
                fov: v.fov,
            });
        }
        let index = ContextIndex {
            format_version: 1,
            start_yaw: self.start_yaw,
            width: self.width,
            height: self.height,
            views: entries,
        };
        write_json(out.join(CONTEXT_INDEX_FILE), &index)?;
        Ok(vec![format!(
            "wrote {} views ({}° apart, {}° field of view) to {}",
            index.views.len(),
            360.0 / self.views as f64,
            CONTEXT_FOV_DEG,
            out.display()
        )])
    }
}

/// One camera movement around a subject at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajRun {
    pub kind: MovementKind,
    /// First legal direction of the kind when absent.
    pub direction: Option<Direction>,
    /// Drawn from the seed within the legal range when absent; pan and
    /// horizontal arc default to the standard sweep.
    pub magnitude: Option<f64>,
    pub frames: usize,
    pub seed: u64,
    pub start_distance: f64,
}

impl Default for TrajRun {
    fn default() -> Self {
        Self {
            kind: MovementKind::Pan,
            direction: None,
            magnitude: None,
            frames: DEFAULT_FRAME_COUNT,
            seed: 0,
            start_distance: DEFAULT_START_DISTANCE,
        }
    }
}

/// Sidecar of a generated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub kind: MovementKind,
    pub direction: Direction,
    pub magnitude: f64,
    pub frames: usize,
    pub seed: u64,
    pub start_azimuth_deg: f64,
}

impl TrajRun {
    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.direction {
            if !self.kind.directions().contains(&d) {
                return Err(Error::BadDirection {
                    kind: self.kind.to_string(),
                    direction: d.to_string(),
                });
            }
        }
        if self.frames < 2 {
            return Err(Error::Config("a trajectory needs at least 2 frames".into()));
        }
        Ok(())
    }

    /// The movement spec and trajectory this run describes.
    pub fn build(&self) -> Result<(TrajectoryMeta, Trajectory)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let azimuth = rng.random_range(AZIMUTH_RANGE_DEG.0..=AZIMUTH_RANGE_DEG.1);
        let direction = self.direction.unwrap_or(self.kind.directions()[0]);
        let magnitude = match self.magnitude {
            Some(m) => m,
            None => match self.kind {
                MovementKind::Pan | MovementKind::ArcHorizontal => DEFAULT_SWEEP_DEG,
                MovementKind::Tilt | MovementKind::ArcVertical => {
                    rng.random_range(VERTICAL_RANGE_DEG.0..=VERTICAL_RANGE_DEG.1)
                }
                _ => {
                    let (lo, hi) = factor_range(self.kind, direction).expect("direction checked");
                    rng.random_range(lo..=hi)
                }
            },
        };
        let subject = Vec3::new(0.0, SUBJECT_FOCUS_HEIGHT, 0.0);
        let start = start_pose_at(subject, &Vec3::z(), azimuth, self.start_distance)?;
        let spec = MovementSpec::new(self.kind, direction, magnitude, start)
            .with_frames(self.frames)
            .with_subject(subject);
        let traj = generate(&spec)?;
        let meta = TrajectoryMeta {
            kind: self.kind,
            direction,
            magnitude,
            frames: self.frames,
            seed: self.seed,
            start_azimuth_deg: azimuth,
        };
        Ok((meta, traj))
    }

    fn execute(&self, out: &Path) -> Result<Vec<String>> {
        let (meta, traj) = self.build()?;
        traj.write(out.join("trajectory.json"))?;
        write_json(out.join("trajectory_meta.json"), &meta)?;
        Ok(vec![format!(
            "{} {} by {} over {} frames -> {}",
            meta.kind,
            meta.direction,
            meta.magnitude,
            meta.frames,
            out.join("trajectory.json").display()
        )])
    }
}

/// Trains the diffusion model on every pair of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRun {
    pub dataset: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Write a log line every this many steps (and after the last one).
    pub log_every: usize,
    /// Seed of the reference feature encoder.
    pub encoder_seed: u64,
    pub checkpoint_name: String,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            model: ModelConfig::default(),
            train: TrainConfig {
                steps: 2000,
                ..TrainConfig::default()
            },
            log_every: 10,
            encoder_seed: 0,
            checkpoint_name: "checkpoint.ctb".into(),
        }
    }
}

pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

impl TrainRun {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        check_resolution(self.model.width, self.model.height)?;
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if self.checkpoint_name.is_empty() || self.checkpoint_name.contains(['/', '\\']) {
            return Err(Error::Config(format!("bad checkpoint name {:?}", self.checkpoint_name)));
        }
        Ok(())
    }

    /// Copies frame count and resolution from the dataset manifest.
    pub fn fit_to_dataset(&mut self) -> Result<()> {
        let m = load_manifest(&self.dataset)?;
        self.model.frames = m.config.pair.frames;
        self.model.width = m.config.pair.width;
        self.model.height = m.config.pair.height;
        Ok(())
    }

    pub fn examples(&self) -> Result<Vec<TrainingExample>> {
        let m = load_manifest(&self.dataset)?;
        if m.entries.is_empty() {
            return Err(Error::Config(format!("{} lists no pairs", manifest_path(&self.dataset).display())));
        }
        let encoder = ToyEncoder::new(self.model.implicit_dim, self.model.implicit_grid, self.encoder_seed);
        m.entries
            .iter()
            .map(|e| TrainingExample::from_pair(&self.model, &load_sample_pair(&self.dataset, e)?, &encoder))
            .collect()
    }

    fn execute(&self, out: &Path) -> Result<Vec<String>> {
        let examples = self.examples()?;
        let mut state = DiffusionState::new(self.model.clone(), self.train.clone())?;
        let log_path = out.join(TRAIN_LOG_FILE);
        let mut log = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        let mut last = None;
        for i in 0..self.train.steps {
            let step = training_step(&mut state, &examples)?;
            if (i + 1) % self.log_every == 0 || i + 1 == self.train.steps {
                let line = serde_json::to_string(&step)?;
                writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))?;
            }
            last = Some(step);
        }
        let ckpt = out.join(&self.checkpoint_name);
        state.save(&ckpt)?;
        let mut lines = vec![format!(
            "trained {} steps on {} pairs; checkpoint {}",
            self.train.steps,
            examples.len(),
            ckpt.display()
        )];
        if let Some(s) = last {
            lines.push(format!("final loss {:.6}", s.loss));
        }
        Ok(lines)
    }
}

/// Generates a video from a checkpoint, a trajectory and context views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleRun {
    pub checkpoint: PathBuf,
    pub trajectory: PathBuf,
    pub context_dir: PathBuf,
    /// Precomputed features; the reference encoder is used when absent.
    pub features: Option<PathBuf>,
    pub encoder_seed: u64,
    pub prompt_tag: usize,
    pub steps: usize,
    pub seed: u64,
    pub shift: f64,
}

impl Default for SampleRun {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::new(),
            trajectory: PathBuf::new(),
            context_dir: PathBuf::new(),
            features: None,
            encoder_seed: 0,
            prompt_tag: 0,
            steps: 50,
            seed: 0,
            shift: 1.0,
        }
    }
}

impl SampleRun {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(self.shift > 0.0) {
            return Err(Error::Config(format!("shift must be positive, got {}", self.shift)));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Video> {
        let state = DiffusionState::load(&self.checkpoint)?;
        let config = &state.config;
        let traj = Trajectory::read(&self.trajectory)?;
        let views = load_context_dir(&self.context_dir)?;
        let feats = match &self.features {
            Some(path) => FileEncoder::open(path)?.encode(&views)?,
            None => ToyEncoder::new(config.implicit_dim, config.implicit_grid, self.encoder_seed).encode(&views)?,
        };
        let cond = Conditioning::new(config, &views, &feats, &normalize_trajectory(&traj), self.prompt_tag)?;
        sample(config, &state.params, &cond, self.steps, self.seed, self.shift)
    }

    fn execute(&self, out: &Path) -> Result<Vec<String>> {
        let video = self.generate()?;
        video.to_tensor().write(out.join("video.ctn"))?;
        write_frames(&out.join("frames"), &video)?;
        let (f, h, w) = video.dims();
        Ok(vec![format!("sampled {f} frames at {w}x{h} into {}", out.display())])
    }
}

/// Compares a generated video (and trajectory) with a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalRun {
    pub generated: PathBuf,
    pub reference: PathBuf,
    pub gen_traj: Option<PathBuf>,
    pub ref_traj: Option<PathBuf>,
    pub ssim_window: SsimWindow,
    pub translation_scale: TranslationScale,
}

impl Default for EvalRun {
    fn default() -> Self {
        Self {
            generated: PathBuf::new(),
            reference: PathBuf::new(),
            gen_traj: None,
            ref_traj: None,
            ssim_window: SsimWindow::Uniform8,
            translation_scale: TranslationScale::Raw,
        }
    }
}

pub const REPORT_FILE: &str = "report.json";

impl EvalRun {
    pub fn validate(&self) -> Result<()> {
        if self.gen_traj.is_some() != self.ref_traj.is_some() {
            return Err(Error::Config("give both trajectories or neither".into()));
        }
        Ok(())
    }

    pub fn report(&self) -> Result<EvalReport> {
        let generated = load_video(&self.generated)?;
        let reference = load_video(&self.reference)?;
        let trajs = match (&self.gen_traj, &self.ref_traj) {
            (Some(g), Some(r)) => Some((Trajectory::read(g)?, Trajectory::read(r)?)),
            _ => None,
        };
        let options = EvalOptions {
            ssim_window: self.ssim_window,
            translation_scale: self.translation_scale,
        };
        evaluate(&generated, &reference, trajs.as_ref().map(|(g, r)| (g, r)), &options)
    }

    fn execute(&self, out: &Path) -> Result<Vec<String>> {
        let report = self.report()?;
        report.write(out.join(REPORT_FILE))?;
        let mut line = format!("psnr {} dB, ssim {:.6}", fmt_db(report.psnr), report.ssim);
        if let Some(p) = report.pose {
            line.push_str(&format!(
                ", RotErr {:.4}°, TransErr {:.4}, CamMC {:.4}",
                p.rot_err, p.trans_err, p.cam_mc
            ));
        }
        Ok(vec![line])
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

/// Any run, tagged by its subcommand name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Dataset(DatasetConfig),
    Project(ProjectRun),
    GenTraj(TrajRun),
    Train(TrainRun),
    Sample(SampleRun),
    Eval(EvalRun),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Snapshot {
    format_version: u32,
    run: RunConfig,
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Dataset(_) => "dataset",
            RunConfig::Project(_) => "project",
            RunConfig::GenTraj(_) => "gen-traj",
            RunConfig::Train(_) => "train",
            RunConfig::Sample(_) => "sample",
            RunConfig::Eval(_) => "eval",
        }
    }

    /// Checks everything that can be checked before touching the disk.
    pub fn validate(&self) -> Result<()> {
        match self {
            RunConfig::Dataset(c) => {
                c.validate()?;
                check_resolution(c.pair.width, c.pair.height)
            }
            RunConfig::Project(c) => c.validate(),
            RunConfig::GenTraj(c) => c.validate(),
            RunConfig::Train(c) => c.validate(),
            RunConfig::Sample(c) => c.validate(),
            RunConfig::Eval(c) => c.validate(),
        }
    }

    /// Validates, creates `out`, writes the snapshot and runs. Returns
    /// human-readable summary lines.
    pub fn execute(&self, out: impl AsRef<Path>) -> Result<Vec<String>> {
        self.validate()?;
        let out = out.as_ref();
        create_dir(out)?;
        self.write_snapshot(out)?;
        match self {
            RunConfig::Dataset(c) => {
                let m = build_dataset(c, out)?;
                Ok(vec![format!(
                    "{} pairs; manifest {}",
                    m.entries.len(),
                    manifest_path(out).display()
                )])
            }
            RunConfig::Project(c) => c.execute(out),
            RunConfig::GenTraj(c) => c.execute(out),
            RunConfig::Train(c) => c.execute(out),
            RunConfig::Sample(c) => c.execute(out),
            RunConfig::Eval(c) => c.execute(out),
        }
    }

    pub fn write_snapshot(&self, out: &Path) -> Result<()> {
        write_json(
            out.join(SNAPSHOT_FILE),
            &Snapshot {
                format_version: SNAPSHOT_FORMAT_VERSION,
                run: self.clone(),
            },
        )
    }

    pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s: Snapshot = read_json(path)?;
        if s.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("unsupported snapshot format_version {}", s.format_version),
            });
        }
        Ok(s.run)
    }
}

/// Frames of a video as 8-bit PNG files `000.png, 001.png, …` in `dir`.
pub fn save_frames(dir: impl AsRef<Path>, video: &Video) -> Result<()> {
    write_frames(dir.as_ref(), video)
}

