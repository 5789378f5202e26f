//! Run configuration: a flat `key = value` file plus command-line overrides.
//!
//! Every key has a default, so an empty file is a complete configuration.
//! `output.dir` and `threads` change where and how fast a run happens but
//! not what it computes; they are left out of the hash.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::detection::AttributeMask;
use crate::detector::ReferenceDetectorConfig;
use crate::error::{Error, Result};
use crate::evaluate::EvalOptions;
use crate::explain::{Ablation, PipelineConfig};
use crate::metrics::EvalThresholds;
use crate::scene::SceneConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSource {
    Reference,
    /// One feature dump per scene, `<dir>/<scene_id>.ffdp`.
    Dumps(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub thresholds: EvalThresholds,
    pub detector: DetectorSource,
    pub reference: ReferenceDetectorConfig,
    /// Directory of KITTI scans with JSON labels; synthetic scenes when `None`.
    pub scenes_dir: Option<PathBuf>,
    pub scene_seed: u64,
    pub scene_count: usize,
    pub single_object: bool,
    pub steps: usize,
    pub mask: AttributeMask,
    pub skip_curves: bool,
    pub aggregate_resolution: usize,
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            thresholds: EvalThresholds::default(),
            detector: DetectorSource::Reference,
            reference: ReferenceDetectorConfig::default(),
            scenes_dir: None,
            scene_seed: 0,
            scene_count: 10,
            single_object: false,
            steps: crate::metrics::DEFAULT_STEPS,
            mask: AttributeMask::ALL,
            skip_curves: false,
            aggregate_resolution: 32,
            output_dir: PathBuf::from("out"),
            threads: 0,
        }
    }
}

/// Keys outside the hash.
const UNHASHED: [&str; 2] = ["output.dir", "threads"];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse '{value}'")))
}

fn path_or_none(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.pipeline;
        let r = &self.reference;
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        vec![
            ("nmf.rank", p.nmf.rank.to_string()),
            ("nmf.max_iterations", p.nmf.max_iterations.to_string()),
            ("nmf.relative_tolerance", format!("{:?}", p.nmf.relative_tolerance)),
            ("nmf.seed", p.nmf.seed.to_string()),
            ("nmf.clamp_negatives", p.nmf.clamp_negatives.to_string()),
            ("nmf.inner_updates", p.nmf.inner_updates.to_string()),
            ("upsample.range", p.upsample.range_threshold.to_string()),
            ("upsample.k", p.upsample.k.to_string()),
            ("pipeline.block", p.block_index.to_string()),
            ("pipeline.ablation", p.ablation.to_string()),
            ("eval.threshold.car", format!("{:?}", self.thresholds.car)),
            ("eval.threshold.pedestrian", format!("{:?}", self.thresholds.pedestrian)),
            ("eval.threshold.cyclist", format!("{:?}", self.thresholds.cyclist)),
            ("eval.steps", self.steps.to_string()),
            ("eval.mask", self.mask.to_string()),
            ("eval.skip_curves", self.skip_curves.to_string()),
            (
                "detector.source",
                match &self.detector {
                    DetectorSource::Reference => "reference".to_string(),
                    DetectorSource::Dumps(d) => d.display().to_string(),
                },
            ),
            ("detector.seed", r.seed.to_string()),
            ("detector.voxel_size", format!("{:?}", r.grid.voxel_size)),
            ("detector.feature_dim", r.feature_dim.to_string()),
            ("detector.activation_threshold", format!("{:?}", r.activation_threshold)),
            ("detector.size_scale", format!("{:?}", r.size_scale)),
            ("detector.score_offset", format!("{:?}", r.score_offset)),
            ("scenes.dir", path(&self.scenes_dir)),
            ("scenes.seed", self.scene_seed.to_string()),
            ("scenes.count", self.scene_count.to_string()),
            ("scenes.single_object", self.single_object.to_string()),
            ("aggregate.resolution", self.aggregate_resolution.to_string()),
            ("output.dir", self.output_dir.display().to_string()),
            ("threads", self.threads.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let p = &mut self.pipeline;
        let r = &mut self.reference;
        match key.trim() {
            "nmf.rank" => p.nmf.rank = parse(key, v)?,
            "nmf.max_iterations" => p.nmf.max_iterations = parse(key, v)?,
            "nmf.relative_tolerance" => p.nmf.relative_tolerance = parse(key, v)?,
            "nmf.seed" => p.nmf.seed = parse(key, v)?,
            "nmf.clamp_negatives" => p.nmf.clamp_negatives = parse(key, v)?,
            "nmf.inner_updates" => p.nmf.inner_updates = parse(key, v)?,
            "upsample.range" => p.upsample.range_threshold = parse(key, v)?,
            "upsample.k" => p.upsample.k = parse(key, v)?,
            "pipeline.block" => p.block_index = parse(key, v)?,
            "pipeline.ablation" => p.ablation = v.parse::<Ablation>()?,
            "eval.threshold.car" => self.thresholds.car = parse(key, v)?,
            "eval.threshold.pedestrian" => self.thresholds.pedestrian = parse(key, v)?,
            "eval.threshold.cyclist" => self.thresholds.cyclist = parse(key, v)?,
            "eval.steps" => self.steps = parse(key, v)?,
            "eval.mask" => self.mask = v.parse()?,
            "eval.skip_curves" => self.skip_curves = parse(key, v)?,
            "detector.source" => {
                self.detector = match v {
                    "reference" => DetectorSource::Reference,
                    _ => DetectorSource::Dumps(PathBuf::from(v)),
                }
            }
            "detector.seed" => r.seed = parse(key, v)?,
            "detector.voxel_size" => r.grid.voxel_size = parse(key, v)?,
            "detector.feature_dim" => r.feature_dim = parse(key, v)?,
            "detector.activation_threshold" => r.activation_threshold = parse(key, v)?,
            "detector.size_scale" => r.size_scale = parse(key, v)?,
            "detector.score_offset" => r.score_offset = parse(key, v)?,
            "scenes.dir" => self.scenes_dir = path_or_none(v),
            "scenes.seed" => self.scene_seed = parse(key, v)?,
            "scenes.count" => self.scene_count = parse(key, v)?,
            "scenes.single_object" => self.single_object = parse(key, v)?,
            "aggregate.resolution" => self.aggregate_resolution = parse(key, v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "threads" => self.threads = parse(key, v)?,
            other => return Err(Error::InvalidConfig(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected 'key = value'", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override '{}' lacks '='", o.as_ref())))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then the overrides; the result is validated.
    pub fn load<S: AsRef<str>>(file: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            cfg.apply_text(&std::fs::read_to_string(path)?)?;
        }
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.thresholds.validate()?;
        self.reference.validate()?;
        if self.steps == 0 {
            return Err(Error::InvalidConfig("eval.steps must be at least 1".into()));
        }
        if self.scene_count == 0 {
            return Err(Error::InvalidConfig("scenes.count must be at least 1".into()));
        }
        if !(2..=1024).contains(&self.aggregate_resolution) {
            return Err(Error::InvalidConfig("aggregate.resolution must lie in 2..=1024".into()));
        }
        Ok(())
    }

    /// The whole configuration as a file `apply_text` reads back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hex sha256 of every key that affects results.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if !UNHASHED.contains(&k) {
                h.update(format!("{k}={v}\n"));
            }
        }
        hex::encode(h.finalize())
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            thresholds: self.thresholds,
            steps: self.steps,
            mask: self.mask,
            skip_curves: self.skip_curves || matches!(self.detector, DetectorSource::Dumps(_)),
        }
    }

    pub fn scene_config(&self) -> SceneConfig {
        if self.single_object {
            SceneConfig::single_object()
        } else {
            SceneConfig::default()
        }
    }
}
