//! Run configuration and its text file format.
//!
//! A config file is a list of `key = value` lines. Blank lines and anything
//! after `#` are ignored. Keys not present keep their defaults, so an empty
//! file is a valid config. Angles are written in degrees and stored in
//! radians. Lists are comma separated.
//!
//! ```text
//! # camera
//! camera.fx = 520.9
//! camera.fy = 521.0
//! camera.cx = 325.1
//! camera.cy = 249.7
//! camera.width = 640
//! camera.height = 480
//! # input
//! dataset.depth_scale = 5000
//! dataset.max_depth = 8
//! dataset.assoc_tolerance = 0.02
//! # bilateral depth filter
//! filter.sigma_spatial = 2
//! filter.sigma_range = 0.05
//! filter.radius = 3
//! # tracking (iters_per_level is coarse to fine; its length is the level count)
//! tracker.lambda_photo = 0.1
//! tracker.iters_per_level = 10, 5, 4
//! tracker.dist_reject = 0.1
//! tracker.angle_reject = 20
//! tracker.huber_delta = 0.05
//! tracker.lm_tau = 0.0001
//! tracker.min_correspondences = 500
//! tracker.photo_depth_gate = 0.05
//! tracker.max_translation_jump = 0.5
//! tracker.max_rotation_jump = 30
//! # fusion
//! volume.voxel_size = 0.01
//! volume.truncation = 0.04
//! volume.max_weight = 128
//! volume.min_sample_weight = 0.1
//! volume.table_size = 1048576
//! # deformation graph and non-rigid solver
//! graph.nodes = 90
//! graph.k = 4
//! nonrigid.phi = 0.2
//! nonrigid.max_iters = 30
//! nonrigid.tukey_lambda = 0.05
//! nonrigid.step_tol = 0.000001
//! nonrigid.lm_tau = 0.001
//! nonrigid.lm_factor = 10
//! nonrigid.cg_tol = 0.00000001
//! nonrigid.dist_reject = 0.1
//! nonrigid.angle_reject = 20
//! # synthetic plane experiments
//! synthetic.rows = 21
//! synthetic.cols = 13
//! synthetic.extent = 0.6
//! synthetic.amplitude = 0.02
//! seed = 1
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::TumOptions;
use crate::image::BilateralParams;
use crate::math::PinholeIntrinsics;
use crate::nonrigid::NonRigidConfig;
use crate::tracker::TrackerConfig;
use crate::volume::VolumeConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Deformation graph construction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    pub nodes: usize,
    pub k: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { nodes: 90, k: 4 }
    }
}

/// Source plane and deformation size of the synthetic non-rigid cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub rows: usize,
    pub cols: usize,
    pub extent: f64,
    pub amplitude: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { rows: 21, cols: 13, extent: 0.6, amplitude: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub intrinsics: PinholeIntrinsics,
    pub dataset: TumOptions,
    pub filter: BilateralParams,
    pub tracker: TrackerConfig,
    pub volume: VolumeConfig,
    pub graph: GraphConfig,
    pub nonrigid: NonRigidConfig,
    pub synthetic: SyntheticConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            intrinsics: PinholeIntrinsics::tum_freiburg2(),
            dataset: TumOptions::default(),
            filter: BilateralParams::default(),
            tracker: TrackerConfig::default(),
            volume: VolumeConfig::default(),
            graph: GraphConfig::default(),
            nonrigid: NonRigidConfig::default(),
            synthetic: SyntheticConfig::default(),
            seed: 1,
        }
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {value:?}"))
}

fn parse_list(value: &str) -> Result<Vec<usize>, String> {
    value.split(',').map(|s| parse(s.trim())).collect()
}

fn degrees(value: &str) -> Result<f64, String> {
    parse::<f64>(value).map(f64::to_radians)
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Applies every `key = value` line of `text` on top of the defaults and
    /// validates the result.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse { line: i + 1, msg: format!("expected key = value, got {line:?}") })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|msg| ConfigError::Parse { line: i + 1, msg: format!("{}: {msg}", key.trim()) })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field by its config key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let t = &mut self.tracker;
        let n = &mut self.nonrigid;
        match key {
            "camera.fx" => self.intrinsics.fx = parse(value)?,
            "camera.fy" => self.intrinsics.fy = parse(value)?,
            "camera.cx" => self.intrinsics.cx = parse(value)?,
            "camera.cy" => self.intrinsics.cy = parse(value)?,
            "camera.width" => self.intrinsics.width = parse(value)?,
            "camera.height" => self.intrinsics.height = parse(value)?,
            "dataset.depth_scale" => self.dataset.depth_scale = parse(value)?,
            "dataset.max_depth" => self.dataset.max_depth = parse(value)?,
            "dataset.assoc_tolerance" => self.dataset.assoc_tolerance = parse(value)?,
            "filter.sigma_spatial" => self.filter.sigma_spatial = parse(value)?,
            "filter.sigma_range" => self.filter.sigma_range = parse(value)?,
            "filter.radius" => self.filter.radius = parse(value)?,
            "tracker.lambda_photo" => t.lambda_photo = parse(value)?,
            "tracker.iters_per_level" => t.iters_per_level = parse_list(value)?,
            "tracker.dist_reject" => t.dist_reject = parse(value)?,
            "tracker.angle_reject" => t.angle_reject = degrees(value)?,
            "tracker.huber_delta" => t.huber_delta = parse(value)?,
            "tracker.lm_tau" => t.lm_tau = parse(value)?,
            "tracker.min_correspondences" => t.min_correspondences = parse(value)?,
            "tracker.photo_depth_gate" => t.photo_depth_gate = parse(value)?,
            "tracker.max_translation_jump" => t.max_translation_jump = parse(value)?,
            "tracker.max_rotation_jump" => t.max_rotation_jump = degrees(value)?,
            "volume.voxel_size" => self.volume.voxel_size = parse(value)?,
            "volume.truncation" => self.volume.truncation = parse(value)?,
            "volume.max_weight" => self.volume.max_weight = parse(value)?,
            "volume.min_sample_weight" => self.volume.min_sample_weight = parse(value)?,
            "volume.table_size" => self.volume.table_size = parse(value)?,
            "graph.nodes" => self.graph.nodes = parse(value)?,
            "graph.k" => self.graph.k = parse(value)?,
            "nonrigid.phi" => n.phi = parse(value)?,
            "nonrigid.max_iters" => n.max_iters = parse(value)?,
            "nonrigid.tukey_lambda" => n.tukey_lambda = parse(value)?,
            "nonrigid.step_tol" => n.step_tol = parse(value)?,
            "nonrigid.lm_tau" => n.lm_tau = parse(value)?,
            "nonrigid.lm_factor" => n.lm_factor = parse(value)?,
            "nonrigid.cg_tol" => n.cg_tol = parse(value)?,
            "nonrigid.dist_reject" => n.dist_reject = parse(value)?,
            "nonrigid.angle_reject" => n.angle_reject = degrees(value)?,
            "synthetic.rows" => self.synthetic.rows = parse(value)?,
            "synthetic.cols" => self.synthetic.cols = parse(value)?,
            "synthetic.extent" => self.synthetic.extent = parse(value)?,
            "synthetic.amplitude" => self.synthetic.amplitude = parse(value)?,
            "seed" => self.seed = parse(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Keeps the `levels` finest entries of the per-level iteration counts,
    /// or prepends copies of the coarsest count when more levels are asked for.
    pub fn set_levels(&mut self, levels: usize) {
        let iters = &mut self.tracker.iters_per_level;
        if levels <= iters.len() {
            iters.drain(..iters.len() - levels);
        } else {
            let coarsest = iters.first().copied().unwrap_or(10);
            iters.splice(0..0, std::iter::repeat_n(coarsest, levels - iters.len()));
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.intrinsics.validate().map_err(|e| invalid(e.to_string()))?;
        self.tracker.validate().map_err(invalid)?;
        self.volume.validate().map_err(|e| invalid(e.to_string()))?;
        self.nonrigid.validate().map_err(|e| invalid(e.to_string()))?;
        if !(self.dataset.depth_scale > 0.0 && self.dataset.max_depth > 0.0 && self.dataset.assoc_tolerance >= 0.0) {
            return Err(invalid("dataset scale, depth limit and tolerance must be positive".into()));
        }
        if !(self.filter.sigma_spatial > 0.0 && self.filter.sigma_range > 0.0) {
            return Err(invalid("filter sigmas must be positive".into()));
        }
        if self.graph.k == 0 || self.graph.nodes <= self.graph.k {
            return Err(invalid(format!("graph needs more than k = {} nodes, got {}", self.graph.k, self.graph.nodes)));
        }
        if self.synthetic.rows < 2 || self.synthetic.cols < 2 || !(self.synthetic.extent > 0.0) {
            return Err(invalid("synthetic plane needs at least 2x2 vertices and a positive extent".into()));
        }
        Ok(())
    }

    /// Renders the config in the file format; `parse(to_text())` restores it.
    pub fn to_text(&self) -> String {
        let t = &self.tracker;
        let n = &self.nonrigid;
        let iters: Vec<String> = t.iters_per_level.iter().map(usize::to_string).collect();
        let entries: Vec<(&str, String)> = vec![
            ("camera.fx", self.intrinsics.fx.to_string()),
            ("camera.fy", self.intrinsics.fy.to_string()),
            ("camera.cx", self.intrinsics.cx.to_string()),
            ("camera.cy", self.intrinsics.cy.to_string()),
            ("camera.width", self.intrinsics.width.to_string()),
            ("camera.height", self.intrinsics.height.to_string()),
            ("dataset.depth_scale", self.dataset.depth_scale.to_string()),
            ("dataset.max_depth", self.dataset.max_depth.to_string()),
            ("dataset.assoc_tolerance", self.dataset.assoc_tolerance.to_string()),
            ("filter.sigma_spatial", self.filter.sigma_spatial.to_string()),
            ("filter.sigma_range", self.filter.sigma_range.to_string()),
            ("filter.radius", self.filter.radius.to_string()),
            ("tracker.lambda_photo", t.lambda_photo.to_string()),
            ("tracker.iters_per_level", iters.join(", ")),
            ("tracker.dist_reject", t.dist_reject.to_string()),
            ("tracker.angle_reject", t.angle_reject.to_degrees().to_string()),
            ("tracker.huber_delta", t.huber_delta.to_string()),
            ("tracker.lm_tau", t.lm_tau.to_string()),
            ("tracker.min_correspondences", t.min_correspondences.to_string()),
            ("tracker.photo_depth_gate", t.photo_depth_gate.to_string()),
            ("tracker.max_translation_jump", t.max_translation_jump.to_string()),
            ("tracker.max_rotation_jump", t.max_rotation_jump.to_degrees().to_string()),
            ("volume.voxel_size", self.volume.voxel_size.to_string()),
            ("volume.truncation", self.volume.truncation.to_string()),
            ("volume.max_weight", self.volume.max_weight.to_string()),
            ("volume.min_sample_weight", self.volume.min_sample_weight.to_string()),
            ("volume.table_size", self.volume.table_size.to_string()),
            ("graph.nodes", self.graph.nodes.to_string()),
            ("graph.k", self.graph.k.to_string()),
            ("nonrigid.phi", n.phi.to_string()),
            ("nonrigid.max_iters", n.max_iters.to_string()),
            ("nonrigid.tukey_lambda", n.tukey_lambda.to_string()),
            ("nonrigid.step_tol", n.step_tol.to_string()),
            ("nonrigid.lm_tau", n.lm_tau.to_string()),
            ("nonrigid.lm_factor", n.lm_factor.to_string()),
            ("nonrigid.cg_tol", n.cg_tol.to_string()),
            ("nonrigid.dist_reject", n.dist_reject.to_string()),
            ("nonrigid.angle_reject", n.angle_reject.to_degrees().to_string()),
            ("synthetic.rows", self.synthetic.rows.to_string()),
            ("synthetic.cols", self.synthetic.cols.to_string()),
            ("synthetic.extent", self.synthetic.extent.to_string()),
            ("synthetic.amplitude", self.synthetic.amplitude.to_string()),
            ("seed", self.seed.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
