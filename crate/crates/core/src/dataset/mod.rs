//! Dataset loading, trajectory metrics, mesh files and synthetic data.

mod ply;
mod scene;
mod synthetic;
mod trajectory;
mod tum;

pub use ply::{export_ply, import_ply, read_ply, write_ply};
pub use scene::{render_synthetic_scene, Shape, SyntheticScene, Texture};
pub use synthetic::{apply_synthetic_deformation, generate_synthetic_plane, DeformationKind};
pub use trajectory::{
    align_horn, associate_trajectories, evaluate_ate_rmse, evaluate_rpe, format_trajectory, parse_trajectory,
    read_trajectory, write_trajectory,
    AteOptions, RpeResult, Trajectory, TrajectorySample,
};
pub use tum::{
    load_tum_dataset, read_color_png, read_depth_png, write_color_png, write_depth_png, write_tum_sequence,
    DatasetFrame, TumDataset, TumOptions, DEPTH_SCALE,
};

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("malformed mesh: {0}")]
    MalformedMesh(String),
    #[error("no associated samples between the trajectories")]
    NoAssociation,
    #[error("need at least {needed} associated samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> DatasetError {
    DatasetError::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}
