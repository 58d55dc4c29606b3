//! Command-line driver behind the `fuseforge` binary.
//!
//! Exit status 0 is success, 1 a failed run (tracking failure, diverged
//! solve), 2 unusable input (missing files, bad config, malformed data).
//! Every file a command writes lands in its `--out` directory.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::dataset::{
    apply_synthetic_deformation, evaluate_ate_rmse, evaluate_rpe, format_trajectory, generate_synthetic_plane, import_ply,
    load_tum_dataset, read_color_png, read_depth_png, read_trajectory, write_ply, AteOptions, DeformationKind,
};
use crate::defgraph::build_graph;
use crate::math::RigidTransform;
use crate::nonrigid::{solve_warp_field, write_energy_csv, RegistrationTarget};
use crate::pipeline::{write_frame_stats_csv, RigidPipeline};
use crate::surface::{marching_cubes, TriangleMesh};
use crate::volume::HashedTsdfVolume;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "FUSEFORGE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

fn input<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Input(format!("{context}: {e}"))
}

fn output<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Failed(format!("cannot write {}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "fuseforge", version, about = "RGB-D fusion, rigid tracking and non-rigid registration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track and fuse a TUM RGB-D sequence.
    Rigid(RigidArgs),
    /// Register a source mesh onto a target mesh with a deformation graph.
    Nonrigid(NonrigidArgs),
    /// Compare an estimated trajectory with a reference.
    Eval(EvalArgs),
    /// Extract a mesh from a saved volume.
    Mesh(MeshArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Config file (key = value lines); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RigidArgs {
    /// Dataset directory with rgb.txt, depth.txt and optionally groundtruth.txt.
    pub dataset: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub max_frames: Option<usize>,
    /// Number of pyramid levels.
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub lambda_photo: Option<f64>,
    /// Keep going after a frame fails to track.
    #[arg(long)]
    pub continue_on_failure: bool,
}

#[derive(Debug, Args)]
pub struct NonrigidArgs {
    /// Source mesh: a PLY file or `plane` for the synthetic grid.
    pub source: String,
    /// Target mesh: a PLY file or one of `plane`, `sinusoid`, `bend`, `fold`, `twist`.
    pub target: String,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Seed for graph node sampling and synthetic deformations.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub phi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated trajectory, TUM text format.
    pub estimated: PathBuf,
    /// Reference trajectory, TUM text format.
    pub reference: PathBuf,
    /// Frame offset of the relative pose error.
    #[arg(long, default_value_t = 1)]
    pub delta: usize,
    /// Skip the rigid alignment before computing the absolute error.
    #[arg(long)]
    pub no_align: bool,
    /// Print a JSON object instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// Volume file written by `rigid`.
    pub volume: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    // A pool built earlier in the same process keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Rigid(a) => cmd_rigid(&a),
        Command::Nonrigid(a) => cmd_nonrigid(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Mesh(a) => cmd_mesh(&a),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => PipelineConfig::from_file(p).map_err(|e| CliError::Input(e.to_string())),
        None => Ok(PipelineConfig::default()),
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", dir.display())))
}

/// Writes `name` inside `dir` through a temporary file and a rename.
fn write_file(dir: &Path, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut buf = Vec::new();
    fill(&mut buf).map_err(output(&path))?;
    fs::write(&tmp, &buf).map_err(output(&tmp))?;
    fs::rename(&tmp, &path).map_err(output(&path))?;
    Ok(path)
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub out: PathBuf,
    pub flags: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn render(&self, cfg: &PipelineConfig) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        for i in &self.inputs {
            let _ = writeln!(s, "input = {i}");
        }
        let cfg_path = self.config_path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "(defaults)".into());
        let _ = writeln!(s, "config = {cfg_path}");
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "flags = {}", self.flags.join(" "));
        for o in &self.outputs {
            let _ = writeln!(s, "output = {o}");
        }
        let _ = writeln!(s, "# resolved config");
        s.push_str(&cfg.to_text());
        s
    }

    fn write(&self, cfg: &PipelineConfig) -> Result<(), CliError> {
        let text = self.render(cfg);
        write_file(&self.out, "manifest.txt", |b| b.write_all(text.as_bytes())).map(|_| ())
    }
}

pub fn cmd_rigid(a: &RigidArgs) -> Result<(), CliError> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    let mut flags = Vec::new();
    if let Some(l) = a.levels {
        if l == 0 {
            return Err(CliError::Input("--levels must be at least 1".into()));
        }
        cfg.set_levels(l);
        flags.push(format!("--levels {l}"));
    }
    if let Some(l) = a.lambda_photo {
        cfg.tracker.lambda_photo = l;
        flags.push(format!("--lambda-photo {l}"));
    }
    cfg.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let dataset = load_tum_dataset(&a.dataset, &cfg.dataset).map_err(input("cannot load dataset"))?;
    let count = a.max_frames.map_or(dataset.frames.len(), |m| m.min(dataset.frames.len()));
    if let Some(m) = a.max_frames {
        flags.push(format!("--max-frames {m}"));
    }
    if a.continue_on_failure {
        flags.push("--continue-on-failure".into());
    }
    if count == 0 {
        return Err(CliError::Input(format!("{}: no associated depth/color frames", a.dataset.display())));
    }
    prepare_out(&a.common.out)?;

    let initial = dataset.frames[0].ground_truth.unwrap_or_else(RigidTransform::identity);
    let mut pipeline = RigidPipeline::new(cfg.clone(), initial).map_err(|e| CliError::Input(e.to_string()))?;
    let intr = cfg.intrinsics;
    let started = Instant::now();
    let mut failures = 0;
    let mut fatal = None;
    for (i, frame) in dataset.frames.iter().take(count).enumerate() {
        let depth = read_depth_png(&frame.depth_path, cfg.dataset.depth_scale, cfg.dataset.max_depth).map_err(input("cannot read frame"))?;
        let color = read_color_png(&frame.color_path).map_err(input("cannot read frame"))?;
        if depth.dims() != (intr.width, intr.height) || color.dims() != depth.dims() {
            return Err(CliError::Input(format!(
                "frame {i}: image size {:?} does not match the camera ({}x{})",
                depth.dims(),
                intr.width,
                intr.height
            )));
        }
        if let Err(e) = pipeline.process_frame(frame.timestamp, &depth, &color) {
            failures += 1;
            eprintln!("frame {i} (t = {:.6}): tracking failed: {e}", frame.timestamp);
            if !a.continue_on_failure {
                fatal = Some(format!("tracking failed at frame {i}: {e}"));
                break;
            }
        }
    }
    let out = &a.common.out;
    write_file(out, "trajectory.txt", |b| b.write_all(format_trajectory(pipeline.trajectory()).as_bytes()))?;
    write_file(out, "stats.csv", |b| write_frame_stats_csv(pipeline.stats(), b))?;
    let mesh = pipeline.extract_mesh();
    write_file(out, "mesh.ply", |b| write_ply(&mesh, b))?;
    write_file(out, "volume.tsdf", |b| pipeline.volume().write_to(b).map_err(std::io::Error::other))?;
    RunManifest {
        command: "rigid".into(),
        inputs: vec![a.dataset.display().to_string()],
        config_path: a.common.config.clone(),
        out: out.clone(),
        flags,
        outputs: ["trajectory.txt", "stats.csv", "mesh.ply", "volume.tsdf"].map(String::from).to_vec(),
    }
    .write(&cfg)?;

    println!(
        "processed {} frames ({} failed) in {:.1} s; mesh {} vertices, {} faces",
        pipeline.trajectory().len(),
        failures,
        started.elapsed().as_secs_f64(),
        mesh.vertex_count(),
        mesh.face_count()
    );
    if !dataset.ground_truth.is_empty() {
        if let Ok(ate) = evaluate_ate_rmse(pipeline.trajectory(), &dataset.ground_truth, &AteOptions::default()) {
            println!("ATE-RMSE {ate:.4} m");
        }
    }
    match fatal {
        Some(msg) => Err(CliError::Failed(msg)),
        None => Ok(()),
    }
}

/// Per-vertex distances between a registered mesh and its target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceStats {
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl DistanceStats {
    pub fn from_samples(d: &[f64]) -> Self {
        if d.is_empty() {
            return Self { max: 0.0, mean: 0.0, std: 0.0 };
        }
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { max: d.iter().copied().fold(0.0, f64::max), mean, std: var.sqrt() }
    }
}

/// Distance from every vertex of `mesh` to the surface of `target`.
pub fn surface_distances(mesh: &TriangleMesh, target: &TriangleMesh) -> Vec<f64> {
    use rayon::prelude::*;
    mesh.vertices.par_iter().map(|p| target.distance_to_surface(p).unwrap_or(f64::INFINITY)).collect()
}

/// Distance between vertices with the same index.
pub fn paired_distances(mesh: &TriangleMesh, target: &TriangleMesh) -> Vec<f64> {
    mesh.vertices.iter().zip(&target.vertices).map(|(a, b)| (a - b).norm()).collect()
}

/// Source or target of a non-rigid run: a synthetic keyword or a PLY path.
pub fn resolve_mesh(spec: &str, cfg: &PipelineConfig) -> Result<TriangleMesh, CliError> {
    let s = &cfg.synthetic;
    if spec == "plane" {
        return Ok(generate_synthetic_plane(s.rows, s.cols, s.extent));
    }
    if let Ok(kind) = spec.parse::<DeformationKind>() {
        let plane = generate_synthetic_plane(s.rows, s.cols, s.extent);
        return Ok(apply_synthetic_deformation(&plane, kind, s.amplitude, cfg.seed));
    }
    import_ply(Path::new(spec)).map_err(input(format!("cannot load mesh {spec}")))
}

pub fn cmd_nonrigid(a: &NonrigidArgs) -> Result<(), CliError> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    let mut flags = Vec::new();
    if let Some(seed) = a.seed {
        cfg.seed = seed;
        flags.push(format!("--seed {seed}"));
    }
    if let Some(phi) = a.phi {
        cfg.nonrigid.phi = phi;
        flags.push(format!("--phi {phi}"));
    }
    cfg.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let source = resolve_mesh(&a.source, &cfg)?;
    let target = resolve_mesh(&a.target, &cfg)?;
    if source.vertex_count() != target.vertex_count() {
        return Err(CliError::Input(format!(
            "index registration needs matching topology: source has {} vertices, target {}",
            source.vertex_count(),
            target.vertex_count()
        )));
    }
    prepare_out(&a.common.out)?;
    let graph = build_graph(&source, cfg.graph.nodes, cfg.graph.k, cfg.seed).map_err(input("cannot build deformation graph"))?;
    let solution = solve_warp_field(&graph, &source, RegistrationTarget::Mesh(&target), &cfg.nonrigid)
        .map_err(|e| CliError::Failed(format!("registration failed: {e}")))?;
    let warped = solution.graph.warp_mesh(&source);

    let before = DistanceStats::from_samples(&surface_distances(&source, &target));
    let surface = DistanceStats::from_samples(&surface_distances(&warped, &target));
    let paired = DistanceStats::from_samples(&paired_distances(&warped, &target));
    let out = &a.common.out;
    write_file(out, "warped.ply", |b| write_ply(&warped, b))?;
    write_file(out, "energy.csv", |b| write_energy_csv(&solution.energies, b))?;
    write_file(out, "stats.csv", |b| {
        writeln!(b, "measure,max_m,mean_m,std_m")?;
        for (name, s) in [("initial_vertex_to_surface", before), ("vertex_to_surface", surface), ("vertex_to_vertex", paired)] {
            writeln!(b, "{name},{:e},{:e},{:e}", s.max, s.mean, s.std)?;
        }
        Ok(())
    })?;
    RunManifest {
        command: "nonrigid".into(),
        inputs: vec![a.source.clone(), a.target.clone()],
        config_path: a.common.config.clone(),
        out: out.clone(),
        flags,
        outputs: ["warped.ply", "energy.csv", "stats.csv"].map(String::from).to_vec(),
    }
    .write(&cfg)?;
    println!(
        "{} iterations; max vertex-to-surface distance {:.3e} m -> {:.3e} m; max vertex-to-vertex {:.3e} m",
        solution.energies.len() - 1,
        before.max,
        surface.max,
        paired.max
    );
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    if a.delta == 0 {
        return Err(CliError::Input("--delta must be at least 1".into()));
    }
    let est = read_trajectory(&a.estimated).map_err(input("cannot read estimated trajectory"))?;
    let reference = read_trajectory(&a.reference).map_err(input("cannot read reference trajectory"))?;
    let opts = AteOptions { align: !a.no_align, ..AteOptions::default() };
    let ate = evaluate_ate_rmse(&est, &reference, &opts).map_err(input("cannot evaluate ATE"))?;
    let rpe = evaluate_rpe(&est, &reference, a.delta, opts.tolerance).map_err(input("cannot evaluate RPE"))?;
    if a.json {
        let v = serde_json::json!({
            "ate_rmse_m": ate,
            "rpe_rmse_m": rpe.rmse,
            "rpe_delta": a.delta,
            "pairs": rpe.errors.len() + a.delta,
            "aligned": !a.no_align,
        });
        println!("{v}");
    } else {
        println!("ATE-RMSE {ate:.6} m");
        println!("RPE-RMSE {:.6} m (delta {})", rpe.rmse, a.delta);
    }
    Ok(())
}

pub fn cmd_mesh(a: &MeshArgs) -> Result<(), CliError> {
    let vol = HashedTsdfVolume::load(&a.volume).map_err(input(format!("cannot load volume {}", a.volume.display())))?;
    prepare_out(&a.out)?;
    let mesh = marching_cubes(&vol);
    write_file(&a.out, "mesh.ply", |b| write_ply(&mesh, b))?;
    RunManifest {
        command: "mesh".into(),
        inputs: vec![a.volume.display().to_string()],
        config_path: None,
        out: a.out.clone(),
        flags: Vec::new(),
        outputs: vec!["mesh.ply".into()],
    }
    .write(&PipelineConfig::default())?;
    println!("{} vertices, {} faces", mesh.vertex_count(), mesh.face_count());
    Ok(())
}
