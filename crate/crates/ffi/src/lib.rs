//! C interface to the fuseforge library.
//!
//! Objects cross the boundary as opaque handles created by a `*_new`,
//! `*_load` or producing function and released with the matching `*_free`.
//! Every fallible function returns an [`FfStatus`]; on failure the message
//! is available from [`ff_last_error`] on the same thread until the next
//! failing call. Panics never unwind into C: they are reported as
//! `FF_STATUS_INTERNAL`.
//!
//! Images are row-major. Depth is in meters with 0 marking a missing
//! sample; color is packed RGB, 3 bytes per pixel. Poses map camera to world
//! coordinates with the rotation stored row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use fuseforge::config::PipelineConfig;
use fuseforge::dataset::{evaluate_ate_rmse, evaluate_rpe, import_ply, read_trajectory, export_ply, write_trajectory, AteOptions};
use fuseforge::defgraph::build_graph;
use fuseforge::image::{ColorImage, DepthImage};
use fuseforge::math::{Mat3, PinholeIntrinsics, RigidTransform, Vec3};
use fuseforge::nonrigid::{solve_warp_field, RegistrationTarget};
use fuseforge::pipeline::RigidPipeline;
use fuseforge::surface::{marching_cubes, TriangleMesh};
use fuseforge::volume::{integrate_frame, HashedTsdfVolume, VolumeConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was out of range or inconsistent.
    InvalidArgument = 2,
    /// A file could not be read, parsed or written.
    Io = 3,
    /// The frame could not be tracked; the pipeline kept its previous pose.
    TrackingFailed = 4,
    /// A numerical solve failed.
    SolveFailed = 5,
    /// Unexpected internal error.
    Internal = 6,
}

#[derive(Debug)]
struct Failure {
    status: FfStatus,
    message: String,
}

fn fail<T>(status: FfStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure { status, message: message.into() })
}

fn invalid(message: impl ToString) -> Failure {
    Failure { status: FfStatus::InvalidArgument, message: message.to_string() }
}

fn io(message: impl ToString) -> Failure {
    Failure { status: FfStatus::Io, message: message.to_string() }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> FfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FfStatus::Ok,
        Ok(Err(f)) => {
            set_last_error(&f.message);
            f.status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal error: {msg}"));
            FfStatus::Internal
        }
    }
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller promises that non-null pointers are valid.
    unsafe { p.as_ref() }.ok_or_else(|| Failure { status: FfStatus::NullArgument, message: format!("{name} is null") })
}

fn non_null_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller promises that non-null pointers are valid and unaliased.
    unsafe { p.as_mut() }.ok_or_else(|| Failure { status: FfStatus::NullArgument, message: format!("{name} is null") })
}

fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    let s = non_null(p, name)?;
    // SAFETY: non-null and NUL-terminated per the API contract.
    let s = unsafe { CStr::from_ptr(s) };
    Ok(PathBuf::from(s.to_str().map_err(|_| invalid(format!("{name} is not UTF-8")))?))
}

fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    *non_null_mut(out, name)? = value;
    Ok(())
}

fn into_handle<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Pinhole camera. `width` and `height` are in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl FfIntrinsics {
    fn to_core(self) -> Result<PinholeIntrinsics, Failure> {
        PinholeIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width as usize, self.height as usize).map_err(invalid)
    }

    fn from_core(i: &PinholeIntrinsics) -> Self {
        Self { fx: i.fx, fy: i.fy, cx: i.cx, cy: i.cy, width: i.width as u32, height: i.height as u32 }
    }
}

/// Rigid transform; `rotation` is row-major.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfPose {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl FfPose {
    fn to_core(self) -> Result<RigidTransform, Failure> {
        let t = RigidTransform::new(Mat3::from_row_slice(&self.rotation), Vec3::from(self.translation));
        if !(t.orthonormality_error() < 1e-6) {
            return Err(invalid("pose rotation is not orthonormal"));
        }
        Ok(t.orthonormalized())
    }

    fn from_core(t: &RigidTransform) -> Self {
        let mut rotation = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                rotation[3 * r + c] = t.rotation[(r, c)];
            }
        }
        Self { rotation, translation: [t.translation.x, t.translation.y, t.translation.z] }
    }
}

/// Copies caller images into library images, checking sizes.
fn frame_images(
    depth: *const f32,
    rgb: *const u8,
    width: u32,
    height: u32,
    intr: &PinholeIntrinsics,
) -> Result<(DepthImage, ColorImage), Failure> {
    let (w, h) = (width as usize, height as usize);
    if (w, h) != (intr.width, intr.height) {
        return Err(invalid(format!("image is {w}x{h} but the camera is {}x{}", intr.width, intr.height)));
    }
    non_null(depth, "depth")?;
    // SAFETY: the caller provides width * height depth values.
    let d = unsafe { std::slice::from_raw_parts(depth, w * h) };
    let depth = DepthImage::from_vec(w, h, d.iter().map(|v| if v.is_finite() && *v > 0.0 { *v as f64 } else { 0.0 }).collect());
    let color = if rgb.is_null() {
        ColorImage::filled(w, h, [128; 3])
    } else {
        // SAFETY: the caller provides width * height * 3 color bytes.
        let c = unsafe { std::slice::from_raw_parts(rgb, w * h * 3) };
        ColorImage::from_vec(w, h, c.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect())
    };
    Ok((depth, color))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ff_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread, or null if none.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ff_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Default camera of the TUM freiburg2 sequences.
#[no_mangle]
pub extern "C" fn ff_intrinsics_tum_freiburg2() -> FfIntrinsics {
    FfIntrinsics::from_core(&PinholeIntrinsics::tum_freiburg2())
}

#[no_mangle]
pub extern "C" fn ff_pose_identity() -> FfPose {
    FfPose::from_core(&RigidTransform::identity())
}

// ---------------------------------------------------------------------------
// Volume

/// Sparse TSDF volume.
pub struct FfVolume {
    inner: HashedTsdfVolume,
}

/// Creates an empty volume. A `truncation` of 0 selects four voxels.
#[no_mangle]
pub extern "C" fn ff_volume_new(voxel_size: f64, truncation: f64, out: *mut *mut FfVolume) -> FfStatus {
    guard(|| {
        let mut cfg = VolumeConfig::with_voxel_size(voxel_size);
        if truncation != 0.0 {
            cfg.truncation = truncation;
        }
        let inner = HashedTsdfVolume::new(cfg).map_err(invalid)?;
        write_out(out, into_handle(FfVolume { inner }), "out")
    })
}

/// Reads a volume written by [`ff_volume_save`] or the `rigid` command.
#[no_mangle]
pub extern "C" fn ff_volume_load(path: *const c_char, out: *mut *mut FfVolume) -> FfStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let inner = HashedTsdfVolume::load(&path).map_err(io)?;
        write_out(out, into_handle(FfVolume { inner }), "out")
    })
}

#[no_mangle]
pub extern "C" fn ff_volume_save(volume: *const FfVolume, path: *const c_char) -> FfStatus {
    guard(|| {
        let volume = non_null(volume, "volume")?;
        volume.inner.save(&path_arg(path, "path")?).map_err(io)
    })
}

/// Fuses one depth frame (and optional color, may be null) seen from `pose`.
/// Writes the number of updated voxels to `updated` when it is not null.
#[no_mangle]
pub extern "C" fn ff_volume_integrate(
    volume: *mut FfVolume,
    depth: *const f32,
    rgb: *const u8,
    width: u32,
    height: u32,
    intrinsics: *const FfIntrinsics,
    pose: *const FfPose,
    updated: *mut usize,
) -> FfStatus {
    guard(|| {
        let volume = non_null_mut(volume, "volume")?;
        let intr = non_null(intrinsics, "intrinsics")?.to_core()?;
        let pose = non_null(pose, "pose")?.to_core()?;
        let (depth, color) = frame_images(depth, rgb, width, height, &intr)?;
        let stats = integrate_frame(&mut volume.inner, &depth, &color, &pose, &intr);
        if !updated.is_null() {
            write_out(updated, stats.updated_voxels, "updated")?;
        }
        Ok(())
    })
}

/// Runs marching cubes over the whole volume.
#[no_mangle]
pub extern "C" fn ff_volume_extract_mesh(volume: *const FfVolume, out: *mut *mut FfMesh) -> FfStatus {
    guard(|| {
        let volume = non_null(volume, "volume")?;
        write_out(out, into_handle(FfMesh { inner: marching_cubes(&volume.inner) }), "out")
    })
}

/// Releases a volume. Null is ignored.
#[no_mangle]
pub extern "C" fn ff_volume_free(volume: *mut FfVolume) {
    if !volume.is_null() {
        // SAFETY: created by into_handle and not freed before, per the API contract.
        drop(unsafe { Box::from_raw(volume) });
    }
}

// ---------------------------------------------------------------------------
// Mesh

/// Indexed triangle mesh.
pub struct FfMesh {
    inner: TriangleMesh,
}

/// Reads an ASCII PLY mesh.
#[no_mangle]
pub extern "C" fn ff_mesh_read_ply(path: *const c_char, out: *mut *mut FfMesh) -> FfStatus {
    guard(|| {
        let inner = import_ply(&path_arg(path, "path")?).map_err(io)?;
        write_out(out, into_handle(FfMesh { inner }), "out")
    })
}

#[no_mangle]
pub extern "C" fn ff_mesh_write_ply(mesh: *const FfMesh, path: *const c_char) -> FfStatus {
    guard(|| export_ply(&non_null(mesh, "mesh")?.inner, &path_arg(path, "path")?).map_err(io))
}

/// Number of vertices, or 0 for a null mesh.
#[no_mangle]
pub extern "C" fn ff_mesh_vertex_count(mesh: *const FfMesh) -> usize {
    non_null(mesh, "mesh").map_or(0, |m| m.inner.vertex_count())
}

/// Number of triangles, or 0 for a null mesh.
#[no_mangle]
pub extern "C" fn ff_mesh_face_count(mesh: *const FfMesh) -> usize {
    non_null(mesh, "mesh").map_or(0, |m| m.inner.face_count())
}

/// Copies `3 * vertex_count` coordinates (x, y, z per vertex) into `xyz`,
/// which holds `capacity` doubles.
#[no_mangle]
pub extern "C" fn ff_mesh_copy_vertices(mesh: *const FfMesh, xyz: *mut f64, capacity: usize) -> FfStatus {
    guard(|| {
        let mesh = &non_null(mesh, "mesh")?.inner;
        let n = 3 * mesh.vertex_count();
        if capacity < n {
            return fail(FfStatus::InvalidArgument, format!("buffer holds {capacity} values, {n} needed"));
        }
        non_null_mut(xyz, "xyz")?;
        // SAFETY: checked non-null; the caller guarantees `capacity` elements.
        let dst = unsafe { std::slice::from_raw_parts_mut(xyz, n) };
        for (chunk, v) in dst.chunks_exact_mut(3).zip(&mesh.vertices) {
            chunk.copy_from_slice(v.as_slice());
        }
        Ok(())
    })
}

/// Copies `3 * face_count` vertex indices into `indices`, which holds
/// `capacity` values.
#[no_mangle]
pub extern "C" fn ff_mesh_copy_faces(mesh: *const FfMesh, indices: *mut u32, capacity: usize) -> FfStatus {
    guard(|| {
        let mesh = &non_null(mesh, "mesh")?.inner;
        let n = 3 * mesh.face_count();
        if capacity < n {
            return fail(FfStatus::InvalidArgument, format!("buffer holds {capacity} values, {n} needed"));
        }
        non_null_mut(indices, "indices")?;
        // SAFETY: checked non-null; the caller guarantees `capacity` elements.
        let dst = unsafe { std::slice::from_raw_parts_mut(indices, n) };
        for (chunk, f) in dst.chunks_exact_mut(3).zip(&mesh.faces) {
            chunk.copy_from_slice(f);
        }
        Ok(())
    })
}

/// Releases a mesh. Null is ignored.
#[no_mangle]
pub extern "C" fn ff_mesh_free(mesh: *mut FfMesh) {
    if !mesh.is_null() {
        // SAFETY: created by into_handle and not freed before, per the API contract.
        drop(unsafe { Box::from_raw(mesh) });
    }
}

// ---------------------------------------------------------------------------
// Rigid pipeline

/// Frame-to-model tracking and fusion state.
pub struct FfPipeline {
    inner: RigidPipeline,
}

/// Creates a pipeline from a config file (null for defaults), fusing the
/// first frame at `initial_pose` (null for identity).
#[no_mangle]
pub extern "C" fn ff_pipeline_new(
    config_path: *const c_char,
    initial_pose: *const FfPose,
    out: *mut *mut FfPipeline,
) -> FfStatus {
    guard(|| {
        let cfg = if config_path.is_null() {
            PipelineConfig::default()
        } else {
            PipelineConfig::from_file(&path_arg(config_path, "config_path")?).map_err(io)?
        };
        let pose = if initial_pose.is_null() { RigidTransform::identity() } else { non_null(initial_pose, "initial_pose")?.to_core()? };
        let inner = RigidPipeline::new(cfg, pose).map_err(invalid)?;
        write_out(out, into_handle(FfPipeline { inner }), "out")
    })
}

/// Camera the pipeline expects frames from.
#[no_mangle]
pub extern "C" fn ff_pipeline_intrinsics(pipeline: *const FfPipeline, out: *mut FfIntrinsics) -> FfStatus {
    guard(|| write_out(out, FfIntrinsics::from_core(&non_null(pipeline, "pipeline")?.inner.config().intrinsics), "out"))
}

/// Tracks and fuses one frame. The current pose is written to `pose` (when
/// not null) even if tracking fails, in which case the status is
/// `FF_STATUS_TRACKING_FAILED` and the frame is not fused.
#[no_mangle]
pub extern "C" fn ff_pipeline_process(
    pipeline: *mut FfPipeline,
    timestamp: f64,
    depth: *const f32,
    rgb: *const u8,
    width: u32,
    height: u32,
    pose: *mut FfPose,
) -> FfStatus {
    guard(|| {
        let p = &mut non_null_mut(pipeline, "pipeline")?.inner;
        let intr = p.config().intrinsics;
        let (depth, color) = frame_images(depth, rgb, width, height, &intr)?;
        let result = p.process_frame(timestamp, &depth, &color).map(|_| ()).map_err(|e| Failure {
            status: FfStatus::TrackingFailed,
            message: e.to_string(),
        });
        if !pose.is_null() {
            write_out(pose, FfPose::from_core(p.pose()), "pose")?;
        }
        result
    })
}

/// Number of frames processed so far.
#[no_mangle]
pub extern "C" fn ff_pipeline_frame_count(pipeline: *const FfPipeline) -> usize {
    non_null(pipeline, "pipeline").map_or(0, |p| p.inner.trajectory().len())
}

/// Writes the estimated trajectory in TUM text format.
#[no_mangle]
pub extern "C" fn ff_pipeline_write_trajectory(pipeline: *const FfPipeline, path: *const c_char) -> FfStatus {
    guard(|| {
        let p = non_null(pipeline, "pipeline")?;
        write_trajectory(&path_arg(path, "path")?, p.inner.trajectory()).map_err(io)
    })
}

#[no_mangle]
pub extern "C" fn ff_pipeline_extract_mesh(pipeline: *const FfPipeline, out: *mut *mut FfMesh) -> FfStatus {
    guard(|| {
        let p = non_null(pipeline, "pipeline")?;
        write_out(out, into_handle(FfMesh { inner: p.inner.extract_mesh() }), "out")
    })
}

/// Releases a pipeline. Null is ignored.
#[no_mangle]
pub extern "C" fn ff_pipeline_free(pipeline: *mut FfPipeline) {
    if !pipeline.is_null() {
        // SAFETY: created by into_handle and not freed before, per the API contract.
        drop(unsafe { Box::from_raw(pipeline) });
    }
}

// ---------------------------------------------------------------------------
// Non-rigid registration and evaluation

/// Non-rigid registration parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfNonrigidParams {
    /// Deformation graph node count.
    pub nodes: u32,
    /// Neighbors per node.
    pub k: u32,
    /// Seed of the node sampling.
    pub seed: u64,
    /// Regularization weight.
    pub phi: f64,
    pub max_iters: u32,
}

/// Defaults of the command-line tool.
#[no_mangle]
pub extern "C" fn ff_nonrigid_default_params() -> FfNonrigidParams {
    let cfg = PipelineConfig::default();
    FfNonrigidParams {
        nodes: cfg.graph.nodes as u32,
        k: cfg.graph.k as u32,
        seed: cfg.seed,
        phi: cfg.nonrigid.phi,
        max_iters: cfg.nonrigid.max_iters as u32,
    }
}

/// Deforms `source` onto `target`, which must have the same vertex count;
/// vertex `i` is paired with vertex `i`. The warped copy of `source` is
/// returned in `out`, the final energy in `energy` when it is not null.
#[no_mangle]
pub extern "C" fn ff_nonrigid_register(
    source: *const FfMesh,
    target: *const FfMesh,
    params: *const FfNonrigidParams,
    out: *mut *mut FfMesh,
    energy: *mut f64,
) -> FfStatus {
    guard(|| {
        let source = &non_null(source, "source")?.inner;
        let target = &non_null(target, "target")?.inner;
        let params = non_null(params, "params")?;
        let graph = build_graph(source, params.nodes as usize, params.k as usize, params.seed).map_err(invalid)?;
        let mut cfg = PipelineConfig::default().nonrigid;
        cfg.phi = params.phi;
        cfg.max_iters = params.max_iters as usize;
        let sol = solve_warp_field(&graph, source, RegistrationTarget::Mesh(target), &cfg).map_err(|e| {
            let status = match e {
                fuseforge::nonrigid::NonRigidError::TopologyMismatch { .. }
                | fuseforge::nonrigid::NonRigidError::InvalidConfig(_) => FfStatus::InvalidArgument,
                _ => FfStatus::SolveFailed,
            };
            Failure { status, message: e.to_string() }
        })?;
        if !energy.is_null() {
            write_out(energy, sol.energies.last().map_or(0.0, |e| e.total), "energy")?;
        }
        write_out(out, into_handle(FfMesh { inner: sol.graph.warp_mesh(source) }), "out")
    })
}

/// ATE-RMSE (with rigid alignment when `align` is nonzero) and RPE-RMSE over
/// `delta` frames between two TUM trajectory files, in meters.
#[no_mangle]
pub extern "C" fn ff_evaluate_trajectories(
    estimated_path: *const c_char,
    reference_path: *const c_char,
    delta: u32,
    align: bool,
    ate_rmse: *mut f64,
    rpe_rmse: *mut f64,
) -> FfStatus {
    guard(|| {
        let est = read_trajectory(&path_arg(estimated_path, "estimated_path")?).map_err(io)?;
        let reference = read_trajectory(&path_arg(reference_path, "reference_path")?).map_err(io)?;
        if delta == 0 {
            return fail(FfStatus::InvalidArgument, "delta must be at least 1");
        }
        let opts = AteOptions { align, ..AteOptions::default() };
        let ate = evaluate_ate_rmse(&est, &reference, &opts).map_err(invalid)?;
        let rpe = evaluate_rpe(&est, &reference, delta as usize, opts.tolerance).map_err(invalid)?;
        write_out(ate_rmse, ate, "ate_rmse")?;
        write_out(rpe_rmse, rpe.rmse, "rpe_rmse")
    })
}
