use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use fuseforge::dataset::{apply_synthetic_deformation, export_ply, generate_synthetic_plane, DeformationKind, Shape, SyntheticScene};
use fuseforge::math::{PinholeIntrinsics, RigidTransform, Vec3};
use fuseforge_ffi::*;

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = ff_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_camera() -> PinholeIntrinsics {
    PinholeIntrinsics::new(130.0, 130.0, 79.5, 59.5, 160, 120).unwrap()
}

fn ff_intr(i: &PinholeIntrinsics) -> FfIntrinsics {
    FfIntrinsics { fx: i.fx, fy: i.fy, cx: i.cx, cy: i.cy, width: i.width as u32, height: i.height as u32 }
}

fn scene() -> SyntheticScene {
    let mut s = SyntheticScene::sphere_and_plane();
    s.shapes.push(Shape::Sphere { center: Vec3::new(-0.25, 0.1, 1.6), radius: 0.15 });
    s
}

/// Depth as f32 meters and packed RGB.
fn frame(pose: &RigidTransform, intr: &PinholeIntrinsics) -> (Vec<f32>, Vec<u8>) {
    let view = scene().render_view(pose, intr);
    (view.depth.data.iter().map(|d| *d as f32).collect(), view.color.data.iter().flatten().copied().collect())
}

#[test]
fn version_and_defaults() {
    let v = unsafe { CStr::from_ptr(ff_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    assert_eq!(ff_intrinsics_tum_freiburg2().width, 640);
    let id = ff_pose_identity();
    assert_eq!(id.rotation, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let p = ff_nonrigid_default_params();
    assert_eq!((p.nodes, p.k, p.max_iters), (90, 4, 30));
}

#[test]
fn volume_save_load_and_mesh() {
    let intr = small_camera();
    let (depth, rgb) = frame(&RigidTransform::identity(), &intr);
    let mut vol = ptr::null_mut();
    assert_eq!(ff_volume_new(0.01, 0.0, &mut vol), FfStatus::Ok);
    let mut updated = 0usize;
    let pose = ff_pose_identity();
    let status = ff_volume_integrate(vol, depth.as_ptr(), rgb.as_ptr(), 160, 120, &ff_intr(&intr), &pose, &mut updated);
    assert_eq!(status, FfStatus::Ok);
    assert!(updated > 1000);

    let tmp = tempfile::tempdir().unwrap();
    let file = cpath(&tmp.path().join("v.tsdf"));
    assert_eq!(ff_volume_save(vol, file.as_ptr()), FfStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(ff_volume_load(file.as_ptr(), &mut loaded), FfStatus::Ok);

    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(ff_volume_extract_mesh(vol, &mut a), FfStatus::Ok);
    assert_eq!(ff_volume_extract_mesh(loaded, &mut b), FfStatus::Ok);
    let (nv, nf) = (ff_mesh_vertex_count(a), ff_mesh_face_count(a));
    assert!(nv > 0 && nf > 0);
    assert_eq!((ff_mesh_vertex_count(b), ff_mesh_face_count(b)), (nv, nf));
    let mut faces = vec![0u32; 3 * nf];
    assert_eq!(ff_mesh_copy_faces(a, faces.as_mut_ptr(), faces.len()), FfStatus::Ok);
    assert!(faces.iter().all(|i| (*i as usize) < nv));

    let ply = cpath(&tmp.path().join("m.ply"));
    assert_eq!(ff_mesh_write_ply(a, ply.as_ptr()), FfStatus::Ok);
    let mut reread = ptr::null_mut();
    assert_eq!(ff_mesh_read_ply(ply.as_ptr(), &mut reread), FfStatus::Ok);
    assert_eq!(ff_mesh_face_count(reread), nf);

    for m in [a, b, reread] {
        ff_mesh_free(m);
    }
    ff_volume_free(vol);
    ff_volume_free(loaded);
}

#[test]
fn errors_are_reported() {
    let mut vol = ptr::null_mut();
    assert_eq!(ff_volume_new(0.0, 0.0, &mut vol), FfStatus::InvalidArgument);
    assert!(vol.is_null());
    assert!(last_error().contains("voxel size"));

    assert_eq!(ff_volume_extract_mesh(ptr::null(), &mut ptr::null_mut()), FfStatus::NullArgument);
    assert_eq!(last_error(), "volume is null");

    let missing = CString::new("/nonexistent/fuseforge.tsdf").unwrap();
    assert_eq!(ff_volume_load(missing.as_ptr(), &mut vol), FfStatus::Io);

    let bad_pose = FfPose { rotation: [2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], translation: [0.0; 3] };
    assert_eq!(ff_volume_new(0.01, 0.0, &mut vol), FfStatus::Ok);
    let depth = vec![1.0f32; 160 * 120];
    let intr = ff_intr(&small_camera());
    let status = ff_volume_integrate(vol, depth.as_ptr(), ptr::null(), 160, 120, &intr, &bad_pose, ptr::null_mut());
    assert_eq!(status, FfStatus::InvalidArgument);
    assert!(last_error().contains("orthonormal"));
    ff_volume_free(vol);

    // Null handles are harmless to query and free.
    assert_eq!(ff_mesh_vertex_count(ptr::null()), 0);
    ff_mesh_free(ptr::null_mut());
    ff_pipeline_free(ptr::null_mut());
}

#[test]
fn pipeline_tracks_and_reports_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("small.cfg");
    std::fs::write(
        &cfg_path,
        "camera.fx = 130\ncamera.fy = 130\ncamera.cx = 79.5\ncamera.cy = 59.5\ncamera.width = 160\ncamera.height = 120\n\
         tracker.iters_per_level = 6, 4\ntracker.min_correspondences = 100\ntracker.lambda_photo = 0\n",
    )
    .unwrap();
    let cfg = cpath(&cfg_path);
    let mut p = ptr::null_mut();
    assert_eq!(ff_pipeline_new(cfg.as_ptr(), ptr::null(), &mut p), FfStatus::Ok);
    let mut intr = ff_intrinsics_tum_freiburg2();
    assert_eq!(ff_pipeline_intrinsics(p, &mut intr), FfStatus::Ok);
    assert_eq!((intr.width, intr.height), (160, 120));

    let camera = small_camera();
    let mut pose = ff_pose_identity();
    for i in 0..3 {
        let truth = RigidTransform::from_translation(Vec3::new(0.003 * i as f64, 0.0, 0.0));
        let (depth, rgb) = frame(&truth, &camera);
        assert_eq!(ff_pipeline_process(p, i as f64, depth.as_ptr(), rgb.as_ptr(), 160, 120, &mut pose), FfStatus::Ok);
        assert!((pose.translation[0] - truth.translation.x).abs() < 2e-3, "{:?}", pose.translation);
    }
    let before = pose;
    let empty = vec![0.0f32; 160 * 120];
    let status = ff_pipeline_process(p, 3.0, empty.as_ptr(), ptr::null(), 160, 120, &mut pose);
    assert_eq!(status, FfStatus::TrackingFailed);
    assert!(last_error().contains("correspondences"));
    assert_eq!(pose, before);
    assert_eq!(ff_pipeline_frame_count(p), 4);

    let traj = cpath(&tmp.path().join("traj.txt"));
    assert_eq!(ff_pipeline_write_trajectory(p, traj.as_ptr()), FfStatus::Ok);
    assert_eq!(std::fs::read_to_string(tmp.path().join("traj.txt")).unwrap().lines().count(), 4);
    let (mut ate, mut rpe) = (f64::NAN, f64::NAN);
    assert_eq!(ff_evaluate_trajectories(traj.as_ptr(), traj.as_ptr(), 1, true, &mut ate, &mut rpe), FfStatus::Ok);
    assert!(ate.abs() < 1e-9 && rpe.abs() < 1e-9);
    assert_eq!(ff_evaluate_trajectories(traj.as_ptr(), traj.as_ptr(), 0, true, &mut ate, &mut rpe), FfStatus::InvalidArgument);

    let mut mesh = ptr::null_mut();
    assert_eq!(ff_pipeline_extract_mesh(p, &mut mesh), FfStatus::Ok);
    assert!(ff_mesh_face_count(mesh) > 0);
    ff_mesh_free(mesh);
    ff_pipeline_free(p);
}

#[test]
fn nonrigid_registration() {
    let tmp = tempfile::tempdir().unwrap();
    let plane = generate_synthetic_plane(21, 13, 0.6);
    let target = apply_synthetic_deformation(&plane, DeformationKind::Bend, 0.02, 1);
    export_ply(&plane, &tmp.path().join("plane.ply")).unwrap();
    export_ply(&target, &tmp.path().join("bend.ply")).unwrap();
    export_ply(&generate_synthetic_plane(5, 5, 0.6), &tmp.path().join("small.ply")).unwrap();
    let load = |name: &str| {
        let mut m = ptr::null_mut();
        assert_eq!(ff_mesh_read_ply(cpath(&tmp.path().join(name)).as_ptr(), &mut m), FfStatus::Ok);
        m
    };
    let (src, dst, small) = (load("plane.ply"), load("bend.ply"), load("small.ply"));
    let params = ff_nonrigid_default_params();
    let mut warped = ptr::null_mut();
    let mut energy = f64::NAN;
    assert_eq!(ff_nonrigid_register(src, dst, &params, &mut warped, &mut energy), FfStatus::Ok);
    assert!(energy.is_finite() && energy >= 0.0);
    let mut xyz = vec![0.0; 3 * 273];
    assert_eq!(ff_mesh_copy_vertices(warped, xyz.as_mut_ptr(), xyz.len()), FfStatus::Ok);
    let worst = xyz
        .chunks(3)
        .map(|p| target.distance_to_surface(&Vec3::new(p[0], p[1], p[2])).unwrap())
        .fold(0.0, f64::max);
    assert!(worst < 2e-3, "{worst}");

    let mut other = ptr::null_mut();
    assert_eq!(ff_nonrigid_register(src, small, &params, &mut other, ptr::null_mut()), FfStatus::InvalidArgument);
    assert!(other.is_null());
    let too_many = FfNonrigidParams { nodes: 1000, ..params };
    assert_eq!(ff_nonrigid_register(src, dst, &too_many, &mut other, ptr::null_mut()), FfStatus::InvalidArgument);

    for m in [src, dst, small, warped] {
        ff_mesh_free(m);
    }
}
