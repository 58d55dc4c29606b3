#ifndef FUSEFORGE_H
#define FUSEFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum FfStatus {
  FF_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FF_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument was out of range or inconsistent.
   */
  FF_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A file could not be read, parsed or written.
   */
  FF_STATUS_IO = 3,
  /**
   * The frame could not be tracked; the pipeline kept its previous pose.
   */
  FF_STATUS_TRACKING_FAILED = 4,
  /**
   * A numerical solve failed.
   */
  FF_STATUS_SOLVE_FAILED = 5,
  /**
   * Unexpected internal error.
   */
  FF_STATUS_INTERNAL = 6,
} FfStatus;

/**
 * Indexed triangle mesh.
 */
typedef struct FfMesh FfMesh;

/**
 * Frame-to-model tracking and fusion state.
 */
typedef struct FfPipeline FfPipeline;

/**
 * Sparse TSDF volume.
 */
typedef struct FfVolume FfVolume;

/**
 * Pinhole camera. `width` and `height` are in pixels.
 */
typedef struct FfIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t width;
  uint32_t height;
} FfIntrinsics;

/**
 * Rigid transform; `rotation` is row-major.
 */
typedef struct FfPose {
  double rotation[9];
  double translation[3];
} FfPose;

/**
 * Non-rigid registration parameters.
 */
typedef struct FfNonrigidParams {
  /**
   * Deformation graph node count.
   */
  uint32_t nodes;
  /**
   * Neighbors per node.
   */
  uint32_t k;
  /**
   * Seed of the node sampling.
   */
  uint64_t seed;
  /**
   * Regularization weight.
   */
  double phi;
  uint32_t max_iters;
} FfNonrigidParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ff_version(void);

/**
 * Message of the most recent failure on this thread, or null if none.
 * Valid until the next failing call on the same thread.
 */
const char *ff_last_error(void);

/**
 * Default camera of the TUM freiburg2 sequences.
 */
struct FfIntrinsics ff_intrinsics_tum_freiburg2(void);

struct FfPose ff_pose_identity(void);

/**
 * Creates an empty volume. A `truncation` of 0 selects four voxels.
 */
enum FfStatus ff_volume_new(double voxel_size, double truncation, struct FfVolume **out);

/**
 * Reads a volume written by [`ff_volume_save`] or the `rigid` command.
 */
enum FfStatus ff_volume_load(const char *path, struct FfVolume **out);

enum FfStatus ff_volume_save(const struct FfVolume *volume, const char *path);

/**
 * Fuses one depth frame (and optional color, may be null) seen from `pose`.
 * Writes the number of updated voxels to `updated` when it is not null.
 */
enum FfStatus ff_volume_integrate(struct FfVolume *volume,
                                  const float *depth,
                                  const uint8_t *rgb,
                                  uint32_t width,
                                  uint32_t height,
                                  const struct FfIntrinsics *intrinsics,
                                  const struct FfPose *pose,
                                  size_t *updated);

/**
 * Runs marching cubes over the whole volume.
 */
enum FfStatus ff_volume_extract_mesh(const struct FfVolume *volume, struct FfMesh **out);

/**
 * Releases a volume. Null is ignored.
 */
void ff_volume_free(struct FfVolume *volume);

/**
 * Reads an ASCII PLY mesh.
 */
enum FfStatus ff_mesh_read_ply(const char *path, struct FfMesh **out);

enum FfStatus ff_mesh_write_ply(const struct FfMesh *mesh, const char *path);

/**
 * Number of vertices, or 0 for a null mesh.
 */
size_t ff_mesh_vertex_count(const struct FfMesh *mesh);

/**
 * Number of triangles, or 0 for a null mesh.
 */
size_t ff_mesh_face_count(const struct FfMesh *mesh);

/**
 * Copies `3 * vertex_count` coordinates (x, y, z per vertex) into `xyz`,
 * which holds `capacity` doubles.
 */
enum FfStatus ff_mesh_copy_vertices(const struct FfMesh *mesh, double *xyz, size_t capacity);

/**
 * Copies `3 * face_count` vertex indices into `indices`, which holds
 * `capacity` values.
 */
enum FfStatus ff_mesh_copy_faces(const struct FfMesh *mesh, uint32_t *indices, size_t capacity);

/**
 * Releases a mesh. Null is ignored.
 */
void ff_mesh_free(struct FfMesh *mesh);

/**
 * Creates a pipeline from a config file (null for defaults), fusing the
 * first frame at `initial_pose` (null for identity).
 */
enum FfStatus ff_pipeline_new(const char *config_path,
                              const struct FfPose *initial_pose,
                              struct FfPipeline **out);

/**
 * Camera the pipeline expects frames from.
 */
enum FfStatus ff_pipeline_intrinsics(const struct FfPipeline *pipeline, struct FfIntrinsics *out);

/**
 * Tracks and fuses one frame. The current pose is written to `pose` (when
 * not null) even if tracking fails, in which case the status is
 * `FF_STATUS_TRACKING_FAILED` and the frame is not fused.
 */
enum FfStatus ff_pipeline_process(struct FfPipeline *pipeline,
                                  double timestamp,
                                  const float *depth,
                                  const uint8_t *rgb,
                                  uint32_t width,
                                  uint32_t height,
                                  struct FfPose *pose);

/**
 * Number of frames processed so far.
 */
size_t ff_pipeline_frame_count(const struct FfPipeline *pipeline);

/**
 * Writes the estimated trajectory in TUM text format.
 */
enum FfStatus ff_pipeline_write_trajectory(const struct FfPipeline *pipeline, const char *path);

enum FfStatus ff_pipeline_extract_mesh(const struct FfPipeline *pipeline, struct FfMesh **out);

/**
 * Releases a pipeline. Null is ignored.
 */
void ff_pipeline_free(struct FfPipeline *pipeline);

/**
 * Defaults of the command-line tool.
 */
struct FfNonrigidParams ff_nonrigid_default_params(void);

/**
 * Deforms `source` onto `target`, which must have the same vertex count;
 * vertex `i` is paired with vertex `i`. The warped copy of `source` is
 * returned in `out`, the final energy in `energy` when it is not null.
 */
enum FfStatus ff_nonrigid_register(const struct FfMesh *source,
                                   const struct FfMesh *target,
                                   const struct FfNonrigidParams *params,
                                   struct FfMesh **out,
                                   double *energy);

/**
 * ATE-RMSE (with rigid alignment when `align` is nonzero) and RPE-RMSE over
 * `delta` frames between two TUM trajectory files, in meters.
 */
enum FfStatus ff_evaluate_trajectories(const char *estimated_path,
                                       const char *reference_path,
                                       uint32_t delta,
                                       bool align,
                                       double *ate_rmse,
                                       double *rpe_rmse);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUSEFORGE_H */
