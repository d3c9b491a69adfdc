#pragma once

#include <string>
#include <vector>

#include "percap/camera.hpp"
#include "percap/character.hpp"
#include "percap/core.hpp"
#include "percap/mesh.hpp"
#include "percap/observations.hpp"

namespace percap {

struct TrackingResult;
struct FrameResult;

/// Rows of `points` at `indices`.
Points select_rows(const Points& points, const std::vector<int>& indices);
/// Subtracts row `root` from every row.
Points root_align(const Points& points, int root);

/// Percentage of joints (rows) whose distance to the matching ground-truth
/// row is at most `threshold_mm`. Inputs in meters, already root-aligned.
double pck3d(const Points& pred, const Points& gt, double threshold_mm = 150.0);

/// 0, 5, ..., 150 mm.
std::vector<double> default_auc_thresholds();
/// Plain mean of pck3d over the thresholds.
double auc(const Points& pred, const Points& gt, const std::vector<double>& thresholds_mm = default_auc_thresholds());

/// y ~ scale * rotation * x + translation.
struct Similarity {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Points apply(const Points& x) const;
};

/// Least-squares similarity taking rows of X onto rows of Y; proper rotations only.
Similarity procrustes_align(const Points& x, const Points& y);

/// Mean joint distance in mm, optionally after Procrustes alignment of pred onto gt.
double mpjpe(const Points& pred, const Points& gt, bool aligned);

/// Mean root distance in mm over frames (rows).
double gle(const Points& pred_roots, const Points& gt_roots);

struct IouReport {
  double all_views = 0.0;
  double reference_views = 0.0;  ///< NaN with a single camera
  double single_view = 0.0;
  std::vector<double> per_frame_all;
};

/// Renders every predicted frame into every camera and compares against the
/// ground-truth masks. When `translation_offsets` is non-empty each frame is
/// shifted by its offset first (the ground-truth translation protocol).
IouReport iou_views(const std::vector<Points>& pred_vertices, const std::vector<Triangle>& triangles,
                    const std::vector<Camera>& cameras, const std::vector<std::vector<Mask>>& gt_masks,
                    int input_camera, const std::vector<Vec3>& translation_offsets = {});

struct MetricReport {
  double gle_mm = 0.0;
  double pck3d_percent = 0.0;
  double auc_percent = 0.0;
  double mpjpe_mm = 0.0;
  double amv_iou = 0.0;
  double rv_iou = 0.0;
  double sv_iou = 0.0;
  std::vector<double> frame_mpjpe_mm;
  std::vector<double> frame_gle_mm;
  std::vector<double> frame_pck3d_percent;
  std::vector<double> frame_amv_iou;

  std::string to_json() const;
  std::string to_table() const;
};

/// World skeleton landmarks of one solved frame (kinematics only).
Points frame_landmarks(const TemplateCharacter& character, const Camera& input_camera, const FrameResult& frame);

struct EvalOptions {
  int input_camera = 0;
  bool ground_truth_translation = false;
  std::vector<double> auc_thresholds_mm = default_auc_thresholds();
};

/// Pose metrics on the character's metric landmarks, aligned to its root
/// landmark; IoU against the masks of `observations`.
MetricReport evaluate_sequence(const TemplateCharacter& character, const std::vector<Camera>& cameras,
                               const TrackingResult& pred, const TrackingResult& truth,
                               const std::vector<ObservationSet>& observations, const EvalOptions& options = {});

}  // namespace percap
