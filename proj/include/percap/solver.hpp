#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "percap/camera.hpp"
#include "percap/character.hpp"
#include "percap/deform.hpp"
#include "percap/kinematics.hpp"
#include "percap/observations.hpp"

namespace percap {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct PoseStageConfig {
  int iterations = 1000;
  double step_size = 1e-2;
  /// Step size at the last iteration relative to the first; geometric decay.
  double final_step_fraction = 0.03;
  double keypoint_weight = 0.01;
  /// Limit-loss weights and the iteration fractions at which each ends.
  std::vector<double> limit_weights{1.0, 0.1, 0.0};
  std::vector<double> limit_breaks{1.0 / 3.0, 0.5};
  /// lambda per landmark class before `lambda_break`, then `lambda_late` for all.
  double lambda_torso = 3.0;
  double lambda_elbow_knee = 2.0;
  double lambda_other = 1.0;
  double lambda_late = 3.0;
  double lambda_break = 1.0 / 3.0;
  bool use_limits = true;
};

struct DeformStageConfig {
  int iterations = 300;
  double step_size = 1e-3;
  double final_step_fraction = 0.1;
  double silhouette_weight = 1000.0;
  double keypoint_graph_weight = 0.05;
  double arap_weight = 1500.0;
};

struct SolverConfig {
  PoseStageConfig pose;
  DeformStageConfig deform;
  AdamSettings adam;
  /// Stop a stage once the relative change of its objective stays below this
  /// for `patience` iterations; 0 disables.
  double convergence_tolerance = 0.0;
  int patience = 10;
  int input_camera = 0;
  bool run_deform = true;
  bool temporal_smoothing = false;
  int smoothing_kernel = 5;
  double smoothing_sigma = 1.0;

  void validate() const;
};

SolverConfig solver_config_from_json(const std::string& text);
std::string solver_config_to_json(const SolverConfig& config);
SolverConfig load_solver_config(const std::filesystem::path& path);
void save_solver_config(const SolverConfig& config, const std::filesystem::path& path);

/// Monocular settings: limits off and a negligible keypoint weight.
SolverConfig monocular_config(SolverConfig base);

struct PoseStageResult {
  PoseParams params;
  std::vector<double> trace;  ///< reference objective per iterate
  bool failed = false;
  std::string message;
};

struct DeformStageResult {
  GraphDeformation deformation;
  std::vector<double> trace;
  bool failed = false;
  std::string message;
};

/// Zero joint angles with the root upright in world axes (y up, facing +z),
/// expressed relative to the input camera rotation.
PoseParams upright_rest_pose(const Skeleton& skeleton, const Mat3& input_rotation);

/// Per-landmark lambda for the early or late part of the pose stage.
VecX landmark_lambda(const Skeleton& skeleton, const PoseStageConfig& config, bool late);

double limit_weight_at(const PoseStageConfig& config, int iteration);

PoseStageResult solve_pose_frame(const TemplateCharacter& character, const std::vector<Camera>& cameras,
                                 const ObservationSet& obs, const PoseParams& init, const SolverConfig& config,
                                 const std::vector<int>& camera_subset = {});

DeformStageResult solve_deform_frame(const TemplateCharacter& character, const PoseParams& pose,
                                     const std::vector<Camera>& cameras, const ObservationSet& obs,
                                     const GraphDeformation& init, const SolverConfig& config,
                                     const std::vector<int>& camera_subset = {});

struct FrameResult {
  PoseParams pose;
  GraphDeformation deformation;
  Points vertices;  ///< world vertices (smoothed when smoothing is on)
  std::vector<double> pose_trace;
  std::vector<double> deform_trace;
  bool failed = false;
  std::string message;
};

struct TrackingResult {
  std::vector<FrameResult> frames;
};

/// Frame f starts from frame f-1's solution; frame 0 from `init` or the upright rest pose.
TrackingResult track_sequence(const TemplateCharacter& character, const std::vector<Camera>& cameras,
                              const std::vector<ObservationSet>& sequence, const SolverConfig& config,
                              const std::optional<PoseParams>& init = std::nullopt);

struct RefineResult {
  PoseParams pose;
  GraphDeformation deformation;
  PoseStageResult pose_stage;
  DeformStageResult deform_stage;
};

/// Both stages restricted to `camera` with the monocular settings.
RefineResult monocular_refine(const TemplateCharacter& character, const std::vector<Camera>& cameras, int camera,
                              const ObservationSet& obs, const PoseParams& init_pose,
                              const GraphDeformation& init_deformation, const SolverConfig& config);

/// Gaussian taps exp(-k^2 / 2 sigma^2), k = -(size/2)..size/2, unnormalized.
std::vector<double> gaussian_taps(int kernel_size, double sigma);

std::vector<Points> temporal_smooth(const std::vector<Points>& sequence, int kernel_size = 5, double sigma = 1.0);

/// result.json plus one mesh_XXXX.obj per frame.
void save_tracking_result(const TrackingResult& result, const std::vector<Triangle>& triangles,
                          const std::filesystem::path& dir);
TrackingResult load_tracking_result(const std::filesystem::path& dir);

}  // namespace percap
