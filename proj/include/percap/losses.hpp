#pragma once

#include <map>
#include <string>
#include <vector>

#include "percap/alignment.hpp"
#include "percap/camera.hpp"
#include "percap/character.hpp"
#include "percap/deform.hpp"
#include "percap/mesh.hpp"
#include "percap/observations.hpp"
#include "percap/raster.hpp"

namespace percap {

/// Scalar loss with gradients keyed by parameter block: "theta", "alpha",
/// "rotations" (A, row-major K x 3) and "translations" (T).
struct LossReport {
  double value = 0.0;
  std::map<std::string, VecX> gradients;
  std::map<std::string, double> terms;
  int skipped_terms = 0;  ///< e.g. landmarks behind a camera
};

/// Confidence-weighted reprojection error sum_c sum_m lambda_m sigma_cm ||pi_c(X_m) - p_cm||^2
/// over `camera_subset` (empty = all cameras). `lambda` empty means all ones.
/// Writes dL/dX into `grad_points` when non-null.
LossReport reprojection_loss(const Points& points, const std::vector<Camera>& cameras, const ObservationSet& obs,
                             const VecX& lambda, const std::vector<int>& camera_subset, Points* grad_points);

struct PoseKeypointResult {
  LossReport report;
  Vec3 translation = Vec3::Zero();  ///< closed-form t at this pose
  Points landmarks;                 ///< world landmarks P
};

/// Sparse keypoint loss through the full chain: kinematics, rotation into
/// world orientation, closed-form translation, projection.
PoseKeypointResult pose_keypoint_loss(const Skeleton& skeleton, const std::vector<Camera>& cameras,
                                      const ObservationSet& obs, const GlobalAlignment& alignment,
                                      const Mat3& input_rotation, const VecX& lambda, const VecX& theta,
                                      const Vec3& alpha, const std::vector<int>& camera_subset = {});

/// Pose prior: one-sided quadratic outside [lower, upper] per DOF.
LossReport limit_loss(const VecX& theta, const std::vector<DofLimit>& limits);

/// One frozen silhouette term: boundary vertex of camera `camera` and its
/// directional weight.
struct SilhouetteTerm {
  int camera = 0;
  int vertex = 0;
  double rho = 1.0;
};

/// Renders the current mesh in every camera of the subset, extracts boundary
/// vertices and evaluates their directional weights against the fields.
std::vector<SilhouetteTerm> prepare_silhouette_terms(const Points& world_vertices, const std::vector<Triangle>& triangles,
                                                     const EdgeTopology& topology, const std::vector<Camera>& cameras,
                                                     const std::vector<DistanceImage>& fields,
                                                     const std::vector<int>& camera_subset = {});

/// sum rho ||D_c(pi_c(V_i))||^2 over frozen terms; dL/dV into `grad_vertices`.
LossReport silhouette_loss_points(const Points& world_vertices, const std::vector<Camera>& cameras,
                                  const std::vector<DistanceImage>& fields, const std::vector<SilhouetteTerm>& terms,
                                  Points* grad_vertices);

/// Fixed pose used by the deformation losses.
struct PoseContext {
  std::vector<Rigid> node_transforms;
  Mat3 input_rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

LossReport silhouette_loss(const TemplateCharacter& character, const GraphDeformation& deformation,
                           const PoseContext& pose, const std::vector<Camera>& cameras,
                           const std::vector<DistanceImage>& fields, const std::vector<SilhouetteTerm>& terms);

/// Keypoint loss on graph-attached landmarks (no hierarchical weights).
LossReport keypoint_graph_loss(const TemplateCharacter& character, const GraphDeformation& deformation,
                               const PoseContext& pose, const std::vector<Camera>& cameras,
                               const ObservationSet& obs, const std::vector<int>& camera_subset = {});

inline constexpr double kHuberEpsilon = 1e-6;

/// sum_k sum_{l in N(k)} u_kl H(d_kl) with H the Huber-smoothed L1 norm.
LossReport arap_loss(const EmbeddedGraph& graph, const GraphDeformation& deformation,
                     double epsilon = kHuberEpsilon);

/// Residual d_kl of one directed graph edge.
Vec3 arap_residual(const EmbeddedGraph& graph, const GraphDeformation& deformation, int k, int l);

VecX flatten(const Points& p);
Points unflatten(const VecX& v);

}  // namespace percap
