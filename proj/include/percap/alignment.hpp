#pragma once

#include <vector>

#include "percap/camera.hpp"
#include "percap/core.hpp"
#include "percap/observations.hpp"

namespace percap {

/// Ray from camera c towards the detection of one landmark.
struct WeightedRay {
  int landmark = 0;
  Ray ray;
  double confidence = 0.0;
};

/// Rays for every (camera, landmark) pair with thresholded confidences.
std::vector<WeightedRay> detection_rays(const std::vector<Camera>& cameras, const ObservationSet& obs,
                                        const std::vector<int>& camera_subset = {});

inline constexpr double kMaxAlignmentCondition = 1e8;

/// Closed-form world translation minimising the confidence-weighted
/// point-to-ray distances of rotated landmarks. The normal matrix depends
/// only on the rays, so it is factorised once.
class GlobalAlignment {
 public:
  /// Throws DegenerateGeometry when no ray is active or cond(W) > 1e8.
  GlobalAlignment(std::vector<WeightedRay> rays, int landmark_count);

  /// t for rotated landmarks R_{c'}^T P_{c'} (M x 3).
  Vec3 solve(const Points& rotated_landmarks) const;
  /// dt / d rotated landmarks, 3 x 3M (column 3m + r = coordinate r of landmark m).
  const MatX& jacobian() const { return jacobian_; }
  /// Weighted objective sum sigma ||(Q_m + t - o) x d||^2.
  double objective(const Points& rotated_landmarks, const Vec3& t) const;
  /// Gradient of the objective with respect to t.
  Vec3 objective_gradient(const Points& rotated_landmarks, const Vec3& t) const;

  const Mat3& normal_matrix() const { return w_; }
  const std::vector<WeightedRay>& rays() const { return rays_; }

 private:
  std::vector<WeightedRay> rays_;
  int landmark_count_ = 0;
  Mat3 w_;
  Mat3 w_inv_;
  MatX jacobian_;
};

Vec3 solve_translation(const Points& rotated_landmarks, const std::vector<WeightedRay>& rays);
MatX translation_jacobian(const Points& rotated_landmarks, const std::vector<WeightedRay>& rays);

}  // namespace percap
