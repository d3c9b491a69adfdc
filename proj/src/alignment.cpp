#include "percap/alignment.hpp"

#include <Eigen/Eigenvalues>

namespace percap {

std::vector<WeightedRay> detection_rays(const std::vector<Camera>& cameras, const ObservationSet& obs,
                                        const std::vector<int>& camera_subset) {
  std::vector<int> subset = camera_subset;
  if (subset.empty()) {
    for (int c = 0; c < obs.camera_count(); ++c) subset.push_back(c);
  }
  std::vector<WeightedRay> rays;
  for (int c : subset) {
    const auto& view = obs.views.at(c);
    for (Eigen::Index m = 0; m < view.detections.rows(); ++m) {
      const double sigma = effective_confidence(view.confidences(m));
      rays.push_back({static_cast<int>(m), pixel_ray(cameras.at(c), view.detections.row(m).transpose()), sigma});
    }
  }
  return rays;
}

GlobalAlignment::GlobalAlignment(std::vector<WeightedRay> rays, int landmark_count)
    : rays_(std::move(rays)), landmark_count_(landmark_count), w_(Mat3::Zero()) {
  for (const auto& r : rays_) {
    if (r.landmark < 0 || r.landmark >= landmark_count_) throw InvalidInput("alignment ray references unknown landmark");
    if (r.confidence <= 0.0) continue;
    const Vec3& d = r.ray.direction;
    w_ += r.confidence * (Mat3::Identity() - d * d.transpose());
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(w_, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || !(lo > 0.0) || hi / lo > kMaxAlignmentCondition) {
    throw DegenerateGeometry("global alignment: active rays are (near) parallel or absent");
  }
  w_inv_ = w_.inverse();
  jacobian_ = MatX::Zero(3, 3 * landmark_count_);
  for (const auto& r : rays_) {
    if (r.confidence <= 0.0) continue;
    const Vec3& d = r.ray.direction;
    jacobian_.block<3, 3>(0, 3 * r.landmark) += r.confidence * w_inv_ * (d * d.transpose() - Mat3::Identity());
  }
}

Vec3 GlobalAlignment::solve(const Points& q) const {
  if (q.rows() != landmark_count_) throw InvalidInput("global alignment: landmark count mismatch");
  Vec3 rhs = Vec3::Zero();
  for (const auto& r : rays_) {
    if (r.confidence <= 0.0) continue;
    const Vec3& d = r.ray.direction;
    const Vec3& o = r.ray.origin;
    const Vec3 p = q.row(r.landmark).transpose();
    rhs += r.confidence * (d * d.dot(p - o) + o - p);
  }
  return w_inv_ * rhs;
}

double GlobalAlignment::objective(const Points& q, const Vec3& t) const {
  double total = 0.0;
  for (const auto& r : rays_) {
    if (r.confidence <= 0.0) continue;
    const Vec3 p = q.row(r.landmark).transpose() + t - r.ray.origin;
    total += r.confidence * p.cross(r.ray.direction).squaredNorm();
  }
  return total;
}

Vec3 GlobalAlignment::objective_gradient(const Points& q, const Vec3& t) const {
  Vec3 g = Vec3::Zero();
  for (const auto& r : rays_) {
    if (r.confidence <= 0.0) continue;
    const Vec3& d = r.ray.direction;
    const Vec3 p = q.row(r.landmark).transpose() + t - r.ray.origin;
    // ||p x d||^2 = p^T (I - d d^T) p for unit d.
    g += 2.0 * r.confidence * (p - d * d.dot(p));
  }
  return g;
}

Vec3 solve_translation(const Points& rotated_landmarks, const std::vector<WeightedRay>& rays) {
  return GlobalAlignment(rays, static_cast<int>(rotated_landmarks.rows())).solve(rotated_landmarks);
}

MatX translation_jacobian(const Points& rotated_landmarks, const std::vector<WeightedRay>& rays) {
  return GlobalAlignment(rays, static_cast<int>(rotated_landmarks.rows())).jacobian();
}

}  // namespace percap
