#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "percap/core.hpp"

namespace percap {

/// Ideal pinhole camera. Pixel centres sit at integer coordinates, origin
/// top-left, +y down; camera space looks along +z.
struct Camera {
  std::string name;
  Mat3 intrinsics = Mat3::Identity();
  Rigid extrinsics;  ///< world -> camera
  int width = 0;
  int height = 0;

  double fx() const { return intrinsics(0, 0); }
  double fy() const { return intrinsics(1, 1); }
  /// Camera centre in world coordinates.
  Vec3 origin() const { return -(extrinsics.rotation.transpose() * extrinsics.translation); }
  const Mat3& rotation() const { return extrinsics.rotation; }
  /// Throws CalibrationError on invalid intrinsics or a non-orthonormal rotation.
  void validate() const;
};

inline constexpr double kMinDepth = 1e-6;

/// pi_c. Throws BehindCamera when the camera-space depth is <= 1e-6.
Vec2 project(const Camera& camera, const Vec3& world);

/// Projection and its 2x3 Jacobian with respect to the world point.
/// Returns false (leaving outputs untouched) for points behind the camera.
bool project_with_jacobian(const Camera& camera, const Vec3& world, Vec2& pixel,
                           Eigen::Matrix<double, 2, 3>& jacobian);

/// Camera-space depth of a world point.
inline double camera_depth(const Camera& camera, const Vec3& world) {
  return camera.extrinsics.rotation.row(2).dot(world) + camera.extrinsics.translation.z();
}

struct Ray {
  Vec3 origin;
  Vec3 direction;  ///< unit length
};

/// World-space ray from the camera origin through `pixel`.
Ray pixel_ray(const Camera& camera, const Vec2& pixel);

/// Camera at `eye` looking at `target` with world `up` mapped to image up.
Camera look_at_camera(const std::string& name, const Vec3& eye, const Vec3& target, const Vec3& up,
                      double focal, int width, int height);

/// Rig file (JSON): {"cameras": [{"name", "K": 3x3, "E": 4x4 world->camera,
/// "width", "height"}, ...]}.
void save_rig(const std::vector<Camera>& cameras, const std::filesystem::path& path);
std::vector<Camera> load_rig(const std::filesystem::path& path);

}  // namespace percap
