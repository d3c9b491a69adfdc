#include "percap/camera.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace percap {

using nlohmann::json;

void Camera::validate() const {
  if (!(fx() > 0.0 && fy() > 0.0)) throw CalibrationError("camera '" + name + "': K focal lengths must be > 0");
  if (intrinsics(2, 0) != 0.0 || intrinsics(2, 1) != 0.0 || intrinsics(2, 2) != 1.0 || intrinsics(1, 0) != 0.0) {
    throw CalibrationError("camera '" + name + "': K must be upper triangular with K[2][2] = 1");
  }
  if (width <= 0 || height <= 0) throw CalibrationError("camera '" + name + "': width/height must be > 0");
  const Mat3& r = extrinsics.rotation;
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 || std::abs(r.determinant() - 1.0) > 1e-6) {
    throw CalibrationError("camera '" + name + "': E rotation is not orthonormal");
  }
  if (!extrinsics.translation.allFinite()) throw CalibrationError("camera '" + name + "': E translation not finite");
}

Vec2 project(const Camera& camera, const Vec3& world) {
  const Vec3 pc = camera.extrinsics.apply(world);
  if (pc.z() <= kMinDepth) throw BehindCamera("point behind camera '" + camera.name + "'");
  const Vec3 h = camera.intrinsics * pc;
  return {h.x() / pc.z(), h.y() / pc.z()};
}

bool project_with_jacobian(const Camera& camera, const Vec3& world, Vec2& pixel,
                           Eigen::Matrix<double, 2, 3>& jacobian) {
  const Vec3 pc = camera.extrinsics.apply(world);
  if (pc.z() <= kMinDepth) return false;
  const Mat3& k = camera.intrinsics;
  const double iz = 1.0 / pc.z();
  const Vec3 h = k * pc;
  pixel = {h.x() * iz, h.y() * iz};
  // d(h_xy / z)/d pc = (K_xy - pixel * e_z^T) / z
  Eigen::Matrix<double, 2, 3> d_cam;
  d_cam.row(0) = (k.row(0) - pixel.x() * Eigen::RowVector3d::UnitZ()) * iz;
  d_cam.row(1) = (k.row(1) - pixel.y() * Eigen::RowVector3d::UnitZ()) * iz;
  jacobian = d_cam * camera.extrinsics.rotation;
  return true;
}

Ray pixel_ray(const Camera& camera, const Vec2& pixel) {
  // Back-project (u, v, 1) at unit depth and bring it to world space.
  const Vec3 cam_dir = camera.intrinsics.triangularView<Eigen::Upper>().solve(Vec3(pixel.x(), pixel.y(), 1.0));
  const Vec3 dir = camera.extrinsics.rotation.transpose() * cam_dir;
  return {camera.origin(), dir.normalized()};
}

Camera look_at_camera(const std::string& name, const Vec3& eye, const Vec3& target, const Vec3& up,
                      double focal, int width, int height) {
  const Vec3 z = (target - eye).normalized();
  Vec3 y = -(up - up.dot(z) * z);
  if (y.norm() < 1e-12) throw InvalidInput("look_at_camera: up is parallel to the viewing direction");
  y.normalize();
  const Vec3 x = y.cross(z);
  Camera cam;
  cam.name = name;
  cam.extrinsics.rotation.row(0) = x.transpose();
  cam.extrinsics.rotation.row(1) = y.transpose();
  cam.extrinsics.rotation.row(2) = z.transpose();
  cam.extrinsics.translation = -(cam.extrinsics.rotation * eye);
  cam.intrinsics << focal, 0.0, (width - 1) * 0.5, 0.0, focal, (height - 1) * 0.5, 0.0, 0.0, 1.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

void save_rig(const std::vector<Camera>& cameras, const std::filesystem::path& path) {
  json j;
  j["cameras"] = json::array();
  for (const auto& cam : cameras) {
    json k = json::array();
    for (int r = 0; r < 3; ++r) k.push_back({cam.intrinsics(r, 0), cam.intrinsics(r, 1), cam.intrinsics(r, 2)});
    json e = json::array();
    for (int r = 0; r < 3; ++r) {
      e.push_back({cam.extrinsics.rotation(r, 0), cam.extrinsics.rotation(r, 1), cam.extrinsics.rotation(r, 2),
                   cam.extrinsics.translation(r)});
    }
    e.push_back({0.0, 0.0, 0.0, 1.0});
    j["cameras"].push_back({{"name", cam.name}, {"K", k}, {"E", e}, {"width", cam.width}, {"height", cam.height}});
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

std::vector<Camera> load_rig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open rig " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  if (!j.contains("cameras") || !j["cameras"].is_array()) throw LoadError(path.string() + ": cameras: missing");
  std::vector<Camera> cams;
  int index = 0;
  for (const auto& cj : j["cameras"]) {
    const std::string where = path.string() + ": cameras[" + std::to_string(index++) + "]";
    Camera cam;
    try {
      cam.name = cj.value("name", "cam" + std::to_string(index - 1));
      const auto k = cj.at("K").get<std::vector<std::vector<double>>>();
      const auto e = cj.at("E").get<std::vector<std::vector<double>>>();
      if (k.size() != 3 || e.size() != 4) throw LoadError(where + ": K must be 3x3 and E 4x4");
      for (int r = 0; r < 3; ++r) {
        if (k[r].size() != 3 || e[r].size() != 4) throw LoadError(where + ": K must be 3x3 and E 4x4");
        for (int c = 0; c < 3; ++c) {
          cam.intrinsics(r, c) = k[r][c];
          cam.extrinsics.rotation(r, c) = e[r][c];
        }
        cam.extrinsics.translation(r) = e[r][3];
      }
      cam.width = cj.at("width").get<int>();
      cam.height = cj.at("height").get<int>();
    } catch (const json::exception& ex) {
      throw LoadError(where + ": " + ex.what());
    }
    try {
      cam.validate();
    } catch (const CalibrationError& ex) {
      throw CalibrationError(where + ": " + ex.what());
    }
    cams.push_back(std::move(cam));
  }
  return cams;
}

}  // namespace percap
