#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "percap/camera.hpp"
#include "percap/character.hpp"
#include "percap/mesh.hpp"
#include "percap/synthetic.hpp"

namespace fixtures {

using namespace percap;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  return {uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale)};
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  Eigen::Quaterniond q(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  return q.normalized().toRotationMatrix();
}

/// Latitude-longitude sphere with poles; outward-facing triangles.
inline TriMesh uv_sphere(int rings, int segments, double radius, const Vec3& centre = Vec3::Zero()) {
  std::vector<Vec3> v;
  v.push_back(centre + Vec3(0, radius, 0));
  for (int r = 1; r < rings; ++r) {
    const double phi = std::numbers::pi * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double th = 2.0 * std::numbers::pi * s / segments;
      v.push_back(centre + radius * Vec3(std::sin(phi) * std::cos(th), std::cos(phi), std::sin(phi) * std::sin(th)));
    }
  }
  v.push_back(centre + Vec3(0, -radius, 0));
  const int south = static_cast<int>(v.size()) - 1;
  auto at = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
  std::vector<Triangle> t;
  for (int s = 0; s < segments; ++s) t.push_back({0, at(1, s + 1), at(1, s)});
  for (int r = 1; r < rings - 1; ++r) {
    for (int s = 0; s < segments; ++s) {
      t.push_back({at(r, s), at(r, s + 1), at(r + 1, s)});
      t.push_back({at(r, s + 1), at(r + 1, s + 1), at(r + 1, s)});
    }
  }
  for (int s = 0; s < segments; ++s) t.push_back({south, at(rings - 1, s), at(rings - 1, s + 1)});
  Points p(v.size(), 3);
  for (std::size_t i = 0; i < v.size(); ++i) p.row(i) = v[i].transpose();
  return TriMesh(p, t);
}

/// nx by ny grid in the xy plane with random jitter; connected.
inline TriMesh jittered_grid(std::mt19937_64& rng, int nx, int ny, double spacing = 0.1, double jitter = 0.03) {
  Points p(nx * ny, 3);
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      p.row(y * nx + x) << x * spacing + uniform(rng, -jitter, jitter), y * spacing + uniform(rng, -jitter, jitter),
          uniform(rng, -jitter, jitter);
    }
  }
  std::vector<Triangle> t;
  for (int y = 0; y + 1 < ny; ++y) {
    for (int x = 0; x + 1 < nx; ++x) {
      const int a = y * nx + x;
      t.push_back({a, a + 1, a + nx});
      t.push_back({a + 1, a + nx + 1, a + nx});
    }
  }
  return TriMesh(p, t);
}

/// One root joint without DOFs and a single landmark at the origin.
inline Skeleton root_only_skeleton() {
  Skeleton s;
  s.joints.push_back({"root", -1, Vec3::Zero(), {}});
  s.landmarks.push_back({"root", 0, Vec3::Zero(), LandmarkClass::torso});
  return s;
}

/// Character on arbitrary geometry with every node skinned to the root.
inline TemplateCharacter rigid_character(const TriMesh& mesh, const TriMesh& decimated, Skeleton skeleton,
                                         double rigidity = 1.0) {
  CharacterInputs in;
  in.mesh = mesh;
  in.decimated = decimated;
  in.skeleton = std::move(skeleton);
  in.materials.classes = {{"skin", rigidity}};
  in.materials.labels.assign(mesh.vertex_count(), 0);
  in.node_skin_weights.assign(decimated.vertex_count(), {{0, 1.0}});
  in.metric_landmarks = {0};
  return assemble_character(std::move(in));
}

inline Camera simple_camera(double focal = 500.0, double c = 256.0, int size = 512) {
  Camera cam;
  cam.name = "cam";
  cam.intrinsics << focal, 0, c, 0, focal, c, 0, 0, 1;
  cam.width = size;
  cam.height = size;
  return cam;
}

/// Default capsule character built once per process.
inline const TemplateCharacter& capsule() {
  static const TemplateCharacter c = make_capsule_character(CapsuleCharacterSpec{}, 1);
  return c;
}

/// Small noiseless multi-view scene built once per process.
inline const SyntheticScene& small_scene() {
  static const SyntheticScene s = [] {
    SceneSpec spec;
    spec.frames = 3;
    spec.seed = 11;
    return make_scene(spec);
  }();
  return s;
}

}  // namespace fixtures
