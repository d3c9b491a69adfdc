#pragma once

#include <vector>

#include "percap/camera.hpp"
#include "percap/core.hpp"
#include "percap/mesh.hpp"

namespace percap {

/// Z-buffered rasterisation with perspective-correct depth. A pixel is covered
/// when its centre lies inside a projected triangle (top-left fill rule).
/// Triangles with a vertex at or behind the near plane are skipped.
/// Background pixels hold +infinity.
DepthMap rasterize_depth(const Points& vertices, const std::vector<Triangle>& triangles, const Camera& camera,
                         int width, int height);
inline DepthMap rasterize_depth(const Points& vertices, const std::vector<Triangle>& triangles,
                                const Camera& camera) {
  return rasterize_depth(vertices, triangles, camera, camera.width, camera.height);
}

/// 1 where the depth map is finite.
Mask depth_to_mask(const DepthMap& depth);
Mask render_mask(const Points& vertices, const std::vector<Triangle>& triangles, const Camera& camera);

/// Exact Euclidean distance (pixels) to the nearest foreground pixel; zero on
/// the foreground. An empty mask yields +infinity everywhere.
DistanceImage distance_transform(const Mask& mask);

/// Signed distance to the silhouette outline: negative inside, positive
/// outside, zero half-way between adjacent foreground and background centres.
DistanceImage silhouette_field(const Mask& mask);

/// Undirected edge -> incident faces, reused across calls on a fixed topology.
class EdgeTopology {
 public:
  explicit EdgeTopology(const std::vector<Triangle>& triangles);

  struct EdgeFaces {
    int a, b;
    int face0, face1;  ///< face1 = -1 on open boundaries
  };
  const std::vector<EdgeFaces>& edges() const { return edges_; }

 private:
  std::vector<EdgeFaces> edges_;
};

struct BoundaryVertex {
  int vertex = 0;
  Vec2 normal = Vec2::Zero();  ///< outward image-space normal (foreground -> background)
};

inline constexpr double kVisibilityTolerance = 0.01;

/// Vertices on the depth discontinuity of `depth`: on a view contour edge and
/// either projecting onto a background pixel with a foreground 8-neighbour, or
/// onto a foreground pixel next to background with depth within 1% of the map
/// somewhere in its 3x3 neighbourhood.
std::vector<BoundaryVertex> boundary_vertices(const Points& vertices, const std::vector<Triangle>& triangles,
                                              const EdgeTopology& topology, const Camera& camera,
                                              const DepthMap& depth);
std::vector<BoundaryVertex> boundary_vertices(const Points& vertices, const std::vector<Triangle>& triangles,
                                              const Camera& camera, const DepthMap& depth);

struct FieldSample {
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();  ///< d value / d pixel
};

/// Bilinear sample at a continuous pixel position. Outside the image the
/// position clamps to the border and the gradient across that axis is zero.
template <typename T>
FieldSample sample_dt(const Image<T>& image, const Vec2& pixel) {
  FieldSample out;
  const Eigen::Index w = image.cols();
  const Eigen::Index h = image.rows();
  if (w == 0 || h == 0) return out;
  double x = pixel.x();
  double y = pixel.y();
  bool clamp_x = false;
  bool clamp_y = false;
  if (!(x > 0.0)) { x = 0.0; clamp_x = true; }
  if (!(x < static_cast<double>(w - 1))) { x = static_cast<double>(w - 1); clamp_x = true; }
  if (!(y > 0.0)) { y = 0.0; clamp_y = true; }
  if (!(y < static_cast<double>(h - 1))) { y = static_cast<double>(h - 1); clamp_y = true; }
  const Eigen::Index x0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(x), std::max<Eigen::Index>(w - 2, 0));
  const Eigen::Index y0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(y), std::max<Eigen::Index>(h - 2, 0));
  const Eigen::Index x1 = std::min<Eigen::Index>(x0 + 1, w - 1);
  const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, h - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double v00 = image(y0, x0), v01 = image(y0, x1), v10 = image(y1, x0), v11 = image(y1, x1);
  const double top = v00 + fx * (v01 - v00);
  const double bottom = v10 + fx * (v11 - v10);
  out.value = top + fy * (bottom - top);
  const double gx = (1.0 - fy) * (v01 - v00) + fy * (v11 - v10);
  const double gy = bottom - top;
  out.gradient = {clamp_x || x1 == x0 ? 0.0 : gx, clamp_y || y1 == y0 ? 0.0 : gy};
  return out;
}

/// 1 when the field gradient and the outward boundary normal do not oppose.
inline double directional_weight(const Vec2& boundary_normal, const Vec2& field_gradient) {
  return boundary_normal.dot(field_gradient) >= 0.0 ? 1.0 : 0.0;
}

double mask_iou(const Mask& a, const Mask& b);

}  // namespace percap
