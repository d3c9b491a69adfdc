#include "percap/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace percap {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline double edge_function(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

/// Tie-break for pixel centres exactly on an edge: every interior edge is
/// owned by exactly one of its two (consistently oriented) triangles.
inline bool owns_edge(const Vec2& a, const Vec2& b) {
  const double dy = b.y() - a.y();
  const double dx = b.x() - a.x();
  return dy > 0.0 || (dy == 0.0 && dx < 0.0);
}

inline bool covers(double w, bool owned) { return w > 0.0 || (w == 0.0 && owned); }

}  // namespace

DepthMap rasterize_depth(const Points& vertices, const std::vector<Triangle>& triangles, const Camera& camera,
                         int width, int height) {
  DepthMap depth = DepthMap::Constant(height, width, kInf);
  std::vector<Vec2> screen(vertices.rows());
  std::vector<double> z(vertices.rows());
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    const Vec3 pc = camera.extrinsics.apply(vertices.row(i).transpose());
    z[i] = pc.z();
    if (pc.z() > kMinDepth) {
      const Vec3 h = camera.intrinsics * pc;
      screen[i] = {h.x() / pc.z(), h.y() / pc.z()};
    }
  }
  for (const auto& tri : triangles) {
    int i0 = tri[0], i1 = tri[1], i2 = tri[2];
    if (z[i0] <= kMinDepth || z[i1] <= kMinDepth || z[i2] <= kMinDepth) continue;
    double area = edge_function(screen[i0], screen[i1], screen[i2]);
    if (area == 0.0 || !std::isfinite(area)) continue;
    if (area < 0.0) {
      std::swap(i1, i2);
      area = -area;
    }
    const Vec2& s0 = screen[i0];
    const Vec2& s1 = screen[i1];
    const Vec2& s2 = screen[i2];
    const bool own0 = owns_edge(s1, s2);
    const bool own1 = owns_edge(s2, s0);
    const bool own2 = owns_edge(s0, s1);
    const double min_x = std::min({s0.x(), s1.x(), s2.x()});
    const double max_x = std::max({s0.x(), s1.x(), s2.x()});
    const double min_y = std::min({s0.y(), s1.y(), s2.y()});
    const double max_y = std::max({s0.y(), s1.y(), s2.y()});
    const int x_begin = std::max(0, static_cast<int>(std::ceil(min_x)));
    const int x_end = std::min(width - 1, static_cast<int>(std::floor(max_x)));
    const int y_begin = std::max(0, static_cast<int>(std::ceil(min_y)));
    const int y_end = std::min(height - 1, static_cast<int>(std::floor(max_y)));
    const double iz0 = 1.0 / z[i0], iz1 = 1.0 / z[i1], iz2 = 1.0 / z[i2];
    for (int py = y_begin; py <= y_end; ++py) {
      for (int px = x_begin; px <= x_end; ++px) {
        const Vec2 p(px, py);
        const double w0 = edge_function(s1, s2, p);
        const double w1 = edge_function(s2, s0, p);
        const double w2 = edge_function(s0, s1, p);
        if (!covers(w0, own0) || !covers(w1, own1) || !covers(w2, own2)) continue;
        const double inv_z = (w0 / area) * iz0 + (w1 / area) * iz1 + (w2 / area) * iz2;
        const double d = 1.0 / inv_z;
        if (d < depth(py, px)) depth(py, px) = d;
      }
    }
  }
  return depth;
}

Mask depth_to_mask(const DepthMap& depth) {
  return depth.unaryExpr([](double d) -> std::uint8_t { return std::isfinite(d) ? 1 : 0; });
}

Mask render_mask(const Points& vertices, const std::vector<Triangle>& triangles, const Camera& camera) {
  return depth_to_mask(rasterize_depth(vertices, triangles, camera));
}

namespace {

/// Lower envelope of parabolas (squared 1D distance transform) in place.
void squared_dt_1d(std::vector<double>& f, std::vector<double>& out, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  const auto intersect = [&f](int q, int r) {
    return ((f[q] + static_cast<double>(q) * q) - (f[r] + static_cast<double>(r) * r)) / (2.0 * (q - r));
  };
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double d = q - v[k];
    out[q] = d * d + f[v[k]];
  }
}

Image<double> squared_distance(const Mask& mask) {
  constexpr double kFar = 1e20;
  const Eigen::Index h = mask.rows();
  const Eigen::Index w = mask.cols();
  Image<double> grid(h, w);
  const Eigen::Index n = std::max(h, w);
  std::vector<double> f, out;
  std::vector<int> v(static_cast<std::size_t>(n) + 1);
  std::vector<double> z(static_cast<std::size_t>(n) + 2);
  f.resize(static_cast<std::size_t>(h));
  out.resize(static_cast<std::size_t>(h));
  for (Eigen::Index x = 0; x < w; ++x) {
    for (Eigen::Index y = 0; y < h; ++y) f[y] = mask(y, x) ? 0.0 : kFar;
    squared_dt_1d(f, out, v, z);
    for (Eigen::Index y = 0; y < h; ++y) grid(y, x) = out[y];
  }
  f.resize(static_cast<std::size_t>(w));
  out.resize(static_cast<std::size_t>(w));
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) f[x] = grid(y, x);
    squared_dt_1d(f, out, v, z);
    for (Eigen::Index x = 0; x < w; ++x) grid(y, x) = out[x];
  }
  return grid;
}

}  // namespace

DistanceImage distance_transform(const Mask& mask) {
  if (mask.size() == 0) return DistanceImage();
  if ((mask == 0).all()) {
    warn("distance_transform: mask has no foreground pixels");
    return DistanceImage::Constant(mask.rows(), mask.cols(), std::numeric_limits<float>::infinity());
  }
  const Image<double> sq = squared_distance(mask);
  return sq.unaryExpr([](double d) { return static_cast<float>(std::sqrt(d)); });
}

DistanceImage silhouette_field(const Mask& mask) {
  if (mask.size() == 0) return DistanceImage();
  const float cap = static_cast<float>(mask.rows() + mask.cols());
  const bool any_fg = (mask != 0).any();
  const bool any_bg = (mask == 0).any();
  const Mask inverse = mask.unaryExpr([](std::uint8_t m) -> std::uint8_t { return m ? 0 : 1; });
  const Image<double> outside = any_fg ? squared_distance(mask) : Image<double>();
  const Image<double> inside = any_bg ? squared_distance(inverse) : Image<double>();
  DistanceImage field(mask.rows(), mask.cols());
  for (Eigen::Index y = 0; y < mask.rows(); ++y) {
    for (Eigen::Index x = 0; x < mask.cols(); ++x) {
      if (mask(y, x)) {
        field(y, x) = any_bg ? -static_cast<float>(std::sqrt(inside(y, x)) - 0.5) : -cap;
      } else {
        field(y, x) = any_fg ? static_cast<float>(std::sqrt(outside(y, x)) - 0.5) : cap;
      }
    }
  }
  return field;
}

EdgeTopology::EdgeTopology(const std::vector<Triangle>& triangles) {
  struct Entry {
    int a, b, face;
  };
  std::vector<Entry> entries;
  entries.reserve(triangles.size() * 3);
  for (std::size_t f = 0; f < triangles.size(); ++f) {
    for (int e = 0; e < 3; ++e) {
      const int a = triangles[f][e];
      const int b = triangles[f][(e + 1) % 3];
      entries.push_back({std::min(a, b), std::max(a, b), static_cast<int>(f)});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& l, const Entry& r) {
    return l.a != r.a ? l.a < r.a : (l.b != r.b ? l.b < r.b : l.face < r.face);
  });
  for (std::size_t i = 0; i < entries.size();) {
    std::size_t j = i + 1;
    while (j < entries.size() && entries[j].a == entries[i].a && entries[j].b == entries[i].b) ++j;
    // Non-manifold edges are paired in order of face index.
    for (std::size_t k = i; k < j; k += 2) {
      edges_.push_back({entries[k].a, entries[k].b, entries[k].face, k + 1 < j ? entries[k + 1].face : -1});
    }
    i = j;
  }
}

std::vector<BoundaryVertex> boundary_vertices(const Points& vertices, const std::vector<Triangle>& triangles,
                                              const Camera& camera, const DepthMap& depth) {
  return boundary_vertices(vertices, triangles, EdgeTopology(triangles), camera, depth);
}

std::vector<BoundaryVertex> boundary_vertices(const Points& vertices, const std::vector<Triangle>& triangles,
                                              const EdgeTopology& topology, const Camera& camera,
                                              const DepthMap& depth) {
  const Vec3 eye = camera.origin();
  std::vector<std::int8_t> front(triangles.size());
  for (std::size_t f = 0; f < triangles.size(); ++f) {
    const Vec3 p0 = vertices.row(triangles[f][0]).transpose();
    const Vec3 p1 = vertices.row(triangles[f][1]).transpose();
    const Vec3 p2 = vertices.row(triangles[f][2]).transpose();
    const double facing = (p1 - p0).cross(p2 - p0).dot(p0 - eye);
    front[f] = facing < 0.0 ? 1 : 0;
  }
  std::vector<std::uint8_t> contour(vertices.rows(), 0);
  for (const auto& e : topology.edges()) {
    if (e.face1 < 0 || front[e.face0] != front[e.face1]) {
      contour[e.a] = 1;
      contour[e.b] = 1;
    }
  }

  const int w = static_cast<int>(depth.cols());
  const int h = static_cast<int>(depth.rows());
  const auto fg = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && std::isfinite(depth(y, x)); };
  const auto depth_matches = [&](int x, int y, double z) {
    return fg(x, y) && std::abs(z - depth(y, x)) <= kVisibilityTolerance * depth(y, x);
  };

  std::vector<BoundaryVertex> out;
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    if (!contour[i]) continue;
    const Vec3 pc = camera.extrinsics.apply(vertices.row(i).transpose());
    if (pc.z() <= kMinDepth) continue;
    const Vec3 hp = camera.intrinsics * pc;
    const int x = static_cast<int>(std::lround(hp.x() / pc.z()));
    const int y = static_cast<int>(std::lround(hp.y() / pc.z()));
    if (x < 0 || y < 0 || x >= w || y >= h) continue;
    const bool on_background = !fg(x, y);
    bool visible = false;
    Vec2 away = Vec2::Zero();
    if (on_background) {
      // Nothing covers the vertex's own pixel, so it is unoccluded there.
      const int off[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
      for (const auto& o : off) {
        if (fg(x + o[0], y + o[1])) {
          visible = true;
          away = Vec2(-o[0], -o[1]);
          break;
        }
      }
    } else {
      for (int dy = -1; dy <= 1 && !visible; ++dy) {
        for (int dx = -1; dx <= 1 && !visible; ++dx) visible = depth_matches(x + dx, y + dy, pc.z());
      }
    }
    if (!visible) continue;
    const bool next_to_background = on_background || !fg(x + 1, y) || !fg(x - 1, y) || !fg(x, y + 1) || !fg(x, y - 1);
    if (!next_to_background) continue;
    const double gx = static_cast<double>(fg(x + 1, y)) - static_cast<double>(fg(x - 1, y));
    const double gy = static_cast<double>(fg(x, y + 1)) - static_cast<double>(fg(x, y - 1));
    Vec2 normal(-gx, -gy);
    if (normal.squaredNorm() == 0.0) {
      if (on_background) {
        normal = away;
      } else {
        const int off[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (const auto& o : off) {
          if (!fg(x + o[0], y + o[1])) {
            normal = Vec2(o[0], o[1]);
            break;
          }
        }
      }
    }
    if (normal.squaredNorm() > 0.0) normal.normalize();
    out.push_back({static_cast<int>(i), normal});
  }
  return out;
}

double mask_iou(const Mask& a, const Mask& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInput("mask_iou: dimension mismatch");
  long inter = 0, uni = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const bool x = a.data()[i] != 0;
    const bool y = b.data()[i] != 0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace percap
