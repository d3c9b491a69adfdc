#pragma once

#include <array>
#include <filesystem>
#include <utility>
#include <vector>

#include "percap/core.hpp"

namespace percap {

using Triangle = std::array<int, 3>;
using Edge = std::pair<int, int>;

/// Triangle mesh with derived undirected edge list (each pair once, first < second).
class TriMesh {
 public:
  TriMesh() = default;
  /// Validates indices; throws InvalidInput on out-of-range or repeated indices.
  TriMesh(Points vertices, std::vector<Triangle> triangles);

  const Points& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Edge>& edges() const { return edges_; }

  int vertex_count() const { return static_cast<int>(vertices_.rows()); }
  int triangle_count() const { return static_cast<int>(triangles_.size()); }
  bool empty() const { return vertices_.rows() == 0; }

  /// Vertex-to-vertex adjacency derived from the edge list.
  std::vector<std::vector<int>> adjacency() const;

 private:
  Points vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Edge> edges_;
};

std::vector<Edge> unique_edges(const std::vector<Triangle>& triangles);

/// Wavefront OBJ (v / f records only). Numbers written with shortest
/// round-trip formatting so load(save(m)) is bit-exact.
void save_obj(const std::filesystem::path& path, const Points& vertices,
              const std::vector<Triangle>& triangles);
TriMesh load_obj(const std::filesystem::path& path);

}  // namespace percap
