#include "percap/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace percap {

std::vector<Edge> unique_edges(const std::vector<Triangle>& triangles) {
  std::vector<Edge> edges;
  edges.reserve(triangles.size() * 3);
  for (const auto& t : triangles) {
    for (int e = 0; e < 3; ++e) {
      const int a = t[e];
      const int b = t[(e + 1) % 3];
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

TriMesh::TriMesh(Points vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  const int n = vertex_count();
  for (std::size_t f = 0; f < triangles_.size(); ++f) {
    const auto& t = triangles_[f];
    for (int idx : t) {
      if (idx < 0 || idx >= n) {
        throw InvalidInput("triangle " + std::to_string(f) + " references vertex " +
                           std::to_string(idx) + " of " + std::to_string(n));
      }
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw InvalidInput("triangle " + std::to_string(f) + " repeats a vertex index");
    }
  }
  edges_ = unique_edges(triangles_);
}

std::vector<std::vector<int>> TriMesh::adjacency() const {
  std::vector<std::vector<int>> adj(vertex_count());
  for (const auto& [a, b] : edges_) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return adj;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(const std::string& token, const std::filesystem::path& path, int line) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw LoadError(path.string() + ":" + std::to_string(line) + ": bad number '" + token + "'");
  }
  return v;
}

}  // namespace

void save_obj(const std::filesystem::path& path, const Points& vertices,
              const std::vector<Triangle>& triangles) {
  std::string out;
  out.reserve(static_cast<std::size_t>(vertices.rows()) * 64 + triangles.size() * 24);
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    out += "v ";
    append_double(out, vertices(i, 0));
    out += ' ';
    append_double(out, vertices(i, 1));
    out += ' ';
    append_double(out, vertices(i, 2));
    out += '\n';
  }
  for (const auto& t : triangles) {
    out += "f " + std::to_string(t[0] + 1) + ' ' + std::to_string(t[1] + 1) + ' ' +
           std::to_string(t[2] + 1) + '\n';
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error("cannot write " + path.string());
  file << out;
}

TriMesh load_obj(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw LoadError("cannot open mesh " + path.string());
  std::vector<Vec3> verts;
  std::vector<Triangle> tris;
  std::string line;
  int line_no = 0;
  while (std::getline(file, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      std::string x, y, z;
      if (!(ss >> x >> y >> z)) {
        throw LoadError(path.string() + ":" + std::to_string(line_no) + ": vertex needs 3 coordinates");
      }
      verts.emplace_back(parse_double(x, path, line_no), parse_double(y, path, line_no),
                         parse_double(z, path, line_no));
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        // Accept "i", "i/t", "i/t/n" forms.
        const auto slash = tok.find('/');
        int i = 0;
        const std::string head = tok.substr(0, slash);
        auto res = std::from_chars(head.data(), head.data() + head.size(), i);
        if (res.ec != std::errc()) {
          throw LoadError(path.string() + ":" + std::to_string(line_no) + ": bad face index");
        }
        idx.push_back(i - 1);
      }
      if (idx.size() < 3) {
        throw LoadError(path.string() + ":" + std::to_string(line_no) + ": face needs 3 indices");
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) tris.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  Points v(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  try {
    return TriMesh(std::move(v), std::move(tris));
  } catch (const InvalidInput& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace percap
