#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "percap/character.hpp"
#include "percap/mesh.hpp"

using namespace percap;
using fixtures::uniform;

namespace {

VecX bellman_ford(const TriMesh& mesh, int source) {
  const double inf = std::numeric_limits<double>::infinity();
  VecX d = VecX::Constant(mesh.vertex_count(), inf);
  d(source) = 0.0;
  const Points& v = mesh.vertices();
  for (int pass = 0; pass < mesh.vertex_count(); ++pass) {
    bool changed = false;
    for (const auto& [a, b] : mesh.edges()) {
      const double len = (v.row(a) - v.row(b)).norm();
      if (d(a) + len < d(b)) { d(b) = d(a) + len; changed = true; }
      if (d(b) + len < d(a)) { d(a) = d(b) + len; changed = true; }
    }
    if (!changed) break;
  }
  return d;
}

TriMesh chain3() {
  Points q(4, 3);
  q << 0, 0, 0, 1, 0, 0, 2, 0, 0, 1, 5, 0;
  return TriMesh(q, {{0, 1, 3}, {1, 2, 3}});
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("percap_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("trimesh rejects bad indices and derives unique edges") {
  Points p = Points::Zero(3, 3);
  CHECK_THROWS_AS(TriMesh(p, {{0, 1, 3}}), InvalidInput);
  CHECK_THROWS_AS(TriMesh(p, {{0, 1, 1}}), InvalidInput);
  Points q = Points::Random(4, 3);
  TriMesh m(q, {{0, 1, 2}, {0, 2, 3}, {2, 1, 0}});
  std::set<Edge> unique(m.edges().begin(), m.edges().end());
  CHECK(unique.size() == m.edges().size());
  CHECK(m.edges().size() == 5);
  for (const auto& [a, b] : m.edges()) CHECK(a < b);
}

TEST_CASE("obj round trip is bit exact") {
  std::mt19937_64 rng(3);
  const TriMesh m = fixtures::jittered_grid(rng, 5, 4);
  const auto dir = temp_dir("obj");
  save_obj(dir / "m.obj", m.vertices(), m.triangles());
  const TriMesh back = load_obj(dir / "m.obj");
  CHECK(back.vertices() == m.vertices());
  CHECK(back.triangles() == m.triangles());
}

TEST_CASE("geodesic distances") {
  const TriMesh chain = chain3();
  const VecX d = geodesic_distances(chain, 0);
  CHECK(d(0) == 0.0);
  CHECK(d(1) == doctest::Approx(1.0));
  CHECK(d(2) == doctest::Approx(2.0));
  CHECK_THROWS_AS(geodesic_distances(chain, 7), InvalidInput);

  SUBCASE("random meshes match bellman-ford") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const TriMesh m = fixtures::jittered_grid(rng, 9, 7);
      const int src = static_cast<int>(rng() % m.vertex_count());
      const VecX fast = geodesic_distances(m, src);
      const VecX oracle = bellman_ford(m, src);
      CHECK((fast - oracle).cwiseAbs().maxCoeff() < 1e-12);
      for (const auto& [a, b] : m.edges()) {
        const double len = (m.vertices().row(a) - m.vertices().row(b)).norm();
        CHECK(fast(b) <= fast(a) + len + 1e-12);
      }
    }
  }

  SUBCASE("unreached vertices are infinite") {
    Points p(6, 3);
    p << 0, 0, 0, 1, 0, 0, 0, 1, 0, 5, 0, 0, 6, 0, 0, 5, 1, 0;
    TriMesh m(p, {{0, 1, 2}, {3, 4, 5}});
    const VecX d = geodesic_distances(m, 0);
    CHECK(std::isinf(d(4)));
  }
}

TEST_CASE("embedded graph construction") {
  SUBCASE("identity decimation") {
    std::mt19937_64 rng(8);
    const TriMesh m = fixtures::jittered_grid(rng, 4, 4);
    const EmbeddedGraph g = build_embedded_graph(m, m);
    CHECK(g.node_count() == m.vertex_count());
    const auto adj = m.adjacency();
    for (int k = 0; k < g.node_count(); ++k) {
      CHECK(g.node_vertex[k] == k);
      CHECK(g.nodes.row(k) == m.vertices().row(k));
      auto expected = adj[k];
      std::sort(expected.begin(), expected.end());
      CHECK(g.neighbors[k] == expected);
    }
  }

  SUBCASE("nodes are exact nearest mesh vertices") {
    std::mt19937_64 rng(9);
    const TriMesh m = fixtures::jittered_grid(rng, 20, 10);
    REQUIRE(m.vertex_count() == 200);
    Points dp(20, 3);
    for (int i = 0; i < 20; ++i) dp.row(i) = fixtures::random_vec(rng).cwiseAbs().transpose();
    std::vector<Triangle> tris;
    for (int i = 1; i + 1 < 20; ++i) tris.push_back({0, i, i + 1});
    const TriMesh dec(dp, tris);
    const EmbeddedGraph g = build_embedded_graph(m, dec);
    for (int k = 0; k < 20; ++k) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m.vertex_count(); ++i) {
        const double d = (m.vertices().row(i) - dp.row(k)).squaredNorm();
        if (d < best_d) { best_d = d; best = i; }
      }
      CHECK(g.node_vertex[k] == best);
      CHECK(g.nodes.row(k) == m.vertices().row(best));
    }
  }

  SUBCASE("invalid inputs") {
    std::mt19937_64 rng(1);
    const TriMesh m = fixtures::jittered_grid(rng, 4, 4);
    CHECK_THROWS_AS(build_embedded_graph(TriMesh(), m), InvalidInput);
    Points small = Points::Random(3, 3);
    CHECK_THROWS_AS(build_embedded_graph(m, TriMesh(small, {{0, 1, 2}})), InvalidInput);
  }
}

TEST_CASE("vertex node weights") {
  SUBCASE("vertex on a node with one influence") {
    std::mt19937_64 rng(2);
    const TriMesh m = fixtures::jittered_grid(rng, 4, 4);
    EmbeddedGraph g = build_embedded_graph(m, m);
    compute_vertex_node_weights(m, g, 1);
    for (int i = 0; i < m.vertex_count(); ++i) {
      REQUIRE(g.influences[i].size() == 1);
      CHECK(g.influences[i][0].node == i);
      CHECK(g.influences[i][0].weight == 1.0);
    }
  }

  SUBCASE("equidistant nodes share weight equally") {
    const TriMesh m = chain3();
    EmbeddedGraph g;
    g.nodes = Points(2, 3);
    g.nodes.row(0) = m.vertices().row(0);
    g.nodes.row(1) = m.vertices().row(2);
    g.node_vertex = {0, 2};
    g.neighbors = {{1}, {0}};
    compute_vertex_node_weights(m, g, 2);
    const auto& inf = g.influences[1];
    REQUIRE(inf.size() == 2);
    CHECK(inf[0].weight == doctest::Approx(0.5));
    CHECK(inf[1].weight == doctest::Approx(0.5));
  }

  SUBCASE("random meshes match exhaustive geodesic search") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 5; ++trial) {
      const TriMesh m = fixtures::jittered_grid(rng, 10, 8);
      std::vector<int> picks;
      for (int i = 0; i < m.vertex_count(); i += 7) picks.push_back(i);
      Points dp(picks.size(), 3);
      for (std::size_t k = 0; k < picks.size(); ++k) dp.row(k) = m.vertices().row(picks[k]);
      std::vector<Triangle> tris;
      for (int i = 1; i + 1 < static_cast<int>(picks.size()); ++i) tris.push_back({0, i, i + 1});
      EmbeddedGraph g = build_embedded_graph(m, TriMesh(dp, tris));
      const int influences = 4;
      compute_vertex_node_weights(m, g, influences);
      std::vector<VecX> from_node;
      for (int k = 0; k < g.node_count(); ++k) from_node.push_back(bellman_ford(m, g.node_vertex[k]));
      for (int i = 0; i < m.vertex_count(); ++i) {
        std::vector<std::pair<double, int>> all;
        for (int k = 0; k < g.node_count(); ++k) all.emplace_back(from_node[k](i), k);
        std::sort(all.begin(), all.end());
        std::set<int> expected;
        for (int j = 0; j < influences; ++j) expected.insert(all[j].second);
        std::set<int> got;
        double sum = 0.0;
        const double d_max = 1.05 * all[influences - 1].first;
        std::map<int, double> raw;
        double raw_sum = 0.0;
        for (int j = 0; j < influences; ++j) {
          raw[all[j].second] = std::pow(1.0 - all[j].first / d_max, 2);
          raw_sum += raw[all[j].second];
        }
        for (const auto& w : g.influences[i]) {
          got.insert(w.node);
          sum += w.weight;
          CHECK(w.weight >= 0.0);
          CHECK(w.weight == doctest::Approx(raw[w.node] / raw_sum).epsilon(1e-9));
        }
        CHECK(got == expected);
        CHECK(std::abs(sum - 1.0) < 1e-9);
      }
    }
  }

  SUBCASE("unreachable vertex is a construction error") {
    Points p(6, 3);
    p << 0, 0, 0, 1, 0, 0, 0, 1, 0, 5, 0, 0, 6, 0, 0, 5, 1, 0;
    TriMesh m(p, {{0, 1, 2}, {3, 4, 5}});
    EmbeddedGraph g;
    g.nodes = p.topRows(1);
    g.node_vertex = {0};
    g.neighbors = {{}};
    CHECK_THROWS_AS(compute_vertex_node_weights(m, g, 1), ConstructionError);
  }
}

TEST_CASE("node rigidity") {
  std::mt19937_64 rng(21);
  const TriMesh m = fixtures::jittered_grid(rng, 8, 8);
  std::vector<int> picks{0, 5, 18, 27, 36, 45, 60, 63};
  Points dp(picks.size(), 3);
  for (std::size_t k = 0; k < picks.size(); ++k) dp.row(k) = m.vertices().row(picks[k]);
  const TriMesh dec(dp, {{0, 1, 2}, {2, 3, 4}, {4, 5, 6}, {6, 7, 0}, {0, 2, 4}});
  EmbeddedGraph g = build_embedded_graph(m, dec);
  compute_vertex_node_weights(m, g, 4);

  for (double s : {1.0, 0.4}) {
    RigidityProfile profile{std::vector<double>(m.vertex_count(), s)};
    derive_node_rigidity(m, g, profile);
    for (const auto& row : g.rigidity) {
      for (double u : row) CHECK(u == doctest::Approx(s));
    }
  }

  RigidityProfile mixed;
  for (int i = 0; i < m.vertex_count(); ++i) mixed.values.push_back(uniform(rng, 0.05, 1.0));
  derive_node_rigidity(m, g, mixed);
  for (int k = 0; k < g.node_count(); ++k) {
    for (int l : g.neighbors[k]) {
      double sum = 0.0;
      int count = 0;
      for (int i = 0; i < m.vertex_count(); ++i) {
        bool hit = false;
        for (const auto& w : g.influences[i]) hit = hit || w.node == k || w.node == l;
        if (hit) { sum += mixed.values[i]; ++count; }
      }
      const double expected = count ? sum / count : 1.0;
      CHECK(g.edge_rigidity(k, l) == doctest::Approx(expected).epsilon(1e-12));
      CHECK(g.edge_rigidity(k, l) == g.edge_rigidity(l, k));
    }
  }
  CHECK_THROWS_AS(g.edge_rigidity(1, 7), InvalidInput);
}

TEST_CASE("rigidity labels map to class values") {
  MaterialLabels labels;
  labels.classes = default_material_classes();
  labels.labels = {0, 4, 0};
  const RigidityProfile p = rigidity_from_labels(labels);
  CHECK(p.values == std::vector<double>{1.0, 0.2, 1.0});
  labels.labels = {9};
  CHECK_THROWS_AS(rigidity_from_labels(labels), InvalidInput);
}

TEST_CASE("skeleton validation names the field") {
  Skeleton s = fixtures::root_only_skeleton();
  CHECK_NOTHROW(s.validate());
  s.joints.push_back({"child", 3, Vec3::UnitY(), {}});
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("parent"), InvalidInput);
  s = fixtures::root_only_skeleton();
  s.limits.push_back({1.0, -1.0});
  s.joints[0].axes.push_back({Vec3::UnitZ(), 0});
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("limits"), InvalidInput);
  s = fixtures::root_only_skeleton();
  s.landmarks.clear();
  CHECK_THROWS_AS(s.validate(), InvalidInput);
}

TEST_CASE("character bundle round trip") {
  const TemplateCharacter& c = fixtures::capsule();
  const auto dir = temp_dir("character");
  save_character(c, dir);
  const TemplateCharacter back = load_character(dir);
  CHECK(back.mesh.vertices() == c.mesh.vertices());
  CHECK(back.mesh.triangles() == c.mesh.triangles());
  CHECK(back.decimated.vertices() == c.decimated.vertices());
  CHECK(back.graph.nodes == c.graph.nodes);
  CHECK(back.graph.neighbors == c.graph.neighbors);
  CHECK(back.graph.rigidity == c.graph.rigidity);
  CHECK(back.landmark_nodes == c.landmark_nodes);
  CHECK(back.landmark_rest == c.landmark_rest);
  CHECK(back.metric_landmarks == c.metric_landmarks);
  CHECK(back.root_landmark == c.root_landmark);
  REQUIRE(back.graph.influences.size() == c.graph.influences.size());
  for (std::size_t i = 0; i < c.graph.influences.size(); ++i) {
    for (std::size_t j = 0; j < c.graph.influences[i].size(); ++j) {
      CHECK(back.graph.influences[i][j].node == c.graph.influences[i][j].node);
      CHECK(back.graph.influences[i][j].weight == c.graph.influences[i][j].weight);
    }
  }
  for (int j = 0; j < c.skeleton.joint_count(); ++j) {
    CHECK(back.skeleton.joints[j].offset == c.skeleton.joints[j].offset);
    CHECK(back.skeleton.joints[j].parent == c.skeleton.joints[j].parent);
  }
  for (int d = 0; d < c.skeleton.dof_count(); ++d) {
    CHECK(back.skeleton.limits[d].lower == c.skeleton.limits[d].lower);
    CHECK(back.skeleton.limits[d].upper == c.skeleton.limits[d].upper);
  }

  SUBCASE("malformed files raise load errors") {
    {
      std::ofstream f(dir / "skeleton.json");
      f << "{\"joints\": 3}";
    }
    CHECK_THROWS_AS(load_character(dir), LoadError);
    std::filesystem::remove(dir / "mesh.obj");
    CHECK_THROWS_AS(load_character(dir), LoadError);
  }
}
