#include "percap/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include "json_io.hpp"
#include "percap/losses.hpp"
#include "percap/raster.hpp"
#include "percap/rotation.hpp"
#include "percap/solver.hpp"

namespace percap {

using detail::json;

void CapsuleCharacterSpec::validate() const {
  const std::pair<const char*, double> dims[] = {
      {"upper_arm", upper_arm},         {"forearm", forearm},
      {"thigh", thigh},                 {"shin", shin},
      {"pelvis_radius", pelvis_radius}, {"abdomen_radius", abdomen_radius},
      {"chest_radius", chest_radius},   {"neck_radius", neck_radius},
      {"head_radius", head_radius},     {"clavicle_radius", clavicle_radius},
      {"upper_arm_radius", upper_arm_radius}, {"forearm_radius", forearm_radius},
      {"hand_radius", hand_radius},     {"thigh_radius", thigh_radius},
      {"shin_radius", shin_radius},     {"foot_radius", foot_radius},
      {"grid_spacing", grid_spacing},   {"cluster_size", cluster_size},
      {"skirt_rigidity", skirt_rigidity}};
  for (const auto& [name, value] : dims)
    if (!(value > 0.0)) throw InvalidInput(std::string("character spec: ") + name + " must be > 0");
  if (skirt_rigidity > 1.0) throw InvalidInput("character spec: skirt_rigidity must be <= 1");
  if (radius_jitter < 0.0 || radius_jitter >= 0.5) throw InvalidInput("character spec: radius_jitter must be in [0, 0.5)");
  if (cluster_size <= grid_spacing) throw InvalidInput("character spec: cluster_size must exceed grid_spacing");
}

// Meshing

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Drops vertices not referenced by triangles and renumbers in original order.
TriMesh compact(const std::vector<Vec3>& vertices, const std::vector<Triangle>& triangles) {
  std::vector<int> remap(vertices.size(), -1);
  int next = 0;
  for (const auto& t : triangles)
    for (int v : t)
      if (remap[v] < 0) remap[v] = 0;
  for (std::size_t i = 0; i < vertices.size(); ++i)
    if (remap[i] == 0) remap[i] = next++;
  Points out(next, 3);
  for (std::size_t i = 0; i < vertices.size(); ++i)
    if (remap[i] >= 0) out.row(remap[i]) = vertices[i].transpose();
  std::vector<Triangle> tris;
  tris.reserve(triangles.size());
  for (const auto& t : triangles) tris.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
  return TriMesh(std::move(out), std::move(tris));
}

}  // namespace

TriMesh surface_nets(const ScalarField& field, const Vec3& box_min, const Vec3& box_max, double spacing) {
  if (!(spacing > 0.0)) throw InvalidInput("surface_nets: spacing must be > 0");
  std::array<int, 3> n{};
  for (int a = 0; a < 3; ++a) n[a] = static_cast<int>(std::ceil((box_max(a) - box_min(a)) / spacing)) + 1;
  if (n[0] < 2 || n[1] < 2 || n[2] < 2) throw InvalidInput("surface_nets: empty box");
  auto grid_index = [&](int i, int j, int k) { return (static_cast<std::size_t>(i) * n[1] + j) * n[2] + k; };
  auto point = [&](int i, int j, int k) { return Vec3(box_min + spacing * Vec3(i, j, k)); };

  std::vector<double> values(static_cast<std::size_t>(n[0]) * n[1] * n[2]);
  for (int i = 0; i < n[0]; ++i)
    for (int j = 0; j < n[1]; ++j)
      for (int k = 0; k < n[2]; ++k) values[grid_index(i, j, k)] = field(point(i, j, k));

  const std::array<int, 3> cells{n[0] - 1, n[1] - 1, n[2] - 1};
  auto cell_index = [&](int i, int j, int k) { return (static_cast<std::size_t>(i) * cells[1] + j) * cells[2] + k; };
  std::vector<int> cell_vertex(static_cast<std::size_t>(cells[0]) * cells[1] * cells[2], -1);
  std::vector<Vec3> vertices;

  static constexpr int kCubeEdges[12][2] = {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 2}, {1, 3},
                                            {4, 6}, {5, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
  for (int i = 0; i < cells[0]; ++i) {
    for (int j = 0; j < cells[1]; ++j) {
      for (int k = 0; k < cells[2]; ++k) {
        double f[8];
        int inside = 0;
        for (int c = 0; c < 8; ++c) {
          f[c] = values[grid_index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))];
          if (f[c] < 0.0) inside |= 1 << c;
        }
        if (inside == 0 || inside == 255) continue;
        Vec3 sum = Vec3::Zero();
        int count = 0;
        for (const auto& e : kCubeEdges) {
          const bool in0 = f[e[0]] < 0.0, in1 = f[e[1]] < 0.0;
          if (in0 == in1) continue;
          const Vec3 p0(e[0] & 1, (e[0] >> 1) & 1, (e[0] >> 2) & 1);
          const Vec3 p1(e[1] & 1, (e[1] >> 1) & 1, (e[1] >> 2) & 1);
          const double t = f[e[0]] / (f[e[0]] - f[e[1]]);
          sum += p0 + t * (p1 - p0);
          ++count;
        }
        cell_vertex[cell_index(i, j, k)] = static_cast<int>(vertices.size());
        vertices.push_back(point(i, j, k) + spacing * sum / count);
      }
    }
  }

  std::vector<Triangle> triangles;
  for (int i = 0; i < n[0]; ++i) {
    for (int j = 0; j < n[1]; ++j) {
      for (int k = 0; k < n[2]; ++k) {
        const std::array<int, 3> p{i, j, k};
        const bool in_p = values[grid_index(i, j, k)] < 0.0;
        for (int a = 0; a < 3; ++a) {
          std::array<int, 3> q = p;
          if (++q[a] >= n[a]) continue;
          if (in_p == (values[grid_index(q[0], q[1], q[2])] < 0.0)) continue;
          const int b = (a + 1) % 3, c = (a + 2) % 3;
          if (p[b] < 1 || p[c] < 1 || p[b] >= n[b] - 1 || p[c] >= n[c] - 1 || p[a] >= cells[a]) continue;
          static constexpr int kQuad[4][2] = {{-1, -1}, {0, -1}, {0, 0}, {-1, 0}};
          std::array<int, 4> quad{};
          for (int s = 0; s < 4; ++s) {
            std::array<int, 3> cell = p;
            cell[b] += kQuad[s][0];
            cell[c] += kQuad[s][1];
            quad[s] = cell_vertex[cell_index(cell[0], cell[1], cell[2])];
          }
          // Inside at the lower end means the outward normal points along +a.
          if (!in_p) std::reverse(quad.begin(), quad.end());
          const double d02 = (vertices[quad[0]] - vertices[quad[2]]).squaredNorm();
          const double d13 = (vertices[quad[1]] - vertices[quad[3]]).squaredNorm();
          if (d02 <= d13) {
            triangles.push_back({quad[0], quad[1], quad[2]});
            triangles.push_back({quad[0], quad[2], quad[3]});
          } else {
            triangles.push_back({quad[0], quad[1], quad[3]});
            triangles.push_back({quad[1], quad[2], quad[3]});
          }
        }
      }
    }
  }
  if (triangles.empty()) throw ConstructionError("surface_nets: the field has no zero crossing in the box");

  UnionFind uf(static_cast<int>(vertices.size()));
  for (const auto& t : triangles) {
    uf.unite(t[0], t[1]);
    uf.unite(t[1], t[2]);
  }
  std::map<int, int> component_size;
  for (const auto& t : triangles) ++component_size[uf.find(t[0])];
  const int keep = std::max_element(component_size.begin(), component_size.end(),
                                    [](const auto& x, const auto& y) { return x.second < y.second; })
                       ->first;
  std::vector<Triangle> kept;
  for (const auto& t : triangles)
    if (uf.find(t[0]) == keep) kept.push_back(t);
  return compact(vertices, kept);
}

TriMesh cluster_decimate(const TriMesh& mesh, double cell_size, const Vec3& origin) {
  if (!(cell_size > 0.0)) throw InvalidInput("cluster_decimate: cell size must be > 0");
  const int n = mesh.vertex_count();
  using Key = std::tuple<long, long, long>;
  std::vector<Key> keys(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 c = ((mesh.vertices().row(i).transpose() - origin) / cell_size).array().floor();
    keys[i] = {static_cast<long>(c.x()), static_cast<long>(c.y()), static_cast<long>(c.z())};
  }
  UnionFind uf(n);
  for (const auto& [a, b] : mesh.edges())
    if (keys[a] == keys[b]) uf.unite(a, b);

  std::vector<int> cluster(n, -1);
  std::vector<int> root_cluster(n, -1);
  std::vector<Vec3> sums;
  std::vector<int> counts;
  for (int i = 0; i < n; ++i) {
    const int r = uf.find(i);
    if (root_cluster[r] < 0) {
      root_cluster[r] = static_cast<int>(sums.size());
      sums.push_back(Vec3::Zero());
      counts.push_back(0);
    }
    cluster[i] = root_cluster[r];
    sums[cluster[i]] += mesh.vertices().row(i).transpose();
    ++counts[cluster[i]];
  }
  std::vector<Vec3> positions(sums.size());
  for (std::size_t c = 0; c < sums.size(); ++c) positions[c] = sums[c] / counts[c];

  std::set<std::array<int, 3>> seen;
  std::vector<Triangle> triangles;
  for (const auto& t : mesh.triangles()) {
    const Triangle m{cluster[t[0]], cluster[t[1]], cluster[t[2]]};
    if (m[0] == m[1] || m[1] == m[2] || m[0] == m[2]) continue;
    std::array<int, 3> key = m;
    std::sort(key.begin(), key.end());
    if (seen.insert(key).second) triangles.push_back(m);
  }
  if (triangles.empty()) throw ConstructionError("cluster_decimate: cell size leaves no triangles");
  return compact(positions, triangles);
}

// Character

Skeleton capsule_skeleton(const CapsuleCharacterSpec& spec) {
  Skeleton s;
  int dof = 0;
  auto add = [&](const std::string& name, int parent, const Vec3& offset, std::vector<std::pair<Vec3, DofLimit>> axes) {
    Joint j{name, parent, offset, {}};
    for (const auto& [axis, limit] : axes) {
      j.axes.push_back({axis, dof++});
      s.limits.push_back(limit);
    }
    s.joints.push_back(std::move(j));
    return static_cast<int>(s.joints.size()) - 1;
  };
  const Vec3 X = Vec3::UnitX(), Y = Vec3::UnitY(), Z = Vec3::UnitZ();
  const int pelvis = add("pelvis", -1, Vec3::Zero(), {});
  const int spine = add("spine", pelvis, {0, 0.10, 0}, {{X, {-0.5, 0.5}}, {Y, {-0.6, 0.6}}, {Z, {-0.4, 0.4}}});
  const int chest = add("chest", spine, {0, 0.20, 0}, {{X, {-0.3, 0.3}}});
  const int neck = add("neck", chest, {0, 0.22, 0}, {{X, {-0.6, 0.6}}, {Y, {-0.8, 0.8}}, {Z, {-0.5, 0.5}}});
  add("head_top", neck, {0, 0.22, 0}, {});
  int shoulder[2], elbow[2], wrist[2], hip[2], knee[2], ankle[2], toe[2];
  for (int side = 0; side < 2; ++side) {
    const double sx = side == 0 ? 1.0 : -1.0;
    const std::string p = side == 0 ? "l_" : "r_";
    const int clav = add(p + "clavicle", chest, {0.02 * sx, 0.18, 0}, {{Z, {-0.3, 0.3}}});
    shoulder[side] = add(p + "shoulder", clav, {0.16 * sx, 0, 0},
                         {{X, {-1.0, 1.0}}, {Y, side == 0 ? DofLimit{-1.5, 0.8} : DofLimit{-0.8, 1.5}}, {Z, {-1.4, 1.4}}});
    elbow[side] = add(p + "elbow", shoulder[side], {spec.upper_arm * sx, 0, 0},
                      {{Y, side == 0 ? DofLimit{-2.3, 0.1} : DofLimit{-0.1, 2.3}}});
    wrist[side] = add(p + "wrist", elbow[side], {spec.forearm * sx, 0, 0}, {});
  }
  for (int side = 0; side < 2; ++side) {
    const double sx = side == 0 ? 1.0 : -1.0;
    const std::string p = side == 0 ? "l_" : "r_";
    hip[side] = add(p + "hip", pelvis, {0.10 * sx, -0.08, 0},
                    {{X, {-2.0, 0.6}}, {Y, {-0.8, 0.8}}, {Z, side == 0 ? DofLimit{-0.4, 1.0} : DofLimit{-1.0, 0.4}}});
    knee[side] = add(p + "knee", hip[side], {0, -spec.thigh, 0}, {{X, {-0.1, 2.4}}});
    ankle[side] = add(p + "ankle", knee[side], {0, -spec.shin, 0}, {{X, {-0.6, 0.6}}});
    toe[side] = add(p + "toe", ankle[side], {0, -0.06, 0.14}, {});
  }

  using LC = LandmarkClass;
  auto lm = [&](const std::string& name, int joint, const Vec3& offset, LC c) {
    s.landmarks.push_back({name, joint, offset, c});
  };
  lm("nose", neck, {0, 0.12, 0.09}, LC::other);
  lm("neck", neck, Vec3::Zero(), LC::torso);
  lm("mid_hip", pelvis, Vec3::Zero(), LC::torso);
  lm("l_shoulder", shoulder[0], Vec3::Zero(), LC::torso);
  lm("r_shoulder", shoulder[1], Vec3::Zero(), LC::torso);
  lm("l_elbow", elbow[0], Vec3::Zero(), LC::elbow_knee);
  lm("r_elbow", elbow[1], Vec3::Zero(), LC::elbow_knee);
  lm("l_wrist", wrist[0], Vec3::Zero(), LC::other);
  lm("r_wrist", wrist[1], Vec3::Zero(), LC::other);
  lm("l_hip", hip[0], Vec3::Zero(), LC::torso);
  lm("r_hip", hip[1], Vec3::Zero(), LC::torso);
  lm("l_knee", knee[0], Vec3::Zero(), LC::elbow_knee);
  lm("r_knee", knee[1], Vec3::Zero(), LC::elbow_knee);
  lm("l_ankle", ankle[0], Vec3::Zero(), LC::other);
  lm("r_ankle", ankle[1], Vec3::Zero(), LC::other);
  lm("l_toe", toe[0], Vec3::Zero(), LC::other);
  lm("r_toe", toe[1], Vec3::Zero(), LC::other);
  lm("l_eye", neck, {0.035, 0.14, 0.08}, LC::other);
  lm("r_eye", neck, {-0.035, 0.14, 0.08}, LC::other);
  lm("l_ear", neck, {0.09, 0.12, 0}, LC::other);
  lm("r_ear", neck, {-0.09, 0.12, 0}, LC::other);
  s.validate();
  return s;
}

std::vector<Capsule> capsule_layout(const CapsuleCharacterSpec& spec, const Skeleton& skeleton) {
  const Points p = skeleton.rest_joint_positions();
  auto at = [&](const std::string& name) {
    for (int j = 0; j < skeleton.joint_count(); ++j)
      if (skeleton.joints[j].name == name) return std::make_pair(j, Vec3(p.row(j).transpose()));
    throw InvalidInput("capsule_layout: skeleton has no joint " + name);
  };
  std::vector<Capsule> caps;
  const auto [pelvis, pp] = at("pelvis");
  const auto [spine, ps] = at("spine");
  const auto [chest, pc] = at("chest");
  const auto [neck, pn] = at("neck");
  caps.push_back({pp + Vec3(-0.05, -0.03, 0), pp + Vec3(0.05, -0.03, 0), spec.pelvis_radius, pelvis});
  caps.push_back({ps, pc, spec.abdomen_radius, spine});
  caps.push_back({pc + Vec3(-0.06, 0.10, 0), pc + Vec3(0.06, 0.10, 0), spec.chest_radius, chest});
  caps.push_back({pn, pn + Vec3(0, 0.08, 0), spec.neck_radius, neck});
  caps.push_back({pn + Vec3(0, 0.11, 0), pn + Vec3(0, 0.13, 0), spec.head_radius, neck});
  for (const std::string side : {"l_", "r_"}) {
    const double sx = side == "l_" ? 1.0 : -1.0;
    const auto [clav, p_clav] = at(side + "clavicle");
    const auto [shoulder, p_sh] = at(side + "shoulder");
    const auto [elbow, p_el] = at(side + "elbow");
    const auto [wrist, p_wr] = at(side + "wrist");
    caps.push_back({p_clav, p_sh, spec.clavicle_radius, clav});
    caps.push_back({p_sh, p_el, spec.upper_arm_radius, shoulder});
    caps.push_back({p_el, p_wr, spec.forearm_radius, elbow});
    caps.push_back({p_wr, p_wr + Vec3(0.08 * sx, 0, 0), spec.hand_radius, wrist});
    const auto [hip, p_hip] = at(side + "hip");
    const auto [knee, p_kn] = at(side + "knee");
    const auto [ankle, p_an] = at(side + "ankle");
    const auto [toe, p_toe] = at(side + "toe");
    (void)toe;
    caps.push_back({p_hip, p_kn, spec.thigh_radius, hip});
    caps.push_back({p_kn, p_an, spec.shin_radius, knee});
    caps.push_back({p_an, p_toe, spec.foot_radius, ankle});
  }
  return caps;
}

namespace {

double segment_distance(const Capsule& c, const Vec3& p) {
  const Vec3 ab = c.b - c.a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - c.a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (c.a + t * ab)).norm();
}

}  // namespace

double capsule_distance(const std::vector<Capsule>& capsules, const Vec3& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& c : capsules) d = std::min(d, segment_distance(c, p) - c.radius);
  return d;
}

TemplateCharacter make_capsule_character(const CapsuleCharacterSpec& spec_in, std::uint64_t seed) {
  spec_in.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CapsuleCharacterSpec spec = spec_in;
  for (double* r : {&spec.pelvis_radius, &spec.abdomen_radius, &spec.chest_radius, &spec.neck_radius,
                    &spec.head_radius, &spec.clavicle_radius, &spec.upper_arm_radius, &spec.forearm_radius,
                    &spec.hand_radius, &spec.thigh_radius, &spec.shin_radius, &spec.foot_radius})
    *r *= 1.0 + spec.radius_jitter * (2.0 * unit(rng) - 1.0);

  Skeleton skeleton = capsule_skeleton(spec);
  const auto capsules = capsule_layout(spec, skeleton);
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& c : capsules) {
    lo = lo.cwiseMin(c.a.cwiseMin(c.b) - Vec3::Constant(c.radius));
    hi = hi.cwiseMax(c.a.cwiseMax(c.b) + Vec3::Constant(c.radius));
  }
  const double h = spec.grid_spacing;
  const Vec3 shift(unit(rng), unit(rng), unit(rng));
  lo -= h * (Vec3::Constant(2.0) + shift);
  hi += Vec3::Constant(2.0 * h);
  TriMesh mesh = surface_nets([&](const Vec3& p) { return capsule_distance(capsules, p); }, lo, hi, h);
  const Vec3 cluster_origin = spec.cluster_size * Vec3(unit(rng), unit(rng), unit(rng));
  TriMesh decimated = cluster_decimate(mesh, spec.cluster_size, cluster_origin);

  // Node skinning: soft-min over capsule distances, two strongest joints.
  const EmbeddedGraph graph = build_embedded_graph(mesh, decimated);
  constexpr double kTemperature = 0.015;
  std::vector<std::vector<JointWeight>> skin(graph.node_count());
  for (int k = 0; k < graph.node_count(); ++k) {
    const Vec3 g = graph.nodes.row(k).transpose();
    std::map<int, double> joint_distance;
    for (const auto& c : capsules) {
      const double d = segment_distance(c, g) - c.radius;
      auto [it, inserted] = joint_distance.emplace(c.joint, d);
      if (!inserted) it->second = std::min(it->second, d);
    }
    std::vector<std::pair<double, int>> ranked;
    for (const auto& [j, d] : joint_distance) ranked.emplace_back(d, j);
    std::sort(ranked.begin(), ranked.end());
    const double w0 = 1.0;
    const double w1 = ranked.size() > 1 ? std::exp(-(ranked[1].first - ranked[0].first) / kTemperature) : 0.0;
    skin[k].push_back({ranked[0].second, w0 / (w0 + w1)});
    if (w1 > 1e-6) skin[k].push_back({ranked[1].second, w1 / (w0 + w1)});
  }
  const auto anchors = closest_nodes(graph, skeleton.rest_landmark_positions());
  for (std::size_t m = 0; m < anchors.size(); ++m) skin[anchors[m]] = {{skeleton.landmarks[m].joint, 1.0}};

  MaterialLabels materials;
  materials.classes = {{"skin", 1.0}, {"skirt", spec.skirt_rigidity}};
  materials.labels.resize(mesh.vertex_count());
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    const double y = mesh.vertices()(i, 1);
    materials.labels[i] = (y >= spec.skirt_bottom && y <= spec.skirt_top) ? 1 : 0;
  }

  CharacterInputs inputs;
  inputs.mesh = std::move(mesh);
  inputs.decimated = std::move(decimated);
  inputs.skeleton = std::move(skeleton);
  inputs.materials = std::move(materials);
  inputs.node_skin_weights = std::move(skin);
  for (const char* name : {"nose", "neck", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist",
                           "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle", "r_ankle"})
    inputs.metric_landmarks.push_back(inputs.skeleton.landmark_index(name));
  inputs.root_landmark = inputs.skeleton.landmark_index("mid_hip");
  return assemble_character(std::move(inputs));
}

// Cameras and motion

std::vector<Camera> make_camera_rig(const RigSpec& spec) {
  if (spec.count < 1) throw InvalidInput("rig: count must be >= 1");
  if (!(spec.radius > 0.0) || !(spec.focal > 0.0) || spec.width < 1 || spec.height_px < 1)
    throw InvalidInput("rig: radius, focal and resolution must be positive");
  std::vector<Camera> cams;
  for (int c = 0; c < spec.count; ++c) {
    const double phi = 2.0 * std::numbers::pi * c / spec.count;
    const Vec3 eye(spec.radius * std::sin(phi), spec.height, spec.radius * std::cos(phi));
    char name[16];
    std::snprintf(name, sizeof(name), "cam%02d", c);
    cams.push_back(look_at_camera(name, eye, spec.target, Vec3::UnitY(), spec.focal, spec.width, spec.height_px));
  }
  return cams;
}

std::vector<PoseParams> synth_motion(const Skeleton& skeleton, int frames, double amplitude, std::uint64_t seed) {
  if (frames < 0) throw InvalidInput("synth_motion: frames must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> sym(-1.0, 1.0), unit(0.0, 1.0);
  const int dofs = skeleton.dof_count();
  struct Wave {
    double mean, height, omega, phase;
  };
  auto wave = [&] { return Wave{0.5 * sym(rng), 0.2 + 0.3 * unit(rng), 2.0 * std::numbers::pi / (20.0 + 20.0 * unit(rng)),
                                2.0 * std::numbers::pi * unit(rng)}; };
  std::vector<Wave> waves(dofs);
  for (auto& w : waves) w = wave();
  std::array<Wave, 3> root_rot{wave(), wave(), wave()}, root_pos{wave(), wave(), wave()};
  const double yaw_base = sym(rng);

  std::vector<PoseParams> out;
  for (int f = 0; f < frames; ++f) {
    PoseParams p = PoseParams::rest(skeleton);
    for (int i = 0; i < dofs; ++i) {
      const auto& w = waves[i];
      const double lo = 0.8 * skeleton.limits[i].lower, hi = 0.8 * skeleton.limits[i].upper;
      p.theta(i) = std::clamp(amplitude * (w.mean + w.height * std::sin(w.omega * f + w.phase)), lo, hi);
    }
    auto eval = [&](const Wave& w) { return w.height * std::sin(w.omega * f + w.phase); };
    const double pitch = 0.1 * amplitude * eval(root_rot[0]);
    const double yaw = amplitude * (yaw_base + 0.8 * eval(root_rot[1]));
    const double roll = 0.1 * amplitude * eval(root_rot[2]);
    p.alpha = rotation_to_euler(Mat3(rotation_y(yaw) * rotation_x(pitch) * rotation_z(roll)));
    p.translation = amplitude * Vec3(0.3 * eval(root_pos[0]), 0.05 * eval(root_pos[1]), 0.3 * eval(root_pos[2]));
    out.push_back(std::move(p));
  }
  return out;
}

PoseParams anchor_pose(const PoseParams& world_pose, const Mat3& input_rotation) {
  PoseParams p = world_pose;
  p.alpha = rotation_to_euler(Mat3(input_rotation * euler_to_rotation(world_pose.alpha)));
  return p;
}

// Deformations

namespace {

// Mean edge rigidity of every node; 1 for isolated nodes.
VecX node_rigidity(const EmbeddedGraph& graph) {
  VecX u = VecX::Ones(graph.node_count());
  for (int k = 0; k < graph.node_count(); ++k) {
    if (graph.rigidity[k].empty()) continue;
    u(k) = std::accumulate(graph.rigidity[k].begin(), graph.rigidity[k].end(), 0.0) / graph.rigidity[k].size();
  }
  return u;
}

}  // namespace

std::vector<GraphDeformation> synth_deformation(const EmbeddedGraph& graph, int frames, double amplitude,
                                                std::uint64_t seed, double arap_bound) {
  if (frames < 0) throw InvalidInput("synth_deformation: frames must be >= 0");
  const int k_count = graph.node_count();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> sym(-1.0, 1.0), unit(0.0, 1.0);
  const VecX u = node_rigidity(graph);
  const Vec3 centroid = graph.nodes.colwise().mean().transpose();

  constexpr int kBumps = 4;
  constexpr double kBumpWidth = 0.2;
  std::array<Vec3, kBumps> centers, directions;
  std::array<double, kBumps> phases;
  for (int b = 0; b < kBumps; ++b) {
    centers[b] = graph.nodes.row(std::uniform_int_distribution<int>(0, k_count - 1)(rng)).transpose();
    directions[b] = Vec3(sym(rng), sym(rng), sym(rng)).normalized();
    phases[b] = 2.0 * std::numbers::pi * unit(rng);
  }
  const Vec3 rot_axis = Vec3(sym(rng), sym(rng), sym(rng)).normalized();
  const double rot_phase = 2.0 * std::numbers::pi * unit(rng);

  std::vector<GraphDeformation> out;
  for (int f = 0; f < frames; ++f) {
    GraphDeformation d = GraphDeformation::zero(k_count);
    if (amplitude == 0.0) {
      out.push_back(std::move(d));
      continue;
    }
    const double s = std::sin(2.0 * std::numbers::pi * f / 30.0 + rot_phase);
    const Mat3 r0 = axis_angle_rotation(rot_axis, 0.5 * amplitude * s);
    const Vec3 v = amplitude * s * rot_axis;
    const Vec3 angles = rotation_to_euler(r0);
    Points local = Points::Zero(k_count, 3);
    for (int k = 0; k < k_count; ++k) {
      const Vec3 g = graph.nodes.row(k).transpose();
      d.rotations.row(k) = angles.transpose();
      d.translations.row(k) = (r0 * (g - centroid) + centroid + v - g).transpose();
      Vec3 delta = Vec3::Zero();
      for (int b = 0; b < kBumps; ++b) {
        const double fall = std::exp(-(g - centers[b]).squaredNorm() / (2.0 * kBumpWidth * kBumpWidth));
        delta += fall * std::sin(2.0 * std::numbers::pi * f / 25.0 + phases[b]) * directions[b];
      }
      local.row(k) = (amplitude * (1.0 - u(k)) * delta).transpose();
    }
    GraphDeformation trial = d;
    for (int attempt = 0; attempt < 60; ++attempt) {
      trial.translations = d.translations + local;
      if (arap_loss(graph, trial).value < arap_bound) break;
      local *= 0.5;
    }
    out.push_back(std::move(trial));
  }
  return out;
}

std::vector<GraphDeformation> synth_bulge(const EmbeddedGraph& graph, int frames, double amplitude) {
  const int k_count = graph.node_count();
  const VecX u = node_rigidity(graph);
  const double u_min = u.minCoeff();
  std::vector<GraphDeformation> out;
  for (int f = 0; f < frames; ++f) {
    GraphDeformation d = GraphDeformation::zero(k_count);
    const double b = amplitude * (0.75 + 0.25 * std::sin(2.0 * std::numbers::pi * f / 30.0));
    for (int k = 0; k < k_count; ++k) {
      const double softness = u_min < 1.0 ? std::clamp((1.0 - u(k)) / (1.0 - u_min), 0.0, 1.0) : 0.0;
      Vec3 radial(graph.nodes(k, 0), 0.0, graph.nodes(k, 2));
      if (softness == 0.0 || radial.norm() < 1e-9) continue;
      d.translations.row(k) = (b * softness * radial.normalized()).transpose();
    }
    out.push_back(std::move(d));
  }
  return out;
}

void clear_landmark_nodes(const TemplateCharacter& character, GraphDeformation& deformation) {
  for (int k : character.landmark_nodes) {
    deformation.rotations.row(k).setZero();
    deformation.translations.row(k).setZero();
  }
}

// Rendering

ObservationSet render_observations(const TemplateCharacter& character, const std::vector<Camera>& cameras,
                                   int input_camera, const PoseParams& pose, const GraphDeformation& deformation,
                                   const NoiseSpec& noise, std::uint64_t seed) {
  if (noise.pixel_sigma < 0.0 || noise.dropout < 0.0 || noise.dropout > 1.0)
    throw InvalidInput("noise: pixel_sigma must be >= 0 and dropout in [0, 1]");
  const auto transforms = pose_node_transforms(character, pose.theta, pose.alpha);
  const Mat3 input_rotation = cameras.at(input_camera).rotation();
  const Points world = deform_mesh(character, deformation, transforms, input_rotation, pose.translation).world;
  const Points landmarks = deform_landmarks(character, deformation, transforms, input_rotation, pose.translation);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ObservationSet obs;
  for (const auto& cam : cameras) {
    CameraObservation view;
    view.mask = render_mask(world, character.mesh.triangles(), cam);
    view.distance = distance_transform(view.mask);
    const int m_count = static_cast<int>(landmarks.rows());
    view.detections.resize(m_count, 2);
    view.confidences.resize(m_count);
    for (int m = 0; m < m_count; ++m) {
      Vec2 px = project(cam, landmarks.row(m).transpose());
      const double nx = gauss(rng), ny = gauss(rng);
      if (noise.pixel_sigma > 0.0) px += noise.pixel_sigma * Vec2(nx, ny);
      view.detections.row(m) = px.transpose();
      view.confidences(m) = unit(rng) < noise.dropout ? 0.0 : 1.0;
    }
    obs.views.push_back(std::move(view));
  }
  return obs;
}

SyntheticScene make_scene(const SceneSpec& spec) {
  if (spec.frames < 0) throw InvalidInput("scene: frames must be >= 0");
  SyntheticScene scene;
  scene.character = make_capsule_character(spec.character, spec.seed);
  scene.cameras = make_camera_rig(spec.rig);
  if (spec.input_camera < 0 || spec.input_camera >= static_cast<int>(scene.cameras.size()))
    throw InvalidInput("scene: input_camera out of range");
  scene.input_camera = spec.input_camera;
  scene.noise = spec.noise;
  const Mat3 input_rotation = scene.cameras[spec.input_camera].rotation();
  for (const auto& p : synth_motion(scene.character.skeleton, spec.frames, spec.motion_amplitude, spec.seed + 1))
    scene.poses.push_back(anchor_pose(p, input_rotation));
  const auto& graph = scene.character.graph;
  switch (spec.deformation) {
    case DeformationKind::none:
      scene.deformations.assign(spec.frames, GraphDeformation::zero(graph.node_count()));
      break;
    case DeformationKind::bulge:
      scene.deformations = synth_bulge(graph, spec.frames, spec.deformation_amplitude);
      break;
    case DeformationKind::smooth:
      scene.deformations = synth_deformation(graph, spec.frames, spec.deformation_amplitude, spec.seed + 2);
      break;
  }
  for (auto& d : scene.deformations) clear_landmark_nodes(scene.character, d);
  for (int f = 0; f < spec.frames; ++f) {
    std::seed_seq seq{spec.seed, static_cast<std::uint64_t>(f), std::uint64_t{0x6f627376}};
    std::uint64_t frame_seed = 0;
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    frame_seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    scene.observations.push_back(render_observations(scene.character, scene.cameras, spec.input_camera,
                                                     scene.poses[f], scene.deformations[f], spec.noise, frame_seed));
  }
  return scene;
}

Points scene_vertices(const SyntheticScene& scene, int frame) {
  const auto& pose = scene.poses.at(frame);
  return deform_mesh(scene.character, scene.deformations.at(frame),
                     pose_node_transforms(scene.character, pose.theta, pose.alpha),
                     scene.cameras[scene.input_camera].rotation(), pose.translation)
      .world;
}

Points scene_landmarks(const SyntheticScene& scene, int frame) {
  const auto& pose = scene.poses.at(frame);
  return deform_landmarks(scene.character, scene.deformations.at(frame),
                          pose_node_transforms(scene.character, pose.theta, pose.alpha),
                          scene.cameras[scene.input_camera].rotation(), pose.translation);
}

// Scene specs

namespace {

const std::map<std::string, DeformationKind> kDeformationNames{
    {"none", DeformationKind::none}, {"bulge", DeformationKind::bulge}, {"smooth", DeformationKind::smooth}};

std::string deformation_name(DeformationKind k) {
  for (const auto& [name, kind] : kDeformationNames)
    if (kind == k) return name;
  return "none";
}

template <typename T>
void take(json& j, const char* key, T& value, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    value = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidInput(where + "." + key + ": " + e.what());
  }
  j.erase(key);
}

void reject_leftovers(const json& j, const std::string& where) {
  if (!j.empty()) throw InvalidInput(where + "." + j.begin().key() + ": unknown key");
}

}  // namespace

SceneSpec scene_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("scene spec: ") + e.what());
  }
  if (!j.is_object()) throw InvalidInput("scene spec: expected an object");
  SceneSpec s;
  if (j.contains("character")) {
    json c = j.at("character");
    auto& cs = s.character;
    const std::string w = "scene.character";
    take(c, "upper_arm", cs.upper_arm, w);
    take(c, "forearm", cs.forearm, w);
    take(c, "thigh", cs.thigh, w);
    take(c, "shin", cs.shin, w);
    take(c, "pelvis_radius", cs.pelvis_radius, w);
    take(c, "abdomen_radius", cs.abdomen_radius, w);
    take(c, "chest_radius", cs.chest_radius, w);
    take(c, "neck_radius", cs.neck_radius, w);
    take(c, "head_radius", cs.head_radius, w);
    take(c, "clavicle_radius", cs.clavicle_radius, w);
    take(c, "upper_arm_radius", cs.upper_arm_radius, w);
    take(c, "forearm_radius", cs.forearm_radius, w);
    take(c, "hand_radius", cs.hand_radius, w);
    take(c, "thigh_radius", cs.thigh_radius, w);
    take(c, "shin_radius", cs.shin_radius, w);
    take(c, "foot_radius", cs.foot_radius, w);
    take(c, "grid_spacing", cs.grid_spacing, w);
    take(c, "cluster_size", cs.cluster_size, w);
    take(c, "skirt_bottom", cs.skirt_bottom, w);
    take(c, "skirt_top", cs.skirt_top, w);
    take(c, "skirt_rigidity", cs.skirt_rigidity, w);
    take(c, "radius_jitter", cs.radius_jitter, w);
    reject_leftovers(c, w);
    j.erase("character");
  }
  if (j.contains("rig")) {
    json r = j.at("rig");
    const std::string w = "scene.rig";
    take(r, "count", s.rig.count, w);
    take(r, "radius", s.rig.radius, w);
    take(r, "height", s.rig.height, w);
    take(r, "focal", s.rig.focal, w);
    take(r, "width", s.rig.width, w);
    take(r, "height_px", s.rig.height_px, w);
    if (r.contains("target")) {
      s.rig.target = detail::vec_field(r, "target", w);
      r.erase("target");
    }
    reject_leftovers(r, w);
    j.erase("rig");
  }
  if (j.contains("noise")) {
    json n = j.at("noise");
    take(n, "pixel_sigma", s.noise.pixel_sigma, "scene.noise");
    take(n, "dropout", s.noise.dropout, "scene.noise");
    reject_leftovers(n, "scene.noise");
    j.erase("noise");
  }
  std::string kind = deformation_name(s.deformation);
  take(j, "deformation", kind, "scene");
  if (!kDeformationNames.count(kind)) throw InvalidInput("scene.deformation: unknown kind " + kind);
  s.deformation = kDeformationNames.at(kind);
  take(j, "frames", s.frames, "scene");
  take(j, "motion_amplitude", s.motion_amplitude, "scene");
  take(j, "deformation_amplitude", s.deformation_amplitude, "scene");
  take(j, "input_camera", s.input_camera, "scene");
  take(j, "seed", s.seed, "scene");
  reject_leftovers(j, "scene");
  s.character.validate();
  return s;
}

std::string scene_spec_to_json(const SceneSpec& s) {
  const auto& c = s.character;
  json j;
  j["character"] = {{"upper_arm", c.upper_arm},
                    {"forearm", c.forearm},
                    {"thigh", c.thigh},
                    {"shin", c.shin},
                    {"pelvis_radius", c.pelvis_radius},
                    {"abdomen_radius", c.abdomen_radius},
                    {"chest_radius", c.chest_radius},
                    {"neck_radius", c.neck_radius},
                    {"head_radius", c.head_radius},
                    {"clavicle_radius", c.clavicle_radius},
                    {"upper_arm_radius", c.upper_arm_radius},
                    {"forearm_radius", c.forearm_radius},
                    {"hand_radius", c.hand_radius},
                    {"thigh_radius", c.thigh_radius},
                    {"shin_radius", c.shin_radius},
                    {"foot_radius", c.foot_radius},
                    {"grid_spacing", c.grid_spacing},
                    {"cluster_size", c.cluster_size},
                    {"skirt_bottom", c.skirt_bottom},
                    {"skirt_top", c.skirt_top},
                    {"skirt_rigidity", c.skirt_rigidity},
                    {"radius_jitter", c.radius_jitter}};
  j["rig"] = {{"count", s.rig.count},   {"radius", s.rig.radius},       {"height", s.rig.height},
              {"focal", s.rig.focal},   {"width", s.rig.width},         {"height_px", s.rig.height_px},
              {"target", detail::vec_json(s.rig.target)}};
  j["noise"] = {{"pixel_sigma", s.noise.pixel_sigma}, {"dropout", s.noise.dropout}};
  j["frames"] = s.frames;
  j["motion_amplitude"] = s.motion_amplitude;
  j["deformation"] = deformation_name(s.deformation);
  j["deformation_amplitude"] = s.deformation_amplitude;
  j["input_camera"] = s.input_camera;
  j["seed"] = s.seed;
  return j.dump(1);
}

void save_scene(const SyntheticScene& scene, const SceneSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_character(scene.character, dir / "character");
  save_rig(scene.cameras, dir / "rig.json");
  save_observation_sequence(scene.observations, dir / "observations");
  TrackingResult truth;
  for (std::size_t f = 0; f < scene.poses.size(); ++f) {
    FrameResult fr;
    fr.pose = scene.poses[f];
    fr.deformation = scene.deformations[f];
    fr.vertices = scene_vertices(scene, static_cast<int>(f));
    truth.frames.push_back(std::move(fr));
  }
  save_tracking_result(truth, scene.character.mesh.triangles(), dir / "ground_truth");
  std::ofstream out(dir / "scene.json");
  if (!out) throw Error("cannot write " + (dir / "scene.json").string());
  out << scene_spec_to_json(spec) << '\n';
}

}  // namespace percap
