#include "percap/character.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <set>

#include "json_io.hpp"

namespace percap {

using nlohmann::json;

void Skeleton::validate() const {
  if (joints.empty()) throw InvalidInput("skeleton.joints: empty");
  std::vector<int> dof_uses(limits.size(), 0);
  for (int j = 0; j < joint_count(); ++j) {
    const Joint& joint = joints[j];
    if (j == 0 && joint.parent != -1) throw InvalidInput("skeleton.joints[0].parent: root must be -1");
    if (j > 0 && (joint.parent < 0 || joint.parent >= j)) {
      throw InvalidInput("skeleton.joints[" + std::to_string(j) +
                         "].parent: must precede the joint (topological order)");
    }
    if (!joint.offset.allFinite()) {
      throw InvalidInput("skeleton.joints[" + std::to_string(j) + "].offset: not finite");
    }
    for (const auto& ax : joint.axes) {
      if (ax.dof < 0 || ax.dof >= dof_count()) {
        throw InvalidInput("skeleton.joints[" + std::to_string(j) + "].axes.dof: out of range");
      }
      if (std::abs(ax.axis.norm() - 1.0) > 1e-9) {
        throw InvalidInput("skeleton.joints[" + std::to_string(j) + "].axes.axis: not unit length");
      }
      ++dof_uses[ax.dof];
    }
  }
  for (int d = 0; d < dof_count(); ++d) {
    if (dof_uses[d] != 1) {
      throw InvalidInput("skeleton.dof_map: dof " + std::to_string(d) + " assigned " +
                         std::to_string(dof_uses[d]) + " times");
    }
    if (!(limits[d].lower <= limits[d].upper)) {
      throw InvalidInput("skeleton.limits[" + std::to_string(d) + "]: lower > upper");
    }
  }
  if (landmarks.empty()) throw InvalidInput("skeleton.landmarks: need at least one");
  for (int m = 0; m < landmark_count(); ++m) {
    if (landmarks[m].joint < 0 || landmarks[m].joint >= joint_count()) {
      throw InvalidInput("skeleton.landmarks[" + std::to_string(m) + "].joint: out of range");
    }
  }
}

Points Skeleton::rest_joint_positions() const {
  Points p(joint_count(), 3);
  for (int j = 0; j < joint_count(); ++j) {
    const Vec3 base = joints[j].parent < 0 ? Vec3::Zero() : Vec3(p.row(joints[j].parent).transpose());
    p.row(j) = (base + joints[j].offset).transpose();
  }
  return p;
}

Points Skeleton::rest_landmark_positions() const {
  const Points joints_rest = rest_joint_positions();
  Points p(landmark_count(), 3);
  for (int m = 0; m < landmark_count(); ++m) {
    p.row(m) = joints_rest.row(landmarks[m].joint) + landmarks[m].offset.transpose();
  }
  return p;
}

int Skeleton::landmark_index(const std::string& name) const {
  for (int m = 0; m < landmark_count(); ++m) {
    if (landmarks[m].name == name) return m;
  }
  throw InvalidInput("unknown landmark '" + name + "'");
}

double EmbeddedGraph::edge_rigidity(int k, int l) const {
  const auto& nb = neighbors.at(k);
  const auto it = std::lower_bound(nb.begin(), nb.end(), l);
  if (it == nb.end() || *it != l) {
    throw InvalidInput("nodes " + std::to_string(k) + " and " + std::to_string(l) + " are not neighbors");
  }
  return rigidity.at(k)[static_cast<std::size_t>(it - nb.begin())];
}

RigidityProfile rigidity_from_labels(const MaterialLabels& labels) {
  RigidityProfile profile;
  profile.values.reserve(labels.labels.size());
  for (int label : labels.labels) {
    if (label < 0 || label >= static_cast<int>(labels.classes.size())) {
      throw InvalidInput("rigidity.labels: class index " + std::to_string(label) + " out of range");
    }
    profile.values.push_back(labels.classes[label].second);
  }
  return profile;
}

std::vector<std::pair<std::string, double>> default_material_classes() {
  return {{"skin", 1.0}, {"shirt", 0.7}, {"pants", 0.7}, {"dress", 0.3}, {"skirt", 0.2}};
}

EmbeddedGraph build_embedded_graph(const TriMesh& mesh, const TriMesh& decimated) {
  if (mesh.empty()) throw InvalidInput("build_embedded_graph: template mesh is empty");
  if (decimated.vertex_count() < 4) {
    throw InvalidInput("build_embedded_graph: decimated mesh needs at least 4 vertices");
  }
  EmbeddedGraph graph;
  const int k_count = decimated.vertex_count();
  graph.nodes.resize(k_count, 3);
  graph.node_vertex.resize(k_count);
  const Points& v = mesh.vertices();
  for (int k = 0; k < k_count; ++k) {
    const Eigen::RowVector3d q = decimated.vertices().row(k);
    Eigen::Index best = 0;
    (v.rowwise() - q).rowwise().squaredNorm().minCoeff(&best);
    graph.node_vertex[k] = static_cast<int>(best);
    graph.nodes.row(k) = v.row(best);
  }
  graph.neighbors.assign(k_count, {});
  for (const auto& [a, b] : decimated.edges()) {
    graph.neighbors[a].push_back(b);
    graph.neighbors[b].push_back(a);
  }
  for (auto& nb : graph.neighbors) std::sort(nb.begin(), nb.end());
  graph.rigidity.resize(k_count);
  for (int k = 0; k < k_count; ++k) graph.rigidity[k].assign(graph.neighbors[k].size(), 1.0);
  return graph;
}

namespace {

void dijkstra(const std::vector<std::vector<std::pair<int, double>>>& adj, int source, VecX& dist) {
  dist.setConstant(static_cast<Eigen::Index>(adj.size()), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist(source) = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist(u)) continue;
    for (const auto& [w, len] : adj[u]) {
      const double nd = d + len;
      if (nd < dist(w)) {
        dist(w) = nd;
        queue.emplace(nd, w);
      }
    }
  }
}

std::vector<std::vector<std::pair<int, double>>> weighted_adjacency(const TriMesh& mesh) {
  std::vector<std::vector<std::pair<int, double>>> adj(mesh.vertex_count());
  const Points& v = mesh.vertices();
  for (const auto& [a, b] : mesh.edges()) {
    const double len = (v.row(a) - v.row(b)).norm();
    adj[a].emplace_back(b, len);
    adj[b].emplace_back(a, len);
  }
  return adj;
}

}  // namespace

VecX geodesic_distances(const TriMesh& mesh, int source) {
  if (source < 0 || source >= mesh.vertex_count()) {
    throw InvalidInput("geodesic_distances: source " + std::to_string(source) + " out of range");
  }
  VecX dist;
  dijkstra(weighted_adjacency(mesh), source, dist);
  return dist;
}

void compute_vertex_node_weights(const TriMesh& mesh, EmbeddedGraph& graph,
                                 int influences_per_vertex) {
  if (influences_per_vertex < 1) throw InvalidInput("influences_per_vertex must be >= 1");
  const int n = mesh.vertex_count();
  const int k_count = graph.node_count();
  const auto adj = weighted_adjacency(mesh);
  // Per vertex: bounded list of (distance, node), sorted ascending.
  using Candidate = std::pair<double, int>;
  std::vector<std::vector<Candidate>> best(n);
  VecX dist;
  for (int k = 0; k < k_count; ++k) {
    const int src = graph.node_vertex.at(k);
    if (src < 0 || src >= n) throw InvalidInput("graph.node_vertex: node " + std::to_string(k) + " out of range");
    dijkstra(adj, src, dist);
    for (int i = 0; i < n; ++i) {
      if (!std::isfinite(dist(i))) continue;
      auto& list = best[i];
      const Candidate c{dist(i), k};
      if (static_cast<int>(list.size()) == influences_per_vertex && !(c < list.back())) continue;
      list.insert(std::upper_bound(list.begin(), list.end(), c), c);
      if (static_cast<int>(list.size()) > influences_per_vertex) list.pop_back();
    }
  }
  graph.influences.assign(n, {});
  for (int i = 0; i < n; ++i) {
    const auto& list = best[i];
    if (list.empty()) {
      throw ConstructionError("vertex " + std::to_string(i) + " is unreachable from every graph node");
    }
    const double d_max = 1.05 * list.back().first;
    auto& out = graph.influences[i];
    double total = 0.0;
    for (const auto& [d, k] : list) {
      const double w = d_max > 0.0 ? std::pow(1.0 - d / d_max, 2) : 1.0;
      out.push_back({k, w});
      total += w;
    }
    for (auto& inf : out) inf.weight /= total;
  }
}

void derive_node_rigidity(const TriMesh& mesh, EmbeddedGraph& graph,
                          const RigidityProfile& rigidity) {
  const int n = mesh.vertex_count();
  if (static_cast<int>(rigidity.values.size()) != n) {
    throw InvalidInput("rigidity profile length does not match vertex count");
  }
  if (static_cast<int>(graph.influences.size()) != n) {
    throw InvalidInput("derive_node_rigidity: vertex-node weights not computed");
  }
  const int k_count = graph.node_count();
  std::vector<std::vector<int>> node_vertices(k_count);
  for (int i = 0; i < n; ++i) {
    for (const auto& inf : graph.influences[i]) node_vertices[inf.node].push_back(i);
  }
  graph.rigidity.assign(k_count, {});
  for (int k = 0; k < k_count; ++k) {
    for (int l : graph.neighbors[k]) {
      // Both lists are ascending; merge to count each vertex once.
      const auto& a = node_vertices[k];
      const auto& b = node_vertices[l];
      std::vector<int> merged;
      merged.reserve(a.size() + b.size());
      std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(merged));
      double u = 1.0;
      if (merged.empty()) {
        warn("graph edge (" + std::to_string(k) + ", " + std::to_string(l) +
             ") has no associated vertices; rigidity set to 1");
      } else {
        double sum = 0.0;
        for (int i : merged) sum += rigidity.values[i];
        u = sum / static_cast<double>(merged.size());
      }
      graph.rigidity[k].push_back(u);
    }
  }
}

std::vector<int> closest_nodes(const EmbeddedGraph& graph, const Points& points) {
  std::vector<int> out(points.rows());
  for (Eigen::Index m = 0; m < points.rows(); ++m) {
    Eigen::Index best = 0;
    (graph.nodes.rowwise() - points.row(m)).rowwise().squaredNorm().minCoeff(&best);
    out[m] = static_cast<int>(best);
  }
  return out;
}

TemplateCharacter assemble_character(CharacterInputs inputs) {
  inputs.skeleton.validate();
  TemplateCharacter c;
  c.mesh = std::move(inputs.mesh);
  c.decimated = std::move(inputs.decimated);
  c.skeleton = std::move(inputs.skeleton);
  c.materials = std::move(inputs.materials);
  c.influences_per_vertex = inputs.influences_per_vertex;
  c.metric_landmarks = std::move(inputs.metric_landmarks);
  c.root_landmark = inputs.root_landmark;
  if (static_cast<int>(c.materials.labels.size()) != c.mesh.vertex_count()) {
    throw InvalidInput("rigidity.labels: length does not match vertex count");
  }
  c.rigidity = rigidity_from_labels(c.materials);
  c.graph = build_embedded_graph(c.mesh, c.decimated);
  if (static_cast<int>(inputs.node_skin_weights.size()) != c.graph.node_count()) {
    throw InvalidInput("skin_weights.nodes: length does not match node count");
  }
  c.graph.skin_weights = std::move(inputs.node_skin_weights);
  compute_vertex_node_weights(c.mesh, c.graph, c.influences_per_vertex);
  derive_node_rigidity(c.mesh, c.graph, c.rigidity);
  c.landmark_rest = c.skeleton.rest_landmark_positions();
  c.landmark_nodes = closest_nodes(c.graph, c.landmark_rest);
  validate_character(c);
  return c;
}

void validate_character(const TemplateCharacter& c) {
  c.skeleton.validate();
  const int n = c.mesh.vertex_count();
  const int k_count = c.graph.node_count();
  if (static_cast<int>(c.graph.influences.size()) != n) throw InvalidInput("graph.influences: size mismatch");
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const auto& inf : c.graph.influences[i]) {
      if (inf.node < 0 || inf.node >= k_count) throw InvalidInput("graph.influences: node out of range");
      if (!(inf.weight >= 0.0)) throw InvalidInput("graph.influences: negative weight");
      sum += inf.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw InvalidInput("graph.influences: weights of vertex " + std::to_string(i) + " do not sum to 1");
    }
  }
  if (static_cast<int>(c.graph.skin_weights.size()) != k_count) throw InvalidInput("skin_weights: size mismatch");
  for (int k = 0; k < k_count; ++k) {
    double sum = 0.0;
    for (const auto& jw : c.graph.skin_weights[k]) {
      if (jw.joint < 0 || jw.joint >= c.skeleton.joint_count()) {
        throw InvalidInput("skin_weights: joint out of range at node " + std::to_string(k));
      }
      if (!(jw.weight >= 0.0)) throw InvalidInput("skin_weights: negative weight at node " + std::to_string(k));
      sum += jw.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw InvalidInput("skin_weights: weights of node " + std::to_string(k) + " do not sum to 1");
    }
    for (std::size_t e = 0; e < c.graph.neighbors[k].size(); ++e) {
      const int l = c.graph.neighbors[k][e];
      const auto& back = c.graph.neighbors.at(l);
      if (!std::binary_search(back.begin(), back.end(), k)) {
        throw InvalidInput("graph.neighbors: asymmetric edge (" + std::to_string(k) + ", " + std::to_string(l) + ")");
      }
      if (c.graph.rigidity[k][e] != c.graph.edge_rigidity(l, k)) {
        throw InvalidInput("graph.rigidity: asymmetric at edge (" + std::to_string(k) + ", " + std::to_string(l) + ")");
      }
      if (!(c.graph.rigidity[k][e] > 0.0 && c.graph.rigidity[k][e] <= 1.0)) {
        throw InvalidInput("graph.rigidity: value outside (0, 1]");
      }
    }
  }
  if (static_cast<int>(c.rigidity.values.size()) != n) throw InvalidInput("rigidity: size mismatch");
  for (double s : c.rigidity.values) {
    if (!(s > 0.0 && s <= 1.0)) throw InvalidInput("rigidity: value outside (0, 1]");
  }
  for (int m : c.metric_landmarks) {
    if (m < 0 || m >= c.skeleton.landmark_count()) throw InvalidInput("metric_landmarks: out of range");
  }
  if (c.root_landmark < 0 || c.root_landmark >= c.skeleton.landmark_count()) {
    throw InvalidInput("root_landmark: out of range");
  }
}

const char* to_string(LandmarkClass c) {
  switch (c) {
    case LandmarkClass::torso: return "torso";
    case LandmarkClass::elbow_knee: return "elbow_knee";
    case LandmarkClass::other: return "other";
  }
  return "other";
}

LandmarkClass landmark_class_from_string(const std::string& s) {
  if (s == "torso") return LandmarkClass::torso;
  if (s == "elbow_knee") return LandmarkClass::elbow_knee;
  if (s == "other") return LandmarkClass::other;
  throw InvalidInput("unknown landmark class '" + s + "'");
}

// ---------------------------------------------------------------------------
// Bundle I/O

using detail::field;
using detail::read_json;
using detail::vec_field;
using detail::vec_json;
using detail::write_json;

void save_character(const TemplateCharacter& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_obj(dir / "mesh.obj", c.mesh.vertices(), c.mesh.triangles());
  save_obj(dir / "decimated.obj", c.decimated.vertices(), c.decimated.triangles());

  json sk;
  sk["joints"] = json::array();
  for (const auto& jt : c.skeleton.joints) {
    json axes = json::array();
    for (const auto& ax : jt.axes) axes.push_back({{"axis", vec_json(ax.axis)}, {"dof", ax.dof}});
    sk["joints"].push_back({{"name", jt.name}, {"parent", jt.parent}, {"offset", vec_json(jt.offset)}, {"axes", axes}});
  }
  sk["limits"] = json::array();
  for (const auto& lim : c.skeleton.limits) sk["limits"].push_back({lim.lower, lim.upper});
  sk["landmarks"] = json::array();
  for (const auto& lm : c.skeleton.landmarks) {
    sk["landmarks"].push_back({{"name", lm.name}, {"joint", lm.joint}, {"offset", vec_json(lm.offset)},
                               {"class", to_string(lm.weight_class)}});
  }
  write_json(dir / "skeleton.json", sk);

  json rig;
  rig["classes"] = json::array();
  for (const auto& [name, s] : c.materials.classes) rig["classes"].push_back({{"name", name}, {"rigidity", s}});
  rig["labels"] = c.materials.labels;
  write_json(dir / "rigidity.json", rig);

  json sw;
  sw["nodes"] = json::array();
  for (const auto& node : c.graph.skin_weights) {
    json entry = json::array();
    for (const auto& jw : node) entry.push_back({{"joint", jw.joint}, {"weight", jw.weight}});
    sw["nodes"].push_back(entry);
  }
  write_json(dir / "skin_weights.json", sw);

  json meta;
  meta["influences_per_vertex"] = c.influences_per_vertex;
  meta["root_landmark"] = c.skeleton.landmarks[c.root_landmark].name;
  meta["metric_landmarks"] = json::array();
  for (int m : c.metric_landmarks) meta["metric_landmarks"].push_back(c.skeleton.landmarks[m].name);
  write_json(dir / "character.json", meta);
}

TemplateCharacter load_character(const std::filesystem::path& dir) {
  CharacterInputs in;
  in.mesh = load_obj(dir / "mesh.obj");
  in.decimated = load_obj(dir / "decimated.obj");

  const json sk = read_json(dir / "skeleton.json");
  const std::string sk_where = "skeleton.json";
  for (const auto& jj : field<json>(sk, "joints", sk_where)) {
    Joint jt;
    jt.name = field<std::string>(jj, "name", sk_where + ".joints");
    jt.parent = field<int>(jj, "parent", sk_where + ".joints");
    jt.offset = vec_field(jj, "offset", sk_where + ".joints");
    for (const auto& aj : field<json>(jj, "axes", sk_where + ".joints")) {
      jt.axes.push_back({vec_field(aj, "axis", sk_where + ".joints.axes"),
                         field<int>(aj, "dof", sk_where + ".joints.axes")});
    }
    in.skeleton.joints.push_back(std::move(jt));
  }
  for (const auto& lj : field<json>(sk, "limits", sk_where)) {
    if (!lj.is_array() || lj.size() != 2) throw LoadError(sk_where + ".limits: expected [lower, upper]");
    in.skeleton.limits.push_back({lj[0].get<double>(), lj[1].get<double>()});
  }
  for (const auto& lj : field<json>(sk, "landmarks", sk_where)) {
    Landmark lm;
    lm.name = field<std::string>(lj, "name", sk_where + ".landmarks");
    lm.joint = field<int>(lj, "joint", sk_where + ".landmarks");
    lm.offset = vec_field(lj, "offset", sk_where + ".landmarks");
    try {
      lm.weight_class = landmark_class_from_string(field<std::string>(lj, "class", sk_where + ".landmarks"));
    } catch (const InvalidInput& e) {
      throw LoadError(sk_where + ".landmarks.class: " + e.what());
    }
    in.skeleton.landmarks.push_back(std::move(lm));
  }

  const json rj = read_json(dir / "rigidity.json");
  for (const auto& cj : field<json>(rj, "classes", "rigidity.json")) {
    in.materials.classes.emplace_back(field<std::string>(cj, "name", "rigidity.json.classes"),
                                      field<double>(cj, "rigidity", "rigidity.json.classes"));
  }
  in.materials.labels = field<std::vector<int>>(rj, "labels", "rigidity.json");

  const json sw = read_json(dir / "skin_weights.json");
  for (const auto& nj : field<json>(sw, "nodes", "skin_weights.json")) {
    std::vector<JointWeight> node;
    for (const auto& e : nj) {
      node.push_back({field<int>(e, "joint", "skin_weights.json.nodes"),
                      field<double>(e, "weight", "skin_weights.json.nodes")});
    }
    in.node_skin_weights.push_back(std::move(node));
  }

  const json meta = read_json(dir / "character.json");
  in.influences_per_vertex = field<int>(meta, "influences_per_vertex", "character.json");
  try {
    in.root_landmark = in.skeleton.landmark_index(field<std::string>(meta, "root_landmark", "character.json"));
    for (const auto& name : field<std::vector<std::string>>(meta, "metric_landmarks", "character.json")) {
      in.metric_landmarks.push_back(in.skeleton.landmark_index(name));
    }
    return assemble_character(std::move(in));
  } catch (const InvalidInput& e) {
    throw LoadError(dir.string() + ": " + e.what());
  }
}

}  // namespace percap
