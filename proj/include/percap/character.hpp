#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "percap/core.hpp"
#include "percap/mesh.hpp"

namespace percap {

/// One rotational degree of freedom of a joint: rotation about `axis`
/// (joint-local, unit) by theta[dof].
struct JointAxis {
  Vec3 axis = Vec3::UnitX();
  int dof = 0;
};

struct Joint {
  std::string name;
  int parent = -1;  ///< -1 for the root
  Vec3 offset = Vec3::Zero();  ///< rest offset from the parent joint, meters
  std::vector<JointAxis> axes;  ///< applied in order
};

struct DofLimit {
  double lower = 0.0;
  double upper = 0.0;
};

/// Keypoint re-weighting class used by the hierarchical landmark schedule.
enum class LandmarkClass { torso, elbow_knee, other };

struct Landmark {
  std::string name;
  int joint = 0;
  Vec3 offset = Vec3::Zero();  ///< joint-local, meters
  LandmarkClass weight_class = LandmarkClass::other;
};

struct Skeleton {
  std::vector<Joint> joints;
  std::vector<DofLimit> limits;  ///< one per DOF
  std::vector<Landmark> landmarks;

  int joint_count() const { return static_cast<int>(joints.size()); }
  int dof_count() const { return static_cast<int>(limits.size()); }
  int landmark_count() const { return static_cast<int>(landmarks.size()); }

  /// Throws InvalidInput naming the offending field.
  void validate() const;
  /// Joint origins at theta = 0, alpha = 0.
  Points rest_joint_positions() const;
  /// Landmark positions at theta = 0, alpha = 0.
  Points rest_landmark_positions() const;
  int landmark_index(const std::string& name) const;
};

struct VertexInfluence {
  int node = 0;
  double weight = 0.0;
};

struct JointWeight {
  int joint = 0;
  double weight = 0.0;
};

/// Embedded deformation graph: K nodes on the template surface.
struct EmbeddedGraph {
  Points nodes;  ///< K x 3 canonical node positions
  std::vector<int> node_vertex;  ///< template vertex each node sits on
  std::vector<std::vector<int>> neighbors;  ///< sorted, symmetric
  std::vector<std::vector<VertexInfluence>> influences;  ///< per template vertex
  std::vector<std::vector<JointWeight>> skin_weights;  ///< per node, convex
  std::vector<std::vector<double>> rigidity;  ///< u_{k,l}, aligned with neighbors[k]

  int node_count() const { return static_cast<int>(nodes.rows()); }
  /// u_{k,l}; throws InvalidInput when l is not a neighbor of k.
  double edge_rigidity(int k, int l) const;
};

/// Named material classes and a per-vertex label into them.
struct MaterialLabels {
  std::vector<std::pair<std::string, double>> classes;  ///< (name, rigidity s)
  std::vector<int> labels;  ///< per vertex, index into classes
};

/// Per-vertex rigidity s_i in (0, 1].
struct RigidityProfile {
  std::vector<double> values;
};

RigidityProfile rigidity_from_labels(const MaterialLabels& labels);

/// Default material table: skin and other tight surfaces rigid, loose cloth soft.
std::vector<std::pair<std::string, double>> default_material_classes();

struct TemplateCharacter {
  TriMesh mesh;
  TriMesh decimated;
  Skeleton skeleton;
  EmbeddedGraph graph;
  MaterialLabels materials;
  RigidityProfile rigidity;
  int influences_per_vertex = 4;
  /// Closest graph node (Euclidean, canonical pose) for every landmark.
  std::vector<int> landmark_nodes;
  /// Canonical landmark positions, M x 3.
  Points landmark_rest;
  /// Landmarks used by pose metrics and the root landmark they are aligned to.
  std::vector<int> metric_landmarks;
  int root_landmark = 0;
};

/// Nodes at the nearest template vertex of every decimated vertex; neighbors
/// from the decimated edges.
EmbeddedGraph build_embedded_graph(const TriMesh& mesh, const TriMesh& decimated);

/// Dijkstra over the edge graph with Euclidean edge lengths. Unreached
/// vertices get +infinity.
VecX geodesic_distances(const TriMesh& mesh, int source);

/// Fills graph.influences with the `influences_per_vertex` geodesically
/// nearest nodes per vertex, weights (1 - d/d_max)^2 normalised to one.
void compute_vertex_node_weights(const TriMesh& mesh, EmbeddedGraph& graph,
                                 int influences_per_vertex);

/// u_{k,l} = mean s_i over vertices influenced by k or l.
void derive_node_rigidity(const TriMesh& mesh, EmbeddedGraph& graph,
                          const RigidityProfile& rigidity);

/// Index of the nearest node to every row of `points`.
std::vector<int> closest_nodes(const EmbeddedGraph& graph, const Points& points);

struct CharacterInputs {
  TriMesh mesh;
  TriMesh decimated;
  Skeleton skeleton;
  MaterialLabels materials;
  std::vector<std::vector<JointWeight>> node_skin_weights;
  std::vector<int> metric_landmarks;
  int root_landmark = 0;
  int influences_per_vertex = 4;
};

/// Builds graph, weights, rigidity and landmark attachment, then validates.
TemplateCharacter assemble_character(CharacterInputs inputs);

/// Checks every character invariant; throws InvalidInput naming the field.
void validate_character(const TemplateCharacter& character);

/// Character bundle directory:
///   character.json  influences_per_vertex, metric_landmarks, root_landmark
///   mesh.obj, decimated.obj
///   skeleton.json   joints (name, parent, offset, axes[{axis, dof}]), limits, landmarks
///   rigidity.json   classes [{name, rigidity}], labels [per-vertex class index]
///   skin_weights.json  nodes [[{joint, weight}, ...], ...]
void save_character(const TemplateCharacter& character, const std::filesystem::path& dir);
TemplateCharacter load_character(const std::filesystem::path& dir);

const char* to_string(LandmarkClass c);
LandmarkClass landmark_class_from_string(const std::string& s);

}  // namespace percap
