#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "percap/camera.hpp"
#include "percap/character.hpp"
#include "percap/deform.hpp"
#include "percap/kinematics.hpp"
#include "percap/mesh.hpp"
#include "percap/observations.hpp"

namespace percap {

/// Proportions of the capsule humanoid, meters.
struct CapsuleCharacterSpec {
  double upper_arm = 0.28;
  double forearm = 0.25;
  double thigh = 0.42;
  double shin = 0.40;
  double pelvis_radius = 0.14;
  double abdomen_radius = 0.13;
  double chest_radius = 0.15;
  double neck_radius = 0.05;
  double head_radius = 0.10;
  double clavicle_radius = 0.06;
  double upper_arm_radius = 0.05;
  double forearm_radius = 0.04;
  double hand_radius = 0.045;
  double thigh_radius = 0.075;
  double shin_radius = 0.055;
  double foot_radius = 0.045;
  /// Surface extraction grid and decimation cell size.
  double grid_spacing = 0.02;
  double cluster_size = 0.1;
  /// Soft material band on the torso (rest-pose heights) and its rigidity.
  double skirt_bottom = 0.08;
  double skirt_top = 0.30;
  double skirt_rigidity = 0.2;
  /// Relative radius jitter drawn from the seed.
  double radius_jitter = 0.02;

  /// Throws InvalidInput naming the first nonpositive dimension.
  void validate() const;
};

/// Capsule between two points, driven by one joint.
struct Capsule {
  Vec3 a, b;
  double radius = 0.0;
  int joint = 0;
};

/// Scalar field sampled by surface extraction; negative inside.
using ScalarField = std::function<double(const Vec3&)>;

/// Naive surface nets over an axis-aligned box; outward-facing triangles,
/// largest connected component only.
TriMesh surface_nets(const ScalarField& field, const Vec3& box_min, const Vec3& box_max, double spacing);

/// Vertex clustering on a regular grid; clusters are split into connected
/// pieces per cell, degenerate and duplicate triangles dropped.
TriMesh cluster_decimate(const TriMesh& mesh, double cell_size, const Vec3& origin = Vec3::Zero());

Skeleton capsule_skeleton(const CapsuleCharacterSpec& spec);
std::vector<Capsule> capsule_layout(const CapsuleCharacterSpec& spec, const Skeleton& skeleton);
double capsule_distance(const std::vector<Capsule>& capsules, const Vec3& p);

/// Articulated capsule humanoid in a T-pose: y up, facing +z, pelvis at the origin.
TemplateCharacter make_capsule_character(const CapsuleCharacterSpec& spec, std::uint64_t seed);

struct RigSpec {
  int count = 8;
  double radius = 3.5;
  double height = 0.2;
  double focal = 400.0;
  int width = 256;
  int height_px = 256;
  Vec3 target = Vec3(0.0, -0.08, 0.0);
};

/// Cameras evenly spaced on a horizontal circle, camera 0 on +z, all aimed at `target`.
std::vector<Camera> make_camera_rig(const RigSpec& spec);

/// Poses with the root rotation `alpha` expressed in world axes.
std::vector<PoseParams> synth_motion(const Skeleton& skeleton, int frames, double amplitude, std::uint64_t seed);

/// Re-expresses a world root rotation relative to camera rotation `input_rotation`.
PoseParams anchor_pose(const PoseParams& world_pose, const Mat3& input_rotation);

/// Smooth node motion: a global rigid part plus local displacements scaled by
/// 1 - u, halved until the ARAP loss is below `arap_bound`.
std::vector<GraphDeformation> synth_deformation(const EmbeddedGraph& graph, int frames, double amplitude,
                                                std::uint64_t seed, double arap_bound = 1.0);

/// Radial outward push of the soft nodes, varying slowly over frames.
std::vector<GraphDeformation> synth_bulge(const EmbeddedGraph& graph, int frames, double amplitude);

/// Zeroes the deformation on nodes carrying landmarks.
void clear_landmark_nodes(const TemplateCharacter& character, GraphDeformation& deformation);

struct NoiseSpec {
  double pixel_sigma = 0.0;
  double dropout = 0.0;
};

/// Renders masks, distance images and detections of one ground-truth frame.
ObservationSet render_observations(const TemplateCharacter& character, const std::vector<Camera>& cameras,
                                   int input_camera, const PoseParams& pose, const GraphDeformation& deformation,
                                   const NoiseSpec& noise, std::uint64_t seed);

enum class DeformationKind { none, bulge, smooth };

struct SceneSpec {
  CapsuleCharacterSpec character;
  RigSpec rig;
  int frames = 30;
  double motion_amplitude = 0.5;
  DeformationKind deformation = DeformationKind::none;
  double deformation_amplitude = 0.04;
  NoiseSpec noise;
  int input_camera = 0;
  std::uint64_t seed = 1;
};

struct SyntheticScene {
  TemplateCharacter character;
  std::vector<Camera> cameras;
  int input_camera = 0;
  std::vector<PoseParams> poses;  ///< alpha relative to the input camera
  std::vector<GraphDeformation> deformations;
  std::vector<ObservationSet> observations;
  NoiseSpec noise;
};

SyntheticScene make_scene(const SceneSpec& spec);

/// World vertices and landmarks of a ground-truth frame.
Points scene_vertices(const SyntheticScene& scene, int frame);
Points scene_landmarks(const SyntheticScene& scene, int frame);

SceneSpec scene_spec_from_json(const std::string& text);
std::string scene_spec_to_json(const SceneSpec& spec);

/// Scene directory: character/, rig.json, observations/frame_XXXX/,
/// ground_truth/ (tracking-result layout), scene.json.
void save_scene(const SyntheticScene& scene, const SceneSpec& spec, const std::filesystem::path& dir);

}  // namespace percap
