#pragma once

#include <array>
#include <vector>

#include "percap/character.hpp"
#include "percap/core.hpp"

namespace percap {

/// Per-node Euler rotations A (K x 3, radians) and translations T (K x 3, meters).
struct GraphDeformation {
  Points rotations;
  Points translations;

  static GraphDeformation zero(int node_count) {
    return {Points::Zero(node_count, 3), Points::Zero(node_count, 3)};
  }
  int node_count() const { return static_cast<int>(rotations.rows()); }
};

struct DeformedMesh {
  Points canonical;  ///< Y: embedded deformation in the rest pose
  Points posed;      ///< V_{c'}: skinned, camera-root-relative
  Points world;      ///< V
};

/// Y_i = sum_k w_ik [R(A_k)(V_i - G_k) + G_k + T_k].
Points embedded_deform(const TemplateCharacter& character, const GraphDeformation& deformation);

/// V_{c',i} = sum_k w_ik [R_sk,k Y_i + t_sk,k].
Points pose_deform(const TemplateCharacter& character, const Points& canonical,
                   const std::vector<Rigid>& node_transforms);

/// V_i = R_{c'}^T V_{c',i} + t.
Points to_world(const Points& posed, const Mat3& input_rotation, const Vec3& translation);

DeformedMesh deform_mesh(const TemplateCharacter& character, const GraphDeformation& deformation,
                         const std::vector<Rigid>& node_transforms, const Mat3& input_rotation,
                         const Vec3& translation);

/// Landmarks carried by their closest graph node (weight 1), in world space.
Points deform_landmarks(const TemplateCharacter& character, const GraphDeformation& deformation,
                        const std::vector<Rigid>& node_transforms, const Mat3& input_rotation,
                        const Vec3& translation);

/// Sparse Jacobian of one world vertex: one 3x3 block per influencing node.
struct VertexJacobian {
  std::vector<int> nodes;
  std::vector<Mat3> d_rotation;     ///< dV_i / dA_k, column j = d/dA_kj
  std::vector<Mat3> d_translation;  ///< dV_i / dT_k
};

/// dV/dA and dV/dT with the pose (node transforms, camera, t) held fixed.
std::vector<VertexJacobian> deform_jacobians(const TemplateCharacter& character,
                                             const GraphDeformation& deformation,
                                             const std::vector<Rigid>& node_transforms,
                                             const Mat3& input_rotation);

/// Same blocks for the node-attached landmarks.
std::vector<VertexJacobian> landmark_jacobians(const TemplateCharacter& character,
                                               const GraphDeformation& deformation,
                                               const std::vector<Rigid>& node_transforms,
                                               const Mat3& input_rotation);

/// Gradient of a scalar with respect to (A, T) given its gradient with
/// respect to world vertices. Rows of `grad_world` that are zero are skipped.
void deform_vjp(const TemplateCharacter& character, const GraphDeformation& deformation,
                const std::vector<Rigid>& node_transforms, const Mat3& input_rotation,
                const Points& grad_world, Points& grad_rotations, Points& grad_translations);

/// Landmark counterpart of deform_vjp.
void landmark_vjp(const TemplateCharacter& character, const GraphDeformation& deformation,
                  const std::vector<Rigid>& node_transforms, const Mat3& input_rotation,
                  const Points& grad_landmarks, Points& grad_rotations, Points& grad_translations);

}  // namespace percap
