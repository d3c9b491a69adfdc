#pragma once

#include <vector>

#include "percap/character.hpp"
#include "percap/core.hpp"

namespace percap {

/// Joint angles, camera-relative root rotation (Euler XYZ) and world translation.
struct PoseParams {
  VecX theta;
  Vec3 alpha = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  static PoseParams rest(const Skeleton& skeleton) {
    return {VecX::Zero(skeleton.dof_count()), Vec3::Zero(), Vec3::Zero()};
  }
};

struct ForwardKinematics {
  /// Joint frames in camera-root-relative coordinates.
  std::vector<Rigid> joints;
  /// Landmarks P_{c'}, M x 3.
  Points landmarks;
};

ForwardKinematics forward_kinematics(const Skeleton& skeleton, const VecX& theta, const Vec3& alpha);

/// d landmarks / d (theta, alpha): row 3m + r is coordinate r of landmark m;
/// columns 0..DOF-1 are theta, the last three alpha.
MatX fk_jacobian(const Skeleton& skeleton, const VecX& theta, const Vec3& alpha);

/// Per joint, the rigid motion taking rest-pose (theta = 0, alpha = 0)
/// coordinates to posed coordinates.
std::vector<Rigid> skinning_transforms(const Skeleton& skeleton, const ForwardKinematics& fk);

/// Dual-quaternion blend of joint transforms for every graph node, aligned to
/// the hemisphere of the node's highest-weight joint.
std::vector<Rigid> dqs_node_transforms(const std::vector<Rigid>& joint_transforms,
                                       const std::vector<std::vector<JointWeight>>& node_skin_weights);

/// Node transforms for a pose in one call.
std::vector<Rigid> pose_node_transforms(const TemplateCharacter& character, const VecX& theta,
                                        const Vec3& alpha);

}  // namespace percap
