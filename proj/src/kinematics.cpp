#include "percap/kinematics.hpp"

#include "percap/rotation.hpp"

namespace percap {

namespace {

void check_dofs(const Skeleton& skeleton, const VecX& theta) {
  if (theta.size() != skeleton.dof_count()) {
    throw InvalidInput("theta has " + std::to_string(theta.size()) + " entries, skeleton has " +
                       std::to_string(skeleton.dof_count()) + " DOFs");
  }
}

}  // namespace

ForwardKinematics forward_kinematics(const Skeleton& skeleton, const VecX& theta, const Vec3& alpha) {
  check_dofs(skeleton, theta);
  ForwardKinematics fk;
  fk.joints.resize(skeleton.joint_count());
  const Mat3 root_rotation = euler_to_rotation(alpha);
  for (int j = 0; j < skeleton.joint_count(); ++j) {
    const Joint& joint = skeleton.joints[j];
    const Mat3 parent_rotation = joint.parent < 0 ? root_rotation : fk.joints[joint.parent].rotation;
    const Vec3 parent_origin = joint.parent < 0 ? Vec3::Zero() : fk.joints[joint.parent].translation;
    Mat3 r = parent_rotation;
    for (const auto& ax : joint.axes) r = r * axis_angle_rotation<double>(ax.axis, theta(ax.dof));
    fk.joints[j] = {r, parent_origin + parent_rotation * joint.offset};
  }
  fk.landmarks.resize(skeleton.landmark_count(), 3);
  for (int m = 0; m < skeleton.landmark_count(); ++m) {
    const Landmark& lm = skeleton.landmarks[m];
    fk.landmarks.row(m) = fk.joints[lm.joint].apply(lm.offset).transpose();
  }
  return fk;
}

MatX fk_jacobian(const Skeleton& skeleton, const VecX& theta, const Vec3& alpha) {
  check_dofs(skeleton, theta);
  const ForwardKinematics fk = forward_kinematics(skeleton, theta, alpha);
  const int dofs = skeleton.dof_count();
  const int m_count = skeleton.landmark_count();
  MatX jac = MatX::Zero(3 * m_count, dofs + 3);

  const Mat3 root_rotation = euler_to_rotation(alpha);
  for (int j = 0; j < skeleton.joint_count(); ++j) {
    const Joint& joint = skeleton.joints[j];
    if (joint.axes.empty()) continue;
    const Vec3 pivot = fk.joints[j].translation;
    Mat3 r = joint.parent < 0 ? root_rotation : fk.joints[joint.parent].rotation;
    for (const auto& ax : joint.axes) {
      const Vec3 world_axis = r * ax.axis;
      for (int m = 0; m < m_count; ++m) {
        // Landmarks on j or any descendant of j move with this DOF.
        int a = skeleton.landmarks[m].joint;
        while (a > j) a = skeleton.joints[a].parent;
        if (a != j) continue;
        const Vec3 p = fk.landmarks.row(m).transpose();
        jac.block<3, 1>(3 * m, ax.dof) = world_axis.cross(p - pivot);
      }
      r = r * axis_angle_rotation<double>(ax.axis, theta(ax.dof));
    }
  }

  const auto d_root = euler_rotation_derivatives(alpha);
  for (int m = 0; m < m_count; ++m) {
    const Vec3 local = root_rotation.transpose() * fk.landmarks.row(m).transpose();
    for (int i = 0; i < 3; ++i) jac.block<3, 1>(3 * m, dofs + i) = d_root[i] * local;
  }
  return jac;
}

std::vector<Rigid> skinning_transforms(const Skeleton& skeleton, const ForwardKinematics& fk) {
  const Points rest = skeleton.rest_joint_positions();
  std::vector<Rigid> out(skeleton.joint_count());
  for (int j = 0; j < skeleton.joint_count(); ++j) {
    const Rigid& frame = fk.joints[j];
    out[j] = {frame.rotation, frame.translation - frame.rotation * rest.row(j).transpose()};
  }
  return out;
}

std::vector<Rigid> dqs_node_transforms(const std::vector<Rigid>& joint_transforms,
                                       const std::vector<std::vector<JointWeight>>& node_skin_weights) {
  std::vector<DualQuaternion<double>> dq(joint_transforms.size());
  for (std::size_t j = 0; j < joint_transforms.size(); ++j) {
    dq[j] = DualQuaternion<double>::from_rigid(joint_transforms[j].rotation, joint_transforms[j].translation);
  }
  std::vector<Rigid> out(node_skin_weights.size());
  for (std::size_t k = 0; k < node_skin_weights.size(); ++k) {
    const auto& weights = node_skin_weights[k];
    if (weights.empty()) throw DegenerateBlend("node " + std::to_string(k) + " has no skin weights");
    std::size_t pivot = 0;
    for (std::size_t e = 1; e < weights.size(); ++e) {
      if (weights[e].weight > weights[pivot].weight) pivot = e;
    }
    const Eigen::Vector4d pivot_real = dq.at(weights[pivot].joint).real.coeffs();
    Eigen::Vector4d real = Eigen::Vector4d::Zero();
    Eigen::Vector4d dual = Eigen::Vector4d::Zero();
    for (const auto& jw : weights) {
      const auto& q = dq.at(jw.joint);
      const double sign = q.real.coeffs().dot(pivot_real) < 0.0 ? -1.0 : 1.0;
      real += sign * jw.weight * q.real.coeffs();
      dual += sign * jw.weight * q.dual.coeffs();
    }
    const double norm = real.norm();
    if (norm < 1e-8) {
      throw DegenerateBlend("dual-quaternion blend of node " + std::to_string(k) + " has near-zero norm");
    }
    DualQuaternion<double> blended;
    blended.real.coeffs() = real / norm;
    blended.dual.coeffs() = dual / norm;
    blended.to_rigid(out[k].rotation, out[k].translation);
  }
  return out;
}

std::vector<Rigid> pose_node_transforms(const TemplateCharacter& character, const VecX& theta,
                                        const Vec3& alpha) {
  const ForwardKinematics fk = forward_kinematics(character.skeleton, theta, alpha);
  return dqs_node_transforms(skinning_transforms(character.skeleton, fk), character.graph.skin_weights);
}

}  // namespace percap
