#include "percap/deform.hpp"

#include "percap/rotation.hpp"

namespace percap {

namespace {

void check_dims(const TemplateCharacter& c, const GraphDeformation& d) {
  const int k = c.graph.node_count();
  if (d.rotations.rows() != k || d.translations.rows() != k) {
    throw InvalidInput("graph deformation has " + std::to_string(d.rotations.rows()) + " nodes, graph has " +
                       std::to_string(k));
  }
}

void check_transforms(const TemplateCharacter& c, const std::vector<Rigid>& t) {
  if (static_cast<int>(t.size()) != c.graph.node_count()) throw InvalidInput("node transform count mismatch");
}

std::vector<Mat3> node_rotations(const GraphDeformation& d) {
  std::vector<Mat3> r(d.node_count());
  for (int k = 0; k < d.node_count(); ++k) r[k] = euler_to_rotation(d.rotations.row(k).transpose());
  return r;
}

std::vector<std::array<Mat3, 3>> node_rotation_derivatives(const GraphDeformation& d) {
  std::vector<std::array<Mat3, 3>> r(d.node_count());
  for (int k = 0; k < d.node_count(); ++k) r[k] = euler_rotation_derivatives(d.rotations.row(k).transpose());
  return r;
}

/// Embedded-deformation of one rest point under its influence list.
Vec3 embed_point(const Vec3& rest, const std::vector<VertexInfluence>& influences, const Points& nodes,
                 const std::vector<Mat3>& rotations, const Points& translations) {
  Vec3 y = Vec3::Zero();
  for (const auto& inf : influences) {
    const Vec3 g = nodes.row(inf.node).transpose();
    y += inf.weight * (rotations[inf.node] * (rest - g) + g + translations.row(inf.node).transpose());
  }
  return y;
}

/// Skinning blend sum_k w_ik R_sk,k and sum_k w_ik t_sk,k.
void skin_blend(const std::vector<VertexInfluence>& influences, const std::vector<Rigid>& transforms,
                Mat3& rotation, Vec3& translation) {
  rotation.setZero();
  translation.setZero();
  for (const auto& inf : influences) {
    rotation += inf.weight * transforms[inf.node].rotation;
    translation += inf.weight * transforms[inf.node].translation;
  }
}

std::vector<VertexInfluence> landmark_influence(const TemplateCharacter& c, int m) {
  return {{c.landmark_nodes.at(m), 1.0}};
}

VertexJacobian point_jacobian(const Vec3& rest, const std::vector<VertexInfluence>& influences,
                              const TemplateCharacter& c, const std::vector<std::array<Mat3, 3>>& d_rot,
                              const std::vector<Rigid>& node_transforms, const Mat3& input_rotation) {
  Mat3 blend;
  Vec3 unused;
  skin_blend(influences, node_transforms, blend, unused);
  const Mat3 chain = input_rotation.transpose() * blend;
  VertexJacobian jac;
  for (const auto& inf : influences) {
    const Vec3 lever = rest - c.graph.nodes.row(inf.node).transpose();
    Mat3 da;
    for (int j = 0; j < 3; ++j) da.col(j) = inf.weight * chain * (d_rot[inf.node][j] * lever);
    jac.nodes.push_back(inf.node);
    jac.d_rotation.push_back(da);
    jac.d_translation.push_back(inf.weight * chain);
  }
  return jac;
}

void point_vjp(const Vec3& rest, const std::vector<VertexInfluence>& influences, const TemplateCharacter& c,
               const std::vector<std::array<Mat3, 3>>& d_rot, const std::vector<Rigid>& node_transforms,
               const Mat3& input_rotation, const Vec3& grad, Points& grad_rotations, Points& grad_translations) {
  Mat3 blend;
  Vec3 unused;
  skin_blend(influences, node_transforms, blend, unused);
  const Vec3 g_canonical = blend.transpose() * (input_rotation * grad);
  for (const auto& inf : influences) {
    const Vec3 lever = rest - c.graph.nodes.row(inf.node).transpose();
    const Vec3 gw = inf.weight * g_canonical;
    grad_translations.row(inf.node) += gw.transpose();
    for (int j = 0; j < 3; ++j) grad_rotations(inf.node, j) += gw.dot(d_rot[inf.node][j] * lever);
  }
}

}  // namespace

Points embedded_deform(const TemplateCharacter& c, const GraphDeformation& d) {
  check_dims(c, d);
  const auto rot = node_rotations(d);
  const Points& rest = c.mesh.vertices();
  Points y(rest.rows(), 3);
  for (Eigen::Index i = 0; i < rest.rows(); ++i) {
    y.row(i) = embed_point(rest.row(i).transpose(), c.graph.influences[i], c.graph.nodes, rot, d.translations).transpose();
  }
  return y;
}

Points pose_deform(const TemplateCharacter& c, const Points& canonical, const std::vector<Rigid>& node_transforms) {
  check_transforms(c, node_transforms);
  Points v(canonical.rows(), 3);
  Mat3 r;
  Vec3 t;
  for (Eigen::Index i = 0; i < canonical.rows(); ++i) {
    skin_blend(c.graph.influences[i], node_transforms, r, t);
    v.row(i) = (r * canonical.row(i).transpose() + t).transpose();
  }
  return v;
}

Points to_world(const Points& posed, const Mat3& input_rotation, const Vec3& translation) {
  return (posed * input_rotation).rowwise() + translation.transpose();
}

DeformedMesh deform_mesh(const TemplateCharacter& c, const GraphDeformation& d,
                         const std::vector<Rigid>& node_transforms, const Mat3& input_rotation,
                         const Vec3& translation) {
  DeformedMesh out;
  out.canonical = embedded_deform(c, d);
  out.posed = pose_deform(c, out.canonical, node_transforms);
  out.world = to_world(out.posed, input_rotation, translation);
  return out;
}

Points deform_landmarks(const TemplateCharacter& c, const GraphDeformation& d,
                        const std::vector<Rigid>& node_transforms, const Mat3& input_rotation,
                        const Vec3& translation) {
  check_dims(c, d);
  check_transforms(c, node_transforms);
  const auto rot = node_rotations(d);
  Points out(c.landmark_rest.rows(), 3);
  for (Eigen::Index m = 0; m < out.rows(); ++m) {
    const auto inf = landmark_influence(c, static_cast<int>(m));
    const Vec3 y = embed_point(c.landmark_rest.row(m).transpose(), inf, c.graph.nodes, rot, d.translations);
    const Rigid& node = node_transforms[inf[0].node];
    out.row(m) = (input_rotation.transpose() * node.apply(y) + translation).transpose();
  }
  return out;
}

std::vector<VertexJacobian> deform_jacobians(const TemplateCharacter& c, const GraphDeformation& d,
                                             const std::vector<Rigid>& node_transforms,
                                             const Mat3& input_rotation) {
  check_dims(c, d);
  check_transforms(c, node_transforms);
  const auto d_rot = node_rotation_derivatives(d);
  const Points& rest = c.mesh.vertices();
  std::vector<VertexJacobian> out(rest.rows());
  for (Eigen::Index i = 0; i < rest.rows(); ++i) {
    out[i] = point_jacobian(rest.row(i).transpose(), c.graph.influences[i], c, d_rot, node_transforms, input_rotation);
  }
  return out;
}

std::vector<VertexJacobian> landmark_jacobians(const TemplateCharacter& c, const GraphDeformation& d,
                                               const std::vector<Rigid>& node_transforms,
                                               const Mat3& input_rotation) {
  check_dims(c, d);
  check_transforms(c, node_transforms);
  const auto d_rot = node_rotation_derivatives(d);
  std::vector<VertexJacobian> out(c.landmark_rest.rows());
  for (Eigen::Index m = 0; m < c.landmark_rest.rows(); ++m) {
    out[m] = point_jacobian(c.landmark_rest.row(m).transpose(), landmark_influence(c, static_cast<int>(m)), c, d_rot,
                            node_transforms, input_rotation);
  }
  return out;
}

void deform_vjp(const TemplateCharacter& c, const GraphDeformation& d, const std::vector<Rigid>& node_transforms,
                const Mat3& input_rotation, const Points& grad_world, Points& grad_rotations,
                Points& grad_translations) {
  check_dims(c, d);
  check_transforms(c, node_transforms);
  const auto d_rot = node_rotation_derivatives(d);
  const Points& rest = c.mesh.vertices();
  for (Eigen::Index i = 0; i < rest.rows(); ++i) {
    const Vec3 g = grad_world.row(i).transpose();
    if (g.isZero(0.0)) continue;
    point_vjp(rest.row(i).transpose(), c.graph.influences[i], c, d_rot, node_transforms, input_rotation, g,
              grad_rotations, grad_translations);
  }
}

void landmark_vjp(const TemplateCharacter& c, const GraphDeformation& d, const std::vector<Rigid>& node_transforms,
                  const Mat3& input_rotation, const Points& grad_landmarks, Points& grad_rotations,
                  Points& grad_translations) {
  check_dims(c, d);
  check_transforms(c, node_transforms);
  const auto d_rot = node_rotation_derivatives(d);
  for (Eigen::Index m = 0; m < c.landmark_rest.rows(); ++m) {
    const Vec3 g = grad_landmarks.row(m).transpose();
    if (g.isZero(0.0)) continue;
    point_vjp(c.landmark_rest.row(m).transpose(), landmark_influence(c, static_cast<int>(m)), c, d_rot,
              node_transforms, input_rotation, g, grad_rotations, grad_translations);
  }
}

}  // namespace percap
