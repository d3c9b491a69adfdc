#include "percap/losses.hpp"

#include <cmath>

#include "percap/kinematics.hpp"
#include "percap/rotation.hpp"

namespace percap {

VecX flatten(const Points& p) {
  VecX v(p.size());
  Eigen::Map<Points>(v.data(), p.rows(), 3) = p;
  return v;
}

Points unflatten(const VecX& v) { return Eigen::Map<const Points>(v.data(), v.size() / 3, 3); }

namespace {

std::vector<int> resolve_subset(const std::vector<int>& subset, int camera_count) {
  if (!subset.empty()) return subset;
  std::vector<int> all(camera_count);
  for (int c = 0; c < camera_count; ++c) all[c] = c;
  return all;
}

}  // namespace

LossReport reprojection_loss(const Points& points, const std::vector<Camera>& cameras, const ObservationSet& obs,
                             const VecX& lambda, const std::vector<int>& camera_subset, Points* grad_points) {
  LossReport report;
  if (grad_points) grad_points->setZero(points.rows(), 3);
  for (int c : resolve_subset(camera_subset, obs.camera_count())) {
    const auto& view = obs.views.at(c);
    double cam_total = 0.0;
    for (Eigen::Index m = 0; m < points.rows(); ++m) {
      const double sigma = effective_confidence(view.confidences(m));
      const double weight = (lambda.size() > 0 ? lambda(m) : 1.0) * sigma;
      if (weight == 0.0) continue;
      Vec2 px;
      Eigen::Matrix<double, 2, 3> jac;
      if (!project_with_jacobian(cameras.at(c), points.row(m).transpose(), px, jac)) {
        ++report.skipped_terms;
        continue;
      }
      const Vec2 r = px - view.detections.row(m).transpose();
      cam_total += weight * r.squaredNorm();
      if (grad_points) grad_points->row(m) += (2.0 * weight * jac.transpose() * r).transpose();
    }
    report.terms["camera_" + std::to_string(c)] = cam_total;
    report.value += cam_total;
  }
  return report;
}

PoseKeypointResult pose_keypoint_loss(const Skeleton& skeleton, const std::vector<Camera>& cameras,
                                      const ObservationSet& obs, const GlobalAlignment& alignment,
                                      const Mat3& input_rotation, const VecX& lambda, const VecX& theta,
                                      const Vec3& alpha, const std::vector<int>& camera_subset) {
  const ForwardKinematics fk = forward_kinematics(skeleton, theta, alpha);
  const Points rotated = fk.landmarks * input_rotation;
  PoseKeypointResult out;
  out.translation = alignment.solve(rotated);
  out.landmarks = rotated.rowwise() + out.translation.transpose();
  Points grad;
  out.report = reprojection_loss(out.landmarks, cameras, obs, lambda, camera_subset, &grad);

  // t depends on every rotated landmark; fold its sensitivity into each row.
  const Vec3 grad_t = grad.colwise().sum().transpose();
  const MatX& jt = alignment.jacobian();
  const MatX jfk = fk_jacobian(skeleton, theta, alpha);
  VecX grad_x = VecX::Zero(jfk.cols());
  for (Eigen::Index m = 0; m < grad.rows(); ++m) {
    const Vec3 g_rot = grad.row(m).transpose() + jt.block<3, 3>(0, 3 * m).transpose() * grad_t;
    grad_x += jfk.middleRows<3>(3 * m).transpose() * (input_rotation * g_rot);
  }
  const int dofs = skeleton.dof_count();
  out.report.gradients["theta"] = grad_x.head(dofs);
  out.report.gradients["alpha"] = grad_x.tail<3>();
  return out;
}

LossReport limit_loss(const VecX& theta, const std::vector<DofLimit>& limits) {
  if (theta.size() != static_cast<Eigen::Index>(limits.size())) throw InvalidInput("limit_loss: DOF count mismatch");
  LossReport report;
  VecX grad = VecX::Zero(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double x = theta(i);
    if (x > limits[i].upper) {
      report.value += (x - limits[i].upper) * (x - limits[i].upper);
      grad(i) = 2.0 * (x - limits[i].upper);
    } else if (x < limits[i].lower) {
      report.value += (limits[i].lower - x) * (limits[i].lower - x);
      grad(i) = 2.0 * (x - limits[i].lower);
    }
  }
  report.gradients["theta"] = grad;
  return report;
}

std::vector<SilhouetteTerm> prepare_silhouette_terms(const Points& world_vertices, const std::vector<Triangle>& triangles,
                                                     const EdgeTopology& topology, const std::vector<Camera>& cameras,
                                                     const std::vector<DistanceImage>& fields,
                                                     const std::vector<int>& camera_subset) {
  std::vector<SilhouetteTerm> terms;
  for (int c : resolve_subset(camera_subset, static_cast<int>(cameras.size()))) {
    const Camera& cam = cameras.at(c);
    const DepthMap depth = rasterize_depth(world_vertices, triangles, cam);
    for (const auto& bv : boundary_vertices(world_vertices, triangles, topology, cam, depth)) {
      const Vec2 px = project(cam, world_vertices.row(bv.vertex).transpose());
      const FieldSample s = sample_dt(fields.at(c), px);
      terms.push_back({c, bv.vertex, directional_weight(bv.normal, s.gradient)});
    }
  }
  return terms;
}

LossReport silhouette_loss_points(const Points& world_vertices, const std::vector<Camera>& cameras,
                                  const std::vector<DistanceImage>& fields, const std::vector<SilhouetteTerm>& terms,
                                  Points* grad_vertices) {
  LossReport report;
  if (grad_vertices) grad_vertices->setZero(world_vertices.rows(), 3);
  for (const auto& term : terms) {
    if (term.rho == 0.0) continue;
    Vec2 px;
    Eigen::Matrix<double, 2, 3> jac;
    if (!project_with_jacobian(cameras.at(term.camera), world_vertices.row(term.vertex).transpose(), px, jac)) {
      ++report.skipped_terms;
      continue;
    }
    const FieldSample s = sample_dt(fields.at(term.camera), px);
    if (!std::isfinite(s.value)) {
      ++report.skipped_terms;
      continue;
    }
    report.value += term.rho * s.value * s.value;
    report.terms["camera_" + std::to_string(term.camera)] += term.rho * s.value * s.value;
    if (grad_vertices) {
      grad_vertices->row(term.vertex) += (2.0 * term.rho * s.value * (jac.transpose() * s.gradient)).transpose();
    }
  }
  return report;
}

namespace {

void attach_deform_gradients(LossReport& report, const Points& grad_rot, const Points& grad_trans) {
  report.gradients["rotations"] = flatten(grad_rot);
  report.gradients["translations"] = flatten(grad_trans);
}

}  // namespace

LossReport silhouette_loss(const TemplateCharacter& character, const GraphDeformation& deformation,
                           const PoseContext& pose, const std::vector<Camera>& cameras,
                           const std::vector<DistanceImage>& fields, const std::vector<SilhouetteTerm>& terms) {
  const DeformedMesh mesh =
      deform_mesh(character, deformation, pose.node_transforms, pose.input_rotation, pose.translation);
  Points grad_v;
  LossReport report = silhouette_loss_points(mesh.world, cameras, fields, terms, &grad_v);
  Points grad_rot = Points::Zero(deformation.node_count(), 3);
  Points grad_trans = Points::Zero(deformation.node_count(), 3);
  deform_vjp(character, deformation, pose.node_transforms, pose.input_rotation, grad_v, grad_rot, grad_trans);
  attach_deform_gradients(report, grad_rot, grad_trans);
  return report;
}

LossReport keypoint_graph_loss(const TemplateCharacter& character, const GraphDeformation& deformation,
                               const PoseContext& pose, const std::vector<Camera>& cameras,
                               const ObservationSet& obs, const std::vector<int>& camera_subset) {
  const Points landmarks =
      deform_landmarks(character, deformation, pose.node_transforms, pose.input_rotation, pose.translation);
  Points grad_m;
  LossReport report = reprojection_loss(landmarks, cameras, obs, VecX(), camera_subset, &grad_m);
  Points grad_rot = Points::Zero(deformation.node_count(), 3);
  Points grad_trans = Points::Zero(deformation.node_count(), 3);
  landmark_vjp(character, deformation, pose.node_transforms, pose.input_rotation, grad_m, grad_rot, grad_trans);
  attach_deform_gradients(report, grad_rot, grad_trans);
  return report;
}

Vec3 arap_residual(const EmbeddedGraph& graph, const GraphDeformation& d, int k, int l) {
  const Vec3 gk = graph.nodes.row(k).transpose();
  const Vec3 gl = graph.nodes.row(l).transpose();
  return euler_to_rotation(d.rotations.row(k).transpose()) * (gl - gk) + d.translations.row(k).transpose() + gk -
         (gl + d.translations.row(l).transpose());
}

LossReport arap_loss(const EmbeddedGraph& graph, const GraphDeformation& d, double epsilon) {
  const int k_count = graph.node_count();
  if (d.node_count() != k_count) throw InvalidInput("arap_loss: deformation size mismatch");
  LossReport report;
  Points grad_rot = Points::Zero(k_count, 3);
  Points grad_trans = Points::Zero(k_count, 3);
  for (int k = 0; k < k_count; ++k) {
    const Vec3 angles = d.rotations.row(k).transpose();
    const Mat3 r = euler_to_rotation(angles);
    const auto dr = euler_rotation_derivatives(angles);
    const Vec3 gk = graph.nodes.row(k).transpose();
    const Vec3 tk = d.translations.row(k).transpose();
    for (std::size_t e = 0; e < graph.neighbors[k].size(); ++e) {
      const int l = graph.neighbors[k][e];
      const double u = graph.rigidity[k][e];
      const Vec3 lever = graph.nodes.row(l).transpose() - gk;
      const Vec3 res = r * lever + tk + gk - (graph.nodes.row(l).transpose() + d.translations.row(l).transpose());
      Vec3 dh;
      for (int j = 0; j < 3; ++j) {
        const double a = std::abs(res(j));
        if (a <= epsilon) {
          report.value += u * res(j) * res(j) / (2.0 * epsilon);
          dh(j) = res(j) / epsilon;
        } else {
          report.value += u * (a - 0.5 * epsilon);
          dh(j) = res(j) > 0.0 ? 1.0 : -1.0;
        }
      }
      dh *= u;
      grad_trans.row(k) += dh.transpose();
      grad_trans.row(l) -= dh.transpose();
      for (int j = 0; j < 3; ++j) grad_rot(k, j) += dh.dot(dr[j] * lever);
    }
  }
  attach_deform_gradients(report, grad_rot, grad_trans);
  return report;
}

}  // namespace percap
