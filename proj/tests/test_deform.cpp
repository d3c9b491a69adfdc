#include "doctest.h"
#include "fixtures.hpp"
#include "percap/deform.hpp"
#include "percap/kinematics.hpp"
#include "percap/rotation.hpp"

using namespace percap;
using fixtures::uniform;

namespace {

GraphDeformation random_deformation(std::mt19937_64& rng, int k, double rot = 0.3, double trans = 0.05) {
  GraphDeformation d = GraphDeformation::zero(k);
  for (int i = 0; i < k; ++i) {
    d.rotations.row(i) = fixtures::random_vec(rng, rot).transpose();
    d.translations.row(i) = fixtures::random_vec(rng, trans).transpose();
  }
  return d;
}

Mat3 euler_oracle(const Vec3& a) {
  return (Eigen::AngleAxisd(a(0), Vec3::UnitX()) * Eigen::AngleAxisd(a(1), Vec3::UnitY()) *
          Eigen::AngleAxisd(a(2), Vec3::UnitZ()))
      .toRotationMatrix();
}

VecX random_pose(std::mt19937_64& rng, const Skeleton& s) {
  VecX t(s.dof_count());
  for (int d = 0; d < s.dof_count(); ++d) t(d) = uniform(rng, -0.5, 0.5);
  return t;
}

}  // namespace

TEST_CASE("embedded deformation") {
  const TemplateCharacter& c = fixtures::capsule();
  const int k = c.graph.node_count();

  SUBCASE("zero parameters reproduce the template") {
    const Points y = embedded_deform(c, GraphDeformation::zero(k));
    CHECK((y - c.mesh.vertices()).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("global rigid motion") {
    std::mt19937_64 rng(3);
    const Mat3 r0 = fixtures::random_rotation(rng);
    const Vec3 v = fixtures::random_vec(rng);
    GraphDeformation d = GraphDeformation::zero(k);
    for (int i = 0; i < k; ++i) {
      const Vec3 g = c.graph.nodes.row(i).transpose();
      d.rotations.row(i) = rotation_to_euler(r0).transpose();
      d.translations.row(i) = (r0 * g + v - g).transpose();
    }
    const Points y = embedded_deform(c, d);
    const Points expected = (c.mesh.vertices() * r0.transpose()).rowwise() + v.transpose();
    CHECK((y - expected).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("naive per-vertex loop") {
    std::mt19937_64 rng(5);
    const GraphDeformation d = random_deformation(rng, k);
    const Points y = embedded_deform(c, d);
    double worst = 0.0;
    for (int i = 0; i < c.mesh.vertex_count(); ++i) {
      Vec3 acc = Vec3::Zero();
      for (const auto& inf : c.graph.influences[i]) {
        const Vec3 g = c.graph.nodes.row(inf.node).transpose();
        const Vec3 rest = c.mesh.vertices().row(i).transpose();
        acc += inf.weight *
               (euler_oracle(d.rotations.row(inf.node).transpose()) * (rest - g) + g +
                d.translations.row(inf.node).transpose());
      }
      worst = std::max(worst, (acc - y.row(i).transpose()).norm());
    }
    CHECK(worst < 1e-12);
  }

  CHECK_THROWS_AS(embedded_deform(c, GraphDeformation::zero(k - 1)), InvalidInput);
}

TEST_CASE("pose deformation and world transform") {
  const TemplateCharacter& c = fixtures::capsule();
  const int k = c.graph.node_count();
  std::mt19937_64 rng(7);
  const Points y = embedded_deform(c, random_deformation(rng, k));

  SUBCASE("identity transforms") {
    const Points v = pose_deform(c, y, std::vector<Rigid>(k));
    CHECK((v - y).cwiseAbs().maxCoeff() < 1e-15);
  }

  SUBCASE("equal transforms act rigidly") {
    const Rigid t0{fixtures::random_rotation(rng), fixtures::random_vec(rng)};
    const Points v = pose_deform(c, y, std::vector<Rigid>(k, t0));
    const Points expected = (y * t0.rotation.transpose()).rowwise() + t0.translation.transpose();
    CHECK((v - expected).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("random pose against a scalar loop") {
    const auto nt = pose_node_transforms(c, random_pose(rng, c.skeleton), fixtures::random_vec(rng));
    const Points v = pose_deform(c, y, nt);
    double worst = 0.0;
    for (int i = 0; i < y.rows(); ++i) {
      Vec3 acc = Vec3::Zero();
      for (const auto& inf : c.graph.influences[i]) {
        acc += inf.weight * (nt[inf.node].rotation * y.row(i).transpose() + nt[inf.node].translation);
      }
      worst = std::max(worst, (acc - v.row(i).transpose()).norm());
    }
    CHECK(worst < 1e-12);
  }

  SUBCASE("world transform") {
    CHECK(to_world(y, Mat3::Identity(), Vec3::Zero()) == y);
    const Vec3 t(0.1, -2.0, 3.0);
    const Points shifted = to_world(y, Mat3::Identity(), t);
    CHECK((shifted.rowwise() - t.transpose() - y).cwiseAbs().maxCoeff() < 1e-15);
    const Mat3 r = fixtures::random_rotation(rng);
    const Points w = to_world(y, r, t);
    for (int i = 0; i < 50; ++i) {
      CHECK((w.row(i).transpose() - (r.transpose() * y.row(i).transpose() + t)).norm() < 1e-14);
    }
  }
}

TEST_CASE("deformed landmarks") {
  const TemplateCharacter& c = fixtures::capsule();
  const int k = c.graph.node_count();
  const std::vector<Rigid> identity(k);

  CHECK((deform_landmarks(c, GraphDeformation::zero(k), identity, Mat3::Identity(), Vec3::Zero()) -
         c.landmark_rest)
            .cwiseAbs()
            .maxCoeff() < 1e-15);

  GraphDeformation d = GraphDeformation::zero(k);
  const Vec3 delta(0.01, -0.02, 0.03);
  const int node = c.landmark_nodes[3];
  d.translations.row(node) = delta.transpose();
  const Points moved = deform_landmarks(c, d, identity, Mat3::Identity(), Vec3::Zero());
  for (int m = 0; m < c.skeleton.landmark_count(); ++m) {
    const Vec3 shift = (moved.row(m) - c.landmark_rest.row(m)).transpose();
    if (c.landmark_nodes[m] == node) {
      CHECK((shift - delta).norm() < 1e-15);
    } else {
      CHECK(shift.norm() < 1e-15);
    }
  }

  std::mt19937_64 rng(9);
  const GraphDeformation rd = random_deformation(rng, k);
  const auto nt = pose_node_transforms(c, random_pose(rng, c.skeleton), fixtures::random_vec(rng));
  const Mat3 r = fixtures::random_rotation(rng);
  const Vec3 t = fixtures::random_vec(rng);
  const Points lm = deform_landmarks(c, rd, nt, r, t);
  for (int m = 0; m < c.skeleton.landmark_count(); ++m) {
    const int g = c.landmark_nodes[m];
    const Vec3 gk = c.graph.nodes.row(g).transpose();
    const Vec3 y = euler_oracle(rd.rotations.row(g).transpose()) * (c.landmark_rest.row(m).transpose() - gk) + gk +
                   rd.translations.row(g).transpose();
    const Vec3 v = r.transpose() * (nt[g].rotation * y + nt[g].translation) + t;
    CHECK((lm.row(m).transpose() - v).norm() < 1e-12);
  }
}

TEST_CASE("deformation jacobians") {
  const TemplateCharacter& c = fixtures::capsule();
  const int k = c.graph.node_count();
  std::mt19937_64 rng(13);

  SUBCASE("identity pose translation blocks") {
    const auto jac = deform_jacobians(c, GraphDeformation::zero(k), std::vector<Rigid>(k), Mat3::Identity());
    for (int i = 0; i < c.mesh.vertex_count(); i += 37) {
      const auto& inf = c.graph.influences[i];
      REQUIRE(jac[i].nodes.size() == inf.size());
      for (std::size_t e = 0; e < inf.size(); ++e) {
        CHECK(jac[i].nodes[e] == inf[e].node);
        CHECK((jac[i].d_translation[e] - inf[e].weight * Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-15);
      }
    }
  }

  SUBCASE("finite differences and sparsity") {
    const GraphDeformation d = random_deformation(rng, k);
    const auto nt = pose_node_transforms(c, random_pose(rng, c.skeleton), fixtures::random_vec(rng));
    const Mat3 r = fixtures::random_rotation(rng);
    const auto jac = deform_jacobians(c, d, nt, r);
    auto world = [&](const GraphDeformation& dd) { return to_world(pose_deform(c, embedded_deform(c, dd), nt), r, Vec3::Zero()); };
    for (int trial = 0; trial < 6; ++trial) {
      const int node = static_cast<int>(rng() % k);
      for (int block = 0; block < 2; ++block) {
        for (int axis = 0; axis < 3; ++axis) {
          GraphDeformation p = d, m = d;
          const double h = 1e-6;
          (block ? p.translations : p.rotations)(node, axis) += h;
          (block ? m.translations : m.rotations)(node, axis) -= h;
          const Points fd = (world(p) - world(m)) / (2 * h);
          double err = 0.0, scale = 0.0;
          for (int i = 0; i < c.mesh.vertex_count(); ++i) {
            Vec3 analytic = Vec3::Zero();
            for (std::size_t e = 0; e < jac[i].nodes.size(); ++e) {
              if (jac[i].nodes[e] == node) analytic = (block ? jac[i].d_translation[e] : jac[i].d_rotation[e]).col(axis);
            }
            const Vec3 numeric = fd.row(i).transpose();
            // Outside the influence set the derivative is exactly zero.
            if (analytic.norm() == 0.0) CHECK(numeric.norm() == 0.0);
            err = std::max(err, (analytic - numeric).cwiseAbs().maxCoeff());
            scale = std::max(scale, numeric.cwiseAbs().maxCoeff());
          }
          if (scale > 0.0) CHECK(err / scale < 1e-4);
        }
      }
    }
  }

  SUBCASE("vector-jacobian products agree with the blocks") {
    const GraphDeformation d = random_deformation(rng, k);
    const auto nt = pose_node_transforms(c, random_pose(rng, c.skeleton), fixtures::random_vec(rng));
    const Mat3 r = fixtures::random_rotation(rng);
    const Points g = Points::Random(c.mesh.vertex_count(), 3);
    Points gr = Points::Zero(k, 3), gt = Points::Zero(k, 3);
    deform_vjp(c, d, nt, r, g, gr, gt);
    Points er = Points::Zero(k, 3), et = Points::Zero(k, 3);
    const auto jac = deform_jacobians(c, d, nt, r);
    for (int i = 0; i < c.mesh.vertex_count(); ++i) {
      for (std::size_t e = 0; e < jac[i].nodes.size(); ++e) {
        er.row(jac[i].nodes[e]) += (jac[i].d_rotation[e].transpose() * g.row(i).transpose()).transpose();
        et.row(jac[i].nodes[e]) += (jac[i].d_translation[e].transpose() * g.row(i).transpose()).transpose();
      }
    }
    CHECK((gr - er).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((gt - et).cwiseAbs().maxCoeff() < 1e-10);

    const Points gl = Points::Random(c.skeleton.landmark_count(), 3);
    Points lr = Points::Zero(k, 3), lt = Points::Zero(k, 3);
    landmark_vjp(c, d, nt, r, gl, lr, lt);
    const auto ljac = landmark_jacobians(c, d, nt, r);
    Points elr = Points::Zero(k, 3), elt = Points::Zero(k, 3);
    for (int m = 0; m < gl.rows(); ++m) {
      REQUIRE(ljac[m].nodes.size() == 1);
      CHECK(ljac[m].nodes[0] == c.landmark_nodes[m]);
      elr.row(ljac[m].nodes[0]) += (ljac[m].d_rotation[0].transpose() * gl.row(m).transpose()).transpose();
      elt.row(ljac[m].nodes[0]) += (ljac[m].d_translation[0].transpose() * gl.row(m).transpose()).transpose();
    }
    CHECK((lr - elr).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((lt - elt).cwiseAbs().maxCoeff() < 1e-10);
  }
}
