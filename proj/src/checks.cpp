#include "percap/checks.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "percap/alignment.hpp"
#include "percap/kinematics.hpp"
#include "percap/losses.hpp"
#include "percap/raster.hpp"
#include "percap/synthetic.hpp"

namespace percap {

VecX central_difference(const std::function<double(const VecX&)>& f, const VecX& x, const std::vector<int>& coords,
                        double step) {
  VecX out(coords.size());
  VecX probe = x;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const int c = coords[i];
    probe(c) = x(c) + step;
    const double up = f(probe);
    probe(c) = x(c) - step;
    const double down = f(probe);
    probe(c) = x(c);
    out(i) = (up - down) / (2.0 * step);
  }
  return out;
}

double relative_error(const VecX& analytic, const VecX& numeric) {
  const double scale = numeric.lpNorm<Eigen::Infinity>();
  const double diff = (analytic - numeric).lpNorm<Eigen::Infinity>();
  if (scale < 1e-12) return diff < 1e-12 ? 0.0 : diff / 1e-12;
  return diff / scale;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Fixture {
  SyntheticScene scene;
  int dofs = 0;
  int nodes = 0;
};

Fixture make_fixture(std::uint64_t seed) {
  SceneSpec spec;
  spec.frames = 2;
  spec.rig.count = 4;
  spec.deformation = DeformationKind::bulge;
  spec.seed = seed;
  Fixture f{make_scene(spec), 0, 0};
  f.dofs = f.scene.character.skeleton.dof_count();
  f.nodes = f.scene.character.graph.node_count();
  return f;
}

VecX gather(const VecX& v, const std::vector<int>& coords) {
  VecX out(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) out(i) = v(coords[i]);
  return out;
}

// Coordinates carrying the largest analytic entries plus a few random ones.
std::vector<int> pick_coords(const VecX& grad, int strongest, int random, std::mt19937_64& rng) {
  std::vector<int> order(grad.size());
  std::iota(order.begin(), order.end(), 0);
  const int top = std::min<int>(strongest, grad.size());
  std::partial_sort(order.begin(), order.begin() + top, order.end(),
                    [&](int a, int b) { return std::abs(grad(a)) > std::abs(grad(b)); });
  std::vector<int> coords(order.begin(), order.begin() + top);
  std::uniform_int_distribution<int> any(0, static_cast<int>(grad.size()) - 1);
  for (int i = 0; i < random; ++i) coords.push_back(any(rng));
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  return coords;
}

PoseParams random_pose(const Fixture& fx, int frame, double spread, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, spread);
  PoseParams p = fx.scene.poses[frame];
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta(i) += n(rng);
  for (int i = 0; i < 3; ++i) p.alpha(i) += n(rng);
  return p;
}

GraphDeformation random_deformation(const Fixture& fx, double spread, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, spread);
  GraphDeformation d = GraphDeformation::zero(fx.nodes);
  for (int k = 0; k < fx.nodes; ++k)
    for (int j = 0; j < 3; ++j) {
      d.rotations(k, j) = n(rng);
      d.translations(k, j) = 0.3 * n(rng);
    }
  return d;
}

VecX pack(const GraphDeformation& d) {
  VecX x(6 * d.node_count());
  x << flatten(d.rotations), flatten(d.translations);
  return x;
}

GraphDeformation unpack(const VecX& x) {
  const Eigen::Index k = x.size() / 6;
  return {unflatten(x.head(3 * k)), unflatten(x.tail(3 * k))};
}

VecX deform_gradient(const LossReport& r) {
  VecX g(r.gradients.at("rotations").size() * 2);
  g << r.gradients.at("rotations"), r.gradients.at("translations");
  return g;
}

}  // namespace

std::vector<GradientCheck> run_gradient_suite(const GradientSuiteOptions& options) {
  const Fixture fx = make_fixture(options.seed);
  const auto& ch = fx.scene.character;
  const auto& cams = fx.scene.cameras;
  const Mat3 input_rotation = cams[fx.scene.input_camera].rotation();
  std::vector<GradientCheck> checks;

  auto run = [&](const std::string& name, double tolerance, const std::function<double(std::mt19937_64&)>& instance) {
    GradientCheck check{name, options.instances, 0.0, options.tolerance > 0.0 ? options.tolerance : tolerance, 0.0};
    const auto start = Clock::now();
    for (int i = 0; i < options.instances; ++i) {
      std::seed_seq seq{options.seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(checks.size())};
      std::mt19937_64 rng(seq);
      check.max_error = std::max(check.max_error, instance(rng));
    }
    check.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    checks.push_back(check);
  };

  run("fk_jacobian", 1e-4, [&](std::mt19937_64& rng) {
    const PoseParams p = random_pose(fx, 0, 0.4, rng);
    const MatX j = fk_jacobian(ch.skeleton, p.theta, p.alpha);
    VecX x(fx.dofs + 3);
    x << p.theta, p.alpha;
    double err = 0.0;
    std::vector<int> all(x.size());
    std::iota(all.begin(), all.end(), 0);
    for (Eigen::Index row = 0; row < j.rows(); ++row) {
      auto f = [&](const VecX& v) {
        return forward_kinematics(ch.skeleton, v.head(fx.dofs), v.tail<3>()).landmarks(row / 3, row % 3);
      };
      err = std::max(err, relative_error(j.row(row).transpose(), central_difference(f, x, all, 1e-6)));
    }
    return err;
  });

  run("translation_jacobian", 1e-4, [&](std::mt19937_64& rng) {
    const int frame = std::uniform_int_distribution<int>(0, 1)(rng);
    const auto rays = detection_rays(cams, fx.scene.observations[frame]);
    const PoseParams p = random_pose(fx, frame, 0.2, rng);
    const Points q = forward_kinematics(ch.skeleton, p.theta, p.alpha).landmarks * input_rotation;
    const MatX j = translation_jacobian(q, rays);
    const VecX x = flatten(q);
    std::vector<int> all(x.size());
    std::iota(all.begin(), all.end(), 0);
    double err = 0.0;
    for (int r = 0; r < 3; ++r) {
      auto f = [&](const VecX& v) { return solve_translation(unflatten(v), rays)(r); };
      err = std::max(err, relative_error(j.row(r).transpose(), central_difference(f, x, all, 1e-6)));
    }
    return err;
  });

  run("projection_jacobian", 1e-4, [&](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    const Camera& cam = cams[std::uniform_int_distribution<int>(0, static_cast<int>(cams.size()) - 1)(rng)];
    const Vec3 x(u(rng), u(rng), u(rng));
    Vec2 px;
    Eigen::Matrix<double, 2, 3> j;
    project_with_jacobian(cam, x, px, j);
    double err = 0.0;
    for (int r = 0; r < 2; ++r) {
      auto f = [&](const VecX& v) { return project(cam, Vec3(v))(r); };
      err = std::max(err, relative_error(j.row(r).transpose(), central_difference(f, x, {0, 1, 2}, 1e-6)));
    }
    return err;
  });

  run("keypoint_loss", 1e-4, [&](std::mt19937_64& rng) {
    const int frame = std::uniform_int_distribution<int>(0, 1)(rng);
    const auto& obs = fx.scene.observations[frame];
    const GlobalAlignment alignment(detection_rays(cams, obs), ch.skeleton.landmark_count());
    const PoseParams p = random_pose(fx, frame, 0.1, rng);
    VecX lambda(ch.skeleton.landmark_count());
    for (Eigen::Index m = 0; m < lambda.size(); ++m) lambda(m) = 1.0 + std::uniform_int_distribution<int>(0, 2)(rng);
    const auto r = pose_keypoint_loss(ch.skeleton, cams, obs, alignment, input_rotation, lambda, p.theta, p.alpha);
    VecX g(fx.dofs + 3), x(fx.dofs + 3);
    g << r.report.gradients.at("theta"), r.report.gradients.at("alpha");
    x << p.theta, p.alpha;
    std::vector<int> all(x.size());
    std::iota(all.begin(), all.end(), 0);
    auto f = [&](const VecX& v) {
      return pose_keypoint_loss(ch.skeleton, cams, obs, alignment, input_rotation, lambda, v.head(fx.dofs), v.tail<3>())
          .report.value;
    };
    return relative_error(g, central_difference(f, x, all, 1e-6));
  });

  run("limit_loss", 1e-6, [&](std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    VecX theta(fx.dofs);
    for (int i = 0; i < fx.dofs; ++i) theta(i) = n(rng);
    std::vector<int> coords;
    for (int i = 0; i < fx.dofs; ++i) {
      const auto& lim = ch.skeleton.limits[i];
      if (std::abs(theta(i) - lim.lower) > 1e-4 && std::abs(theta(i) - lim.upper) > 1e-4) coords.push_back(i);
    }
    const VecX g = limit_loss(theta, ch.skeleton.limits).gradients.at("theta");
    auto f = [&](const VecX& v) { return limit_loss(v, ch.skeleton.limits).value; };
    return relative_error(gather(g, coords), central_difference(f, theta, coords, 1e-6));
  });

  run("arap_loss", 1e-4, [&](std::mt19937_64& rng) {
    const GraphDeformation d = random_deformation(fx, 0.1, rng);
    const auto r = arap_loss(ch.graph, d);
    const VecX g = deform_gradient(r);
    const auto coords = pick_coords(g, 16, 16, rng);
    auto f = [&](const VecX& v) { return arap_loss(ch.graph, unpack(v)).value; };
    return relative_error(gather(g, coords), central_difference(f, pack(d), coords, 1e-7));
  });

  auto context_for = [&](const PoseParams& p) {
    return PoseContext{pose_node_transforms(ch, p.theta, p.alpha), input_rotation, p.translation};
  };

  run("keypoint_graph_loss", 1e-4, [&](std::mt19937_64& rng) {
    const int frame = std::uniform_int_distribution<int>(0, 1)(rng);
    const auto& obs = fx.scene.observations[frame];
    const PoseContext ctx = context_for(random_pose(fx, frame, 0.05, rng));
    const GraphDeformation d = random_deformation(fx, 0.05, rng);
    const VecX g = deform_gradient(keypoint_graph_loss(ch, d, ctx, cams, obs));
    const auto coords = pick_coords(g, 24, 8, rng);
    auto f = [&](const VecX& v) { return keypoint_graph_loss(ch, unpack(v), ctx, cams, obs).value; };
    return relative_error(gather(g, coords), central_difference(f, pack(d), coords, 1e-6));
  });

  const EdgeTopology topology(ch.mesh.triangles());
  std::vector<std::vector<DistanceImage>> fields(fx.scene.observations.size());
  for (std::size_t f = 0; f < fields.size(); ++f)
    for (const auto& view : fx.scene.observations[f].views) fields[f].push_back(silhouette_field(view.mask));

  run("silhouette_loss", 1e-3, [&](std::mt19937_64& rng) {
    const int frame = std::uniform_int_distribution<int>(0, 1)(rng);
    const PoseContext ctx = context_for(random_pose(fx, frame, 0.03, rng));
    const GraphDeformation d = random_deformation(fx, 0.02, rng);
    const Points world = deform_mesh(ch, d, ctx.node_transforms, ctx.input_rotation, ctx.translation).world;
    const auto terms = prepare_silhouette_terms(world, ch.mesh.triangles(), topology, cams, fields[frame]);
    const VecX g = deform_gradient(silhouette_loss(ch, d, ctx, cams, fields[frame], terms));
    const auto coords = pick_coords(g, 16, 8, rng);
    auto f = [&](const VecX& v) { return silhouette_loss(ch, unpack(v), ctx, cams, fields[frame], terms).value; };
    return relative_error(gather(g, coords), central_difference(f, pack(d), coords, 1e-8));
  });

  auto jacobian_check = [&](bool landmarks, std::mt19937_64& rng) {
    const PoseContext ctx = context_for(random_pose(fx, 0, 0.2, rng));
    const GraphDeformation d = random_deformation(fx, 0.1, rng);
    const auto jac = landmarks ? landmark_jacobians(ch, d, ctx.node_transforms, ctx.input_rotation)
                               : deform_jacobians(ch, d, ctx.node_transforms, ctx.input_rotation);
    const int count = static_cast<int>(jac.size());
    std::uniform_int_distribution<int> pick(0, count - 1);
    double err = 0.0;
    for (int trial = 0; trial < 4; ++trial) {
      const int i = pick(rng);
      const auto& vj = jac[i];
      const int b = std::uniform_int_distribution<int>(0, static_cast<int>(vj.nodes.size()) - 1)(rng);
      const int k = vj.nodes[b];
      const std::vector<int> coords{3 * k, 3 * k + 1, 3 * k + 2, 3 * fx.nodes + 3 * k, 3 * fx.nodes + 3 * k + 1,
                                    3 * fx.nodes + 3 * k + 2};
      for (int r = 0; r < 3; ++r) {
        auto f = [&](const VecX& v) {
          const GraphDeformation dv = unpack(v);
          return landmarks ? deform_landmarks(ch, dv, ctx.node_transforms, ctx.input_rotation, ctx.translation)(i, r)
                           : deform_mesh(ch, dv, ctx.node_transforms, ctx.input_rotation, ctx.translation).world(i, r);
        };
        VecX a(6);
        a << vj.d_rotation[b].row(r).transpose(), vj.d_translation[b].row(r).transpose();
        err = std::max(err, relative_error(a, central_difference(f, pack(d), coords, 1e-6)));
      }
    }
    return err;
  };
  run("deform_jacobians", 1e-4, [&](std::mt19937_64& rng) { return jacobian_check(false, rng); });
  run("landmark_jacobians", 1e-4, [&](std::mt19937_64& rng) { return jacobian_check(true, rng); });

  run("sample_dt", 1e-4, [&](std::mt19937_64& rng) {
    const int frame = std::uniform_int_distribution<int>(0, 1)(rng);
    const int cam = std::uniform_int_distribution<int>(0, static_cast<int>(cams.size()) - 1)(rng);
    const auto& field = fields[frame][cam];
    std::uniform_real_distribution<double> ux(1.0, field.cols() - 2.0), uy(1.0, field.rows() - 2.0);
    Vec2 px;
    // Keep away from cell borders where the bilinear surface has a kink.
    do {
      px = Vec2(ux(rng), uy(rng));
    } while (std::abs(px.x() - std::round(px.x())) < 1e-3 || std::abs(px.y() - std::round(px.y())) < 1e-3);
    const FieldSample s = sample_dt(field, px);
    auto f = [&](const VecX& v) { return sample_dt(field, Vec2(v)).value; };
    return relative_error(s.gradient, central_difference(f, px, {0, 1}, 1e-6));
  });

  return checks;
}

std::string format_gradient_table(const std::vector<GradientCheck>& checks) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-22s %9s %12s %10s %8s %s\n", "check", "instances", "max_rel_err", "tolerance",
                "seconds", "result");
  out << line;
  for (const auto& c : checks) {
    std::snprintf(line, sizeof(line), "%-22s %9d %12.3e %10.1e %8.2f %s\n", c.name.c_str(), c.instances, c.max_error,
                  c.tolerance, c.seconds, c.passed() ? "PASS" : "FAIL");
    out << line;
  }
  return out.str();
}

}  // namespace percap
