#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "fixtures.hpp"
#include "percap/losses.hpp"
#include "percap/synthetic.hpp"

using namespace percap;

TEST_CASE("capsule character") {
  const TemplateCharacter& c = fixtures::capsule();

  SUBCASE("default spec passes every invariant") {
    CHECK_NOTHROW(validate_character(c));
    CHECK(c.mesh.vertex_count() >= 2000);
    CHECK(c.graph.node_count() >= 80);
    CHECK(c.skeleton.landmark_count() == 21);
    CHECK(c.skeleton.dof_count() == 27);
    CHECK(c.metric_landmarks.size() == 14);
    for (int d = 0; d < c.skeleton.dof_count(); ++d) {
      CHECK(c.skeleton.limits[d].lower <= 0.0);
      CHECK(c.skeleton.limits[d].upper >= 0.0);
    }
  }

  SUBCASE("soft patch has low rigidity") {
    double lo = 1.0, hi = 0.0;
    for (double s : c.rigidity.values) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    CHECK(lo == doctest::Approx(0.2));
    CHECK(hi == 1.0);
  }

  SUBCASE("nonpositive dimensions are rejected") {
    CapsuleCharacterSpec spec;
    spec.forearm_radius = 0.0;
    CHECK_THROWS_AS(make_capsule_character(spec, 1), InvalidInput);
    spec = {};
    spec.thigh = -0.1;
    CHECK_THROWS_AS(make_capsule_character(spec, 1), InvalidInput);
  }

  SUBCASE("seeds change the geometry") {
    const TemplateCharacter other = make_capsule_character(CapsuleCharacterSpec{}, 2);
    CHECK_NOTHROW(validate_character(other));
    CHECK(other.mesh.vertex_count() != c.mesh.vertex_count());
    const TemplateCharacter again = make_capsule_character(CapsuleCharacterSpec{}, 1);
    CHECK(again.mesh.vertices() == c.mesh.vertices());
  }
}

TEST_CASE("surface extraction") {
  const auto sphere = [](const Vec3& p) { return p.norm() - 0.5; };
  const TriMesh m = surface_nets(sphere, Vec3::Constant(-1), Vec3::Constant(1), 0.05);
  REQUIRE(m.vertex_count() > 100);
  for (int i = 0; i < m.vertex_count(); ++i) CHECK(std::abs(m.vertices().row(i).norm() - 0.5) < 0.05);
  // Closed and outward: positive signed volume close to the sphere's.
  double volume = 0.0;
  for (const auto& t : m.triangles()) {
    volume += m.vertices().row(t[0]).dot(m.vertices().row(t[1]).cross(m.vertices().row(t[2]))) / 6.0;
  }
  CHECK(volume == doctest::Approx(4.0 / 3.0 * std::numbers::pi * 0.125).epsilon(0.05));
  const TriMesh d = cluster_decimate(m, 0.25);
  CHECK(d.vertex_count() < m.vertex_count() / 4);
  CHECK(d.vertex_count() >= 4);
}

TEST_CASE("camera rig") {
  RigSpec spec;
  spec.count = 1;
  CHECK(make_camera_rig(spec).size() == 1);

  spec.count = 8;
  const auto cams = make_camera_rig(spec);
  REQUIRE(cams.size() == 8);
  for (int c = 0; c < 8; ++c) {
    const Vec3 a = cams[c].rotation().row(2).transpose();
    const Vec3 b = cams[(c + 1) % 8].rotation().row(2).transpose();
    const Vec3 ha = Vec3(a.x(), 0, a.z()).normalized();
    const Vec3 hb = Vec3(b.x(), 0, b.z()).normalized();
    CHECK(std::abs(std::acos(std::clamp(ha.dot(hb), -1.0, 1.0)) - std::numbers::pi / 4) < 1e-9);
  }
  CHECK(cams[0].origin().z() > 0.0);

  SUBCASE("every camera sees the whole character") {
    const auto& s = fixtures::small_scene();
    for (int f = 0; f < static_cast<int>(s.poses.size()); ++f) {
      const Points v = scene_vertices(s, f);
      for (const auto& cam : s.cameras) {
        for (int i = 0; i < v.rows(); ++i) {
          const Vec2 px = project(cam, v.row(i).transpose());
          CHECK(px.x() > 0.0);
          CHECK(px.x() < cam.width - 1.0);
          CHECK(px.y() > 0.0);
          CHECK(px.y() < cam.height - 1.0);
          if (px.x() <= 0.0 || px.y() <= 0.0) break;
        }
      }
    }
  }
}

TEST_CASE("synthetic motion") {
  const Skeleton& s = fixtures::capsule().skeleton;
  for (const auto& p : synth_motion(s, 10, 0.0, 4)) {
    CHECK(p.theta.norm() == 0.0);
    CHECK(p.alpha.norm() == 0.0);
    CHECK(p.translation.norm() == 0.0);
  }
  const auto motion = synth_motion(s, 60, 1.0, 4);
  double worst_second = 0.0;
  for (std::size_t f = 0; f < motion.size(); ++f) {
    for (int d = 0; d < s.dof_count(); ++d) {
      CHECK(motion[f].theta(d) >= s.limits[d].lower);
      CHECK(motion[f].theta(d) <= s.limits[d].upper);
    }
    if (f >= 1 && f + 1 < motion.size()) {
      const VecX dd = motion[f + 1].theta - 2.0 * motion[f].theta + motion[f - 1].theta;
      worst_second = std::max(worst_second, dd.cwiseAbs().maxCoeff());
    }
  }
  // Periods of at least 20 frames and heights up to 0.5 bound each step by
  // h * omega; clamping at a limit can at most double that in one second difference.
  CHECK(worst_second < 2.0 * 0.5 * 2.0 * std::numbers::pi / 20.0);
}

TEST_CASE("synthetic deformation") {
  const TemplateCharacter& c = fixtures::capsule();
  const EmbeddedGraph& g = c.graph;
  for (const auto& d : synth_deformation(g, 3, 0.0, 1)) {
    CHECK(d.rotations.norm() == 0.0);
    CHECK(d.translations.norm() == 0.0);
  }
  const double bound = 0.5;
  const auto seq = synth_deformation(g, 4, 0.05, 2, bound);
  for (const auto& d : seq) CHECK(arap_loss(g, d).value < bound);

  // Per-node residual: rigid nodes deform less than soft ones.
  const GraphDeformation& d = seq[1];
  double rigid = 0.0, soft = 0.0;
  int n_rigid = 0, n_soft = 0;
  for (int k = 0; k < g.node_count(); ++k) {
    double u = 0.0, r = 0.0;
    for (std::size_t e = 0; e < g.neighbors[k].size(); ++e) {
      u += g.rigidity[k][e];
      r += arap_residual(g, d, k, g.neighbors[k][e]).norm();
    }
    u /= static_cast<double>(g.neighbors[k].size());
    r /= static_cast<double>(g.neighbors[k].size());
    if (u == 1.0) { rigid += r; ++n_rigid; }
    if (u < 0.5) { soft += r; ++n_soft; }
  }
  REQUIRE(n_rigid > 0);
  REQUIRE(n_soft > 0);
  CHECK(rigid / n_rigid < soft / n_soft);

  const auto bulge = synth_bulge(g, 2, 0.03);
  CHECK(bulge[0].translations.cwiseAbs().maxCoeff() > 0.0);
  GraphDeformation cleared = bulge[0];
  clear_landmark_nodes(c, cleared);
  for (int node : c.landmark_nodes) CHECK(cleared.translations.row(node).norm() == 0.0);
}

TEST_CASE("rendered observations") {
  const TemplateCharacter& c = fixtures::capsule();
  RigSpec rig;
  rig.count = 4;
  const auto cams = make_camera_rig(rig);
  const PoseParams pose = anchor_pose(synth_motion(c.skeleton, 1, 0.5, 3)[0], cams[0].rotation());
  const GraphDeformation zero = GraphDeformation::zero(c.graph.node_count());
  const auto transforms = pose_node_transforms(c, pose.theta, pose.alpha);
  const Points lm = deform_landmarks(c, zero, transforms, cams[0].rotation(), pose.translation);

  SUBCASE("noiseless detections are exact projections") {
    const ObservationSet obs = render_observations(c, cams, 0, pose, zero, {}, 1);
    for (std::size_t k = 0; k < cams.size(); ++k) {
      for (int m = 0; m < lm.rows(); ++m) {
        CHECK((obs.views[k].detections.row(m).transpose() - project(cams[k], lm.row(m).transpose())).norm() == 0.0);
        CHECK(obs.views[k].confidences(m) == 1.0);
      }
      CHECK((obs.views[k].distance == distance_transform(obs.views[k].mask)).all());
    }
  }

  SUBCASE("full dropout zeroes every confidence") {
    const ObservationSet obs = render_observations(c, cams, 0, pose, zero, {0.0, 1.0}, 1);
    for (const auto& v : obs.views) CHECK(v.confidences.norm() == 0.0);
  }

  SUBCASE("pixel noise statistics") {
    std::vector<double> errors;
    for (std::uint64_t seed = 0; errors.size() < 2000; ++seed) {
      const ObservationSet obs = render_observations(c, cams, 0, pose, zero, {2.0, 0.0}, seed);
      for (std::size_t k = 0; k < cams.size(); ++k) {
        for (int m = 0; m < lm.rows(); ++m) {
          const Vec2 e = obs.views[k].detections.row(m).transpose() - project(cams[k], lm.row(m).transpose());
          errors.push_back(e.x());
          errors.push_back(e.y());
        }
      }
    }
    double mean = 0.0;
    for (double e : errors) mean += e;
    mean /= static_cast<double>(errors.size());
    double var = 0.0;
    for (double e : errors) var += (e - mean) * (e - mean);
    const double sd = std::sqrt(var / static_cast<double>(errors.size() - 1));
    CHECK(std::abs(mean) < 0.15);
    CHECK(std::abs(sd - 2.0) < 0.1);
  }
}

TEST_CASE("scenes") {
  const auto& s = fixtures::small_scene();
  SUBCASE("ground truth is self-consistent") {
    for (int f = 0; f < static_cast<int>(s.poses.size()); ++f) {
      const Points lm = scene_landmarks(s, f);
      CHECK(reprojection_loss(lm, s.cameras, s.observations[f], {}, {}, nullptr).value < 1e-6);
    }
  }

  SUBCASE("same seed gives identical scenes") {
    SceneSpec spec;
    spec.frames = 3;
    spec.seed = 11;
    const SyntheticScene again = make_scene(spec);
    for (int f = 0; f < 3; ++f) {
      CHECK(again.poses[f].theta == s.poses[f].theta);
      for (std::size_t k = 0; k < s.cameras.size(); ++k) {
        CHECK((again.observations[f].views[k].mask == s.observations[f].views[k].mask).all());
        CHECK(again.observations[f].views[k].detections == s.observations[f].views[k].detections);
      }
    }
  }

  SUBCASE("scene spec json round trip") {
    SceneSpec spec;
    spec.frames = 4;
    spec.deformation = DeformationKind::bulge;
    spec.noise.pixel_sigma = 2.0;
    spec.rig.count = 5;
    const SceneSpec back = scene_spec_from_json(scene_spec_to_json(spec));
    CHECK(scene_spec_to_json(back) == scene_spec_to_json(spec));
    CHECK(back.rig.count == 5);
    CHECK_THROWS_AS(scene_spec_from_json(R"({"frame": 3})"), InvalidInput);
  }

  SUBCASE("scene export uses the tracker formats") {
    const auto dir = std::filesystem::temp_directory_path() / "percap_test_scene";
    std::filesystem::remove_all(dir);
    SceneSpec spec;
    spec.frames = 3;
    spec.seed = 11;
    save_scene(s, spec, dir);
    const TemplateCharacter c = load_character(dir / "character");
    CHECK(c.mesh.vertices() == s.character.mesh.vertices());
    CHECK(load_rig(dir / "rig.json").size() == s.cameras.size());
    const auto obs = load_observation_sequence(dir / "observations");
    REQUIRE(obs.size() == 3);
    CHECK(obs[2].views[1].detections == s.observations[2].views[1].detections);
    CHECK((obs[2].views[1].mask == s.observations[2].views[1].mask).all());
  }
}
