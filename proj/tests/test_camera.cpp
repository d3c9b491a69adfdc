#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "percap/alignment.hpp"
#include "percap/camera.hpp"

using namespace percap;
using oracles::least_squares_oracle;
using oracles::random_rays;
using fixtures::uniform;

namespace {

Camera random_camera(std::mt19937_64& rng) {
  Camera cam = fixtures::simple_camera(uniform(rng, 200, 800), 0.0, 256);
  cam.intrinsics(0, 2) = uniform(rng, 100, 150);
  cam.intrinsics(1, 2) = uniform(rng, 100, 150);
  cam.intrinsics(1, 1) = cam.intrinsics(0, 0) * uniform(rng, 0.9, 1.1);
  cam.extrinsics = {fixtures::random_rotation(rng), fixtures::random_vec(rng, 2.0)};
  return cam;
}

Vec3 point_in_front(std::mt19937_64& rng, const Camera& cam) {
  const Vec3 pc(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, 1, 6));
  return cam.extrinsics.inverse().apply(pc);
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("percap_test_" + name);
}

}  // namespace

TEST_CASE("pinhole projection") {
  const Camera cam = fixtures::simple_camera();
  CHECK(project(cam, Vec3(0, 0, 1)) == Vec2(256, 256));
  CHECK(project(cam, Vec3(1, 0, 1)) == Vec2(756, 256));
  CHECK_THROWS_AS(project(cam, Vec3(0, 0, -1)), BehindCamera);
  CHECK_THROWS_AS(project(cam, Vec3(0, 0, 1e-7)), BehindCamera);
  Vec2 px;
  Eigen::Matrix<double, 2, 3> j;
  CHECK_FALSE(project_with_jacobian(cam, Vec3(0, 0, -2), px, j));
}

TEST_CASE("pixel rays") {
  const Camera cam = fixtures::simple_camera();
  const Ray r = pixel_ray(cam, Vec2(256, 256));
  CHECK((r.direction - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK(r.origin.norm() == 0.0);

  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Camera c = random_camera(rng);
    const Vec3 p = point_in_front(rng, c);
    const Ray ray = pixel_ray(c, project(c, p));
    CHECK(std::abs(ray.direction.norm() - 1.0) < 1e-12);
    CHECK((ray.origin - c.origin()).norm() < 1e-12);
    // Distance from p to the back-projected ray.
    CHECK(((p - ray.origin).cross(ray.direction)).norm() < 1e-9);
    const Vec2 px(uniform(rng, 0, 256), uniform(rng, 0, 256));
    const Ray back = pixel_ray(c, px);
    const double s = uniform(rng, 0.1, 10.0);
    CHECK((project(c, back.origin + s * back.direction) - px).norm() < 1e-6);
  }
}

TEST_CASE("projection jacobian matches finite differences") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Camera c = random_camera(rng);
    const Vec3 p = point_in_front(rng, c);
    Vec2 px;
    Eigen::Matrix<double, 2, 3> j;
    REQUIRE(project_with_jacobian(c, p, px, j));
    CHECK((px - project(c, p)).norm() < 1e-12);
    for (int k = 0; k < 3; ++k) {
      Vec3 a = p, b = p;
      a(k) += 1e-6;
      b(k) -= 1e-6;
      const Vec2 fd = (project(c, a) - project(c, b)) / 2e-6;
      CHECK((fd - j.col(k)).norm() <= 1e-5 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("camera origin is consistent with the extrinsics") {
  std::mt19937_64 rng(7);
  const Camera c = random_camera(rng);
  CHECK((c.extrinsics.apply(c.origin())).norm() < 1e-12);
  const Camera look = look_at_camera("l", Vec3(0, 1, 4), Vec3::Zero(), Vec3::UnitY(), 300, 128, 128);
  CHECK((look.origin() - Vec3(0, 1, 4)).norm() < 1e-12);
  CHECK((project(look, Vec3::Zero()) - Vec2(63.5, 63.5)).norm() < 1e-9);
  // World up projects above the image centre.
  CHECK(project(look, Vec3(0, 0.1, 0)).y() < 64.0);
}

TEST_CASE("rig files") {
  std::mt19937_64 rng(9);
  std::vector<Camera> cams{random_camera(rng), random_camera(rng)};
  cams[0].name = "a";
  cams[1].name = "b";
  const auto path = temp_file("rig.json");
  save_rig(cams, path);
  const auto back = load_rig(path);
  REQUIRE(back.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(back[i].name == cams[i].name);
    CHECK(back[i].intrinsics == cams[i].intrinsics);
    CHECK(back[i].extrinsics.rotation == cams[i].extrinsics.rotation);
    CHECK(back[i].extrinsics.translation == cams[i].extrinsics.translation);
    CHECK(back[i].width == cams[i].width);
  }

  SUBCASE("non-orthonormal rotation is a calibration error") {
    cams[1].extrinsics.rotation(0, 0) += 1e-4;
    save_rig(cams, path);
    CHECK_THROWS_AS(load_rig(path), CalibrationError);
  }
  SUBCASE("nonpositive focal length is a calibration error") {
    cams[0].intrinsics(0, 0) = 0.0;
    save_rig(cams, path);
    CHECK_THROWS_AS(load_rig(path), CalibrationError);
  }
  SUBCASE("malformed json is a load error") {
    std::ofstream(path) << "{\"cameras\": [{\"K\": 1}]}";
    CHECK_THROWS_AS(load_rig(path), LoadError);
  }
}

TEST_CASE("closed-form translation") {
  SUBCASE("two orthogonal rays through one point") {
    const Vec3 target(0.3, -0.2, 0.1);
    std::vector<WeightedRay> rays{{0, {target - Vec3(2, 0, 0), Vec3::UnitX()}, 1.0},
                                  {0, {target - Vec3(0, 0, 3), Vec3::UnitZ()}, 1.0}};
    const Points q = Points::Zero(1, 3);
    CHECK((solve_translation(q, rays) - target).norm() < 1e-12);
  }

  SUBCASE("consistent offset is recovered") {
    std::mt19937_64 rng(3);
    const Points q = Points::Random(6, 3);
    const Vec3 v(0.5, -1.0, 0.25);
    const auto rays = random_rays(rng, q, v, 4, 0.0);
    CHECK((solve_translation(q, rays) - v).norm() < 1e-9);
  }

  SUBCASE("random instances match the least-squares oracle") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      const Points q = Points::Random(21, 3);
      const auto rays = random_rays(rng, q, fixtures::random_vec(rng), 8, 0.05);
      const GlobalAlignment align(rays, 21);
      const Vec3 t = align.solve(q);
      CHECK((t - least_squares_oracle(q, rays)).norm() < 1e-8);
      const double scale = std::max(1.0, align.objective(q, t));
      CHECK(align.objective_gradient(q, t).norm() < 1e-8 * scale);
    }
  }

  SUBCASE("degenerate geometry") {
    std::vector<WeightedRay> parallel{{0, {Vec3(0, 0, -3), Vec3::UnitZ()}, 1.0},
                                      {1, {Vec3(0.1, 0, -3), Vec3::UnitZ()}, 1.0}};
    CHECK_THROWS_AS(GlobalAlignment(parallel, 2), DegenerateGeometry);
    std::vector<WeightedRay> inactive{{0, {Vec3(0, 0, -3), Vec3::UnitZ()}, 0.0}};
    CHECK_THROWS_AS(GlobalAlignment(inactive, 1), DegenerateGeometry);
  }
}

TEST_CASE("translation jacobian") {
  std::mt19937_64 rng(29);
  SUBCASE("zero-confidence landmark has a zero block") {
    const Points q = Points::Random(4, 3);
    auto rays = random_rays(rng, q, Vec3::Zero(), 3, 0.02);
    for (auto& r : rays) {
      if (r.landmark == 2) r.confidence = 0.0;
    }
    const MatX j = translation_jacobian(q, rays);
    CHECK(j.block(0, 6, 3, 3).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("matches central differences") {
    for (int trial = 0; trial < 50; ++trial) {
      const Points q = Points::Random(5, 3);
      const auto rays = random_rays(rng, q, fixtures::random_vec(rng), 3, 0.05);
      const MatX j = translation_jacobian(q, rays);
      MatX fd(3, 15);
      for (int c = 0; c < 15; ++c) {
        Points a = q, b = q;
        a(c / 3, c % 3) += 1e-6;
        b(c / 3, c % 3) -= 1e-6;
        fd.col(c) = (solve_translation(a, rays) - solve_translation(b, rays)) / 2e-6;
      }
      CHECK((j - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff() < 1e-4);
    }
  }
}
