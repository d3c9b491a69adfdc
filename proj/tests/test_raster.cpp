#include <filesystem>
#include <limits>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "percap/observations.hpp"
#include "percap/raster.hpp"

using namespace percap;
using fixtures::uniform;

using namespace oracles;

TEST_CASE("depth rasterisation") {
  SUBCASE("screen-parallel triangle at depth two") {
    const Camera cam = fixtures::simple_camera(100.0, 32.0, 64);
    Points v(3, 3);
    v << -1, -1, 2, 1, -1, 2, 0, 1, 2;
    const DepthMap d = rasterize_depth(v, {{0, 1, 2}}, cam);
    CHECK(d(32, 32) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(std::isinf(d(63, 0)));
  }

  SUBCASE("empty mesh and meshes behind the camera") {
    const Camera cam = small_camera();
    const DepthMap d = rasterize_depth(Points(0, 3), {}, cam);
    CHECK(depth_to_mask(d).cast<int>().sum() == 0);
    Points v(3, 3);
    v << -1, -1, -5, 1, -1, -5, 0, 1, -5;
    CHECK(depth_to_mask(rasterize_depth(v, {{0, 1, 2}}, cam)).cast<int>().sum() == 0);
  }

  SUBCASE("random meshes match the brute-force oracle") {
    std::mt19937_64 rng(7);
    const Camera cam = small_camera();
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 6 + static_cast<int>(rng() % 10);
      Points v(n, 3);
      for (int i = 0; i < n; ++i) v.row(i) = fixtures::random_vec(rng, 1.2).transpose();
      std::vector<Triangle> tris;
      for (int f = 0; f < 8; ++f) {
        const int a = rng() % n, b = rng() % n, c = rng() % n;
        if (a != b && b != c && a != c) tris.push_back({a, b, c});
      }
      const DepthMap d = rasterize_depth(v, tris, cam);
      const OracleResult o = brute_force_raster(v, tris, cam);
      int mismatches = 0;
      for (int i = 0; i < d.size(); ++i) {
        if (o.ambiguous(i)) continue;
        const bool a = std::isfinite(d(i)), b = std::isfinite(o.depth(i));
        if (a != b || (a && std::abs(d(i) - o.depth(i)) > 1e-9 * o.depth(i))) ++mismatches;
      }
      CHECK(mismatches == 0);
    }
  }

  SUBCASE("shared edges are covered exactly once") {
    // Two triangles of a square meeting on a diagonal through pixel centres.
    const Camera c = fixtures::simple_camera(10.0, 0.0, 16);
    Points v(4, 3);
    v << 0, 0, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1;
    const Mask both = render_mask(v, {{0, 1, 2}, {0, 2, 3}}, c);
    const Mask one = render_mask(v, {{0, 1, 2}}, c);
    const Mask two = render_mask(v, {{0, 2, 3}}, c);
    CHECK((one.cast<int>() * two.cast<int>()).sum() == 0);
    CHECK(both.cast<int>().sum() == one.cast<int>().sum() + two.cast<int>().sum());
  }
}

TEST_CASE("distance transform") {
  Mask row(1, 3);
  row << 0, 1, 0;
  const DistanceImage d = distance_transform(row);
  CHECK(d(0, 0) == 1.0f);
  CHECK(d(0, 1) == 0.0f);
  CHECK(d(0, 2) == 1.0f);

  CHECK(distance_transform(Mask::Ones(5, 7)).maxCoeff() == 0.0f);
  CHECK(std::isinf(distance_transform(Mask::Zero(4, 4))(2, 2)));

  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 8 + static_cast<int>(rng() % 57);
    const int w = 8 + static_cast<int>(rng() % 57);
    const Mask m = random_mask(rng, h, w, trial % 2 ? 0.02 : 0.3);
    if (m.cast<int>().sum() == 0) continue;
    const DistanceImage fast = distance_transform(m);
    const DistanceImage oracle = brute_force_dt(m);
    CHECK((fast - oracle).abs().maxCoeff() == 0.0f);
    for (int i = 0; i < m.size(); ++i) {
      if (m(i)) CHECK(fast(i) == 0.0f);
      CHECK(fast(i) >= 0.0f);
    }
  }
}

TEST_CASE("signed silhouette field") {
  std::mt19937_64 rng(2);
  const Mask m = random_mask(rng, 32, 32, 0.4);
  const DistanceImage outside = distance_transform(m);
  const Mask inverse = (1 - m.cast<int>()).cast<std::uint8_t>();
  const DistanceImage inside = distance_transform(inverse);
  const DistanceImage s = silhouette_field(m);
  for (int i = 0; i < m.size(); ++i) {
    if (m(i)) {
      CHECK(s(i) < 0.0f);
      CHECK(s(i) == doctest::Approx(-(inside(i) - 0.5f)));
    } else {
      CHECK(s(i) > 0.0f);
      CHECK(s(i) == doctest::Approx(outside(i) - 0.5f));
    }
  }
  // Zero half-way between adjacent foreground and background centres.
  Mask pair(1, 2);
  pair << 1, 0;
  CHECK(sample_dt(silhouette_field(pair), Vec2(0.5, 0.0)).value == doctest::Approx(0.0));
}

TEST_CASE("distance image sampling") {
  std::mt19937_64 rng(3);
  DistanceImage img(6, 7);
  for (int i = 0; i < img.size(); ++i) img(i) = static_cast<float>(uniform(rng, 0, 5));

  CHECK(sample_dt(img, Vec2(3, 2)).value == img(2, 3));
  DistanceImage two(1, 2);
  two << 0.0f, 2.0f;
  CHECK(sample_dt(two, Vec2(0.5, 0.0)).value == doctest::Approx(1.0));

  SUBCASE("gradient matches finite differences") {
    for (int trial = 0; trial < 200; ++trial) {
      const Vec2 p(uniform(rng, 0.05, 5.95), uniform(rng, 0.05, 4.95));
      if (std::abs(p.x() - std::round(p.x())) < 1e-3 || std::abs(p.y() - std::round(p.y())) < 1e-3) continue;
      const FieldSample s = sample_dt(img, p);
      const double h = 1e-6;
      const double gx = (sample_dt(img, p + Vec2(h, 0)).value - sample_dt(img, p - Vec2(h, 0)).value) / (2 * h);
      const double gy = (sample_dt(img, p + Vec2(0, h)).value - sample_dt(img, p - Vec2(0, h)).value) / (2 * h);
      CHECK((s.gradient - Vec2(gx, gy)).norm() < 1e-6 * std::max(1.0, s.gradient.norm()));
    }
  }

  SUBCASE("continuous across cell borders") {
    for (int x = 1; x < 6; ++x) {
      for (double y : {0.3, 1.7, 3.2}) {
        const double left = sample_dt(img, Vec2(x - 1e-13, y)).value;
        const double right = sample_dt(img, Vec2(x + 1e-13, y)).value;
        CHECK(std::abs(left - right) < 1e-12);
        const double at = sample_dt(img, Vec2(x, y)).value;
        CHECK(std::abs(at - left) < 1e-12);
      }
    }
  }

  SUBCASE("outside the image clamps with zero gradient across the clamp") {
    const FieldSample s = sample_dt(img, Vec2(-3.0, 2.5));
    CHECK(s.value == doctest::Approx(sample_dt(img, Vec2(0.0, 2.5)).value));
    CHECK(s.gradient.x() == 0.0);
    CHECK(s.gradient.y() == doctest::Approx(double(img(3, 0)) - double(img(2, 0))));
    const FieldSample t = sample_dt(img, Vec2(3.5, 40.0));
    CHECK(t.gradient.y() == 0.0);
  }
}

TEST_CASE("directional weight") {
  // Outside the silhouette a distance field grows away from it, so an outward
  // normal and the field gradient agree.
  Mask m = Mask::Zero(9, 9);
  m.block(2, 2, 5, 3).setOnes();
  const DistanceImage dt = distance_transform(m);
  const FieldSample outside = sample_dt(dt, Vec2(6.3, 4.0));
  CHECK(outside.gradient.x() > 0.0);
  CHECK(directional_weight(Vec2(1, 0), outside.gradient) == 1.0);
  CHECK(directional_weight(Vec2(-1, 0), outside.gradient) == 0.0);
  CHECK(directional_weight(Vec2(0, 1), Vec2::Zero()) == 1.0);
  CHECK(directional_weight(Vec2(0.6, 0.8), Vec2(0.6, 0.8)) == 1.0);
}

TEST_CASE("boundary vertices") {
  SUBCASE("single triangle") {
    const Camera cam = fixtures::simple_camera(100.0, 32.0, 64);
    Points v(3, 3);
    v << -0.5, -0.4, 2, 0.5, -0.4, 2, 0.0, 0.45, 2;
    const std::vector<Triangle> tris{{0, 1, 2}};
    const DepthMap d = rasterize_depth(v, tris, cam);
    const auto b = boundary_vertices(v, tris, cam, d);
    std::set<int> ids;
    for (const auto& bv : b) {
      ids.insert(bv.vertex);
      CHECK(std::abs(bv.normal.norm() - 1.0) < 1e-12);
    }
    CHECK(ids == std::set<int>{0, 1, 2});
  }

  SUBCASE("occluded vertices are excluded") {
    const Camera cam = fixtures::simple_camera(100.0, 32.0, 64);
    Points v(6, 3);
    v << -0.5, -0.4, 2, 0.5, -0.4, 2, 0.0, 0.45, 2, -0.7, -0.56, 4, 0.7, -0.56, 4, 0.0, 0.63, 4;
    const std::vector<Triangle> tris{{0, 1, 2}, {3, 4, 5}};
    const DepthMap d = rasterize_depth(v, tris, cam);
    std::set<int> ids;
    for (const auto& bv : boundary_vertices(v, tris, cam, d)) ids.insert(bv.vertex);
    CHECK(ids == std::set<int>{0, 1, 2});
  }

  SUBCASE("sphere rim") {
    const TriMesh sphere = fixtures::uv_sphere(40, 80, 1.0, Vec3(0, 0, 4));
    const Camera cam = fixtures::simple_camera(100.0, 63.5, 128);
    const DepthMap d = rasterize_depth(sphere.vertices(), sphere.triangles(), cam);
    const auto b = boundary_vertices(sphere.vertices(), sphere.triangles(), cam, d);
    REQUIRE(b.size() > 20);
    const double rim = 100.0 * std::tan(std::asin(0.25));
    std::set<int> ids;
    for (const auto& bv : b) {
      ids.insert(bv.vertex);
      const Vec2 px = project(cam, sphere.vertices().row(bv.vertex).transpose());
      const Vec2 offset = px - Vec2(63.5, 63.5);
      CHECK(offset.norm() > rim - 2.0);
      CHECK(offset.norm() < rim + 1.0);
      // Outward normals point away from the disc centre.
      CHECK(bv.normal.dot(offset.normalized()) > 0.5);
    }
    for (int i = 0; i < sphere.vertex_count(); ++i) {
      const Vec2 px = project(cam, sphere.vertices().row(i).transpose());
      if ((px - Vec2(63.5, 63.5)).norm() < rim - 3.0) CHECK(ids.count(i) == 0);
    }
  }
}

TEST_CASE("mask iou and file formats") {
  std::mt19937_64 rng(8);
  const Mask a = random_mask(rng, 20, 30, 0.5);
  CHECK(mask_iou(a, a) == 1.0);
  const Mask inv = (1 - a.cast<int>()).cast<std::uint8_t>();
  CHECK(mask_iou(a, inv) == 0.0);

  const auto dir = std::filesystem::temp_directory_path() / "percap_test_raster";
  std::filesystem::create_directories(dir);
  save_mask_pgm(a, dir / "m.pgm");
  CHECK((load_mask_pgm(dir / "m.pgm") == a).all());
  const DistanceImage dt = distance_transform(a);
  save_distance_image(dt, dir / "d.dtf");
  const DistanceImage back = load_distance_image(dir / "d.dtf");
  CHECK(back.rows() == dt.rows());
  CHECK((back == dt).all());
}

TEST_CASE("rendering ground truth against its own mask") {
  const auto& scene = fixtures::small_scene();
  const Points v = scene_vertices(scene, 1);
  for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
    const Mask m = render_mask(v, scene.character.mesh.triangles(), scene.cameras[c]);
    CHECK(mask_iou(m, scene.observations[1].views[c].mask) == 1.0);
  }
}
