#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rldet/geom.hpp"
#include "rldet/rng.hpp"
#include "support/mc_iou.hpp"

using namespace rldet;

namespace {

Box7 random_box(Rng& rng, double center_span = 2.0) {
  Box7 b;
  b.x = rng.uniform(-center_span, center_span);
  b.y = rng.uniform(-center_span, center_span);
  b.z = rng.uniform(-1.0, 1.0);
  b.l = rng.uniform(0.5, 5.0);
  b.w = rng.uniform(0.5, 5.0);
  b.h = rng.uniform(0.5, 3.0);
  b.theta = rng.uniform(-kPi, kPi);
  return b;
}

Box7 rigid_transform(const Box7& b, double yaw, double tx, double ty, double tz) {
  Box7 out = b;
  const double c = std::cos(yaw), s = std::sin(yaw);
  out.x = c * b.x - s * b.y + tx;
  out.y = s * b.x + c * b.y + ty;
  out.z = b.z + tz;
  out.theta = wrap_angle(b.theta + yaw);
  return out;
}

}  // namespace

TEST_CASE("wrap_angle maps into [-pi, pi)") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(3.0 * kPi / 2.0) == Catch::Approx(-kPi / 2.0).margin(1e-15));
  CHECK(wrap_angle(kPi) == Catch::Approx(-kPi));
  CHECK(wrap_angle(-kPi) == Catch::Approx(-kPi));
  CHECK_THROWS_AS(wrap_angle(std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);

  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const double t = rng.uniform(-50.0, 50.0);
    const double w = wrap_angle(t);
    REQUIRE(w >= -kPi);
    REQUIRE(w < kPi);
    // idempotent, bit for bit
    REQUIRE(wrap_angle(w) == w);
    // equal to t mod 2*pi
    REQUIRE(std::abs(std::remainder(w - t, 2.0 * kPi)) < 1e-9);
  }
}

TEST_CASE("point_in_box containment") {
  Box7 b;
  b.x = 3.0;
  b.y = -1.0;
  b.z = 0.5;
  b.l = 4.0;
  b.w = 1.8;
  b.h = 1.6;
  b.theta = 0.3;

  CHECK(point_in_box({b.x, b.y, b.z}, b));
  // offset far along the heading direction
  CHECK_FALSE(point_in_box({b.x + 2.0 * b.l * std::cos(b.theta),
                            b.y + 2.0 * b.l * std::sin(b.theta), b.z}, b));

  SECTION("point exactly on a rotated face is inside (inclusive faces)") {
    Box7 r;
    r.x = 1.0;
    r.y = 2.0;
    r.z = 0.0;
    r.l = 2.0;
    r.w = 1.0;
    r.h = 1.0;
    r.theta = kPi / 4.0;
    // construct the face point in the box frame and transform out
    const double c = std::cos(r.theta), s = std::sin(r.theta);
    const PointXYZ face{r.x + c * (r.l / 2.0), r.y + s * (r.l / 2.0), r.z};
    CHECK(point_in_box(face, r));
  }

  SECTION("invariant under rigid motion of point and box") {
    Rng rng(5);
    for (int i = 0; i < 300; ++i) {
      const Box7 box = random_box(rng);
      const PointXYZ p{rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0), rng.uniform(-2.0, 2.0)};
      const double yaw = rng.uniform(-kPi, kPi);
      const double tx = rng.uniform(-10.0, 10.0), ty = rng.uniform(-10.0, 10.0),
                   tz = rng.uniform(-2.0, 2.0);
      const Box7 box2 = rigid_transform(box, yaw, tx, ty, tz);
      const double c = std::cos(yaw), s = std::sin(yaw);
      const PointXYZ p2{c * p.x - s * p.y + tx, s * p.x + c * p.y + ty, p.z + tz};
      // skip points too close to a face, where the rotation epsilon could flip
      const bool near_face = [&] {
        const double dx = p.x - box.x, dy = p.y - box.y, dz = p.z - box.z;
        const double cb = std::cos(box.theta), sb = std::sin(box.theta);
        const double lx = std::abs(cb * dx + sb * dy), ly = std::abs(-sb * dx + cb * dy);
        return std::abs(lx - box.l / 2) < 1e-6 || std::abs(ly - box.w / 2) < 1e-6 ||
               std::abs(std::abs(dz) - box.h / 2) < 1e-6;
      }();
      if (!near_face) REQUIRE(point_in_box(p, box) == point_in_box(p2, box2));
    }
  }

  SECTION("degenerate box rejected") {
    Box7 bad = b;
    bad.l = 0.0;
    CHECK_THROWS_AS(point_in_box({0, 0, 0}, bad), std::invalid_argument);
  }
}

TEST_CASE("bev_iou basics") {
  Box7 a;
  a.l = 1.0;
  a.w = 1.0;
  a.h = 1.0;

  SECTION("identical boxes give 1") {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
      const Box7 b = random_box(rng);
      REQUIRE(bev_iou(b, b) == Catch::Approx(1.0).margin(1e-12));
    }
  }

  SECTION("disjoint boxes give 0") {
    Box7 far = a;
    far.x = 100.0;
    CHECK(bev_iou(a, far) == 0.0);
  }

  SECTION("axis-aligned unit squares offset by 0.5 give 1/3") {
    Box7 b = a;
    b.x = 0.5;
    CHECK(bev_iou(a, b) == Catch::Approx(0.5 / 1.5).epsilon(1e-12));
  }

  SECTION("symmetry and bounds on random pairs") {
    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
      const Box7 p = random_box(rng), q = random_box(rng);
      const double ij = bev_iou(p, q), ji = bev_iou(q, p);
      REQUIRE(ij >= 0.0);
      REQUIRE(ij <= 1.0);
      REQUIRE(ij == Catch::Approx(ji).margin(1e-12));
    }
  }

  SECTION("invariant under rigid motion applied to both boxes") {
    Rng rng(23);
    for (int i = 0; i < 100; ++i) {
      const Box7 p = random_box(rng), q = random_box(rng);
      const double yaw = rng.uniform(-kPi, kPi);
      const double tx = rng.uniform(-20.0, 20.0), ty = rng.uniform(-20.0, 20.0);
      const Box7 p2 = rigid_transform(p, yaw, tx, ty, 0.0);
      const Box7 q2 = rigid_transform(q, yaw, tx, ty, 0.0);
      REQUIRE(bev_iou(p2, q2) == Catch::Approx(bev_iou(p, q)).margin(1e-9));
      REQUIRE(iou3d(p2, q2) == Catch::Approx(iou3d(p, q)).margin(1e-9));
    }
  }

  SECTION("matches Monte-Carlo oracle on random rotated pairs") {
    Rng rng(29);
    for (int i = 0; i < 20; ++i) {
      const Box7 p = random_box(rng, 1.0), q = random_box(rng, 1.0);
      Rng mc(1000 + static_cast<uint64_t>(i));
      const double est = testsupport::mc_bev_iou(p, q, 700, mc);  // ~5e5 samples
      REQUIRE(bev_iou(p, q) == Catch::Approx(est).margin(1e-3));
    }
  }
}

TEST_CASE("iou3d") {
  Box7 a;
  a.l = a.w = a.h = 1.0;

  SECTION("identical gives 1") { CHECK(iou3d(a, a) == Catch::Approx(1.0).margin(1e-12)); }

  SECTION("vertically disjoint gives 0") {
    Box7 b = a;
    b.z = 1.5;  // gap larger than (h1+h2)/2
    CHECK(iou3d(a, b) == 0.0);
  }

  SECTION("unit cubes offset by 0.5 in x give 1/3") {
    Box7 b = a;
    b.x = 0.5;
    CHECK(iou3d(a, b) == Catch::Approx(0.5 / 1.5).epsilon(1e-12));
  }
}

TEST_CASE("center_distance") {
  Box7 a, b;
  CHECK(center_distance(a, a) == 0.0);
  b.x = 3.0;
  b.y = 4.0;
  CHECK(center_distance(a, b) == Catch::Approx(5.0));

  Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    const Box7 p = random_box(rng), q = random_box(rng);
    const double d = std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) +
                               (p.z - q.z) * (p.z - q.z));
    REQUIRE(center_distance(p, q) == Catch::Approx(d).margin(1e-12));
  }
}

TEST_CASE("in_corridor uses open intervals") {
  Box7 b;
  b.x = 10.0;
  CHECK(in_corridor(b));
  b.y = 8.0;
  CHECK_FALSE(in_corridor(b));
  b.y = 0.0;
  b.x = 25.0;
  CHECK_FALSE(in_corridor(b));
  b.x = 0.0;
  CHECK_FALSE(in_corridor(b));
}
