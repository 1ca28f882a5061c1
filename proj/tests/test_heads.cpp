#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rldet/heads.hpp"

using namespace rldet;

namespace {

Box7 random_gt(Rng& rng, ObjClass cls) {
  const auto& anchor = kAnchorSizes[static_cast<size_t>(cls)];
  Box7 b;
  b.x = rng.uniform(2.0, 40.0);
  b.y = rng.uniform(-15.0, 15.0);
  b.z = rng.uniform(0.5, 1.5);
  b.l = anchor[0] * rng.uniform(0.8, 1.2);
  b.w = anchor[1] * rng.uniform(0.8, 1.2);
  b.h = anchor[2] * rng.uniform(0.8, 1.2);
  b.theta = rng.uniform(-kPi, kPi);
  return b;
}

double smooth_l1_ref(double e) {
  const double a = std::abs(e);
  return a < 1.0 ? 0.5 * e * e : a - 0.5;
}

}  // namespace

TEST_CASE("box encode/decode") {
  SECTION("round trip is exact to 1e-9") {
    Rng rng(1);
    for (int rep = 0; rep < 200; ++rep) {
      const ObjClass cls = static_cast<ObjClass>(rng.uniform_int(3));
      const Box7 gt = random_gt(rng, cls);
      const Point3 kp{gt.x + rng.uniform(-1.0, 1.0), gt.y + rng.uniform(-1.0, 1.0),
                      gt.z + rng.uniform(-0.5, 0.5)};
      const auto enc = encode_box_target(gt, kp, kAnchorSizes[static_cast<size_t>(cls)]);
      const Box7 rt = decode_box(kp, enc.data(), kAnchorSizes[static_cast<size_t>(cls)]);
      REQUIRE(rt.x == Catch::Approx(gt.x).margin(1e-9));
      REQUIRE(rt.y == Catch::Approx(gt.y).margin(1e-9));
      REQUIRE(rt.z == Catch::Approx(gt.z).margin(1e-9));
      REQUIRE(rt.l == Catch::Approx(gt.l).margin(1e-9));
      REQUIRE(rt.w == Catch::Approx(gt.w).margin(1e-9));
      REQUIRE(rt.h == Catch::Approx(gt.h).margin(1e-9));
      REQUIRE(wrap_angle(rt.theta - gt.theta) == Catch::Approx(0.0).margin(1e-9));
    }
  }

  SECTION("zero regression decodes to the anchor at the keypoint") {
    const double reg[8] = {0, 0, 0, 0, 0, 0, 0, 1};  // sin 0, cos 1 -> theta 0
    const Point3 kp{3.0, -2.0, 1.0};
    const Box7 b = decode_box(kp, reg, kAnchorSizes[0]);
    CHECK(b.x == 3.0);
    CHECK(b.y == -2.0);
    CHECK(b.z == 1.0);
    CHECK(b.l == kAnchorSizes[0][0]);
    CHECK(b.w == kAnchorSizes[0][1]);
    CHECK(b.h == kAnchorSizes[0][2]);
    CHECK(b.theta == 0.0);
  }
}

TEST_CASE("assign_targets") {
  ObjectSpec car;
  car.cls = ObjClass::Car;
  car.box = Box7{10.0, 0.0, 0.8, 4.0, 1.8, 1.6, 0.0};
  ObjectSpec ped;
  ped.cls = ObjClass::Pedestrian;
  ped.box = Box7{11.5, 0.0, 0.85, 0.6, 0.6, 1.7, 0.0};
  const std::vector<ObjectSpec> anns{car, ped};

  SECTION("keypoint at the box center gets zero offsets") {
    const auto targets = assign_targets({{10.0, 0.0, 0.8}}, {car});
    REQUIRE(targets[0].foreground);
    REQUIRE(targets[0].class_id == 0);
    for (int j = 0; j < 3; ++j) REQUIRE(targets[0].encoded[static_cast<size_t>(j)] == 0.0);
  }

  SECTION("background keypoint has the flag off") {
    const auto targets = assign_targets({{30.0, 10.0, 0.0}}, anns);
    REQUIRE_FALSE(targets[0].foreground);
  }

  SECTION("overlap resolves to the nearest center") {
    // this point is inside both boxes, nearer the pedestrian center
    const Point3 p{11.45, 0.0, 0.8};
    const auto targets = assign_targets({p}, anns);
    REQUIRE(targets[0].foreground);
    REQUIRE(targets[0].class_id == static_cast<int>(ObjClass::Pedestrian));
    const double d_car = (p[0] - car.box.x) * (p[0] - car.box.x);
    const double d_ped = (p[0] - ped.box.x) * (p[0] - ped.box.x);
    REQUIRE(d_ped < d_car);
  }
}

TEST_CASE("detect_head") {
  HeadConfig cfg;

  SECTION("keeps the higher-objectness box of an overlapping pair") {
    // two keypoints, nearly identical decoded boxes, distinct objectness
    Tensor raw({2, kHeadDim});
    for (int i = 0; i < 2; ++i) {
      raw.at(i, 6) = 0.0;  // sin
      raw.at(i, 7) = 1.0;  // cos
      raw.at(i, 9) = 3.0;  // car logit
      raw.at(i, 10) = -3.0;
      raw.at(i, 11) = -3.0;
    }
    raw.at(0, 8) = 2.0;   // objectness ~0.88
    raw.at(1, 8) = 1.0;   // objectness ~0.73
    raw.at(1, 0) = 0.05;  // slight offset, IoU stays ~0.9
    const std::vector<Point3> kps{{5.0, 0.0, 0.8}, {5.0, 0.0, 0.8}};
    const auto dets = detect_head(raw, kps, cfg);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].keypoint == 0);
    CHECK(dets[0].objectness > 0.8);
    CHECK(dets[0].class_id == 0);
  }

  SECTION("low objectness rows are suppressed") {
    Tensor raw({1, kHeadDim});
    raw.at(0, 7) = 1.0;
    raw.at(0, 8) = -3.0;  // objectness ~0.05 < 0.3
    const auto dets = detect_head(raw, {{1.0, 0.0, 0.0}}, cfg);
    CHECK(dets.empty());
  }

  SECTION("surviving set has pairwise IoU at or below the threshold") {
    Rng rng(7);
    Tensor raw({24, kHeadDim});
    for (int i = 0; i < 24; ++i) {
      raw.at(i, 0) = rng.uniform(-1.0, 1.0);
      raw.at(i, 1) = rng.uniform(-1.0, 1.0);
      raw.at(i, 6) = rng.uniform(-1.0, 1.0);
      raw.at(i, 7) = rng.uniform(-1.0, 1.0);
      raw.at(i, 8) = rng.uniform(-1.0, 3.0);
      for (int c = 0; c < 3; ++c) raw.at(i, 9 + c) = rng.uniform(-2.0, 2.0);
    }
    std::vector<Point3> kps;
    for (int i = 0; i < 24; ++i)
      kps.push_back({rng.uniform(0.0, 12.0), rng.uniform(-4.0, 4.0), 0.8});
    const auto dets = detect_head(raw, kps, cfg);
    for (size_t i = 0; i < dets.size(); ++i)
      for (size_t j = i + 1; j < dets.size(); ++j)
        REQUIRE(bev_iou(dets[i].box, dets[j].box) <= cfg.nms_iou);
  }
}

TEST_CASE("regression and classification losses") {
  Rng rng(11);
  const int m = 12;
  std::vector<Point3> kps;
  for (int i = 0; i < m; ++i)
    kps.push_back({rng.uniform(0.0, 30.0), rng.uniform(-10.0, 10.0), rng.uniform(0.2, 1.5)});
  ObjectSpec car;
  car.cls = ObjClass::Car;
  car.box = Box7{kps[0][0], kps[0][1], kps[0][2], 4.0, 1.8, 1.6, 0.4};
  const auto targets = assign_targets(kps, {car});

  SECTION("perfect regression gives zero loss") {
    Tensor raw({m, kHeadDim});
    for (int i = 0; i < m; ++i)
      if (targets[static_cast<size_t>(i)].foreground)
        for (int j = 0; j < kRegDim; ++j)
          raw.at(i, j) = targets[static_cast<size_t>(i)].encoded[static_cast<size_t>(j)];
    Tape t;
    REQUIRE(t.value(reg_loss(t, t.constant(raw), targets)).value() == 0.0);
  }

  SECTION("single error below one is quadratic") {
    std::vector<Point3> one{{car.box.x, car.box.y, car.box.z}};
    const auto tg = assign_targets(one, {car});
    Tensor raw({1, kHeadDim});
    for (int j = 0; j < kRegDim; ++j) raw.at(0, j) = tg[0].encoded[static_cast<size_t>(j)];
    raw.at(0, 0) += 0.6;
    Tape t;
    REQUIRE(t.value(reg_loss(t, t.constant(raw), tg)).value() ==
            Catch::Approx(0.5 * 0.6 * 0.6).margin(1e-12));
  }

  SECTION("empty foreground contributes zero") {
    const auto bg = assign_targets(kps, {});
    Tensor raw({m, kHeadDim});
    Tape t;
    REQUIRE(t.value(reg_loss(t, t.constant(raw), bg)).value() == 0.0);
  }

  SECTION("random batch matches a scalar reimplementation") {
    Tensor raw({m, kHeadDim});
    for (int64_t i = 0; i < raw.count(); ++i) raw[static_cast<size_t>(i)] = rng.uniform(-1.5, 1.5);
    Tape t;
    const double got_reg = t.value(reg_loss(t, t.constant(raw), targets)).value();
    const double got_cls = t.value(cls_loss(t, t.constant(raw), targets, 0.25, 2.0)).value();

    double want_reg = 0.0;
    int fg = 0;
    double want_cls = 0.0;
    for (int i = 0; i < m; ++i) {
      const BoxTarget& tgt = targets[static_cast<size_t>(i)];
      if (tgt.foreground) {
        ++fg;
        for (int j = 0; j < kRegDim; ++j)
          want_reg += smooth_l1_ref(raw.at(i, j) - tgt.encoded[static_cast<size_t>(j)]);
      }
      for (int c = 0; c < 1 + kNumClasses; ++c) {
        const double logit = raw.at(i, kRegDim + c);
        const double p = std::clamp(sigmoid_value(logit), 1e-7, 1.0 - 1e-7);
        const bool positive = c == 0 ? tgt.foreground : (tgt.foreground && tgt.class_id == c - 1);
        if (positive)
          want_cls -= 0.25 * std::pow(1.0 - p, 2.0) * std::log(p);
        else
          want_cls -= 0.75 * std::pow(p, 2.0) * std::log(1.0 - p);
      }
    }
    want_reg /= fg;
    want_cls /= m;
    REQUIRE(got_reg == Catch::Approx(want_reg).margin(1e-12));
    REQUIRE(got_cls == Catch::Approx(want_cls).margin(1e-12));
  }

  SECTION("detection loss gradient matches finite differences") {
    Rng prng(12);
    const int in_dim = 10;
    const HeadParams params = init_head_params(prng, in_dim, 8, 6);
    Tensor feats({m, in_dim});
    for (int64_t i = 0; i < feats.count(); ++i) feats[static_cast<size_t>(i)] = rng.uniform(-1.0, 1.0);
    auto build = [&](Tape& t, const std::vector<Var>& v) {
      HeadVars hv{v[0], v[1], v[2], v[3], v[4], v[5]};
      Var raw = head_forward(t, t.constant(feats), hv);
      return detection_loss(t, raw, targets, 0.25, 2.0);
    };
    REQUIRE(grad_check(build, {params.proj_w, params.proj_b, params.w1, params.b1, params.w2,
                               params.b2}, 1e-5) < 1e-5);
  }
}
