#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rldet/rng.hpp"
#include "rldet/xua.hpp"

using namespace rldet;

namespace {

// Exhaustive minimum over all injections of the smaller side into the larger.
double brute_force_min_cost(const std::vector<std::vector<double>>& cost) {
  const int m = static_cast<int>(cost.size());
  const int n = static_cast<int>(cost[0].size());
  if (m <= n) {
    std::vector<int> cols(static_cast<size_t>(n));
    std::iota(cols.begin(), cols.end(), 0);
    double best = 1e300;
    std::sort(cols.begin(), cols.end());
    do {
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += cost[static_cast<size_t>(i)][static_cast<size_t>(cols[static_cast<size_t>(i)])];
      best = std::min(best, s);
    } while (std::next_permutation(cols.begin(), cols.end()));
    return best;
  }
  std::vector<std::vector<double>> tr(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(m)));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) tr[static_cast<size_t>(j)][static_cast<size_t>(i)] = cost[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return brute_force_min_cost(tr);
}

Box7 make_box(double x, double y, double z, double theta = 0.0) {
  Box7 b;
  b.x = x;
  b.y = y;
  b.z = z;
  b.l = 4.0;
  b.w = 1.8;
  b.h = 1.6;
  b.theta = theta;
  return b;
}

}  // namespace

TEST_CASE("hungarian solver") {
  SECTION("diagonal-dominant cost picks the diagonal") {
    std::vector<std::vector<double>> cost(4, std::vector<double>(4, 1.0));
    for (int i = 0; i < 4; ++i) cost[static_cast<size_t>(i)][static_cast<size_t>(i)] = 0.0;
    Assignment a = hungarian(cost);
    REQUIRE(a.pairs.size() == 4);
    for (int i = 0; i < 4; ++i) REQUIRE(a.pairs[static_cast<size_t>(i)] == std::make_pair(i, i));
    REQUIRE(a.total_cost == 0.0);
  }

  SECTION("1x1") {
    Assignment a = hungarian({{3.5}});
    REQUIRE(a.pairs.size() == 1);
    REQUIRE(a.total_cost == 3.5);
  }

  SECTION("empty matrix gives empty assignment") {
    REQUIRE(hungarian({}).pairs.empty());
  }

  SECTION("random square matrices match the exhaustive minimum") {
    Rng rng(101);
    for (int rep = 0; rep < 200; ++rep) {
      const int n = 2 + rng.uniform_int(6);  // up to 7x7
      std::vector<std::vector<double>> cost(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n)));
      for (auto& row : cost)
        for (double& v : row) v = rng.uniform(0.0, 10.0);
      Assignment a = hungarian(cost);
      REQUIRE(a.pairs.size() == static_cast<size_t>(n));
      REQUIRE(a.total_cost == brute_force_min_cost(cost));
    }
  }

  SECTION("rectangular matrices keep min(m,n) pairs and match brute force") {
    Rng rng(103);
    for (int rep = 0; rep < 100; ++rep) {
      const int m = 1 + rng.uniform_int(6);
      const int n = 1 + rng.uniform_int(6);
      std::vector<std::vector<double>> cost(static_cast<size_t>(m), std::vector<double>(static_cast<size_t>(n)));
      for (auto& row : cost)
        for (double& v : row) v = rng.uniform(0.0, 5.0);
      Assignment a = hungarian(cost);
      REQUIRE(static_cast<int>(a.pairs.size()) == std::min(m, n));
      std::vector<char> seen_rows(static_cast<size_t>(m), 0), seen_cols(static_cast<size_t>(n), 0);
      for (auto [i, j] : a.pairs) {
        REQUIRE(!seen_rows[static_cast<size_t>(i)]);
        REQUIRE(!seen_cols[static_cast<size_t>(j)]);
        seen_rows[static_cast<size_t>(i)] = 1;
        seen_cols[static_cast<size_t>(j)] = 1;
      }
      REQUIRE(a.total_cost == Catch::Approx(brute_force_min_cost(cost)).margin(1e-12));
    }
  }

  SECTION("negative or non-finite costs rejected") {
    CHECK_THROWS_AS(hungarian({{-1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(hungarian({{std::numeric_limits<double>::infinity()}}), std::invalid_argument);
  }
}

TEST_CASE("match_boxes") {
  SECTION("empty radar side gives k = 0") {
    std::vector<Box7> dl{make_box(1, 0, 0)};
    MatchResult r = match_boxes(dl, {});
    REQUIRE(r.k == 0);
    REQUIRE(r.pairs.empty());
  }

  SECTION("identical sets match identically with zero cost") {
    std::vector<Box7> dl{make_box(1, 0, 0), make_box(8, 2, 0), make_box(15, -3, 1)};
    MatchResult r = match_boxes(dl, dl);
    REQUIRE(r.k == 3);
    for (int i = 0; i < 3; ++i) REQUIRE(r.pairs[static_cast<size_t>(i)] == std::make_pair(i, i));
  }

  SECTION("a shuffled copy recovers the permutation") {
    Rng rng(7);
    std::vector<Box7> dl;
    for (int i = 0; i < 6; ++i)
      dl.push_back(make_box(rng.uniform(0.0, 40.0), rng.uniform(-20.0, 20.0), rng.uniform(0.0, 2.0)));
    const std::vector<int> perm{4, 2, 0, 5, 1, 3};
    std::vector<Box7> dr(6);
    for (int i = 0; i < 6; ++i) dr[static_cast<size_t>(perm[static_cast<size_t>(i)])] = dl[static_cast<size_t>(i)];
    MatchResult r = match_boxes(dl, dr);
    REQUIRE(r.k == 6);
    for (auto [i, j] : r.pairs) REQUIRE(j == perm[static_cast<size_t>(i)]);
  }
}

TEST_CASE("delta_d") {
  SECTION("identical aligned sets give all zeros") {
    std::vector<Box7> d{make_box(1, 2, 0, 0.4), make_box(5, -1, 0.5, -1.2)};
    const Tensor delta = delta_d(d, d);
    for (int64_t i = 0; i < delta.count(); ++i) REQUIRE(delta[static_cast<size_t>(i)] == 0.0);
  }

  SECTION("single attribute difference lands in its column") {
    Box7 a = make_box(1, 0, 0);
    Box7 b = a;
    b.x += 0.5;
    const Tensor delta = delta_d({a}, {b});
    REQUIRE(delta.at(0, 0) == Catch::Approx(0.5).margin(1e-12));
    for (int j = 1; j < 7; ++j) REQUIRE(delta.at(0, j) == 0.0);
  }

  SECTION("heading difference wraps across the seam") {
    Box7 a = make_box(0, 0, 0, kPi - 0.01);
    Box7 b = make_box(0, 0, 0, -kPi + 0.01);
    const Tensor delta = delta_d({a}, {b});
    REQUIRE(delta.at(0, 6) == Catch::Approx(0.02).margin(1e-12));
  }

  SECTION("symmetric under swapping the two sides") {
    Rng rng(13);
    for (int rep = 0; rep < 50; ++rep) {
      Box7 a = make_box(rng.uniform(0, 30), rng.uniform(-10, 10), rng.uniform(0, 2),
                        rng.uniform(-kPi, kPi));
      Box7 b = make_box(rng.uniform(0, 30), rng.uniform(-10, 10), rng.uniform(0, 2),
                        rng.uniform(-kPi, kPi));
      a.l += rng.uniform(0, 1);
      b.w += rng.uniform(0, 1);
      const Tensor ab = delta_d({a}, {b});
      const Tensor ba = delta_d({b}, {a});
      for (int j = 0; j < 7; ++j) REQUIRE(ab.at(0, j) == ba.at(0, j));
    }
  }

  SECTION("delta stays in [0, pi) for the angle column") {
    Rng rng(17);
    for (int rep = 0; rep < 200; ++rep) {
      Box7 a = make_box(0, 0, 0, rng.uniform(-kPi, kPi));
      Box7 b = make_box(0, 0, 0, rng.uniform(-kPi, kPi));
      const Tensor d = delta_d({a}, {b});
      REQUIRE(d.at(0, 6) >= 0.0);
      REQUIRE(d.at(0, 6) < kPi);
    }
  }

  SECTION("size mismatch raises") {
    CHECK_THROWS_AS(delta_d({make_box(0, 0, 0)}, {}), std::invalid_argument);
  }
}

TEST_CASE("uncertainty_loss") {
  SECTION("zero disagreement reduces exactly to the plain mean loss") {
    Rng rng(19);
    Tensor loss({5, 7});
    for (int64_t i = 0; i < loss.count(); ++i) loss[static_cast<size_t>(i)] = rng.uniform(0.0, 2.0);
    const Tensor zero({5, 7});
    double plain = 0.0;
    for (int64_t i = 0; i < loss.count(); ++i) plain += loss[static_cast<size_t>(i)];
    plain /= static_cast<double>(loss.count());
    REQUIRE(uncertainty_loss(loss, zero, 0.1) == Catch::Approx(plain).margin(1e-12));
    REQUIRE(uncertainty_loss(loss, zero, 0.0) == Catch::Approx(plain).margin(1e-12));
  }

  SECTION("closed form for unit loss and uniform disagreement") {
    const double d = 0.7, lambda = 0.1;
    Tensor loss({3, 7});
    for (int64_t i = 0; i < loss.count(); ++i) loss[static_cast<size_t>(i)] = 1.0;
    Tensor delta({3, 7});
    for (int64_t i = 0; i < delta.count(); ++i) delta[static_cast<size_t>(i)] = d;
    REQUIRE(uncertainty_loss(loss, delta, lambda) ==
            Catch::Approx(std::exp(-d) + lambda * d).margin(1e-12));
  }

  SECTION("scaled term never exceeds the plain term elementwise") {
    Rng rng(23);
    for (int rep = 0; rep < 100; ++rep) {
      const double l = rng.uniform(0.0, 3.0);
      const double d = rng.uniform(0.0, 4.0);
      REQUIRE(std::exp(-d) > 0.0);
      REQUIRE(std::exp(-d) <= 1.0);
      REQUIRE(l * std::exp(-d) <= l);
    }
  }

  SECTION("tape version agrees with the value version and is differentiable") {
    Rng rng(29);
    Tensor loss({4, 7}), delta({4, 7});
    for (int64_t i = 0; i < loss.count(); ++i) {
      loss[static_cast<size_t>(i)] = rng.uniform(0.1, 2.0);
      delta[static_cast<size_t>(i)] = rng.uniform(0.0, 1.5);
    }
    Tape t;
    Var l = t.leaf(loss);
    Var d = t.leaf(delta);
    Var u = uncertainty_loss(t, l, d, 0.1);
    REQUIRE(t.value(u).value() == Catch::Approx(uncertainty_loss(loss, delta, 0.1)).margin(1e-12));

    auto build = [](Tape& tp, const std::vector<Var>& v) {
      return uncertainty_loss(tp, tp.mul(v[0], v[0]), tp.abs(v[1]), 0.1);
    };
    REQUIRE(grad_check(build, {loss, delta}, 1e-5) < 1e-5);
  }

  SECTION("the lambda term pulls matched boxes toward each other") {
    // two boxes as differentiable 1x7 parameter rows
    Tensor lparams = Tensor::row({3.0, 1.0, 0.0, 4.0, 1.8, 1.6, 0.2});
    Tensor rparams = Tensor::row({5.0, 1.0, 0.0, 4.0, 1.8, 1.6, 0.2});
    Tape t;
    Var lv = t.leaf(lparams);
    Var rv = t.leaf(rparams);
    Var delta = delta_d_vars(t, lv, rv);
    Var reg = t.scale(t.reduce_mean(delta), 0.1);
    t.backward(reg);
    // lidar x (3.0) is left of radar x (5.0): the gradient step -grad moves it right
    REQUIRE(t.grad(lv).at(0, 0) < 0.0);
    REQUIRE(t.grad(rv).at(0, 0) > 0.0);
  }

  SECTION("delta_d_vars matches delta_d on the same boxes") {
    Rng rng(31);
    for (int rep = 0; rep < 30; ++rep) {
      Box7 a = make_box(rng.uniform(0, 30), rng.uniform(-10, 10), rng.uniform(0, 2),
                        rng.uniform(-kPi, kPi));
      Box7 b = make_box(rng.uniform(0, 30), rng.uniform(-10, 10), rng.uniform(0, 2),
                        rng.uniform(-kPi, kPi));
      Tape t;
      Var lv = t.constant(Tensor::row({a.x, a.y, a.z, a.l, a.w, a.h, a.theta}));
      Var rv = t.constant(Tensor::row({b.x, b.y, b.z, b.l, b.w, b.h, b.theta}));
      const Tensor& dv = t.value(delta_d_vars(t, lv, rv));
      const Tensor d = delta_d({a}, {b});
      for (int j = 0; j < 7; ++j) REQUIRE(dv.at(0, j) == Catch::Approx(d.at(0, j)).margin(1e-12));
    }
  }
}
