#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rldet/optim.hpp"
#include "rldet/rng.hpp"
#include "rldet/tape.hpp"

using namespace rldet;

namespace {

Tensor random_tensor(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Tensor t({r, c});
  for (int64_t i = 0; i < t.count(); ++i) t[static_cast<size_t>(i)] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("forward values of basic primitives") {
  Tape t;

  SECTION("matmul by identity") {
    Tensor id({3, 3});
    for (int i = 0; i < 3; ++i) id.at(i, i) = 1.0;
    Rng rng(1);
    const Tensor a = random_tensor(rng, 3, 4);
    Var out = t.matmul(t.constant(id), t.constant(a));
    for (int64_t i = 0; i < a.count(); ++i)
      REQUIRE(t.value(out)[static_cast<size_t>(i)] == a[static_cast<size_t>(i)]);
  }

  SECTION("softmax of a constant row is uniform") {
    Var out = t.softmax_rows(t.constant(Tensor::row({0.0, 0.0, 0.0})));
    for (int j = 0; j < 3; ++j)
      REQUIRE(t.value(out).at(0, j) == Catch::Approx(1.0 / 3.0).margin(1e-15));
  }

  SECTION("softmax rows sum to one and stay in (0,1)") {
    Rng rng(2);
    const Tensor a = random_tensor(rng, 8, 13, -30.0, 30.0);
    Var out = t.softmax_rows(t.constant(a), 2.0);
    for (int i = 0; i < 8; ++i) {
      double s = 0.0;
      for (int j = 0; j < 13; ++j) {
        const double v = t.value(out).at(i, j);
        REQUIRE(v > 0.0);
        REQUIRE(v < 1.0);
        s += v;
      }
      REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
    }
  }

  SECTION("gather with a permutation then its inverse is the identity") {
    Rng rng(3);
    const Tensor a = random_tensor(rng, 6, 2);
    std::vector<int> perm{3, 0, 5, 1, 4, 2};
    std::vector<int> inv(6);
    for (int i = 0; i < 6; ++i) inv[static_cast<size_t>(perm[static_cast<size_t>(i)])] = i;
    Var out = t.gather_rows(t.gather_rows(t.constant(a), perm), inv);
    for (int64_t i = 0; i < a.count(); ++i)
      REQUIRE(t.value(out)[static_cast<size_t>(i)] == a[static_cast<size_t>(i)]);
  }

  SECTION("shape mismatch raises") {
    Var a = t.constant(Tensor({2, 3}));
    Var b = t.constant(Tensor({3, 3}));
    CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
    CHECK_THROWS_AS(t.matmul(a, a), std::invalid_argument);
  }

  SECTION("log of non-positive raises") {
    CHECK_THROWS_AS(t.log(t.constant(Tensor::row({1.0, 0.0}))), std::domain_error);
  }
}

TEST_CASE("backward basics") {
  SECTION("d(x^2)/dx at 3 is 6") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(3.0));
    Var y = t.mul(x, x);
    t.backward(y);
    CHECK(t.grad(x).value() == Catch::Approx(6.0));
  }

  SECTION("constant function has zero gradient") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(3.0));
    Var c = t.constant_scalar(5.0);
    Var y = t.mul(c, c);
    t.backward(y);
    CHECK(t.grad(x).value() == 0.0);
  }

  SECTION("backward on a non-scalar raises") {
    Tape t;
    Var x = t.leaf(Tensor({2, 2}));
    CHECK_THROWS_AS(t.backward(x), std::logic_error);
  }

  SECTION("backward twice on one tape raises") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(1.0));
    Var y = t.mul(x, x);
    t.backward(y);
    CHECK_THROWS_AS(t.backward(y), std::logic_error);
  }

  SECTION("gradient of a sum equals the sum of gradients") {
    Rng rng(7);
    const Tensor x0 = random_tensor(rng, 4, 3);
    auto build_f = [](Tape& t, Var x) { return t.reduce_sum(t.mul(x, x)); };
    auto build_g = [](Tape& t, Var x) { return t.reduce_sum(t.scale(x, 3.0)); };
    Tape tf, tg, ts;
    Var xf = tf.leaf(x0), xg = tg.leaf(x0), xs = ts.leaf(x0);
    tf.backward(build_f(tf, xf));
    tg.backward(build_g(tg, xg));
    ts.backward(ts.add(build_f(ts, xs), build_g(ts, xs)));
    for (int64_t i = 0; i < x0.count(); ++i) {
      const size_t k = static_cast<size_t>(i);
      REQUIRE(ts.grad(xs)[k] == tf.grad(xf)[k] + tg.grad(xg)[k]);
    }
  }

  SECTION("max_over_set routes gradient only to the argmax element") {
    Rng rng(9);
    Tensor x0 = random_tensor(rng, 6, 4);
    Tape t;
    Var x = t.leaf(x0);
    Var y = t.reduce_sum(t.max_over_set(x, 3));  // two groups of three rows
    t.backward(y);
    const Tensor& g = t.grad(x);
    for (int grp = 0; grp < 2; ++grp) {
      for (int j = 0; j < 4; ++j) {
        int nonzero = 0;
        int argmax = grp * 3;
        for (int r = grp * 3; r < grp * 3 + 3; ++r) {
          if (g.at(r, j) != 0.0) ++nonzero;
          if (x0.at(r, j) > x0.at(argmax, j)) argmax = r;
        }
        REQUIRE(nonzero == 1);
        REQUIRE(g.at(argmax, j) == 1.0);
      }
    }
  }
}

TEST_CASE("every primitive's VJP matches central finite differences") {
  Rng rng(41);
  const double tol = 1e-5;

  auto check = [&](const char* name, auto&& build, std::vector<Tensor> params) {
    const double err = grad_check(build, params, 1e-5);
    INFO(name);
    REQUIRE(err < tol);
  };

  const Tensor a = random_tensor(rng, 5, 7);
  const Tensor b = random_tensor(rng, 7, 4);
  const Tensor c = random_tensor(rng, 5, 7);
  const Tensor pos = random_tensor(rng, 4, 6, 0.1, 2.0);

  check("matmul", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.mul(t.matmul(v[0], v[1]), t.matmul(v[0], v[1])));
  }, {a, b});
  check("transpose", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.mul(t.transpose(v[0]), t.transpose(v[0])));
  }, {a});
  check("add/sub/mul", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.mul(t.add(v[0], v[1]), t.sub(v[0], v[1])));
  }, {a, c});
  check("add_bias", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.mul(t.add_bias(v[0], v[1]), t.add_bias(v[0], v[1])));
  }, {a, random_tensor(rng, 1, 7)});
  check("mul_rows", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.mul(t.mul_rows(v[0], v[1]), v[0]));
  }, {a, random_tensor(rng, 5, 1)});
  check("exp/log", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.log(t.add_const(t.exp(v[0]), 1.0)));
  }, {a});
  check("sigmoid", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.sigmoid(v[0]));
  }, {a});
  check("relu", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.relu(v[0]));
  }, {a});
  check("abs", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.abs(v[0]));
  }, {a});
  check("sin/cos/atan2", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.atan2(t.sin(v[0]), t.add_const(t.cos(v[0]), 2.0)));
  }, {a});
  check("pow_const", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.pow_const(v[0], 1.7));
  }, {pos});
  check("clamp", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.clamp(v[0], -0.55, 0.55));
  }, {a});
  check("smooth_l1", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.smooth_l1(t.scale(v[0], 2.1)));
  }, {a});
  check("softmax_rows", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.mul(t.softmax_rows(v[0], 1.7), v[0]));
  }, {a});
  check("reduce/row ops", [](Tape& t, const std::vector<Var>& v) {
    return t.add(t.reduce_mean(t.row_sum(v[0])), t.reduce_sum(t.row_mean(v[0])));
  }, {a});
  check("max_over_set", [](Tape& t, const std::vector<Var>& v) {
    return t.reduce_sum(t.max_over_set(v[0], 5));
  }, {random_tensor(rng, 15, 4)});
  check("concat/slice/gather", [](Tape& t, const std::vector<Var>& v) {
    Var cat = t.concat_cols(v[0], v[1]);
    Var g = t.gather_rows(cat, {0, 2, 2, 4, 1});
    return t.reduce_sum(t.mul(t.slice_cols(g, 2, 9), t.slice_cols(g, 3, 10)));
  }, {a, c});
  check("concat_rows", [](Tape& t, const std::vector<Var>& v) {
    Var cat = t.concat_rows(v[0], v[1]);
    return t.reduce_sum(t.mul(cat, cat));
  }, {a, c});

  SECTION("composition of all primitives stays within tolerance") {
    const Tensor w1 = random_tensor(rng, 7, 9);
    const Tensor w2 = random_tensor(rng, 9, 3);
    auto model = [](Tape& t, const std::vector<Var>& v) {
      Var h = t.relu(t.matmul(v[0], v[1]));
      Var s = t.softmax_rows(t.matmul(h, v[2]), std::sqrt(3.0));
      // distinct row scales keep the pooled argmax away from ties, so the
      // finite-difference probe stays on one smooth branch
      Var ramp = t.constant(Tensor::column({1.0, 2.0, 4.0, 8.0, 16.0}));
      Var m = t.max_over_set(t.mul_rows(t.concat_cols(s, t.sigmoid(h)), ramp), 5);
      Var e = t.smooth_l1(t.sub(m, t.abs(m)));
      return t.add(t.reduce_mean(e), t.reduce_sum(t.mul_rows(t.mul(s, s), t.row_mean(s))));
    };
    REQUIRE(grad_check(model, {random_tensor(rng, 5, 7), w1, w2}, 1e-5) < tol);
  }

  SECTION("three-layer MLP matches finite differences") {
    const Tensor x = random_tensor(rng, 6, 4);
    auto mlp = [&x](Tape& t, const std::vector<Var>& v) {
      Var h = t.constant(x);
      h = t.relu(t.add_bias(t.matmul(h, v[0]), v[1]));
      h = t.relu(t.add_bias(t.matmul(h, v[2]), v[3]));
      h = t.add_bias(t.matmul(h, v[4]), v[5]);
      return t.reduce_mean(t.mul(h, h));
    };
    std::vector<Tensor> params{random_tensor(rng, 4, 8),  random_tensor(rng, 1, 8),
                               random_tensor(rng, 8, 8),  random_tensor(rng, 1, 8),
                               random_tensor(rng, 8, 2),  random_tensor(rng, 1, 2)};
    REQUIRE(grad_check(mlp, params, 1e-5) < tol);
  }

  SECTION("linear map is exact to near machine precision") {
    const Tensor x = random_tensor(rng, 3, 5);
    auto linear = [&x](Tape& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.matmul(t.constant(x), v[0]));
    };
    REQUIRE(grad_check(linear, {random_tensor(rng, 5, 2)}, 1e-5) < 1e-10);
  }
}

TEST_CASE("adam optimizer") {
  AdamConfig cfg;
  cfg.lr = 0.1;

  SECTION("zero gradient leaves parameters unchanged") {
    Tensor p = Tensor::row({1.0, -2.0, 3.0});
    const Tensor p0 = p;
    AdamState st;
    adam_step(p, Tensor({1, 3}), st, cfg);
    for (int64_t i = 0; i < p.count(); ++i)
      REQUIRE(p[static_cast<size_t>(i)] == p0[static_cast<size_t>(i)]);
  }

  SECTION("first step with constant gradient moves by about lr") {
    Tensor p = Tensor::row({0.5});
    AdamState st;
    adam_step(p, Tensor::row({2.0}), st, cfg);
    // bias-corrected mhat = g, vhat = g^2, so the step is lr * g/(|g|+eps)
    REQUIRE(std::abs(0.5 - p[0]) == Catch::Approx(cfg.lr).epsilon(1e-6));
  }

  SECTION("quadratic bowl converges within 500 steps") {
    Tensor p = Tensor::row({4.0, -3.0});
    AdamState st;
    for (int i = 0; i < 500; ++i) {
      Tensor g = Tensor::row({2.0 * (p[0] - 1.0), 2.0 * (p[1] + 2.0)});
      adam_step(p, g, st, cfg);
    }
    REQUIRE(p[0] == Catch::Approx(1.0).margin(1e-2));
    REQUIRE(p[1] == Catch::Approx(-2.0).margin(1e-2));
  }

  SECTION("shape mismatch raises") {
    Tensor p = Tensor::row({1.0});
    AdamState st;
    CHECK_THROWS_AS(adam_step(p, Tensor({1, 2}), st, cfg), std::invalid_argument);
  }
}
