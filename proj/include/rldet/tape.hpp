#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rldet/tensor.hpp"

namespace rldet {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over Tensor values. A tape records one forward pass and
// supports exactly one backward pass; it is confined to a single thread.
// Every primitive checks its output for non-finite values so NaNs surface at
// the op that produced them instead of at the loss.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value) { return push(std::move(value), nullptr, "leaf"); }
  Var constant(Tensor value) { return push(std::move(value), nullptr, "constant"); }
  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const {
    if (!ran_backward_) throw std::logic_error("Tape::grad: backward has not run");
    return node(v).grad;
  }
  size_t size() const { return nodes_.size(); }

  // ---- primitives ----

  Var matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.ndim() == 2 && B.ndim() == 2 && A.cols() == B.rows(), "matmul", A, B);
    const int m = A.rows(), k = A.cols(), n = B.cols();
    Tensor C({m, n});
    for (int i = 0; i < m; ++i) {
      const double* arow = A.data() + static_cast<size_t>(i) * k;
      double* crow = C.data() + static_cast<size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        const double av = arow[p];
        if (av == 0.0) continue;
        const double* brow = B.data() + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return push(std::move(C), [a, b, m, k, n](Tape& t, const Node& out) {
      const Tensor& A = t.value(a);
      const Tensor& B = t.value(b);
      Tensor& dA = t.grad_ref(a);
      Tensor& dB = t.grad_ref(b);
      for (int i = 0; i < m; ++i) {
        const double* dc = out.grad.data() + static_cast<size_t>(i) * n;
        const double* arow = A.data() + static_cast<size_t>(i) * k;
        double* darow = dA.data() + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
          const double* brow = B.data() + static_cast<size_t>(p) * n;
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += dc[j] * brow[j];
          darow[p] += acc;
          const double av = arow[p];
          if (av != 0.0) {
            double* dbrow = dB.data() + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) dbrow[j] += av * dc[j];
          }
        }
      }
    }, "matmul");
  }

  Var transpose(Var a) {
    const Tensor& A = value(a);
    require(A.ndim() == 2, "transpose", A);
    const int m = A.rows(), n = A.cols();
    Tensor T({n, m});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) T.at(j, i) = A.at(i, j);
    return push(std::move(T), [a, m, n](Tape& t, const Node& out) {
      Tensor& dA = t.grad_ref(a);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) dA.at(i, j) += out.grad.at(j, i);
    }, "transpose");
  }

  Var add(Var a, Var b) { return binary(a, b, "add", [](double x, double y) { return x + y; },
                                        [](double, double, double g, double& dx, double& dy) { dx += g; dy += g; }); }

  Var sub(Var a, Var b) { return binary(a, b, "sub", [](double x, double y) { return x - y; },
                                        [](double, double, double g, double& dx, double& dy) { dx += g; dy -= g; }); }

  Var mul(Var a, Var b) { return binary(a, b, "mul", [](double x, double y) { return x * y; },
                                        [](double x, double y, double g, double& dx, double& dy) { dx += g * y; dy += g * x; }); }

  // x: RxC, bias: 1xC, broadcast over rows.
  Var add_bias(Var x, Var bias) {
    const Tensor& X = value(x);
    const Tensor& B = value(bias);
    require(X.ndim() == 2 && B.ndim() == 2 && B.rows() == 1 && B.cols() == X.cols(), "add_bias", X, B);
    Tensor Y = X;
    const int r = X.rows(), c = X.cols();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) Y.at(i, j) += B.at(0, j);
    return push(std::move(Y), [x, bias, r, c](Tape& t, const Node& out) {
      Tensor& dX = t.grad_ref(x);
      Tensor& dB = t.grad_ref(bias);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          const double g = out.grad.at(i, j);
          dX.at(i, j) += g;
          dB.at(0, j) += g;
        }
    }, "add_bias");
  }

  // x: RxC, s: Rx1, scales each row.
  Var mul_rows(Var x, Var s) {
    const Tensor& X = value(x);
    const Tensor& S = value(s);
    require(X.ndim() == 2 && S.ndim() == 2 && S.cols() == 1 && S.rows() == X.rows(), "mul_rows", X, S);
    const int r = X.rows(), c = X.cols();
    Tensor Y = X;
    for (int i = 0; i < r; ++i) {
      const double sv = S.at(i, 0);
      for (int j = 0; j < c; ++j) Y.at(i, j) *= sv;
    }
    return push(std::move(Y), [x, s, r, c](Tape& t, const Node& out) {
      const Tensor& X = t.value(x);
      const Tensor& S = t.value(s);
      Tensor& dX = t.grad_ref(x);
      Tensor& dS = t.grad_ref(s);
      for (int i = 0; i < r; ++i) {
        const double sv = S.at(i, 0);
        double acc = 0.0;
        for (int j = 0; j < c; ++j) {
          const double g = out.grad.at(i, j);
          dX.at(i, j) += g * sv;
          acc += g * X.at(i, j);
        }
        dS.at(i, 0) += acc;
      }
    }, "mul_rows");
  }

  Var scale(Var a, double k) {
    return unary(a, "scale", [k](double x) { return k * x; }, [k](double, double, double g) { return k * g; });
  }

  Var add_const(Var a, double k) {
    return unary(a, "add_const", [k](double x) { return x + k; }, [](double, double, double g) { return g; });
  }

  Var exp(Var a) {
    return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y, double g) { return g * y; });
  }

  Var log(Var a) {
    const Tensor& A = value(a);
    for (int64_t i = 0; i < A.count(); ++i)
      if (A[static_cast<size_t>(i)] <= 0.0) throw std::domain_error("log: non-positive input");
    return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double, double g) { return g / x; });
  }

  Var sigmoid(Var a) {
    return unary(a, "sigmoid", [](double x) {
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }, [](double, double y, double g) { return g * y * (1.0 - y); });
  }

  Var relu(Var a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double, double g) { return x > 0.0 ? g : 0.0; });
  }

  Var abs(Var a) {
    return unary(a, "abs", [](double x) { return std::abs(x); },
                 [](double x, double, double g) { return x > 0.0 ? g : (x < 0.0 ? -g : 0.0); });
  }

  Var sin(Var a) {
    return unary(a, "sin", [](double x) { return std::sin(x); },
                 [](double x, double, double g) { return g * std::cos(x); });
  }

  Var cos(Var a) {
    return unary(a, "cos", [](double x) { return std::cos(x); },
                 [](double x, double, double g) { return -g * std::sin(x); });
  }

  Var atan2(Var y, Var x) {
    return binary(y, x, "atan2", [](double yv, double xv) { return std::atan2(yv, xv); },
                  [](double yv, double xv, double g, double& dy, double& dx) {
                    const double d = yv * yv + xv * xv;
                    dy += g * xv / d;
                    dx += -g * yv / d;
                  });
  }

  Var pow_const(Var a, double p) {
    const Tensor& A = value(a);
    const bool integral = p == std::nearbyint(p) && p >= 0.0;
    if (!integral) {
      for (int64_t i = 0; i < A.count(); ++i)
        if (A[static_cast<size_t>(i)] <= 0.0)
          throw std::domain_error("pow_const: non-positive base with non-integer exponent");
    }
    return unary(a, "pow_const", [p](double x) { return std::pow(x, p); },
                 [p](double x, double, double g) {
                   return p == 0.0 ? 0.0 : g * p * std::pow(x, p - 1.0);
                 });
  }

  Var clamp(Var a, double lo, double hi) {
    return unary(a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
                 [lo, hi](double x, double, double g) { return (x > lo && x < hi) ? g : 0.0; });
  }

  // Elementwise Huber on a residual: e^2/2 for |e|<1, |e|-1/2 otherwise.
  Var smooth_l1(Var a) {
    return unary(a, "smooth_l1", [](double e) {
      const double ae = std::abs(e);
      return ae < 1.0 ? 0.5 * e * e : ae - 0.5;
    }, [](double e, double, double g) { return g * std::clamp(e, -1.0, 1.0); });
  }

  // Row-wise softmax of x/temperature with max subtraction.
  Var softmax_rows(Var a, double temperature = 1.0) {
    const Tensor& A = value(a);
    require(A.ndim() == 2 && temperature > 0.0, "softmax_rows", A);
    const int r = A.rows(), c = A.cols();
    Tensor Y({r, c});
    for (int i = 0; i < r; ++i) {
      double mx = -1e300;
      for (int j = 0; j < c; ++j) mx = std::max(mx, A.at(i, j) / temperature);
      double sum = 0.0;
      for (int j = 0; j < c; ++j) {
        const double e = std::exp(A.at(i, j) / temperature - mx);
        Y.at(i, j) = e;
        sum += e;
      }
      for (int j = 0; j < c; ++j) Y.at(i, j) /= sum;
    }
    return push(std::move(Y), [a, r, c, temperature](Tape& t, const Node& out) {
      Tensor& dA = t.grad_ref(a);
      for (int i = 0; i < r; ++i) {
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += out.grad.at(i, j) * out.value.at(i, j);
        for (int j = 0; j < c; ++j)
          dA.at(i, j) += out.value.at(i, j) * (out.grad.at(i, j) - dot) / temperature;
      }
    }, "softmax_rows");
  }

  Var reduce_sum(Var a) {
    const Tensor& A = value(a);
    double s = 0.0;
    for (int64_t i = 0; i < A.count(); ++i) s += A[static_cast<size_t>(i)];
    return push(Tensor::scalar(s), [a](Tape& t, const Node& out) {
      Tensor& dA = t.grad_ref(a);
      const double g = out.grad[0];
      for (int64_t i = 0; i < dA.count(); ++i) dA[static_cast<size_t>(i)] += g;
    }, "reduce_sum");
  }

  Var reduce_mean(Var a) {
    const int64_t n = value(a).count();
    return scale(reduce_sum(a), 1.0 / static_cast<double>(n));
  }

  // RxC -> Rx1
  Var row_sum(Var a) {
    const Tensor& A = value(a);
    require(A.ndim() == 2, "row_sum", A);
    const int r = A.rows(), c = A.cols();
    Tensor Y({r, 1});
    for (int i = 0; i < r; ++i) {
      double s = 0.0;
      for (int j = 0; j < c; ++j) s += A.at(i, j);
      Y.at(i, 0) = s;
    }
    return push(std::move(Y), [a, r, c](Tape& t, const Node& out) {
      Tensor& dA = t.grad_ref(a);
      for (int i = 0; i < r; ++i) {
        const double g = out.grad.at(i, 0);
        for (int j = 0; j < c; ++j) dA.at(i, j) += g;
      }
    }, "row_sum");
  }

  Var row_mean(Var a) { return scale(row_sum(a), 1.0 / value(a).cols()); }

  // (G*K)xC -> GxC, max over each group of K consecutive rows. Gradient
  // routes to the argmax row only; ties break toward the lowest row index.
  Var max_over_set(Var a, int group_size) {
    const Tensor& A = value(a);
    require(A.ndim() == 2 && group_size > 0 && A.rows() % group_size == 0, "max_over_set", A);
    const int groups = A.rows() / group_size, c = A.cols();
    Tensor Y({groups, c});
    std::vector<int> argmax(static_cast<size_t>(groups) * c);
    for (int g = 0; g < groups; ++g) {
      for (int j = 0; j < c; ++j) {
        int best = g * group_size;
        double bv = A.at(best, j);
        for (int k = 1; k < group_size; ++k) {
          const double v = A.at(g * group_size + k, j);
          if (v > bv) {
            bv = v;
            best = g * group_size + k;
          }
        }
        Y.at(g, j) = bv;
        argmax[static_cast<size_t>(g) * c + j] = best;
      }
    }
    return push(std::move(Y), [a, groups, c, argmax = std::move(argmax)](Tape& t, const Node& out) {
      Tensor& dA = t.grad_ref(a);
      for (int g = 0; g < groups; ++g)
        for (int j = 0; j < c; ++j)
          dA.at(argmax[static_cast<size_t>(g) * c + j], j) += out.grad.at(g, j);
    }, "max_over_set");
  }

  Var concat_cols(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.ndim() == 2 && B.ndim() == 2 && A.rows() == B.rows(), "concat_cols", A, B);
    const int r = A.rows(), ca = A.cols(), cb = B.cols();
    Tensor Y({r, ca + cb});
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < ca; ++j) Y.at(i, j) = A.at(i, j);
      for (int j = 0; j < cb; ++j) Y.at(i, ca + j) = B.at(i, j);
    }
    return push(std::move(Y), [a, b, r, ca, cb](Tape& t, const Node& out) {
      Tensor& dA = t.grad_ref(a);
      Tensor& dB = t.grad_ref(b);
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < ca; ++j) dA.at(i, j) += out.grad.at(i, j);
        for (int j = 0; j < cb; ++j) dB.at(i, j) += out.grad.at(i, ca + j);
      }
    }, "concat_cols");
  }

  Var concat_rows(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.ndim() == 2 && B.ndim() == 2 && A.cols() == B.cols(), "concat_rows", A, B);
    const int ra = A.rows(), rb = B.rows(), c = A.cols();
    Tensor Y({ra + rb, c});
    for (int i = 0; i < ra; ++i)
      for (int j = 0; j < c; ++j) Y.at(i, j) = A.at(i, j);
    for (int i = 0; i < rb; ++i)
      for (int j = 0; j < c; ++j) Y.at(ra + i, j) = B.at(i, j);
    return push(std::move(Y), [a, b, ra, rb, c](Tape& t, const Node& out) {
      Tensor& dA = t.grad_ref(a);
      Tensor& dB = t.grad_ref(b);
      for (int i = 0; i < ra; ++i)
        for (int j = 0; j < c; ++j) dA.at(i, j) += out.grad.at(i, j);
      for (int i = 0; i < rb; ++i)
        for (int j = 0; j < c; ++j) dB.at(i, j) += out.grad.at(ra + i, j);
    }, "concat_rows");
  }

  // Columns [begin, end).
  Var slice_cols(Var a, int begin, int end) {
    const Tensor& A = value(a);
    require(A.ndim() == 2 && begin >= 0 && end > begin && end <= A.cols(), "slice_cols", A);
    const int r = A.rows(), c = end - begin;
    Tensor Y({r, c});
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) Y.at(i, j) = A.at(i, begin + j);
    return push(std::move(Y), [a, r, c, begin](Tape& t, const Node& out) {
      Tensor& dA = t.grad_ref(a);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) dA.at(i, begin + j) += out.grad.at(i, j);
    }, "slice_cols");
  }

  // Row gather; duplicate indices accumulate on backward.
  Var gather_rows(Var a, std::vector<int> idx) {
    const Tensor& A = value(a);
    require(A.ndim() == 2 && !idx.empty(), "gather_rows", A);
    for (int i : idx)
      if (i < 0 || i >= A.rows()) throw std::out_of_range("gather_rows: index out of range");
    const int r = static_cast<int>(idx.size()), c = A.cols();
    Tensor Y({r, c});
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) Y.at(i, j) = A.at(idx[static_cast<size_t>(i)], j);
    return push(std::move(Y), [a, r, c, idx = std::move(idx)](Tape& t, const Node& out) {
      Tensor& dA = t.grad_ref(a);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) dA.at(idx[static_cast<size_t>(i)], j) += out.grad.at(i, j);
    }, "gather_rows");
  }

  // ---- backward ----

  void backward(Var root) {
    const Tensor& v = value(root);
    if (v.count() != 1) throw std::logic_error("Tape::backward: root is not a scalar");
    if (ran_backward_) throw std::logic_error("Tape::backward: tape already consumed");
    ran_backward_ = true;
    for (Node& n : nodes_) n.grad = Tensor::zeros_like(n.value);
    nodes_[static_cast<size_t>(root.id)].grad[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.back) n.back(*this, n);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, const Node&)> back;
  };

  const Node& node(Var v) const {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
      throw std::out_of_range("Tape: invalid Var");
    return nodes_[static_cast<size_t>(v.id)];
  }

  Tensor& grad_ref(Var v) { return nodes_[static_cast<size_t>(v.id)].grad; }

  Var push(Tensor value, std::function<void(Tape&, const Node&)> back, const char* op) {
    if (!value.all_finite())
      throw std::runtime_error(std::string("Tape: non-finite values produced by '") + op + "'");
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  template <class F, class G>
  Var unary(Var a, const char* op, F&& f, G&& g) {
    const Tensor& A = value(a);
    Tensor Y = A;
    for (int64_t i = 0; i < Y.count(); ++i) Y[static_cast<size_t>(i)] = f(A[static_cast<size_t>(i)]);
    return push(std::move(Y), [a, g](Tape& t, const Node& out) {
      const Tensor& A = t.value(a);
      Tensor& dA = t.grad_ref(a);
      for (int64_t i = 0; i < A.count(); ++i) {
        const size_t k = static_cast<size_t>(i);
        dA[k] += g(A[k], out.value[k], out.grad[k]);
      }
    }, op);
  }

  // g(x, y, upstream, dx_accum, dy_accum)
  template <class F, class G>
  Var binary(Var a, Var b, const char* op, F&& f, G&& g) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.same_shape(B), op, A, B);
    Tensor Y = A;
    for (int64_t i = 0; i < Y.count(); ++i) {
      const size_t k = static_cast<size_t>(i);
      Y[k] = f(A[k], B[k]);
    }
    return push(std::move(Y), [a, b, g](Tape& t, const Node& out) {
      const Tensor& A = t.value(a);
      const Tensor& B = t.value(b);
      Tensor& dA = t.grad_ref(a);
      Tensor& dB = t.grad_ref(b);
      for (int64_t i = 0; i < A.count(); ++i) {
        const size_t k = static_cast<size_t>(i);
        g(A[k], B[k], out.grad[k], dA[k], dB[k]);
      }
    }, op);
  }

  static void require(bool ok, const char* op, const Tensor& a) {
    if (!ok) throw std::invalid_argument(std::string(op) + ": bad shape " + a.shape_str());
  }
  static void require(bool ok, const char* op, const Tensor& a, const Tensor& b) {
    if (!ok)
      throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                                  " and " + b.shape_str());
  }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// ---- gradient checking ----

// Builds the scalar under test from leaves of `params`; returns the max over
// all coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
// against central finite differences. A fourth-order central stencil keeps
// the truncation error below the comparison tolerance even on coordinates
// with tiny gradients.
template <class BuildFn>
double grad_check(BuildFn&& build, const std::vector<Tensor>& params, double step = 1e-5) {
  std::vector<Tensor> analytic;
  {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) vars.push_back(t.leaf(p));
    Var loss = build(t, vars);
    t.backward(loss);
    for (Var v : vars) analytic.push_back(t.grad(v));
  }
  auto eval = [&](const std::vector<Tensor>& ps) {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(ps.size());
    for (const Tensor& p : ps) vars.push_back(t.leaf(p));
    return t.value(build(t, vars)).value();
  };
  double max_err = 0.0;
  std::vector<Tensor> work = params;
  for (size_t p = 0; p < params.size(); ++p) {
    for (int64_t i = 0; i < params[p].count(); ++i) {
      const size_t k = static_cast<size_t>(i);
      const double orig = work[p][k];
      auto at = [&](double delta) {
        work[p][k] = orig + delta;
        return eval(work);
      };
      const double fp1 = at(step), fm1 = at(-step);
      const double fp2 = at(2.0 * step), fm2 = at(-2.0 * step);
      work[p][k] = orig;
      const double numeric = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * step);
      const double a = analytic[p][k];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace rldet
