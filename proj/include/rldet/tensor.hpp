#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rldet {

// Dense row-major double-precision array. Almost everything in the pipeline
// is 2-D; scalars are stored as 1x1.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(checked_count(shape_)), 0.0);
  }

  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != checked_count(shape_))
      throw std::invalid_argument("Tensor: data length does not match shape " + shape_str());
  }

  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }

  static Tensor row(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({1, n}, std::move(v));
  }

  static Tensor column(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({n, 1}, std::move(v));
  }

  static Tensor matrix(int r, int c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }

  int rows() const { return ndim() == 2 ? shape_[0] : throw_not_2d(); }
  int cols() const { return ndim() == 2 ? shape_[1] : throw_not_2d(); }

  int64_t count() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double& at(int r, int c) { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return data_[static_cast<size_t>(r) * shape_[1] + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double value() const {
    if (count() != 1) throw std::logic_error("Tensor::value: not a scalar, shape " + shape_str());
    return data_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
  }

 private:
  static int64_t checked_count(const std::vector<int>& shape) {
    if (shape.empty()) throw std::invalid_argument("Tensor: empty shape");
    int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive extent");
      n *= d;
    }
    return n;
  }

  [[noreturn]] int throw_not_2d() const {
    throw std::logic_error("Tensor: expected 2-D, shape " + shape_str());
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace rldet
