#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "rldet/geom.hpp"
#include "rldet/hungarian.hpp"
#include "rldet/tape.hpp"

namespace rldet {

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (lidar index, radar index)
  int k = 0;                               // = min(m, n)
};

// One-to-one correspondence between the two branches' box sets, minimizing
// total center distance. Either side may be empty.
inline MatchResult match_boxes(const std::vector<Box7>& lidar_boxes,
                               const std::vector<Box7>& radar_boxes) {
  MatchResult out;
  if (lidar_boxes.empty() || radar_boxes.empty()) return out;
  std::vector<std::vector<double>> cost(lidar_boxes.size(),
                                        std::vector<double>(radar_boxes.size()));
  for (size_t i = 0; i < lidar_boxes.size(); ++i)
    for (size_t j = 0; j < radar_boxes.size(); ++j)
      cost[i][j] = center_distance(lidar_boxes[i], radar_boxes[j]);
  Assignment a = hungarian(cost);
  out.pairs = std::move(a.pairs);
  out.k = static_cast<int>(out.pairs.size());
  return out;
}

// Clamps an absolute wrapped angle difference into [0, pi).
inline double angle_delta(double theta_l, double theta_r) {
  double d = std::abs(wrap_angle(theta_l - theta_r));
  if (d >= kPi) d = std::nextafter(kPi, 0.0);
  return d;
}

// k x 7 per-attribute disagreement between aligned box sets, absolute values;
// the heading column uses the wrapped angle difference.
inline Tensor delta_d(const std::vector<Box7>& lidar_aligned,
                      const std::vector<Box7>& radar_aligned) {
  if (lidar_aligned.size() != radar_aligned.size())
    throw std::invalid_argument("delta_d: aligned sets must have equal size");
  const int k = static_cast<int>(lidar_aligned.size());
  if (k == 0) return Tensor();  // no pairs, no disagreement
  Tensor d({k, 7});
  for (int i = 0; i < k; ++i) {
    const Box7& a = lidar_aligned[static_cast<size_t>(i)];
    const Box7& b = radar_aligned[static_cast<size_t>(i)];
    d.at(i, 0) = std::abs(a.x - b.x);
    d.at(i, 1) = std::abs(a.y - b.y);
    d.at(i, 2) = std::abs(a.z - b.z);
    d.at(i, 3) = std::abs(a.l - b.l);
    d.at(i, 4) = std::abs(a.w - b.w);
    d.at(i, 5) = std::abs(a.h - b.h);
    d.at(i, 6) = angle_delta(a.theta, b.theta);
  }
  return d;
}

// Differentiable counterpart over k x 7 box-parameter matrices
// (x, y, z, l, w, h, theta per row). The angle column goes through
// atan2(sin, cos) so the wrap stays smooth away from the +-pi seam.
inline Var delta_d_vars(Tape& t, Var lidar_params, Var radar_params) {
  const Tensor& L = t.value(lidar_params);
  const Tensor& R = t.value(radar_params);
  if (L.ndim() != 2 || L.cols() != 7 || !L.same_shape(R))
    throw std::invalid_argument("delta_d_vars: expected matching k x 7 inputs");
  Var diff = t.sub(lidar_params, radar_params);
  Var first6 = t.abs(t.slice_cols(diff, 0, 6));
  Var dtheta = t.slice_cols(diff, 6, 7);
  Var wrapped = t.atan2(t.sin(dtheta), t.cos(dtheta));
  return t.concat_cols(first6, t.abs(wrapped));
}

// Uncertainty-weighted loss: mean over pairs and attributes of
//   loss * exp(-delta) + lambda * delta.
inline double uncertainty_loss(const Tensor& per_pair_loss, const Tensor& delta, double lambda) {
  if (!per_pair_loss.same_shape(delta))
    throw std::invalid_argument("uncertainty_loss: loss/delta shape mismatch");
  if (lambda < 0.0) throw std::invalid_argument("uncertainty_loss: lambda must be >= 0");
  double acc = 0.0;
  for (int64_t i = 0; i < delta.count(); ++i) {
    const size_t k = static_cast<size_t>(i);
    acc += per_pair_loss[k] * std::exp(-delta[k]) + lambda * delta[k];
  }
  return acc / static_cast<double>(delta.count());
}

inline Var uncertainty_loss(Tape& t, Var per_pair_loss, Var delta, double lambda) {
  const Tensor& L = t.value(per_pair_loss);
  if (!L.same_shape(t.value(delta)))
    throw std::invalid_argument("uncertainty_loss: loss/delta shape mismatch");
  if (lambda < 0.0) throw std::invalid_argument("uncertainty_loss: lambda must be >= 0");
  Var scaled = t.mul(per_pair_loss, t.exp(t.scale(delta, -1.0)));
  Var reg = t.scale(delta, lambda);
  return t.reduce_mean(t.add(scaled, reg));
}

}  // namespace rldet
