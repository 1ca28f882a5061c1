#pragma once

#include <cmath>
#include <vector>

#include "rldet/pointnet.hpp"
#include "rldet/types.hpp"

namespace rldet {

// Velocity-conditioned attention over radar key-point features plus a
// per-point motion head. One instance per encoder stage.
struct DmaeParams {
  Tensor enc_w1, enc_b1, enc_w2, enc_b2;    // 2 -> N/2 -> N
  Tensor head_w1, head_b1, head_w2, head_b2;  // N -> N/2 -> 1
};

struct DmaeVars {
  Var enc_w1, enc_b1, enc_w2, enc_b2;
  Var head_w1, head_b1, head_w2, head_b2;
};

inline DmaeParams init_dmae_params(Rng& rng, int feature_dim) {
  if (feature_dim < 2) throw std::invalid_argument("init_dmae_params: feature_dim too small");
  const int hidden = std::max(1, feature_dim / 2);
  auto mat = [&rng](int r, int c) {
    const double s = std::sqrt(6.0 / (r + c));
    Tensor t({r, c});
    for (int64_t i = 0; i < t.count(); ++i) t[static_cast<size_t>(i)] = rng.uniform(-s, s);
    return t;
  };
  auto bias = [](int c) {
    Tensor t({1, c});
    for (int64_t i = 0; i < t.count(); ++i) t[static_cast<size_t>(i)] = kBiasInit;
    return t;
  };
  DmaeParams p;
  p.enc_w1 = mat(2, hidden);
  p.enc_b1 = bias(hidden);
  p.enc_w2 = mat(hidden, feature_dim);
  p.enc_b2 = bias(feature_dim);
  p.head_w1 = mat(feature_dim, hidden);
  p.head_b1 = bias(hidden);
  p.head_w2 = mat(hidden, 1);
  p.head_b2 = bias(1);
  return p;
}

inline DmaeVars bind_dmae(Tape& t, const DmaeParams& p) {
  return DmaeVars{t.leaf(p.enc_w1), t.leaf(p.enc_b1), t.leaf(p.enc_w2), t.leaf(p.enc_b2),
                  t.leaf(p.head_w1), t.leaf(p.head_b1), t.leaf(p.head_w2), t.leaf(p.head_b2)};
}

// Row-wise two-layer MLP over (relative, absolute) velocity.
inline Var encode_velocity(Tape& t, const Tensor& v, const DmaeVars& p) {
  if (v.ndim() != 2 || v.cols() != 2)
    throw std::invalid_argument("encode_velocity: expected M x 2 velocities");
  Var x = t.constant(v);
  Var h = t.relu(t.add_bias(t.matmul(x, p.enc_w1), p.enc_b1));
  return t.add_bias(t.matmul(h, p.enc_w2), p.enc_b2);
}

struct DmaeOut {
  Var enhanced;  // M x N, forwarded to the next stage
  Var y_hat;     // M x 1 in (0,1)
};

// Row-space self-attention (softmax of f f^T with temperature sqrt(N))
// applied to the encoded velocities, with a residual connection, followed by
// the per-point motion head.
inline DmaeOut dmae_forward(Tape& t, Var f, const Tensor& v, const DmaeVars& p) {
  const Tensor& F = t.value(f);
  if (F.ndim() != 2) throw std::invalid_argument("dmae_forward: features must be 2-D");
  if (v.rows() != F.rows())
    throw std::invalid_argument("dmae_forward: feature/velocity row mismatch");
  const double temp = std::sqrt(static_cast<double>(F.cols()));
  Var scores = t.matmul(f, t.transpose(f));
  Var attn = t.softmax_rows(scores, temp);
  Var encoded = encode_velocity(t, v, p);
  Var enhanced = t.add(t.matmul(attn, encoded), f);
  Var h = t.relu(t.add_bias(t.matmul(enhanced, p.head_w1), p.head_b1));
  Var logits = t.add_bias(t.matmul(h, p.head_w2), p.head_b2);
  Var y_hat = t.clamp(t.sigmoid(logits), 1e-7, 1.0 - 1e-7);
  return {enhanced, y_hat};
}

// Ground-truth dynamic status per point: 1 inside a moving box, 0 inside a
// static box, 0 for background. Overlapping boxes resolve to the nearest
// center.
inline std::vector<int> label_point_motion(const std::vector<Point3>& points,
                                           const std::vector<ObjectSpec>& annotations) {
  std::vector<int> labels(points.size(), 0);
  for (size_t i = 0; i < points.size(); ++i) {
    const PointXYZ p{points[i][0], points[i][1], points[i][2]};
    double best_d = 1e300;
    int best = -1;
    for (size_t a = 0; a < annotations.size(); ++a) {
      const Box7& b = annotations[a].box;
      if (!point_in_box(p, b)) continue;
      const double dx = p.x - b.x, dy = p.y - b.y, dz = p.z - b.z;
      const double d = dx * dx + dy * dy + dz * dz;
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(a);
      }
    }
    if (best >= 0 && annotations[static_cast<size_t>(best)].moving) labels[i] = 1;
  }
  return labels;
}

// Focal-style motion loss for one stage:
//   -(1/M) sum_j [ a y (1-yh)^g log yh + (1-a)(1-y) yh^g log(1-yh) ]
inline Var motion_loss_layer(Tape& t, Var y_hat, const std::vector<int>& y, double alpha,
                             double gamma) {
  const Tensor& yh_val = t.value(y_hat);
  const int m = static_cast<int>(y.size());
  if (yh_val.count() != m)
    throw std::invalid_argument("motion_loss_layer: prediction/label length mismatch");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("motion_loss_layer: alpha in (0,1)");
  if (gamma < 0.0) throw std::invalid_argument("motion_loss_layer: gamma must be >= 0");
  std::vector<double> pos(static_cast<size_t>(m)), neg(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    pos[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] ? 1.0 : 0.0;
    neg[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] ? 0.0 : 1.0;
  }
  Var yh = t.clamp(y_hat, 1e-7, 1.0 - 1e-7);
  Var one_minus = t.add_const(t.scale(yh, -1.0), 1.0);
  Var term_pos = t.mul(t.constant(Tensor::column(pos)), t.mul(t.pow_const(one_minus, gamma), t.log(yh)));
  Var term_neg = t.mul(t.constant(Tensor::column(neg)), t.mul(t.pow_const(yh, gamma), t.log(one_minus)));
  Var sum = t.add(t.scale(term_pos, alpha), t.scale(term_neg, 1.0 - alpha));
  return t.scale(t.reduce_mean(sum), -1.0);
}

// Average over the four encoder stages.
inline Var motion_loss_total(Tape& t, const std::vector<Var>& layer_losses) {
  if (layer_losses.size() != 4)
    throw std::invalid_argument("motion_loss_total: expected exactly 4 layer losses");
  Var acc = layer_losses[0];
  for (size_t i = 1; i < layer_losses.size(); ++i) acc = t.add(acc, layer_losses[i]);
  return t.scale(acc, 0.25);
}

}  // namespace rldet
