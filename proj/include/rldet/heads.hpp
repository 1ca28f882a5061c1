#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "rldet/pointnet.hpp"
#include "rldet/types.hpp"

namespace rldet {

struct HeadConfig {
  double objectness_threshold = 0.3;
  double nms_iou = 0.5;
  int max_detections = 32;
  std::array<std::array<double, 3>, kNumClasses> anchors = kAnchorSizes;
};

// Raw head output layout, per keypoint row:
//   [0..2]  center offsets (dx, dy, dz)
//   [3..5]  log-size residuals (l, w, h) against the class anchor
//   [6..7]  heading as (sin, cos)
//   [8]     objectness logit
//   [9..]   class logits
inline constexpr int kRegDim = 8;
inline constexpr int kHeadDim = kRegDim + 1 + kNumClasses;

struct HeadParams {
  Tensor proj_w, proj_b;  // learned projection into the shared width
  Tensor w1, b1, w2, b2;
};

struct HeadVars {
  Var proj_w, proj_b, w1, b1, w2, b2;
};

inline HeadParams init_head_params(Rng& rng, int in_dim, int proj_dim, int hidden) {
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
  HeadParams p;
  p.proj_w = mat(in_dim, proj_dim);
  p.proj_b = bias(proj_dim);
  p.w1 = mat(proj_dim, hidden);
  p.b1 = bias(hidden);
  p.w2 = mat(hidden, kHeadDim);
  p.b2 = bias(kHeadDim);
  return p;
}

inline HeadVars bind_head(Tape& t, const HeadParams& p) {
  return HeadVars{t.leaf(p.proj_w), t.leaf(p.proj_b), t.leaf(p.w1),
                  t.leaf(p.b1),     t.leaf(p.w2),     t.leaf(p.b2)};
}

// Linear projection into the shared latent width, then a two-layer MLP.
inline Var head_forward(Tape& t, Var features, const HeadVars& p) {
  Var shared = t.add_bias(t.matmul(features, p.proj_w), p.proj_b);
  Var h = t.relu(t.add_bias(t.matmul(shared, p.w1), p.b1));
  return t.add_bias(t.matmul(h, p.w2), p.b2);
}

// ---- box encoding ----

inline std::array<double, 8> encode_box_target(const Box7& gt, const Point3& keypoint,
                                               const std::array<double, 3>& anchor) {
  gt.validate();
  return {gt.x - keypoint[0],        gt.y - keypoint[1],        gt.z - keypoint[2],
          std::log(gt.l / anchor[0]), std::log(gt.w / anchor[1]), std::log(gt.h / anchor[2]),
          std::sin(gt.theta),        std::cos(gt.theta)};
}

inline Box7 decode_box(const Point3& keypoint, const double* reg,
                       const std::array<double, 3>& anchor) {
  Box7 b;
  b.x = keypoint[0] + reg[0];
  b.y = keypoint[1] + reg[1];
  b.z = keypoint[2] + reg[2];
  b.l = anchor[0] * std::exp(reg[3]);
  b.w = anchor[1] * std::exp(reg[4]);
  b.h = anchor[2] * std::exp(reg[5]);
  b.theta = wrap_angle(std::atan2(reg[6], reg[7]));
  return b;
}

// ---- target assignment ----

struct BoxTarget {
  bool foreground = false;
  int class_id = -1;
  int gt_index = -1;
  std::array<double, 8> encoded{};
};

// Keypoints inside exactly one ground-truth box take that box; inside several,
// the nearest center wins; outside all, background.
inline std::vector<BoxTarget> assign_targets(
    const std::vector<Point3>& keypoints, const std::vector<ObjectSpec>& annotations,
    const std::array<std::array<double, 3>, kNumClasses>& anchors = kAnchorSizes) {
  std::vector<BoxTarget> out(keypoints.size());
  for (size_t i = 0; i < keypoints.size(); ++i) {
    const PointXYZ p{keypoints[i][0], keypoints[i][1], keypoints[i][2]};
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
    if (best >= 0) {
      const ObjectSpec& gt = annotations[static_cast<size_t>(best)];
      BoxTarget& tgt = out[i];
      tgt.foreground = true;
      tgt.class_id = static_cast<int>(gt.cls);
      tgt.gt_index = best;
      tgt.encoded = encode_box_target(gt.box, keypoints[i],
                                      anchors[static_cast<size_t>(tgt.class_id)]);
    }
  }
  return out;
}

// ---- inference ----

struct BoxPrediction {
  Box7 box;
  std::array<double, kNumClasses> class_scores{};
  double objectness = 0.0;
  double confidence = 0.0;
  int class_id = 0;
  int keypoint = -1;
};

inline double sigmoid_value(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Decodes per-keypoint raw outputs, drops low-objectness rows, then greedy
// BEV-IoU non-maximum suppression in confidence order.
inline std::vector<BoxPrediction> detect_head(const Tensor& raw,
                                              const std::vector<Point3>& keypoints,
                                              const HeadConfig& cfg = {}) {
  if (raw.ndim() != 2 || raw.cols() != kHeadDim ||
      raw.rows() != static_cast<int>(keypoints.size()))
    throw std::invalid_argument("detect_head: raw output shape mismatch");
  std::vector<BoxPrediction> cand;
  for (int i = 0; i < raw.rows(); ++i) {
    BoxPrediction p;
    p.keypoint = i;
    p.objectness = sigmoid_value(raw.at(i, kRegDim));
    if (p.objectness <= cfg.objectness_threshold) continue;
    double best_score = -1.0;
    for (int c = 0; c < kNumClasses; ++c) {
      p.class_scores[static_cast<size_t>(c)] = sigmoid_value(raw.at(i, kRegDim + 1 + c));
      if (p.class_scores[static_cast<size_t>(c)] > best_score) {
        best_score = p.class_scores[static_cast<size_t>(c)];
        p.class_id = c;
      }
    }
    double reg[kRegDim];
    for (int j = 0; j < kRegDim; ++j) reg[j] = raw.at(i, j);
    p.box = decode_box(keypoints[static_cast<size_t>(i)], reg,
                       cfg.anchors[static_cast<size_t>(p.class_id)]);
    p.confidence = p.objectness * best_score;
    cand.push_back(p);
  }
  std::sort(cand.begin(), cand.end(), [](const BoxPrediction& a, const BoxPrediction& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.keypoint < b.keypoint;
  });
  std::vector<BoxPrediction> kept;
  for (const BoxPrediction& p : cand) {
    if (static_cast<int>(kept.size()) >= cfg.max_detections) break;
    bool suppressed = false;
    for (const BoxPrediction& q : kept) {
      if (bev_iou(p.box, q.box) > cfg.nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

// ---- losses ----

inline std::vector<int> foreground_indices(const std::vector<BoxTarget>& targets) {
  std::vector<int> idx;
  for (size_t i = 0; i < targets.size(); ++i)
    if (targets[i].foreground) idx.push_back(static_cast<int>(i));
  return idx;
}

// Smooth-L1 over the 8 encoded values, summed per keypoint, mean over
// foreground keypoints. Empty foreground contributes zero.
inline Var reg_loss(Tape& t, Var raw, const std::vector<BoxTarget>& targets) {
  const std::vector<int> fg = foreground_indices(targets);
  if (fg.empty()) return t.constant_scalar(0.0);
  Tensor enc({static_cast<int>(fg.size()), kRegDim});
  for (size_t i = 0; i < fg.size(); ++i)
    for (int j = 0; j < kRegDim; ++j)
      enc.at(static_cast<int>(i), j) = targets[static_cast<size_t>(fg[i])].encoded[static_cast<size_t>(j)];
  Var pred = t.slice_cols(t.gather_rows(raw, fg), 0, kRegDim);
  Var err = t.sub(pred, t.constant(enc));
  return t.reduce_mean(t.row_sum(t.smooth_l1(err)));
}

// Per-keypoint focal terms over (objectness ++ class logits) against the
// assigned targets, summed per row. Column 0 is objectness.
inline Var cls_loss_rows(Tape& t, Var raw, const std::vector<BoxTarget>& targets, double alpha,
                         double gamma) {
  const int m = t.value(raw).rows();
  if (m != static_cast<int>(targets.size()))
    throw std::invalid_argument("cls_loss_rows: target count mismatch");
  Tensor pos({m, 1 + kNumClasses});
  for (int i = 0; i < m; ++i) {
    const BoxTarget& tgt = targets[static_cast<size_t>(i)];
    pos.at(i, 0) = tgt.foreground ? 1.0 : 0.0;
    for (int c = 0; c < kNumClasses; ++c)
      pos.at(i, 1 + c) = (tgt.foreground && tgt.class_id == c) ? 1.0 : 0.0;
  }
  Tensor neg({m, 1 + kNumClasses});
  for (int64_t i = 0; i < neg.count(); ++i) neg[static_cast<size_t>(i)] = 1.0 - pos[static_cast<size_t>(i)];
  Var logits = t.slice_cols(raw, kRegDim, kHeadDim);
  Var p = t.clamp(t.sigmoid(logits), 1e-7, 1.0 - 1e-7);
  Var q = t.add_const(t.scale(p, -1.0), 1.0);
  Var term_pos = t.mul(t.constant(pos), t.mul(t.pow_const(q, gamma), t.log(p)));
  Var term_neg = t.mul(t.constant(neg), t.mul(t.pow_const(p, gamma), t.log(q)));
  Var focal = t.scale(t.add(t.scale(term_pos, alpha), t.scale(term_neg, 1.0 - alpha)), -1.0);
  return t.row_sum(focal);
}

inline Var cls_loss(Tape& t, Var raw, const std::vector<BoxTarget>& targets, double alpha = 0.25,
                    double gamma = 2.0) {
  return t.reduce_mean(cls_loss_rows(t, raw, targets, alpha, gamma));
}

// Plain per-branch detection loss.
inline Var detection_loss(Tape& t, Var raw, const std::vector<BoxTarget>& targets,
                          double alpha = 0.25, double gamma = 2.0) {
  return t.add(reg_loss(t, raw, targets), cls_loss(t, raw, targets, alpha, gamma));
}

// Per-attribute regression losses for matched predictions: columns
// (x, y, z, l, w, h, theta) where the heading column combines the sin and cos
// residual terms. rows: k x 8 raw regression slice, enc: k x 8 targets.
inline Var reg_loss_cols7(Tape& t, Var pred_reg_rows, const Tensor& encoded_targets) {
  const Tensor& P = t.value(pred_reg_rows);
  if (P.ndim() != 2 || P.cols() != kRegDim || !P.same_shape(encoded_targets))
    throw std::invalid_argument("reg_loss_cols7: shape mismatch");
  Var err = t.sub(pred_reg_rows, t.constant(encoded_targets));
  Var sl = t.smooth_l1(err);
  Var first6 = t.slice_cols(sl, 0, 6);
  Var heading = t.add(t.slice_cols(sl, 6, 7), t.slice_cols(sl, 7, 8));
  return t.concat_cols(first6, heading);
}

}  // namespace rldet
