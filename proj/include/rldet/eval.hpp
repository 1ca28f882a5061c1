#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rldet/heads.hpp"
#include "rldet/types.hpp"

namespace rldet {

enum class Region { All = 0, Corridor = 1 };

struct EvalConfig {
  // IoU thresholds: 0.5 for cars, 0.25 for pedestrians and cyclists
  std::array<double, kNumClasses> iou_thresholds{0.5, 0.25, 0.25};
  int recall_points = 40;
  CorridorBounds corridor;
};

// Predictions and ground truth for one frame.
struct DetectionFrame {
  std::vector<BoxPrediction> predictions;
  std::vector<ObjectSpec> ground_truth;
};

struct ClassResult {
  bool present = false;  // any ground truth of this class in the region
  double ap = 0.0;
  int tp = 0, fp = 0, fn = 0;
};

struct RegionResult {
  std::array<ClassResult, kNumClasses> classes{};
  double map = 0.0;
  int classes_present = 0;
};

struct EvalReport {
  RegionResult all_area;
  RegionResult corridor;
  uint64_t seed = 0;
  std::string config_hash;
};

inline double mean_ap(const std::vector<double>& per_class) {
  if (per_class.empty()) throw std::invalid_argument("mean_ap: no classes present");
  double s = 0.0;
  for (double a : per_class) s += a;
  return s / static_cast<double>(per_class.size());
}

// Greedy confidence-descending matching at 3D IoU >= threshold, each ground
// truth matched at most once; precision interpolated at `recall_points`
// equally spaced recall levels. Ground truths outside the region are ignored
// entirely; predictions outside the region are dropped before matching.
inline ClassResult average_precision(const std::vector<DetectionFrame>& frames, int cls,
                                     double iou_threshold, Region region,
                                     const EvalConfig& cfg = {}) {
  struct Pred {
    int frame;
    int index;
    double confidence;
  };
  auto in_region = [&](const Box7& b) {
    return region == Region::All || in_corridor(b, cfg.corridor);
  };

  std::vector<std::vector<int>> gt_index(frames.size());
  int num_gt = 0;
  for (size_t f = 0; f < frames.size(); ++f) {
    for (size_t g = 0; g < frames[f].ground_truth.size(); ++g) {
      const ObjectSpec& o = frames[f].ground_truth[g];
      if (static_cast<int>(o.cls) != cls || !in_region(o.box)) continue;
      gt_index[f].push_back(static_cast<int>(g));
      ++num_gt;
    }
  }

  ClassResult out;
  out.present = num_gt > 0;
  if (!out.present) return out;

  std::vector<Pred> preds;
  for (size_t f = 0; f < frames.size(); ++f) {
    for (size_t p = 0; p < frames[f].predictions.size(); ++p) {
      const BoxPrediction& bp = frames[f].predictions[p];
      if (bp.class_id != cls || !in_region(bp.box)) continue;
      preds.push_back({static_cast<int>(f), static_cast<int>(p), bp.confidence});
    }
  }
  std::sort(preds.begin(), preds.end(), [](const Pred& a, const Pred& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.index < b.index;
  });

  std::vector<std::vector<char>> matched(frames.size());
  for (size_t f = 0; f < frames.size(); ++f) matched[f].assign(gt_index[f].size(), 0);

  std::vector<char> is_tp(preds.size(), 0);
  int tp = 0, fp = 0;
  std::vector<double> recall_curve, precision_curve;
  recall_curve.reserve(preds.size());
  precision_curve.reserve(preds.size());
  for (size_t pi = 0; pi < preds.size(); ++pi) {
    const Pred& pr = preds[pi];
    const BoxPrediction& bp =
        frames[static_cast<size_t>(pr.frame)].predictions[static_cast<size_t>(pr.index)];
    double best_iou = 0.0;
    int best_g = -1;
    const auto& gts = gt_index[static_cast<size_t>(pr.frame)];
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (matched[static_cast<size_t>(pr.frame)][gi]) continue;
      const double iou = iou3d(
          bp.box, frames[static_cast<size_t>(pr.frame)].ground_truth[static_cast<size_t>(gts[gi])].box);
      if (iou > best_iou) {
        best_iou = iou;
        best_g = static_cast<int>(gi);
      }
    }
    if (best_g >= 0 && best_iou >= iou_threshold) {
      matched[static_cast<size_t>(pr.frame)][static_cast<size_t>(best_g)] = 1;
      is_tp[pi] = 1;
      ++tp;
    } else {
      ++fp;
    }
    recall_curve.push_back(static_cast<double>(tp) / num_gt);
    precision_curve.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  out.tp = tp;
  out.fp = fp;
  out.fn = num_gt - tp;

  double ap = 0.0;
  for (int i = 1; i <= cfg.recall_points; ++i) {
    const double r = static_cast<double>(i) / cfg.recall_points;
    double best = 0.0;
    for (size_t j = 0; j < recall_curve.size(); ++j)
      if (recall_curve[j] >= r) best = std::max(best, precision_curve[j]);
    ap += best;
  }
  out.ap = ap / cfg.recall_points;
  return out;
}

inline RegionResult evaluate_region(const std::vector<DetectionFrame>& frames, Region region,
                                    const EvalConfig& cfg = {}) {
  RegionResult out;
  std::vector<double> present;
  for (int c = 0; c < kNumClasses; ++c) {
    out.classes[static_cast<size_t>(c)] =
        average_precision(frames, c, cfg.iou_thresholds[static_cast<size_t>(c)], region, cfg);
    if (out.classes[static_cast<size_t>(c)].present)
      present.push_back(out.classes[static_cast<size_t>(c)].ap);
  }
  out.classes_present = static_cast<int>(present.size());
  out.map = present.empty() ? 0.0 : mean_ap(present);
  return out;
}

// Full report over both evaluation regions.
inline EvalReport evaluate(const std::vector<DetectionFrame>& frames, const EvalConfig& cfg = {}) {
  EvalReport r;
  r.all_area = evaluate_region(frames, Region::All, cfg);
  r.corridor = evaluate_region(frames, Region::Corridor, cfg);
  return r;
}

}  // namespace rldet
