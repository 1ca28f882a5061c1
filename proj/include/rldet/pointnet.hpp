#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "rldet/rng.hpp"
#include "rldet/geom.hpp"
#include "rldet/tape.hpp"

namespace rldet {

// One down-sampling + set-abstraction stage.
struct StageConfig {
  int num_keypoints = 0;
  double ball_radius = 1.0;
  int max_neighbors = 16;
  std::vector<int> mlp_widths;  // channel counts, last entry is the stage output width
};

struct StageParams {
  std::vector<Tensor> weights;  // per layer, (in x out)
  std::vector<Tensor> biases;   // per layer, (1 x out)
};

// Biases start at a small positive value: all-zero feature rows (dropped or
// clutter radar returns) would otherwise sit exactly on the relu kink.
inline constexpr double kBiasInit = 0.01;

inline StageParams init_stage_params(Rng& rng, int in_dim, const std::vector<int>& widths) {
  StageParams p;
  int d = in_dim;
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("init_stage_params: non-positive width");
    const double s = std::sqrt(6.0 / (d + w));
    Tensor W({d, w});
    for (int64_t i = 0; i < W.count(); ++i) W[static_cast<size_t>(i)] = rng.uniform(-s, s);
    p.weights.push_back(std::move(W));
    Tensor B({1, w});
    for (int64_t i = 0; i < B.count(); ++i) B[static_cast<size_t>(i)] = kBiasInit;
    p.biases.push_back(std::move(B));
    d = w;
  }
  return p;
}

// Greedy max-min subset selection. Ties break toward the lowest index so the
// result is deterministic for any input ordering.
inline std::vector<int> farthest_point_sample(const std::vector<Point3>& points, int count,
                                              int seed_index = 0) {
  const int n = static_cast<int>(points.size());
  if (count <= 0 || count > n)
    throw std::invalid_argument("farthest_point_sample: count out of range");
  if (seed_index < 0 || seed_index >= n)
    throw std::invalid_argument("farthest_point_sample: bad seed index");
  std::vector<int> selected;
  selected.reserve(static_cast<size_t>(count));
  std::vector<double> best(static_cast<size_t>(n), 1e300);
  int cur = seed_index;
  for (int k = 0; k < count; ++k) {
    selected.push_back(cur);
    if (k + 1 == count) break;
    int next = -1;
    double next_d = -1.0;
    for (int i = 0; i < n; ++i) {
      const double d = dist2(points[static_cast<size_t>(i)], points[static_cast<size_t>(cur)]);
      if (d < best[static_cast<size_t>(i)]) best[static_cast<size_t>(i)] = d;
      if (best[static_cast<size_t>(i)] > next_d) {
        next_d = best[static_cast<size_t>(i)];
        next = i;
      }
    }
    cur = next;
  }
  return selected;
}

// Up to max_neighbors point indices within radius of each center, nearest
// first (ties toward the lower index). The center itself is always first and
// fills any deficit, so no neighborhood is ever empty. Exact coordinate
// duplicates occupy a single slot, which keeps the downstream max-pool
// idempotent when a cloud repeats points.
inline std::vector<std::vector<int>> ball_query(const std::vector<int>& center_indices,
                                                const std::vector<Point3>& points, double radius,
                                                int max_neighbors) {
  if (radius <= 0.0) throw std::invalid_argument("ball_query: radius must be positive");
  if (max_neighbors <= 0) throw std::invalid_argument("ball_query: max_neighbors must be positive");
  const double r2 = radius * radius;
  const int n = static_cast<int>(points.size());
  std::vector<std::vector<int>> out;
  out.reserve(center_indices.size());
  std::vector<std::pair<double, int>> cand;
  for (int ci : center_indices) {
    if (ci < 0 || ci >= n) throw std::out_of_range("ball_query: center index out of range");
    cand.clear();
    const Point3& c = points[static_cast<size_t>(ci)];
    for (int i = 0; i < n; ++i) {
      if (i == ci) continue;
      const double d = dist2(points[static_cast<size_t>(i)], c);
      if (d <= r2) cand.emplace_back(d, i);
    }
    std::sort(cand.begin(), cand.end());
    std::vector<int> nb;
    nb.reserve(static_cast<size_t>(max_neighbors));
    nb.push_back(ci);
    for (const auto& [d, i] : cand) {
      if (static_cast<int>(nb.size()) >= max_neighbors) break;
      bool dup = false;
      for (int j : nb) {
        if (points[static_cast<size_t>(j)] == points[static_cast<size_t>(i)]) {
          dup = true;
          break;
        }
      }
      if (!dup) nb.push_back(i);
    }
    while (static_cast<int>(nb.size()) < max_neighbors) nb.push_back(nb.front());
    out.push_back(std::move(nb));
  }
  return out;
}

// Precomputed geometry of one stage; independent of any parameters, so it can
// be cached per frame and reused across training epochs.
struct StagePlan {
  std::vector<int> fps_indices;              // keypoint -> input point index
  std::vector<Point3> keypoints;             // M x 3
  std::vector<int> neighbors_flat;           // M * K indices into stage input
  Tensor centered;                           // (M*K) x 3, neighbor minus keypoint
  int group_size = 0;
};

inline StagePlan plan_stage(const std::vector<Point3>& positions, const StageConfig& cfg,
                            int seed_index = 0) {
  if (cfg.num_keypoints > static_cast<int>(positions.size()))
    throw std::invalid_argument("plan_stage: cloud too small for requested keypoints");
  StagePlan plan;
  plan.fps_indices = farthest_point_sample(positions, cfg.num_keypoints, seed_index);
  plan.group_size = cfg.max_neighbors;
  const auto neighborhoods = ball_query(plan.fps_indices, positions, cfg.ball_radius, cfg.max_neighbors);
  plan.keypoints.reserve(plan.fps_indices.size());
  for (int i : plan.fps_indices) plan.keypoints.push_back(positions[static_cast<size_t>(i)]);
  const int m = cfg.num_keypoints, k = cfg.max_neighbors;
  plan.neighbors_flat.reserve(static_cast<size_t>(m) * k);
  plan.centered = Tensor({m * k, 3});
  for (int i = 0; i < m; ++i) {
    const Point3& c = plan.keypoints[static_cast<size_t>(i)];
    for (int j = 0; j < k; ++j) {
      const int pi = neighborhoods[static_cast<size_t>(i)][static_cast<size_t>(j)];
      plan.neighbors_flat.push_back(pi);
      const Point3& p = positions[static_cast<size_t>(pi)];
      plan.centered.at(i * k + j, 0) = p[0] - c[0];
      plan.centered.at(i * k + j, 1) = p[1] - c[1];
      plan.centered.at(i * k + j, 2) = p[2] - c[2];
    }
  }
  return plan;
}

// Stage parameters bound onto a tape as gradient-tracked leaves.
struct StageVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

inline StageVars bind_stage(Tape& t, const StageParams& p) {
  StageVars v;
  for (const Tensor& w : p.weights) v.weights.push_back(t.leaf(w));
  for (const Tensor& b : p.biases) v.biases.push_back(t.leaf(b));
  return v;
}

// Shared per-point MLP over (centered coords ++ neighbor features) followed
// by a max-pool over each neighborhood.
inline Var sa_forward(Tape& t, const StagePlan& plan, Var features, const StageVars& params) {
  Var coords = t.constant(plan.centered);
  Var gathered = t.gather_rows(features, plan.neighbors_flat);
  Var x = t.concat_cols(coords, gathered);
  for (size_t l = 0; l < params.weights.size(); ++l)
    x = t.relu(t.add_bias(t.matmul(x, params.weights[l]), params.biases[l]));
  return t.max_over_set(x, plan.group_size);
}

struct StageOutput {
  std::vector<int> indices;        // keypoint -> input point index
  std::vector<Point3> keypoints;
  Var features;                    // M x N
  Tensor carried_velocity;         // M x 2 for the radar branch, else empty
};

// One DS + SA stage: FPS down-sampling, ball-query grouping, shared MLP,
// neighborhood max-pool. Velocity (when present) rides along by gathering the
// keypoints' source rows.
inline StageOutput set_abstraction(Tape& t, const std::vector<Point3>& positions, Var features,
                                   const Tensor* velocity, const StageConfig& cfg,
                                   const StageVars& params, int seed_index = 0) {
  if (static_cast<int>(positions.size()) != t.value(features).rows())
    throw std::invalid_argument("set_abstraction: positions/features row mismatch");
  StagePlan plan = plan_stage(positions, cfg, seed_index);
  StageOutput out;
  out.features = sa_forward(t, plan, features, params);
  out.indices = plan.fps_indices;
  out.keypoints = std::move(plan.keypoints);
  if (velocity) {
    if (velocity->rows() != static_cast<int>(positions.size()))
      throw std::invalid_argument("set_abstraction: velocity row mismatch");
    Tensor v({cfg.num_keypoints, velocity->cols()});
    for (int i = 0; i < cfg.num_keypoints; ++i)
      for (int j = 0; j < velocity->cols(); ++j) v.at(i, j) = velocity->at(out.indices[static_cast<size_t>(i)], j);
    out.carried_velocity = std::move(v);
  }
  return out;
}

inline void validate_stage_chain(const std::vector<StageConfig>& configs, int cloud_size) {
  if (configs.empty()) throw std::invalid_argument("stage chain is empty");
  int prev = cloud_size;
  for (const StageConfig& c : configs) {
    if (c.num_keypoints <= 0 || c.num_keypoints > prev)
      throw std::invalid_argument("stage keypoint counts must be positive and non-increasing");
    prev = c.num_keypoints;
  }
}

// Chains the configured stages over a cloud. The radar branch passes its
// per-point velocity so each stage keeps the velocity of a keypoint's source
// point.
inline std::vector<StageOutput> encode_cloud(Tape& t, const std::vector<Point3>& positions,
                                             Var features, const Tensor* velocity,
                                             const std::vector<StageConfig>& configs,
                                             const std::vector<StageVars>& params,
                                             int seed_index = 0) {
  if (configs.size() != params.size())
    throw std::invalid_argument("encode_cloud: config/param count mismatch");
  validate_stage_chain(configs, static_cast<int>(positions.size()));
  std::vector<StageOutput> stages;
  const std::vector<Point3>* pos = &positions;
  Var feat = features;
  const Tensor* vel = velocity;
  int seed = seed_index;
  for (size_t s = 0; s < configs.size(); ++s) {
    stages.push_back(set_abstraction(t, *pos, feat, vel, configs[s], params[s], seed));
    pos = &stages.back().keypoints;
    feat = stages.back().features;
    vel = stages.back().carried_velocity.empty() ? nullptr : &stages.back().carried_velocity;
    seed = 0;  // later stages start FPS at the first kept keypoint
  }
  return stages;
}

inline std::vector<StageOutput> encode_cloud(Tape& t, const std::vector<Point3>& positions,
                                             Var features, const Tensor* velocity,
                                             const std::vector<StageConfig>& configs,
                                             const std::vector<StageParams>& params,
                                             int seed_index = 0) {
  std::vector<StageVars> bound;
  bound.reserve(params.size());
  for (const StageParams& p : params) bound.push_back(bind_stage(t, p));
  return encode_cloud(t, positions, features, velocity, configs, bound, seed_index);
}

}  // namespace rldet
