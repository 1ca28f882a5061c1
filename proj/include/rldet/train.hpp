#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rldet/model.hpp"
#include "rldet/optim.hpp"

namespace rldet {

struct EpochLog {
  int epoch = 0;
  double total = 0.0;
  double lidar_det = 0.0;
  double radar_det = 0.0;
  double motion = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::map<std::string, AdamState> opt_state;
  std::vector<EpochLog> curve;
  int steps = 0;
};

// Deterministic single-threaded training over pre-planned frames. One Adam
// step per frame, frame order shuffled per epoch from the run seed.
// `on_epoch` (optional) fires after each epoch with the fresh log entry.
inline TrainResult train_model(
    const RunConfig& cfg, const std::vector<FramePlan>& plans,
    const std::function<void(const TrainResult&, const EpochLog&)>& on_epoch = nullptr) {
  if (plans.empty()) throw std::invalid_argument("train_model: no training frames");
  const ModelConfig mcfg = model_config_from(cfg);
  TrainResult r;
  r.params = init_model_params(mcfg, cfg.seed);
  AdamConfig adam = cfg.adam;
  adam.lr = cfg.lr;

  std::vector<int> order(plans.size());
  for (size_t i = 0; i < plans.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(cfg.seed, 0xe90c + static_cast<uint64_t>(epoch)));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      const int j = shuffle_rng.uniform_int(i + 1);
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    EpochLog log;
    log.epoch = epoch;
    for (int fi : order) {
      const FramePlan& fp = plans[static_cast<size_t>(fi)];
      Tape t;
      ModelVars v = bind_model(t, r.params);
      FrameLosses losses = model_forward(t, fp, v, mcfg);
      const double total_val = t.value(losses.total).value();
      if (!std::isfinite(total_val))
        throw std::runtime_error("training aborted: non-finite total loss at epoch " +
                                 std::to_string(epoch) + ", frame " + std::to_string(fp.frame_id));
      t.backward(losses.total);
      auto named = named_params(r.params);
      for (size_t p = 0; p < named.size(); ++p) {
        const auto& [name, tensor] = named[p];
        adam_step(*tensor, t.grad(v.named[p].second), r.opt_state[name], adam);
      }
      log.total += total_val;
      log.lidar_det += losses.lidar_det;
      log.radar_det += losses.radar_det;
      log.motion += losses.motion;
      ++r.steps;
    }
    const double n = static_cast<double>(order.size());
    log.total /= n;
    log.lidar_det /= n;
    log.radar_det /= n;
    log.motion /= n;
    r.curve.push_back(log);
    if (on_epoch) on_epoch(r, log);
  }
  return r;
}

// Evaluates LiDAR predictions of a trained model over held-out frames.
inline EvalReport evaluate_model(ModelParams& params, const ModelConfig& cfg,
                                 const std::vector<FramePlan>& plans, const EvalConfig& ecfg) {
  std::vector<DetectionFrame> frames;
  frames.reserve(plans.size());
  for (const FramePlan& fp : plans) {
    DetectionFrame df;
    df.predictions = model_predict(fp, params, cfg).lidar;
    df.ground_truth = fp.annotations;
    frames.push_back(std::move(df));
  }
  return evaluate(frames, ecfg);
}

// ---- checkpoint glue ----

inline Checkpoint make_checkpoint(ModelParams& params,
                                  const std::map<std::string, AdamState>& opt_state,
                                  const std::string& cfg_hash, int epoch) {
  Checkpoint ck;
  ck.config_hash = cfg_hash;
  ck.epoch = epoch;
  for (auto& [name, tensor] : named_params(params)) ck.params.emplace_back(name, *tensor);
  for (const auto& [name, st] : opt_state)
    if (st.step > 0) ck.opt_state.emplace_back(name, st);
  return ck;
}

inline void restore_checkpoint(const Checkpoint& ck, ModelParams& params,
                               std::map<std::string, AdamState>* opt_state = nullptr) {
  std::map<std::string, Tensor*> lookup;
  for (auto& [name, tensor] : named_params(params)) lookup[name] = tensor;
  for (const auto& [name, tensor] : ck.params) {
    auto it = lookup.find(name);
    if (it == lookup.end()) throw std::runtime_error("checkpoint param '" + name + "' not in model");
    if (!it->second->same_shape(tensor))
      throw std::runtime_error("checkpoint param '" + name + "' has shape " + tensor.shape_str() +
                               ", model expects " + it->second->shape_str());
    *it->second = tensor;
  }
  if (opt_state) {
    opt_state->clear();
    for (const auto& [name, st] : ck.opt_state) (*opt_state)[name] = st;
  }
}

}  // namespace rldet
