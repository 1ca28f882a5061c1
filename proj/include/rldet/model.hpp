#pragma once

#include <map>
#include <string>
#include <vector>

#include "rldet/dmae.hpp"
#include "rldet/heads.hpp"
#include "rldet/run_config.hpp"
#include "rldet/sim.hpp"
#include "rldet/xua.hpp"

namespace rldet {

// ---- model shape ----

struct ModelConfig {
  std::vector<StageConfig> lidar_stages;
  std::vector<StageConfig> radar_stages;
  int lidar_in_features = 1;  // intensity
  int radar_in_features = 3;  // v_rel, v_abs, rcs
  // LiDAR points below this height are dropped before the encoder (standard
  // ground removal); at desk scale it keeps the deep-stage keypoints on
  // objects instead of spread across the ground net. Radar is not filtered.
  double ground_filter_z = 0.15;
  bool dmae = true;
  bool xua = true;
  double lambda = 0.1;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double motion_weight = 1.0;
  int proj_width = 64;
  int head_hidden = 64;
  HeadConfig head;
};

inline ModelConfig model_config_from(const RunConfig& c) {
  ModelConfig m;
  for (int s = 0; s < 4; ++s) {
    StageConfig ls, rs;
    ls.num_keypoints = c.lidar_keypoints[static_cast<size_t>(s)];
    ls.ball_radius = c.lidar_radii[static_cast<size_t>(s)];
    ls.max_neighbors = c.max_neighbors;
    ls.mlp_widths = {c.stage_widths[static_cast<size_t>(s)]};
    rs.num_keypoints = c.radar_keypoints[static_cast<size_t>(s)];
    rs.ball_radius = c.radar_radii[static_cast<size_t>(s)];
    rs.max_neighbors = c.max_neighbors;
    rs.mlp_widths = {c.stage_widths[static_cast<size_t>(s)]};
    m.lidar_stages.push_back(ls);
    m.radar_stages.push_back(rs);
  }
  m.ground_filter_z = c.ground_filter_z;
  m.dmae = c.dmae;
  m.xua = c.xua;
  m.lambda = c.lambda;
  m.focal_alpha = c.focal_alpha;
  m.focal_gamma = c.focal_gamma;
  m.motion_weight = c.motion_weight;
  m.proj_width = c.proj_width;
  m.head_hidden = c.head_hidden;
  m.head.objectness_threshold = c.objectness_threshold;
  m.head.nms_iou = c.nms_iou;
  m.head.max_detections = c.max_detections;
  return m;
}

struct ModelParams {
  std::vector<StageParams> lidar_stages;
  std::vector<StageParams> radar_stages;
  std::vector<DmaeParams> dmae;  // one per radar stage
  HeadParams lidar_head;
  HeadParams radar_head;
};

inline ModelParams init_model_params(const ModelConfig& cfg, uint64_t seed) {
  Rng rng(Rng::derive(seed, 0x9a7a));
  ModelParams p;
  int in_c = cfg.lidar_in_features;
  for (const StageConfig& s : cfg.lidar_stages) {
    p.lidar_stages.push_back(init_stage_params(rng, 3 + in_c, s.mlp_widths));
    in_c = s.mlp_widths.back();
  }
  const int lidar_out = in_c;
  in_c = cfg.radar_in_features;
  for (const StageConfig& s : cfg.radar_stages) {
    p.radar_stages.push_back(init_stage_params(rng, 3 + in_c, s.mlp_widths));
    p.dmae.push_back(init_dmae_params(rng, s.mlp_widths.back()));
    in_c = s.mlp_widths.back();
  }
  const int radar_out = in_c;
  p.lidar_head = init_head_params(rng, lidar_out, cfg.proj_width, cfg.head_hidden);
  p.radar_head = init_head_params(rng, radar_out, cfg.proj_width, cfg.head_hidden);
  return p;
}

// Deterministic name -> tensor registry used by the optimizer and
// checkpoints.
inline std::vector<std::pair<std::string, Tensor*>> named_params(ModelParams& p) {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add_stage = [&out](const std::string& prefix, std::vector<StageParams>& stages) {
    for (size_t s = 0; s < stages.size(); ++s) {
      for (size_t l = 0; l < stages[s].weights.size(); ++l) {
        out.emplace_back(prefix + std::to_string(s) + ".w" + std::to_string(l), &stages[s].weights[l]);
        out.emplace_back(prefix + std::to_string(s) + ".b" + std::to_string(l), &stages[s].biases[l]);
      }
    }
  };
  add_stage("lidar.sa", p.lidar_stages);
  add_stage("radar.sa", p.radar_stages);
  for (size_t s = 0; s < p.dmae.size(); ++s) {
    const std::string pre = "dmae" + std::to_string(s) + ".";
    DmaeParams& d = p.dmae[s];
    out.emplace_back(pre + "enc_w1", &d.enc_w1);
    out.emplace_back(pre + "enc_b1", &d.enc_b1);
    out.emplace_back(pre + "enc_w2", &d.enc_w2);
    out.emplace_back(pre + "enc_b2", &d.enc_b2);
    out.emplace_back(pre + "head_w1", &d.head_w1);
    out.emplace_back(pre + "head_b1", &d.head_b1);
    out.emplace_back(pre + "head_w2", &d.head_w2);
    out.emplace_back(pre + "head_b2", &d.head_b2);
  }
  auto add_head = [&out](const std::string& pre, HeadParams& h) {
    out.emplace_back(pre + "proj_w", &h.proj_w);
    out.emplace_back(pre + "proj_b", &h.proj_b);
    out.emplace_back(pre + "w1", &h.w1);
    out.emplace_back(pre + "b1", &h.b1);
    out.emplace_back(pre + "w2", &h.w2);
    out.emplace_back(pre + "b2", &h.b2);
  };
  add_head("lidar.head.", p.lidar_head);
  add_head("radar.head.", p.radar_head);
  return out;
}

// ---- per-frame plan (geometry cache) ----

struct BranchPlan {
  std::vector<Point3> positions;
  Tensor in_features;
  std::vector<StagePlan> plans;              // 4 stages
  std::vector<Tensor> velocities;            // per-stage M_i x 2 (radar only)
  std::vector<std::vector<int>> motion_labels;  // per-stage (radar only)
  std::vector<Point3> final_keypoints;
  std::vector<BoxTarget> targets;
};

struct FramePlan {
  int frame_id = 0;
  BranchPlan lidar;
  BranchPlan radar;
  std::vector<ObjectSpec> annotations;
};

namespace detail {

// Pads a cloud below the first-stage keypoint count by cycling points;
// duplicate coordinates share neighborhood slots so the padding is inert.
inline void pad_cloud(std::vector<Point3>& pos, std::vector<std::vector<double>>& feats, int min_size) {
  if (pos.empty()) throw std::invalid_argument("pad_cloud: empty cloud");
  size_t i = 0;
  while (static_cast<int>(pos.size()) < min_size) {
    pos.push_back(pos[i]);
    feats.push_back(feats[i]);
    ++i;
  }
}

inline Tensor to_feature_tensor(const std::vector<std::vector<double>>& rows) {
  const int n = static_cast<int>(rows.size());
  const int c = static_cast<int>(rows[0].size());
  Tensor t({n, c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) t.at(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return t;
}

}  // namespace detail

inline FramePlan plan_frame(const SceneFrame& frame, const ModelConfig& cfg) {
  FramePlan fp;
  fp.frame_id = frame.frame_id;
  fp.annotations = frame.annotations;

  // lidar branch
  {
    BranchPlan& b = fp.lidar;
    std::vector<std::vector<double>> feats;
    for (const LidarPoint& p : frame.lidar.points) {
      if (p.z < cfg.ground_filter_z) continue;
      b.positions.push_back({p.x, p.y, p.z});
      feats.push_back({p.intensity});
    }
    if (b.positions.empty()) {  // nothing above ground; fall back to the raw cloud
      for (const LidarPoint& p : frame.lidar.points) {
        b.positions.push_back({p.x, p.y, p.z});
        feats.push_back({p.intensity});
      }
    }
    if (b.positions.empty()) throw std::invalid_argument("plan_frame: empty lidar cloud");
    detail::pad_cloud(b.positions, feats, cfg.lidar_stages[0].num_keypoints);
    b.in_features = detail::to_feature_tensor(feats);
    std::vector<Point3> pos = b.positions;
    for (const StageConfig& sc : cfg.lidar_stages) {
      b.plans.push_back(plan_stage(pos, sc, 0));
      pos = b.plans.back().keypoints;
    }
    b.final_keypoints = pos;
    b.targets = assign_targets(pos, frame.annotations, cfg.head.anchors);
  }

  // radar branch: velocities ride along the FPS chain, labels per stage
  {
    BranchPlan& b = fp.radar;
    std::vector<std::vector<double>> feats;
    std::vector<std::array<double, 2>> vel;
    for (const RadarPoint& p : frame.radar.points) {
      b.positions.push_back({p.x, p.y, p.z});
      feats.push_back({p.v_rel, p.v_abs, p.rcs});
      vel.push_back({p.v_rel, p.v_abs});
    }
    const int before_pad = static_cast<int>(b.positions.size());
    detail::pad_cloud(b.positions, feats, cfg.radar_stages[0].num_keypoints);
    for (int i = before_pad; i < static_cast<int>(b.positions.size()); ++i)
      vel.push_back(vel[static_cast<size_t>(i - before_pad)]);
    b.in_features = detail::to_feature_tensor(feats);

    std::vector<Point3> pos = b.positions;
    std::vector<std::array<double, 2>> v = vel;
    for (const StageConfig& sc : cfg.radar_stages) {
      b.plans.push_back(plan_stage(pos, sc, 0));
      const StagePlan& plan = b.plans.back();
      std::vector<std::array<double, 2>> kp_v;
      Tensor vt({sc.num_keypoints, 2});
      for (int i = 0; i < sc.num_keypoints; ++i) {
        kp_v.push_back(v[static_cast<size_t>(plan.fps_indices[static_cast<size_t>(i)])]);
        vt.at(i, 0) = kp_v.back()[0];
        vt.at(i, 1) = kp_v.back()[1];
      }
      b.velocities.push_back(std::move(vt));
      b.motion_labels.push_back(label_point_motion(plan.keypoints, frame.annotations));
      pos = plan.keypoints;
      v = std::move(kp_v);
    }
    b.final_keypoints = pos;
    b.targets = assign_targets(pos, frame.annotations, cfg.head.anchors);
  }
  return fp;
}

// ---- parameter binding ----

struct ModelVars {
  std::vector<StageVars> lidar_stages;
  std::vector<StageVars> radar_stages;
  std::vector<DmaeVars> dmae;
  HeadVars lidar_head;
  HeadVars radar_head;
  std::vector<std::pair<std::string, Var>> named;  // same order as named_params
};

inline ModelVars bind_model(Tape& t, ModelParams& p) {
  ModelVars v;
  auto bind_stages = [&](std::vector<StageParams>& stages, std::vector<StageVars>& out) {
    for (StageParams& s : stages) out.push_back(bind_stage(t, s));
  };
  bind_stages(p.lidar_stages, v.lidar_stages);
  bind_stages(p.radar_stages, v.radar_stages);
  for (DmaeParams& d : p.dmae) v.dmae.push_back(bind_dmae(t, d));
  v.lidar_head = bind_head(t, p.lidar_head);
  v.radar_head = bind_head(t, p.radar_head);

  // mirror named_params ordering so the optimizer can look up gradients
  auto push_stage_vars = [&](const std::string& prefix, std::vector<StageVars>& stages) {
    for (size_t s = 0; s < stages.size(); ++s)
      for (size_t l = 0; l < stages[s].weights.size(); ++l) {
        v.named.emplace_back(prefix + std::to_string(s) + ".w" + std::to_string(l), stages[s].weights[l]);
        v.named.emplace_back(prefix + std::to_string(s) + ".b" + std::to_string(l), stages[s].biases[l]);
      }
  };
  push_stage_vars("lidar.sa", v.lidar_stages);
  push_stage_vars("radar.sa", v.radar_stages);
  for (size_t s = 0; s < v.dmae.size(); ++s) {
    const std::string pre = "dmae" + std::to_string(s) + ".";
    const DmaeVars& d = v.dmae[s];
    v.named.emplace_back(pre + "enc_w1", d.enc_w1);
    v.named.emplace_back(pre + "enc_b1", d.enc_b1);
    v.named.emplace_back(pre + "enc_w2", d.enc_w2);
    v.named.emplace_back(pre + "enc_b2", d.enc_b2);
    v.named.emplace_back(pre + "head_w1", d.head_w1);
    v.named.emplace_back(pre + "head_b1", d.head_b1);
    v.named.emplace_back(pre + "head_w2", d.head_w2);
    v.named.emplace_back(pre + "head_b2", d.head_b2);
  }
  auto push_head_vars = [&](const std::string& pre, const HeadVars& h) {
    v.named.emplace_back(pre + "proj_w", h.proj_w);
    v.named.emplace_back(pre + "proj_b", h.proj_b);
    v.named.emplace_back(pre + "w1", h.w1);
    v.named.emplace_back(pre + "b1", h.b1);
    v.named.emplace_back(pre + "w2", h.w2);
    v.named.emplace_back(pre + "b2", h.b2);
  };
  push_head_vars("lidar.head.", v.lidar_head);
  push_head_vars("radar.head.", v.radar_head);
  return v;
}

// ---- forward ----

struct BranchForward {
  Var final_features;
  Var raw;                  // head output, M4 x kHeadDim
  std::vector<Var> y_hat;   // per stage when DMAE runs
};

inline BranchForward branch_forward(Tape& t, const BranchPlan& plan,
                                    const std::vector<StageVars>& stages, const HeadVars& head,
                                    const std::vector<DmaeVars>* dmae_vars,
                                    const std::vector<StageConfig>& cfgs) {
  BranchForward out;
  Var feats = t.constant(plan.in_features);
  for (size_t s = 0; s < cfgs.size(); ++s) {
    feats = sa_forward(t, plan.plans[s], feats, stages[s]);
    if (dmae_vars) {
      DmaeOut d = dmae_forward(t, feats, plan.velocities[s], (*dmae_vars)[s]);
      out.y_hat.push_back(d.y_hat);
      feats = d.enhanced;
    }
  }
  out.final_features = feats;
  out.raw = head_forward(t, feats, head);
  return out;
}

struct FrameLosses {
  Var total;
  double lidar_det = 0.0;
  double radar_det = 0.0;
  double motion = 0.0;
  int matched_pairs = 0;
};

namespace detail {

// Differentiable k x 7 box parameters (x,y,z,l,w,h,theta) for the selected
// keypoint rows of a head output.
inline Var decode_rows(Tape& t, Var raw, const std::vector<const BoxPrediction*>& picks,
                       const std::vector<Point3>& keypoints, const HeadConfig& head) {
  std::vector<int> rows;
  const int k = static_cast<int>(picks.size());
  Tensor kp({k, 3});
  Tensor anchors({k, 3});
  for (int i = 0; i < k; ++i) {
    const BoxPrediction& p = *picks[static_cast<size_t>(i)];
    rows.push_back(p.keypoint);
    for (int j = 0; j < 3; ++j) {
      kp.at(i, j) = keypoints[static_cast<size_t>(p.keypoint)][static_cast<size_t>(j)];
      anchors.at(i, j) = head.anchors[static_cast<size_t>(p.class_id)][static_cast<size_t>(j)];
    }
  }
  Var picked = t.gather_rows(raw, rows);
  Var centers = t.add(t.slice_cols(picked, 0, 3), t.constant(kp));
  Var sizes = t.mul(t.constant(anchors), t.exp(t.slice_cols(picked, 3, 6)));
  Var theta = t.atan2(t.slice_cols(picked, 6, 7), t.slice_cols(picked, 7, 8));
  return t.concat_cols(t.concat_cols(centers, sizes), theta);
}

}  // namespace detail

// Full detection + alignment loss for one frame. The radar branch always
// trains with the plain detection loss; the LiDAR branch switches to the
// uncertainty-weighted form when X-UA is on and a match exists.
inline FrameLosses model_forward(Tape& t, const FramePlan& fp, const ModelVars& v,
                                 const ModelConfig& cfg) {
  FrameLosses out;
  auto guard = [](const char* term, auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("loss term '") + term + "' failed: " + e.what());
    }
  };

  BranchForward lidar = guard("lidar_branch", [&] {
    return branch_forward(t, fp.lidar, v.lidar_stages, v.lidar_head, nullptr, cfg.lidar_stages);
  });
  const std::vector<DmaeVars>* dmae_vars = cfg.dmae ? &v.dmae : nullptr;
  BranchForward radar = guard("radar_branch", [&] {
    return branch_forward(t, fp.radar, v.radar_stages, v.radar_head, dmae_vars, cfg.radar_stages);
  });

  Var radar_det = guard("radar_detection", [&] {
    return detection_loss(t, radar.raw, fp.radar.targets, cfg.focal_alpha, cfg.focal_gamma);
  });

  Var lidar_det;
  if (!cfg.xua) {
    lidar_det = guard("lidar_detection", [&] {
      return detection_loss(t, lidar.raw, fp.lidar.targets, cfg.focal_alpha, cfg.focal_gamma);
    });
  } else {
    lidar_det = guard("lidar_uncertainty", [&] {
      // initial predictions from both branches
      const std::vector<BoxPrediction> dl = detect_head(t.value(lidar.raw), fp.lidar.final_keypoints, cfg.head);
      const std::vector<BoxPrediction> dr = detect_head(t.value(radar.raw), fp.radar.final_keypoints, cfg.head);
      if (dl.empty() || dr.empty())
        return detection_loss(t, lidar.raw, fp.lidar.targets, cfg.focal_alpha, cfg.focal_gamma);

      std::vector<Box7> lboxes, rboxes;
      for (const BoxPrediction& p : dl) lboxes.push_back(p.box);
      for (const BoxPrediction& p : dr) rboxes.push_back(p.box);
      const MatchResult match = match_boxes(lboxes, rboxes);
      out.matched_pairs = match.k;

      std::vector<const BoxPrediction*> lpick, rpick;
      for (auto [li, ri] : match.pairs) {
        lpick.push_back(&dl[static_cast<size_t>(li)]);
        rpick.push_back(&dr[static_cast<size_t>(ri)]);
      }
      Var l7 = detail::decode_rows(t, lidar.raw, lpick, fp.lidar.final_keypoints, cfg.head);
      Var r7 = detail::decode_rows(t, radar.raw, rpick, fp.radar.final_keypoints, cfg.head);
      Var delta = delta_d_vars(t, l7, r7);

      // per-pair per-attribute regression losses; matched background rows
      // carry a zero target error so only the lambda pull applies to them
      const int k = match.k;
      std::vector<int> pair_rows;
      Tensor enc({k, kRegDim});
      const Tensor& raw_val = t.value(lidar.raw);
      std::vector<char> kp_matched(fp.lidar.targets.size(), 0);
      for (int i = 0; i < k; ++i) {
        const BoxPrediction& p = *lpick[static_cast<size_t>(i)];
        pair_rows.push_back(p.keypoint);
        kp_matched[static_cast<size_t>(p.keypoint)] = 1;
        const BoxTarget& tgt = fp.lidar.targets[static_cast<size_t>(p.keypoint)];
        for (int j = 0; j < kRegDim; ++j)
          enc.at(i, j) = tgt.foreground ? tgt.encoded[static_cast<size_t>(j)] : raw_val.at(p.keypoint, j);
      }
      Var pair_pred = t.slice_cols(t.gather_rows(lidar.raw, pair_rows), 0, kRegDim);
      Var loss_rows = reg_loss_cols7(t, pair_pred, enc);
      Var pair_term = uncertainty_loss(t, loss_rows, delta, cfg.lambda);

      // unmatched foreground keypoints keep their plain regression loss
      std::vector<BoxTarget> unmatched = fp.lidar.targets;
      for (size_t i = 0; i < unmatched.size(); ++i)
        if (kp_matched[i]) unmatched[i].foreground = false;
      Var unmatched_term = reg_loss(t, lidar.raw, unmatched);

      // classification, scaled per matched keypoint by mean exp(-delta)
      Var cls_rows = cls_loss_rows(t, lidar.raw, fp.lidar.targets, cfg.focal_alpha, cfg.focal_gamma);
      Var scale_col = t.row_mean(t.exp(t.scale(delta, -1.0)));
      Var matched_rows = t.gather_rows(cls_rows, pair_rows);
      Var cls_total = t.add(t.sub(t.reduce_sum(cls_rows), t.reduce_sum(matched_rows)),
                            t.reduce_sum(t.mul(matched_rows, scale_col)));
      Var cls_term = t.scale(cls_total, 1.0 / static_cast<double>(fp.lidar.targets.size()));

      return t.add(t.add(pair_term, unmatched_term), cls_term);
    });
  }

  Var total = t.add(lidar_det, radar_det);
  if (cfg.dmae) {
    Var motion = guard("motion_loss", [&] {
      std::vector<Var> layers;
      for (size_t s = 0; s < radar.y_hat.size(); ++s)
        layers.push_back(motion_loss_layer(t, radar.y_hat[s], fp.radar.motion_labels[s],
                                           cfg.focal_alpha, cfg.focal_gamma));
      return motion_loss_total(t, layers);
    });
    out.motion = t.value(motion).value();
    total = t.add(total, t.scale(motion, cfg.motion_weight));
  }
  out.lidar_det = t.value(lidar_det).value();
  out.radar_det = t.value(radar_det).value();
  out.total = total;
  return out;
}

// ---- inference ----

struct FramePredictions {
  std::vector<BoxPrediction> lidar;
  std::vector<BoxPrediction> radar;
};

inline FramePredictions model_predict(const FramePlan& fp, ModelParams& params,
                                      const ModelConfig& cfg) {
  Tape t;
  ModelVars v = bind_model(t, params);
  BranchForward lidar =
      branch_forward(t, fp.lidar, v.lidar_stages, v.lidar_head, nullptr, cfg.lidar_stages);
  const std::vector<DmaeVars>* dmae_vars = cfg.dmae ? &v.dmae : nullptr;
  BranchForward radar =
      branch_forward(t, fp.radar, v.radar_stages, v.radar_head, dmae_vars, cfg.radar_stages);
  FramePredictions out;
  out.lidar = detect_head(t.value(lidar.raw), fp.lidar.final_keypoints, cfg.head);
  out.radar = detect_head(t.value(radar.raw), fp.radar.final_keypoints, cfg.head);
  return out;
}

// Point-motion classification accuracy of the DMAE head on the first-stage
// radar keypoints.
struct MotionEval {
  long correct = 0;
  long total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

inline void accumulate_motion_eval(const FramePlan& fp, ModelParams& params, const ModelConfig& cfg,
                                   MotionEval& acc) {
  if (!cfg.dmae) throw std::logic_error("motion evaluation requires the DMAE module");
  Tape t;
  ModelVars v = bind_model(t, params);
  BranchForward radar =
      branch_forward(t, fp.radar, v.radar_stages, v.radar_head, &v.dmae, cfg.radar_stages);
  const Tensor& yh = t.value(radar.y_hat[0]);
  const std::vector<int>& labels = fp.radar.motion_labels[0];
  for (int i = 0; i < yh.rows(); ++i) {
    const int pred = yh.at(i, 0) > 0.5 ? 1 : 0;
    acc.correct += pred == labels[static_cast<size_t>(i)];
    acc.total += 1;
  }
}

// Naive velocity-threshold classifier on the raw radar cloud.
inline void accumulate_baseline_motion(const SceneFrame& frame, double threshold, MotionEval& acc) {
  std::vector<Point3> pos;
  for (const RadarPoint& p : frame.radar.points) pos.push_back({p.x, p.y, p.z});
  const auto labels = label_point_motion(pos, frame.annotations);
  for (size_t i = 0; i < frame.radar.points.size(); ++i) {
    const int pred = frame.radar.points[i].v_abs > threshold ? 1 : 0;
    acc.correct += pred == labels[i];
    acc.total += 1;
  }
}

}  // namespace rldet
