#pragma once

#include <string>
#include <vector>

#include "rldet/model.hpp"

namespace rldet {

struct GradCheckItem {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 1e-5;
  bool passed() const { return max_rel_error < tolerance; }
};

// Rebuilds the structured parameter binding from a flat Var list laid out in
// named_params order; used to run grad_check over a whole model.
inline ModelVars model_vars_from_flat(const std::vector<Var>& flat, const ModelConfig& cfg) {
  ModelVars v;
  size_t i = 0;
  auto take = [&flat, &i]() { return flat.at(i++); };
  auto take_stages = [&](const std::vector<StageConfig>& stages, std::vector<StageVars>& out) {
    for (const StageConfig& sc : stages) {
      StageVars sv;
      for (size_t l = 0; l < sc.mlp_widths.size(); ++l) {
        sv.weights.push_back(take());
        sv.biases.push_back(take());
      }
      out.push_back(std::move(sv));
    }
  };
  take_stages(cfg.lidar_stages, v.lidar_stages);
  take_stages(cfg.radar_stages, v.radar_stages);
  for (size_t s = 0; s < cfg.radar_stages.size(); ++s) {
    DmaeVars d;
    d.enc_w1 = take();
    d.enc_b1 = take();
    d.enc_w2 = take();
    d.enc_b2 = take();
    d.head_w1 = take();
    d.head_b1 = take();
    d.head_w2 = take();
    d.head_b2 = take();
    v.dmae.push_back(d);
  }
  auto take_head = [&]() {
    HeadVars h;
    h.proj_w = take();
    h.proj_b = take();
    h.w1 = take();
    h.b1 = take();
    h.w2 = take();
    h.b2 = take();
    return h;
  };
  v.lidar_head = take_head();
  v.radar_head = take_head();
  return v;
}

namespace detail {

inline Tensor rand_tensor(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Tensor t({r, c});
  for (int64_t i = 0; i < t.count(); ++i) t[static_cast<size_t>(i)] = rng.uniform(lo, hi);
  return t;
}

}  // namespace detail

// Finite-difference verification of every primitive, the DMAE forward, the
// motion loss, the detection losses, the uncertainty loss, and a small
// end-to-end model. Seeds are pinned; all checks are deterministic.
inline std::vector<GradCheckItem> run_gradcheck_battery() {
  using detail::rand_tensor;
  std::vector<GradCheckItem> items;
  auto add = [&items](const std::string& name, double err, double tol = 1e-5) {
    items.push_back({name, err, tol});
  };

  Rng rng(20240801);
  const Tensor a = rand_tensor(rng, 5, 7);
  const Tensor b = rand_tensor(rng, 7, 4);
  const Tensor c = rand_tensor(rng, 5, 7);
  const Tensor pos = rand_tensor(rng, 4, 6, 0.1, 2.0);
  const Tensor bias = rand_tensor(rng, 1, 7);
  const Tensor colv = rand_tensor(rng, 5, 1);
  const Tensor wide = rand_tensor(rng, 15, 4);

  add("primitive.matmul", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.mul(t.matmul(v[0], v[1]), t.matmul(v[0], v[1])));
      }, {a, b}));
  add("primitive.transpose", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.mul(t.transpose(v[0]), t.transpose(v[0])));
      }, {a}));
  add("primitive.add_sub_mul", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.mul(t.add(v[0], v[1]), t.sub(v[0], v[1])));
      }, {a, c}));
  add("primitive.add_bias", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.mul(t.add_bias(v[0], v[1]), t.add_bias(v[0], v[1])));
      }, {a, bias}));
  add("primitive.mul_rows", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.mul(t.mul_rows(v[0], v[1]), v[0]));
      }, {a, colv}));
  add("primitive.exp_log", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.log(t.add_const(t.exp(v[0]), 1.0)));
      }, {a}));
  add("primitive.sigmoid", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.sigmoid(v[0]));
      }, {a}));
  add("primitive.relu", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.relu(v[0]));
      }, {a}));
  add("primitive.abs", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.abs(v[0]));
      }, {a}));
  add("primitive.trig_atan2", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.atan2(t.sin(v[0]), t.add_const(t.cos(v[0]), 2.0)));
      }, {a}));
  add("primitive.pow_const", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.pow_const(v[0], 1.7));
      }, {pos}));
  add("primitive.clamp", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.clamp(v[0], -0.55, 0.55));
      }, {a}));
  add("primitive.smooth_l1", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.smooth_l1(t.scale(v[0], 2.1)));
      }, {a}));
  add("primitive.softmax_rows", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.mul(t.softmax_rows(v[0], 1.7), v[0]));
      }, {a}));
  add("primitive.reductions", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.add(t.reduce_mean(t.row_sum(v[0])), t.reduce_sum(t.row_mean(v[0])));
      }, {a}));
  add("primitive.max_over_set", grad_check([](Tape& t, const std::vector<Var>& v) {
        return t.reduce_sum(t.max_over_set(v[0], 5));
      }, {wide}));
  add("primitive.concat_slice_gather", grad_check([](Tape& t, const std::vector<Var>& v) {
        Var cat = t.concat_cols(v[0], v[1]);
        Var g = t.gather_rows(t.concat_rows(cat, cat), {0, 2, 7, 4, 1, 2});
        return t.reduce_sum(t.mul(t.slice_cols(g, 2, 9), t.slice_cols(g, 3, 10)));
      }, {a, c}));

  // DMAE forward + motion loss
  {
    Rng drng(77);
    const int m = 8, n = 8;
    const Tensor f = rand_tensor(drng, m, n);
    Tensor vel({m, 2});
    for (int i = 0; i < m; ++i) {
      vel.at(i, 0) = drng.uniform(-4.0, 4.0);
      vel.at(i, 1) = drng.uniform(0.0, 4.0);
    }
    std::vector<int> labels(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) labels[static_cast<size_t>(i)] = drng.bernoulli(0.5) ? 1 : 0;
    Rng prng(78);
    const DmaeParams dp = init_dmae_params(prng, n);
    const std::vector<Tensor> dtensors{dp.enc_w1,  dp.enc_b1,  dp.enc_w2,  dp.enc_b2,
                                       dp.head_w1, dp.head_b1, dp.head_w2, dp.head_b2};
    add("dmae.forward", grad_check([&](Tape& t, const std::vector<Var>& v) {
          DmaeVars dv{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
          DmaeOut out = dmae_forward(t, t.leaf(f), vel, dv);
          return t.add(t.reduce_mean(t.mul(out.enhanced, out.enhanced)), t.reduce_mean(out.y_hat));
        }, dtensors));
    add("dmae.motion_loss", grad_check([&](Tape& t, const std::vector<Var>& v) {
          DmaeVars dv{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
          DmaeOut out = dmae_forward(t, t.leaf(f), vel, dv);
          std::vector<Var> layers(4, motion_loss_layer(t, out.y_hat, labels, 0.25, 2.0));
          return motion_loss_total(t, layers);
        }, dtensors));
  }

  // detection losses through a head
  {
    Rng hrng(101);
    const int m = 10, in_dim = 9;
    std::vector<Point3> kps;
    for (int i = 0; i < m; ++i)
      kps.push_back({hrng.uniform(2.0, 30.0), hrng.uniform(-8.0, 8.0), hrng.uniform(0.3, 1.5)});
    ObjectSpec car;
    car.cls = ObjClass::Car;
    car.box = Box7{kps[0][0], kps[0][1], kps[0][2], 4.0, 1.8, 1.6, 0.3};
    ObjectSpec ped;
    ped.cls = ObjClass::Pedestrian;
    ped.box = Box7{kps[1][0], kps[1][1], kps[1][2], 0.6, 0.6, 1.7, -0.7};
    const auto targets = assign_targets(kps, {car, ped});
    const Tensor feats = rand_tensor(hrng, m, in_dim);
    Rng prng(102);
    const HeadParams hp = init_head_params(prng, in_dim, 8, 6);
    add("heads.detection_loss", grad_check([&](Tape& t, const std::vector<Var>& v) {
          HeadVars hv{v[0], v[1], v[2], v[3], v[4], v[5]};
          return detection_loss(t, head_forward(t, t.constant(feats), hv), targets, 0.25, 2.0);
        }, {hp.proj_w, hp.proj_b, hp.w1, hp.b1, hp.w2, hp.b2}));
  }

  // uncertainty loss through both factors
  {
    Rng urng(131);
    Tensor loss({4, 7}), delta({4, 7});
    for (int64_t i = 0; i < loss.count(); ++i) {
      loss[static_cast<size_t>(i)] = urng.uniform(0.1, 2.0);
      delta[static_cast<size_t>(i)] = urng.uniform(0.05, 1.5);
    }
    add("xua.uncertainty_loss", grad_check([](Tape& t, const std::vector<Var>& v) {
          return uncertainty_loss(t, t.mul(v[0], v[0]), t.abs(v[1]), 0.1);
        }, {loss, delta}));
  }

  // end-to-end: full model loss on a small synthetic frame
  {
    RunConfig rc;
    rc.seed = 424242;
    rc.lidar_keypoints = {24, 12, 6, 4};
    rc.radar_keypoints = {12, 6, 4, 3};
    rc.stage_widths = {6, 6, 8, 8};
    rc.lidar_radii = {1.5, 3.0, 6.0, 12.0};
    rc.radar_radii = {2.0, 4.0, 8.0, 16.0};
    rc.max_neighbors = 6;
    rc.proj_width = 8;
    rc.head_hidden = 8;
    rc.sim.min_objects = 3;
    rc.sim.max_objects = 3;
    rc.sim.sensor.lidar_surface_density = 0.6;
    rc.sim.sensor.lidar_ground_density = 0.02;
    const ModelConfig mcfg = model_config_from(rc);
    const SceneFrame frame = gen_scene(rc.seed, rc.sim);
    const FramePlan plan = plan_frame(frame, mcfg);
    ModelParams params = init_model_params(mcfg, rc.seed);
    std::vector<Tensor> flat;
    for (auto& [name, tensor] : named_params(params)) flat.push_back(*tensor);
    for (const bool xua : {false, true}) {
      ModelConfig cfg = mcfg;
      cfg.xua = xua;
      cfg.dmae = true;
      // the wider step suppresses the 1/h rounding-noise amplification on
      // tiny-gradient coordinates; the fourth-order stencil keeps the
      // truncation error far below the tolerance
      add(std::string("model.total_loss.") + (xua ? "xua" : "plain"),
          grad_check([&](Tape& t, const std::vector<Var>& v) {
            ModelVars mv = model_vars_from_flat(v, cfg);
            return model_forward(t, plan, mv, cfg).total;
          }, flat, 1e-4));
    }
  }

  return items;
}

}  // namespace rldet
