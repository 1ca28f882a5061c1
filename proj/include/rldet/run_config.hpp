#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rldet/eval.hpp"
#include "rldet/heads.hpp"
#include "rldet/io.hpp"
#include "rldet/sim.hpp"

namespace rldet {

// Everything a run needs: data source, model shape, module flags, optimizer
// settings. Serialized as sectioned key=value text; the canonical
// serialization is hashed and embedded in every output artifact.
struct RunConfig {
  uint64_t seed = 7;

  // data: generate `frames` synthetic frames unless dataset_dir is set
  int frames = 500;
  int train_frames = 48;
  int eval_frames = 100;
  std::string dataset_dir;
  GenConfig sim;

  // encoder stages
  std::vector<int> lidar_keypoints{256, 128, 64, 32};
  std::vector<int> radar_keypoints{48, 24, 12, 8};
  std::vector<int> stage_widths{32, 64, 128, 256};
  std::vector<double> lidar_radii{1.0, 2.0, 4.0, 8.0};
  std::vector<double> radar_radii{2.0, 4.0, 8.0, 16.0};
  int max_neighbors = 16;

  // modules
  bool dmae = true;
  bool xua = true;
  double lambda = 0.1;  // uncertainty regularizer weight
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double motion_weight = 1.0;

  // heads
  double ground_filter_z = 0.15;
  int proj_width = 64;
  int head_hidden = 64;
  double objectness_threshold = 0.3;
  double nms_iou = 0.5;
  int max_detections = 32;

  // optimization
  int epochs = 30;
  double lr = 3e-3;
  AdamConfig adam;

  EvalConfig eval;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline std::string fmt_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string fmt_doubles(const std::vector<double>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
  return s;
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

// Canonical serialization: fixed section and key order.
inline std::string serialize_run_config(const RunConfig& c) {
  using detail::fmt_double;
  using detail::fmt_doubles;
  using detail::fmt_ints;
  std::ostringstream os;
  os << "[run]\n";
  os << "seed = " << c.seed << "\n";
  os << "frames = " << c.frames << "\n";
  os << "train_frames = " << c.train_frames << "\n";
  os << "eval_frames = " << c.eval_frames << "\n";
  os << "dataset_dir = " << c.dataset_dir << "\n";
  os << "\n[sim]\n";
  os << "min_objects = " << c.sim.min_objects << "\n";
  os << "max_objects = " << c.sim.max_objects << "\n";
  os << "move_prob = " << fmt_double(c.sim.move_prob) << "\n";
  os << "lidar_density = " << fmt_double(c.sim.sensor.lidar_surface_density) << "\n";
  os << "ground_density = " << fmt_double(c.sim.sensor.lidar_ground_density) << "\n";
  os << "lidar_noise = " << fmt_double(c.sim.sensor.lidar_noise_sigma) << "\n";
  os << "radar_points_per_object = " << fmt_double(c.sim.sensor.radar_points_per_object) << "\n";
  os << "radar_clutter = " << c.sim.sensor.radar_ground_clutter << "\n";
  os << "ghost_rate = " << fmt_double(c.sim.sensor.ghost_rate) << "\n";
  os << "dropout_rate = " << fmt_double(c.sim.sensor.dropout_rate) << "\n";
  os << "ego_speed = " << fmt_double(c.sim.sensor.ego_velocity[0]) << "\n";
  os << "\n[model]\n";
  os << "dmae = " << (c.dmae ? "on" : "off") << "\n";
  os << "xua = " << (c.xua ? "on" : "off") << "\n";
  os << "lambda = " << fmt_double(c.lambda) << "\n";
  os << "alpha = " << fmt_double(c.focal_alpha) << "\n";
  os << "gamma = " << fmt_double(c.focal_gamma) << "\n";
  os << "motion_weight = " << fmt_double(c.motion_weight) << "\n";
  os << "lidar_keypoints = " << fmt_ints(c.lidar_keypoints) << "\n";
  os << "radar_keypoints = " << fmt_ints(c.radar_keypoints) << "\n";
  os << "stage_widths = " << fmt_ints(c.stage_widths) << "\n";
  os << "lidar_radii = " << fmt_doubles(c.lidar_radii) << "\n";
  os << "radar_radii = " << fmt_doubles(c.radar_radii) << "\n";
  os << "max_neighbors = " << c.max_neighbors << "\n";
  os << "ground_filter_z = " << fmt_double(c.ground_filter_z) << "\n";
  os << "proj_width = " << c.proj_width << "\n";
  os << "head_hidden = " << c.head_hidden << "\n";
  os << "objectness_threshold = " << fmt_double(c.objectness_threshold) << "\n";
  os << "nms_iou = " << fmt_double(c.nms_iou) << "\n";
  os << "max_detections = " << c.max_detections << "\n";
  os << "\n[train]\n";
  os << "epochs = " << c.epochs << "\n";
  os << "lr = " << fmt_double(c.lr) << "\n";
  os << "\n[eval]\n";
  os << "iou_car = " << fmt_double(c.eval.iou_thresholds[0]) << "\n";
  os << "iou_pedestrian = " << fmt_double(c.eval.iou_thresholds[1]) << "\n";
  os << "iou_cyclist = " << fmt_double(c.eval.iou_thresholds[2]) << "\n";
  os << "recall_points = " << c.eval.recall_points << "\n";
  os << "corridor_x_min = " << fmt_double(c.eval.corridor.x_min) << "\n";
  os << "corridor_x_max = " << fmt_double(c.eval.corridor.x_max) << "\n";
  os << "corridor_y_half = " << fmt_double(c.eval.corridor.y_half) << "\n";
  return os.str();
}

inline std::string config_hash(const RunConfig& c) { return hash_hex(serialize_run_config(c)); }

inline void validate_run_config(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw std::runtime_error("invalid config: " + msg); };
  if (c.frames <= 0) fail("frames must be positive");
  if (c.dataset_dir.empty() && c.train_frames + c.eval_frames > c.frames)
    fail("train_frames + eval_frames exceeds frames");
  if (c.train_frames <= 0 || c.eval_frames <= 0) fail("train/eval frame counts must be positive");
  for (const auto* ks : {&c.lidar_keypoints, &c.radar_keypoints}) {
    if (ks->size() != 4) fail("keypoint schedules need exactly 4 stages");
    for (size_t i = 1; i < ks->size(); ++i)
      if ((*ks)[i] > (*ks)[i - 1]) fail("keypoint counts must be non-increasing");
    for (int m : *ks)
      if (m <= 0) fail("keypoint counts must be positive");
  }
  if (c.stage_widths.size() != 4 || c.lidar_radii.size() != 4 || c.radar_radii.size() != 4)
    fail("stage_widths and radii need exactly 4 entries");
  for (int w : c.stage_widths)
    if (w < 2) fail("stage widths must be at least 2");
  if (c.max_neighbors <= 0) fail("max_neighbors must be positive");
  if (!(c.focal_alpha > 0.0 && c.focal_alpha < 1.0)) fail("alpha must be in (0,1)");
  if (c.focal_gamma < 0.0) fail("gamma must be >= 0");
  if (c.lambda < 0.0) fail("lambda must be >= 0");
  if (c.epochs <= 0) fail("epochs must be positive");
  if (c.lr <= 0.0) fail("lr must be positive");
  for (double thr : c.eval.iou_thresholds)
    if (!(thr > 0.0 && thr <= 1.0)) fail("IoU thresholds must be in (0,1]");
  if (!(c.sim.sensor.ghost_rate >= 0.0 && c.sim.sensor.ghost_rate < 1.0))
    fail("ghost_rate must be in [0,1)");
  if (!(c.sim.sensor.dropout_rate >= 0.0 && c.sim.sensor.dropout_rate <= 1.0))
    fail("dropout_rate must be in [0,1]");
  if (c.sim.min_objects < 0 || c.sim.max_objects < c.sim.min_objects)
    fail("object count range is inverted");
}

// Sectioned key=value parser. Unknown sections or keys are errors so typos
// surface instead of silently using defaults.
inline RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  auto bad = [&](const std::string& msg) {
    throw std::runtime_error("config line " + std::to_string(lineno) + ": " + msg);
  };
  auto to_int = [&](const std::string& v) {
    try {
      size_t pos = 0;
      const int r = std::stoi(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (...) {
      bad("expected integer, got '" + v + "'");
      return 0;
    }
  };
  auto to_u64 = [&](const std::string& v) {
    try {
      size_t pos = 0;
      const uint64_t r = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (...) {
      bad("expected unsigned integer, got '" + v + "'");
      return static_cast<uint64_t>(0);
    }
  };
  auto to_double = [&](const std::string& v) {
    char* end = nullptr;
    const double r = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') bad("expected number, got '" + v + "'");
    return r;
  };
  auto to_bool = [&](const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    bad("expected on/off, got '" + v + "'");
    return false;
  };
  auto to_ints = [&](const std::string& v) {
    std::vector<int> out;
    for (const std::string& tok : detail::split_csv(v)) out.push_back(to_int(tok));
    return out;
  };
  auto to_doubles = [&](const std::string& v) {
    std::vector<double> out;
    for (const std::string& tok : detail::split_csv(v)) out.push_back(to_double(tok));
    return out;
  };

  while (std::getline(is, line)) {
    ++lineno;
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    std::string s = line.substr(a, b - a + 1);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') bad("malformed section header");
      section = s.substr(1, s.size() - 2);
      continue;
    }
    const size_t eq = s.find('=');
    if (eq == std::string::npos) bad("expected key = value");
    std::string key = s.substr(0, eq);
    std::string val = s.substr(eq + 1);
    auto trim = [](std::string& x) {
      const size_t i = x.find_first_not_of(" \t");
      const size_t j = x.find_last_not_of(" \t");
      x = i == std::string::npos ? "" : x.substr(i, j - i + 1);
    };
    trim(key);
    trim(val);
    const std::string full = section + "." + key;

    if (full == "run.seed") c.seed = to_u64(val);
    else if (full == "run.frames") c.frames = to_int(val);
    else if (full == "run.train_frames") c.train_frames = to_int(val);
    else if (full == "run.eval_frames") c.eval_frames = to_int(val);
    else if (full == "run.dataset_dir") c.dataset_dir = val;
    else if (full == "sim.min_objects") c.sim.min_objects = to_int(val);
    else if (full == "sim.max_objects") c.sim.max_objects = to_int(val);
    else if (full == "sim.move_prob") c.sim.move_prob = to_double(val);
    else if (full == "sim.lidar_density") c.sim.sensor.lidar_surface_density = to_double(val);
    else if (full == "sim.ground_density") c.sim.sensor.lidar_ground_density = to_double(val);
    else if (full == "sim.lidar_noise") c.sim.sensor.lidar_noise_sigma = to_double(val);
    else if (full == "sim.radar_points_per_object") c.sim.sensor.radar_points_per_object = to_double(val);
    else if (full == "sim.radar_clutter") c.sim.sensor.radar_ground_clutter = to_int(val);
    else if (full == "sim.ghost_rate") c.sim.sensor.ghost_rate = to_double(val);
    else if (full == "sim.dropout_rate") c.sim.sensor.dropout_rate = to_double(val);
    else if (full == "sim.ego_speed") c.sim.sensor.ego_velocity = {to_double(val), 0.0, 0.0};
    else if (full == "model.dmae") c.dmae = to_bool(val);
    else if (full == "model.xua") c.xua = to_bool(val);
    else if (full == "model.lambda") c.lambda = to_double(val);
    else if (full == "model.alpha") c.focal_alpha = to_double(val);
    else if (full == "model.gamma") c.focal_gamma = to_double(val);
    else if (full == "model.motion_weight") c.motion_weight = to_double(val);
    else if (full == "model.lidar_keypoints") c.lidar_keypoints = to_ints(val);
    else if (full == "model.radar_keypoints") c.radar_keypoints = to_ints(val);
    else if (full == "model.stage_widths") c.stage_widths = to_ints(val);
    else if (full == "model.lidar_radii") c.lidar_radii = to_doubles(val);
    else if (full == "model.radar_radii") c.radar_radii = to_doubles(val);
    else if (full == "model.max_neighbors") c.max_neighbors = to_int(val);
    else if (full == "model.ground_filter_z") c.ground_filter_z = to_double(val);
    else if (full == "model.proj_width") c.proj_width = to_int(val);
    else if (full == "model.head_hidden") c.head_hidden = to_int(val);
    else if (full == "model.objectness_threshold") c.objectness_threshold = to_double(val);
    else if (full == "model.nms_iou") c.nms_iou = to_double(val);
    else if (full == "model.max_detections") c.max_detections = to_int(val);
    else if (full == "train.epochs") c.epochs = to_int(val);
    else if (full == "train.lr") c.lr = to_double(val);
    else if (full == "eval.iou_car") c.eval.iou_thresholds[0] = to_double(val);
    else if (full == "eval.iou_pedestrian") c.eval.iou_thresholds[1] = to_double(val);
    else if (full == "eval.iou_cyclist") c.eval.iou_thresholds[2] = to_double(val);
    else if (full == "eval.recall_points") c.eval.recall_points = to_int(val);
    else if (full == "eval.corridor_x_min") c.eval.corridor.x_min = to_double(val);
    else if (full == "eval.corridor_x_max") c.eval.corridor.x_max = to_double(val);
    else if (full == "eval.corridor_y_half") c.eval.corridor.y_half = to_double(val);
    else bad("unknown key '" + full + "'");
  }
  validate_run_config(c);
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

inline void save_run_config(const std::string& path, const RunConfig& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file '" + path + "'");
  out << serialize_run_config(c);
}

}  // namespace rldet
