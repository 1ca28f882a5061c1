#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rldet/train.hpp"

namespace rldet {

using ordered_json = nlohmann::ordered_json;

// ---- dataset assembly ----

struct Dataset {
  std::vector<SceneFrame> frames;
  std::vector<FramePlan> train_plans;
  std::vector<FramePlan> eval_plans;
  std::vector<const SceneFrame*> eval_frames;
  std::string split_hash;
};

inline std::vector<SceneFrame> load_dataset_dir(const std::string& dir);  // defined below

// The split hash covers everything that determines the data and the split,
// and nothing that doesn't (module flags must not change it).
inline std::string compute_split_hash(const RunConfig& cfg) {
  std::ostringstream os;
  os << cfg.seed << '|' << cfg.frames << '|' << cfg.train_frames << '|' << cfg.eval_frames << '|'
     << cfg.dataset_dir << '|';
  os << cfg.sim.min_objects << ',' << cfg.sim.max_objects << ',' << cfg.sim.move_prob << ','
     << cfg.sim.sensor.lidar_surface_density << ',' << cfg.sim.sensor.lidar_ground_density << ','
     << cfg.sim.sensor.radar_points_per_object << ',' << cfg.sim.sensor.ghost_rate << ','
     << cfg.sim.sensor.dropout_rate;
  return hash_hex(os.str());
}

inline Dataset build_dataset(const RunConfig& cfg, const ModelConfig& mcfg) {
  Dataset d;
  if (cfg.dataset_dir.empty()) {
    d.frames = gen_dataset(cfg.seed, cfg.frames, cfg.sim);
  } else {
    d.frames = load_dataset_dir(cfg.dataset_dir);
    if (static_cast<int>(d.frames.size()) < cfg.train_frames + cfg.eval_frames)
      throw std::runtime_error("dataset in '" + cfg.dataset_dir + "' has " +
                               std::to_string(d.frames.size()) + " frames, need " +
                               std::to_string(cfg.train_frames + cfg.eval_frames));
  }
  for (int i = 0; i < cfg.train_frames; ++i)
    d.train_plans.push_back(plan_frame(d.frames[static_cast<size_t>(i)], mcfg));
  const int eval_begin = static_cast<int>(d.frames.size()) - cfg.eval_frames;
  for (int i = eval_begin; i < static_cast<int>(d.frames.size()); ++i) {
    d.eval_plans.push_back(plan_frame(d.frames[static_cast<size_t>(i)], mcfg));
    d.eval_frames.push_back(&d.frames[static_cast<size_t>(i)]);
  }
  d.split_hash = compute_split_hash(cfg);
  return d;
}

// ---- JSON serialization (ordered keys for byte-stable output) ----

inline ordered_json region_to_json(const RegionResult& r) {
  ordered_json j;
  const char* names[3] = {"Car", "Pedestrian", "Cyclist"};
  for (int c = 0; c < kNumClasses; ++c) {
    const ClassResult& cr = r.classes[static_cast<size_t>(c)];
    ordered_json cj;
    cj["present"] = cr.present;
    cj["ap"] = cr.ap;
    cj["tp"] = cr.tp;
    cj["fp"] = cr.fp;
    cj["fn"] = cr.fn;
    j[names[c]] = cj;
  }
  j["mAP"] = r.map;
  return j;
}

inline ordered_json report_to_json(const EvalReport& r) {
  ordered_json j;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["all_area"] = region_to_json(r.all_area);
  j["driving_corridor"] = region_to_json(r.corridor);
  return j;
}

inline ordered_json curve_to_json(const std::vector<EpochLog>& curve) {
  ordered_json arr = ordered_json::array();
  for (const EpochLog& e : curve) {
    ordered_json j;
    j["epoch"] = e.epoch;
    j["total"] = e.total;
    j["lidar_det"] = e.lidar_det;
    j["radar_det"] = e.radar_det;
    j["motion"] = e.motion;
    arr.push_back(j);
  }
  return arr;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

// ---- text tables ----

namespace detail {

inline std::string pct(double v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%6.2f", 100.0 * v);
  return std::string(buf);
}

inline std::string region_cells(const RegionResult& r) {
  std::string s;
  for (int c = 0; c < kNumClasses; ++c) s += pct(r.classes[static_cast<size_t>(c)].ap) + " ";
  s += pct(r.map);
  return s;
}

}  // namespace detail

// ---- ablation grid over the two modules ----

struct AblationCell {
  bool dmae = false;
  bool xua = false;
  EvalReport report;
  double motion_accuracy = -1.0;  // -1 when the cell has no DMAE head
  std::vector<EpochLog> curve;
};

struct AblationResult {
  std::array<AblationCell, 4> cells;  // (--), (dmae), (xua), (dmae+xua)
  double baseline_motion_accuracy = 0.0;
  std::string split_hash;
  std::string config_hash;  // of the base config
  std::string table;
};

inline std::string format_ablation_table(const AblationResult& r) {
  std::ostringstream os;
  os << "DMAE X-UA |   Car    Ped    Cyc    mAP |   Car    Ped    Cyc    mAP\n";
  os << "          |          all area          |      driving corridor\n";
  os << "----------+----------------------------+----------------------------\n";
  for (const AblationCell& c : r.cells) {
    os << "   " << (c.dmae ? "x" : "-") << "    " << (c.xua ? "x" : "-") << " | "
       << detail::region_cells(c.report.all_area) << " | " << detail::region_cells(c.report.corridor)
       << "\n";
  }
  os << "\npoint-motion accuracy: velocity-threshold baseline " << detail::pct(r.baseline_motion_accuracy)
     << "%";
  for (const AblationCell& c : r.cells)
    if (c.motion_accuracy >= 0.0)
      os << ", DMAE" << (c.xua ? "+X-UA" : "") << " " << detail::pct(c.motion_accuracy) << "%";
  os << "\nsplit " << r.split_hash << " config " << r.config_hash << "\n";
  return os.str();
}

// Trains and evaluates the four-cell module grid on one dataset and seed.
inline AblationResult run_ablation(const RunConfig& base) {
  validate_run_config(base);
  AblationResult out;
  out.config_hash = config_hash(base);
  const ModelConfig base_model = model_config_from(base);
  Dataset data = build_dataset(base, base_model);
  out.split_hash = data.split_hash;

  MotionEval baseline;
  for (const SceneFrame* f : data.eval_frames)
    accumulate_baseline_motion(*f, base.sim.sensor.baseline_velocity_threshold, baseline);
  out.baseline_motion_accuracy = baseline.accuracy();

  const std::array<std::pair<bool, bool>, 4> grid{{{false, false}, {true, false}, {false, true}, {true, true}}};
  for (size_t ci = 0; ci < 4; ++ci) {
    RunConfig cell_cfg = base;
    cell_cfg.dmae = grid[ci].first;
    cell_cfg.xua = grid[ci].second;
    const ModelConfig mcfg = model_config_from(cell_cfg);
    AblationCell& cell = out.cells[ci];
    cell.dmae = cell_cfg.dmae;
    cell.xua = cell_cfg.xua;
    try {
      TrainResult tr = train_model(cell_cfg, data.train_plans);
      cell.curve = tr.curve;
      cell.report = evaluate_model(tr.params, mcfg, data.eval_plans, cell_cfg.eval);
      cell.report.seed = cell_cfg.seed;
      cell.report.config_hash = config_hash(cell_cfg);
      if (cell_cfg.dmae) {
        MotionEval me;
        for (const FramePlan& fp : data.eval_plans) accumulate_motion_eval(fp, tr.params, mcfg, me);
        cell.motion_accuracy = me.accuracy();
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("ablation cell (dmae=" + std::string(cell.dmae ? "on" : "off") +
                               ", xua=" + (cell.xua ? "on" : "off") + ") failed: " + e.what());
    }
  }
  out.table = format_ablation_table(out);
  return out;
}

inline ordered_json ablation_to_json(const AblationResult& r) {
  ordered_json j;
  j["config_hash"] = r.config_hash;
  j["split_hash"] = r.split_hash;
  j["baseline_motion_accuracy"] = r.baseline_motion_accuracy;
  ordered_json cells = ordered_json::array();
  for (const AblationCell& c : r.cells) {
    ordered_json cj;
    cj["dmae"] = c.dmae;
    cj["xua"] = c.xua;
    cj["report"] = report_to_json(c.report);
    if (c.motion_accuracy >= 0.0) cj["motion_accuracy"] = c.motion_accuracy;
    cj["curve"] = curve_to_json(c.curve);
    cells.push_back(cj);
  }
  j["cells"] = cells;
  return j;
}

// ---- lambda sweep (X-UA on, DMAE off) ----

struct SweepRow {
  double lambda = 0.0;
  EvalReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string split_hash;
  std::string config_hash;
  std::string table;
};

inline std::string format_sweep_table(const SweepResult& r) {
  std::ostringstream os;
  os << "lambda |   Car    Ped    Cyc    mAP |   Car    Ped    Cyc    mAP\n";
  os << "       |          all area          |      driving corridor\n";
  os << "-------+----------------------------+----------------------------\n";
  for (const SweepRow& row : r.rows) {
    char lbuf[16];
    std::snprintf(lbuf, sizeof(lbuf), "%6.3f", row.lambda);
    os << lbuf << " | " << detail::region_cells(row.report.all_area) << " | "
       << detail::region_cells(row.report.corridor) << "\n";
  }
  os << "\nsplit " << r.split_hash << " config " << r.config_hash << "\n";
  return os.str();
}

// One training + evaluation per lambda value, identical seeds and split.
// Matches the paper-style protocol: the sweep runs without the DMAE module.
inline SweepResult lambda_sweep(const RunConfig& base, const std::vector<double>& values) {
  validate_run_config(base);
  SweepResult out;
  RunConfig proto = base;
  proto.dmae = false;
  proto.xua = true;
  out.config_hash = config_hash(proto);
  const ModelConfig base_model = model_config_from(proto);
  Dataset data = build_dataset(proto, base_model);
  out.split_hash = data.split_hash;
  for (double lam : values) {
    RunConfig cfg = proto;
    cfg.lambda = lam;
    const ModelConfig mcfg = model_config_from(cfg);
    TrainResult tr = train_model(cfg, data.train_plans);
    SweepRow row;
    row.lambda = lam;
    row.report = evaluate_model(tr.params, mcfg, data.eval_plans, cfg.eval);
    row.report.seed = cfg.seed;
    row.report.config_hash = config_hash(cfg);
    out.rows.push_back(std::move(row));
  }
  out.table = format_sweep_table(out);
  return out;
}

inline ordered_json sweep_to_json(const SweepResult& r) {
  ordered_json j;
  j["config_hash"] = r.config_hash;
  j["split_hash"] = r.split_hash;
  ordered_json rows = ordered_json::array();
  for (const SweepRow& row : r.rows) {
    ordered_json rj;
    rj["lambda"] = row.lambda;
    rj["report"] = report_to_json(row.report);
    rows.push_back(rj);
  }
  j["rows"] = rows;
  return j;
}

// ---- dataset directory I/O ----

inline std::string frame_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d", index);
  return std::string(buf);
}

inline void write_dataset_dir(const std::string& dir, const std::vector<SceneFrame>& frames,
                              const std::string& cfg_hash, uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["config_hash"] = cfg_hash;
  manifest["seed"] = seed;
  manifest["frames"] = static_cast<int>(frames.size());
  ordered_json list = ordered_json::array();
  for (const SceneFrame& f : frames) {
    const std::string stem = frame_stem(f.frame_id);
    write_lidar_cloud(dir + "/" + stem + ".lidar.bin", f.lidar);
    write_radar_cloud(dir + "/" + stem + ".radar.bin", f.radar);
    write_labels(dir + "/" + stem + ".label.txt", f.annotations);
    list.push_back(stem);
  }
  manifest["files"] = list;
  write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

inline std::vector<SceneFrame> load_dataset_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string manifest_path = dir + "/manifest.json";
  if (!fs::exists(manifest_path))
    throw std::runtime_error("dataset directory '" + dir + "' has no manifest.json");
  std::ifstream in(manifest_path);
  ordered_json manifest = ordered_json::parse(in);
  std::vector<SceneFrame> frames;
  int id = 0;
  for (const auto& stem_j : manifest.at("files")) {
    const std::string stem = stem_j.get<std::string>();
    SceneFrame f;
    f.frame_id = id++;
    f.lidar = read_lidar_cloud(dir + "/" + stem + ".lidar.bin");
    f.radar = read_radar_cloud(dir + "/" + stem + ".radar.bin");
    f.annotations = read_labels(dir + "/" + stem + ".label.txt");
    // loaded frames carry no pathology metadata
    f.radar_dropped.assign(f.radar.points.size(), 0);
    f.radar_ghost.assign(f.radar.points.size(), 0);
    for (const ObjectSpec& o : f.annotations)
      f.corridor_flags.push_back(in_corridor(o.box) ? 1 : 0);
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace rldet
