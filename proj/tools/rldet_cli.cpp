// rldet: synthetic radar/LiDAR fusion detection pipeline driver.
//
// Subcommands: simulate, train, eval, ablate, sweep-lambda, gradcheck, plot.
// Every artifact lands under --out together with the resolved config and its
// hash, so any run can be reproduced from its output directory alone.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "rldet/experiments.hpp"
#include "rldet/gradcheck.hpp"
#include "rldet/plot.hpp"

namespace fs = std::filesystem;
using namespace rldet;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::string data_dir;
  // overrides; -1 / NaN / empty mean "keep config value"
  int64_t seed = -1;
  std::string dmae;
  std::string xua;
  double lambda = -1.0;
  int epochs = -1;
  int frames = -1;
  int train_frames = -1;
  int eval_frames = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_out = true) {
  cmd->add_option("--config", o.config_path, "config file (sectioned key=value)");
  if (with_out) cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--data", o.data_dir, "dataset directory (overrides simulation)");
  cmd->add_option("--seed", o.seed, "override run seed");
  cmd->add_option("--dmae", o.dmae, "override DMAE module (on|off)")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--xua", o.xua, "override X-UA module (on|off)")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--lambda", o.lambda, "override X-UA lambda");
  cmd->add_option("--epochs", o.epochs, "override training epochs");
  cmd->add_option("--frames", o.frames, "override synthetic frame count");
  cmd->add_option("--train-frames", o.train_frames, "override training split size");
  cmd->add_option("--eval-frames", o.eval_frames, "override evaluation split size");
}

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  if (o.seed >= 0) cfg.seed = static_cast<uint64_t>(o.seed);
  if (!o.dmae.empty()) cfg.dmae = o.dmae == "on";
  if (!o.xua.empty()) cfg.xua = o.xua == "on";
  if (o.lambda >= 0.0) cfg.lambda = o.lambda;
  if (o.epochs > 0) cfg.epochs = o.epochs;
  if (o.frames > 0) cfg.frames = o.frames;
  if (o.train_frames > 0) cfg.train_frames = o.train_frames;
  if (o.eval_frames > 0) cfg.eval_frames = o.eval_frames;
  if (!o.data_dir.empty()) cfg.dataset_dir = o.data_dir;
  validate_run_config(cfg);
  return cfg;
}

void write_resolved_config(const std::string& out_dir, const RunConfig& cfg) {
  fs::create_directories(out_dir);
  save_run_config(out_dir + "/config.ini", cfg);
}

std::string format_report_table(const EvalReport& r) {
  std::ostringstream os;
  os << "region   |   Car    Ped    Cyc    mAP\n";
  os << "---------+----------------------------\n";
  os << "all      | " << rldet::detail::region_cells(r.all_area) << "\n";
  os << "corridor | " << rldet::detail::region_cells(r.corridor) << "\n";
  return os.str();
}

int cmd_simulate(const CommonOpts& o) {
  RunConfig cfg = resolve_config(o);
  const std::string hash = config_hash(cfg);
  std::vector<SceneFrame> frames = gen_dataset(cfg.seed, cfg.frames, cfg.sim);
  write_dataset_dir(o.out_dir, frames, hash, cfg.seed);
  write_resolved_config(o.out_dir, cfg);
  std::cout << "wrote " << frames.size() << " frames to " << o.out_dir << " (config " << hash
            << ")\n";
  return 0;
}

int cmd_train(const CommonOpts& o) {
  RunConfig cfg = resolve_config(o);
  const std::string hash = config_hash(cfg);
  const ModelConfig mcfg = model_config_from(cfg);
  write_resolved_config(o.out_dir, cfg);
  Dataset data = build_dataset(cfg, mcfg);
  std::cout << "training on " << data.train_plans.size() << " frames, evaluating on "
            << data.eval_plans.size() << " (split " << data.split_hash << ")\n";

  TrainResult result = train_model(cfg, data.train_plans, [&](const TrainResult& tr, const EpochLog& e) {
    std::printf("epoch %3d  total %.4f  lidar %.4f  radar %.4f  motion %.4f\n", e.epoch, e.total,
                e.lidar_det, e.radar_det, e.motion);
    ModelParams snapshot = tr.params;
    char name[64];
    std::snprintf(name, sizeof(name), "/checkpoint_e%03d.bin", e.epoch);
    save_checkpoint(o.out_dir + name, make_checkpoint(snapshot, tr.opt_state, hash, e.epoch));
  });
  save_checkpoint(o.out_dir + "/checkpoint.bin",
                  make_checkpoint(result.params, result.opt_state, hash, cfg.epochs - 1));
  write_text_file(o.out_dir + "/loss_curves.json", curve_to_json(result.curve).dump(2) + "\n");

  EvalReport report = evaluate_model(result.params, mcfg, data.eval_plans, cfg.eval);
  report.seed = cfg.seed;
  report.config_hash = hash;
  write_text_file(o.out_dir + "/metrics.json", report_to_json(report).dump(2) + "\n");
  write_text_file(o.out_dir + "/table.txt", format_report_table(report));
  std::cout << format_report_table(report);
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& checkpoint_path, bool force) {
  RunConfig cfg = resolve_config(o);
  const std::string hash = config_hash(cfg);
  const ModelConfig mcfg = model_config_from(cfg);
  Checkpoint ck = load_checkpoint(checkpoint_path);
  if (ck.config_hash != hash) {
    if (!force)
      throw std::runtime_error("checkpoint config hash " + ck.config_hash +
                               " does not match supplied config " + hash +
                               " (pass --force to evaluate anyway)");
    std::cerr << "warning: evaluating checkpoint " << ck.config_hash << " under config " << hash
              << "\n";
  }
  ModelParams params = init_model_params(mcfg, cfg.seed);
  restore_checkpoint(ck, params);
  Dataset data = build_dataset(cfg, mcfg);
  EvalReport report = evaluate_model(params, mcfg, data.eval_plans, cfg.eval);
  report.seed = cfg.seed;
  report.config_hash = hash;
  write_resolved_config(o.out_dir, cfg);
  write_text_file(o.out_dir + "/metrics.json", report_to_json(report).dump(2) + "\n");
  write_text_file(o.out_dir + "/table.txt", format_report_table(report));
  std::cout << format_report_table(report);
  return 0;
}

int cmd_ablate(const CommonOpts& o) {
  RunConfig cfg = resolve_config(o);
  write_resolved_config(o.out_dir, cfg);
  AblationResult r = run_ablation(cfg);
  write_text_file(o.out_dir + "/ablation.json", ablation_to_json(r).dump(2) + "\n");
  write_text_file(o.out_dir + "/ablation_table.txt", r.table);
  std::cout << r.table;
  return 0;
}

int cmd_sweep(const CommonOpts& o, std::vector<double> values) {
  RunConfig cfg = resolve_config(o);
  if (values.empty()) values = {0.001, 0.1, 0.5, 1.0};
  write_resolved_config(o.out_dir, cfg);
  SweepResult r = lambda_sweep(cfg, values);
  write_text_file(o.out_dir + "/sweep.json", sweep_to_json(r).dump(2) + "\n");
  write_text_file(o.out_dir + "/sweep_table.txt", r.table);
  std::cout << r.table;
  return 0;
}

int cmd_gradcheck() {
  const auto items = run_gradcheck_battery();
  int failures = 0;
  for (const GradCheckItem& it : items) {
    std::printf("[%s] %-28s max rel err %.3e (tol %.0e)\n", it.passed() ? "PASS" : "FAIL",
                it.name.c_str(), it.max_rel_error, it.tolerance);
    failures += it.passed() ? 0 : 1;
  }
  if (failures) std::cerr << "error: gradcheck: " << failures << " check(s) failed\n";
  return failures ? 1 : 0;
}

int cmd_plot(const std::string& metrics_path, const std::string& out_path,
             const std::string& title) {
  std::ifstream in(metrics_path);
  if (!in) throw std::runtime_error("cannot open metrics file '" + metrics_path + "'");
  ordered_json j = ordered_json::parse(in);
  write_text_file(out_path, plot_metrics_json(j, title.empty() ? metrics_path : title));
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic radar/LiDAR fusion detection pipeline"};
  app.require_subcommand(1);

  CommonOpts sim_o, train_o, eval_o, abl_o, sweep_o;
  std::string checkpoint_path, metrics_path, plot_out = "plot.svg", plot_title;
  bool force = false;
  std::vector<double> sweep_values;

  CLI::App* c_sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  add_common(c_sim, sim_o);
  CLI::App* c_train = app.add_subcommand("train", "train a model and evaluate the held-out split");
  add_common(c_train, train_o);
  CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(c_eval, eval_o);
  c_eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  c_eval->add_flag("--force", force, "evaluate even if the config hash mismatches");
  CLI::App* c_abl = app.add_subcommand("ablate", "train and evaluate the 2x2 module grid");
  add_common(c_abl, abl_o);
  CLI::App* c_sweep = app.add_subcommand("sweep-lambda", "lambda sweep with X-UA on, DMAE off");
  add_common(c_sweep, sweep_o);
  c_sweep->add_option("--values", sweep_values, "lambda values");
  CLI::App* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  (void)c_grad;
  CLI::App* c_plot = app.add_subcommand("plot", "render metrics JSON to SVG");
  c_plot->add_option("--metrics", metrics_path, "metrics JSON file")->required();
  c_plot->add_option("--out", plot_out, "output SVG path");
  c_plot->add_option("--title", plot_title, "plot title");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_sim->parsed()) return cmd_simulate(sim_o);
    if (c_train->parsed()) return cmd_train(train_o);
    if (c_eval->parsed()) return cmd_eval(eval_o, checkpoint_path, force);
    if (c_abl->parsed()) return cmd_ablate(abl_o);
    if (c_sweep->parsed()) return cmd_sweep(sweep_o, sweep_values);
    if (c_grad->parsed()) return cmd_gradcheck();
    if (c_plot->parsed()) return cmd_plot(metrics_path, plot_out, plot_title);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
