#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "priorloc/cloud_io.hpp"
#include "priorloc/dataset_io.hpp"
#include "priorloc/eval.hpp"
#include "priorloc/pipeline.hpp"

namespace {

using namespace priorloc;
namespace fs = std::filesystem;

bool is_cloud_path(const std::string& path) {
  return path.ends_with(".pcd") || path.ends_with(".ply");
}

struct AblationFlags {
  bool no_dm = false;
  bool no_gf = false;
  bool no_nm = false;
  bool no_lc = false;
};

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const AblationFlags& ablate) {
  RunConfig cfg = load_run_config(config_path);
  if (ablate.no_dm) cfg.pipeline.enable_dm = false;
  if (ablate.no_gf) cfg.pipeline.enable_gf = false;
  if (ablate.no_nm) cfg.pipeline.enable_nm = false;
  if (ablate.no_lc) cfg.pipeline.enable_lc = false;
  const Dataset dataset = load_dataset(cfg.dataset_dir);
  const PipelineResult result = run(dataset, cfg.pipeline);
  write_run_outputs(result, out_dir);
  std::cout << "wrote " << result.trajectory.size() << " keyframe poses to "
            << out_dir << std::endl;
  return 0;
}

int cmd_evaluate(const std::string& est_path, const std::string& gt_path,
                 const std::string& config_path) {
  EvalConfig cfg;
  if (!config_path.empty()) {
    cfg = load_run_config(config_path).pipeline.eval;
  }

  if (is_cloud_path(est_path) != is_cloud_path(gt_path)) {
    throw DataError("--est and --gt must both be clouds or both trajectories");
  }

  EvalReport report;
  if (is_cloud_path(est_path)) {
    const PointCloud est = load_cloud(est_path).cloud;
    const PointCloud gt = load_cloud(gt_path).cloud;
    const SpatialIndex gt_index(gt);
    const AccuracyResult acc = accuracy(est, gt_index, cfg);
    report.ac = acc.ac;
    report.inlier_ratio = acc.inlier_ratio;
    report.histogram = acc.histogram;
    report.cd = chamfer(est, gt, cfg);
    const PointCloud errors = error_map(est, gt_index, cfg);
    const fs::path err_path =
        fs::path(est_path).replace_extension(".error.pcd");
    save_cloud(errors, err_path.string());
  } else {
    const Trajectory est = load_tum(est_path);
    const Trajectory gt = load_tum(gt_path);
    const AteResult a = ate(est, gt, cfg);
    report.ate_rmse = a.rmse;
    report.ate_errors = a.per_pose_errors;
    const RpeResult r = rpe(est, gt, cfg);
    report.rpe_trans = r.trans_rmse;
    report.rpe_rot = r.rot_rmse;
  }
  std::cout << report.to_json() << std::endl;
  return 0;
}

int cmd_simulate(const std::string& spec_path, const std::string& out_dir) {
  const SceneSpec spec = load_scene_spec(spec_path);
  const Simulation sim = simulate(spec);
  save_dataset(sim.dataset, out_dir, &sim.ground_truth);
  std::cout << "wrote " << sim.dataset.frames.size() << " frames to "
            << out_dir << std::endl;
  return 0;
}

// Degeneracy time series from frame_reports.jsonl as a standalone SVG plus
// aggregate summary.json.
int cmd_report(const std::string& run_dir) {
  const fs::path root(run_dir);
  std::ifstream in(root / "frame_reports.jsonl");
  if (!in) {
    throw DataError("cannot open " + (root / "frame_reports.jsonl").string());
  }

  std::vector<double> kappa_rot, kappa_trans;
  std::vector<int> frame_ids;
  int dm_added = 0, dm_attempted = 0, static_frames = 0, loops = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("frame_reports.jsonl: " + std::string(e.what()));
    }
    frame_ids.push_back(j.value("frame_id", -1));
    kappa_rot.push_back(j["degeneracy"].value("kappa_rot", 1.0));
    kappa_trans.push_back(j["degeneracy"].value("kappa_trans", 1.0));
    dm_attempted += j.value("dm_attempted", false) ? 1 : 0;
    dm_added += j.value("dm_added", false) ? 1 : 0;
    static_frames += j.value("is_static", false) ? 1 : 0;
    loops += j.value("loop_added", false) ? 1 : 0;
  }
  if (frame_ids.empty()) throw DataError("frame_reports.jsonl is empty");

  const int width = 800, height = 300, margin = 50;
  const double n = static_cast<double>(frame_ids.size());
  double kmax = 1.0;
  for (size_t i = 0; i < kappa_rot.size(); ++i) {
    kmax = std::max({kmax, kappa_rot[i], kappa_trans[i]});
  }
  kmax = std::min(kmax, 1e6);
  const auto x_of = [&](size_t i) {
    return margin + (width - 2 * margin) * (n > 1 ? i / (n - 1) : 0.5);
  };
  const auto y_of = [&](double k) {
    const double v = std::log10(std::max(1.0, std::min(k, kmax)));
    const double vmax = std::log10(kmax);
    return height - margin -
           (height - 2 * margin) * (vmax > 0 ? v / vmax : 0.0);
  };
  const auto polyline = [&](const std::vector<double>& ks) {
    std::ostringstream os;
    for (size_t i = 0; i < ks.size(); ++i) {
      os << (i ? " " : "") << x_of(i) << "," << y_of(ks[i]);
    }
    return os.str();
  };

  std::ofstream svg(root / "kappa.svg");
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << margin << "\" y=\"20\" font-size=\"13\">"
      << "condition numbers per keyframe (log scale)</text>\n"
      << "<line x1=\"" << margin << "\" y1=\"" << height - margin
      << "\" x2=\"" << width - margin << "\" y2=\"" << height - margin
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\""
      << margin << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << margin << "\" y1=\"" << y_of(30.0) << "\" x2=\""
      << width - margin << "\" y2=\"" << y_of(30.0)
      << "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n"
      << "<polyline fill=\"none\" stroke=\"steelblue\" points=\""
      << polyline(kappa_rot) << "\"/>\n"
      << "<polyline fill=\"none\" stroke=\"firebrick\" points=\""
      << polyline(kappa_trans) << "\"/>\n"
      << "<text x=\"" << width - margin - 150 << "\" y=\"" << margin
      << "\" font-size=\"12\" fill=\"steelblue\">rotation</text>\n"
      << "<text x=\"" << width - margin - 150 << "\" y=\"" << margin + 16
      << "\" font-size=\"12\" fill=\"firebrick\">translation</text>\n"
      << "</svg>\n";

  nlohmann::json summary;
  summary["keyframes"] = frame_ids.size();
  summary["dm_attempted"] = dm_attempted;
  summary["dm_added"] = dm_added;
  summary["static_frames"] = static_frames;
  summary["loop_closures"] = loops;
  summary["kappa_trans_max"] =
      *std::max_element(kappa_trans.begin(), kappa_trans.end());
  summary["kappa_rot_max"] =
      *std::max_element(kappa_rot.begin(), kappa_rot.end());
  std::ofstream(root / "summary.json") << summary.dump(2) << "\n";

  std::cout << "wrote kappa.svg and summary.json to " << run_dir << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prior-map localization toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, est_path, gt_path, spec_path, run_dir;

  auto* run_cmd = app.add_subcommand("run", "run the localization pipeline");
  run_cmd->add_option("--config", config_path, "run config (JSON)")->required();
  run_cmd->add_option("--out", out_dir, "output directory")->required();
  AblationFlags ablate;
  run_cmd->add_flag("--no-dm", ablate.no_dm, "disable map registration factors");
  run_cmd->add_flag("--no-gf", ablate.no_gf, "disable gravity factors");
  run_cmd->add_flag("--no-nm", ablate.no_nm, "disable no-motion factors");
  run_cmd->add_flag("--no-lc", ablate.no_lc, "disable loop closures");

  auto* eval_cmd = app.add_subcommand("evaluate", "trajectory or map metrics");
  eval_cmd->add_option("--est", est_path, "estimated trajectory or cloud")
      ->required();
  eval_cmd->add_option("--gt", gt_path, "ground-truth trajectory or cloud")
      ->required();
  eval_cmd->add_option("--config", config_path, "run config (JSON)");

  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim_cmd->add_option("--spec", spec_path, "scene spec (JSON)")->required();
  sim_cmd->add_option("--out", out_dir, "output dataset directory")->required();

  auto* report_cmd = app.add_subcommand("report", "degeneracy plots and summary");
  report_cmd->add_option("--run", run_dir, "run output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(config_path, out_dir, ablate);
    if (eval_cmd->parsed()) return cmd_evaluate(est_path, gt_path, config_path);
    if (sim_cmd->parsed()) return cmd_simulate(spec_path, out_dir);
    if (report_cmd->parsed()) return cmd_report(run_dir);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return 2;
  } catch (const CloudIoError& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return 2;
  } catch (const TrajectoryError& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << std::endl;
    return 3;
  }
  return 1;
}
