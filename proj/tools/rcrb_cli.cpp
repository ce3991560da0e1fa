// rcrb: render-aware pose Cramer-Rao bounds from the command line.
//
// Exit codes: 0 success, 1 usage or runtime error, 2 malformed input file,
// 3 dimension mismatch, 4 a checked experiment property did not hold.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rcrb.hpp"
#include "rcrb/io.hpp"

namespace {

using namespace rcrb;
using io::json;

constexpr int kExitError = 1;
constexpr int kExitParse = 2;
constexpr int kExitDimension = 3;
constexpr int kExitCheck = 4;

struct SceneInputs {
  std::string scene;
  std::string features;
  std::string camera;
  std::string pose;
  std::string noise_file;
  double noise_var = 1e-4;
  std::string pixels = "all";
  std::string pixels_file;

  void add_to(CLI::App* cmd, bool with_noise = true) {
    cmd->add_option("--scene", scene, "Splat scene JSON");
    cmd->add_option("--features", features, "Feature-point scene JSON (bundle-adjustment mode)");
    cmd->add_option("--camera", camera, "Camera JSON");
    cmd->add_option("--pose", pose, "World-to-camera pose JSON (default identity)");
    if (with_noise) {
      cmd->add_option("--noise-var", noise_var, "Isotropic noise variance")->capture_default_str();
      cmd->add_option("--noise", noise_file, "Noise model JSON (overrides --noise-var)");
    }
    cmd->add_option("--pixels", pixels, "Pixel subset: all | stride:N")->capture_default_str();
    cmd->add_option("--pixels-file", pixels_file, "JSON array of pixel (or point) indices");
  }

  bool has_model() const { return !scene.empty() || !features.empty(); }

  MeasurementModel model() const {
    if (camera.empty()) throw ParseError("--camera is required");
    const auto cam = io::camera_from_json(io::read_json_file(camera));
    if (!scene.empty()) return PhotometricModel{io::splat_scene_from_json(io::read_json_file(scene)), cam};
    if (!features.empty()) return FeatureModel{io::feature_scene_from_json(io::read_json_file(features)), cam};
    throw ParseError("one of --scene or --features is required");
  }

  Pose pose_value() const { return pose.empty() ? Pose::identity() : io::pose_from_json(io::read_json_file(pose)); }

  NoiseModel noise() const {
    if (!noise_file.empty()) return io::noise_from_json(io::read_json_file(noise_file));
    if (!(noise_var > 0.0)) throw ParseError("--noise-var must be positive");
    return IsotropicVariance{noise_var};
  }

  PixelSubset subset() const {
    if (!pixels_file.empty()) {
      const auto j = io::read_json_file(pixels_file);
      try {
        return PixelSubset::indices(j.get<std::vector<std::size_t>>());
      } catch (const json::exception& e) {
        throw ParseError(std::string("pixel index file: ") + e.what());
      }
    }
    if (pixels == "all") return PixelSubset::all();
    if (pixels.starts_with("stride:")) {
      try {
        const long n = std::stol(pixels.substr(7));
        if (n >= 1) return PixelSubset::stride(static_cast<std::size_t>(n));
      } catch (const std::exception&) {
      }
    }
    throw ParseError("--pixels must be 'all' or 'stride:N' with N >= 1");
  }
};

struct TrialOptions {
  int trials = 200;
  double noise_sigma = 0.01;
  double rot_scale = 0.05;
  double trans_scale = 0.05;
  int max_iters = 50;
  double grad_tol = 1e-9;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--trials", trials, "Number of Monte Carlo trials")->capture_default_str();
    cmd->add_option("--noise-sigma", noise_sigma, "Pixel noise standard deviation")->capture_default_str();
    cmd->add_option("--rot-scale", rot_scale, "Rotation perturbation std (rad)")->capture_default_str();
    cmd->add_option("--trans-scale", trans_scale, "Translation perturbation std")->capture_default_str();
    cmd->add_option("--max-iters", max_iters, "Gauss-Newton iteration cap")->capture_default_str();
    cmd->add_option("--grad-tol", grad_tol, "Gauss-Newton decrement tolerance")->capture_default_str();
  }

  TrialConfig config(std::uint64_t seed, unsigned threads, const PixelSubset& pixels) const {
    TrialConfig cfg;
    cfg.n_trials = trials;
    cfg.noise_sigma = noise_sigma;
    cfg.rotation_scale = rot_scale;
    cfg.translation_scale = trans_scale;
    cfg.optimizer.max_iters = max_iters;
    cfg.optimizer.grad_tol = grad_tol;
    cfg.seed = seed;
    cfg.threads = threads;
    cfg.pixels = pixels;
    return cfg;
  }
};

// Writes to the file when a path is given, otherwise to stdout.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

std::string axis_name(int i) {
  static const char* names[] = {"tx", "ty", "tz", "rx", "ry", "rz"};
  return names[i];
}

void print_summary(std::ostream& os, const CrbReport& r) {
  os << "rank " << r.rank << "/6";
  if (r.ridge_used > 0.0) os << " (ridge " << r.ridge_used << ")";
  os << "\n";
  for (int i = 0; i < 3; ++i) os << "  sigma " << axis_name(i) << " = " << r.sigma_translation_units[i] << " units\n";
  for (int i = 0; i < 3; ++i) os << "  sigma " << axis_name(i + 3) << " = " << r.sigma_rotation_deg[i] << " deg\n";
  os << "  eigenvalues:";
  for (int i = 0; i < 6; ++i) os << ' ' << r.eigenvalues[i];
  os << "\n";
  for (Eigen::Index k = 0; k < r.nullspace_basis.cols(); ++k) {
    Eigen::Index dominant = 0;
    r.nullspace_basis.col(k).cwiseAbs().maxCoeff(&dominant);
    os << "  unbounded direction " << k << " (mostly " << axis_name(static_cast<int>(dominant)) << "):";
    for (int i = 0; i < 6; ++i) os << ' ' << r.nullspace_basis(i, k);
    os << "\n";
  }
}

std::vector<TileBlock> scenario_blocks(const io::Scenario& s) {
  std::vector<TileBlock> blocks;
  for (const auto& a : s.agents) {
    const MeasurementModel model = PhotometricModel{s.scene, a.camera};
    auto tiles = tile_infos(model, s.agent_pose(a), a.noise, a.tiles, a.relative_pose, a.id);
    blocks.insert(blocks.end(), tiles.begin(), tiles.end());
  }
  return blocks;
}

io::Scenario load_scenario(const std::string& path) {
  if (path.empty()) throw ParseError("--scenario is required");
  const auto base = std::filesystem::path(path).parent_path().string();
  return io::scenario_from_json(io::read_json_file(path), base.empty() ? "." : base);
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ParseError("--levels must be a comma-separated list of numbers");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Render-aware Cramer-Rao bounds on camera pose"};
  app.require_subcommand(1);

  std::uint64_t seed = 42;
  unsigned threads = 1;
  std::string out_path;
  double ridge = 0.0;
  double rank_tol = kDefaultRankTol;
  app.add_option("--seed", seed, "Random seed")->capture_default_str();
  app.add_option("--threads", threads, "Worker thread cap (0 = all cores)")->capture_default_str();

  // fim
  SceneInputs fim_in;
  std::string render_out;
  auto* fim_cmd = app.add_subcommand("fim", "Assemble the pose Fisher information");
  fim_in.add_to(fim_cmd);
  fim_cmd->add_option("--out", out_path, "Output JSON path (default stdout)");
  fim_cmd->add_option("--render-out", render_out, "Also write the rendered image as CSV");

  // crb
  SceneInputs crb_in;
  std::string fim_file;
  auto* crb_cmd = app.add_subcommand("crb", "Cramer-Rao bound from a FIM file or a scene");
  crb_in.add_to(crb_cmd);
  crb_cmd->add_option("--fim", fim_file, "FisherInfo JSON (instead of scene inputs)");
  crb_cmd->add_option("--out", out_path, "Output JSON path (default stdout)");
  crb_cmd->add_option("--ridge", ridge, "Ridge added when the information is singular")->capture_default_str();
  crb_cmd->add_option("--rank-tol", rank_tol, "Relative eigenvalue rank tolerance")->capture_default_str();

  // fuse
  std::string scenario_path;
  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse per-agent information of a scenario");
  fuse_cmd->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  fuse_cmd->add_option("--out", out_path, "Output JSON path (default stdout)");
  fuse_cmd->add_option("--ridge", ridge, "Ridge added when the information is singular")->capture_default_str();
  fuse_cmd->add_option("--rank-tol", rank_tol, "Relative eigenvalue rank tolerance")->capture_default_str();

  // select
  bool oracle = false;
  auto* select_cmd = app.add_subcommand("select", "Budgeted greedy tile selection");
  select_cmd->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  select_cmd->add_option("--out", out_path, "Selection CSV path (default stdout)");
  select_cmd->add_flag("--oracle", oracle, "Cross-check against exhaustive search (<= 20 tiles)");

  // validate
  SceneInputs val_in;
  TrialOptions val_opts;
  std::string summary_path;
  auto* validate_cmd = app.add_subcommand("validate", "Perturb-and-align Monte Carlo trials");
  val_in.add_to(validate_cmd, false);
  val_opts.add_to(validate_cmd);
  validate_cmd->add_option("--out", out_path, "Trials CSV path (default stdout)");
  validate_cmd->add_option("--summary", summary_path, "Summary JSON path (default stderr)");

  // calibrate
  SceneInputs cal_in;
  TrialOptions cal_opts;
  std::string trials_file;
  std::string crb_file;
  std::string levels_text = "0.5,0.8,0.9,0.95";
  std::size_t synthetic = 0;
  double cov_scale = 1.0;
  bool restrict_range = false;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Coverage of CRB ellipsoids");
  cal_in.add_to(calibrate_cmd, false);
  cal_opts.add_to(calibrate_cmd);
  calibrate_cmd->add_option("--trials-file", trials_file, "Reuse a trials CSV instead of running trials");
  calibrate_cmd->add_option("--crb", crb_file, "CrbReport JSON (default: computed from the scene)");
  calibrate_cmd->add_option("--levels", levels_text, "Nominal levels, comma-separated")->capture_default_str();
  calibrate_cmd->add_option("--synthetic", synthetic, "Draw this many errors from the CRB instead of trials");
  calibrate_cmd->add_option("--cov-scale", cov_scale, "Multiply the covariance before testing coverage")
      ->capture_default_str();
  calibrate_cmd->add_flag("--restrict-to-range", restrict_range, "Test on the covariance range when singular");
  calibrate_cmd->add_option("--out", out_path, "Calibration CSV path (default stdout)");

  // sweep
  std::string high_path;
  std::string low_path;
  std::string sweep_camera;
  std::string sweep_pose;
  TrialOptions sweep_opts;
  double feature_sigma = 1.0;
  auto* sweep_cmd = app.add_subcommand("sweep", "CRB / empirical / BA table for high- and low-texture scenes");
  sweep_cmd->add_option("--high", high_path, "High-texture splat scene JSON")->required();
  sweep_cmd->add_option("--low", low_path, "Low-texture splat scene JSON")->required();
  sweep_cmd->add_option("--camera", sweep_camera, "Camera JSON")->required();
  sweep_cmd->add_option("--pose", sweep_pose, "Pose JSON (default identity)");
  sweep_cmd->add_option("--feature-sigma", feature_sigma, "Feature noise std in pixels for BA rows")
      ->capture_default_str();
  sweep_opts.add_to(sweep_cmd);
  sweep_cmd->add_option("--out", out_path, "Sweep CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    if (*fim_cmd) {
      const auto model = fim_in.model();
      const auto info = assemble_fim(model, fim_in.pose_value(), fim_in.noise(), fim_in.subset());
      if (!render_out.empty()) {
        const auto* pm = std::get_if<PhotometricModel>(&model);
        if (pm == nullptr) throw ParseError("--render-out needs a splat scene");
        std::ofstream img(render_out);
        io::write_image_csv(img, render(pm->scene, pm->camera, fim_in.pose_value()));
      }
      emit(out_path, io::to_json(info).dump(2) + "\n");
      const auto ident = identifiability(info);
      std::cerr << "pixels " << info.pixel_count << " (rate " << info.subsample_rate << "), rank " << ident.rank
                << "/6\n";
    } else if (*crb_cmd) {
      FisherInfo info;
      if (!fim_file.empty()) {
        info = io::fisher_from_json(io::read_json_file(fim_file));
      } else {
        info = assemble_fim(crb_in.model(), crb_in.pose_value(), crb_in.noise(), crb_in.subset());
      }
      const auto report = crb(info, ridge, rank_tol);
      emit(out_path, io::to_json(report).dump(2) + "\n");
      print_summary(std::cerr, report);
    } else if (*fuse_cmd) {
      const auto s = load_scenario(scenario_path);
      std::vector<AgentObservation> obs;
      json agents = json::array();
      for (const auto& a : s.agents) {
        const MeasurementModel model = PhotometricModel{s.scene, a.camera};
        AgentObservation o{a.id, assemble_fim(model, s.agent_pose(a), a.noise, PixelSubset::all()), a.relative_pose};
        const auto global = transport(o);
        agents.push_back({{"id", a.id}, {"fim", io::to_json(global)}, {"crb", io::to_json(crb(global, ridge, rank_tol))}});
        obs.push_back(std::move(o));
      }
      const auto fused = fuse(obs);
      const auto report = crb(fused, ridge, rank_tol);
      emit(out_path, json{{"fused", {{"fim", io::to_json(fused)}, {"crb", io::to_json(report)}}}, {"agents", agents}}.dump(2) +
                         "\n");
      std::cerr << "fused over " << s.agents.size() << " agents: ";
      print_summary(std::cerr, report);
    } else if (*select_cmd) {
      const auto s = load_scenario(scenario_path);
      const auto blocks = scenario_blocks(s);
      const auto greedy = select_greedy(blocks, s.budget, s.objective);
      std::ostringstream csv;
      io::write_selection_csv(csv, greedy);
      emit(out_path, csv.str());
      const auto random = select_random(blocks, s.budget, s.objective, greedy.selected.size(), seed);
      const auto per_agent = select_per_agent(blocks, s.budget, s.objective);
      std::cerr << "greedy " << io::format_double(greedy.objective_value) << " random "
                << io::format_double(random.objective_value) << " per-agent "
                << io::format_double(per_agent.objective_value) << " (" << blocks.size() << " tiles)\n";
      if (oracle) {
        const auto best = select_exhaustive(blocks, s.budget, s.objective);
        const bool match = best.objective_value == greedy.objective_value;
        std::cerr << "oracle " << io::format_double(best.objective_value) << " greedy_matches_oracle "
                  << (match ? "yes" : "no") << "\n";
        if (s.objective.kind == SelectionObjective::Kind::Trace && !match) return kExitCheck;
      }
    } else if (*validate_cmd) {
      const auto model = val_in.model();
      const auto pose = val_in.pose_value();
      const auto cfg = val_opts.config(seed, threads, val_in.subset());
      const auto results = perturb_and_align(model, pose, cfg);
      std::ostringstream csv;
      io::write_trials_csv(csv, results);
      emit(out_path, csv.str());
      const auto summary = summarize(results);
      const auto bound = crb(assemble_fim(model, pose, IsotropicVariance{cfg.noise_sigma * cfg.noise_sigma}, cfg.pixels));
      const Vector6d sig = bound.covariance.diagonal().cwiseSqrt();
      const json j{{"trials", summary.total},
                   {"converged", summary.converged},
                   {"convergence_rate", summary.convergence_rate()},
                   {"empirical_rmse", std::vector<double>(summary.rmse.data(), summary.rmse.data() + 6)},
                   {"crb_sigma", std::vector<double>(sig.data(), sig.data() + 6)}};
      if (summary_path.empty()) {
        std::cerr << j.dump(2) << "\n";
      } else {
        io::write_json_file(summary_path, j);
      }
    } else if (*calibrate_cmd) {
      const auto levels = parse_levels(levels_text);
      Matrix6d cov;
      std::optional<MeasurementModel> model;
      const auto cfg = cal_opts.config(seed, threads, cal_in.subset());
      if (!crb_file.empty()) {
        cov = io::crb_report_from_json(io::read_json_file(crb_file)).covariance;
      } else {
        model = cal_in.model();
        cov = crb(assemble_fim(*model, cal_in.pose_value(), IsotropicVariance{cfg.noise_sigma * cfg.noise_sigma}, cfg.pixels))
                  .covariance;
      }
      std::vector<TrialResult> results;
      if (synthetic > 0) {
        results = draw_gaussian_errors(cov, synthetic, seed);
      } else if (!trials_file.empty()) {
        std::ifstream in(trials_file);
        if (!in) throw ParseError("cannot open '" + trials_file + "'");
        results = io::read_trials_csv(in);
      } else {
        if (!model) model = cal_in.model();
        results = perturb_and_align(*model, cal_in.pose_value(), cfg);
      }
      const auto curve = calibrate(results, cov_scale * cov, levels, restrict_range);
      std::ostringstream csv;
      io::write_calibration_csv(csv, curve);
      emit(out_path, csv.str());
    } else if (*sweep_cmd) {
      const auto cam = io::camera_from_json(io::read_json_file(sweep_camera));
      const auto pose = sweep_pose.empty() ? Pose::identity() : io::pose_from_json(io::read_json_file(sweep_pose));
      std::vector<SweepScene> scenes_in;
      for (const auto& [tag, path] : {std::pair{"high", high_path}, std::pair{"low", low_path}}) {
        const auto scene = io::splat_scene_from_json(io::read_json_file(path));
        scenes_in.push_back({tag, PhotometricModel{scene, cam}, scenes::features_from(scene), pose});
      }
      const auto sweep = texture_sweep(scenes_in, sweep_opts.config(seed, threads, PixelSubset::all()),
                                       feature_sigma * feature_sigma);
      std::ostringstream csv;
      io::write_sweep_csv(csv, sweep);
      emit(out_path, csv.str());
      std::cerr << "CRB trace high " << sweep.crb_trace[0] << " low " << sweep.crb_trace[1] << " ordering "
                << (sweep.ordering_holds ? "holds" : "VIOLATED") << "\n";
      if (!sweep.ordering_holds) return kExitCheck;
    }
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitParse;
  } catch (const DimensionMismatch& e) {
    std::cerr << "dimension mismatch: " << e.what() << "\n";
    return kExitDimension;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return 0;
}
