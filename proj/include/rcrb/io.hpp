#pragma once

// JSON and CSV formats for scenes, cameras, poses, noise models, Fisher
// information, CRB reports, multi-agent scenarios and experiment outputs.

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "rcrb/error.hpp"
#include "rcrb/fisher.hpp"
#include "rcrb/multiagent.hpp"
#include "rcrb/renderer.hpp"
#include "rcrb/se3.hpp"
#include "rcrb/validation.hpp"

namespace rcrb::io {

using nlohmann::json;

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

template <typename T>
T get_field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("field '") + key + "': " + e.what());
  }
}

inline Eigen::VectorXd to_vector(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(std::string(what) + " must contain numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  if (!v.allFinite()) throw ParseError(std::string(what) + " must be finite");
  return v;
}

inline Eigen::Vector3d to_vec3(const json& j, const char* what) {
  const auto v = to_vector(j, what);
  if (v.size() != 3) throw ParseError(std::string(what) + " must have 3 entries");
  return v;
}

template <typename Derived>
json from_vector(const Eigen::MatrixBase<Derived>& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace detail

inline json matrix_to_json(const Matrix6d& m) {
  json out = json::array();
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) out.push_back(m(r, c));
  }
  return out;
}

/// Accepts 36 row-major numbers or 6 rows of 6.
inline Matrix6d matrix_from_json(const json& j) {
  Matrix6d m;
  if (j.is_array() && j.size() == 6 && j[0].is_array()) {
    for (int r = 0; r < 6; ++r) {
      const auto row = detail::to_vector(j[static_cast<std::size_t>(r)], "matrix row");
      if (row.size() != 6) throw ParseError("matrix rows must have 6 entries");
      m.row(r) = row.transpose();
    }
    return m;
  }
  const auto flat = detail::to_vector(j, "matrix");
  if (flat.size() != 36) throw ParseError("6x6 matrix needs 36 entries");
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) m(r, c) = flat[r * 6 + c];
  }
  return m;
}

inline json to_json(const Camera& cam) {
  return {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy}, {"width", cam.width}, {"height", cam.height}};
}

inline Camera camera_from_json(const json& j) {
  try {
    Camera cam{detail::get_field<double>(j, "fx"),   detail::get_field<double>(j, "fy"),
               detail::get_field<double>(j, "cx"),   detail::get_field<double>(j, "cy"),
               detail::get_field<int>(j, "width"), detail::get_field<int>(j, "height")};
    cam.validate();
    return cam;
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
}

inline json to_json(const Pose& pose) {
  const auto q = pose.quaternion();
  return {{"rotation_wxyz", {q.w(), q.x(), q.y(), q.z()}}, {"translation", detail::from_vector(pose.translation())}};
}

/// Quaternion must have unit norm within 1e-6.
inline Pose pose_from_json(const json& j) {
  try {
    if (!j.is_object() || !j.contains("rotation_wxyz")) throw ParseError("missing field 'rotation_wxyz'");
    if (!j.contains("translation")) throw ParseError("missing field 'translation'");
    const auto q = detail::to_vector(j.at("rotation_wxyz"), "rotation_wxyz");
    if (q.size() != 4) throw ParseError("rotation_wxyz must have 4 entries");
    if (std::abs(q.norm() - 1.0) > 1e-6) throw ParseError("rotation_wxyz must be a unit quaternion");
    return Pose::from_quaternion(Eigen::Quaterniond(q[0], q[1], q[2], q[3]), detail::to_vec3(j.at("translation"), "translation"));
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
}

inline json to_json(const SplatScene& scene) {
  json splats = json::array();
  for (const auto& s : scene.splats) {
    splats.push_back({{"center", detail::from_vector(s.center)}, {"radius", s.radius}, {"color", detail::from_vector(s.color)}});
  }
  return {{"background", detail::from_vector(scene.background)}, {"splats", splats}};
}

inline SplatScene splat_scene_from_json(const json& j) {
  try {
    if (!j.is_object()) throw ParseError("scene must be an object");
    SplatScene scene;
    scene.background = j.contains("background") ? detail::to_vector(j.at("background"), "background") : Eigen::VectorXd::Zero(1);
    if (j.contains("splats")) {
      if (!j.at("splats").is_array()) throw ParseError("splats must be an array");
      for (const auto& s : j.at("splats")) {
        Splat splat;
        if (!s.is_object() || !s.contains("center") || !s.contains("color")) throw ParseError("splat needs center and color");
        splat.center = detail::to_vec3(s.at("center"), "center");
        splat.radius = detail::get_field<double>(s, "radius");
        splat.color = detail::to_vector(s.at("color"), "color");
        scene.splats.push_back(std::move(splat));
      }
    }
    scene.validate();
    return scene;
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
}

inline json to_json(const FeatureScene& scene) {
  json pts = json::array();
  for (const auto& p : scene.points) pts.push_back(detail::from_vector(p));
  return {{"points", pts}};
}

inline FeatureScene feature_scene_from_json(const json& j) {
  try {
    if (!j.is_object() || !j.contains("points") || !j.at("points").is_array()) throw ParseError("feature scene needs 'points'");
    FeatureScene scene;
    for (const auto& p : j.at("points")) scene.points.push_back(detail::to_vec3(p, "point"));
    return scene;
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
}

/// {"type": "isotropic", "variance"} | {"type": "diagonal", "variances"} |
/// {"type": "block_diagonal", "blocks": [{"indices", "covariance"}]}
inline NoiseModel noise_from_json(const json& j) {
  try {
    const auto type = detail::get_field<std::string>(j, "type");
    if (type == "isotropic") {
      const double v = detail::get_field<double>(j, "variance");
      if (!(v > 0.0)) throw ParseError("variance must be positive");
      return IsotropicVariance{v};
    }
    if (type == "diagonal") {
      auto v = detail::to_vector(j.at("variances"), "variances");
      if (!(v.array() > 0.0).all()) throw ParseError("variances must be positive");
      return DiagonalVariance{std::move(v)};
    }
    if (type == "block_diagonal") {
      BlockDiagonal out;
      for (const auto& b : j.at("blocks")) {
        NoiseBlock blk;
        blk.indices = detail::get_field<std::vector<std::size_t>>(b, "indices");
        const auto flat = detail::to_vector(b.at("covariance"), "covariance");
        const auto n = static_cast<Eigen::Index>(blk.indices.size());
        if (flat.size() != n * n) throw ParseError("block covariance must be indices^2 row-major numbers");
        blk.covariance = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(), n, n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (blk.covariance + blk.covariance.transpose()));
        if (n > 0 && !(es.eigenvalues()[0] > 1e-12)) throw ParseError("noise blocks must be SPD");
        out.blocks.push_back(std::move(blk));
      }
      return out;
    }
    throw ParseError("unknown noise type '" + type + "'");
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
}

inline json to_json(const NoiseModel& noise) {
  if (const auto* iso = std::get_if<IsotropicVariance>(&noise)) return {{"type", "isotropic"}, {"variance", iso->variance}};
  if (const auto* d = std::get_if<DiagonalVariance>(&noise)) {
    return {{"type", "diagonal"}, {"variances", detail::from_vector(d->variances)}};
  }
  json blocks = json::array();
  for (const auto& b : std::get<BlockDiagonal>(noise).blocks) {
    json cov = json::array();
    for (Eigen::Index r = 0; r < b.covariance.rows(); ++r) {
      for (Eigen::Index c = 0; c < b.covariance.cols(); ++c) cov.push_back(b.covariance(r, c));
    }
    blocks.push_back({{"indices", b.indices}, {"covariance", cov}});
  }
  return {{"type", "block_diagonal"}, {"blocks", blocks}};
}

inline json to_json(const FisherInfo& info) {
  const auto ident = identifiability(info);
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(symmetrized(info.matrix), Eigen::EigenvaluesOnly);
  return {{"matrix", matrix_to_json(info.matrix)},
          {"pixel_count", info.pixel_count},
          {"subsample_rate", info.subsample_rate},
          {"frame", info.frame},
          {"eigenvalues", detail::from_vector(es.eigenvalues())},
          {"rank", ident.rank}};
}

inline FisherInfo fisher_from_json(const json& j) {
  try {
    if (!j.is_object() || !j.contains("matrix")) throw ParseError("missing field 'matrix'");
    FisherInfo info;
    info.matrix = matrix_from_json(j.at("matrix"));
    if (j.contains("pixel_count")) info.pixel_count = detail::get_field<std::size_t>(j, "pixel_count");
    if (j.contains("subsample_rate")) info.subsample_rate = detail::get_field<double>(j, "subsample_rate");
    if (j.contains("frame")) info.frame = detail::get_field<std::string>(j, "frame");
    return info;
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
}

inline json to_json(const CrbReport& r) {
  json null = json::array();
  for (Eigen::Index k = 0; k < r.nullspace_basis.cols(); ++k) null.push_back(detail::from_vector(r.nullspace_basis.col(k)));
  return {{"covariance", matrix_to_json(r.covariance)},
          {"sigma_rotation_deg", detail::from_vector(r.sigma_rotation_deg)},
          {"sigma_translation_units", detail::from_vector(r.sigma_translation_units)},
          {"eigenvalues", detail::from_vector(r.eigenvalues)},
          {"rank", r.rank},
          {"nullspace_basis", null},
          {"ridge_used", r.ridge_used}};
}

inline CrbReport crb_report_from_json(const json& j) {
  try {
    CrbReport r;
    r.covariance = matrix_from_json(j.at("covariance"));
    r.sigma_rotation_deg = detail::to_vec3(j.at("sigma_rotation_deg"), "sigma_rotation_deg");
    r.sigma_translation_units = detail::to_vec3(j.at("sigma_translation_units"), "sigma_translation_units");
    const auto eig = detail::to_vector(j.at("eigenvalues"), "eigenvalues");
    if (eig.size() != 6) throw ParseError("eigenvalues must have 6 entries");
    r.eigenvalues = eig;
    r.rank = detail::get_field<int>(j, "rank");
    const auto& null = j.at("nullspace_basis");
    r.nullspace_basis.resize(6, static_cast<Eigen::Index>(null.size()));
    for (std::size_t k = 0; k < null.size(); ++k) {
      const auto v = detail::to_vector(null[k], "nullspace vector");
      if (v.size() != 6) throw ParseError("nullspace vectors must have 6 entries");
      r.nullspace_basis.col(static_cast<Eigen::Index>(k)) = v;
    }
    r.ridge_used = detail::get_field<double>(j, "ridge_used");
    return r;
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

/// Dumped with shortest round-trip float formatting.
inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

struct ScenarioAgent {
  int id = 0;
  Camera camera;
  Pose relative_pose;  // agent frame -> global frame
  NoiseModel noise = IsotropicVariance{1e-4};
  TileGrid tiles;
};

/// Multi-agent scenario: one shared scene observed by several cameras about a global pose.
struct Scenario {
  SplatScene scene;
  Pose reference_pose;
  std::vector<ScenarioAgent> agents;
  Budget budget;
  SelectionObjective objective;

  Pose agent_pose(const ScenarioAgent& a) const { return inverse(a.relative_pose) * reference_pose; }
};

inline SelectionObjective objective_from_json(const json& j) {
  try {
    const auto type = detail::get_field<std::string>(j, "type");
    SelectionObjective obj;
    if (type == "logdet") {
      obj = SelectionObjective::log_det(j.contains("epsilon") ? j.at("epsilon").get<double>() : 1e-6);
    } else if (type == "trace") {
      obj = SelectionObjective::trace();
    } else if (type == "lambda_min") {
      obj = SelectionObjective::lambda_min(j.contains("epsilon") ? j.at("epsilon").get<double>() : 0.0);
    } else {
      throw ParseError("unknown objective '" + type + "'");
    }
    if (j.contains("prior")) obj.prior = matrix_from_json(j.at("prior"));
    try {
      obj.validate();
    } catch (const Error& e) {
      throw ParseError(e.what());
    }
    return obj;
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
}

/// `base_dir` resolves a scene given as a relative file path.
inline Scenario scenario_from_json(const json& j, const std::string& base_dir = ".") {
  try {
    Scenario s;
    const auto& scene = j.at("scene");
    if (scene.is_string()) {
      const auto path = scene.get<std::string>();
      s.scene = splat_scene_from_json(read_json_file(path.starts_with('/') ? path : base_dir + "/" + path));
    } else {
      s.scene = splat_scene_from_json(scene);
    }
    s.reference_pose = j.contains("reference_pose") ? pose_from_json(j.at("reference_pose")) : Pose::identity();
    if (!j.contains("agents") || !j.at("agents").is_array()) throw ParseError("scenario needs an 'agents' array");
    for (const auto& a : j.at("agents")) {
      ScenarioAgent agent;
      agent.id = detail::get_field<int>(a, "id");
      agent.camera = camera_from_json(a.at("camera"));
      agent.relative_pose = a.contains("relative_pose") ? pose_from_json(a.at("relative_pose")) : Pose::identity();
      if (a.contains("noise")) agent.noise = noise_from_json(a.at("noise"));
      if (a.contains("tiles")) {
        const auto dims = a.at("tiles").get<std::vector<int>>();
        if (dims.size() != 2 || dims[0] < 1 || dims[1] < 1) throw ParseError("tiles must be [rows, cols]");
        agent.tiles = TileGrid{dims[0], dims[1]};
      }
      s.agents.push_back(std::move(agent));
    }
    if (j.contains("budgets")) {
      const auto& b = j.at("budgets");
      s.budget.global_total = detail::get_field<int>(b, "global");
      if (b.contains("per_agent")) {
        for (const auto& [key, value] : b.at("per_agent").items()) s.budget.per_agent[std::stoi(key)] = value.get<int>();
      }
    }
    if (j.contains("objective")) s.objective = objective_from_json(j.at("objective"));
    try {
      s.budget.validate();
    } catch (const InfeasibleBudget& e) {
      throw ParseError(e.what());
    }
    return s;
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  } catch (const std::logic_error& e) {
    // non-numeric budget keys
    throw ParseError(std::string("scenario: ") + e.what());
  }
}

// CSV ---------------------------------------------------------------------

inline void write_trials_csv(std::ostream& out, const std::vector<TrialResult>& results) {
  out << "trial_index,converged,iters,err_vx,err_vy,err_vz,err_wx,err_wy,err_wz\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    out << i << ',' << (r.converged ? 1 : 0) << ',' << r.iterations;
    for (int k = 0; k < 6; ++k) out << ',' << format_double(r.error[k]);
    out << '\n';
  }
}

inline std::vector<TrialResult> read_trials_csv(std::istream& in) {
  std::vector<TrialResult> out;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty trials CSV");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw ParseError("trials CSV rows need 9 columns");
    TrialResult r;
    try {
      r.converged = std::stoi(cells[1]) != 0;
      r.iterations = std::stoi(cells[2]);
      for (int k = 0; k < 6; ++k) r.error[k] = std::stod(cells[static_cast<std::size_t>(3 + k)]);
    } catch (const std::exception&) {
      throw ParseError("malformed trials CSV row: " + line);
    }
    out.push_back(r);
  }
  return out;
}

inline void write_calibration_csv(std::ostream& out, const CalibrationCurve& curve) {
  out << "level,coverage\n";
  for (std::size_t i = 0; i < curve.levels.size(); ++i) {
    out << format_double(curve.levels[i]) << ',' << format_double(curve.coverage[i]) << '\n';
  }
}

inline void write_selection_csv(std::ostream& out, const SelectionResult& sel) {
  out << "step,agent_id,tile_id,objective_value\n";
  for (std::size_t i = 0; i < sel.selected.size(); ++i) {
    out << (i + 1) << ',' << sel.selected[i].first << ',' << sel.selected[i].second << ','
        << format_double(sel.history.size() > i + 1 ? sel.history[i + 1] : sel.objective_value) << '\n';
  }
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& sweep) {
  out << "scene_tag,bound_type,rot_deg,trans_units\n";
  for (const auto& r : sweep.rows) {
    out << r.scene_tag << ',' << r.bound_type << ',' << format_double(r.rot_deg) << ',' << format_double(r.trans_units)
        << '\n';
  }
}

/// Flat CSV: x,y,channel,value.
inline void write_image_csv(std::ostream& out, const Image& img) {
  out << "x,y,channel,value\n";
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) out << x << ',' << y << ',' << c << ',' << format_double(img.at(x, y, c)) << '\n';
    }
  }
}

}  // namespace rcrb::io
