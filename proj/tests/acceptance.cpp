// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rcrb.hpp"
#include "rcrb/io.hpp"

using namespace rcrb;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

// Central differences of an arbitrary measurement function along exp(h e_j) * pose.
Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Pose&)>& f, const Pose& pose, double h) {
  Eigen::MatrixXd jac;
  for (int j = 0; j < 6; ++j) {
    Twist e = Twist::Zero();
    e[j] = h;
    const Eigen::VectorXd plus = f(exp(e) * pose);
    const Eigen::VectorXd minus = f(exp(Twist(-e)) * pose);
    if (j == 0) jac.resize(plus.size(), 6);
    jac.col(j) = (plus - minus) / (2 * h);
  }
  return jac;
}

Pose random_pose(std::mt19937_64& rng, double rot, double trans) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Twist xi;
  xi << trans * u(rng), trans * u(rng), trans * u(rng), rot * u(rng), rot * u(rng), rot * u(rng);
  return exp(xi);
}

SplatScene random_scene(std::mt19937_64& rng, int channels) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count(10, 60);
  SplatScene scene;
  scene.background = Eigen::VectorXd::Constant(channels, 0.2 * unit(rng));
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const double z = 1.5 + 4.0 * unit(rng);
    Splat s;
    s.center = Eigen::Vector3d(0.5 * z * u(rng), 0.5 * z * u(rng), z);
    s.radius = 0.04 + 0.2 * unit(rng);
    s.color = Eigen::VectorXd(channels);
    for (int c = 0; c < channels; ++c) s.color[c] = unit(rng);
    scene.splats.push_back(s);
  }
  return scene;
}

// Left-perturbation pinhole Jacobian of one point, written out entrywise.
Eigen::Matrix<double, 2, 6> pinhole_jacobian(const Camera& cam, const Pose& pose, const Eigen::Vector3d& x) {
  const Eigen::Vector3d p = pose * x;
  const double X = p.x();
  const double Y = p.y();
  const double Z = p.z();
  Eigen::Matrix<double, 2, 6> j;
  // d(p)/d(v) = I, d(p)/d(w) = -[p]x
  j(0, 0) = cam.fx / Z;
  j(0, 1) = 0.0;
  j(0, 2) = -cam.fx * X / (Z * Z);
  j(0, 3) = -cam.fx * X * Y / (Z * Z);
  j(0, 4) = cam.fx * (1.0 + X * X / (Z * Z));
  j(0, 5) = -cam.fx * Y / Z;
  j(1, 0) = 0.0;
  j(1, 1) = cam.fy / Z;
  j(1, 2) = -cam.fy * Y / (Z * Z);
  j(1, 3) = -cam.fy * (1.0 + Y * Y / (Z * Z));
  j(1, 4) = cam.fy * X * Y / (Z * Z);
  j(1, 5) = cam.fy * X / Z;
  return j;
}

FeatureScene random_features(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> count(6, 40);
  FeatureScene s;
  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    const double z = 3.0 + 2.0 * u(rng);
    s.points.emplace_back(0.6 * z * u(rng), 0.6 * z * u(rng), z);
  }
  return s;
}

Matrix6d random_psd(std::mt19937_64& rng, int rank) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Matrix<double, 6, Eigen::Dynamic> a(6, rank);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  return a * a.transpose();
}

Matrix6d random_rotation6(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix6d a;
  for (int i = 0; i < 36; ++i) a.data()[i] = n(rng);
  Eigen::HouseholderQR<Matrix6d> qr(a);
  return qr.householderQ();
}

double rel_l2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& ref) { return (a - ref).norm() / ref.norm(); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// 1 ---------------------------------------------------------------------------
Outcome jacobian_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  const Camera cam{32.0, 32.0, 15.5, 15.5, 32, 32};
  double worst_render = 0.0;
  double worst_feature = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto scene = random_scene(rng, trial % 2 == 0 ? 1 : 3);
    const Pose pose = random_pose(rng, 0.1, 0.2);
    Eigen::MatrixXd analytic(static_cast<Eigen::Index>(cam.pixel_count()) * scene.channels(), 6);
    for (int j = 0; j < 6; ++j) {
      analytic.col(j) = render_jvp(scene, cam, pose, Twist(Twist::Unit(j)), PixelSubset::all());
    }
    const auto fd = fd_jacobian([&](const Pose& p) { return render(scene, cam, p).pixels; }, pose, 1e-5);
    worst_render = std::max(worst_render, rel_l2(analytic, fd));

    const auto features = random_features(rng);
    const auto fdf = fd_jacobian(
        [&](const Pose& p) {
          const auto uv = project_features(features, cam, p);
          Eigen::VectorXd out(2 * static_cast<Eigen::Index>(uv.size()));
          for (std::size_t k = 0; k < uv.size(); ++k) out.segment<2>(2 * static_cast<Eigen::Index>(k)) = uv[k];
          return out;
        },
        pose, 1e-5);
    worst_feature = std::max(worst_feature, rel_l2(feature_jacobian(features, cam, pose), fdf));
  }
  const double t = seconds_since(t0);
  return {worst_render < 1e-4 && worst_feature < 1e-6 && t < 10.0,
          "render rel L2 " + fmt(worst_render) + " (< 1e-4), feature rel L2 " + fmt(worst_feature) + " (< 1e-6), " +
              fmt(t) + " s (< 10 s)"};
}

// 2 ---------------------------------------------------------------------------
Outcome ba_limit_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> var(0.1, 4.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Camera cam{300.0 + 100.0 * var(rng), 300.0 + 100.0 * var(rng), 320.0, 240.0, 640, 480};
    const auto scene = random_features(rng);
    const Pose pose = random_pose(rng, 0.2, 0.3);
    const double sigma2 = var(rng);
    Matrix6d ref = Matrix6d::Zero();
    for (const auto& x : scene.points) {
      const auto jk = pinhole_jacobian(cam, pose, x);
      ref += jk.transpose() * jk;
    }
    ref /= sigma2;
    const auto info = assemble_fim(FeatureModel{scene, cam}, pose, IsotropicVariance{sigma2}, PixelSubset::all());
    worst = std::max(worst, (info.matrix - ref).norm() / ref.norm());
  }
  const double t = seconds_since(t0);
  return {worst < 1e-10 && t < 1.0, "max rel error " + fmt(worst) + " (< 1e-10), " + fmt(t) + " s (< 1 s)"};
}

// 3 ---------------------------------------------------------------------------
Outcome crb_achievement_check() {
  const auto t0 = Clock::now();
  const MeasurementModel model = PhotometricModel{scenes::validation_scene(), scenes::default_camera()};
  TrialConfig cfg;
  cfg.n_trials = 2000;
  cfg.noise_sigma = 0.01;
  cfg.seed = 2024;
  const auto results = perturb_and_align(model, Pose::identity(), cfg);
  const auto bound = crb(assemble_fim(model, Pose::identity(), IsotropicVariance{1e-4}, PixelSubset::all()));

  Vector6d mean = Vector6d::Zero();
  std::size_t n = 0;
  for (const auto& r : results) {
    if (!r.converged) continue;
    mean += r.error;
    ++n;
  }
  mean /= static_cast<double>(n);
  Matrix6d cov = Matrix6d::Zero();
  for (const auto& r : results) {
    if (!r.converged) continue;
    const Vector6d d = r.error - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(n - 1);

  double worst_ratio = 0.0;
  for (int i = 0; i < 6; ++i) {
    worst_ratio = std::max(worst_ratio, std::abs(std::sqrt(cov(i, i) / bound.covariance(i, i)) - 1.0));
  }
  Eigen::SelfAdjointEigenSolver<Matrix6d> diff(cov - bound.covariance);
  Eigen::SelfAdjointEigenSolver<Matrix6d> crb_eig(bound.covariance);
  const double loewner = diff.eigenvalues().minCoeff() / crb_eig.eigenvalues().maxCoeff();
  const double t = seconds_since(t0);
  const bool pass = bound.rank == 6 && worst_ratio <= 0.15 && loewner >= -0.15 && t < 300.0;
  return {pass, "converged " + std::to_string(n) + "/2000, worst |std/crb - 1| " + fmt(worst_ratio) +
                    " (<= 0.15), lambda_min(Emp - CRB)/lambda_max(CRB) " + fmt(loewner) + " (>= -0.15), " + fmt(t) +
                    " s (< 300 s)"};
}

// 4 ---------------------------------------------------------------------------
Outcome texture_check() {
  const auto cam = scenes::default_camera();
  const IsotropicVariance noise{1e-4};
  const auto high = crb(assemble_fim(PhotometricModel{scenes::high_texture(), cam}, Pose::identity(), noise, PixelSubset::all()));
  const auto low = crb(assemble_fim(PhotometricModel{scenes::low_texture(), cam}, Pose::identity(), noise, PixelSubset::all()));
  const auto wall = crb(assemble_fim(PhotometricModel{scenes::symmetric_wall(), cam}, Pose::identity(), noise, PixelSubset::all()));
  const double ratio = low.covariance.trace() / high.covariance.trace();
  // rotation about the optical axis of a camera at the identity pose
  Vector6d axis = Vector6d::Zero();
  axis[5] = 1.0;
  const double cosine = wall.nullspace_basis.cols() > 0 ? (wall.nullspace_basis.transpose() * axis).norm() : 0.0;
  return {ratio > 3.0 && wall.rank < 6 && cosine > 0.99, "low/high CRB trace " + fmt(ratio) + " (> 3), wall rank " +
                                                             std::to_string(wall.rank) + " (< 6), |cos| " + fmt(cosine) +
                                                             " (> 0.99)"};
}

// 5 ---------------------------------------------------------------------------
Outcome reparameterization_check() {
  std::mt19937_64 rng(1005);
  std::uniform_real_distribution<double> logscale(std::log(0.2), std::log(5.0));
  std::uniform_int_distribution<int> rank_dist(1, 6);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto cam = scenes::default_camera();
  std::vector<FisherInfo> full;
  for (const auto& s : {scenes::high_texture(), scenes::low_texture(), scenes::validation_scene()}) {
    full.push_back(assemble_fim(PhotometricModel{s, cam}, Pose::identity(), IsotropicVariance{1e-4}, PixelSubset::all()));
  }
  bool ranks_ok = true;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Vector6d s;
    for (int i = 0; i < 6; ++i) s[i] = std::exp(logscale(rng));
    const Matrix6d dphi = random_rotation6(rng) * s.asDiagonal() * random_rotation6(rng);

    FisherInfo low_rank;
    low_rank.matrix = random_psd(rng, rank_dist(rng));
    for (const auto& info : {full[static_cast<std::size_t>(trial % 3)], low_rank}) {
      ranks_ok = ranks_ok && identifiability(reparameterize(info, dphi)).rank == identifiability(info).rank;
    }

    const auto& info = full[static_cast<std::size_t>(trial % 3)];
    const auto z = reparameterize(info, dphi);
    Vector6d c;
    for (int i = 0; i < 6; ++i) c[i] = n(rng);
    const Vector6d cz = dphi.transpose().fullPivLu().solve(c);
    const double var_xi = c.dot(crb(info).covariance * c);
    const double var_zeta = cz.dot(crb(z).covariance * cz);
    worst = std::max(worst, std::abs(var_zeta - var_xi) / var_xi);
  }
  return {ranks_ok && worst < 1e-8, std::string("ranks ") + (ranks_ok ? "preserved" : "CHANGED") +
                                        ", worst scalar-variance rel diff " + fmt(worst) + " (< 1e-8)"};
}

// 6 ---------------------------------------------------------------------------
Outcome fusion_check() {
  const auto cam = scenes::default_camera();
  const auto scene = scenes::validation_scene();
  const MeasurementModel model = PhotometricModel{scene, cam};
  const auto info = assemble_fim(model, Pose::identity(), IsotropicVariance{1e-4}, PixelSubset::all());

  const auto one = crb(fuse({{0, info, Pose::identity()}}));
  const auto two = crb(fuse({{0, info, Pose::identity()}, {1, info, Pose::identity()}}));
  double halving = 0.0;
  for (int i = 0; i < 6; ++i) halving = std::max(halving, std::abs(two.covariance(i, i) / one.covariance(i, i) - 0.5));

  std::mt19937_64 rng(1006);
  double transport_err = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const Pose x = random_pose(rng, 0.03, 0.05);
    const Pose g_a = random_pose(rng, 0.08, 0.3);
    const auto local = assemble_fim(model, inverse(g_a) * x, IsotropicVariance{1e-4}, PixelSubset::all());
    const auto global = transport({0, local, g_a});
    const auto j = fd_jacobian([&](const Pose& p) { return render(scene, cam, inverse(g_a) * p).pixels; }, x, 1e-5);
    const Matrix6d ref = j.transpose() * j / 1e-4;
    transport_err = std::max(transport_err, (global.matrix - ref).norm() / ref.norm());
  }

  std::vector<AgentObservation> obs;
  std::uniform_real_distribution<double> scale(1.0, 1e6);
  for (int a = 0; a < 8; ++a) {
    FisherInfo f;
    f.matrix = scale(rng) * random_psd(rng, 1 + a % 6);
    obs.push_back({a, f, random_pose(rng, 2.0, 3.0)});
  }
  const Matrix6d ref = fuse(obs).matrix;
  double perm = 0.0;
  for (int k = 0; k < 50; ++k) {
    std::shuffle(obs.begin(), obs.end(), rng);
    perm = std::max(perm, (fuse(obs).matrix - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff());
  }
  return {halving < 1e-10 && transport_err < 1e-6 && perm < 1e-12,
          "halving error " + fmt(halving) + " (< 1e-10), transport vs recomputation " + fmt(transport_err) +
              " (< 1e-6), permutation " + fmt(perm) + " (< 1e-12)"};
}

// 7 ---------------------------------------------------------------------------
Outcome selection_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1007);
  std::uniform_int_distribution<int> agents_dist(1, 4);
  std::uniform_int_distribution<int> rank_dist(1, 3);
  std::uniform_real_distribution<double> scale(0.05, 20.0);
  const double bound = 1.0 - 1.0 / std::exp(1.0);
  int trace_exact = 0;
  int ratio_ok = 0;
  int beats_random = 0;
  int not_worse_random = 0;
  int beats_per_agent = 0;
  double worst_ratio = 1.0;
  const int instances = 200;
  for (int trial = 0; trial < instances; ++trial) {
    const int agents = agents_dist(rng);
    const int per = std::uniform_int_distribution<int>(2, 12 / agents)(rng);
    std::vector<TileBlock> blocks;
    for (int a = 0; a < agents; ++a) {
      for (int t = 0; t < per; ++t) blocks.push_back({a, t, scale(rng) * random_psd(rng, rank_dist(rng)), 1});
    }
    Budget budget;
    budget.global_total = std::uniform_int_distribution<int>(1, static_cast<int>(blocks.size()) - 1)(rng);
    if (trial % 2 == 1) {
      for (int a = 0; a < agents; ++a) budget.per_agent[a] = std::uniform_int_distribution<int>(1, per)(rng);
    }

    const auto tr = SelectionObjective::trace();
    if (select_greedy(blocks, budget, tr).objective_value == select_exhaustive(blocks, budget, tr).objective_value) {
      ++trace_exact;
    }

    const auto ld = SelectionObjective::log_det();
    const double base = ld(Matrix6d::Zero());
    const auto greedy = select_greedy(blocks, budget, ld);
    const auto best = select_exhaustive(blocks, budget, ld);
    const double ratio = (greedy.objective_value - base) / (best.objective_value - base);
    worst_ratio = std::min(worst_ratio, ratio);
    if (ratio >= bound) ++ratio_ok;
    const auto random = select_random(blocks, budget, ld, greedy.selected.size(), static_cast<std::uint64_t>(trial));
    if (greedy.objective_value > random.objective_value) ++beats_random;
    // small instances often tie: a random draw can land on the optimal set
    if (greedy.objective_value >= random.objective_value) ++not_worse_random;
    if (greedy.objective_value >= select_per_agent(blocks, budget, ld).objective_value) ++beats_per_agent;
  }
  const double t = seconds_since(t0);
  const bool pass = trace_exact == instances && ratio_ok == instances && not_worse_random >= 0.95 * instances && t < 120.0;
  return {pass, "trace exact " + std::to_string(trace_exact) + "/200, logdet gain ratio min " + fmt(worst_ratio) +
                    " (>= 0.632), greedy >= random " + std::to_string(not_worse_random) + "/200 (>= 190), strictly better " +
                    std::to_string(beats_random) + "/200, greedy >= per-agent " +
                    std::to_string(beats_per_agent) + "/200, " + fmt(t) + " s (< 120 s)"};
}

// 8 ---------------------------------------------------------------------------
Outcome calibration_check() {
  const auto bound = crb(assemble_fim(PhotometricModel{scenes::validation_scene(), scenes::default_camera()},
                                      Pose::identity(), IsotropicVariance{1e-4}, PixelSubset::all()));
  const std::vector<double> levels{0.5, 0.8, 0.9, 0.95};
  const auto draws = draw_gaussian_errors(bound.covariance, 10000, 1008);
  const auto curve = calibrate(draws, bound.covariance, levels);
  double worst = 0.0;
  for (std::size_t i = 0; i < levels.size(); ++i) worst = std::max(worst, std::abs(curve.coverage[i] - levels[i]));
  const auto under = calibrate(draws, bound.covariance / 4.0, levels);
  return {worst <= 0.02 && under.coverage[2] < 0.75,
          "max |coverage - nominal| " + fmt(worst) + " (<= 0.02), understated coverage at 0.9 " + fmt(under.coverage[2]) +
              " (< 0.75)"};
}

// 9 ---------------------------------------------------------------------------
std::string all_csv(unsigned threads) {
  std::ostringstream out;
  const auto cam = scenes::default_camera();
  const MeasurementModel model = PhotometricModel{scenes::validation_scene(), cam};
  TrialConfig cfg;
  cfg.n_trials = 12;
  cfg.threads = threads;
  const auto trials = perturb_and_align(model, Pose::identity(), cfg);
  io::write_trials_csv(out, trials);

  const auto bound = crb(assemble_fim(model, Pose::identity(), IsotropicVariance{1e-4}, PixelSubset::all()));
  io::write_calibration_csv(out, calibrate(trials, bound.covariance, {0.5, 0.9}));
  io::write_calibration_csv(out, calibrate(draw_gaussian_errors(bound.covariance, 500, 9), bound.covariance, {0.5, 0.9}));

  std::vector<TileBlock> blocks;
  const auto scene = scenes::high_texture();
  for (int a = 0; a < 2; ++a) {
    const Pose rel = exp(Twist(0.1 * a * Twist::Unit(4)));
    const auto tiles = tile_infos(PhotometricModel{scene, cam}, inverse(rel), IsotropicVariance{1e-4}, TileGrid{3, 3}, rel, a);
    blocks.insert(blocks.end(), tiles.begin(), tiles.end());
  }
  io::write_selection_csv(out, select_greedy(blocks, Budget{{{0, 3}, {1, 3}}, 4}, SelectionObjective::log_det()));
  io::write_selection_csv(out, select_random(blocks, Budget{{}, 4}, SelectionObjective::log_det(), 4, 42));

  std::vector<SweepScene> sweep_in;
  sweep_in.push_back({"high", PhotometricModel{scene, cam}, scenes::features_from(scene), Pose::identity()});
  const auto low = scenes::low_texture();
  sweep_in.push_back({"low", PhotometricModel{low, cam}, scenes::features_from(low), Pose::identity()});
  cfg.n_trials = 4;
  io::write_sweep_csv(out, texture_sweep(sweep_in, cfg));
  return out.str();
}

Outcome determinism_check() {
  const auto a = all_csv(1);
  const auto b = all_csv(1);
  const auto c = all_csv(2);
  return {a == b && a == c && !a.empty(), std::to_string(a.size()) + " bytes; repeat " + (a == b ? "identical" : "DIFFERS") +
                                              ", two threads " + (a == c ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 jacobian vs finite differences", jacobian_check},
      {"2 bundle-adjustment limit", ba_limit_check},
      {"3 CRB achieved by perturb-and-align", crb_achievement_check},
      {"4 texture ordering and wall nullspace", texture_check},
      {"5 reparameterization invariance", reparameterization_check},
      {"6 multi-agent fusion", fusion_check},
      {"7 selection guarantees", selection_check},
      {"8 coverage calibration", calibration_check},
      {"9 determinism", determinism_check},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o{false, ""};
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
