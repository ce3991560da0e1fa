#pragma once

// Empirical checks of the bound: finite-difference Jacobians, Monte Carlo
// perturb-and-align trials, bundle-adjustment covariance, and coverage
// calibration against chi-square ellipsoids.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <boost/math/distributions/chi_squared.hpp>

#include "rcrb/error.hpp"
#include "rcrb/fisher.hpp"
#include "rcrb/parallel.hpp"
#include "rcrb/renderer.hpp"
#include "rcrb/se3.hpp"

namespace rcrb {

/// Central differences of the measurements along each twist basis direction.
inline Eigen::MatrixXd finite_diff_jacobian(const MeasurementModel& model, const Pose& pose, const PixelSubset& pixels,
                                            double step) {
  if (!(step > 0.0)) throw Error("finite-difference step must be positive");
  Eigen::MatrixXd jac;
  for (int j = 0; j < 6; ++j) {
    Twist e = Twist::Zero();
    e[j] = step;
    const Eigen::VectorXd plus = evaluate(model, exp(e) * pose, pixels);
    const Eigen::VectorXd minus = evaluate(model, exp(-e) * pose, pixels);
    if (j == 0) jac.resize(plus.size(), 6);
    jac.col(j) = (plus - minus) / (2.0 * step);
  }
  return jac;
}

struct OptimizerConfig {
  double step_size = 1.0;  // initial line-search step
  int max_iters = 50;
  /// Stop when the Gauss-Newton decrement g^T H^+ g drops below this.
  double grad_tol = 1e-9;
};

struct TrialConfig {
  int n_trials = 100;
  double rotation_scale = 0.05;     // rad
  double translation_scale = 0.05;  // scene units
  double noise_sigma = 0.01;        // intensity units
  OptimizerConfig optimizer;
  std::uint64_t seed = 42;
  unsigned threads = 1;
  PixelSubset pixels = PixelSubset::all();

  void validate() const {
    if (n_trials < 1) throw Error("n_trials must be at least 1");
    if (rotation_scale < 0.0 || translation_scale < 0.0 || noise_sigma < 0.0) {
      throw Error("perturbation and noise scales must be non-negative");
    }
  }
};

struct AlignResult {
  Pose estimate;
  bool converged = false;
  int iterations = 0;
  /// 0.5 * ||r||^2 / sigma^2 after each accepted step, starting at the initial pose.
  std::vector<double> objective_history;
};

struct TrialResult {
  Twist error = Twist::Zero();  // log(x_hat * x_true^-1)
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline Twist solve_normal_equations(const Matrix6d& h, const Vector6d& g) {
  Eigen::LLT<Matrix6d> llt(h);
  if (llt.info() == Eigen::Success) {
    const Vector6d x = llt.solve(g);
    if (x.allFinite()) return x;
  }
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(h);
  const double thr = kDefaultRankTol * std::max(es.eigenvalues().maxCoeff(), 0.0);
  Vector6d inv = Vector6d::Zero();
  for (int i = 0; i < 6; ++i) {
    if (es.eigenvalues()[i] > thr && es.eigenvalues()[i] > 0.0) inv[i] = 1.0 / es.eigenvalues()[i];
  }
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() * g;
}

}  // namespace detail

/// Gauss-Newton with backtracking line search on the left twist.
/// `weight` is 1 / sigma^2 of the isotropic pixel noise (any positive value when sigma = 0).
inline AlignResult align(const MeasurementModel& model, const Eigen::VectorXd& observed, const Pose& init,
                         const PixelSubset& pixels, double weight, const OptimizerConfig& cfg) {
  AlignResult out;
  out.estimate = init;
  Linearization lin = linearize(model, init, pixels);
  if (lin.values.size() != observed.size()) throw DimensionMismatch("observation size does not match the model");
  Eigen::VectorXd r = observed - lin.values;
  double f = 0.5 * weight * r.squaredNorm();
  out.objective_history.push_back(f);

  for (int it = 0; it < cfg.max_iters; ++it) {
    const Vector6d g = weight * (lin.jacobian.transpose() * r);
    const Matrix6d h = weight * (lin.jacobian.transpose() * lin.jacobian);
    const Twist delta = detail::solve_normal_equations(h, g);
    const double decrement = g.dot(delta);
    if (!(decrement > cfg.grad_tol)) {
      out.converged = true;
      break;
    }
    double alpha = cfg.step_size;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      const Pose candidate = exp(alpha * delta) * out.estimate;
      Linearization next = linearize(model, candidate, pixels);
      Eigen::VectorXd rn = observed - next.values;
      const double fn = 0.5 * weight * rn.squaredNorm();
      if (fn <= f - 1e-4 * alpha * decrement) {
        out.estimate = candidate;
        lin = std::move(next);
        r = std::move(rn);
        f = fn;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // no measurable decrease left: at the optimum up to rounding
      out.converged = decrement < 1e-8;
      break;
    }
    ++out.iterations;
    out.objective_history.push_back(f);
  }
  return out;
}

namespace detail {

inline std::mt19937_64 trial_stream(std::uint64_t seed, std::size_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(static_cast<std::uint64_t>(trial) >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Monte Carlo: perturb, observe with Gaussian noise, realign, record the left error twist.
inline std::vector<TrialResult> perturb_and_align(const MeasurementModel& model, const Pose& pose_true,
                                                  const TrialConfig& cfg) {
  cfg.validate();
  const Eigen::VectorXd clean = evaluate(model, pose_true, cfg.pixels);
  const double weight = cfg.noise_sigma > 0.0 ? 1.0 / (cfg.noise_sigma * cfg.noise_sigma) : 1.0;
  const Pose inv_true = inverse(pose_true);
  std::vector<TrialResult> results(static_cast<std::size_t>(cfg.n_trials));

  parallel_for(results.size(), cfg.threads, [&](std::size_t t) {
    auto rng = detail::trial_stream(cfg.seed, t);
    std::normal_distribution<double> normal(0.0, 1.0);
    Twist perturb;
    for (int j = 0; j < 3; ++j) perturb[j] = cfg.translation_scale * normal(rng);
    for (int j = 3; j < 6; ++j) perturb[j] = cfg.rotation_scale * normal(rng);
    Eigen::VectorXd observed = clean;
    for (Eigen::Index i = 0; i < observed.size(); ++i) observed[i] += cfg.noise_sigma * normal(rng);

    const auto fit = align(model, observed, exp(perturb) * pose_true, cfg.pixels, weight, cfg.optimizer);
    TrialResult& res = results[t];
    res.converged = fit.converged;
    res.iterations = fit.iterations;
    try {
      res.error = log(fit.estimate * inv_true);
    } catch (const AngleNearPi&) {
      res.converged = false;
      res.error.setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  });
  return results;
}

struct TrialSummary {
  std::size_t converged = 0;
  std::size_t total = 0;
  /// Second moment E[err err^T] over converged trials.
  Matrix6d empirical_covariance = Matrix6d::Zero();
  Vector6d rmse = Vector6d::Zero();

  double convergence_rate() const { return total == 0 ? 0.0 : static_cast<double>(converged) / static_cast<double>(total); }
};

inline TrialSummary summarize(const std::vector<TrialResult>& results) {
  TrialSummary s;
  s.total = results.size();
  for (const auto& r : results) {
    if (!r.converged) continue;
    ++s.converged;
    s.empirical_covariance += r.error * r.error.transpose();
  }
  if (s.converged > 0) s.empirical_covariance /= static_cast<double>(s.converged);
  s.rmse = s.empirical_covariance.diagonal().cwiseSqrt();
  return s;
}

/// Inverse Gauss-Newton Hessian of reprojection error with i.i.d. pixel variance.
inline Matrix6d ba_covariance(const FeatureScene& scene, const Camera& cam, const Pose& pose, double variance) {
  const auto jac = feature_jacobian(scene, cam, pose);
  const Matrix6d hessian = symmetrized(jac.transpose() * jac / variance);
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(hessian);
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(lmax > 0.0) || !(es.eigenvalues()[0] > kDefaultRankTol * lmax)) {
    throw SingularHessian("feature geometry does not constrain all six pose directions");
  }
  return symmetrized(hessian.llt().solve(Matrix6d::Identity()));
}

inline double chi_square_quantile(double dof, double p) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), p);
}

struct CalibrationCurve {
  std::vector<double> levels;
  std::vector<double> coverage;
  std::size_t n_trials = 0;
};

/// Fraction of converged trials whose Mahalanobis error lies inside the
/// chi-square ellipsoid at each level. With restrict_to_range, a singular
/// covariance is handled on its range with dof = rank.
inline CalibrationCurve calibrate(const std::vector<TrialResult>& results, const Matrix6d& crb_cov,
                                  const std::vector<double>& levels, bool restrict_to_range = false) {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0 && levels[i] < 1.0) || (i > 0 && !(levels[i] > levels[i - 1]))) {
      throw Error("calibration levels must be strictly increasing in (0, 1)");
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(symmetrized(crb_cov));
  const double thr = kDefaultRankTol * std::max(es.eigenvalues().maxCoeff(), 0.0);
  int rank = 0;
  Vector6d inv = Vector6d::Zero();
  for (int i = 0; i < 6; ++i) {
    if (es.eigenvalues()[i] > thr && es.eigenvalues()[i] > 0.0) {
      inv[i] = 1.0 / es.eigenvalues()[i];
      ++rank;
    }
  }
  if (rank < 6 && !restrict_to_range) {
    throw RankDeficientCovariance("covariance has rank " + std::to_string(rank) + "; request range restriction");
  }
  if (rank == 0) throw RankDeficientCovariance("covariance is zero");
  const Matrix6d precision = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();

  std::vector<double> quantiles;
  for (double level : levels) quantiles.push_back(chi_square_quantile(rank, level));

  CalibrationCurve out;
  out.levels = levels;
  out.coverage.assign(levels.size(), 0.0);
  for (const auto& r : results) {
    if (!r.converged) continue;
    ++out.n_trials;
    const double m = r.error.dot(precision * r.error);
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (m <= quantiles[i]) out.coverage[i] += 1.0;
    }
  }
  if (out.n_trials > 0) {
    for (auto& c : out.coverage) c /= static_cast<double>(out.n_trials);
  }
  return out;
}

/// Synthetic converged trials with errors drawn from N(0, cov).
inline std::vector<TrialResult> draw_gaussian_errors(const Matrix6d& cov, std::size_t n, std::uint64_t seed) {
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(symmetrized(cov));
  const Matrix6d root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<TrialResult> out(n);
  for (auto& r : out) {
    Vector6d z;
    for (int j = 0; j < 6; ++j) z[j] = normal(rng);
    r.error = root * z;
    r.converged = true;
  }
  return out;
}

/// One scene of a texture sweep; features are used for the BA-covariance row.
struct SweepScene {
  std::string tag;
  PhotometricModel model;
  FeatureScene features;
  Pose pose;
};

struct SweepRow {
  std::string scene_tag;
  std::string bound_type;  // crb | empirical | ba
  double rot_deg = 0.0;    // RMS over the three rotation axes
  double trans_units = 0.0;
  Vector6d per_axis = Vector6d::Zero();  // 1-sigma per axis in radians / scene units
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<double> crb_trace;  // per scene, in input order
  /// Every "low" scene's CRB trace exceeds 3x every "high" scene's; true when either tag is absent.
  bool ordering_holds = true;
};

inline SweepRow make_sweep_row(const std::string& tag, const std::string& type, const Vector6d& variances) {
  SweepRow row{tag, type};
  const Vector6d v = variances.cwiseMax(0.0);
  row.per_axis = v.cwiseSqrt();
  row.rot_deg = std::sqrt(v.tail<3>().mean()) * kRadToDeg;
  row.trans_units = std::sqrt(v.head<3>().mean());
  return row;
}

inline SweepResult texture_sweep(const std::vector<SweepScene>& scenes, const TrialConfig& cfg,
                                 double feature_variance = 1.0) {
  SweepResult out;
  for (const auto& s : scenes) {
    const MeasurementModel model = s.model;
    const double var = cfg.noise_sigma * cfg.noise_sigma;
    const auto info = assemble_fim(model, s.pose, IsotropicVariance{var > 0.0 ? var : 1.0}, cfg.pixels);
    const auto bound = crb(info);
    out.crb_trace.push_back(bound.covariance.trace());
    out.rows.push_back(make_sweep_row(s.tag, "crb", bound.covariance.diagonal()));

    const auto summary = summarize(perturb_and_align(model, s.pose, cfg));
    out.rows.push_back(make_sweep_row(s.tag, "empirical", summary.empirical_covariance.diagonal()));

    if (!s.features.points.empty()) {
      try {
        const auto ba = ba_covariance(s.features, s.model.camera, s.pose, feature_variance);
        out.rows.push_back(make_sweep_row(s.tag, "ba", ba.diagonal()));
      } catch (const SingularHessian&) {
        // reported as missing
      }
    }
  }
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (scenes[i].tag != "low") continue;
    for (std::size_t j = 0; j < scenes.size(); ++j) {
      if (scenes[j].tag == "high" && !(out.crb_trace[i] > 3.0 * out.crb_trace[j])) out.ordering_holds = false;
    }
  }
  return out;
}

}  // namespace rcrb
