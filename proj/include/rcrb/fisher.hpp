#pragma once

// Fisher information I = J^T Sigma^-1 J for the left pose twist, the
// Cramer-Rao bound derived from it, and identifiability diagnostics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "rcrb/error.hpp"
#include "rcrb/renderer.hpp"
#include "rcrb/se3.hpp"

namespace rcrb {

inline constexpr double kRadToDeg = 180.0 / kPi;
inline constexpr double kDefaultRankTol = 1e-10;
inline constexpr double kVarianceFloor = 1e-8;

struct IsotropicVariance {
  double variance = 1.0;
};

/// Per-measurement variances, either over the whole image or over the subset.
struct DiagonalVariance {
  Eigen::VectorXd variances;
};

struct NoiseBlock {
  /// Absolute measurement indices covered by this block.
  std::vector<std::size_t> indices;
  Eigen::MatrixXd covariance;
};

struct BlockDiagonal {
  std::vector<NoiseBlock> blocks;
};

using NoiseModel = std::variant<IsotropicVariance, DiagonalVariance, BlockDiagonal>;

inline NoiseModel scaled(const NoiseModel& noise, double factor) {
  return std::visit(
      [factor](const auto& n) -> NoiseModel {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, IsotropicVariance>) {
          return IsotropicVariance{n.variance * factor};
        } else if constexpr (std::is_same_v<T, DiagonalVariance>) {
          return DiagonalVariance{n.variances * factor};
        } else {
          BlockDiagonal out = n;
          for (auto& b : out.blocks) b.covariance *= factor;
          return out;
        }
      },
      noise);
}

inline const std::string kFrameLocal = "local";
inline const std::string kFrameGlobal = "global";

struct FisherInfo {
  Matrix6d matrix = Matrix6d::Zero();
  std::size_t pixel_count = 0;
  double subsample_rate = 1.0;
  std::string frame = kFrameLocal;
};

struct CrbReport {
  Matrix6d covariance = Matrix6d::Zero();
  Eigen::Vector3d sigma_rotation_deg = Eigen::Vector3d::Zero();
  Eigen::Vector3d sigma_translation_units = Eigen::Vector3d::Zero();
  /// Eigenvalues of the information matrix, ascending.
  Vector6d eigenvalues = Vector6d::Zero();
  int rank = 0;
  Eigen::Matrix<double, 6, Eigen::Dynamic> nullspace_basis;
  double ridge_used = 0.0;
};

struct Identifiability {
  int rank = 0;
  Eigen::Matrix<double, 6, Eigen::Dynamic> nullspace_basis;
  /// lambda_max / lambda_min; infinite when singular.
  double condition_number = 0.0;
};

inline Matrix6d symmetrized(const Matrix6d& m) { return 0.5 * (m + m.transpose()); }

/// Weighted Gram matrix J^T Sigma^-1 J of linearization rows.
/// `total_measurements` is the model's full measurement count.
inline Matrix6d weighted_gram(const Linearization& lin, std::size_t total_measurements, const NoiseModel& noise) {
  const auto& jac = lin.jacobian;
  const auto rows = static_cast<std::size_t>(jac.rows());
  Matrix6d info = Matrix6d::Zero();

  if (const auto* iso = std::get_if<IsotropicVariance>(&noise)) {
    if (!(iso->variance > 0.0)) throw DimensionMismatch("isotropic variance must be positive");
    info.noalias() = jac.transpose() * jac;
    info /= iso->variance;
  } else if (const auto* diag = std::get_if<DiagonalVariance>(&noise)) {
    const auto len = static_cast<std::size_t>(diag->variances.size());
    const bool absolute = len == total_measurements;
    if (!absolute && len != rows) {
      throw DimensionMismatch("diagonal noise has " + std::to_string(len) + " entries; expected " +
                              std::to_string(total_measurements) + " or " + std::to_string(rows));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const double var = diag->variances[static_cast<Eigen::Index>(absolute ? lin.measurement_index[r] : r)];
      if (!(var > 0.0)) throw DimensionMismatch("diagonal variances must be positive");
      const auto row = jac.row(static_cast<Eigen::Index>(r));
      info.noalias() += row.transpose() * row / var;
    }
  } else {
    const auto& blocks = std::get<BlockDiagonal>(noise).blocks;
    // owner block and slot of every absolute measurement index
    std::vector<std::pair<int, int>> owner(total_measurements, {-1, -1});
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& blk = blocks[b];
      if (blk.covariance.rows() != static_cast<Eigen::Index>(blk.indices.size()) ||
          blk.covariance.cols() != blk.covariance.rows()) {
        throw DimensionMismatch("noise block " + std::to_string(b) + " covariance size does not match its indices");
      }
      for (std::size_t s = 0; s < blk.indices.size(); ++s) {
        const auto m = blk.indices[s];
        if (m >= total_measurements || owner[m].first >= 0) {
          throw DimensionMismatch("noise blocks must index distinct measurements in range");
        }
        owner[m] = {static_cast<int>(b), static_cast<int>(s)};
      }
    }
    std::vector<std::vector<std::size_t>> rows_of(blocks.size());
    for (std::size_t r = 0; r < rows; ++r) {
      const auto m = lin.measurement_index[r];
      if (owner[m].first < 0) {
        throw DimensionMismatch("measurement " + std::to_string(m) + " is not covered by any noise block");
      }
      rows_of[static_cast<std::size_t>(owner[m].first)].push_back(r);
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& sel = rows_of[b];
      if (sel.empty()) continue;
      const auto k = static_cast<Eigen::Index>(sel.size());
      // marginal covariance of the measurements present in the subset
      Eigen::MatrixXd cov(k, k);
      Eigen::Matrix<double, Eigen::Dynamic, 6> q(k, 6);
      for (Eigen::Index i = 0; i < k; ++i) {
        const auto si = owner[lin.measurement_index[sel[static_cast<std::size_t>(i)]]].second;
        q.row(i) = jac.row(static_cast<Eigen::Index>(sel[static_cast<std::size_t>(i)]));
        for (Eigen::Index j = 0; j < k; ++j) {
          const auto sj = owner[lin.measurement_index[sel[static_cast<std::size_t>(j)]]].second;
          cov(i, j) = blocks[b].covariance(si, sj);
        }
      }
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success) {
        throw DimensionMismatch("noise block " + std::to_string(b) + " is not positive definite");
      }
      info.noalias() += q.transpose() * llt.solve(q);
    }
  }
  return symmetrized(info);
}

/// Assembles the pose information of a measurement model on a pixel subset.
inline FisherInfo assemble_fim(const MeasurementModel& model, const Pose& pose, const NoiseModel& noise,
                               const PixelSubset& pixels) {
  const auto lin = linearize(model, pose, pixels);
  FisherInfo out;
  out.matrix = weighted_gram(lin, measurement_count(model), noise);
  const auto domain = domain_size(model);
  out.pixel_count = pixels.resolve(domain).size();
  out.subsample_rate = domain == 0 ? 1.0 : static_cast<double>(out.pixel_count) / static_cast<double>(domain);
  return out;
}

namespace detail {

struct SortedEigen {
  Vector6d values;
  Matrix6d vectors;
};

inline SortedEigen eigen_ascending(const Matrix6d& m) {
  // SelfAdjointEigenSolver already returns ascending eigenvalues
  Eigen::SelfAdjointEigenSolver<Matrix6d> solver(symmetrized(m));
  return {solver.eigenvalues(), solver.eigenvectors()};
}

inline double rank_threshold(const Vector6d& eig, double rel_tol) {
  return rel_tol * std::max(eig.maxCoeff(), 0.0);
}

}  // namespace detail

/// Rank counts eigenvalues above rel_tol * lambda_max; a zero matrix has rank 0.
inline Identifiability identifiability(const FisherInfo& info, double rel_tol = kDefaultRankTol) {
  const auto eig = detail::eigen_ascending(info.matrix);
  const double lmax = eig.values.maxCoeff();
  const double thr = detail::rank_threshold(eig.values, rel_tol);
  Identifiability out;
  int null = 0;
  for (int i = 0; i < 6; ++i) {
    if (!(eig.values[i] > thr) || lmax <= 0.0) ++null;
  }
  out.rank = 6 - null;
  out.nullspace_basis = eig.vectors.leftCols(null);
  out.condition_number = out.rank == 6 ? lmax / eig.values[0] : std::numeric_limits<double>::infinity();
  return out;
}

inline void fill_sigmas(CrbReport& report) {
  const Vector6d var = report.covariance.diagonal().cwiseMax(0.0);
  report.sigma_translation_units = var.head<3>().cwiseSqrt();
  report.sigma_rotation_deg = var.tail<3>().cwiseSqrt() * kRadToDeg;
}

/// Inverse when well conditioned; otherwise ridge-regularized inverse
/// (ridge > 0) or Moore-Penrose pseudoinverse (ridge == 0).
inline CrbReport crb(const FisherInfo& info, double ridge = 0.0, double rank_tol = kDefaultRankTol) {
  const Matrix6d m = symmetrized(info.matrix);
  const auto eig = detail::eigen_ascending(m);
  const auto ident = identifiability(info, rank_tol);

  CrbReport out;
  out.eigenvalues = eig.values;
  out.rank = ident.rank;
  out.nullspace_basis = ident.nullspace_basis;

  if (ident.rank == 6) {
    Eigen::LLT<Matrix6d> llt(m);
    if (llt.info() == Eigen::Success) {
      out.covariance = symmetrized(llt.solve(Matrix6d::Identity()));
    } else {
      out.covariance = symmetrized(eig.vectors * eig.values.cwiseInverse().asDiagonal() * eig.vectors.transpose());
    }
  } else if (ridge > 0.0) {
    out.covariance = symmetrized((m + ridge * Matrix6d::Identity()).ldlt().solve(Matrix6d::Identity()));
    out.ridge_used = ridge;
  } else {
    Vector6d inv = Vector6d::Zero();
    const int null = 6 - ident.rank;
    for (int i = null; i < 6; ++i) inv[i] = 1.0 / eig.values[i];
    out.covariance = symmetrized(eig.vectors * inv.asDiagonal() * eig.vectors.transpose());
  }
  fill_sigmas(out);
  return out;
}

/// Information in coordinates zeta = phi(xi) given D phi at the origin.
inline FisherInfo reparameterize(const FisherInfo& info, const Matrix6d& dphi) {
  Eigen::JacobiSVD<Matrix6d> svd(dphi);
  const auto sv = svd.singularValues();
  if (!(sv[5] > 0.0) || sv[0] / sv[5] >= 1e12) {
    throw SingularJacobian("reparameterization Jacobian is singular or too ill-conditioned");
  }
  const Matrix6d inv = dphi.fullPivLu().inverse();
  FisherInfo out = info;
  out.matrix = symmetrized(inv.transpose() * info.matrix * inv);
  return out;
}

/// Per-tile sample variance of residuals, floored and expanded to every measurement.
inline NoiseModel estimate_noise(const Image& residual, const TileGrid& tiles) {
  Camera geom;
  geom.width = residual.width;
  geom.height = residual.height;
  const auto c = static_cast<std::size_t>(residual.channels);
  Eigen::VectorXd var(residual.pixels.size());
  for (int t = 0; t < tiles.tile_count(); ++t) {
    const auto px = tiles.tile_pixels(geom, t);
    const double count = static_cast<double>(px.size() * c);
    double mean = 0.0;
    for (auto p : px) {
      for (std::size_t ch = 0; ch < c; ++ch) mean += residual.pixels[static_cast<Eigen::Index>(p * c + ch)];
    }
    mean /= count;
    double ss = 0.0;
    for (auto p : px) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = residual.pixels[static_cast<Eigen::Index>(p * c + ch)] - mean;
        ss += d * d;
      }
    }
    const double v = std::max(count > 1.0 ? ss / (count - 1.0) : 0.0, kVarianceFloor);
    for (auto p : px) {
      for (std::size_t ch = 0; ch < c; ++ch) var[static_cast<Eigen::Index>(p * c + ch)] = v;
    }
  }
  return DiagonalVariance{std::move(var)};
}

}  // namespace rcrb
