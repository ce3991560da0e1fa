#pragma once

// Measurement models: an additive Gaussian-splat photometric renderer and a
// pinhole feature projector. Both return Jacobians with respect to a left
// twist perturbation of the world-to-camera pose.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "rcrb/error.hpp"
#include "rcrb/se3.hpp"

namespace rcrb {

/// Pinhole intrinsics. Pixel (x, y) has its center at image coordinate (x, y).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || width < 1 || height < 1) {
      throw ParseError("camera requires fx, fy > 0 and width, height >= 1");
    }
  }
};

struct Splat {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;
  Eigen::VectorXd color;
};

struct SplatScene {
  std::vector<Splat> splats;
  Eigen::VectorXd background = Eigen::VectorXd::Zero(1);

  int channels() const { return static_cast<int>(background.size()); }

  void validate() const {
    const auto c = background.size();
    if (c != 1 && c != 3) {
      throw ParseError("scene must have 1 or 3 channels");
    }
    auto in_unit = [](const Eigen::VectorXd& v) { return (v.array() >= 0.0).all() && (v.array() <= 1.0).all(); };
    if (!in_unit(background)) {
      throw ParseError("background must lie in [0, 1]");
    }
    for (std::size_t i = 0; i < splats.size(); ++i) {
      const auto& s = splats[i];
      if (!(s.radius > 0.0) || !s.center.allFinite()) {
        throw ParseError("splat " + std::to_string(i) + " needs a finite center and positive radius");
      }
      if (s.color.size() != c || !in_unit(s.color)) {
        throw ParseError("splat " + std::to_string(i) + " color must match channels and lie in [0, 1]");
      }
    }
  }
};

struct FeatureScene {
  std::vector<Eigen::Vector3d> points;
};

/// Row-major H x W x C intensities, flattened as (y * W + x) * C + c.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  Eigen::VectorXd pixels;

  double at(int x, int y, int c = 0) const {
    return pixels[(static_cast<Eigen::Index>(y) * width + x) * channels + c];
  }
};

/// Pixels for photometric models, points for feature models.
class PixelSubset {
 public:
  enum class Kind { All, Stride, Explicit };

  static PixelSubset all() { return PixelSubset(Kind::All, 1, {}); }
  static PixelSubset stride(std::size_t n) { return PixelSubset(Kind::Stride, std::max<std::size_t>(n, 1), {}); }
  static PixelSubset indices(std::vector<std::size_t> idx) { return PixelSubset(Kind::Explicit, 1, std::move(idx)); }

  Kind kind() const { return kind_; }
  std::size_t step() const { return step_; }
  const std::vector<std::size_t>& explicit_indices() const { return indices_; }

  /// Indices into a domain of `domain_size` elements; explicit indices must be in range.
  std::vector<std::size_t> resolve(std::size_t domain_size) const {
    std::vector<std::size_t> out;
    switch (kind_) {
      case Kind::All:
      case Kind::Stride:
        out.reserve(domain_size / step_ + 1);
        for (std::size_t i = 0; i < domain_size; i += step_) out.push_back(i);
        break;
      case Kind::Explicit:
        for (auto i : indices_) {
          if (i >= domain_size) {
            throw DimensionMismatch("pixel index " + std::to_string(i) + " outside domain of size " +
                                    std::to_string(domain_size));
          }
        }
        out = indices_;
        break;
    }
    return out;
  }

 private:
  PixelSubset(Kind k, std::size_t step, std::vector<std::size_t> idx)
      : kind_(k), step_(step), indices_(std::move(idx)) {}

  Kind kind_;
  std::size_t step_;
  std::vector<std::size_t> indices_;
};

/// Disjoint rows x cols partition of the image; tile_id = row * cols + col.
struct TileGrid {
  int rows = 1;
  int cols = 1;

  int tile_count() const { return rows * cols; }

  std::vector<std::size_t> tile_pixels(const Camera& cam, int tile_id) const {
    if (rows < 1 || cols < 1 || rows > cam.height || cols > cam.width) {
      throw DimensionMismatch("tile grid does not fit the image");
    }
    const int r = tile_id / cols;
    const int c = tile_id % cols;
    const int y0 = r * cam.height / rows;
    const int y1 = (r + 1) * cam.height / rows;
    const int x0 = c * cam.width / cols;
    const int x1 = (c + 1) * cam.width / cols;
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>((y1 - y0) * (x1 - x0)));
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        out.push_back(static_cast<std::size_t>(y) * static_cast<std::size_t>(cam.width) + static_cast<std::size_t>(x));
      }
    }
    return out;
  }
};

inline constexpr double kNearPlane = 0.01;
inline constexpr double kGateEnd = 0.02;
/// Gaussian exponent beyond which a splat's contribution is dropped.
inline constexpr double kExponentCutoff = 40.0;

/// Values and pose Jacobian of a measurement model on a subset.
/// Rows are measurements (subset position * channels + channel).
struct Linearization {
  Eigen::VectorXd values;
  Eigen::Matrix<double, Eigen::Dynamic, 6> jacobian;
  /// Absolute measurement index of each row.
  std::vector<std::size_t> measurement_index;
};

namespace detail {

inline void smooth_depth_gate(double z, double& gate, double& dgate) {
  if (z <= kNearPlane) {
    gate = 0.0;
    dgate = 0.0;
    return;
  }
  if (z >= kGateEnd) {
    gate = 1.0;
    dgate = 0.0;
    return;
  }
  const double width = kGateEnd - kNearPlane;
  const double s = (z - kNearPlane) / width;
  gate = s * s * (3.0 - 2.0 * s);
  dgate = 6.0 * s * (1.0 - s) / width;
}

// Splat-major accumulation over each splat's pixel bounding box.
inline Linearization splat_kernel(const SplatScene& scene, const Camera& cam, const Pose& pose,
                                  const PixelSubset& pixels, bool with_jacobian) {
  const int channels = scene.channels();
  const auto subset = pixels.resolve(cam.pixel_count());
  const auto n = static_cast<Eigen::Index>(subset.size());

  Linearization out;
  out.values.resize(n * channels);
  out.measurement_index.resize(subset.size() * static_cast<std::size_t>(channels));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) {
      out.values[i * channels + c] = scene.background[c];
      out.measurement_index[static_cast<std::size_t>(i * channels + c)] = subset[static_cast<std::size_t>(i)] * channels + c;
    }
  }
  if (with_jacobian) {
    out.jacobian.setZero(n * channels, 6);
  }

  // subset positions per pixel as a chain; duplicates in an explicit list all get updated
  std::vector<Eigen::Index> head(cam.pixel_count(), -1);
  std::vector<Eigen::Index> next(subset.size(), -1);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const auto px = subset[static_cast<std::size_t>(i)];
    next[static_cast<std::size_t>(i)] = head[px];
    head[px] = i;
  }

  Eigen::Matrix<double, 6, 1> grad;
  for (const auto& splat : scene.splats) {
    const Eigen::Vector3d p = pose * splat.center;
    const double z = p.z();
    double gate = 0.0;
    double dgate = 0.0;
    smooth_depth_gate(z, gate, dgate);
    if (gate == 0.0) continue;

    const double u = cam.fx * p.x() / z + cam.cx;
    const double v = cam.fy * p.y() / z + cam.cy;
    const double sigma = cam.fx * splat.radius / z;
    const double k = 1.0 / (2.0 * sigma * sigma);
    const double reach = std::sqrt(kExponentCutoff / k);

    const double xlo = std::max(0.0, std::ceil(u - reach));
    const double xhi = std::min(static_cast<double>(cam.width - 1), std::floor(u + reach));
    const double ylo = std::max(0.0, std::ceil(v - reach));
    const double yhi = std::min(static_cast<double>(cam.height - 1), std::floor(v + reach));
    if (xlo > xhi || ylo > yhi) continue;

    for (int y = static_cast<int>(ylo); y <= static_cast<int>(yhi); ++y) {
      const double dy = y - v;
      for (int x = static_cast<int>(xlo); x <= static_cast<int>(xhi); ++x) {
        const Eigen::Index first = head[static_cast<std::size_t>(y) * static_cast<std::size_t>(cam.width) + static_cast<std::size_t>(x)];
        if (first < 0) continue;
        const double dx = x - u;
        const double d2 = dx * dx + dy * dy;
        const double q = k * d2;
        if (q > kExponentCutoff) continue;
        const double e = std::exp(-q);
        const double base = gate * e;

        if (with_jacobian) {
          // derivative of gate * exp(-q) with respect to the camera-frame point
          const double dd2_dx = -2.0 * dx * cam.fx / z;
          const double dd2_dy = -2.0 * dy * cam.fy / z;
          const double dd2_dz = 2.0 * (dx * cam.fx * p.x() + dy * cam.fy * p.y()) / (z * z);
          const Eigen::Vector3d dq(k * dd2_dx, k * dd2_dy, k * dd2_dz + d2 * 2.0 * k / z);
          Eigen::Vector3d a = -base * dq;
          a.z() += dgate * e;
          // left perturbation moves p by v + w x p, so d/dxi = (a, p x a)
          grad.head<3>() = a;
          grad.tail<3>() = p.cross(a);
          for (Eigen::Index i = first; i >= 0; i = next[static_cast<std::size_t>(i)]) {
            for (int c = 0; c < channels; ++c) {
              out.values[i * channels + c] += splat.color[c] * base;
              out.jacobian.row(i * channels + c) += splat.color[c] * grad.transpose();
            }
          }
        } else {
          for (Eigen::Index i = first; i >= 0; i = next[static_cast<std::size_t>(i)]) {
            for (int c = 0; c < channels; ++c) {
              out.values[i * channels + c] += splat.color[c] * base;
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace detail

/// Renders the full image. Pose maps world points into the camera frame.
inline Image render(const SplatScene& scene, const Camera& cam, const Pose& pose) {
  auto lin = detail::splat_kernel(scene, cam, pose, PixelSubset::all(), false);
  return Image{cam.width, cam.height, scene.channels(), std::move(lin.values)};
}

/// Rendered values restricted to a subset, ordered as in Linearization.
inline Eigen::VectorXd render_subset(const SplatScene& scene, const Camera& cam, const Pose& pose,
                                     const PixelSubset& pixels) {
  return detail::splat_kernel(scene, cam, pose, pixels, false).values;
}

inline Linearization linearize(const SplatScene& scene, const Camera& cam, const Pose& pose,
                               const PixelSubset& pixels) {
  return detail::splat_kernel(scene, cam, pose, pixels, true);
}

/// Directional derivative of the rendered subset along exp(eps * dir) * pose.
inline Eigen::VectorXd render_jvp(const SplatScene& scene, const Camera& cam, const Pose& pose, const Twist& dir,
                                  const PixelSubset& pixels) {
  return linearize(scene, cam, pose, pixels).jacobian * dir;
}

inline std::vector<Eigen::Vector2d> project_features(const FeatureScene& scene, const Camera& cam, const Pose& pose) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(scene.points.size());
  for (std::size_t k = 0; k < scene.points.size(); ++k) {
    const Eigen::Vector3d p = pose * scene.points[k];
    if (!(p.z() > kNearPlane)) throw PointBehindCamera(k);
    out.emplace_back(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
  }
  return out;
}

/// Stacked 2K x 6 reprojection Jacobian, rows (u_k, v_k) for each point.
inline Eigen::Matrix<double, Eigen::Dynamic, 6> feature_jacobian(const FeatureScene& scene, const Camera& cam,
                                                                 const Pose& pose) {
  Eigen::Matrix<double, Eigen::Dynamic, 6> jac(2 * static_cast<Eigen::Index>(scene.points.size()), 6);
  for (std::size_t k = 0; k < scene.points.size(); ++k) {
    const Eigen::Vector3d p = pose * scene.points[k];
    const double z = p.z();
    if (!(z > kNearPlane)) throw PointBehindCamera(k);
    Eigen::Matrix<double, 2, 3> dproj;
    dproj << cam.fx / z, 0.0, -cam.fx * p.x() / (z * z),
             0.0, cam.fy / z, -cam.fy * p.y() / (z * z);
    Eigen::Matrix<double, 3, 6> dpoint;
    dpoint << Eigen::Matrix3d::Identity(), -hat(p);
    jac.middleRows<2>(2 * static_cast<Eigen::Index>(k)) = dproj * dpoint;
  }
  return jac;
}

struct PhotometricModel {
  SplatScene scene;
  Camera camera;
};

/// Bundle-adjustment limit: known points seen through a pinhole.
struct FeatureModel {
  FeatureScene scene;
  Camera camera;
};

using MeasurementModel = std::variant<PhotometricModel, FeatureModel>;

/// Number of pixels (photometric) or points (feature) the subset indexes into.
inline std::size_t domain_size(const MeasurementModel& model) {
  if (const auto* m = std::get_if<PhotometricModel>(&model)) return m->camera.pixel_count();
  return std::get<FeatureModel>(model).scene.points.size();
}

inline std::size_t measurement_count(const MeasurementModel& model) {
  if (const auto* m = std::get_if<PhotometricModel>(&model)) {
    return m->camera.pixel_count() * static_cast<std::size_t>(m->scene.channels());
  }
  return 2 * std::get<FeatureModel>(model).scene.points.size();
}

/// Measurements of either model on a subset.
inline Eigen::VectorXd evaluate(const MeasurementModel& model, const Pose& pose, const PixelSubset& pixels) {
  if (const auto* m = std::get_if<PhotometricModel>(&model)) {
    return render_subset(m->scene, m->camera, pose, pixels);
  }
  const auto& fm = std::get<FeatureModel>(model);
  const auto idx = pixels.resolve(fm.scene.points.size());
  const auto uv = project_features(fm.scene, fm.camera, pose);
  Eigen::VectorXd out(2 * static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.segment<2>(2 * static_cast<Eigen::Index>(i)) = uv[idx[i]];
  }
  return out;
}

inline Linearization linearize(const MeasurementModel& model, const Pose& pose, const PixelSubset& pixels) {
  if (const auto* m = std::get_if<PhotometricModel>(&model)) {
    return linearize(m->scene, m->camera, pose, pixels);
  }
  const auto& fm = std::get<FeatureModel>(model);
  const auto idx = pixels.resolve(fm.scene.points.size());
  const auto uv = project_features(fm.scene, fm.camera, pose);
  const auto jac = feature_jacobian(fm.scene, fm.camera, pose);
  Linearization out;
  const auto n = static_cast<Eigen::Index>(idx.size());
  out.values.resize(2 * n);
  out.jacobian.resize(2 * n, 6);
  out.measurement_index.resize(2 * idx.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]);
    out.values.segment<2>(2 * i) = uv[static_cast<std::size_t>(k)];
    out.jacobian.middleRows<2>(2 * i) = jac.middleRows<2>(2 * k);
    out.measurement_index[static_cast<std::size_t>(2 * i)] = static_cast<std::size_t>(2 * k);
    out.measurement_index[static_cast<std::size_t>(2 * i + 1)] = static_cast<std::size_t>(2 * k + 1);
  }
  return out;
}

}  // namespace rcrb
