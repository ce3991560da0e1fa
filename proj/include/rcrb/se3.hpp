#pragma once

// Rigid transforms on SE(3) and twists in se(3).
//
// Twists are stacked translation-first, xi = (v; w), and perturbations are
// applied on the left: the perturbed pose of x is exp(xi) * x. Every 6x6
// matrix in the library (adjoints, information, covariance) uses this order.

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "rcrb/error.hpp"

namespace rcrb {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Twist = Vector6d;

inline constexpr double kPi = 3.14159265358979323846;

/// Below this rotation angle exp/log use Taylor expansions.
inline constexpr double kSmallAngle = 1e-6;

inline Eigen::Vector3d translation_part(const Twist& xi) { return xi.head<3>(); }
inline Eigen::Vector3d rotation_part(const Twist& xi) { return xi.tail<3>(); }

inline Twist make_twist(const Eigen::Vector3d& v, const Eigen::Vector3d& w) {
  Twist xi;
  xi << v, w;
  return xi;
}

inline Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

inline Eigen::Vector3d vee(const Eigen::Matrix3d& m) {
  return {0.5 * (m(2, 1) - m(1, 2)), 0.5 * (m(0, 2) - m(2, 0)), 0.5 * (m(1, 0) - m(0, 1))};
}

/// 4x4 matrix form of a twist.
inline Eigen::Matrix4d hat(const Twist& xi) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<3, 3>() = hat(rotation_part(xi));
  m.topRightCorner<3, 1>() = translation_part(xi);
  return m;
}

/// Rigid transform p -> R p + t.
class Pose {
 public:
  Pose() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose identity() { return {}; }

  /// Quaternion is normalized; callers reading files check the norm first.
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& translation) {
    return {q.normalized().toRotationMatrix(), translation};
  }

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation_).normalized(); }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }

  /// Orthonormality and det(R) = +1, both within tol.
  bool is_valid(double tol = 1e-9) const {
    const double ortho = (rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity()).norm();
    return ortho <= tol && std::abs(rotation_.determinant() - 1.0) <= tol && translation_.allFinite();
  }

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

inline Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

inline Pose inverse(const Pose& g) {
  const Eigen::Matrix3d rt = g.rotation().transpose();
  return {rt, -rt * g.translation()};
}

namespace detail {

// sin(t)/t, (1 - cos t)/t^2 and (t - sin t)/t^3 with their small-angle limits.
struct ExpCoefficients {
  double a;
  double b;
  double c;
};

inline ExpCoefficients exp_coefficients(double theta) {
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    return {1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0};
  }
  const double s = std::sin(theta);
  const double half = std::sin(0.5 * theta);
  const double t2 = theta * theta;
  return {s / theta, 2.0 * half * half / t2, (theta - s) / (t2 * theta)};
}

}  // namespace detail

inline Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const auto k = detail::exp_coefficients(theta);
  const Eigen::Matrix3d W = hat(w);
  return Eigen::Matrix3d::Identity() + k.a * W + k.b * W * W;
}

/// Left Jacobian of SO(3); couples rotation into translation in exp().
inline Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const auto k = detail::exp_coefficients(theta);
  const Eigen::Matrix3d W = hat(w);
  return Eigen::Matrix3d::Identity() + k.b * W + k.c * W * W;
}

inline Pose exp(const Twist& xi) {
  const Eigen::Vector3d w = rotation_part(xi);
  return {so3_exp(w), so3_left_jacobian(w) * translation_part(xi)};
}

/// Rotation angle in [0, pi].
inline double rotation_angle(const Eigen::Matrix3d& r) {
  const double s = vee(r).norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

/// Throws AngleNearPi when the rotation angle is within 1e-6 of pi.
inline Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
  const double theta = rotation_angle(r);
  if (theta >= kPi - 1e-6) {
    throw AngleNearPi(theta);
  }
  const Eigen::Vector3d axis_sin = vee(r);
  if (theta < kSmallAngle) {
    return (1.0 + theta * theta / 6.0) * axis_sin;
  }
  return theta / std::sin(theta) * axis_sin;
}

inline Twist log(const Pose& g) {
  const Eigen::Vector3d w = so3_log(g.rotation());
  const double theta = w.norm();
  const Eigen::Matrix3d W = hat(w);
  double coeff;
  if (theta < kSmallAngle) {
    coeff = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    const double half = 0.5 * theta;
    coeff = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
  }
  const Eigen::Matrix3d v_inv = Eigen::Matrix3d::Identity() - 0.5 * W + coeff * W * W;
  return make_twist(v_inv * g.translation(), w);
}

/// Ad_g = [[R, [t]x R], [0, R]], so that g exp(xi) g^-1 = exp(Ad_g xi).
inline Matrix6d adjoint(const Pose& g) {
  Matrix6d ad = Matrix6d::Zero();
  ad.topLeftCorner<3, 3>() = g.rotation();
  ad.topRightCorner<3, 3>() = hat(g.translation()) * g.rotation();
  ad.bottomRightCorner<3, 3>() = g.rotation();
  return ad;
}

}  // namespace rcrb
