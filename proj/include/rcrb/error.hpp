#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rcrb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// log() called on a rotation whose angle is too close to pi.
class AngleNearPi : public Error {
 public:
  explicit AngleNearPi(double angle)
      : Error("rotation angle " + std::to_string(angle) + " too close to pi for a unique logarithm"),
        angle_(angle) {}
  double angle() const noexcept { return angle_; }

 private:
  double angle_;
};

class PointBehindCamera : public Error {
 public:
  explicit PointBehindCamera(std::size_t index)
      : Error("feature point " + std::to_string(index) + " is not in front of the camera"), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class SingularJacobian : public Error {
 public:
  using Error::Error;
};

class SingularHessian : public Error {
 public:
  using Error::Error;
};

class FrameMismatch : public Error {
 public:
  using Error::Error;
};

class InfeasibleBudget : public Error {
 public:
  using Error::Error;
};

class TooManyBlocks : public Error {
 public:
  using Error::Error;
};

class RankDeficientCovariance : public Error {
 public:
  using Error::Error;
};

/// Malformed scene, camera, pose or scenario input.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace rcrb
