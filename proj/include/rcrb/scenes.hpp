#pragma once

// Procedural scenes shipped with the tools: a textured volume, a low-texture
// plane, and a rotationally symmetric wall.

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

#include "rcrb/renderer.hpp"
#include "rcrb/se3.hpp"

namespace rcrb::scenes {

/// 64 x 64, fx = fy = 64, principal point at the image center.
inline Camera default_camera() { return Camera{64.0, 64.0, 31.5, 31.5, 64, 64}; }

namespace detail {

inline Eigen::Vector3d hue_to_rgb(double h) {
  const double k = std::fmod(h, 1.0) * 6.0;
  const auto channel = [k](double n) {
    const double m = std::fmod(n + k, 6.0);
    return 1.0 - std::max(0.0, std::min({m, 4.0 - m, 1.0}));
  };
  return {channel(5.0), channel(3.0), channel(1.0)};
}

// Random point inside the view frustum at the given depth.
inline Eigen::Vector3d in_view(std::mt19937_64& rng, const Camera& cam, double depth, double margin) {
  std::uniform_real_distribution<double> ux(-cam.cx / cam.fx * margin, (cam.width - 1 - cam.cx) / cam.fx * margin);
  std::uniform_real_distribution<double> uy(-cam.cy / cam.fy * margin, (cam.height - 1 - cam.cy) / cam.fy * margin);
  return {ux(rng) * depth, uy(rng) * depth, depth};
}

}  // namespace detail

/// Saturated random colors at depths 2-6; three channels.
inline SplatScene high_texture(std::uint64_t seed = 7, int count = 200, const Camera& cam = default_camera()) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> depth(2.0, 6.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> size(0.06, 0.16);
  SplatScene scene;
  scene.background = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < count; ++i) {
    const double z = depth(rng);
    Splat s;
    s.center = detail::in_view(rng, cam, z, 0.95);
    s.radius = size(rng);
    s.color = detail::hue_to_rgb(unit(rng));
    scene.splats.push_back(std::move(s));
  }
  return scene;
}

/// Same-color broad splats on the fronto-parallel plane z = 4; three channels.
inline SplatScene low_texture(std::uint64_t seed = 11, int count = 50, const Camera& cam = default_camera()) {
  std::mt19937_64 rng(seed);
  SplatScene scene;
  scene.background = Eigen::VectorXd::Constant(3, 0.3);
  for (int i = 0; i < count; ++i) {
    Splat s;
    s.center = detail::in_view(rng, cam, 4.0, 0.9);
    s.radius = 0.45;
    s.color = Eigen::VectorXd::Constant(3, 0.05);
    scene.splats.push_back(std::move(s));
  }
  return scene;
}

/// Uniform-color disk of splats on concentric rings facing the camera along
/// +z at `depth`, centered on the optical axis. Angular spacing 0.8 * radius
/// makes rotation about the optical axis an exact symmetry to ~1e-14.
inline SplatScene symmetric_wall(double depth = 3.0, double disk_radius = 1.0, double splat_radius = 0.1,
                                 const Pose& placement = Pose::identity()) {
  SplatScene scene;
  scene.background = Eigen::VectorXd::Constant(1, 0.1);
  const double spacing = 0.8 * splat_radius;
  const int rings = static_cast<int>(std::floor(disk_radius / spacing));
  for (int k = 0; k <= rings; ++k) {
    const double rho = k * spacing;
    const int n = k == 0 ? 1 : static_cast<int>(std::ceil(2.0 * kPi * rho / spacing));
    for (int j = 0; j < n; ++j) {
      const double phi = 2.0 * kPi * j / n;
      Splat s;
      s.center = placement * Eigen::Vector3d(rho * std::cos(phi), rho * std::sin(phi), depth);
      s.radius = splat_radius;
      s.color = Eigen::VectorXd::Constant(1, 0.7);
      scene.splats.push_back(std::move(s));
    }
  }
  return scene;
}

/// Moderate-size single-channel textured scene used for Monte Carlo checks.
inline SplatScene validation_scene(std::uint64_t seed = 3, int count = 60, const Camera& cam = default_camera()) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> depth(2.0, 6.0);
  std::uniform_real_distribution<double> unit(0.2, 1.0);
  std::uniform_real_distribution<double> size(0.08, 0.2);
  SplatScene scene;
  scene.background = Eigen::VectorXd::Zero(1);
  for (int i = 0; i < count; ++i) {
    const double z = depth(rng);
    Splat s;
    s.center = detail::in_view(rng, cam, z, 0.9);
    s.radius = size(rng);
    s.color = Eigen::VectorXd::Constant(1, unit(rng));
    scene.splats.push_back(std::move(s));
  }
  return scene;
}

/// Splat centers reused as known 3D points for the bundle-adjustment limit.
inline FeatureScene features_from(const SplatScene& scene) {
  FeatureScene out;
  for (const auto& s : scene.splats) out.points.push_back(s.center);
  return out;
}

}  // namespace rcrb::scenes
